"""
Dense whole-volume inference with the fully-convolutional segmenter.

The volume is covered by tiles whose centres lie on a lattice of step
`s = D*floor(out/D)` anchored at voxel 0, `out` being the output extent of
a tile. Voxel `p` (per axis) is predicted by the tile `(p + s//2)//s`, so
every voxel is predicted exactly once, and all tiles sample the
low-resolution grid with the same phase. Out-of-volume input voxels are
zero.
"""

# %% IMPORTS
# Built-in imports
import itertools
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.sampling import SegmentGeometry, UnlabelledCase, extract_segment

# All declaration
__all__ = ['tile_lattice', 'dense_infer', 'dense_probabilities']


# %% FUNCTION DEFINITIONS
def tile_lattice(shape, output_extent, low_factor):
    """
    Tile centres and the voxel ranges each tile is responsible for

    Parameters
    ----------
    shape : tuple of int
        Spatial shape of the volume.
    output_extent : int
        Output extent of one tile.
    low_factor : int
        Subsampling factor D.

    Returns
    -------
    list of tuple
        For each spatial axis, a list of `(centre, start, stop)` triples:
        the tile centred at `centre` predicts voxels `start:stop`.
    """
    step = low_factor * (output_extent // low_factor)
    if step < 1:
        raise ValueError('Tile output extent {} is smaller than the subsampling '
                         'factor {}'.format(output_extent, low_factor))
    half = step // 2
    axes = []
    for size in shape:
        tiles = []
        for k in range((size - 1 + half) // step + 1):
            center = k * step
            start, stop = max(center - half, 0), min(center - half + step, size)
            if start < stop:
                tiles.append((center, start, stop))
        axes.append(tiles)
    return axes


def dense_probabilities(segmenter, case, tile_extent=None, batch_size=8):
    """
    Class probabilities of every voxel of `case`

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Trained segmenter.
    case : UnlabelledCase or CaseRecord
        Volume to segment (labels are ignored).
    tile_extent : int
        Normal-resolution input extent of a tile (the segmenter's training
        extent by default). Must be odd and at least the receptive field.
    batch_size : int
        Tiles per forward pass.

    Returns
    -------
    numpy.ndarray
        `[classes, X, Y, Z]` softmax probabilities.
    """
    log.debug('@ inference::dense_probabilities')
    spec = segmenter.spec
    if tile_extent is None:
        tile_extent = spec.normal_extent
    if tile_extent % 2 == 0:
        raise ValueError('Tile extent must be odd, got {}'.format(tile_extent))
    if spec.output_extent(tile_extent) < spec.low_factor:
        raise ValueError('Tile extent {} is below the minimum admissible extent '
                         '{}'.format(tile_extent, spec.normal_extent - spec.output_extent()
                                     + spec.low_factor))
    geometry = SegmentGeometry.from_spec(spec, tile_extent)
    out = geometry.label_extent

    lattice = tile_lattice(case.spatial_shape, out, geometry.low_factor)
    # The last lattice centre may lie past the volume end
    half = geometry.low_factor * (out // geometry.low_factor) // 2
    padded = UnlabelledCase(np.pad(case.image, [(0, 0)] + [(0, half)]*3), case.domain,
                            case.case_id)
    probs = np.zeros((spec.classes,) + tuple(case.spatial_shape), dtype=np.float32)
    tiles = list(itertools.product(*lattice))

    for first in range(0, len(tiles), batch_size):
        chunk = tiles[first:first + batch_size]
        samples = [extract_segment(padded, tuple(c for c, _, _ in tile),
                                   geometry.normal_extent, geometry.low_extent,
                                   geometry.low_factor, label_extent=out, domain_label=0)
                   for tile in chunk]
        logits, _ = segmenter.forward(np.stack([s.normal for s in samples]),
                                      np.stack([s.low for s in samples]))
        scores = logits.data - logits.data.max(axis=1, keepdims=True)
        scores = np.exp(scores)
        scores /= scores.sum(axis=1, keepdims=True)
        for tile, score in zip(chunk, scores):
            target = [slice(None)]
            source = [slice(None)]
            for center, start, stop in tile:
                offset = center - out // 2
                target.append(slice(start, stop))
                source.append(slice(start - offset, stop - offset))
            probs[tuple(target)] = score[tuple(source)]
    return probs


def dense_infer(segmenter, case, tile_extent=None, batch_size=8):
    """
    Label map of a whole volume

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Trained segmenter.
    case : UnlabelledCase or CaseRecord
        Volume to segment.
    tile_extent : int
        Normal-resolution input extent of a tile.
    batch_size : int
        Tiles per forward pass.

    Returns
    -------
    numpy.ndarray
        `[X, Y, Z]` `uint8` label map (argmax over classes).
    """
    log.debug('@ inference::dense_infer')
    probs = dense_probabilities(segmenter, case, tile_extent, batch_size)
    return np.argmax(probs, axis=0).astype(np.uint8)
