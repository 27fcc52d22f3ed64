"""
Segment geometry and extraction.

For a centre voxel `c`, the normal-resolution patch of extent `n` covers
positions `c - n//2 + i`, the low-resolution patch of extent `l` samples
positions `c + D*(j - l//2)` and the label patch of extent `out` covers
`c - out//2 + u`, which are exactly the voxels the segmenter predicts for
that input. Reads outside the volume return 0 for images and background
for labels.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# All declaration
__all__ = ['SegmentGeometry', 'SegmentSample', 'extract_segment',
           'patch_positions', 'gather_patch']


# %% CLASS DEFINITIONS
class SegmentGeometry(object):
    """
    Extents of the three patches of a segment

    Parameters
    ----------
    normal_extent : int
        Normal-resolution input extent.
    low_extent : int
        Low-resolution input extent.
    low_factor : int
        Subsampling factor D.
    label_extent : int
        Segmenter output extent for `normal_extent`.
    """
    def __init__(self, normal_extent=25, low_extent=19, low_factor=3, label_extent=None):
        if label_extent is None:
            label_extent = normal_extent - 16
        self.normal_extent = int(normal_extent)
        self.low_extent = int(low_extent)
        self.low_factor = int(low_factor)
        self.label_extent = int(label_extent)

    @classmethod
    def from_spec(cls, spec, normal_extent=None):
        """
        Geometry of a :py:class:`damsel.networks.SegmenterSpec` for its
        training extents (or for a given normal extent, with the matching
        low-resolution extent)
        """
        if normal_extent is None:
            normal_extent, low_extent = spec.normal_extent, spec.low_extent
        else:
            low_extent = spec.required_low_extent(normal_extent)
        return cls(normal_extent, low_extent, spec.low_factor,
                   spec.output_extent(normal_extent))

    def __eq__(self, other):
        return isinstance(other, SegmentGeometry) and vars(self) == vars(other)

    def __repr__(self):
        return 'SegmentGeometry(normal={}, low={}, D={}, label={})'.format(
            self.normal_extent, self.low_extent, self.low_factor, self.label_extent)


class SegmentSample(object):
    """
    One training segment

    Attributes
    ----------
    normal : numpy.ndarray
        `[C, n, n, n]` normal-resolution patch.
    low : numpy.ndarray
        `[C, l, l, l]` low-resolution context patch.
    labels : numpy.ndarray or None
        `[out, out, out]` label patch.
    domain : int
        0 (source) or 1 (target).
    case_id : str
    center : tuple of int
    """
    __slots__ = ('normal', 'low', 'labels', 'domain', 'case_id', 'center')

    def __init__(self, normal, low, labels, domain, case_id, center):
        self.normal = normal
        self.low = low
        self.labels = labels
        self.domain = domain
        self.case_id = case_id
        self.center = tuple(int(c) for c in center)


# %% FUNCTION DEFINITIONS
def patch_positions(center, extent, step=1):
    """
    Per-axis voxel positions of a patch centred on `center`

    Returns
    -------
    list of numpy.ndarray
        `center[a] + step*(i - extent//2)` for `i` in `range(extent)`.
    """
    offsets = step * (np.arange(extent) - extent // 2)
    return [int(c) + offsets for c in center]


def gather_patch(volume, positions, fill=0):
    """
    Reads `volume[..., x, y, z]` on the grid spanned by `positions`,
    returning `fill` outside the volume

    Parameters
    ----------
    volume : numpy.ndarray
        `[..., X, Y, Z]` array.
    positions : list of numpy.ndarray
        Positions along each of the three spatial axes.
    fill : scalar
        Value of out-of-volume voxels.
    """
    shape = volume.shape[-3:]
    valid = [(p >= 0) & (p < s) for p, s in zip(positions, shape)]
    clipped = [np.clip(p, 0, s - 1) for p, s in zip(positions, shape)]
    patch = volume[(Ellipsis,) + np.ix_(*clipped)]
    inside = valid[0][:, None, None] & valid[1][None, :, None] & valid[2][None, None, :]
    if not inside.all():
        patch = np.where(inside, patch, np.asarray(fill, dtype=volume.dtype))
    return patch


def extract_segment(case, center, normal_extent=25, low_extent=19, low_factor=3, *,
                    label_extent=None, domain_label=None):
    """
    Extracts the normal, low-resolution and label patches around `center`

    Parameters
    ----------
    case : CaseRecord or UnlabelledCase
        Source volume. Label patches are only produced for cases carrying
        labels.
    center : tuple of int
        Centre voxel, inside the volume.
    normal_extent, low_extent : int
        Patch extents.
    low_factor : int
        Subsampling factor D of the low-resolution patch.
    label_extent : int
        Extent of the label patch (`normal_extent - 16` by default).
    domain_label : int
        Domain label stored in the sample (the case's by default).

    Returns
    -------
    SegmentSample
    """
    log.debug('@ segments::extract_segment')
    center = tuple(int(c) for c in center)
    shape = case.image.shape[1:]
    if len(center) != 3 or any(not 0 <= c < s for c, s in zip(center, shape)):
        raise ValueError('Centre {} outside the volume {}'.format(center, shape))
    if label_extent is None:
        label_extent = normal_extent - 16

    normal = gather_patch(case.image, patch_positions(center, normal_extent))
    low = gather_patch(case.image, patch_positions(center, low_extent, low_factor))
    labels = getattr(case, 'labels', None)
    if labels is not None:
        labels = gather_patch(labels, patch_positions(center, label_extent), fill=0)
    if domain_label is None:
        domain_label = case.domain_label
    return SegmentSample(normal, low, labels, domain_label, case.case_id, center)
