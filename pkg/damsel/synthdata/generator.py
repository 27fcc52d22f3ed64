"""
Deterministic generator of paired source/target synthetic datasets.

A case is rendered from its own random stream, derived from the master
seed, the domain and the case index, so cases can be generated in any
order and on any MPI process.
"""

# %% IMPORTS
# Built-in imports
import logging as log
from os import path

# Package imports
import numpy as np
from scipy import ndimage

# DAMSEL imports
from damsel.sampling import CaseRecord, DatasetManifest, normalize_volume
from damsel.synthdata.config import SynthConfig
from damsel.tools import (derived_generator, is_master, mpi_barrier, mpi_gather,
                          mpi_scatter_items)

# All declaration
__all__ = ['smooth_field', 'ellipsoid_mask', 'render_case', 'gen_case',
           'gen_dataset', 'case_generator']

# Mask semi-axes as fractions of the volume extent
MASK_SEMI_AXES = (0.45, 0.40, 0.42)


# %% FUNCTION DEFINITIONS
def smooth_field(shape, factor, rng):
    """
    Low-frequency random field: a coarse standard-normal grid upsampled
    trilinearly by `factor`, standardized to zero mean and unit variance
    """
    coarse = rng.standard_normal([s // factor + 2 for s in shape])
    fine = ndimage.zoom(coarse, factor, order=1)[tuple(slice(0, s) for s in shape)]
    std = fine.std()
    return (fine - fine.mean()) / (std if std > 0 else 1.0)


def ellipsoid_mask(extent, semi_axes=MASK_SEMI_AXES):
    """Centred ellipsoidal foreground mask of a cubic volume"""
    grid = np.indices((extent,)*3, dtype=np.float64)
    center = (extent - 1) / 2
    radius2 = sum(((g - center) / (a * extent))**2 for g, a in zip(grid, semi_axes))
    return radius2 <= 1


def render_case(config, domain, rng):
    """
    Renders the components of one case

    Parameters
    ----------
    config : SynthConfig
        Generator settings.
    domain : str
        'S' or 'T'.
    rng : numpy.random.Generator
        Stream of this case.

    Returns
    -------
    dict
        `image` (normalized, shifted for target cases), `raw` (before
        the domain shift and normalization), `lesion_offset` (intensity
        added on the lesion channel), `labels` and `mask`.
    """
    shape = (config.extent,)*3
    mask = ellipsoid_mask(config.extent)

    tissue_field = smooth_field(shape, config.coarse_factor, rng)
    threshold = np.quantile(tissue_field[mask], 1 - config.tissue_fraction)
    second_tissue = tissue_field > threshold

    raw = np.empty((config.channels,) + shape)
    for c, (mean_a, mean_b) in enumerate(config.tissue_means):
        raw[c] = np.where(second_tissue, mean_b, mean_a)
        raw[c] += config.field_amplitude * smooth_field(shape, config.coarse_factor, rng)
        raw[c] += config.noise_std * rng.standard_normal(shape)

    labels = np.zeros(shape, dtype=np.uint8)
    n_lesions = int(rng.integers(config.lesion_count[0], config.lesion_count[1] + 1))
    if n_lesions:
        r_low, r_high = config.lesion_radius
        depth = ndimage.distance_transform_edt(mask)
        candidates = np.flatnonzero(depth >= r_high + 1)
        grid = np.indices(shape)
        for _ in range(n_lesions):
            center = np.unravel_index(candidates[rng.integers(candidates.size)], shape)
            radius = rng.uniform(r_low, r_high)
            dist2 = sum((g - c)**2 for g, c in zip(grid, center))
            labels[dist2 <= radius**2] = 1
    lesion_offset = np.where(labels > 0, config.lesion_offset, 0.0)
    raw[config.lesion_channel] += lesion_offset
    raw[:, ~mask] = 0

    image = raw.copy()
    if domain == 'T' and config.shift_enabled:
        c = config.shift_channel
        image[c] = config.shift_gain * image[c] + config.shift_bias
    image = normalize_volume(image, mask)
    image[:, ~mask] = 0
    return {'image': image, 'raw': raw, 'lesion_offset': lesion_offset,
            'labels': labels, 'mask': mask}


def case_generator(config, domain, index):
    """Random stream of case `index` of `domain`"""
    return derived_generator(config.seed, 'synth', domain, index)


def gen_case(config, domain, case_rng, case_id=None):
    """
    Generates one synthetic case

    Parameters
    ----------
    config : SynthConfig
        Generator settings.
    domain : str
        'S' or 'T'.
    case_rng : numpy.random.Generator
        Stream of this case (see :py:func:`case_generator`).
    case_id : str
        Identifier (a domain-prefixed default is used if *None*).

    Returns
    -------
    CaseRecord
    """
    log.debug('@ generator::gen_case')
    config.check()
    parts = render_case(config, domain, case_rng)
    if case_id is None:
        case_id = '{}_case'.format(domain)
    return CaseRecord(parts['image'], domain, case_id, labels=parts['labels'],
                      mask=parts['mask'])


def gen_dataset(config, directory):
    """
    Generates both domains and writes them with a manifest

    Target cases carry their labels on disk; label-blind training reads
    them through label-free views only.

    Parameters
    ----------
    config : SynthConfig
        Generator settings.
    directory : str
        Output directory.

    Returns
    -------
    manifest : DatasetManifest
    manifest_path : str
    """
    log.debug('@ generator::gen_dataset')
    config = SynthConfig.from_dict(config.to_dict()).check()
    jobs = ([('S', i) for i in range(config.n_source)]
            + [('T', i) for i in range(config.n_target)])
    local = []
    for domain, index in mpi_scatter_items(jobs):
        case_id = '{}{:03d}'.format(domain, index)
        local.append(gen_case(config, domain, case_generator(config, domain, index),
                              case_id))
        log.info('Generated case {} ({} lesion voxels)'.format(
            case_id, int(local[-1].labels.sum())))
    cases = mpi_gather(local)

    result = None
    if is_master():
        result = DatasetManifest.write_cases(cases, directory)
        config.to_json(path.join(directory, 'synth_config.json'))
    mpi_barrier()
    if result is None:
        manifest_path = path.join(directory, 'manifest.json')
        result = DatasetManifest.load(manifest_path), manifest_path
    return result
