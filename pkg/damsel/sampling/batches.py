"""
The two batch builders.

B_seg (:py:func:`build_seg_batch`) holds labelled segments, a fixed share
of them centred on foreground voxels to counter class imbalance. B_adv
(:py:func:`build_adv_batch`) holds equally many segments from each domain,
centred uniformly and built from label-free views of the cases, so that
the discriminator cannot associate over-sampled classes with a domain.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import Tensor
from damsel.sampling.cases import UnlabelledCase
from damsel.sampling.segments import SegmentGeometry, extract_segment

# All declaration
__all__ = ['SegBatch', 'AdvBatch', 'build_seg_batch', 'build_adv_batch',
           'n_foreground_segments', 'uniform_center', 'foreground_center']


# %% CLASS DEFINITIONS
class _Batch(object):
    def __init__(self, samples):
        if not samples:
            raise ValueError('A batch needs at least one segment')
        self.samples = list(samples)
        self.normal = np.stack([s.normal for s in samples])
        self.low = np.stack([s.low for s in samples])
        self.domains = np.array([s.domain for s in samples], dtype=np.int64)
        self.case_ids = [s.case_id for s in samples]
        self.centers = [s.center for s in samples]

    def __len__(self):
        return len(self.samples)

    def inputs(self):
        """`(normal, low)` input Tensors of the segmenter"""
        return Tensor(self.normal), Tensor(self.low)


class SegBatch(_Batch):
    """
    Labelled segments for the segmentation loss

    Attributes
    ----------
    normal, low : numpy.ndarray
        `[N, C, n, n, n]` and `[N, C, l, l, l]` patches.
    labels : numpy.ndarray
        `[N, out, out, out]` integer labels.
    foreground : numpy.ndarray
        Boolean flag of the foreground-centred segments.
    """
    def __init__(self, samples, foreground):
        super().__init__(samples)
        if any(s.labels is None for s in samples):
            raise ValueError('Every B_seg segment must carry labels')
        self.labels = np.stack([s.labels for s in samples]).astype(np.int64)
        self.foreground = np.asarray(foreground, dtype=bool)


class AdvBatch(_Batch):
    """
    Domain-balanced, label-free segments for the adversarial loss

    Attributes
    ----------
    domains : numpy.ndarray
        Domain label of each segment (0 = source, 1 = target).
    """
    def __init__(self, samples):
        super().__init__(samples)
        if any(s.labels is not None for s in samples):
            raise ValueError('B_adv segments must not carry labels')

    def position_domains(self, extent):
        """Domain label of every output position, `[N, e, e, e]`"""
        return np.broadcast_to(self.domains[:, None, None, None],
                               (len(self),) + (extent,)*3).copy()


# %% FUNCTION DEFINITIONS
def n_foreground_segments(n, fg_fraction):
    """Number of foreground-centred segments, `n*fg_fraction` rounded half up"""
    if not 0 <= fg_fraction <= 1:
        raise ValueError('fg_fraction must lie in [0, 1]')
    return int(np.floor(n * fg_fraction + 0.5))


def uniform_center(case, rng, use_mask=False):
    """Uniformly drawn voxel of the volume (or of its mask)"""
    if use_mask and case.mask is not None:
        candidates = np.flatnonzero(case.mask)
        index = candidates[rng.integers(candidates.size)]
        return np.unravel_index(index, case.spatial_shape)
    return tuple(int(rng.integers(s)) for s in case.spatial_shape)


def foreground_center(case, rng):
    """Uniformly drawn foreground (label > 0) voxel, or *None* if there is none"""
    candidates = np.flatnonzero(case.labels)
    if candidates.size == 0:
        return None
    return np.unravel_index(candidates[rng.integers(candidates.size)], case.spatial_shape)


def build_seg_batch(cases, n=10, fg_fraction=0.5, rng=None, geometry=None):
    """
    Builds B_seg

    The first `round(n*fg_fraction)` segments are centred on a uniformly
    drawn foreground voxel, the rest on a uniformly drawn voxel of the
    volume. Each segment comes from a uniformly drawn case.

    Parameters
    ----------
    cases : list of CaseRecord
        Labelled cases.
    n : int
        Number of segments.
    fg_fraction : float
        Share of foreground-centred segments.
    rng : numpy.random.Generator
        Random stream.
    geometry : SegmentGeometry
        Patch extents (defaults: 25/19/D=3/9).

    Returns
    -------
    SegBatch
    """
    log.debug('@ batches::build_seg_batch')
    cases = [c for c in cases if getattr(c, 'labels', None) is not None]
    if not cases:
        raise ValueError('B_seg needs at least one labelled source case')
    if n < 1:
        raise ValueError('B_seg needs at least one segment')
    if rng is None:
        rng = np.random.default_rng()
    if geometry is None:
        geometry = SegmentGeometry()

    n_fg = n_foreground_segments(n, fg_fraction)
    samples, foreground = [], []
    for i in range(n):
        case = cases[rng.integers(len(cases))]
        center = None
        if i < n_fg:
            center = foreground_center(case, rng)
            if center is None:
                log.warning('Case {} has no foreground; using a random centre'.format(
                    case.case_id))
        is_fg = center is not None
        if center is None:
            center = uniform_center(case, rng)
        samples.append(extract_segment(case, center, geometry.normal_extent,
                                       geometry.low_extent, geometry.low_factor,
                                       label_extent=geometry.label_extent))
        foreground.append(is_fg)
    return SegBatch(samples, foreground)


def _label_free(case):
    # Strips anything but image, mask, domain and id
    return UnlabelledCase(case.image, case.domain, case.case_id, mask=case.mask)


def build_adv_batch(source_cases, target_cases, n=20, rng=None, geometry=None, *,
                    use_mask=False):
    """
    Builds B_adv: `n/2` segments per domain, without labels

    The builder only ever sees label-free views of the cases.

    Parameters
    ----------
    source_cases, target_cases : list
        Cases of each domain (only image, mask, domain and id are read).
    n : int
        Even number of segments.
    rng : numpy.random.Generator
        Random stream.
    geometry : SegmentGeometry
        Patch extents.
    use_mask : bool
        Draw centres inside the case masks instead of the whole volume.

    Returns
    -------
    AdvBatch
    """
    log.debug('@ batches::build_adv_batch')
    if n < 2 or n % 2:
        raise ValueError('B_adv size must be a positive even number, got {}'.format(n))
    if not source_cases:
        raise ValueError('source domain has no cases')
    if not target_cases:
        raise ValueError('target domain has no cases')
    if rng is None:
        rng = np.random.default_rng()
    if geometry is None:
        geometry = SegmentGeometry()

    domains = [[_label_free(c) for c in source_cases],
               [_label_free(c) for c in target_cases]]
    samples = []
    for label, pool in enumerate(domains):
        for _ in range(n // 2):
            case = pool[rng.integers(len(pool))]
            center = uniform_center(case, rng, use_mask)
            samples.append(extract_segment(case, center, geometry.normal_extent,
                                           geometry.low_extent, geometry.low_factor,
                                           domain_label=label))
    return AdvBatch(samples)
