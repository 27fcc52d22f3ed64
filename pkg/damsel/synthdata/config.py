"""
Configuration of the synthetic two-domain datasets.
"""

# %% IMPORTS
# DAMSEL imports
from damsel.tools import SpecBase, rc

# All declaration
__all__ = ['SynthConfig']

# Smallest volume a default segmenter can be trained on
MIN_EXTENT = 17


# %% CLASS DEFINITIONS
class SynthConfig(SpecBase):
    """
    Parameters of the synthetic source/target generator

    Every case has a smooth two-tissue background on each channel, an
    ellipsoidal foreground mask and spherical lesions that raise the
    intensity of `lesion_channel`. Target cases additionally get the affine
    intensity transform `gain*x + bias` on `shift_channel`, which by
    default inverts its contrast (a pseudo "other sequence" acquired in
    place of the original one).

    Parameters
    ----------
    extent : int
        Edge of the cubic volumes.
    channels : int
        Number of channels.
    n_source, n_target : int
        Cases per domain.
    lesion_count : list of int
        Inclusive `[min, max]` lesions per case.
    lesion_radius : list of float
        `[min, max]` lesion radius in voxels.
    lesion_offset : float
        Intensity added inside lesions on `lesion_channel`.
    lesion_channel : int
        Channel where lesions are visible.
    tissue_means : list of list of float
        Per-channel mean intensity of the two background tissues.
    tissue_fraction : float
        Approximate share of the mask occupied by the second tissue.
    field_amplitude : float
        Amplitude of the smooth intensity field.
    coarse_factor : int
        Upsampling factor of the coarse noise grid of the smooth fields.
    noise_std : float
        Standard deviation of the voxel noise.
    shift_channel : int
        Channel transformed in the target domain.
    shift_gain, shift_bias : float
        Target transform of `shift_channel`.
    shift_enabled : bool
        If *False* both domains share one distribution.
    seed : int
        Master seed.
    """
    FIELDS = ['extent', 'channels', 'n_source', 'n_target', 'lesion_count',
              'lesion_radius', 'lesion_offset', 'lesion_channel', 'tissue_means',
              'tissue_fraction', 'field_amplitude', 'coarse_factor', 'noise_std',
              'shift_channel', 'shift_gain', 'shift_bias', 'shift_enabled', 'seed']

    def __init__(self, extent=48, channels=2, n_source=20, n_target=12,
                 lesion_count=(1, 3), lesion_radius=(3.0, 6.0), lesion_offset=2.5,
                 lesion_channel=1, tissue_means=None, tissue_fraction=0.3,
                 field_amplitude=0.3, coarse_factor=8, noise_std=0.3, shift_channel=1,
                 shift_gain=-0.8, shift_bias=0.5, shift_enabled=True, seed=None):
        super().__init__()
        if tissue_means is None:
            tissue_means = [[1.0, 0.4], [0.6, 1.0]][:channels]
            tissue_means += [[1.0, 0.5]] * (channels - len(tissue_means))
        self.extent = extent
        self.channels = channels
        self.n_source = n_source
        self.n_target = n_target
        self.lesion_count = list(lesion_count)
        self.lesion_radius = list(lesion_radius)
        self.lesion_offset = lesion_offset
        self.lesion_channel = lesion_channel
        self.tissue_means = [list(m) for m in tissue_means]
        self.tissue_fraction = tissue_fraction
        self.field_amplitude = field_amplitude
        self.coarse_factor = coarse_factor
        self.noise_std = noise_std
        self.shift_channel = shift_channel
        self.shift_gain = shift_gain
        self.shift_bias = shift_bias
        self.shift_enabled = shift_enabled
        self.seed = rc['default_seed'] if seed is None else seed

    def validate(self):
        problems = []
        if self.extent < MIN_EXTENT:
            problems.append('extent must be at least {}'.format(MIN_EXTENT))
        if self.channels < 1:
            problems.append('channels must be at least 1')
        if self.n_source < 1 or self.n_target < 1:
            problems.append('each domain needs at least one case')
        low, high = self.lesion_count
        if not 0 <= low <= high:
            problems.append('lesion_count must satisfy 0 <= min <= max')
        r_low, r_high = self.lesion_radius
        if not 0 < r_low <= r_high:
            problems.append('lesion_radius must satisfy 0 < min <= max')
        elif 2 * r_high + 1 > 0.6 * self.extent:
            problems.append('lesions of radius {} do not fit in the mask of a {}^3 '
                            'volume'.format(r_high, self.extent))
        for name in ('lesion_channel', 'shift_channel'):
            if not 0 <= getattr(self, name) < self.channels:
                problems.append('{} out of range for {} channels'.format(name,
                                                                        self.channels))
        if len(self.tissue_means) != self.channels or any(len(m) != 2
                                                          for m in self.tissue_means):
            problems.append('tissue_means needs two means per channel')
        if not 0 <= self.tissue_fraction <= 1:
            problems.append('tissue_fraction must lie in [0, 1]')
        if self.coarse_factor < 1:
            problems.append('coarse_factor must be at least 1')
        if self.noise_std < 0 or self.field_amplitude < 0:
            problems.append('noise_std and field_amplitude must be non-negative')
        if self.seed < 0:
            problems.append('seed must be non-negative')
        return problems
