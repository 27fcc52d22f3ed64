"""
Intensity normalization and missing-channel filling.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# All declaration
__all__ = ['normalize_volume', 'fill_missing_channel', 'MISSING_CHANNEL_FILL']

# Constant standing for an unavailable channel (very low after normalization)
MISSING_CHANNEL_FILL = -4.0


# %% FUNCTION DEFINITIONS
def normalize_volume(image, mask=None, window_pct=0.02):
    """
    Per-channel windowing and standardization

    Every channel is independently clamped to the [`window_pct`,
    1-`window_pct`] quantiles of its in-mask intensities (linear
    interpolation between sorted ranks), then shifted and scaled so that its
    in-mask values have zero mean and unit standard deviation. Constant
    channels map to all zeros.

    Parameters
    ----------
    image : numpy.ndarray
        `[C, X, Y, Z]` volume.
    mask : numpy.ndarray
        Boolean `[X, Y, Z]` mask; all voxels by default.
    window_pct : float
        Fraction windowed at each end of the histogram.

    Returns
    -------
    numpy.ndarray
        Normalized `float32` volume.
    """
    log.debug('@ normalization::normalize_volume')
    image = np.asarray(image, dtype=np.float64)
    if mask is None:
        mask = np.ones(image.shape[1:], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[1:]:
        raise ValueError('Mask shape {} does not match image {}'.format(mask.shape,
                                                                        image.shape[1:]))
    if not mask.any():
        raise ValueError('Cannot normalize with an empty mask')
    if not 0 <= window_pct < 0.5:
        raise ValueError('window_pct must lie in [0, 0.5)')

    out = np.empty_like(image)
    for c, channel in enumerate(image):
        low, high = np.quantile(channel[mask], [window_pct, 1 - window_pct])
        clipped = np.clip(channel, low, high)
        values = clipped[mask]
        std = values.std()
        if std <= 1e-12 * max(1.0, abs(values.mean())):
            out[c] = 0
        else:
            out[c] = (clipped - values.mean()) / std
    return out.astype(np.float32)


def fill_missing_channel(image, channel, fill=MISSING_CHANNEL_FILL):
    """
    Replaces one channel by a constant (-4 by default)

    Parameters
    ----------
    image : numpy.ndarray
        `[C, X, Y, Z]` volume (not modified).
    channel : int
        Index of the unavailable channel.
    fill : float
        Constant value.

    Returns
    -------
    numpy.ndarray
    """
    log.debug('@ normalization::fill_missing_channel')
    if not 0 <= channel < image.shape[0]:
        raise IndexError('Channel {} out of range for {} channels'.format(channel,
                                                                        image.shape[0]))
    out = np.array(image, copy=True)
    out[channel] = fill
    return out
