"""
Multi-connected tap assembly: the feature maps tapped at several depths of
the segmenter are brought to a common grid and concatenated into the
discriminator input.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import center_crop, concat_channels, upsample_repeat
from damsel.networks.specs import TapPoint, TapSet

# All declaration
__all__ = ['assemble_tap_tensor', 'tap_channels', 'tap_extent', 'discriminate']


# %% FUNCTION DEFINITIONS
def assemble_tap_tensor(taps, low_factor):
    """
    Builds the discriminator input from tapped activations

    Low-pathway maps are upsampled by `low_factor`; then every map is
    center-cropped to the smallest extent among them and the maps are
    concatenated along channels, in order. The result stays connected to
    the segmenter graph.

    Parameters
    ----------
    taps : list or dict
        `(TapPoint, Tensor)` pairs (or a dict TapPoint -> Tensor) from one
        forward pass.
    low_factor : int
        Subsampling factor D of the low-resolution pathway.

    Returns
    -------
    Tensor
    """
    log.debug('@ taps::assemble_tap_tensor')
    items = list(taps.items()) if isinstance(taps, dict) else list(taps)
    if not items:
        raise ValueError('At least one tap is required')

    maps = []
    for point, fm in items:
        point = TapPoint(*point)
        maps.append(upsample_repeat(fm, low_factor) if point.pathway == 'low' else fm)

    leading = {fm.shape[:-4] for fm in maps}
    if len(leading) != 1:
        raise ValueError('Taps come from different batches: {}'.format(sorted(leading)))
    target = tuple(int(v) for v in np.min([fm.shape[-3:] for fm in maps], axis=0))
    if min(target) < 1:
        raise ValueError('Tap extents cannot be cropped to a common grid')

    cropped = [fm if fm.shape[-3:] == target else center_crop(fm, target) for fm in maps]
    assert all(fm.shape[-3:] == target for fm in cropped)
    return concat_channels(cropped)


def tap_channels(segmenter_spec, tap_set):
    """Number of channels of the assembled tap tensor"""
    return sum(segmenter_spec.layer_channels(t.pathway, t.layer) for t in tap_set)


def tap_extent(segmenter_spec, tap_set, normal_extent=None, low_extent=None):
    """
    Closed-form spatial extent of the assembled tap tensor
    """
    extents = []
    for tap in tap_set:
        extent = segmenter_spec.layer_extent(tap.pathway, tap.layer, normal_extent, low_extent)
        if tap.pathway == 'low':
            extent *= segmenter_spec.low_factor
        extents.append(extent)
    return min(extents)


def discriminate(segmenter, discriminator, tap_set, x_normal, x_low):
    """
    Segmenter taps -> tap assembly -> discriminator

    Returns
    -------
    Tensor
        Domain logits, one 2-class prediction per position and sample.
    """
    log.debug('@ taps::discriminate')
    tap_set = tap_set if isinstance(tap_set, TapSet) else TapSet(tap_set)
    _, activations = segmenter.forward(x_normal, x_low, list(tap_set), logits=False)
    tap_tensor = assemble_tap_tensor(activations, segmenter.spec.low_factor)
    return discriminator.forward(tap_tensor)
