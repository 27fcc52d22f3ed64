"""
Domain discriminator.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import Tensor
from damsel.networks.layers import ConvLayer, Network
from damsel.networks.specs import DiscriminatorSpec, receptive_field
from damsel.tools import derived_generator

# All declaration
__all__ = ['Discriminator', 'build_discriminator', 'discriminator_forward']


# %% CLASS DEFINITIONS
class Discriminator(Network):
    """
    Four 3³ convolutions and a 1³ classification layer predicting, at every
    position, the domain (0 = source, 1 = target) of its input

    Parameters
    ----------
    spec : DiscriminatorSpec
        Architecture description.
    tap_channels : int
        Channels of the assembled tap tensor it consumes.
    rng : numpy.random.Generator
        Source of the initial parameter values.
    """
    def __init__(self, spec, tap_channels, rng):
        log.debug('@ discriminator::Discriminator.__init__')
        super().__init__()
        spec.check()
        if tap_channels < 1:
            raise ValueError('tap_channels must be at least 1, got {}'.format(tap_channels))
        self.spec = spec
        self.tap_channels = tap_channels

        channels = tap_channels
        for i, (fm, k) in enumerate(spec.layers, 1):
            self.layers.append(ConvLayer('adv.layer{}'.format(i), channels, fm, k, rng,
                                         slope=spec.slope))
            channels = fm
        self.layers.append(ConvLayer('adv.classifier', channels, spec.classes, 1, rng,
                                     slope=None))

    @property
    def receptive_field(self):
        return receptive_field(self.spec)

    def forward(self, tap_tensor):
        """
        Domain logits

        Parameters
        ----------
        tap_tensor : Tensor
            Assembled taps, `[N, tap_channels, X, Y, Z]` with X, Y, Z >= 9.

        Returns
        -------
        Tensor
            `[N, 2, X-8, Y-8, Z-8]`
        """
        log.debug('@ discriminator::Discriminator.forward')
        h = tap_tensor if isinstance(tap_tensor, Tensor) else Tensor(tap_tensor)
        if h.shape[-4] != self.tap_channels:
            raise ValueError('Expected {} tap channels, got {}'.format(self.tap_channels,
                                                                      h.shape[-4]))
        if min(h.shape[-3:]) < self.receptive_field:
            raise ValueError('Tap tensor extent {} is below the receptive field {}'.format(
                h.shape[-3:], self.receptive_field))
        for layer in self.layers:
            h = layer(h)
        return h

    __call__ = forward


# %% FUNCTION DEFINITIONS
def build_discriminator(spec=None, tap_channels=1, seed=1):
    """
    Builds a discriminator consuming `tap_channels` input channels

    Parameters
    ----------
    spec : DiscriminatorSpec
        Architecture (defaults if *None*).
    tap_channels : int
        Channels of the assembled tap tensor.
    seed : int or numpy.random.Generator
        Initialization seed.

    Returns
    -------
    Discriminator
    """
    log.debug('@ discriminator::build_discriminator')
    if spec is None:
        spec = DiscriminatorSpec()
    rng = (seed if isinstance(seed, np.random.Generator)
           else derived_generator(seed, 'discriminator'))
    return Discriminator(spec, tap_channels, rng)


def discriminator_forward(discriminator, tap_tensor):
    """Functional form of :py:meth:`Discriminator.forward`"""
    return discriminator.forward(tap_tensor)
