"""
Dual-pathway multi-scale 3D segmenter.

Two pathways of eight valid 3³ convolutions process a normal-resolution
segment and a low-resolution context segment (same centre, D times larger
field, subsampled). The low-resolution output is upsampled by D and
center-cropped to the normal pathway output, the two are concatenated and
go through two 1³ hidden layers and a 1³ classification layer.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import (Tensor, center_crop, concat_channels,
                             upsample_repeat)
from damsel.networks.layers import ConvLayer, Network
from damsel.networks.specs import SegmenterSpec, TapPoint
from damsel.tools import derived_generator

# All declaration
__all__ = ['Segmenter', 'build_segmenter', 'segmenter_forward']


# %% CLASS DEFINITIONS
class Segmenter(Network):
    """
    Dual-pathway segmenter

    Parameters
    ----------
    spec : SegmenterSpec
        Architecture description.
    rng : numpy.random.Generator
        Source of the initial parameter values.
    """
    def __init__(self, spec, rng):
        log.debug('@ segmenter::Segmenter.__init__')
        super().__init__()
        spec.check()
        self.spec = spec

        self.path_norm = self._build_pathway('seg.path_norm', rng)
        self.path_low = self._build_pathway('seg.path_low', rng)

        self.fused = []
        channels = 2 * spec.pathway_layers[-1][0]
        for index, (fm, k) in zip(spec.fused_indices, spec.fused_layers):
            self.fused.append(ConvLayer('seg.fused.layer{}'.format(index), channels,
                                        fm, k, rng, slope=spec.slope))
            channels = fm
        self.classifier = ConvLayer('seg.classifier', channels, spec.classes, 1, rng,
                                    slope=None)

        self.layers = self.path_norm + self.path_low + self.fused + [self.classifier]

    def _build_pathway(self, prefix, rng):
        layers = []
        channels = self.spec.in_channels
        for i, (fm, k) in enumerate(self.spec.pathway_layers, 1):
            layers.append(ConvLayer('{}.layer{}'.format(prefix, i), channels, fm, k, rng,
                                    slope=self.spec.slope))
            channels = fm
        return layers

    def forward(self, x_normal, x_low, taps=(), *, logits=True):
        """
        Runs the segmenter on a batch of segment pairs

        Parameters
        ----------
        x_normal : Tensor or numpy.ndarray
            Normal-resolution segments, `[N, C, n, n, n]`.
        x_low : Tensor or numpy.ndarray
            Low-resolution segments, `[N, C, l, l, l]`.
        taps : iterable of TapPoint
            Feature maps to return. Low-pathway maps are returned before
            upsampling; all maps are taken after their activation.
        logits : bool
            If *False*, the forward pass stops as soon as every requested
            tap has been computed and *None* is returned for the logits.

        Returns
        -------
        logits : Tensor
            Class scores, `[N, classes, n-16, n-16, n-16]` with the defaults.
        activations : dict
            TapPoint -> Tensor, in the order of `taps`.
        """
        log.debug('@ segmenter::Segmenter.forward')
        taps = [TapPoint(*tap) for tap in taps]
        x_normal = x_normal if isinstance(x_normal, Tensor) else Tensor(x_normal)
        x_low = x_low if isinstance(x_low, Tensor) else Tensor(x_low)
        self._check_inputs(x_normal, x_low)

        n_path = self.spec.n_pathway_layers
        need_fused = logits or any(t.pathway == 'fused' for t in taps)
        depth = {p: (n_path if need_fused else
                     max([t.layer for t in taps if t.pathway == p], default=0))
                 for p in ('normal', 'low')}

        found = {}
        h_norm = self._run_pathway(self.path_norm, x_normal, 'normal', depth['normal'], found)
        h_low = self._run_pathway(self.path_low, x_low, 'low', depth['low'], found)

        out = None
        if need_fused:
            target = h_norm.shape[-3:]
            h_low = center_crop(upsample_repeat(h_low, self.spec.low_factor), target)
            h = concat_channels([h_norm, h_low])
            for index, layer in zip(self.spec.fused_indices, self.fused):
                h = layer(h)
                found[TapPoint('fused', index)] = h
            if logits:
                out = self.classifier(h)

        return out, {tap: found[tap] for tap in taps}

    __call__ = forward

    @staticmethod
    def _run_pathway(layers, h, pathway, depth, found):
        for i, layer in enumerate(layers[:depth], 1):
            h = layer(h)
            found[TapPoint(pathway, i)] = h
        return h

    def _check_inputs(self, x_normal, x_low):
        spec = self.spec
        if x_normal.shape[-4] != spec.in_channels or x_low.shape[-4] != spec.in_channels:
            raise ValueError('Segments must have {} channels'.format(spec.in_channels))
        n_out = np.array(x_normal.shape[-3:]) - spec.pathway_shrink
        l_out = np.array(x_low.shape[-3:]) - spec.pathway_shrink
        if np.any(n_out < 1) or np.any(l_out < 1):
            raise ValueError('Input extents {} / {} are too small for the receptive '
                             'field {}'.format(x_normal.shape[-3:], x_low.shape[-3:],
                                               spec.pathway_shrink + 1))
        if np.any(l_out * spec.low_factor < n_out):
            raise ValueError('Low-resolution extent {} does not cover normal extent {}'.format(
                x_low.shape[-3:], x_normal.shape[-3:]))


# %% FUNCTION DEFINITIONS
def build_segmenter(spec=None, seed=1):
    """
    Builds a segmenter with He fan-in initialization and zero biases

    Parameters
    ----------
    spec : SegmenterSpec
        Architecture (defaults if *None*).
    seed : int or numpy.random.Generator
        Initialization seed (the same seed gives identical parameters).

    Returns
    -------
    Segmenter
    """
    log.debug('@ segmenter::build_segmenter')
    if spec is None:
        spec = SegmenterSpec()
    rng = seed if isinstance(seed, np.random.Generator) else derived_generator(seed, 'segmenter')
    return Segmenter(spec, rng)


def segmenter_forward(segmenter, x_normal, x_low, taps=()):
    """
    Functional form of :py:meth:`Segmenter.forward`: returns
    `(logits, activations)`
    """
    return segmenter.forward(x_normal, x_low, taps)
