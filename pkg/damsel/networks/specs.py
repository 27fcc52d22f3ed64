"""
Architecture descriptions: :py:class:`SegmenterSpec`,
:py:class:`DiscriminatorSpec` and :py:class:`TapSet`.

All three mirror their JSON spec files field for field (see
:py:class:`damsel.tools.SpecBase`).
"""

# %% IMPORTS
# Built-in imports
import logging as log
import re

# DAMSEL imports
from damsel.tools import SpecBase

# All declaration
__all__ = ['SegmenterSpec', 'DiscriminatorSpec', 'TapSet', 'TapPoint',
           'receptive_field', 'PATHWAYS']

PATHWAYS = ('normal', 'low', 'fused')

DEFAULT_WIDTHS = (8, 8, 16, 16, 16, 16, 24, 24)


# %% FUNCTION DEFINITIONS
def receptive_field(spec):
    """
    Receptive field (per axis) of a stride-1 stack of valid convolutions,
    `1 + sum(k - 1)`

    Parameters
    ----------
    spec : SegmenterSpec or DiscriminatorSpec or list of int
        Either an architecture description or a plain list of kernel sizes.
        For a segmenter, the receptive field of the normal pathway followed
        by the fused layers and the classifier is returned.

    Returns
    -------
    int
    """
    if isinstance(spec, (SegmenterSpec, DiscriminatorSpec)):
        kernels = spec.kernel_sizes
    else:
        kernels = list(spec)
    return 1 + sum(int(k) - 1 for k in kernels)


# %% CLASS DEFINITIONS
class SegmenterSpec(SpecBase):
    """
    Dual-pathway 3D segmenter description

    Parameters
    ----------
    in_channels : int
        Number of image channels.
    classes : int
        Number of segmentation classes.
    pathway_layers : list
        `[fm_count, kernel]` for each of the eight layers of a pathway
        (both pathways share it).
    fused_layers : list
        `[fm_count, kernel]` for the hidden layers after fusion
        (layers 9 and 10).
    low_factor : int
        Subsampling factor D of the low-resolution pathway. It must be odd:
        the upsampled low-resolution output then has an odd extent whose
        central voxel sits on the central voxel of the normal pathway. With
        an even D the two centres are half a voxel apart.
    slope : float
        Leaky-ReLU slope.
    normal_extent : int
        Training input extent of the normal pathway.
    low_extent : int
        Training input extent of the low-resolution pathway.
    """
    FIELDS = ['in_channels', 'classes', 'pathway_layers', 'fused_layers',
              'low_factor', 'slope', 'normal_extent', 'low_extent']

    def __init__(self, in_channels=2, classes=2, pathway_layers=None,
                 fused_layers=None, low_factor=3, slope=0.01,
                 normal_extent=25, low_extent=19):
        super().__init__()
        if pathway_layers is None:
            pathway_layers = [[w, 3] for w in DEFAULT_WIDTHS]
        if fused_layers is None:
            fused_layers = [[32, 1], [32, 1]]
        self.in_channels = in_channels
        self.classes = classes
        self.pathway_layers = [list(layer) for layer in pathway_layers]
        self.fused_layers = [list(layer) for layer in fused_layers]
        self.low_factor = low_factor
        self.slope = slope
        self.normal_extent = normal_extent
        self.low_extent = low_extent

    @classmethod
    def with_widths(cls, widths, fused_width=32, **kwargs):
        """Builds a spec from pathway widths (all kernels 3) and a fused width"""
        return cls(pathway_layers=[[w, 3] for w in widths],
                   fused_layers=[[fused_width, 1], [fused_width, 1]], **kwargs)

    @property
    def n_pathway_layers(self):
        return len(self.pathway_layers)

    @property
    def fused_indices(self):
        """Layer indices of the fused hidden layers (9 and 10 by default)"""
        start = self.n_pathway_layers + 1
        return list(range(start, start + len(self.fused_layers)))

    @property
    def kernel_sizes(self):
        """Kernel sizes along the normal pathway, fused layers and classifier"""
        return ([k for _, k in self.pathway_layers] +
                [k for _, k in self.fused_layers] + [1])

    @property
    def pathway_shrink(self):
        """Extent lost along one pathway (16 with the default layers)"""
        return sum(k - 1 for _, k in self.pathway_layers)

    @property
    def fused_shrink(self):
        return sum(k - 1 for _, k in self.fused_layers)

    def output_extent(self, normal_extent=None):
        """Logits extent for a normal-pathway input extent"""
        if normal_extent is None:
            normal_extent = self.normal_extent
        return normal_extent - self.pathway_shrink - self.fused_shrink

    def pathway_output_extent(self, extent):
        """Extent at the end of either pathway for the given input extent"""
        return extent - self.pathway_shrink

    def layer_extent(self, pathway, layer, normal_extent=None, low_extent=None):
        """
        Spatial extent of the (un-upsampled) output of a given layer
        """
        normal_extent = self.normal_extent if normal_extent is None else normal_extent
        low_extent = self.low_extent if low_extent is None else low_extent
        if pathway == 'fused':
            n_fused = layer - self.n_pathway_layers
            return (self.pathway_output_extent(normal_extent) -
                    sum(k - 1 for _, k in self.fused_layers[:n_fused]))
        extent = normal_extent if pathway == 'normal' else low_extent
        return extent - sum(k - 1 for _, k in self.pathway_layers[:layer])

    def layer_channels(self, pathway, layer):
        """Number of feature maps produced by a layer"""
        if pathway == 'fused':
            return self.fused_layers[layer - self.n_pathway_layers - 1][0]
        return self.pathway_layers[layer - 1][0]

    def required_low_extent(self, normal_extent):
        """
        Smallest odd low-resolution input extent whose upsampled pathway
        output covers the normal pathway output

        That is, the smallest odd `l` with
        `(l - shrink)*D >= normal_extent - shrink`.
        """
        shrink = self.pathway_shrink
        out = normal_extent - shrink
        low = shrink + -(-out // self.low_factor)
        if low % 2 == 0:
            low += 1
        return low

    def validate(self):
        problems = []
        if self.in_channels < 1:
            problems.append('in_channels must be at least 1')
        if self.classes < 2:
            problems.append('classes must be at least 2')
        if len(self.pathway_layers) != 8:
            problems.append('each pathway must have exactly 8 layers')
        if len(self.fused_layers) != 2:
            problems.append('there must be exactly 2 fused hidden layers')
        for i, layer in enumerate(self.pathway_layers, 1):
            if len(layer) != 2 or layer[0] < 1 or layer[1] != 3:
                problems.append('pathway layer {} must be [fm_count >= 1, 3]'.format(i))
        for i, layer in enumerate(self.fused_layers, self.n_pathway_layers + 1):
            if len(layer) != 2 or layer[0] < 1 or layer[1] != 1:
                problems.append('fused layer {} must be [fm_count >= 1, 1]'.format(i))
        if not (isinstance(self.low_factor, int) and self.low_factor >= 1
                and self.low_factor % 2 == 1):
            problems.append('low_factor must be a positive odd integer (an even factor '
                            'misaligns the pathway centres by half a voxel)')
        if not 0 <= self.slope < 1:
            problems.append('slope must lie in [0, 1)')
        if problems:
            return problems

        for name in ('normal_extent', 'low_extent'):
            extent = getattr(self, name)
            if extent % 2 == 0:
                problems.append('{} must be odd'.format(name))
            if extent - self.pathway_shrink < 1:
                problems.append('{} {} is below the pathway receptive field {}'.format(
                    name, extent, self.pathway_shrink + 1))
        if not problems:
            low_out = self.pathway_output_extent(self.low_extent) * self.low_factor
            if low_out < self.pathway_output_extent(self.normal_extent):
                problems.append('low_extent {} does not cover the normal pathway output '
                                '(need at least {})'.format(
                                    self.low_extent,
                                    self.required_low_extent(self.normal_extent)))
        return problems


class DiscriminatorSpec(SpecBase):
    """
    Domain discriminator description: four 3³ convolutions and a 1³
    classification layer (receptive field 9³)

    Parameters
    ----------
    layers : list
        `[fm_count, kernel]` of the hidden layers.
    classes : int
        Number of domains.
    slope : float
        Leaky-ReLU slope.
    fm_count : int
        Shortcut to build `layers` as four `[fm_count, 3]` entries.
    """
    FIELDS = ['layers', 'classes', 'slope']

    def __init__(self, layers=None, classes=2, slope=0.01, *, fm_count=20):
        super().__init__()
        if layers is None:
            layers = [[fm_count, 3] for _ in range(4)]
        self.layers = [list(layer) for layer in layers]
        self.classes = classes
        self.slope = slope

    @property
    def kernel_sizes(self):
        return [k for _, k in self.layers] + [1]

    def validate(self):
        problems = []
        if len(self.layers) != 4:
            problems.append('the discriminator must have exactly 4 hidden layers')
        for i, layer in enumerate(self.layers, 1):
            if len(layer) != 2 or layer[0] < 1 or layer[1] != 3:
                problems.append('layer {} must be [fm_count >= 1, 3]'.format(i))
        if self.classes != 2:
            problems.append('the discriminator separates exactly 2 domains')
        if not 0 <= self.slope < 1:
            problems.append('slope must lie in [0, 1)')
        if not problems and receptive_field(self) != 9:
            problems.append('receptive field must be 9')
        return problems


class TapPoint(tuple):
    """
    A `(pathway, layer)` pair identifying a tapped feature map
    """
    def __new__(cls, pathway, layer):
        if pathway not in PATHWAYS:
            raise ValueError('Unknown pathway {!r} (expected one of {})'.format(
                pathway, ', '.join(PATHWAYS)))
        return super().__new__(cls, (pathway, int(layer)))

    def __getnewargs__(self):
        return (self[0], self[1])

    @property
    def pathway(self):
        return self[0]

    @property
    def layer(self):
        return self[1]

    def __repr__(self):
        return 'TapPoint({!r}, {})'.format(*self)


class TapSet(SpecBase):
    """
    Ordered set of segmenter feature maps fed to the discriminator

    Parameters
    ----------
    taps : list
        `(pathway, layer)` pairs, pathway being 'normal', 'low' or 'fused'.
        By default layers 4, 6 and 8 of both pathways plus fused layer 10.
    """
    FIELDS = ['taps']

    def __init__(self, taps=None):
        super().__init__()
        if taps is None:
            taps = self.parse('L4,6,8,10').taps
        self.taps = [TapPoint(*tap) for tap in taps]

    def __iter__(self):
        return iter(self.taps)

    def __len__(self):
        return len(self.taps)

    def to_dict(self):
        return {'spec_version': self.SPEC_VERSION,
                'taps': [list(tap) for tap in self.taps]}

    @classmethod
    def parse(cls, text, n_pathway_layers=8):
        """
        Builds a tap set from the compact form used on the command line

        Layer numbers up to `n_pathway_layers` tap both pathways; higher
        numbers tap the fused layers. For example 'L4,6,8,10' gives
        normal/low layers 4, 6 and 8 and fused layer 10; 'L10' only the
        fused layer 10.
        """
        log.debug('@ specs::TapSet.parse')
        match = re.fullmatch(r'\s*L\(?\s*(\d+(?:\s*,\s*\d+)*)\s*\)?\s*', str(text))
        if match is None:
            raise ValueError('Invalid tap set {!r} (expected e.g. L4,6,8,10)'.format(text))
        layers = [int(v) for v in match.group(1).split(',')]
        if len(set(layers)) != len(layers):
            raise ValueError('Repeated layer in tap set {!r}'.format(text))
        taps = []
        for layer in layers:
            if layer <= n_pathway_layers:
                taps += [('normal', layer), ('low', layer)]
            else:
                taps.append(('fused', layer))
        return cls(taps)

    def describe(self):
        """Compact text form (inverse of :py:meth:`parse` for parsed sets)"""
        layers = []
        for tap in self.taps:
            if tap.layer not in layers:
                layers.append(tap.layer)
        return 'L' + ','.join(str(layer) for layer in layers)

    def validate(self, segmenter_spec=None):
        problems = []
        if not self.taps:
            problems.append('at least one tap is required')
        if len(set(self.taps)) != len(self.taps):
            problems.append('taps must not repeat')
        if segmenter_spec is not None:
            n_path = segmenter_spec.n_pathway_layers
            for tap in self.taps:
                if tap.pathway == 'fused':
                    valid = tap.layer in segmenter_spec.fused_indices
                else:
                    valid = 1 <= tap.layer <= n_path
                if not valid:
                    problems.append('invalid tap {}'.format(tap))
        return problems

    def check(self, segmenter_spec=None):
        problems = self.validate(segmenter_spec)
        if problems:
            raise ValueError('Invalid TapSet: {}'.format('; '.join(problems)))
        return self
