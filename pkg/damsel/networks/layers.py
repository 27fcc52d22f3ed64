"""
Convolutional layer with He fan-in initialization.
"""

# %% IMPORTS
# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import Tensor, conv3d_valid, leaky_relu

# All declaration
__all__ = ['ConvLayer', 'Network']


# %% CLASS DEFINITIONS
class ConvLayer(object):
    """
    Valid 3D convolution, optionally followed by a leaky ReLU

    Parameters
    ----------
    name : str
        Parameter path prefix, e.g. 'seg.path_norm.layer3'.
    in_channels, out_channels : int
        Channel counts.
    kernel : int
        Cubic kernel size.
    rng : numpy.random.Generator
        Source of the initial kernel values.
    slope : float or None
        Leaky-ReLU slope; *None* for a linear (classification) layer.
    """
    def __init__(self, name, in_channels, out_channels, kernel, rng, *, slope=0.01):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.slope = slope

        fan_in = in_channels * kernel**3
        std = np.sqrt(2.0 / fan_in)
        shape = (out_channels, in_channels, kernel, kernel, kernel)
        self.kernels = Tensor(rng.normal(0.0, std, size=shape), requires_grad=True,
                              name=name + '.kernels')
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True,
                           name=name + '.bias')

    def __call__(self, x):
        out = conv3d_valid(x, self.kernels, self.bias)
        if self.slope is not None:
            out = leaky_relu(out, self.slope)
        return out

    def parameters(self):
        """Dictionary parameter path -> Tensor"""
        return {self.kernels.name: self.kernels, self.bias.name: self.bias}

    @property
    def n_parameters(self):
        return self.kernels.size + self.bias.size

    def __repr__(self):
        return 'ConvLayer({!r}, {}->{}, k={})'.format(self.name, self.in_channels,
                                                     self.out_channels, self.kernel)


class Network(object):
    """
    Base class of the networks: an ordered collection of :py:class:`ConvLayer`

    Subclasses fill `self.layers` (in parameter order).
    """
    def __init__(self):
        self.layers = []

    def parameters(self):
        """Ordered dictionary parameter path -> Tensor"""
        params = {}
        for layer in self.layers:
            params.update(layer.parameters())
        return params

    @property
    def n_parameters(self):
        """Total number of scalar parameters"""
        return sum(layer.n_parameters for layer in self.layers)

    def parameter_values(self):
        """Copies of the parameter arrays (parameter path -> array)"""
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_parameter_values(self, values):
        """
        Replaces the parameter values

        Parameters
        ----------
        values : dict
            Parameter path -> array, with exactly the network's parameter
            paths and shapes.
        """
        params = self.parameters()
        missing = set(params) - set(values)
        unknown = set(values) - set(params)
        if missing or unknown:
            raise KeyError('Parameter set mismatch (missing: {}; unknown: {})'.format(
                sorted(missing), sorted(unknown)))
        for name, p in params.items():
            value = np.asarray(values[name])
            if value.shape != p.shape:
                raise ValueError('Parameter {!r} has shape {}, got {}'.format(
                    name, p.shape, value.shape))
            p.data = value.astype(p.data.dtype)

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()
