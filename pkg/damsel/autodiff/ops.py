"""
Differentiable operations.

Every operation is a :py:class:`Function` subclass implementing `forward`
(on plain arrays) and `backward` (gradient of the root with respect to each
input, given the gradient with respect to the output). User code calls the
lower-case wrappers (:py:func:`conv3d_valid`, :py:func:`leaky_relu`, ...),
which go through :py:meth:`Function.apply` so that the result is checked
for non-finite values and recorded on the active graph.

Feature maps are `[N, C, X, Y, Z]` or `[C, X, Y, Z]`; the channel axis is
always axis -4 and the spatial axes are the last three.
"""

# %% IMPORTS
# Built-in imports
import abc
import logging as log

# Package imports
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

# DAMSEL imports
from damsel.autodiff.tensor import NonFiniteError, Tensor, active_graph
from damsel.tools.config import rc

# All declaration
__all__ = ['Function', 'conv3d_valid', 'leaky_relu', 'softmax_xent_mean',
           'upsample_repeat', 'center_crop', 'concat_channels', 'add',
           'scale', 'sum_all', 'mean_all']

SPATIAL_AXES = (-3, -2, -1)


# %% CLASS DEFINITIONS
class Function(object, metaclass=abc.ABCMeta):
    """
    Base class for differentiable operations

    Subclasses set `NAME` and implement :py:meth:`forward` and
    :py:meth:`backward`. Whatever `forward` needs for the adjoint is stored
    on the instance.
    """
    NAME = None

    @abc.abstractmethod
    def forward(self, *arrays, **kwargs):
        """Computes the output array from the input arrays"""
        raise NotImplementedError

    @abc.abstractmethod
    def backward(self, grad):
        """
        Returns a tuple with the gradient with respect to every input
        (*None* for inputs that do not need one)
        """
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors, **kwargs):
        """
        Evaluates the operation on `tensors` and records it on the active
        graph if any input requires gradients
        """
        tensors = tuple(t if isinstance(t, Tensor) else Tensor(t) for t in tensors)
        function = cls()
        function.needs_grad = tuple(t.requires_grad for t in tensors)
        out_data = function.forward(*(t.data for t in tensors), **kwargs)

        if rc['check_finite'] and not np.all(np.isfinite(out_data)):
            raise NonFiniteError(cls.NAME)

        requires_grad = any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires_grad)

        graph = active_graph()
        if graph is not None and requires_grad:
            graph.record(function, tensors, out)
        return out


class Conv3dValid(Function):
    NAME = 'conv3d_valid'

    def forward(self, x, kernels, bias):
        self.squeeze = (x.ndim == 4)
        if self.squeeze:
            x = x[np.newaxis]
        if x.ndim != 5:
            raise ValueError('conv3d_valid expects [N,C,X,Y,Z] or [C,X,Y,Z] input, '
                             'got shape {}'.format(x.shape))
        if kernels.ndim != 5:
            raise ValueError('Kernels must be [C_out,C_in,k,k,k], got shape {}'.format(
                kernels.shape))
        if x.shape[1] != kernels.shape[1]:
            raise ValueError('Input has {} channels but the kernels expect {}'.format(
                x.shape[1], kernels.shape[1]))
        if bias.shape != (kernels.shape[0],):
            raise ValueError('Bias shape {} does not match {} output channels'.format(
                bias.shape, kernels.shape[0]))
        ksize = kernels.shape[2:]
        if any(s < k for s, k in zip(x.shape[2:], ksize)):
            raise ValueError('Spatial extent {} is smaller than the kernel {}'.format(
                x.shape[2:], ksize))

        windows = sliding_window_view(x, ksize, axis=(2, 3, 4))
        # windows: [N, C, X', Y', Z', kx, ky, kz]
        out = np.tensordot(windows, kernels, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
        out = np.moveaxis(out, -1, 1) + bias[:, None, None, None]

        self.windows = windows
        self.kernels = kernels
        return out[0] if self.squeeze else out

    def backward(self, grad):
        if self.squeeze:
            grad = grad[np.newaxis]
        kernels = self.kernels
        ksize = kernels.shape[2:]

        grad_bias = grad.sum(axis=(0, 2, 3, 4))
        grad_kernels = np.tensordot(grad, self.windows,
                                    axes=([0, 2, 3, 4], [0, 2, 3, 4]))

        if not self.needs_grad[0]:
            return None, grad_kernels, grad_bias

        # Full correlation of the padded output gradient with the flipped kernels
        pad = [(0, 0), (0, 0)] + [(k - 1, k - 1) for k in ksize]
        grad_windows = sliding_window_view(np.pad(grad, pad), ksize, axis=(2, 3, 4))
        flipped = kernels[:, :, ::-1, ::-1, ::-1]
        grad_x = np.tensordot(grad_windows, flipped, axes=([1, 5, 6, 7], [0, 2, 3, 4]))
        grad_x = np.moveaxis(grad_x, -1, 1)

        if self.squeeze:
            grad_x = grad_x[0]
        return grad_x, grad_kernels, grad_bias


class LeakyReLU(Function):
    NAME = 'leaky_relu'

    def forward(self, x, slope=0.01):
        if not 0 <= slope < 1:
            raise ValueError('Leaky ReLU slope must lie in [0, 1), got {}'.format(slope))
        self.positive = x > 0
        self.slope = slope
        return np.where(self.positive, x, slope * x)

    def backward(self, grad):
        return (np.where(self.positive, grad, self.slope * grad),)


class SoftmaxXentMean(Function):
    NAME = 'softmax_xent_mean'

    def forward(self, logits, targets=None):
        if logits.ndim not in (4, 5):
            raise ValueError('Logits must be [N,C,X,Y,Z] or [C,X,Y,Z], got shape {}'.format(
                logits.shape))
        n_classes = logits.shape[-4]
        targets = np.asarray(targets)
        expected = logits.shape[:-4] + logits.shape[-3:]
        if targets.shape != expected:
            raise ValueError('Targets of shape {} do not match logits {} (expected {})'.format(
                targets.shape, logits.shape, expected))
        if not np.issubdtype(targets.dtype, np.integer):
            raise ValueError('Targets must be integer class labels')
        if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
            raise ValueError('Target labels must lie in [0, {})'.format(n_classes))

        log_probs = special.log_softmax(logits, axis=-4)
        index = np.expand_dims(targets, axis=-4)
        picked = np.take_along_axis(log_probs, index, axis=-4)

        self.log_probs = log_probs
        self.index = index
        self.count = targets.size
        return -picked.sum() / self.count

    def backward(self, grad):
        probs = np.exp(self.log_probs)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, self.index, 1, axis=-4)
        return (grad * (probs - onehot) / self.count,)


class UpsampleRepeat(Function):
    NAME = 'upsample_repeat'

    def forward(self, x, factor=1):
        if int(factor) != factor or factor < 1:
            raise ValueError('Upsampling factor must be a positive integer, got {}'.format(
                factor))
        self.factor = factor = int(factor)
        for axis in SPATIAL_AXES:
            x = np.repeat(x, factor, axis=axis)
        return x

    def backward(self, grad):
        f = self.factor
        if f == 1:
            return (grad,)
        lead = grad.shape[:-3]
        X, Y, Z = (s // f for s in grad.shape[-3:])
        blocks = grad.reshape(lead + (X, f, Y, f, Z, f))
        n = len(lead)
        return (blocks.sum(axis=(n + 1, n + 3, n + 5)),)


class CenterCrop(Function):
    NAME = 'center_crop'

    def forward(self, x, target=None):
        target = tuple(int(t) for t in target)
        source = x.shape[-3:]
        if len(target) != 3:
            raise ValueError('Crop target must have three spatial extents')
        if any(t > s for t, s in zip(target, source)):
            raise ValueError('Crop target {} larger than the source {}'.format(target, source))
        offsets = tuple((s - t) // 2 for s, t in zip(source, target))
        self.source_shape = x.shape
        self.window = (Ellipsis,) + tuple(slice(o, o + t) for o, t in zip(offsets, target))
        return x[self.window]

    def backward(self, grad):
        grad_x = np.zeros(self.source_shape, dtype=grad.dtype)
        grad_x[self.window] = grad
        return (grad_x,)


class ConcatChannels(Function):
    NAME = 'concat_channels'

    def forward(self, *arrays):
        if not arrays:
            raise ValueError('concat_channels requires at least one feature map')
        extents = {a.shape[-3:] for a in arrays}
        if len(extents) != 1:
            raise ValueError('Spatial extents differ: {}'.format(sorted(extents)))
        self.splits = np.cumsum([a.shape[-4] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=-4)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=-4))


class Add(Function):
    NAME = 'add'

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return tuple(_unbroadcast(grad, shape) for shape in self.shapes)


class Scale(Function):
    NAME = 'scale'

    def forward(self, x, factor=1.0):
        self.factor = factor
        return factor * x

    def backward(self, grad):
        return (self.factor * grad,)


class SumAll(Function):
    NAME = 'sum_all'

    def forward(self, x):
        self.shape = x.shape
        return np.sum(x)

    def backward(self, grad):
        return (np.broadcast_to(grad, self.shape).copy(),)


class MeanAll(Function):
    NAME = 'mean_all'

    def forward(self, x):
        self.shape = x.shape
        return np.mean(x)

    def backward(self, grad):
        return (np.full(self.shape, grad / np.prod(self.shape), dtype=grad.dtype),)


# %% FUNCTION DEFINITIONS
def _unbroadcast(grad, shape):
    # Sums out the axes numpy broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def conv3d_valid(x, kernels, bias):
    """
    Valid (no padding, stride 1) 3D cross-correlation plus a bias

    Parameters
    ----------
    x : Tensor
        Input `[N, C_in, X, Y, Z]` (or a single sample `[C_in, X, Y, Z]`).
    kernels : Tensor
        Kernels `[C_out, C_in, kx, ky, kz]`.
    bias : Tensor
        Bias `[C_out]`.

    Returns
    -------
    Tensor
        `[N, C_out, X-kx+1, Y-ky+1, Z-kz+1]`
    """
    return Conv3dValid.apply(x, kernels, bias)


def leaky_relu(x, slope=0.01):
    """Elementwise `x` if `x > 0`, else `slope*x`"""
    return LeakyReLU.apply(x, slope=slope)


def softmax_xent_mean(logits, targets):
    """
    Mean softmax cross-entropy over every voxel and sample

    Parameters
    ----------
    logits : Tensor
        Class scores with the class axis at -4.
    targets : numpy.ndarray
        Integer labels with the shape of `logits` minus the class axis.

    Returns
    -------
    Tensor
        Scalar loss
    """
    log.debug('@ ops::softmax_xent_mean')
    return SoftmaxXentMean.apply(logits, targets=targets)


def upsample_repeat(x, factor):
    """Nearest-neighbour upsampling: every voxel becomes a `factor`³ block"""
    return UpsampleRepeat.apply(x, factor=factor)


def center_crop(x, target):
    """
    Central spatial window of extent `target`

    When the size difference along an axis is odd, the window starts at
    `floor((source - target)/2)`.
    """
    return CenterCrop.apply(x, target=target)


def concat_channels(tensors):
    """Concatenates feature maps with identical spatial extents along channels"""
    return ConcatChannels.apply(*tensors)


def add(a, b):
    """Elementwise sum (with numpy broadcasting)"""
    return Add.apply(a, b)


def scale(x, factor):
    """Multiplication by a constant scalar"""
    return Scale.apply(x, factor=float(factor))


def sum_all(x):
    """Sum of every element"""
    return SumAll.apply(x)


def mean_all(x):
    """Mean of every element"""
    return MeanAll.apply(x)


# Operator overloads
def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _mul(self, other):
    if isinstance(other, Tensor):
        raise TypeError('Only multiplication by a constant scalar is supported')
    return scale(self, other)


Tensor.__add__ = lambda self, other: add(self, _as_tensor(other))
Tensor.__radd__ = lambda self, other: add(_as_tensor(other), self)
Tensor.__sub__ = lambda self, other: add(self, scale(_as_tensor(other), -1.0))
Tensor.__rsub__ = lambda self, other: add(_as_tensor(other), scale(self, -1.0))
Tensor.__neg__ = lambda self: scale(self, -1.0)
Tensor.__mul__ = _mul
Tensor.__rmul__ = _mul
