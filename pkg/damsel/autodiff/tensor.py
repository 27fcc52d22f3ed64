"""
Dense tensors and the reverse-mode computation graph.

A :py:class:`Tensor` wraps a `numpy` array. Operations executed while a
:py:class:`Graph` is active (see :py:meth:`Graph.__enter__`) are recorded
on it, in execution order, together with the context their adjoints need.
:py:meth:`Graph.backward` then walks the record backwards once and
accumulates gradients into the leaves (typically network parameters).

Outside an active graph operations are simply evaluated, which is what
dense inference uses.
"""

# %% IMPORTS
# Built-in imports
import contextlib
import itertools
import logging as log
import threading

# Package imports
import numpy as np

# DAMSEL imports
from damsel.tools.config import rc

# All declaration
__all__ = ['Tensor', 'Graph', 'NonFiniteError', 'GraphError',
           'double_precision', 'default_dtype', 'active_graph', 'backward']

_state = threading.local()


# %% CLASS DEFINITIONS
class NonFiniteError(FloatingPointError):
    """
    Raised when a forward operation produces NaN or Inf values

    Parameters
    ----------
    op_name : str
        Name of the offending operation.
    """
    def __init__(self, op_name, message=None):
        self.op_name = op_name
        if message is None:
            message = 'Operation {!r} produced non-finite values'.format(op_name)
        super().__init__(message)


class GraphError(RuntimeError):
    """Raised on an invalid backward request"""


class Tensor(object):
    """
    Dense N-dimensional array with an identity in the computation graph

    Feature maps are stored batch-first, `[N, C, X, Y, Z]`; a single sample
    `[C, X, Y, Z]` is also accepted by every operation.

    Parameters
    ----------
    data : array_like
        Values. Floating point data is stored in the current default
        precision (see :py:func:`default_dtype`).
    requires_grad : bool
        Whether gradients should be accumulated for this tensor when it is
        a leaf of a graph.
    name : str
        Optional label (parameter path for network parameters).
    """
    def __init__(self, data, *, requires_grad=False, name=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(default_dtype())
        elif data.dtype != default_dtype():
            data = data.astype(default_dtype())
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.node_id = None
        self.graph_id = None
        self._grad = None

    @property
    def shape(self):
        """Shape of the stored array"""
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        """*True* if the tensor was not produced by a recorded operation"""
        return self.node_id is None

    @property
    def grad(self):
        """Accumulated gradient (zeros if nothing was accumulated yet)"""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        if value is not None:
            value = np.asarray(value, dtype=self.data.dtype)
            if value.shape != self.data.shape:
                raise ValueError('Gradient shape {} does not match tensor shape {}'.format(
                    value.shape, self.data.shape))
        self._grad = value

    def zero_grad(self):
        """Clears the accumulated gradient"""
        self._grad = None

    def accumulate_grad(self, grad):
        """Adds `grad` to the accumulated gradient"""
        if self._grad is None:
            self._grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self._grad = self._grad + grad

    def numpy(self):
        """Returns a copy of the values"""
        return self.data.copy()

    def item(self):
        """Value of a single-element tensor as a Python float"""
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor, got shape {}".format(
                self.shape))
        return float(self.data.reshape(-1)[0])

    def backward(self, leaf_weights=None):
        """
        Back-propagates from this (scalar) tensor through the active graph

        See :py:meth:`Graph.backward`.
        """
        return backward(self, leaf_weights=leaf_weights)

    # Operator overloads are bound in damsel.autodiff.ops
    def __repr__(self):
        label = '' if self.name is None else ', name={!r}'.format(self.name)
        return 'Tensor(shape={}, dtype={}{})'.format(self.shape, self.data.dtype, label)


class _Record(object):
    # One executed operation
    __slots__ = ('function', 'inputs', 'output')

    def __init__(self, function, inputs, output):
        self.function = function
        self.inputs = inputs
        self.output = output


class Graph(object):
    """
    Ordered record of the operations executed while the graph is active

    Use as a context manager::

        with Graph() as graph:
            loss = some_network(x)
        grads = graph.backward(loss)

    Graphs can be nested; the innermost one records.
    """
    _ids = itertools.count()

    def __init__(self):
        self.graph_id = next(self._ids)
        self.records = []

    def __len__(self):
        return len(self.records)

    def __enter__(self):
        stack = getattr(_state, 'graphs', None)
        if stack is None:
            stack = _state.graphs = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.graphs.pop()
        return False

    def record(self, function, inputs, output):
        """
        Appends an executed operation and assigns the output its node id
        """
        output.node_id = len(self.records)
        output.graph_id = self.graph_id
        self.records.append(_Record(function, inputs, output))

    def clear(self):
        """Drops every record (and the context saved for the adjoints)"""
        self.records = []

    def contains(self, tensor):
        """*True* if `tensor` was produced by an operation of this graph"""
        return (tensor.graph_id == self.graph_id and tensor.node_id is not None
                and tensor.node_id < len(self.records)
                and self.records[tensor.node_id].output is tensor)

    def backward(self, root, leaf_weights=None):
        """
        Reverse-mode differentiation of a scalar `root`

        Gradients of the root with respect to every leaf tensor with
        `requires_grad` reachable from it are added to the leaves' `grad`
        (gradients accumulate until :py:meth:`Tensor.zero_grad` is called).

        Parameters
        ----------
        root : Tensor
            Scalar produced by an operation recorded on this graph.
        leaf_weights : dict
            Optional mapping leaf Tensor -> scalar. The gradient added to a
            leaf is multiplied by its weight (default 1). Leaves with weight
            0 are left untouched.

        Returns
        -------
        grads : dict
            Leaf Tensor -> weighted gradient added by this call.
        """
        log.debug('@ tensor::Graph.backward')
        if not self.contains(root):
            raise GraphError('The backward root was not produced by this graph')
        if root.data.size != 1:
            raise GraphError('The backward root must be a scalar, got shape {}'.format(
                root.shape))
        if leaf_weights is None:
            leaf_weights = {}

        adjoints = {root.node_id: np.ones_like(root.data)}
        leaf_adjoints = {}
        leaves = {}

        for record in reversed(self.records[:root.node_id + 1]):
            grad_out = adjoints.pop(record.output.node_id, None)
            if grad_out is None:
                continue
            grads_in = record.function.backward(grad_out)
            for tensor, grad in zip(record.inputs, grads_in):
                if grad is None or not tensor.requires_grad:
                    continue
                if self.contains(tensor):
                    key, store = tensor.node_id, adjoints
                else:
                    key, store = id(tensor), leaf_adjoints
                    leaves[key] = tensor
                if key in store:
                    store[key] = store[key] + grad
                else:
                    store[key] = grad

        result = {}
        for key, grad in leaf_adjoints.items():
            leaf = leaves[key]
            weight = leaf_weights.get(leaf, 1.0)
            if weight == 0:
                continue
            if weight != 1:
                grad = weight * grad
            grad = np.asarray(grad, dtype=leaf.data.dtype)
            leaf.accumulate_grad(grad)
            result[leaf] = grad
        return result


# %% FUNCTION DEFINITIONS
def active_graph():
    """Returns the innermost active :py:class:`Graph` (or *None*)"""
    stack = getattr(_state, 'graphs', None)
    return stack[-1] if stack else None


def backward(root, leaf_weights=None):
    """
    Runs :py:meth:`Graph.backward` on the graph that produced `root`
    """
    graph = active_graph()
    if graph is None or not graph.contains(root):
        raise GraphError('backward() must be called inside the graph that produced the root')
    return graph.backward(root, leaf_weights=leaf_weights)


def default_dtype():
    """Current storage precision of new tensors (`rc['default_dtype']`)"""
    override = getattr(_state, 'dtype', None)
    return np.dtype(override if override is not None else rc['default_dtype'])


@contextlib.contextmanager
def double_precision(*tensors):
    """
    Double-precision shadow mode

    Within the context new tensors are stored as `float64`, and the
    `tensors` passed (usually network parameters) are temporarily promoted
    to `float64`. Their original values and precision are restored on
    exit.
    """
    log.debug('@ tensor::double_precision')
    previous = getattr(_state, 'dtype', None)
    saved = [(t, t.data) for t in tensors]
    _state.dtype = 'float64'
    try:
        for t, data in saved:
            t.data = data.astype(np.float64)
        yield
    finally:
        _state.dtype = previous
        for t, data in saved:
            t.data = data
            t.zero_grad()
