"""
Finite-difference gradient checks.

Used by the test-suite to validate every operation and whole networks
against central differences, in the double-precision shadow mode.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff.tensor import Graph, double_precision

# All declaration
__all__ = ['difference_quotients', 'numerical_gradient', 'analytic_gradients',
           'relative_error', 'check_gradients']


# %% FUNCTION DEFINITIONS
def difference_quotients(loss_fn, tensor, indices=None, eps=1e-6):
    """
    Central and one-sided finite-difference estimates of d(loss)/d(tensor)

    Parameters
    ----------
    loss_fn : callable
        Function without arguments returning a scalar Tensor (or float).
    tensor : Tensor
        Tensor whose values are perturbed in place (and restored).
    indices : list
        Flat indices at which the derivative is evaluated. All by default.
    eps : float
        Step of the differences.

    Returns
    -------
    central, forward, backward : numpy.ndarray
        Derivatives at `indices` (flat arrays).
    """
    log.debug('@ gradcheck::difference_quotients')
    flat = tensor.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    base = _as_float(loss_fn())
    forward, backward = [], []
    for i in indices:
        original = flat[i]
        flat[i] = original + eps
        plus = _as_float(loss_fn())
        flat[i] = original - eps
        minus = _as_float(loss_fn())
        flat[i] = original
        forward.append((plus - base) / eps)
        backward.append((base - minus) / eps)
    forward, backward = np.array(forward), np.array(backward)
    return (forward + backward) / 2, forward, backward


def numerical_gradient(loss_fn, tensor, indices=None, eps=1e-6):
    """
    Central finite-difference estimate of d(loss)/d(tensor)

    See :py:func:`difference_quotients` for the parameters.
    """
    log.debug('@ gradcheck::numerical_gradient')
    return difference_quotients(loss_fn, tensor, indices, eps)[0]


def analytic_gradients(loss_fn, tensors):
    """
    Reverse-mode gradients of `loss_fn()` with respect to `tensors`

    Gradients previously accumulated on the tensors are cleared first.

    Returns
    -------
    list
        One gradient array per tensor (zeros if not on a path to the loss).
    """
    log.debug('@ gradcheck::analytic_gradients')
    for t in tensors:
        t.zero_grad()
    with Graph() as graph:
        loss = loss_fn()
        graph.backward(loss)
    grads = [t.grad.copy() for t in tensors]
    for t in tensors:
        t.zero_grad()
    return grads


def relative_error(analytic, numeric, floor=1e-4):
    """
    Elementwise `|a - n| / max(|a|, |n|, floor)`

    Gradients smaller than `floor` are thus compared in absolute terms.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(loss_fn, tensors, *, n_checks=None, rng=None, eps=1e-6,
                    kink_tol=1e-4, return_skipped=False):
    """
    Compares reverse-mode and finite-difference gradients

    Everything runs in the double-precision shadow mode; the tensors get
    their original values back afterwards.

    The loss is only piecewise smooth (leaky ReLU). An entry whose forward
    and backward difference quotients disagree by more than `kink_tol`
    (relative) has a kink within `eps` of it; the central difference is
    meaningless there and the entry is skipped.

    Parameters
    ----------
    loss_fn : callable
        Function without arguments returning a scalar Tensor.
    tensors : list
        Leaf tensors (with `requires_grad`) to check.
    n_checks : int
        If given, only this many randomly chosen entries of each tensor are
        checked.
    rng : numpy.random.Generator
        Used to choose the entries.
    eps : float
        Finite-difference step.
    kink_tol : float
        Largest relative disagreement of the one-sided quotients of a
        checked entry.
    return_skipped : bool
        Also return the number of skipped entries of each tensor.

    Returns
    -------
    errors : list
        Maximum relative error for each tensor (0 if every entry was
        skipped).
    skipped : list
        Only if `return_skipped`.
    """
    log.debug('@ gradcheck::check_gradients')
    if rng is None:
        rng = np.random.default_rng(0)
    errors, skipped = [], []
    with double_precision(*tensors):
        grads = analytic_gradients(loss_fn, tensors)
        for tensor, grad in zip(tensors, grads):
            size = tensor.data.size
            if n_checks is None or n_checks >= size:
                indices = np.arange(size)
            else:
                indices = rng.choice(size, n_checks, replace=False)
            central, forward, backward = difference_quotients(loss_fn, tensor, indices,
                                                              eps=eps)
            smooth = relative_error(forward, backward) <= kink_tol
            if not smooth.all():
                log.warning('Skipped %d entries of %s lying on a kink',
                            np.count_nonzero(~smooth), tensor.name)
            err = relative_error(grad.reshape(-1)[indices][smooth], central[smooth])
            errors.append(float(err.max()) if err.size else 0.0)
            skipped.append(int(np.count_nonzero(~smooth)))
    if return_skipped:
        return errors, skipped
    return errors


def _as_float(value):
    return float(np.asarray(getattr(value, 'data', value)).reshape(-1)[0])
