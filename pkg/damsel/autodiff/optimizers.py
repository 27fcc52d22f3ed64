"""
Stochastic gradient descent with classical momentum.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# All declaration
__all__ = ['OptimizerState', 'SGDMomentum', 'sgd_momentum_step',
           'clip_grad_norm']


# %% CLASS DEFINITIONS
class OptimizerState(object):
    """
    Velocities, momentum coefficient and learning rate of an optimizer

    Parameters
    ----------
    shapes : dict
        Parameter name -> shape. A zero velocity is created for each.
    momentum : float
        Momentum coefficient in [0, 1).
    lr : float
        Learning rate (positive).
    """
    def __init__(self, shapes, *, momentum=0.9, lr=0.01, dtype=np.float32):
        self.velocities = {name: np.zeros(shape, dtype=dtype)
                           for name, shape in shapes.items()}
        self.momentum = momentum
        self.lr = lr

    @property
    def momentum(self):
        """Momentum coefficient"""
        return self._momentum

    @momentum.setter
    def momentum(self, value):
        if not 0 <= value < 1:
            raise ValueError('Momentum must lie in [0, 1), got {}'.format(value))
        self._momentum = float(value)

    @property
    def lr(self):
        """Current learning rate"""
        return self._lr

    @lr.setter
    def lr(self, value):
        if not value > 0:
            raise ValueError('Learning rate must be positive, got {}'.format(value))
        self._lr = float(value)

    def copy(self):
        """Deep copy of the state"""
        new = OptimizerState({}, momentum=self.momentum, lr=self.lr)
        new.velocities = {k: v.copy() for k, v in self.velocities.items()}
        return new


class SGDMomentum(object):
    """
    SGD with classical momentum over a named set of parameters

    The update for every parameter `p` with gradient `g` is::

        v <- m*v - lr*g
        p <- p + v

    Parameters
    ----------
    parameters : dict
        Parameter name -> :py:class:`damsel.autodiff.Tensor`.
    lr : float
        Learning rate.
    momentum : float
        Momentum coefficient.
    clip_norm : float
        If given, the global gradient norm is clipped to this value before
        each step.
    """
    def __init__(self, parameters, *, lr=0.01, momentum=0.9, clip_norm=None):
        log.debug('@ optimizers::SGDMomentum.__init__')
        self.parameters = dict(parameters)
        self.state = OptimizerState({name: p.shape for name, p in self.parameters.items()},
                                    momentum=momentum, lr=lr)
        self.clip_norm = clip_norm

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    @property
    def momentum(self):
        return self.state.momentum

    def step(self, grads=None):
        """
        Applies one update

        Parameters
        ----------
        grads : dict
            Parameter name -> gradient array. By default the gradients
            accumulated on the parameters themselves are used.
        """
        log.debug('@ optimizers::SGDMomentum.step')
        if grads is None:
            grads = {name: p.grad for name, p in self.parameters.items()}
        if self.clip_norm is not None:
            grads = clip_grad_norm(grads, self.clip_norm)
        updated = sgd_momentum_step(self.state,
                                    {k: p.data for k, p in self.parameters.items()},
                                    grads)
        for name, value in updated.items():
            self.parameters[name].data = value

    def zero_grad(self):
        """Clears the gradients accumulated on every parameter"""
        for p in self.parameters.values():
            p.zero_grad()

    def state_dict(self):
        """Copy of the optimizer state"""
        return self.state.copy()

    def load_state_dict(self, state):
        """Restores a state produced by :py:meth:`state_dict`"""
        if set(state.velocities) != set(self.parameters):
            raise KeyError('Optimizer state does not match the parameter set')
        self.state = state.copy()


# %% FUNCTION DEFINITIONS
def sgd_momentum_step(state, params, grads):
    """
    One classical-momentum SGD update

    Parameters
    ----------
    state : OptimizerState
        Velocities are updated in place.
    params : dict
        Parameter name -> array.
    grads : dict
        Parameter name -> gradient array.

    Returns
    -------
    updated : dict
        Parameter name -> new array (inputs are not modified).
    """
    updated = {}
    m, lr = state.momentum, state.lr
    for name, p in params.items():
        g = np.asarray(grads[name])
        v = state.velocities[name]
        if g.shape != p.shape or v.shape != p.shape:
            raise ValueError('Shape mismatch for {!r}: parameter {}, gradient {}, '
                             'velocity {}'.format(name, p.shape, g.shape, v.shape))
        v = (m * v - lr * g).astype(p.dtype)
        state.velocities[name] = v
        updated[name] = p + v
    return updated


def clip_grad_norm(grads, max_norm):
    """
    Rescales `grads` so that their global L2 norm does not exceed `max_norm`
    """
    total = np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values()))
    if total <= max_norm or total == 0:
        return grads
    factor = max_norm / total
    log.warning('Clipping gradient norm {:.4g} to {:.4g}'.format(total, max_norm))
    return {k: g * factor for k, g in grads.items()}
