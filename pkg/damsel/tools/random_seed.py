"""
This module provides seed handling and independent random streams.

All the randomness of an experiment flows from a single master seed, which
is expanded into named, statistically independent
:py:class:`numpy.random.Generator` streams (one per consumer, e.g. the
B_seg sampler, the B_adv sampler and parameter initialisation).

For the testing suites, please turn to "damsel/tests/test_tools.py".
"""

# %% IMPORTS
# Built-in imports
import logging as log
import zlib

# Package imports
import numpy as np

# All declaration
__all__ = ['seed_generator', 'spawn_generators', 'derived_generator']


# %% FUNCTION DEFINITIONS
def seed_generator(trigger):
    """
    Validates a master seed.

    Every non-negative integer, 0 included, is a fixed seed: a run is fully
    determined by its seed.

    Parameters
    ----------
    trigger : int
        Non-negative pre-fixed seed.

    Returns
    -------
    seed : int
        The seed, as a Python integer.
    """
    log.debug('@ random_seed::seed_generator')
    if isinstance(trigger, bool) or not isinstance(trigger, (int, np.integer)):
        raise TypeError('random seed must be an integer, got {!r}'.format(trigger))
    if trigger < 0:
        raise ValueError('unsupported random seed value')
    return int(trigger)


def _name_key(name):
    # Stable (process independent) integer key for a stream name
    return zlib.crc32(str(name).encode('utf-8'))


def derived_generator(seed, *keys):
    """
    Creates a generator deterministically derived from a master seed and a
    sequence of keys (strings or non-negative integers).

    The same `(seed, keys)` always produces the same stream, independently
    of how many other streams were created before, which allows generating
    e.g. synthetic cases in any order (or on any MPI process).

    Parameters
    ----------
    seed : int
        Master seed.
    *keys : str or int
        Stream identifiers.

    Returns
    -------
    rng : numpy.random.Generator
    """
    entropy = [int(seed)] + [k if isinstance(k, (int, np.integer)) else _name_key(k)
                             for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn_generators(seed, names):
    """
    Expands a master seed into a dictionary of named independent streams.

    Parameters
    ----------
    seed : int
        Master seed (passed through :py:func:`seed_generator`).
    names : iterable of str
        Names of the requested streams.

    Returns
    -------
    generators : dict
        Dictionary name -> :py:class:`numpy.random.Generator`.
    """
    log.debug('@ random_seed::spawn_generators')
    seed = seed_generator(seed)
    return {name: derived_generator(seed, name) for name in names}
