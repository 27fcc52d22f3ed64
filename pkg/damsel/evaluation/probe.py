"""
Domain-divergence probe: how well a discriminator tells the two domains
apart from the segmenter's tapped features.

The probe either uses the discriminator trained alongside the segmenter,
or trains a fresh one on the frozen segmenter (fresh-probe mode), which
also allows probing segmenters trained without an adversarial branch.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np

# DAMSEL imports
from damsel.autodiff import Graph, SGDMomentum, softmax_xent_mean
from damsel.networks import (TapSet, build_discriminator, discriminate,
                             tap_channels)
from damsel.sampling import SegmentGeometry, build_adv_batch

# All declaration
__all__ = ['domain_accuracy', 'probe_domain_accuracy', 'train_probe_discriminator',
           'fresh_probe_accuracy']


# %% FUNCTION DEFINITIONS
def domain_accuracy(domain_logits, domains):
    """
    Fraction of samples whose position-averaged logits pick their domain

    Parameters
    ----------
    domain_logits : Tensor or numpy.ndarray
        `[N, 2, e, e, e]` discriminator output.
    domains : numpy.ndarray
        `[N]` domain labels.

    Returns
    -------
    float
    """
    data = np.asarray(getattr(domain_logits, 'data', domain_logits))
    averaged = data.reshape(data.shape[:2] + (-1,)).mean(axis=-1)
    predicted = np.argmax(averaged, axis=1)
    return float(np.mean(predicted == np.asarray(domains)))


def probe_domain_accuracy(segmenter, discriminator, source_cases, target_cases,
                          n_samples=100, rng=None, tap_set=None, *, batch_size=20,
                          use_mask=False):
    """
    Domain classification accuracy on balanced, label-free segments

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Frozen segmenter.
    discriminator : damsel.networks.Discriminator
        Discriminator reading `tap_set`.
    source_cases, target_cases : list
        Held-out cases of each domain.
    n_samples : int
        Positive even number of segments (half per domain).
    rng : numpy.random.Generator
        Segment-drawing stream.
    tap_set : TapSet
        Tapped layers (the default set if *None*).
    batch_size : int
        Segments per forward pass (even).
    use_mask : bool
        Draw centres inside the case masks.

    Returns
    -------
    float
        Accuracy in [0, 1].
    """
    log.debug('@ probe::probe_domain_accuracy')
    if n_samples < 2 or n_samples % 2:
        raise ValueError('n_samples must be a positive even number, got {}'.format(n_samples))
    if not source_cases or not target_cases:
        raise ValueError('The probe needs held-out cases of both domains')
    if rng is None:
        rng = np.random.default_rng()
    tap_set = TapSet() if tap_set is None else tap_set
    geometry = SegmentGeometry.from_spec(segmenter.spec)

    correct, seen = 0.0, 0
    while seen < n_samples:
        size = min(max(2, batch_size - batch_size % 2), n_samples - seen)
        batch = build_adv_batch(source_cases, target_cases, size, rng, geometry,
                                use_mask=use_mask)
        logits = discriminate(segmenter, discriminator, tap_set, *batch.inputs())
        correct += domain_accuracy(logits, batch.domains) * size
        seen += size
    accuracy = correct / n_samples
    log.info('Domain probe accuracy {:.3f} over {} segments'.format(accuracy, n_samples))
    return accuracy


def train_probe_discriminator(segmenter, source_cases, target_cases, tap_set=None, *,
                              spec=None, steps=200, n_adv=20, lr=0.001, momentum=0.9,
                              rng=None, seed=1, use_mask=False):
    """
    Trains a new discriminator on the taps of a frozen segmenter

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Segmenter whose parameters stay untouched.
    source_cases, target_cases : list
        Training cases of each domain.
    tap_set : TapSet
        Tapped layers.
    spec : DiscriminatorSpec
        Architecture of the new discriminator.
    steps : int
        Number of optimizer steps.
    n_adv : int
        Segments per step.
    lr, momentum : float
        Optimizer settings.
    rng : numpy.random.Generator
        Segment-drawing stream.
    seed : int
        Initialization seed of the discriminator.

    Returns
    -------
    damsel.networks.Discriminator
    """
    log.debug('@ probe::train_probe_discriminator')
    tap_set = TapSet() if tap_set is None else tap_set
    if rng is None:
        rng = np.random.default_rng()
    discriminator = build_discriminator(spec, tap_channels(segmenter.spec, tap_set), seed)
    optimizer = SGDMomentum(discriminator.parameters(), lr=lr, momentum=momentum)
    geometry = SegmentGeometry.from_spec(segmenter.spec)
    frozen = {p: 0 for p in segmenter.parameters().values()}

    for step in range(steps):
        batch = build_adv_batch(source_cases, target_cases, n_adv, rng, geometry,
                                use_mask=use_mask)
        with Graph() as graph:
            logits = discriminate(segmenter, discriminator, tap_set, *batch.inputs())
            loss = softmax_xent_mean(logits, batch.position_domains(logits.shape[-1]))
            graph.backward(loss, leaf_weights=frozen)
        optimizer.step()
        optimizer.zero_grad()
        if (step + 1) % 50 == 0:
            log.info('Probe discriminator step {}: loss {:.4f}, accuracy {:.3f}'.format(
                step + 1, loss.item(), domain_accuracy(logits, batch.domains)))
    return discriminator


def fresh_probe_accuracy(segmenter, train_source, train_target, heldout_source,
                         heldout_target, n_samples=100, rng=None, tap_set=None, **kwargs):
    """
    Fresh-probe mode: trains a new discriminator on training-fold segments
    and returns its accuracy on held-out segments

    Extra keyword arguments go to :py:func:`train_probe_discriminator`.
    """
    log.debug('@ probe::fresh_probe_accuracy')
    if rng is None:
        rng = np.random.default_rng()
    use_mask = kwargs.get('use_mask', False)
    discriminator = train_probe_discriminator(segmenter, train_source, train_target,
                                              tap_set, rng=rng, **kwargs)
    return probe_domain_accuracy(segmenter, discriminator, heldout_source, heldout_target,
                                 n_samples, rng, tap_set, use_mask=use_mask)
