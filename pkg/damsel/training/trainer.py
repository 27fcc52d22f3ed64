"""
Joint adversarial training of the segmenter and the domain discriminator.

Every step first forwards a domain-balanced batch B_adv through the
segmenter taps and the discriminator; the backward pass of the adversarial
loss gives the discriminator its gradient and the segmenter the same
gradient scaled by -alpha. Then a labelled batch B_seg is forwarded through
the segmenter and its loss gradient is added. Each network takes one SGD
step with its own learning rate. Without a discriminator the step reduces
to plain supervised training.
"""

# %% IMPORTS
# Built-in imports
from copy import copy
import logging as log
import os
from os import path

# Package imports
import numpy as np
import pandas as pd

# DAMSEL imports
from damsel.autodiff import Graph, NonFiniteError, SGDMomentum, softmax_xent_mean
from damsel.evaluation import (domain_accuracy, evaluate_cases,
                               probe_domain_accuracy)
from damsel.networks import TapSet, discriminate
from damsel.sampling import SegmentGeometry, build_adv_batch, build_seg_batch
from damsel.tools import (Timer, is_master, load_object, save_checkpoint,
                          save_object, spawn_generators)
from damsel.training.schedule import TrainSchedule

# All declaration
__all__ = ['LossReport', 'TrainingDivergedError', 'AdversarialTrainer',
           'HISTORY_COLUMNS']

HISTORY_COLUMNS = ['epoch', 'L_seg', 'L_adv', 'alpha', 'lr_seg', 'lr_adv',
                   'disc_acc_train', 'disc_acc_val', 'val_dsc']


# %% CLASS DEFINITIONS
class TrainingDivergedError(RuntimeError):
    """
    A non-finite value persisted after the epoch was re-run with reduced
    learning rates
    """
    def __init__(self, epoch, step, op_name):
        self.epoch = epoch
        self.step = step
        self.op_name = op_name
        super().__init__('Training diverged at epoch {}, step {} (non-finite output of '
                         '{!r}) after retrying with reduced learning rates'.format(
                             epoch, step, op_name))


class LossReport(object):
    """
    Losses and settings of one training step

    `L_adv` and `disc_acc` are *None* when the step had no adversarial
    branch, `L_seg` when it had no B_seg.
    """
    def __init__(self, epoch, step, L_seg, L_adv, alpha, lr_seg, lr_adv, disc_acc):
        self.epoch = epoch
        self.step = step
        self.L_seg = L_seg
        self.L_adv = L_adv
        self.alpha = alpha
        self.lr_seg = lr_seg
        self.lr_adv = lr_adv
        self.disc_acc = disc_acc

    @property
    def L_seg_adv(self):
        """Segmenter objective `L_seg - alpha*L_adv`"""
        return (self.L_seg or 0.0) - self.alpha * (self.L_adv or 0.0)

    def as_dict(self):
        return {'epoch': self.epoch, 'step': self.step, 'L_seg': self.L_seg,
                'L_adv': self.L_adv, 'alpha': self.alpha, 'lr_seg': self.lr_seg,
                'lr_adv': self.lr_adv, 'disc_acc': self.disc_acc}

    def __repr__(self):
        return 'LossReport({})'.format(', '.join('{}={}'.format(k, v) for k, v in
                                                 self.as_dict().items()))


class AdversarialTrainer(object):
    """
    Runs the epoch loop of the joint optimization

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Network being adapted.
    seg_cases : list of CaseRecord
        Labelled cases B_seg is drawn from.
    schedule : TrainSchedule
        Epoch-level schedule (defaults if *None*).
    discriminator : damsel.networks.Discriminator
        Domain classifier. If *None* the adversarial branch is disabled.
    tap_set : TapSet
        Segmenter layers read by the discriminator.
    adv_source, adv_target : list
        Cases B_adv is drawn from. Only label-free views are ever read.
    seed : int
        Master seed of the batch streams.
    val_source, val_target : list
        Held-out cases for the per-epoch discriminator accuracy.
    val_labelled : list of CaseRecord
        Held-out labelled cases for the per-epoch validation DSC.
    run_directory : str
        Where metrics, checkpoints and the trainer state are written
        (nothing is written if *None*).
    adv_use_mask : bool
        Draw B_adv centres inside the case masks.
    val_samples : int
        Segments drawn for the validation discriminator accuracy.
    metadata : dict
        JSON-compatible information added to every checkpoint manifest.
    """
    def __init__(self, segmenter, seg_cases, schedule=None, *, discriminator=None,
                 tap_set=None, adv_source=None, adv_target=None, seed=1,
                 val_source=None, val_target=None, val_labelled=None,
                 run_directory=None, adv_use_mask=False, val_samples=40,
                 metadata=None):
        log.debug('@ trainer::AdversarialTrainer.__init__')
        self.schedule = TrainSchedule() if schedule is None else schedule
        self.schedule.check()
        self.segmenter = segmenter
        self.discriminator = discriminator
        self.tap_set = TapSet() if tap_set is None else tap_set
        self.tap_set.check(segmenter.spec)

        self.seg_cases = list(seg_cases)
        if not self.seg_cases:
            raise ValueError('Training needs at least one labelled case')
        self.adv_source = [c.unlabelled() if hasattr(c, 'unlabelled') else c
                           for c in (adv_source or [])]
        self.adv_target = [c.unlabelled() if hasattr(c, 'unlabelled') else c
                           for c in (adv_target or [])]
        if discriminator is not None and not (self.adv_source and self.adv_target):
            raise ValueError('The adversarial branch needs cases of both domains')

        self.val_source = list(val_source or [])
        self.val_target = list(val_target or [])
        self.val_labelled = list(val_labelled or [])
        self.val_samples = val_samples
        self.adv_use_mask = adv_use_mask
        self.metadata = dict(metadata or {})
        self.geometry = SegmentGeometry.from_spec(segmenter.spec)

        self.seed = seed
        self.rngs = spawn_generators(seed, ['seg', 'adv', 'val'])

        s = self.schedule
        self.seg_optimizer = SGDMomentum(segmenter.parameters(), lr=s.lr_seg,
                                         momentum=s.momentum, clip_norm=s.clip_grad_norm)
        self.adv_optimizer = None
        if discriminator is not None:
            self.adv_optimizer = SGDMomentum(discriminator.parameters(), lr=s.lr_adv,
                                             momentum=s.momentum,
                                             clip_norm=s.clip_grad_norm)

        self.epoch = 0
        self._history = []
        self.last_reports = []
        self.timer = Timer()
        self._run_directory = run_directory

    @property
    def run_directory(self):
        return self._run_directory

    @property
    def has_adversary(self):
        return self.discriminator is not None

    @property
    def history(self):
        """Per-epoch metrics as a :py:class:`pandas.DataFrame`"""
        return pd.DataFrame(self._history, columns=HISTORY_COLUMNS)

    # -- Single step ---------------------------------------------------------
    def train_step(self, seg_batch, adv_batch=None, alpha=0.0, *, epoch=None, step=None):
        """
        One joint update of both networks

        Parameters
        ----------
        seg_batch : SegBatch or None
            Labelled segments.
        adv_batch : AdvBatch or None
            Domain-balanced segments (ignored without a discriminator).
        alpha : float
            Adversarial weight.

        Returns
        -------
        LossReport
        """
        log.debug('@ trainer::AdversarialTrainer.train_step')
        seg_params = self.segmenter.parameters()
        L_adv = disc_acc = L_seg = None

        if adv_batch is not None and self.has_adversary:
            with Graph() as graph:
                logits = discriminate(self.segmenter, self.discriminator, self.tap_set,
                                      *adv_batch.inputs())
                loss = softmax_xent_mean(logits,
                                         adv_batch.position_domains(logits.shape[-1]))
                _check_loss(loss, 'adversarial loss')
                graph.backward(loss, leaf_weights={p: -alpha for p in seg_params.values()})
            L_adv = loss.item()
            disc_acc = domain_accuracy(logits, adv_batch.domains)

        if seg_batch is not None:
            with Graph() as graph:
                logits, _ = self.segmenter.forward(*seg_batch.inputs())
                loss = softmax_xent_mean(logits, seg_batch.labels)
                _check_loss(loss, 'segmentation loss')
                graph.backward(loss)
            L_seg = loss.item()

        _check_gradients(seg_params)
        self.seg_optimizer.step()
        if self.has_adversary:
            _check_gradients(self.discriminator.parameters())
            self.adv_optimizer.step()
        self.zero_grad()

        return LossReport(epoch, step, L_seg, L_adv, alpha, self.seg_optimizer.lr,
                          self.adv_optimizer.lr if self.has_adversary else None, disc_acc)

    def zero_grad(self):
        self.segmenter.zero_grad()
        if self.has_adversary:
            self.discriminator.zero_grad()

    # -- Epoch loop ----------------------------------------------------------
    def train(self, epochs=None):
        """
        Runs the remaining epochs of the schedule

        Training resumes after the last completed epoch, so a trainer
        restored with :py:meth:`load` continues where it stopped.

        Parameters
        ----------
        epochs : int
            Run at most this many epochs (all remaining ones by default).

        Returns
        -------
        pandas.DataFrame
            The full history.
        """
        log.debug('@ trainer::AdversarialTrainer.train')
        last = self.schedule.total_epochs
        if epochs is not None:
            last = min(last, self.epoch + epochs)

        while self.epoch < last:
            epoch = self.epoch + 1
            with self.timer.timed('epoch'):
                row = self._run_epoch_with_retry(epoch)
                self.epoch = epoch
                row.update(self._validate(epoch))
            self._history.append(row)
            log.info('Epoch {}/{} ({:.1f}s): L_seg={} L_adv={} alpha={:.4g} '
                     'lr_seg={:.4g}'.format(epoch, self.schedule.total_epochs,
                                            self.timer.record['epoch'], _fmt(row['L_seg']),
                                            _fmt(row['L_adv']), row['alpha'], row['lr_seg']))

            if self.run_directory is not None:
                self.write_history()
                every = self.schedule.checkpoint_every
                if every and epoch % every == 0 and epoch != self.schedule.total_epochs:
                    self.save_checkpoints('epoch_{:04d}'.format(epoch))
                self.save()

        if self.run_directory is not None and self.epoch == self.schedule.total_epochs:
            self.save_checkpoints('final')
        return self.history

    def _snapshot(self):
        state = {'segmenter': self.segmenter.parameter_values(),
                 'seg_optimizer': self.seg_optimizer.state_dict(),
                 'rngs': {k: r.bit_generator.state for k, r in self.rngs.items()}}
        if self.has_adversary:
            state['discriminator'] = self.discriminator.parameter_values()
            state['adv_optimizer'] = self.adv_optimizer.state_dict()
        return state

    def _restore(self, state):
        self.segmenter.load_parameter_values(state['segmenter'])
        self.seg_optimizer.load_state_dict(state['seg_optimizer'])
        for k, rng in self.rngs.items():
            rng.bit_generator.state = state['rngs'][k]
        if self.has_adversary:
            self.discriminator.load_parameter_values(state['discriminator'])
            self.adv_optimizer.load_state_dict(state['adv_optimizer'])
        self.zero_grad()

    def _run_epoch_with_retry(self, epoch):
        snapshot = self._snapshot()
        try:
            return self._run_epoch(epoch, 1.0)
        except NonFiniteError as error:
            log.warning('Non-finite value in {!r} at epoch {}; re-running the epoch with '
                        'learning rates scaled by {}'.format(
                            error.op_name, epoch, self.schedule.retry_lr_factor))
            self._restore(snapshot)
        try:
            return self._run_epoch(epoch, self.schedule.retry_lr_factor)
        except NonFiniteError as error:
            self._restore(snapshot)
            raise TrainingDivergedError(epoch, getattr(error, 'step', None),
                                        error.op_name) from error

    def _run_epoch(self, epoch, lr_factor):
        s = self.schedule
        alpha = s.alpha_at(epoch)
        lr_seg, lr_adv = s.lr_at(epoch)
        self.seg_optimizer.lr = lr_seg * lr_factor
        if self.has_adversary:
            self.adv_optimizer.lr = lr_adv * lr_factor

        reports = []
        for step in range(s.batches_per_epoch):
            seg_batch = build_seg_batch(self.seg_cases, s.n_seg, s.fg_fraction,
                                        self.rngs['seg'], self.geometry)
            adv_batch = None
            if self.has_adversary:
                adv_batch = build_adv_batch(self.adv_source, self.adv_target, s.n_adv,
                                            self.rngs['adv'], self.geometry,
                                            use_mask=self.adv_use_mask)
            try:
                report = self.train_step(seg_batch, adv_batch, alpha, epoch=epoch,
                                         step=step)
            except NonFiniteError as error:
                self.zero_grad()
                error.step = step
                raise
            log.debug(repr(report))
            reports.append(report)
        self.last_reports = reports

        return {'epoch': epoch,
                'L_seg': _mean(r.L_seg for r in reports),
                'L_adv': _mean(r.L_adv for r in reports),
                'alpha': alpha,
                'lr_seg': self.seg_optimizer.lr,
                'lr_adv': self.adv_optimizer.lr if self.has_adversary else np.nan,
                'disc_acc_train': _mean(r.disc_acc for r in reports),
                'disc_acc_val': np.nan,
                'val_dsc': np.nan}

    def _validate(self, epoch):
        every = self.schedule.val_every
        values = {}
        if not every or epoch % every:
            return values
        if self.has_adversary and self.val_source and self.val_target:
            values['disc_acc_val'] = probe_domain_accuracy(
                self.segmenter, self.discriminator, self.val_source, self.val_target,
                self.val_samples, self.rngs['val'], self.tap_set,
                use_mask=self.adv_use_mask)
        if self.val_labelled:
            metrics = evaluate_cases(self.segmenter, self.val_labelled)
            values['val_dsc'] = float(np.mean([m.dsc for m in metrics]))
        return values

    # -- Output --------------------------------------------------------------
    def write_history(self, filename='metrics.csv'):
        """Writes the history CSV into the run directory (empty cells for NaN)"""
        filepath = path.join(self.run_directory, filename)
        if is_master():
            os.makedirs(self.run_directory, exist_ok=True)
            self.history.to_csv(filepath, index=False, na_rep='')
        return filepath

    def save_checkpoints(self, name):
        """
        Writes `checkpoints/<name>/segmenter` (and `.../discriminator` when
        there is one) into the run directory
        """
        log.debug('@ trainer::AdversarialTrainer.save_checkpoints')
        if not is_master():
            return
        directory = path.join(self.run_directory, 'checkpoints', name)
        extra = dict(self.metadata, tap_set=self.tap_set.describe(),
                     taps=self.tap_set.to_dict()['taps'])
        save_checkpoint(path.join(directory, 'segmenter'), self.segmenter.parameters(),
                        momentum=self.seg_optimizer.momentum, epoch=self.epoch,
                        extra=dict(extra, network='segmenter',
                                   spec=self.segmenter.spec.to_dict()))
        if self.has_adversary:
            save_checkpoint(path.join(directory, 'discriminator'),
                            self.discriminator.parameters(),
                            momentum=self.adv_optimizer.momentum, epoch=self.epoch,
                            extra=dict(extra, network='discriminator',
                                       spec=self.discriminator.spec.to_dict(),
                                       tap_channels=self.discriminator.tap_channels))
        return directory

    def save(self):
        """
        Serializes the whole trainer to `trainer.pkl` in the run directory

        The run directory is stored relative to itself, so the directory
        can be moved before :py:meth:`load`.
        """
        log.debug('@ trainer::AdversarialTrainer.save')
        trainer = copy(self)
        run_directory, trainer._run_directory = self._run_directory, '.'
        trainer.last_reports = []
        if is_master():
            save_object(trainer, path.join(run_directory, 'trainer.pkl'))
        return trainer

    @classmethod
    def load(cls, directory_path='.'):
        """Restores a trainer saved with :py:meth:`save`"""
        log.debug('@ trainer::AdversarialTrainer.load')
        filepath = path.join(directory_path, 'trainer.pkl')
        if not path.isfile(filepath):
            raise FileNotFoundError('No trainer state at {}'.format(filepath))
        trainer = load_object(filepath)
        trainer._run_directory = path.join(directory_path, trainer._run_directory)
        return trainer


# %% FUNCTION DEFINITIONS
def _check_loss(loss, what):
    if not np.isfinite(loss.data).all():
        raise NonFiniteError(what)


def _check_gradients(parameters):
    for name, p in parameters.items():
        if p._grad is not None and not np.isfinite(p._grad).all():
            raise NonFiniteError('gradient of {}'.format(name))


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else np.nan


def _fmt(value):
    return '' if value is None or np.isnan(value) else '{:.4f}'.format(value)
