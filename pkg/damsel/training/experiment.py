"""
Experiment configuration and the experiment arms.

A :py:class:`RunConfig` is one JSON document naming the dataset manifests,
the architectures, the tap set, the schedule overrides, the arm and the
seed. :py:class:`Experiment` turns it into data splits, networks and an
:py:class:`~damsel.training.AdversarialTrainer`, and evaluates or probes
the resulting checkpoints.

The arms mirror the usual comparison grid for a missing/substituted
channel:

=====================  ============================  =========  ===============
arm                    B_seg cases                   B_adv      shifted channel
=====================  ============================  =========  ===============
source-only            S                             no         kept
source-only-common     S                             no         filled with -4
target-only            T (training folds)            no         kept
uda                    S                             S and T    kept
supervised-both        S + T (training folds)        no         kept
supervised-both-split  S + T (training folds)        no         one per domain
=====================  ============================  =========  ===============
"""

# %% IMPORTS
# Built-in imports
import logging as log
import os
from os import path

# Package imports
import numpy as np

# DAMSEL imports
from damsel.evaluation import (evaluate_cases, fresh_probe_accuracy,
                               metrics_table, probe_domain_accuracy, summarize)
from damsel.networks import (DiscriminatorSpec, SegmenterSpec, TapSet,
                             build_discriminator, build_segmenter, tap_channels)
from damsel.sampling import (CaseRecord, DatasetManifest, UnlabelledCase,
                             fill_missing_channel, split_domain_channel,
                             split_folds)
from damsel.tools import (ConfigError, SpecBase, derived_generator, is_master,
                          load_checkpoint, rc, read_json, write_json)
from damsel.training.schedule import TrainSchedule
from damsel.training.trainer import AdversarialTrainer

# All declaration
__all__ = ['ExperimentArm', 'ARMS', 'RunConfig', 'Experiment', 'load_networks',
           'train']


# %% CLASS DEFINITIONS
class ExperimentArm(object):
    """
    Which cases an arm trains on and how it treats the shifted channel

    Parameters
    ----------
    name : str
        Arm name.
    seg_domains : tuple of str
        Domains whose (training) cases enter B_seg.
    adversarial : bool
        Whether a discriminator is trained.
    channel : str
        'keep', 'fill' (shifted channel replaced by a constant in both
        domains) or 'split' (one input channel per domain).
    """
    def __init__(self, name, seg_domains, adversarial=False, channel='keep'):
        self.name = name
        self.seg_domains = tuple(seg_domains)
        self.adversarial = adversarial
        self.channel = channel

    @property
    def needs_target(self):
        return self.adversarial or 'T' in self.seg_domains

    def __repr__(self):
        return 'ExperimentArm({!r})'.format(self.name)


ARMS = {arm.name: arm for arm in [
    ExperimentArm('source-only', ['S']),
    ExperimentArm('source-only-common', ['S'], channel='fill'),
    ExperimentArm('target-only', ['T']),
    ExperimentArm('uda', ['S'], adversarial=True),
    ExperimentArm('supervised-both', ['S', 'T']),
    ExperimentArm('supervised-both-split', ['S', 'T'], channel='split')]}


class RunConfig(SpecBase):
    """
    Fully-resolved configuration of one experiment

    Parameters
    ----------
    source_manifest, target_manifest : str
        Dataset manifests of each domain (one manifest holding both domains
        can be given for both).
    segmenter_spec, discriminator_spec : dict
        Architectures (defaults if *None*). The segmenter's `in_channels`
        is the channel count of the stored volumes.
    taps : str
        Tap set in the compact form, e.g. 'L4,6,8,10'.
    schedule : dict
        Overrides of the :py:class:`TrainSchedule` defaults.
    mode : str
        Experiment arm (see :py:data:`ARMS`).
    seed : int
        Master seed of every random stream.
    out_dir : str
        Run directory.
    n_folds : int
        Number of folds the cases of each domain are split into.
    target_fold : int
        Held-out fold (in both domains).
    shifted_channel : int
        Channel affected by the domain shift.
    adv_use_mask : bool
        Draw B_adv centres inside the case masks.
    eval_labels : bool
        Let a `uda` run read the held-out target labels for the per-epoch
        validation DSC.
    val_samples : int
        Segments of the per-epoch discriminator accuracy.
    tile_extent : int
        Input extent of the dense-inference tiles.
    probe_samples : int
        Segments drawn by the domain probe.
    fresh_probe : bool
        Train a new discriminator for the probe.
    probe_steps : int
        Training steps of a fresh probe discriminator.
    """
    FIELDS = ['source_manifest', 'target_manifest', 'segmenter_spec',
              'discriminator_spec', 'taps', 'schedule', 'mode', 'seed', 'out_dir',
              'n_folds', 'target_fold', 'shifted_channel', 'adv_use_mask',
              'eval_labels', 'val_samples', 'tile_extent', 'probe_samples',
              'fresh_probe', 'probe_steps']
    PATH_FIELDS = ['source_manifest', 'target_manifest', 'out_dir']
    SPEC_FIELDS = ['segmenter_spec', 'discriminator_spec']

    def __init__(self, source_manifest=None, target_manifest=None, segmenter_spec=None,
                 discriminator_spec=None, taps='L4,6,8,10', schedule=None, mode='uda',
                 seed=None, out_dir='run', n_folds=2, target_fold=1, shifted_channel=1,
                 adv_use_mask=False, eval_labels=False, val_samples=40, tile_extent=None,
                 probe_samples=100, fresh_probe=False, probe_steps=200):
        super().__init__()
        self.source_manifest = source_manifest
        self.target_manifest = target_manifest
        self.segmenter_spec = segmenter_spec
        self.discriminator_spec = discriminator_spec
        self.taps = taps
        self.schedule = dict(schedule or {})
        self.mode = mode
        self.seed = rc['default_seed'] if seed is None else seed
        self.out_dir = out_dir
        self.n_folds = n_folds
        self.target_fold = target_fold
        self.shifted_channel = shifted_channel
        self.adv_use_mask = adv_use_mask
        self.eval_labels = eval_labels
        self.val_samples = val_samples
        self.tile_extent = tile_extent
        self.probe_samples = probe_samples
        self.fresh_probe = fresh_probe
        self.probe_steps = probe_steps

    @classmethod
    def resolve(cls, config_path=None, schedule_overrides=None, **overrides):
        """
        Builds a configuration from defaults, a JSON file and explicit values

        Precedence is defaults < file < `overrides`. Relative paths in the
        file are resolved against the file's directory, relative paths in
        `overrides` against the working directory. Spec entries given as
        paths are read and inlined.

        Parameters
        ----------
        config_path : str
            JSON configuration file (optional).
        schedule_overrides : dict
            Schedule fields overriding those of the file.
        **overrides
            Field values; *None* values are ignored.

        Returns
        -------
        RunConfig
        """
        log.debug('@ experiment::RunConfig.resolve')
        data, problems = {}, []
        if config_path is not None:
            if not path.isfile(config_path):
                raise ConfigError('configuration file not found: {}'.format(config_path))
            data = read_json(config_path)
            if not isinstance(data, dict):
                raise ConfigError('configuration must be a JSON object: {}'.format(
                    config_path))
            data = _resolve_paths(data, path.dirname(path.abspath(config_path)), problems)

        explicit = {k: v for k, v in overrides.items() if v is not None}
        data.update(_resolve_paths(explicit, os.getcwd(), problems))
        schedule = dict(data.get('schedule') or {})
        schedule.update({k: v for k, v in (schedule_overrides or {}).items()
                         if v is not None})
        data['schedule'] = schedule

        if problems:
            raise ConfigError(problems)
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError(str(error).strip('"\''))

    def validate(self):
        problems = []
        arm = ARMS.get(self.mode)
        if arm is None:
            problems.append('unknown mode {!r} (expected one of {})'.format(
                self.mode, ', '.join(ARMS)))
        if self.source_manifest is None:
            problems.append('source_manifest is required')
        elif not path.isfile(self.source_manifest):
            problems.append('source manifest not found: {}'.format(self.source_manifest))
        if self.target_manifest is None:
            if arm is not None and arm.needs_target:
                problems.append('mode {!r} needs a target_manifest'.format(self.mode))
        elif not path.isfile(self.target_manifest):
            problems.append('target manifest not found: {}'.format(self.target_manifest))
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            problems.append('seed must be a non-negative integer')
        if self.n_folds < 2:
            problems.append('n_folds must be at least 2 (one fold is held out)')
        elif not 0 <= self.target_fold < self.n_folds:
            problems.append('target_fold must lie in [0, n_folds)')
        if self.shifted_channel < 0:
            problems.append('shifted_channel must be non-negative')
        if self.val_samples < 2 or self.val_samples % 2:
            problems.append('val_samples must be a positive even number')
        if self.probe_samples < 2 or self.probe_samples % 2:
            problems.append('probe_samples must be a positive even number')
        if self.probe_steps < 1:
            problems.append('probe_steps must be positive')

        segmenter_spec = None
        for field, spec_class in [('segmenter_spec', SegmenterSpec),
                                  ('discriminator_spec', DiscriminatorSpec)]:
            try:
                spec = spec_class.from_dict(getattr(self, field) or {})
            except (KeyError, TypeError, ValueError) as error:
                problems.append('{}: {}'.format(field, error))
                continue
            problems += ['{}: {}'.format(field, p) for p in spec.validate()]
            if field == 'segmenter_spec':
                segmenter_spec = spec
                if self.shifted_channel >= spec.in_channels:
                    problems.append('shifted_channel {} out of range for {} channels'.format(
                        self.shifted_channel, spec.in_channels))
        if (self.tile_extent is not None and segmenter_spec is not None
                and (self.tile_extent % 2 == 0
                     or self.tile_extent < segmenter_spec.normal_extent)):
            problems.append('tile_extent must be odd and at least the training extent')

        try:
            n_path = 8 if segmenter_spec is None else segmenter_spec.n_pathway_layers
            tap_set = TapSet.parse(self.taps, n_path)
            problems += ['taps: {}'.format(p) for p in tap_set.validate(segmenter_spec)]
        except ValueError as error:
            problems.append('taps: {}'.format(error))

        try:
            problems += ['schedule: {}'.format(p) for p in self.schedule_spec().validate()]
        except (KeyError, TypeError, ValueError) as error:
            problems.append('schedule: {}'.format(str(error).strip('"\'')))
        return problems

    def check(self):
        """Raises :py:class:`~damsel.tools.ConfigError` listing every problem"""
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    def schedule_spec(self):
        """The :py:class:`TrainSchedule` with this configuration's overrides"""
        return TrainSchedule.from_dict(self.schedule)

    @property
    def arm(self):
        return ARMS[self.mode]


class Experiment(object):
    """
    Data splits, networks and trainer of one configuration

    Parameters
    ----------
    config : RunConfig
        Configuration (validated here).
    """
    def __init__(self, config):
        log.debug('@ experiment::Experiment.__init__')
        self.config = config.check()
        self.arm = config.arm
        self.source = DatasetManifest.load(config.source_manifest)
        self.target = None
        if config.target_manifest is not None:
            self.target = DatasetManifest.load(config.target_manifest)

        problems = []
        source_ids = self.source.case_ids('S')
        if not source_ids:
            problems.append('source manifest has no S cases')
        elif len(source_ids) < config.n_folds:
            problems.append('{} source cases cannot be split into {} folds'.format(
                len(source_ids), config.n_folds))
        if self.target is not None:
            target_ids = self.target.case_ids('T')
            if len(target_ids) < config.n_folds:
                problems.append('{} target cases cannot be split into {} folds'.format(
                    len(target_ids), config.n_folds))
        if problems:
            raise ConfigError(problems)

        self.data_spec = SegmenterSpec.from_dict(config.segmenter_spec or {})
        self.discriminator_spec = DiscriminatorSpec.from_dict(config.discriminator_spec or {})
        self.tap_set = TapSet.parse(config.taps, self.data_spec.n_pathway_layers)
        self.schedule = config.schedule_spec()

        probe = self.source.load_case(self.source.case_ids('S')[0], labels=False)
        if probe.channels != self.data_spec.in_channels:
            raise ConfigError('segmenter in_channels {} does not match the {} channels of '
                              'the data'.format(self.data_spec.in_channels, probe.channels))

    @property
    def segmenter_spec(self):
        """Architecture actually trained (one extra channel for a split arm)"""
        if self.arm.channel != 'split':
            return self.data_spec
        data = self.data_spec.to_dict()
        data['in_channels'] += 1
        return SegmenterSpec.from_dict(data)

    @property
    def run_directory(self):
        return self.config.out_dir

    # -- Data ----------------------------------------------------------------
    def transform(self, case):
        """Applies the arm's treatment of the shifted channel to a case"""
        channel = self.config.shifted_channel
        if self.arm.channel == 'split':
            return split_domain_channel(case, channel)
        if self.arm.channel == 'fill':
            image = fill_missing_channel(case.image, channel)
            if isinstance(case, CaseRecord):
                return CaseRecord(image, case.domain, case.case_id, labels=case.labels,
                                  mask=case.mask)
            return UnlabelledCase(image, case.domain, case.case_id, mask=case.mask)
        return case

    def _folds(self, case_ids):
        folds = split_folds(case_ids, self.config.n_folds)
        heldout = folds[self.config.target_fold]
        train_ids = [cid for i, fold in enumerate(folds) if i != self.config.target_fold
                     for cid in fold]
        return train_ids, heldout

    def source_folds(self):
        """
        `(training ids, held-out ids)` of the source domain

        Source cases are split like the target ones (same `n_folds` and
        held-out fold index), so the held-out subjects of both domains are
        never seen during training.
        """
        return self._folds(self.source.case_ids('S'))

    def target_folds(self):
        """`(training ids, held-out ids)` of the target domain"""
        if self.target is None:
            return [], []
        return self._folds(self.target.case_ids('T'))

    def load(self, domain, split='all', *, labels=True):
        """
        Reads (and transforms) the cases of a domain split

        Parameters
        ----------
        domain : str
            'S' or 'T'.
        split : str
            'train', 'heldout' or 'all'.
        labels : bool
            Read label maps.
        """
        log.debug('@ experiment::Experiment.load')
        if domain == 'S':
            manifest = self.source
            train_ids, heldout = self.source_folds()
        else:
            if self.target is None:
                raise ConfigError('no target manifest configured')
            manifest = self.target
            train_ids, heldout = self.target_folds()
        ids = {'train': train_ids, 'heldout': heldout, 'all': train_ids + heldout}[split]
        return [self.transform(c) for c in manifest.load_cases(case_ids=ids, labels=labels)]

    def training_sets(self):
        """
        Case lists handed to the trainer

        In the `uda` arm target cases are only ever read without labels,
        except for the held-out fold when `eval_labels` is set.
        """
        log.debug('@ experiment::Experiment.training_sets')
        sets = {'seg_cases': [], 'adv_source': [], 'adv_target': [], 'val_source': [],
                'val_target': [], 'val_labelled': []}
        for domain in self.arm.seg_domains:
            sets['seg_cases'] += self.load(domain, 'train')
        if self.arm.adversarial:
            sets['adv_source'] = self.load('S', 'train', labels=False)
            sets['adv_target'] = self.load('T', 'train', labels=False)
        if self.target is not None:
            sets['val_source'] = self.load('S', 'heldout', labels=False)
            sets['val_target'] = self.load('T', 'heldout', labels=False)
            if not self.arm.adversarial or self.config.eval_labels:
                sets['val_labelled'] = self.load('T', 'heldout')
        return sets

    # -- Networks and training -------------------------------------------------
    def build_networks(self):
        """Freshly initialized segmenter (and discriminator for adversarial arms)"""
        segmenter = build_segmenter(self.segmenter_spec, self.config.seed)
        discriminator = None
        if self.arm.adversarial:
            discriminator = build_discriminator(
                self.discriminator_spec, tap_channels(self.segmenter_spec, self.tap_set),
                self.config.seed)
        return segmenter, discriminator

    def build_trainer(self):
        log.debug('@ experiment::Experiment.build_trainer')
        segmenter, discriminator = self.build_networks()
        sets = self.training_sets()
        return AdversarialTrainer(
            segmenter, sets['seg_cases'], self.schedule, discriminator=discriminator,
            tap_set=self.tap_set, adv_source=sets['adv_source'],
            adv_target=sets['adv_target'], seed=self.config.seed,
            val_source=sets['val_source'], val_target=sets['val_target'],
            val_labelled=sets['val_labelled'], run_directory=self.run_directory,
            adv_use_mask=self.config.adv_use_mask, val_samples=self.config.val_samples,
            metadata={'mode': self.config.mode,
                      'shifted_channel': self.config.shifted_channel})

    def write_run_record(self):
        """Writes the fully-resolved configuration to `run.json`"""
        filepath = path.join(self.run_directory, 'run.json')
        if is_master():
            os.makedirs(self.run_directory, exist_ok=True)
            write_json(filepath, self.config.to_dict())
        return filepath

    def train(self, resume=False):
        """
        Trains the arm, resuming from `trainer.pkl` if asked and present

        Returns
        -------
        AdversarialTrainer
        """
        log.debug('@ experiment::Experiment.train')
        state = path.join(self.run_directory, 'trainer.pkl')
        if resume and path.isfile(state):
            trainer = AdversarialTrainer.load(self.run_directory)
            log.info('Resuming {} after epoch {}'.format(self.config.mode, trainer.epoch))
        else:
            trainer = self.build_trainer()
        self.write_run_record()
        log.info('Training arm {!r}: {} B_seg cases, tap set {}, {} epochs'.format(
            self.config.mode, len(trainer.seg_cases), self.tap_set.describe(),
            self.schedule.total_epochs))
        trainer.train()
        return trainer

    # -- Evaluation --------------------------------------------------------------
    def evaluate(self, segmenter, domain='T', split='heldout', filename=None):
        """
        Dense inference and metrics on a split; writes the per-case CSV

        Returns
        -------
        pandas.DataFrame
            Per-case rows followed by the `mean` and `std` rows.
        """
        log.debug('@ experiment::Experiment.evaluate')
        cases = self.load(domain, split)
        if not cases:
            raise ValueError('No {} cases in split {!r}'.format(domain, split))
        metrics = evaluate_cases(segmenter, cases, self.config.tile_extent)
        table = metrics_table(metrics)
        log.info('{} {} ({} cases): {}'.format(domain, split, len(metrics),
                                               summarize(metrics)))
        if filename is None:
            filename = 'eval_{}_{}.csv'.format(domain, split)
        if is_master():
            os.makedirs(self.run_directory, exist_ok=True)
            table.to_csv(path.join(self.run_directory, filename), index=False)
        return table

    def probe(self, segmenter, discriminator=None, n_samples=None, fresh=None):
        """
        Domain-probe accuracy on the held-out folds of both domains

        A trained `discriminator` is used directly unless `fresh` is set
        (or there is none), in which case a new one is trained on the
        training folds of both domains.
        """
        log.debug('@ experiment::Experiment.probe')
        n_samples = self.config.probe_samples if n_samples is None else n_samples
        fresh = self.config.fresh_probe if fresh is None else fresh
        rng = derived_generator(self.config.seed, 'probe')
        source = self.load('S', 'heldout', labels=False)
        heldout = self.load('T', 'heldout', labels=False)
        if fresh or discriminator is None:
            return fresh_probe_accuracy(
                segmenter, self.load('S', 'train', labels=False),
                self.load('T', 'train', labels=False), source, heldout,
                n_samples, rng, self.tap_set, spec=self.discriminator_spec,
                steps=self.config.probe_steps, n_adv=self.schedule.n_adv,
                lr=self.schedule.lr_adv, momentum=self.schedule.momentum,
                seed=self.config.seed, use_mask=self.config.adv_use_mask)
        return probe_domain_accuracy(segmenter, discriminator, source, heldout, n_samples,
                                     rng, self.tap_set, use_mask=self.config.adv_use_mask)


# %% FUNCTION DEFINITIONS
def _resolve_paths(data, base, problems):
    # Makes path fields absolute and inlines spec files
    data = dict(data)
    for field in RunConfig.PATH_FIELDS:
        if isinstance(data.get(field), str):
            data[field] = path.normpath(path.join(base, data[field]))
    for field in RunConfig.SPEC_FIELDS:
        value = data.get(field)
        if isinstance(value, str):
            filepath = path.join(base, value)
            if path.isfile(filepath):
                data[field] = read_json(filepath)
            else:
                problems.append('{} file not found: {}'.format(field, filepath))
    return data


def load_networks(checkpoint_dir):
    """
    Rebuilds the networks stored in a checkpoint directory

    Parameters
    ----------
    checkpoint_dir : str
        A directory holding `segmenter/` (and possibly `discriminator/`)
        checkpoints, or a run directory (its final checkpoint is used).

    Returns
    -------
    segmenter : damsel.networks.Segmenter
    discriminator : damsel.networks.Discriminator or None
    manifest : dict
        The segmenter checkpoint manifest.
    """
    log.debug('@ experiment::load_networks')
    if not path.isdir(path.join(checkpoint_dir, 'segmenter')):
        checkpoint_dir = path.join(checkpoint_dir, 'checkpoints', 'final')
    values, manifest = load_checkpoint(path.join(checkpoint_dir, 'segmenter'))
    segmenter = build_segmenter(SegmenterSpec.from_dict(manifest['spec']))
    segmenter.load_parameter_values(values)

    discriminator = None
    adv_dir = path.join(checkpoint_dir, 'discriminator')
    if path.isdir(adv_dir):
        values, adv_manifest = load_checkpoint(adv_dir)
        discriminator = build_discriminator(DiscriminatorSpec.from_dict(adv_manifest['spec']),
                                            adv_manifest['tap_channels'])
        discriminator.load_parameter_values(values)
    return segmenter, discriminator, manifest


def train(config, resume=False):
    """
    Trains the experiment described by `config`

    Parameters
    ----------
    config : RunConfig
        Configuration.
    resume : bool
        Continue from the trainer state of the run directory if present.

    Returns
    -------
    trainer : AdversarialTrainer
        The trained trainer; `trainer.history` holds the per-epoch metrics.
    """
    return Experiment(config).train(resume=resume)
