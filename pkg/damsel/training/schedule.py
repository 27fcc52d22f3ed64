"""
Training schedule: adversarial weight ramp and learning-rate phases.

The adversarial weight alpha is 0 up to epoch `e1`, grows linearly to
`alpha_max` at epoch `e2` and stays there. The segmenter learning rate is
constant until `refine_start`, then decays exponentially; the
discriminator learning rate is constant.
"""

# %% IMPORTS
# DAMSEL imports
from damsel.tools import SpecBase

# All declaration
__all__ = ['TrainSchedule', 'alpha_at', 'lr_at']


# %% CLASS DEFINITIONS
class TrainSchedule(SpecBase):
    """
    Epoch-level training schedule

    Parameters
    ----------
    e1 : int
        Last epoch with alpha = 0.
    e2 : int
        First epoch with alpha = `alpha_max`.
    alpha_max : float
        Final adversarial weight.
    refine_start : int
        Epoch at which the segmenter learning rate starts decaying.
    total_epochs : int
        Number of epochs.
    lr_seg : float
        Segmenter base learning rate.
    lr_decay : float
        Per-epoch decay factor of the segmenter learning rate during
        refinement.
    lr_adv : float
        Discriminator learning rate (constant).
    momentum : float
        Momentum coefficient of both optimizers.
    batches_per_epoch : int
        Training steps per epoch.
    n_seg, n_adv : int
        Sizes of B_seg and B_adv.
    fg_fraction : float
        Share of foreground-centred segments in B_seg.
    retry_lr_factor : float
        Learning-rate factor applied when an epoch is re-run after a
        divergence.
    clip_grad_norm : float or None
        Global gradient-norm clipping (off by default).
    val_every : int
        Validation cadence in epochs (0 disables validation).
    checkpoint_every : int
        Checkpoint cadence in epochs (0: final checkpoint only).
    """
    FIELDS = ['e1', 'e2', 'alpha_max', 'refine_start', 'total_epochs', 'lr_seg',
              'lr_decay', 'lr_adv', 'momentum', 'batches_per_epoch', 'n_seg', 'n_adv',
              'fg_fraction', 'retry_lr_factor', 'clip_grad_norm', 'val_every',
              'checkpoint_every']

    def __init__(self, e1=10, e2=35, alpha_max=0.05, refine_start=43, total_epochs=50,
                 lr_seg=0.01, lr_decay=0.8, lr_adv=0.001, momentum=0.9,
                 batches_per_epoch=20, n_seg=10, n_adv=20, fg_fraction=0.5,
                 retry_lr_factor=0.5, clip_grad_norm=None, val_every=1,
                 checkpoint_every=0):
        super().__init__()
        self.e1 = e1
        self.e2 = e2
        self.alpha_max = alpha_max
        self.refine_start = refine_start
        self.total_epochs = total_epochs
        self.lr_seg = lr_seg
        self.lr_decay = lr_decay
        self.lr_adv = lr_adv
        self.momentum = momentum
        self.batches_per_epoch = batches_per_epoch
        self.n_seg = n_seg
        self.n_adv = n_adv
        self.fg_fraction = fg_fraction
        self.retry_lr_factor = retry_lr_factor
        self.clip_grad_norm = clip_grad_norm
        self.val_every = val_every
        self.checkpoint_every = checkpoint_every

    def validate(self):
        problems = []
        if not 0 <= self.e1 < self.e2 <= self.refine_start <= self.total_epochs:
            problems.append('epochs must satisfy 0 <= e1 < e2 <= refine_start <= total_epochs')
        if self.alpha_max < 0:
            problems.append('alpha_max must be non-negative')
        if self.lr_seg <= 0 or self.lr_adv <= 0:
            problems.append('learning rates must be positive')
        if not 0 < self.lr_decay <= 1:
            problems.append('lr_decay must lie in (0, 1]')
        if not 0 <= self.momentum < 1:
            problems.append('momentum must lie in [0, 1)')
        if self.batches_per_epoch < 1:
            problems.append('batches_per_epoch must be at least 1')
        if self.n_seg < 1:
            problems.append('n_seg must be at least 1')
        if self.n_adv < 2 or self.n_adv % 2:
            problems.append('n_adv must be a positive even number')
        if not 0 <= self.fg_fraction <= 1:
            problems.append('fg_fraction must lie in [0, 1]')
        if not 0 < self.retry_lr_factor < 1:
            problems.append('retry_lr_factor must lie in (0, 1)')
        if self.clip_grad_norm is not None and self.clip_grad_norm <= 0:
            problems.append('clip_grad_norm must be positive')
        if self.val_every < 0 or self.checkpoint_every < 0:
            problems.append('val_every and checkpoint_every must be non-negative')
        return problems

    def alpha_at(self, epoch):
        return alpha_at(self, epoch)

    def lr_at(self, epoch):
        return lr_at(self, epoch)


# %% FUNCTION DEFINITIONS
def alpha_at(schedule, epoch):
    """
    Adversarial weight at `epoch`

    Returns
    -------
    float
        0 for `epoch <= e1`, `alpha_max*(epoch - e1)/(e2 - e1)` in between
        and `alpha_max` from `e2` on.
    """
    if epoch < 0:
        raise ValueError('epoch must be non-negative')
    if epoch <= schedule.e1:
        return 0.0
    if epoch >= schedule.e2:
        return float(schedule.alpha_max)
    return schedule.alpha_max * (epoch - schedule.e1) / (schedule.e2 - schedule.e1)


def lr_at(schedule, epoch):
    """
    Learning rates at `epoch`

    Returns
    -------
    lr_seg, lr_adv : float
        The segmenter rate is `lr_seg` before `refine_start` and
        `lr_seg*lr_decay**(epoch - refine_start)` afterwards; the
        discriminator rate is constant.
    """
    if epoch < 0:
        raise ValueError('epoch must be non-negative')
    lr_seg = schedule.lr_seg
    if epoch >= schedule.refine_start:
        lr_seg = schedule.lr_seg * schedule.lr_decay**(epoch - schedule.refine_start)
    return lr_seg, schedule.lr_adv
