# -*- coding utf-8 -*-
"""
Adversarial training: schedule, trainer and experiment arms.
"""

# %% IMPORTS
# Import core modules
from . import schedule
from .schedule import *

# Import base modules
from . import experiment, trainer
from .experiment import *
from .trainer import *

# All declaration
__all__ = ['experiment', 'schedule', 'trainer']
__all__.extend(experiment.__all__)
__all__.extend(schedule.__all__)
__all__.extend(trainer.__all__)
