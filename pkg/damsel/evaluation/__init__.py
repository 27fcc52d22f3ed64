# -*- coding utf-8 -*-
"""
Dense inference, segmentation metrics and the domain-divergence probe.
"""

# %% IMPORTS
# Import core modules
from . import inference
from .inference import *

# Import base modules
from . import metrics, probe
from .metrics import *
from .probe import *

# All declaration
__all__ = ['inference', 'metrics', 'probe']
__all__.extend(inference.__all__)
__all__.extend(metrics.__all__)
__all__.extend(probe.__all__)
