# -*- coding utf-8 -*-
"""
Synthetic source/target datasets with a controllable domain shift.
"""

# %% IMPORTS
# Import core modules
from . import config
from .config import *

# Import base modules
from . import generator
from .generator import *

# All declaration
__all__ = ['config', 'generator']
__all__.extend(config.__all__)
__all__.extend(generator.__all__)
