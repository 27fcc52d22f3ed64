# -*- coding utf-8 -*-
"""
Minimal dense-tensor engine with reverse-mode automatic differentiation.
"""

# %% IMPORTS
# Import core modules
from . import tensor
from .tensor import *

# Import base modules
from . import gradcheck, ops, optimizers
from .gradcheck import *
from .ops import *
from .optimizers import *

# All declaration
__all__ = ['gradcheck', 'ops', 'optimizers', 'tensor']
__all__.extend(gradcheck.__all__)
__all__.extend(ops.__all__)
__all__.extend(optimizers.__all__)
__all__.extend(tensor.__all__)
