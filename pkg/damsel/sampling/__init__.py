# -*- coding utf-8 -*-
"""
Cases, normalization, segment extraction and batch construction.
"""

# %% IMPORTS
# Import core modules
from . import cases
from .cases import *

# Import base modules
from . import batches, normalization, segments
from .batches import *
from .normalization import *
from .segments import *

# All declaration
__all__ = ['batches', 'cases', 'normalization', 'segments']
__all__.extend(batches.__all__)
__all__.extend(cases.__all__)
__all__.extend(normalization.__all__)
__all__.extend(segments.__all__)
