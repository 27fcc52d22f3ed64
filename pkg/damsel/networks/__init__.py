# -*- coding utf-8 -*-
"""
Segmenter, domain discriminator and the tap assembly connecting them.
"""

# %% IMPORTS
# Import core modules
from . import specs
from .specs import *

# Import base modules
from . import discriminator, layers, segmenter, taps
from .discriminator import *
from .layers import *
from .segmenter import *
from .taps import *

# All declaration
__all__ = ['discriminator', 'layers', 'segmenter', 'specs', 'taps']
__all__.extend(discriminator.__all__)
__all__.extend(layers.__all__)
__all__.extend(segmenter.__all__)
__all__.extend(specs.__all__)
__all__.extend(taps.__all__)
