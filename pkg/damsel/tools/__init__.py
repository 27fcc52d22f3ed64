# -*- coding utf-8 -*-

# %% IMPORTS
# Import core modules
from . import config
from .config import *

# Import base modules
from . import class_tools, io, mpi_helper, random_seed, timer
from .class_tools import *
from .io import *
from .mpi_helper import *
from .random_seed import *
from .timer import *

# All declaration
__all__ = ['class_tools', 'config', 'io', 'mpi_helper', 'random_seed',
           'timer']
__all__.extend(class_tools.__all__)
__all__.extend(config.__all__)
__all__.extend(io.__all__)
__all__.extend(mpi_helper.__all__)
__all__.extend(random_seed.__all__)
__all__.extend(timer.__all__)
