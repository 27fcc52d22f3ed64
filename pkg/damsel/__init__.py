# %% IMPORTS
# Version import
from .__version__ import __version__

# Global configuration and settings
from .tools.config import rc, ConfigError

# Import subpackages
from . import (
    autodiff, evaluation, networks, sampling, synthdata, tools, training)

# All declaration
__all__ = ['autodiff', 'evaluation', 'networks', 'sampling', 'synthdata',
           'tools', 'training', 'rc', 'ConfigError']
