"""
DAMSEL Version
==============
Stores the different versions of the *DAMSEL* package.

"""


# %% VERSIONS
# Default/Latest/Current version
__version__ = '0.3.0'
