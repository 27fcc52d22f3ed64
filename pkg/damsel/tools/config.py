"""

DAMSEL global configuration
---------------------------

The default behaviour of some aspects of DAMSEL can be set using
global `rc` configuration variables.

These can be accessed and modified using the
:py:data:`damsel.rc <damsel.tools.config.rc>` dictionary or setting the
corresponding environment variables (named 'DAMSEL\_'+RC_VAR_NAME).

For example, to run every new tensor in double precision one can either do::

    import damsel
    damsel.rc['default_dtype'] = 'float64'

or, alternatively, set this as an environment variable
before the execution of the script::

    export DAMSEL_DEFAULT_DTYPE='float64'

The following list describes all the available global settings variables.

DAMSEL rc variables
    default_dtype
        Storage precision of newly created tensors ('float32' or 'float64').
        Gradient checks temporarily switch this through
        :py:func:`damsel.autodiff.double_precision`.
    check_finite
        If `True`, every differentiable operation verifies that its output
        is finite and raises :py:class:`damsel.autodiff.NonFiniteError`
        otherwise.
    checkpoint_format_version
        Format version written to (and expected from) checkpoint manifests.
    default_seed
        Master seed used when an experiment does not specify one.
    distribute_cases
        If `True` and more than one MPI process is running, evaluation and
        synthetic dataset generation split the cases among processes.
"""

# %% IMPORTS
# Built-in imports
import os

# All declaration
__all__ = ['rc', 'ConfigError']

# Sets default values of configuration parameters
rc = {'default_dtype': 'float32',
      'check_finite': True,
      'checkpoint_format_version': 1,
      'default_seed': 1,
      'distribute_cases': True}


# %% CLASS DEFINITIONS
class ConfigError(ValueError):
    """
    Invalid experiment configuration

    Parameters
    ----------
    problems : list of str
        Every problem found (they are reported together).
    """
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__('Invalid configuration: ' + '; '.join(self.problems))


# %% FUNCTION DEFINITIONS
def _str_to_python(v):
    """
    Attempts to convert a string to a python basic type
    """
    # Tries to convert to a number
    try:
        v = float(v)
        # Converts to integer if needed
        if v.is_integer():
            v = int(v)
    except ValueError:
        pass

    # Converts to boolean if needed
    if v in ('True', 'T', 'TRUE'):
        v = True
    elif v in ('False', 'F', 'FALSE'):
        v = False

    return v


def read_rc_from_env():
    """
    Updates the rc configuration dictionary using current
    environment variables
    """
    global rc
    for var in rc:
        env_var = 'DAMSEL_'+var.upper()

        try:
            rc[var] = _str_to_python(os.environ[env_var])
        except KeyError:
            pass


read_rc_from_env()
