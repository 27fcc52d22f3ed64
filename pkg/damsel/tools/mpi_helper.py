"""
This MPI helper module splits lists of independent work items (cases to be
generated, inferred or scored) among MPI processes and gathers the
results back in their original order.

With a single process every helper reduces to the identity. If mpi4py
cannot be imported (no MPI installation) the module runs as a single
process.

For the testing suits, please turn to "damsel/tests/test_tools.py".
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
from e13tools import add_to_all
try:
    from mpi4py import MPI
except ImportError:
    MPI = None

# DAMSEL imports
from damsel.tools.config import rc

# GLOBALS
if MPI is None:
    log.info('mpi4py unavailable, running as a single process')
    comm, mpisize, mpirank = None, 1, 0
else:
    comm = MPI.COMM_WORLD
    mpisize = comm.Get_size()
    mpirank = comm.Get_rank()
has_mpi = MPI is not None

# All declaration
__all__ = ['comm', 'mpisize', 'mpirank', 'has_mpi']


# %% FUNCTION DEFINITIONS
def _active_size():
    return mpisize if rc['distribute_cases'] else 1


def _active_rank():
    return mpirank if rc['distribute_cases'] else 0


@add_to_all
def mpi_arrange(size):
    """
    With known global size, number of mpi nodes, and current rank,
    returns the begin and end index for distributing the global size.

    Differently from a plain division, ranks may receive an empty
    interval when there are fewer items than processes.

    Parameters
    ----------
    size : int
        The total number of items to be distributed.

    Returns
    -------
    begin, end : int
        Slice [begin, end) of the items handled by the current rank.
    """
    log.debug('@ mpi_helper::mpi_arrange')
    if size < 0:
        raise ValueError('cannot distribute a negative number of items')
    nproc, rank = _active_size(), _active_rank()
    ave, res = divmod(size, nproc)
    begin = rank*ave + min(rank, res)
    end = begin + ave + int(rank < res)
    return begin, end


@add_to_all
def mpi_scatter_items(items):
    """
    Returns the contiguous block of `items` assigned to the current rank.
    """
    log.debug('@ mpi_helper::mpi_scatter_items')
    begin, end = mpi_arrange(len(items))
    return list(items)[begin:end]


@add_to_all
def mpi_gather(local_items):
    """
    Concatenates the per-rank lists of results, in rank order, on every
    process (so that the global order equals the original item order when
    the items were distributed with :py:func:`mpi_scatter_items`).

    Parameters
    ----------
    local_items : list
        Results computed by the current rank.

    Returns
    -------
    items : list
        All results.
    """
    log.debug('@ mpi_helper::mpi_gather')
    if _active_size() == 1:
        return list(local_items)
    gathered = comm.allgather(list(local_items))
    return [item for block in gathered for item in block]


@add_to_all
def mpi_barrier():
    """Synchronizes the processes (no-op for a single process)"""
    if _active_size() > 1:
        comm.Barrier()


@add_to_all
def is_master():
    """`True` on the process responsible for writing shared files"""
    return _active_rank() == 0
