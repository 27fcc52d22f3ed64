"""
Timer class is designed for wall-clock time recording of training epochs
and evaluation runs (timings are logged, never written to result files).
"""

# %% IMPORTS
# Built-in imports
from contextlib import contextmanager
import time

# All declaration
__all__ = ['Timer']


# %% CLASS DEFINITIONS
class Timer(object):
    """
    Class designed for time recording.

    Simply provide an event name to the `tick` method to start recording.
    The `tock` method stops the recording and the `record` property allow
    one to access the recorded time. Alternatively, use the `timed`
    context manager.
    """
    def __init__(self):
        self._record = dict()
        self._running = set()

    @property
    def record(self):
        """
        Dictionary of recorded times using event name as keys.
        """
        return self._record

    @record.setter
    def record(self, record):
        raise NotImplementedError

    def tick(self, event):
        """
        Starts timing with a given event name.

        Parameters
        ----------
        event : str
            Event name (will be key of the record attribute).
        """
        self._record[event] = time.perf_counter()
        self._running.add(event)

    def tock(self, event):
        """
        Stops timing of the given event and returns the elapsed seconds.

        Parameters
        ----------
        event : str
            Event name (will be key of the record attribute).
        """
        if event not in self._running:
            raise KeyError('Timer event {!r} was never started'.format(event))
        self._running.discard(event)
        self._record[event] = time.perf_counter() - self._record[event]
        return self._record[event]

    @contextmanager
    def timed(self, event):
        """Context manager version of `tick`/`tock`"""
        self.tick(event)
        try:
            yield self
        finally:
            self.tock(event)
