"""Bounded archive of search traces used to rebuild the simplified space."""

import logging

import numpy as np
import numpy.typing as npt

from .constants import APP_NAME, DEDUP_TOL
from .errors import InvalidArgumentError
from .linalg import Matrix

logger = logging.getLogger(APP_NAME)


class Archive:
    """An insertion-ordered, deduplicated store with oldest-first eviction.

    Entries are solutions in the original space. A candidate within L∞
    distance `dedup_tol` of a stored entry is discarded (the stored entry
    keeps its position). When the capacity is exceeded the oldest entries
    are evicted, so only the latest traces survive.

    Attributes:
        capacity (int): Maximum number of entries.
        dedup_tol (float): Duplicate threshold.
    """

    def __init__(self, capacity: int, dim: int, dedup_tol: float = DEDUP_TOL):
        if capacity < 1:
            raise InvalidArgumentError(f"archive capacity must be >= 1, got {capacity}")
        if dedup_tol < 0:
            raise InvalidArgumentError(f"dedup_tol must be >= 0, got {dedup_tol}")
        self.capacity = capacity
        self.dedup_tol = dedup_tol
        self._data: Matrix = np.empty((0, dim))

    def __len__(self) -> int:
        return int(self._data.shape[0])

    @property
    def dim(self) -> int:
        return int(self._data.shape[1])

    @property
    def entries(self) -> Matrix:
        """A read-only N x dim view, oldest entry first."""
        view = self._data.view()
        view.flags.writeable = False
        return view

    def is_duplicate(self, x: npt.ArrayLike) -> bool:
        if not len(self):
            return False
        v = np.asarray(x, dtype=np.float64)
        return bool(np.any(np.max(np.abs(self._data - v), axis=1) <= self.dedup_tol))

    def insert(self, x: npt.ArrayLike) -> bool:
        """Adds one solution unless it duplicates a stored one.

        Returns:
            bool: True when the solution was stored.
        """
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.dim,):
            raise InvalidArgumentError(f"archive expects vectors of length {self.dim}")
        if self.is_duplicate(v):
            return False
        data = np.vstack([self._data, v])
        if data.shape[0] > self.capacity:
            data = data[data.shape[0] - self.capacity :]
        self._data = data
        return True

    def extend(self, rows: npt.ArrayLike) -> int:
        """Inserts rows in order; returns how many were stored."""
        return sum(self.insert(row) for row in np.asarray(rows, dtype=np.float64))
