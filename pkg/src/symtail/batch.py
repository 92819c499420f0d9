"""Symbol batches: the B x M matrices of real channel-symbol values that
every estimator and experiment in this package consumes or produces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NonFiniteInputError


@dataclass(frozen=True)
class SymbolBatch:
    """B samples of M real symbol dimensions, plus a free-form source tag.

    ``values`` is always a 2-D float64 array with B >= 1 rows and M >= 1
    columns, every entry finite.
    """

    values: np.ndarray
    meta: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise InputError(f"symbol batch must be 2-D (B x M), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"symbol batch needs B >= 1 and M >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInputError("symbol batch contains non-finite entries")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.size

    def flat(self) -> np.ndarray:
        """All B*M scalar entries as a 1-D view."""
        return self.values.reshape(-1)
