"""Numeric tolerances and runtime settings."""

import dataclasses
import os
from typing import Any

THREADS_ENV = "QDEF_THREADS"


@dataclasses.dataclass(frozen=True)
class Tolerances:
    """Named tolerances used to make decisions (not acceptance thresholds).

    Defaults are sized for unit-scale data in double precision.
    """

    sing: float = 1e-6
    deg: float = 1e-8
    residual: float = 1e-10
    on_quadric: float = 1e-8
    tangency: float = 1e-8
    drift: float = 1e-4
    blowup: float = 1e6
    first_row: float = 1e-4
    condition: float = 1e8
    arclength: float = 1e-8
    conflict: float = 1e-7

    def replace(self, **overrides: Any) -> "Tolerances":
        """A copy with some tolerances overridden, e.g. `tol.replace(sing=1e-8)`."""
        names = {field.name for field in dataclasses.fields(self)}
        for name, value in overrides.items():
            if name not in names:
                raise ValueError(f"Unknown tolerance {name!r}, expected one of {names}")
            if not value >= 0:
                raise ValueError(f"Tolerance {name}={value!r} must be non-negative")
        return dataclasses.replace(self, **overrides)


DEFAULT = Tolerances()


def threads() -> int:
    """Worker count cap, from the environment variable QDEF_THREADS (default 1)."""
    value = os.environ.get(THREADS_ENV)
    if value is None or value == "":
        return 1
    try:
        count = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV}={value!r} is not an integer") from None
    if count < 1:
        raise ValueError(f"{THREADS_ENV}={count} must be positive")
    return count
