"""Ursell functions of Wilson loops in Z2 lattice gauge theory: exact enumeration,
Monte Carlo, low-temperature cluster expansion and loop-decomposition searches."""

import os

# numba's TBB layer is too old in common images; pick a layer that needs no extra library
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import CapacityError, DegenerateInputError, DomainError  # noqa: E402

__version__ = "0.1.0"

__all__ = ["CapacityError", "DegenerateInputError", "DomainError", "__version__"]
