"""Exceptions and small input-validation helpers shared by every module."""

from fractions import Fraction
from numbers import Rational

import numpy as np

PROB_TOL = 1e-12
RENORM_TOL = 1e-9


class ContestDesignError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(ContestDesignError, ValueError):
    """Objects that must share a grid do not, or a point is not on the grid."""


class DomainError(ContestDesignError, ValueError):
    """A scalar argument is outside its admissible range."""


class CapacityError(ContestDesignError, RuntimeError):
    """An exhaustive routine was asked to run beyond its size cap."""


class InfeasibleError(ContestDesignError, ValueError):
    """The requested optimisation problem has no feasible point."""


def as_numeric(values, ndim=1):
    """Return ``values`` as a read-only array.

    Any :class:`fractions.Fraction` in the input switches the whole array to
    exact mode (``dtype=object`` holding Fractions); otherwise float64.
    """
    raw = np.asarray(values, dtype=object if _has_fraction(values) else None)
    if raw.dtype == object:
        arr = np.empty(raw.shape, dtype=object)
        flat = arr.reshape(-1)
        for i, v in enumerate(raw.reshape(-1)):
            flat[i] = Fraction(v)
    else:
        arr = np.array(raw, dtype=float)
    if arr.ndim != ndim:
        raise StructuralError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _has_fraction(values):
    if isinstance(values, np.ndarray):
        return values.dtype == object and any(isinstance(v, Fraction) for v in values.reshape(-1))
    if isinstance(values, (list, tuple)):
        return any(_has_fraction(v) for v in values)
    return isinstance(values, Fraction)


def is_exact(arr):
    return isinstance(arr, np.ndarray) and arr.dtype == object


def tolerance(*arrays, tol=PROB_TOL):
    """Zero when every array is exact, ``tol`` otherwise."""
    return 0 if all(is_exact(a) for a in arrays) else tol


def to_exact(value):
    """Exact Fraction for a scalar (binary floats convert without loss)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    return Fraction(float(value))


def exact_array(values):
    arr = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        arr[i] = to_exact(v)
    return arr


def scalar_like(value, reference):
    """Cast ``value`` to Fraction when ``reference`` is exact, else to float."""
    return to_exact(value) if is_exact(reference) else float(value)


def check_budget(k, name="k"):
    if isinstance(k, bool) or not isinstance(k, (int, float, Fraction, np.floating)):
        raise DomainError(f"{name} must be a real number, got {k!r}")
    if not 0 < k < 1:
        raise DomainError(f"{name} must lie in (0, 1), got {k}")
    return k


def check_probability_vector(mass, *, name="mass"):
    """Validate nonnegative masses summing to one.

    Float input within ``RENORM_TOL`` of one is renormalised; anything further
    off is rejected. Exact input must sum to exactly one.
    """
    mass = as_numeric(mass)
    if mass.size == 0:
        raise DomainError(f"{name} is empty")
    if any(m < 0 for m in mass):
        raise DomainError(f"{name} has negative entries")
    total = mass.sum()
    if is_exact(mass):
        if total != 1:
            raise DomainError(f"{name} sums to {total}, not 1")
        return mass
    if not np.all(np.isfinite(mass)):
        raise DomainError(f"{name} has non-finite entries")
    if abs(total - 1.0) > RENORM_TOL:
        raise DomainError(f"{name} sums to {total!r}; refusing to renormalise")
    if abs(total - 1.0) > PROB_TOL:
        mass = mass / total
        mass.setflags(write=False)
    return mass
