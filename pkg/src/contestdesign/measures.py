"""Finite effort/performance grids, probability measures on them, and noise kernels.

Everything here is atomic: a "density" is a fine grid carrying cell masses, so
every integral in the package is an exact finite sum.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from ._validation import (
    PROB_TOL,
    RENORM_TOL,
    DomainError,
    StructuralError,
    as_numeric,
    check_probability_vector,
    is_exact,
)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """A finite poset standing in for a compact effort set.

    ``kind == "line"``: strictly ascending reals, totally ordered.
    ``kind == "plane"``: the full ``len(xs) x len(ys)`` lattice with the
    product order; point ``(xs[a], ys[b])`` has flat index ``a * len(ys) + b``.
    """

    kind: str
    axes: tuple

    def __post_init__(self):
        if self.kind not in ("line", "plane"):
            raise StructuralError(f"unknown domain kind {self.kind!r}")
        expected = 1 if self.kind == "line" else 2
        if len(self.axes) != expected:
            raise StructuralError(f"{self.kind} domain needs {expected} axis/axes")
        for axis in self.axes:
            if axis.size == 0:
                raise StructuralError("empty grid axis")
            if np.any(np.diff(axis.astype(float)) <= 0):
                raise StructuralError("grid axis must be strictly ascending")

    @classmethod
    def line(cls, points):
        return cls("line", (as_numeric(points),))

    @classmethod
    def linspace(cls, start, stop, num):
        return cls.line(np.linspace(start, stop, num))

    @classmethod
    def plane(cls, xs, ys):
        return cls("plane", (as_numeric(xs), as_numeric(ys)))

    @property
    def shape(self):
        return tuple(axis.size for axis in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def __len__(self):
        return self.size

    @cached_property
    def points(self):
        """1D array of coordinates (line) or ``(n, 2)`` array of pairs (plane)."""
        if self.kind == "line":
            return self.axes[0]
        xs, ys = self.axes
        pts = np.array([(x, y) for x in xs for y in ys], dtype=xs.dtype)
        pts.setflags(write=False)
        return pts

    @cached_property
    def _coords(self):
        if self.kind == "line":
            return np.arange(self.size)[:, None]
        nx, ny = self.shape
        return np.array([(a, b) for a in range(nx) for b in range(ny)])

    def leq(self, i, j):
        """``point i <= point j`` in the product order."""
        return bool(np.all(self._coords[i] <= self._coords[j]))

    @cached_property
    def order_matrix(self):
        c = self._coords
        mat = np.all(c[:, None, :] <= c[None, :, :], axis=2)
        mat.setflags(write=False)
        return mat

    @cached_property
    def covering_pairs(self):
        """Pairs ``(i, j)`` where ``j`` covers ``i``."""
        if self.kind == "line":
            return tuple((i, i + 1) for i in range(self.size - 1))
        nx, ny = self.shape
        pairs = []
        for a in range(nx):
            for b in range(ny):
                i = a * ny + b
                if a + 1 < nx:
                    pairs.append((i, i + ny))
                if b + 1 < ny:
                    pairs.append((i, i + 1))
        return tuple(sorted(pairs))

    @property
    def minimal(self):
        return (0,)

    @property
    def maximal(self):
        return (self.size - 1,)

    def index(self, point):
        """Flat index of ``point``; raises :class:`StructuralError` if absent."""
        if self.kind == "line":
            pts = self.points
            hits = np.flatnonzero(np.isclose(pts.astype(float), float(point), rtol=0, atol=1e-12))
            if hits.size == 0:
                raise StructuralError(f"point {point!r} is not on the grid")
            return int(hits[0])
        x, y = point
        xs, ys = self.axes
        ax = np.flatnonzero(np.isclose(xs.astype(float), float(x), rtol=0, atol=1e-12))
        ay = np.flatnonzero(np.isclose(ys.astype(float), float(y), rtol=0, atol=1e-12))
        if ax.size == 0 or ay.size == 0:
            raise StructuralError(f"point {point!r} is not on the grid")
        return int(ax[0] * ys.size + ay[0])

    def is_up_set(self, members):
        members = set(members)
        return all(j in members for i, j in self.covering_pairs if i in members)

    def up_closure(self, generators):
        """Smallest up-set containing ``generators``."""
        gens = list(generators)
        if not gens:
            return frozenset()
        mask = self.order_matrix[gens].any(axis=0)
        return frozenset(int(i) for i in np.flatnonzero(mask))

    def min_antichain(self, up_set):
        """Minimal elements of ``up_set`` (its canonical generators)."""
        members = sorted(up_set)
        order = self.order_matrix
        return tuple(
            i for i in members if not any(order[j, i] and j != i for j in members)
        )

    def same_as(self, other):
        if self is other:
            return True
        return (
            isinstance(other, GridDomain)
            and self.kind == other.kind
            and self.shape == other.shape
            and all(
                np.allclose(a.astype(float), b.astype(float), rtol=0, atol=1e-12)
                for a, b in zip(self.axes, other.axes)
            )
        )

    def to_dict(self):
        return {"kind": self.kind, "axes": [[float(v) for v in axis] for axis in self.axes]}


def require_same_domain(a, b):
    if not a.same_as(b):
        raise StructuralError("objects live on different grids")


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability masses on the points of a :class:`GridDomain`."""

    domain: GridDomain
    mass: np.ndarray

    def __post_init__(self):
        mass = check_probability_vector(self.mass)
        if mass.size != self.domain.size:
            raise StructuralError(
                f"{mass.size} masses for a domain of {self.domain.size} points"
            )
        object.__setattr__(self, "mass", mass)

    @classmethod
    def uniform(cls, domain, exact=False):
        n = domain.size
        mass = [Fraction(1, n)] * n if exact else np.full(n, 1.0 / n)
        return cls(domain, mass)

    @classmethod
    def dirac(cls, domain, point):
        return cls.atoms(domain, [point], [1.0])

    @classmethod
    def atoms(cls, domain, support, weights):
        """Point masses ``weights`` at the grid points ``support``."""
        if len(support) != len(weights):
            raise StructuralError("support and weights differ in length")
        exact = any(isinstance(w, Fraction) for w in weights)
        mass = [Fraction(0)] * domain.size if exact else [0.0] * domain.size
        for point, w in zip(support, weights):
            mass[domain.index(point)] += w
        return cls(domain, mass)

    @classmethod
    def from_density(cls, domain, density):
        """Cell masses proportional to ``density`` sampled at the grid points.

        Unlike the plain constructor this always normalises, since sampled
        densities are only known up to discretisation error.
        """
        if callable(density):
            values = np.asarray(density(domain.points), dtype=float)
        else:
            values = np.asarray(density, dtype=float)
        if values.shape != (domain.size,) or np.any(values < 0) or values.sum() <= 0:
            raise DomainError("density samples must be nonnegative with positive total")
        return cls(domain, values / values.sum())

    @property
    def exact(self):
        return is_exact(self.mass)

    @property
    def total(self):
        return self.mass.sum()

    @property
    def support(self):
        return tuple(int(i) for i in np.flatnonzero(self.mass > 0))

    def tail_masses(self):
        """``tail[i]`` = mass of points with index >= i (1D), length ``n + 1``."""
        return _suffix_sums(self.mass)

    def mixture(self, other, weight):
        """``(1 - weight) * self + weight * other``."""
        require_same_domain(self.domain, other.domain)
        return GridMeasure(self.domain, (1 - weight) * self.mass + weight * other.mass)

    def total_variation(self, other):
        require_same_domain(self.domain, other.domain)
        return abs(self.mass - other.mass).sum() / 2


def _suffix_sums(values):
    out = np.zeros(values.size + 1, dtype=values.dtype)
    if is_exact(values):
        out[-1] = Fraction(0)
    out[:-1] = np.cumsum(values[::-1])[::-1]
    return out


def _values_of(f, domain):
    """Per-point values from an array or anything carrying ``.values``."""
    if hasattr(f, "values") and hasattr(f, "domain"):
        require_same_domain(f.domain, domain)
        return f.values
    if callable(f):
        return as_numeric(f(domain.points))
    if np.isscalar(f) or isinstance(f, Fraction):
        return as_numeric([f] * domain.size)
    vals = as_numeric(f)
    if vals.size != domain.size:
        raise StructuralError(f"{vals.size} values for a domain of {domain.size} points")
    return vals


def integrate(f, measure):
    """Sum of ``f_i * mass_i`` over the grid."""
    vals = _values_of(f, measure.domain)
    return (vals * measure.mass).sum()


def upper_integral(f, measure, t):
    """Sum of ``f_i * mass_i`` over the points ``x_i >= t`` of a 1D grid."""
    if measure.domain.kind != "line":
        raise StructuralError("upper integrals are defined on 1D grids only")
    start = measure.domain.index(t)
    vals = _values_of(f, measure.domain)
    return (vals[start:] * measure.mass[start:]).sum()


def upper_integrals(f, measure):
    """All upper integrals at once, one per grid point."""
    if measure.domain.kind != "line":
        raise StructuralError("upper integrals are defined on 1D grids only")
    vals = _values_of(f, measure.domain)
    return _suffix_sums(vals * measure.mass)[:-1]


@dataclass(frozen=True, eq=False)
class NoiseKernel:
    """Row-stochastic map from effort points to performance distributions.

    Rows must be first-order stochastically increasing in effort so that every
    monotone allocation rule composes to a monotone win probability.
    """

    effort: GridDomain
    performance: GridDomain
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.effort.kind != "line" or self.performance.kind != "line":
            raise StructuralError("noise kernels map 1D grids to 1D grids")
        rows = np.array(self.rows, dtype=float)
        if rows.shape != (self.effort.size, self.performance.size):
            raise StructuralError(f"kernel shape {rows.shape} does not match the grids")
        if np.any(rows < 0):
            raise DomainError("kernel rows must be nonnegative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > RENORM_TOL):
            raise DomainError("kernel rows must sum to 1")
        rows = rows / sums[:, None]
        tails = np.cumsum(rows[:, ::-1], axis=1)[:, ::-1]
        if np.any(np.diff(tails, axis=0) < -PROB_TOL):
            raise DomainError("kernel rows are not stochastically increasing in effort")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def identity(cls, domain):
        return cls(domain, domain, np.eye(domain.size))

    @classmethod
    def logistic(cls, effort, performance=None, scale=0.1):
        """Performance = effort + logistic noise, binned onto ``performance``.

        Bin edges are the midpoints between performance points; the outer bins
        absorb the tails.
        """
        if scale <= 0:
            raise DomainError("logistic scale must be positive")
        performance = effort if performance is None else performance
        s = performance.points.astype(float)
        edges = np.concatenate(([-np.inf], (s[1:] + s[:-1]) / 2, [np.inf]))
        x = effort.points.astype(float)[:, None]
        z = (edges[None, :] - x) / scale
        cdf = 0.5 * (1.0 + np.tanh(z / 2.0))
        return cls(effort, performance, np.diff(cdf, axis=1))

    def row(self, effort_index):
        return self.rows[effort_index]

    def compose(self, values):
        """Expected value of per-performance ``values`` for each effort."""
        return self.rows @ np.asarray(values, dtype=float)


def pushforward(measure, kernel):
    """Distribution of performance when efforts follow ``measure``."""
    require_same_domain(measure.domain, kernel.effort)
    nu = measure.mass.astype(float) @ kernel.rows
    return GridMeasure(kernel.performance, nu)
