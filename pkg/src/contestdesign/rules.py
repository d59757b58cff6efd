"""Monotone allocation rules, the budget, majorization and two-step rules."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import (
    PROB_TOL,
    DomainError,
    StructuralError,
    as_numeric,
    check_budget,
    is_exact,
    scalar_like,
    tolerance,
)
from .measures import GridDomain, integrate, require_same_domain, upper_integrals

MAJORIZATION_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class AllocationRule:
    """Win probability per grid point, non-decreasing in the grid order."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        vals = as_numeric(self.values)
        if vals.size != self.domain.size:
            raise StructuralError(f"{vals.size} values for {self.domain.size} points")
        tol = tolerance(vals)
        if any(v < -tol or v > 1 + tol for v in vals):
            raise DomainError("allocation values must lie in [0, 1]")
        for i, j in self.domain.covering_pairs:
            if vals[i] > vals[j] + tol:
                raise DomainError(f"allocation rule is not monotone between points {i} and {j}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, domain, level):
        return cls(domain, [level] * domain.size)

    @property
    def exact(self):
        return is_exact(self.values)

    def __call__(self, index):
        return self.values[index]

    def level_set(self, level):
        """Indices where the rule is at least ``level``."""
        return frozenset(int(i) for i in np.flatnonzero(self.values >= level))

    def to_dict(self):
        return {"values": [float(v) for v in self.values]}


def budget(rule, measure):
    """Total mass of winners under ``rule`` when efforts follow ``measure``."""
    require_same_domain(rule.domain, measure.domain)
    return integrate(rule, measure)


def majorizes(f, g, measure):
    """True iff every upper-tail integral of ``f`` weakly dominates that of ``g``."""
    if measure.domain.kind != "line":
        raise StructuralError("majorization is only defined on 1D grids")
    require_same_domain(f.domain, measure.domain)
    require_same_domain(g.domain, measure.domain)
    slack = 0 if f.exact and g.exact and measure.exact else MAJORIZATION_SLACK
    return bool(np.all(upper_integrals(f, measure) >= upper_integrals(g, measure) - slack))


@dataclass(frozen=True, eq=False)
class TwoStepRule:
    """``lam * 1[A1] + (1 - lam) * 1[A2]`` for nested up-sets ``A1 <= A2``.

    Up-sets are stored by their minimal antichains. The rule pays 1 on ``A1``,
    ``1 - lam`` (the ``level``) on ``A2 - A1`` and 0 elsewhere.
    """

    domain: GridDomain
    a1_min: tuple
    a2_min: tuple
    lam: object

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise DomainError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.a1 <= self.a2:
            raise DomainError("A1 must be contained in A2")

    @classmethod
    def from_up_sets(cls, domain, a1, a2, lam):
        for name, s in (("A1", a1), ("A2", a2)):
            if not domain.is_up_set(s):
                raise DomainError(f"{name} is not an up-set")
        return cls(domain, domain.min_antichain(a1), domain.min_antichain(a2), lam)

    @classmethod
    def from_indices(cls, domain, lower, upper, level):
        """1D rule: ``level`` on indices ``[lower, upper)``, 1 from ``upper`` on.

        ``lower == domain.size`` (or ``upper``) encodes an empty up-set.
        """
        _require_line(domain)
        n = domain.size
        if not 0 <= lower <= upper <= n:
            raise DomainError(f"need 0 <= lower <= upper <= n, got {lower}, {upper}")
        if lower == upper:
            return cls(domain, _suffix_gen(upper, n), _suffix_gen(upper, n), 0 * level)
        return cls(domain, _suffix_gen(upper, n), _suffix_gen(lower, n), 1 - level)

    @classmethod
    def from_thresholds(cls, domain, x_low, x_high, alpha):
        """1D rule ``0`` below ``x_low``, ``alpha`` on ``[x_low, x_high]``, 1 above ``x_high``."""
        _require_line(domain)
        if x_low > x_high:
            raise DomainError("x_low must not exceed x_high")
        pts = domain.points.astype(float)
        lower = int(np.searchsorted(pts, float(x_low) - 1e-12, side="left"))
        upper = int(np.searchsorted(pts, float(x_high) + 1e-12, side="right"))
        return cls.from_indices(domain, lower, upper, alpha)

    @property
    def a1(self):
        return self.domain.up_closure(self.a1_min)

    @property
    def a2(self):
        return self.domain.up_closure(self.a2_min)

    @property
    def level(self):
        """Value paid on ``A2 - A1``."""
        return 1 - self.lam

    @property
    def lower_index(self):
        _require_line(self.domain)
        return self.a2_min[0] if self.a2_min else self.domain.size

    @property
    def upper_index(self):
        _require_line(self.domain)
        return self.a1_min[0] if self.a1_min else self.domain.size

    @property
    def x_low(self):
        """First grid point paid a positive amount (``None`` if none is)."""
        i = self.lower_index
        return None if i == self.domain.size else self.domain.points[i]

    @property
    def x_high(self):
        """First grid point paid 1 (``None`` if none is)."""
        i = self.upper_index
        return None if i == self.domain.size else self.domain.points[i]

    def to_dict(self):
        out = {
            "A1_min_antichain": _json_points(self.domain, self.a1_min),
            "A2_min_antichain": _json_points(self.domain, self.a2_min),
            "lambda": float(self.lam),
        }
        if self.domain.kind == "line":
            x_low, x_high = self.x_low, self.x_high
            out["thresholds"] = {
                "x_low": None if x_low is None else float(x_low),
                "x_high": None if x_high is None else float(x_high),
            }
            out["alpha"] = float(self.level) if self.a1 != self.a2 else None
        return out


def _json_points(domain, indices):
    pts = domain.points
    if domain.kind == "line":
        return [float(pts[i]) for i in indices]
    return [[float(c) for c in pts[i]] for i in indices]


def _suffix_gen(start, n):
    return () if start >= n else (start,)


def _require_line(domain):
    if domain.kind != "line":
        raise StructuralError("this operation needs a 1D grid")


def materialize(rule):
    """Point-wise form of a :class:`TwoStepRule`."""
    n = rule.domain.size
    a1, a2 = rule.a1, rule.a2
    lam = rule.lam
    exact = isinstance(lam, Fraction)
    values = np.empty(n, dtype=object) if exact else np.zeros(n)
    for i in range(n):
        v = (lam if i in a1 else 0) + ((1 - lam) if i in a2 else 0)
        values[i] = Fraction(v) if exact else v
    return AllocationRule(rule.domain, values)


def constant_rule(domain, k):
    """The flat rule paying ``k`` everywhere."""
    full = frozenset(range(domain.size))
    return TwoStepRule.from_up_sets(domain, frozenset(), full, 1 - k)


def threshold_rule(measure, k):
    """Single-cutoff rule with a lottery on the marginal atom.

    Pays 1 above the cutoff atom, ``beta`` on it and 0 below, where the cutoff
    is the highest atom whose upper tail (inclusive) carries mass >= ``k`` and
    ``beta`` makes the budget bind exactly.
    """
    check_budget(k)
    _require_line(measure.domain)
    mass = measure.mass
    k = scalar_like(k, mass)
    tol = 0 if measure.exact else 1e-14
    tail = measure.tail_masses()
    n = mass.size
    cut = max(i for i in range(n) if tail[i] >= k - tol)
    beta = (k - tail[cut + 1]) / mass[cut] if mass[cut] > 0 else scalar_like(1, mass)
    beta = min(max(beta, 0 * beta), 0 * beta + 1)
    return TwoStepRule.from_indices(measure.domain, cut, cut + 1, beta)


def budget_residual(rule, measure, k):
    if isinstance(rule, TwoStepRule):
        rule = materialize(rule)
    return budget(rule, measure) - scalar_like(k, measure.mass)


def random_monotone_rule(domain, rng, measure=None, k=None):
    """A random monotone rule; with ``measure`` and ``k``, rescaled to budget ``k``.

    On 1D grids values are sorted uniforms; on lattices they are the maximum
    over random down-sets, which is monotone by construction.
    """
    if domain.kind == "line":
        values = np.sort(rng.random(domain.size))
    else:
        raw = rng.random(domain.size)
        order = domain.order_matrix.astype(float)
        values = np.max(order * raw[:, None], axis=0)
    if measure is not None and k is not None:
        b = float(integrate(values, measure))
        if b > k:
            values = values * (k / b)
        elif b < k:
            values = 1.0 - (1.0 - values) * ((1.0 - k) / (1.0 - b))
    return AllocationRule(domain, np.clip(values, 0.0, 1.0))


def majorizing_pair(measure, rng, base=None):
    """Return ``(f, g)`` with equal budgets and ``f`` majorizing ``g``.

    ``g`` is a random monotone rule (or ``base``); ``f`` moves mass from the
    points below a random pivot onto the points at or above it, which keeps
    ``f`` monotone and gives it weakly larger mass on every upper tail.
    """
    _require_line(measure.domain)
    g = base if base is not None else random_monotone_rule(measure.domain, rng)
    gv = g.values.astype(float)
    w = measure.mass.astype(float)
    n = gv.size
    if n < 2:
        return g, g
    pivot = int(rng.integers(1, n))
    below, above = w[:pivot].sum(), w[pivot:].sum()
    if below <= 0 or above <= 0:
        return g, g
    down = np.zeros(n)
    down[:pivot] = -1.0 / below
    down[pivot:] = 1.0 / above
    with np.errstate(divide="ignore"):
        room_low = np.where(down < 0, gv / -down, np.inf).min()
        room_high = np.where(down > 0, (1.0 - gv) / down, np.inf).min()
    eps = float(rng.uniform(0.1, 1.0)) * min(room_low, room_high)
    fv = np.clip(gv + eps * down, 0.0, 1.0)
    return AllocationRule(measure.domain, fv), g
