"""The designer's problem: optimal rules, budget sweeps and Fan-Lorentz checks."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    DomainError,
    StructuralError,
    as_numeric,
    check_budget,
    scalar_like,
)
from .extreme_oracle import two_step_search
from .measures import GridDomain, integrate, require_same_domain
from .rules import (
    budget_residual,
    constant_rule,
    majorizing_pair,
    materialize,
    random_monotone_rule,
    threshold_rule,
)

INCREASING = "increasing"
DECREASING = "decreasing"
NON_MONOTONE = "non-monotone"

SINGLE_THRESHOLD = "single-threshold"
CONSTANT = "constant"
TWO_STEP = "two-step"


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Designer's per-effort weight on a 1D grid."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        if self.domain.kind != "line":
            raise StructuralError("designer objectives live on 1D grids")
        vals = as_numeric(self.values)
        if vals.size != self.domain.size:
            raise StructuralError(f"{vals.size} objective values for {self.domain.size} points")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, domain, fn):
        return cls(domain, np.asarray(fn(domain.points.astype(float)), dtype=float))

    @property
    def classification(self):
        diffs = np.diff(self.values)
        rises, falls = bool(np.any(diffs > 0)), bool(np.any(diffs < 0))
        if rises and falls:
            return NON_MONOTONE
        return DECREASING if falls else INCREASING

    @property
    def is_constant(self):
        return not np.any(np.diff(self.values) != 0)


@dataclass(frozen=True, eq=False)
class SolverResult:
    rule: object
    payoff: object
    case: str
    budget_residual: object
    tie: bool = False

    def to_dict(self):
        d = self.rule.to_dict()
        values = materialize(self.rule).values
        lo, hi = self.rule.lower_index, self.rule.upper_index
        n = len(values)
        return {
            "case": self.case,
            "thresholds": d["thresholds"],
            "alpha": d["alpha"],
            "tie_levels": {
                "at_x_low": None if lo == n else float(values[lo]),
                "at_x_high": None if hi == n else float(values[hi]),
            },
            "payoff": float(self.payoff),
            "budget_residual": float(self.budget_residual),
            "tie": self.tie,
        }


def _payoff(rule, objective, measure):
    return integrate(materialize(rule).values * objective.values, measure)


def _case_of(rule):
    if rule.a1 == rule.a2:
        return SINGLE_THRESHOLD
    if not rule.a1 and len(rule.a2) == rule.domain.size:
        return CONSTANT
    if rule.upper_index == rule.lower_index + 1:
        return SINGLE_THRESHOLD
    return TWO_STEP


def optimal_rule(objective, measure, k, slack=False):
    """Optimal allocation rule for the designer weight ``objective``.

    Increasing weights get the single cutoff with a lottery on the marginal
    atom, decreasing weights the flat rule ``q = k``, and anything else the
    best two-step rule from an exhaustive search.
    """
    check_budget(k)
    require_same_domain(objective.domain, measure.domain)
    cls = objective.classification
    if slack and np.any(objective.values < 0):
        rule, _ = two_step_search(objective, measure, k, slack=True)
        case = _case_of(rule)
    elif cls == INCREASING:
        rule, case = threshold_rule(measure, k), SINGLE_THRESHOLD
    elif cls == DECREASING:
        rule, case = constant_rule(measure.domain, scalar_like(k, measure.mass)), CONSTANT
    else:
        rule, _ = two_step_search(objective, measure, k)
        case = _case_of(rule)
    residual = budget_residual(rule, measure, k)
    return SolverResult(
        rule=rule,
        payoff=_payoff(rule, objective, measure),
        case=case,
        budget_residual=residual,
        tie=objective.is_constant,
    )


@dataclass(frozen=True)
class PriorSolution:
    results: tuple
    weights: tuple
    expected_payoff: object


def optimal_over_prior(objective, prior, k):
    """Solve against every measure of a prior ``[(measure, weight), ...]``.

    The best rule for each measure does not depend on the others, so the
    expected payoff is the weighted sum of the per-measure optima.
    """
    if not prior:
        raise DomainError("prior is empty")
    weights = [w for _, w in prior]
    if any(w < 0 for w in weights) or abs(float(sum(weights)) - 1.0) > 1e-12:
        raise DomainError("prior weights must be nonnegative and sum to 1")
    results = tuple(optimal_rule(objective, mu, k) for mu, _ in prior)
    expected = sum(w * r.payoff for w, r in zip(weights, results))
    return PriorSolution(results, tuple(weights), expected)


@dataclass(frozen=True)
class SweepTable:
    rows: tuple
    concave: bool
    max_second_difference: float
    marginal_match_fraction: float
    marginal_tolerance: float

    columns = ("k", "payoff", "x_low", "x_high", "alpha", "marginal_fd", "pi_at_threshold")


def sweep_budget(objective, measure, ks, jobs=1):
    """Optimal payoff over a strictly increasing list of budgets.

    Besides the payoff column this records a centred finite-difference
    marginal and the objective at the running cutoff, which should agree for
    smooth increasing objectives.
    """
    ks = [float(k) for k in ks]
    for k in ks:
        check_budget(k)
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise DomainError("budget list must be strictly increasing")

    def solve(k):
        return optimal_rule(objective, measure, k)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(solve, ks))
    else:
        results = [solve(k) for k in ks]

    payoff = np.array([float(r.payoff) for r in results])
    k_arr = np.array(ks)
    marginal = np.full(len(ks), np.nan)
    if len(ks) >= 3:
        marginal[1:-1] = (payoff[2:] - payoff[:-2]) / (k_arr[2:] - k_arr[:-2])
    second = _second_differences(k_arr, payoff)
    max_second = float(second.max()) if second.size else 0.0

    pi = objective.values.astype(float)
    n = pi.size
    rows = []
    at_threshold = np.full(len(ks), np.nan)
    for idx, (k, r) in enumerate(zip(ks, results)):
        lo = r.rule.lower_index
        if lo < n:
            at_threshold[idx] = pi[lo]
        rows.append(
            {
                "k": k,
                "payoff": float(r.payoff),
                "x_low": None if r.rule.x_low is None else float(r.rule.x_low),
                "x_high": None if r.rule.x_high is None else float(r.rule.x_high),
                "alpha": float(r.rule.level),
                "marginal_fd": None if np.isnan(marginal[idx]) else float(marginal[idx]),
                "pi_at_threshold": None if np.isnan(at_threshold[idx]) else float(at_threshold[idx]),
            }
        )

    cell_jump = float(np.abs(np.diff(pi)).max()) if n > 1 else 0.0
    tol = max(1e-3, 2.0 * cell_jump)
    interior = slice(1, len(ks) - 1)
    diffs = np.abs(marginal[interior] - at_threshold[interior])
    matched = float(np.mean(diffs <= tol)) if diffs.size else 1.0
    return SweepTable(tuple(rows), bool(max_second <= 1e-9), max_second, matched, tol)


def _second_differences(x, y):
    """Second differences on a possibly uneven grid, scaled like the even-grid ones."""
    if x.size < 3:
        return np.zeros(0)
    h0, h1 = x[1:-1] - x[:-2], x[2:] - x[1:-1]
    return (h0 * y[2:] - (h0 + h1) * y[1:-1] + h1 * y[:-2]) / ((h0 + h1) / 2.0)


@dataclass(frozen=True, eq=False)
class BilinearSurface:
    """Tabulated ``phi(u, t)`` on ``u_grid x t_grid``; ``values[a, b] = phi(u_a, t_b)``."""

    u_grid: np.ndarray
    t_domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if u.ndim != 1 or u.size < 3 or np.any(np.diff(u) <= 0):
            raise DomainError("u grid needs at least 3 strictly ascending points")
        if self.t_domain.kind != "line" or self.t_domain.size < 2:
            raise DomainError("t grid needs at least 2 points on a line")
        if vals.shape != (u.size, self.t_domain.size) or not np.all(np.isfinite(vals)):
            raise DomainError("surface values must be finite with shape (len(u), len(t))")
        object.__setattr__(self, "u_grid", u)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, fn, t_domain, u_grid=None):
        u = np.linspace(0.0, 1.0, 51) if u_grid is None else np.asarray(u_grid, dtype=float)
        t = t_domain.points.astype(float)
        return cls(u, t_domain, fn(u[:, None], t[None, :]) * np.ones((u.size, t.size)))

    def evaluate(self, f_values):
        """``phi(f(t), t)`` for every grid ``t``, linear in ``u`` between nodes."""
        f = np.asarray(f_values, dtype=float)
        out = np.empty(f.size)
        for b in range(f.size):
            out[b] = np.interp(f[b], self.u_grid, self.values[:, b])
        return out

    def functional(self, f_values, measure):
        return float(integrate(self.evaluate(f_values), measure))


@dataclass(frozen=True)
class FanLorentzReport:
    convex_in_u: bool
    supermodular: bool
    min_convexity: float
    min_mixed_difference: float
    samples: int
    violations: int
    witness: dict | None = field(default=None)

    @property
    def conditions_hold(self):
        return self.convex_in_u and self.supermodular

    @property
    def passed(self):
        return self.conditions_hold and self.violations == 0

    def to_dict(self):
        return {
            "convex_in_u": self.convex_in_u,
            "supermodular": self.supermodular,
            "min_convexity": self.min_convexity,
            "min_mixed_difference": self.min_mixed_difference,
            "samples": self.samples,
            "violations": self.violations,
            "witness": self.witness,
            "passed": self.passed,
        }


def fan_lorentz_check(surface, measure, samples=1000, seed=0):
    """Check convexity in ``u`` and supermodularity, then probe the functional.

    Random pairs ``f`` majorizing ``g`` (equal budgets) are drawn; a pair with
    ``Phi(f) < Phi(g) - 1e-9`` counts as a violation and the first one is
    kept as a witness.
    """
    require_same_domain(surface.t_domain, measure.domain)
    v, u = surface.values, surface.u_grid
    slopes = np.diff(v, axis=0) / np.diff(u)[:, None]
    convexity = np.diff(slopes, axis=0)
    mixed = v[1:, 1:] - v[1:, :-1] - v[:-1, 1:] + v[:-1, :-1]
    min_conv, min_mixed = float(convexity.min()), float(mixed.min())

    rng = np.random.default_rng(seed)
    violations, witness = 0, None
    for _ in range(samples):
        f, g = majorizing_pair(measure, rng)
        lhs = surface.functional(f.values, measure)
        rhs = surface.functional(g.values, measure)
        if lhs < rhs - 1e-9:
            violations += 1
            if witness is None:
                witness = {
                    "f": [float(x) for x in f.values],
                    "g": [float(x) for x in g.values],
                    "phi_f": lhs,
                    "phi_g": rhs,
                }
    return FanLorentzReport(
        convex_in_u=min_conv >= -1e-12,
        supermodular=min_mixed >= -1e-12,
        min_convexity=min_conv,
        min_mixed_difference=min_mixed,
        samples=samples,
        violations=violations,
        witness=witness,
    )


def sample_feasible_rules(measure, k, count, rng):
    """Random monotone rules spending exactly ``k`` (up to rounding)."""
    return [random_monotone_rule(measure.domain, rng, measure, k) for _ in range(count)]
