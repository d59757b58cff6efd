"""Agents' side of the contest: win probabilities, best responses, equilibria."""

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, StructuralError, check_budget
from .measures import GridDomain, GridMeasure, NoiseKernel, integrate, pushforward, require_same_domain
from .rules import TwoStepRule, constant_rule, materialize, threshold_rule
from .solver import DECREASING, INCREASING

EQUILIBRIUM_TOL = 1e-9
CYCLE_WINDOW = 16


@dataclass(frozen=True, eq=False)
class ContestPrimitives:
    """Prize utility, convex effort cost and an optional performance-noise kernel."""

    domain: GridDomain
    prize_utility: float
    cost: np.ndarray
    kernel: NoiseKernel | None = None

    def __post_init__(self):
        if self.domain.kind != "line":
            raise StructuralError("effort grids are 1D")
        if not self.prize_utility > 0:
            raise DomainError("prize utility must be positive")
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != (self.domain.size,):
            raise StructuralError("one cost value per effort point is required")
        if abs(cost[0]) > 1e-12:
            raise DomainError("cost at the lowest effort must be 0")
        if np.any(np.diff(cost) < -1e-12):
            raise DomainError("cost must be non-decreasing")
        slopes = np.diff(cost) / np.diff(self.domain.points.astype(float))
        if np.any(np.diff(slopes) < -1e-12 * max(1.0, float(np.abs(slopes).max(initial=0.0)))):
            raise DomainError("cost must be convex")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        if self.kernel is not None:
            require_same_domain(self.kernel.effort, self.domain)

    @classmethod
    def power_cost(cls, domain, prize_utility=1.0, exponent=2.0, scale=1.0, kernel=None):
        x = domain.points.astype(float)
        return cls(domain, prize_utility, scale * (x - x[0]) ** exponent, kernel)

    @property
    def allocation_domain(self):
        """Grid on which allocation rules are defined (performance if noisy)."""
        return self.domain if self.kernel is None else self.kernel.performance

    @property
    def max_effort_index(self):
        """Index of x-bar: the highest effort whose cost does not exceed the prize."""
        ok = np.flatnonzero(self.cost <= self.prize_utility + 1e-12)
        return int(ok[-1])

    def cost_cell(self, index):
        return float(self.cost[index] - self.cost[index - 1]) if index > 0 else 0.0


class ThresholdDesign:
    """Single cutoff re-solved against whatever distribution it faces."""

    family = "single-threshold"

    def __init__(self, k):
        self.k = check_budget(k)

    def rule(self, measure):
        return threshold_rule(measure, self.k)

    def __call__(self, measure):
        return materialize(self.rule(measure))


class ConstantDesign:
    """Everybody wins with probability ``k``."""

    family = "constant"

    def __init__(self, k):
        self.k = check_budget(k)

    def rule(self, measure):
        return constant_rule(measure.domain, self.k)

    def __call__(self, measure):
        return materialize(self.rule(measure))


class TwoStepDesign:
    """Level ``alpha`` on ``[x_low, x_high]`` and 1 above ``x_high``.

    ``alpha`` is re-solved from the budget for each distribution; when no
    ``alpha`` in [0, 1] balances it, the design falls back to the single
    cutoff so the budget still binds.
    """

    family = "two-step"

    def __init__(self, k, x_low, x_high):
        self.k = check_budget(k)
        if x_low > x_high:
            raise DomainError("x_low must not exceed x_high")
        self.x_low, self.x_high = x_low, x_high

    def rule(self, measure):
        domain = measure.domain
        pts = domain.points.astype(float)
        lower = int(np.searchsorted(pts, self.x_low - 1e-12, side="left"))
        upper = int(np.searchsorted(pts, self.x_high + 1e-12, side="right"))
        tail = measure.tail_masses().astype(float)
        width, top = tail[lower] - tail[upper], tail[upper]
        if width > 1e-15:
            alpha = (self.k - top) / width
            if -1e-12 <= alpha <= 1 + 1e-12:
                return TwoStepRule.from_indices(domain, lower, upper, min(max(alpha, 0.0), 1.0))
        return threshold_rule(measure, self.k)

    def __call__(self, measure):
        return materialize(self.rule(measure))


class OptimalDesign:
    """Designer-optimal rule for ``objective``, re-solved per distribution."""

    family = "optimal"

    def __init__(self, k, objective):
        self.k = check_budget(k)
        self.objective = objective

    def rule(self, measure):
        from .solver import optimal_rule

        return optimal_rule(self.objective, measure, self.k).rule

    def __call__(self, measure):
        return materialize(self.rule(measure))


def design_for(classification, k):
    if classification == INCREASING:
        return ThresholdDesign(k)
    if classification == DECREASING:
        return ConstantDesign(k)
    raise DomainError("non-monotone objectives need an explicit design")


def win_probabilities(design, profile, primitives):
    """Win probability of every effort level against ``profile``.

    Without noise the rule is solved against ``profile`` and read off
    directly. With a kernel the rule is solved against the induced
    performance distribution and averaged over each effort's noise.
    """
    require_same_domain(profile.domain, primitives.domain)
    if primitives.kernel is None:
        return design(profile).values.astype(float)
    nu = pushforward(profile, primitives.kernel)
    return primitives.kernel.compose(design(nu).values.astype(float))


def win_probability(x, design, profile, primitives):
    i = primitives.domain.index(x)
    return float(win_probabilities(design, profile, primitives)[i])


def payoffs(design, profile, primitives):
    return win_probabilities(design, profile, primitives) * primitives.prize_utility - primitives.cost


@dataclass(frozen=True)
class BestResponse:
    maximizers: tuple
    payoffs: np.ndarray = field(repr=False)
    tie_break: str = "lowest"

    @property
    def selected(self):
        return self.maximizers[0] if self.tie_break == "lowest" else self.maximizers[-1]

    @property
    def value(self):
        return float(self.payoffs[self.maximizers[0]])


def best_response(design, profile, primitives, tie_break="lowest", tol=EQUILIBRIUM_TOL):
    """Every effort within ``tol`` of the best payoff against ``profile``."""
    if tie_break not in ("lowest", "highest"):
        raise DomainError("tie_break must be 'lowest' or 'highest'")
    u = payoffs(design, profile, primitives)
    best = u.max()
    maximizers = tuple(int(i) for i in np.flatnonzero(u >= best - tol))
    return BestResponse(maximizers, u, tie_break)


@dataclass(frozen=True)
class EquilibriumReport:
    is_equilibrium: bool
    max_gain: float
    payoff_by_support: tuple
    zero_profit: bool
    x_bar: float
    tolerance: float = EQUILIBRIUM_TOL

    def to_dict(self):
        return {
            "is_equilibrium": self.is_equilibrium,
            "max_gain": self.max_gain,
            "support": [
                {"effort": e, "mass": m, "payoff": p} for e, m, p in self.payoff_by_support
            ],
            "zero_profit": self.zero_profit,
            "x_bar": self.x_bar,
        }


def verify_equilibrium(profile, primitives, k, classification=INCREASING, design=None):
    """Check that no agent in ``profile`` gains by switching effort.

    ``max_gain`` is the largest payoff improvement available to any agent on
    the support. ``zero_profit`` reports whether every support payoff is
    within one cost increment (at x-bar) of zero.
    """
    check_budget(k)
    design = design if design is not None else design_for(classification, k)
    u = payoffs(design, profile, primitives)
    support = profile.support
    best = float(u.max())
    max_gain = max(best - float(u[i]) for i in support)
    pts = primitives.domain.points.astype(float)
    xbar = primitives.max_effort_index
    cell = primitives.cost_cell(xbar)
    by_support = tuple((float(pts[i]), float(profile.mass[i]), float(u[i])) for i in support)
    zero_profit = all(abs(p) <= cell + 1e-12 for _, _, p in by_support)
    return EquilibriumReport(
        is_equilibrium=max_gain <= EQUILIBRIUM_TOL,
        max_gain=max_gain,
        payoff_by_support=by_support,
        zero_profit=zero_profit,
        x_bar=float(pts[xbar]),
    )


def two_atom_profile(primitives, k):
    """Share ``k`` at x-bar, the rest at the lowest effort."""
    check_budget(k)
    n = primitives.domain.size
    mass = np.zeros(n)
    mass[primitives.max_effort_index] += k
    mass[0] += 1 - k
    return GridMeasure(primitives.domain, mass)


@dataclass(frozen=True)
class DynamicsResult:
    profiles: tuple = field(repr=False)
    trace: tuple
    converged: bool
    cycle_detected: bool
    cycle_length: int
    iterations: int

    @property
    def terminal(self):
        return self.profiles[-1]

    @property
    def cycle(self):
        """Profiles on the detected cycle (empty if none)."""
        return self.profiles[-self.cycle_length:] if self.cycle_detected else ()

    trace_columns = ("iter", "tv_change", "max_gain", "mean_effort")


def _fingerprint(measure):
    return hashlib.sha256(np.round(measure.mass.astype(float), 12).tobytes()).hexdigest()


def best_response_dynamics(
    initial, primitives, design, damping=1.0, max_iters=200, tol=1e-12, tie_break="lowest"
):
    """Iterate population best responses until the profile stops moving.

    Agents already playing a best response stay put; the others move to the
    canonical maximizer. The new profile mixes the old one with the response
    profile by ``damping``. Revisiting a profile seen in the last
    ``CYCLE_WINDOW`` iterations stops the run with a cycle flag.
    """
    if not 0 < damping <= 1:
        raise DomainError("damping must lie in (0, 1]")
    pts = primitives.domain.points.astype(float)
    profile = initial
    profiles = [profile]
    trace = []
    window = deque(maxlen=CYCLE_WINDOW)
    window.append(_fingerprint(profile))
    converged = cycle = False
    cycle_length = 0
    it = 0
    for it in range(1, max_iters + 1):
        br = best_response(design, profile, primitives, tie_break)
        target = np.zeros(primitives.domain.size)
        keep = set(br.maximizers)
        max_gain = 0.0
        best = float(br.payoffs.max())
        for i in profile.support:
            m = float(profile.mass[i])
            if i in keep:
                target[i] += m
            else:
                target[br.selected] += m
                max_gain = max(max_gain, best - float(br.payoffs[i]))
        new = GridMeasure(primitives.domain, (1 - damping) * profile.mass.astype(float) + damping * target)
        tv = float(new.total_variation(profile))
        profile = new
        profiles.append(profile)
        trace.append(
            {"iter": it, "tv_change": tv, "max_gain": max_gain, "mean_effort": float(integrate(pts, profile))}
        )
        if tv < tol:
            converged = True
            break
        fp = _fingerprint(profile)
        if fp in window:
            cycle = True
            recent = list(window)
            cycle_length = len(recent) - recent.index(fp)
            break
        window.append(fp)
    return DynamicsResult(tuple(profiles), tuple(trace), converged, cycle, cycle_length, it)


def aggregate_objective(profile, objective):
    """Population average of ``objective`` under ``profile``."""
    require_same_domain(profile.domain, objective.domain)
    return integrate(objective.values, profile)


def designer_payoff(design, profile, objective, primitives):
    """Winners' average of ``objective``: sum of q(x) * pi(x) * mass(x)."""
    q = win_probabilities(design, profile, primitives)
    return float(integrate(q * objective.values.astype(float), profile))


@dataclass(frozen=True)
class DesignEvaluation:
    family: str
    payoff: float
    payoff_range: tuple
    converged: bool
    cycle_detected: bool
    iterations: int
    terminal_mean_effort: float

    def to_dict(self):
        return {
            "family": self.family,
            "payoff": self.payoff,
            "payoff_range": list(self.payoff_range),
            "converged": self.converged,
            "cycle_detected": self.cycle_detected,
            "iterations": self.iterations,
            "terminal_mean_effort": self.terminal_mean_effort,
        }


def evaluate_design(
    design, primitives, objective, kind="designer", initial=None, damping=1.0, max_iters=500, tie_break="lowest"
):
    """Run best-response dynamics under ``design`` and score the outcome.

    ``kind="designer"`` scores the winners' weighted objective, ``"aggregate"``
    the population average. When the dynamics cycle, ``payoff`` is the value
    at the last profile and ``payoff_range`` spans the cycle.
    """
    if kind not in ("designer", "aggregate"):
        raise DomainError("kind must be 'designer' or 'aggregate'")
    if initial is None:
        initial = GridMeasure.dirac(primitives.domain, primitives.domain.points[0])
    run = best_response_dynamics(initial, primitives, design, damping, max_iters, tie_break=tie_break)

    def score(profile):
        if kind == "aggregate":
            return float(aggregate_objective(profile, objective))
        return designer_payoff(design, profile, objective, primitives)

    scores = [score(p) for p in (run.cycle or (run.terminal,))]
    pts = primitives.domain.points.astype(float)
    return DesignEvaluation(
        family=getattr(design, "family", type(design).__name__),
        payoff=score(run.terminal),
        payoff_range=(min(scores), max(scores)),
        converged=run.converged,
        cycle_detected=run.cycle_detected,
        iterations=run.iterations,
        terminal_mean_effort=float(integrate(pts, run.terminal)),
    )


def constant_rule_best_responses(primitives, levels):
    """Best-response sets under flat rules ``q = v`` for each ``v``."""
    out = []
    for v in levels:
        u = v * primitives.prize_utility - primitives.cost
        out.append(tuple(int(i) for i in np.flatnonzero(u >= u.max() - EQUILIBRIUM_TOL)))
    return out

