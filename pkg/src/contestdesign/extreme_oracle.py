"""Brute-force certification of the two-step structure of extreme allocation rules.

The vertex enumerator below knows nothing about two-step rules: it lists the
basic feasible solutions of the inequality system describing monotone rules
under a budget, in exact rational arithmetic. :func:`certify_two_step` then
checks each vertex against the nested-up-set form independently.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from ._validation import (
    CapacityError,
    DomainError,
    InfeasibleError,
    StructuralError,
    as_numeric,
    check_budget,
    exact_array,
    to_exact,
)
from .measures import GridDomain, GridMeasure, require_same_domain
from .rules import AllocationRule, TwoStepRule, materialize

MAX_LINE_UPSETS = 14
MAX_LATTICE_SIDE = 4
MAX_VERTEX_POINTS = 14
MAX_SEARCH_POINTS = 2000
CERTIFY_TOL = 1e-9
_CHUNK = 20000


@dataclass(frozen=True, eq=False)
class PolytopeSpec:
    """Monotone rules ``q`` in ``[0, 1]`` with ``sum(mass * q) = k`` (or ``<= k``)."""

    domain: GridDomain
    measure: GridMeasure
    k: object
    constraint: str = "equality"

    def __post_init__(self):
        require_same_domain(self.domain, self.measure.domain)
        check_budget(self.k)
        if self.constraint not in ("equality", "inequality"):
            raise DomainError(f"constraint must be 'equality' or 'inequality', not {self.constraint!r}")
        if not any(m > 0 for m in self.measure.mass):
            raise DomainError("measure has no positive mass")

    @property
    def exact(self):
        return self.measure.exact

    @property
    def slack(self):
        return self.constraint == "inequality"


@dataclass(frozen=True, eq=False)
class VertexCertificate:
    vertex: AllocationRule
    decomposition: TwoStepRule | None
    residual: float

    @property
    def certified(self):
        return self.decomposition is not None and self.residual <= CERTIFY_TOL

    def to_dict(self):
        out = {"values": [float(v) for v in self.vertex.values], "certified": self.certified}
        if self.decomposition is None:
            out.update({"A1_min_antichain": None, "A2_min_antichain": None, "lambda": None})
        else:
            d = self.decomposition.to_dict()
            out.update({key: d[key] for key in ("A1_min_antichain", "A2_min_antichain", "lambda")})
        return out


def enumerate_up_sets(domain):
    """Every up-set of ``domain``, sorted by size then members."""
    if domain.kind == "line":
        if domain.size > MAX_LINE_UPSETS:
            raise CapacityError(f"up-set enumeration capped at {MAX_LINE_UPSETS} points")
    elif max(domain.shape) > MAX_LATTICE_SIDE:
        raise CapacityError(f"up-set enumeration capped at {MAX_LATTICE_SIDE}x{MAX_LATTICE_SIDE}")

    n = domain.size
    upper_covers = [[] for _ in range(n)]
    for i, j in domain.covering_pairs:
        upper_covers[i].append(j)

    found = []
    chosen = set()

    # covering pairs always run from lower to higher flat index, so deciding
    # points from the top down sees every upper cover first
    def extend(i):
        if i < 0:
            found.append(frozenset(chosen))
            return
        extend(i - 1)
        if all(j in chosen for j in upper_covers[i]):
            chosen.add(i)
            extend(i - 1)
            chosen.discard(i)

    extend(n - 1)
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def _constraint_system(spec):
    """Rows ``A q <= b`` (exact) with the budget row last."""
    domain = spec.domain
    n = domain.size
    rows, rhs = [], []

    def unit(entries):
        row = [Fraction(0)] * n
        for idx, coef in entries:
            row[idx] += coef
        return row

    for i in domain.minimal:
        rows.append(unit([(i, -1)]))
        rhs.append(Fraction(0))
    for i in domain.maximal:
        rows.append(unit([(i, 1)]))
        rhs.append(Fraction(1))
    for i, j in domain.covering_pairs:
        rows.append(unit([(i, 1), (j, -1)]))
        rhs.append(Fraction(0))
    rows.append(list(exact_array(spec.measure.mass)))
    rhs.append(to_exact(spec.k))
    return rows, rhs


def _solve_exact(rows, rhs):
    """Gauss-Jordan over Fractions; ``None`` when singular."""
    n = len(rows)
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * c for a, c in zip(aug[r], aug[col])]
    return [aug[i][n] for i in range(n)]


def _rank_exact(rows):
    mat = [list(r) for r in rows]
    rank, ncols = 0, len(mat[0]) if mat else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        p = mat[rank][col]
        for r in range(rank + 1, len(mat)):
            if mat[r][col] != 0:
                f = mat[r][col] / p
                mat[r] = [a - f * c for a, c in zip(mat[r], mat[rank])]
        rank += 1
    return rank


def _dot(row, q):
    return sum((a * b for a, b in zip(row, q) if a != 0), Fraction(0))


def _feasible_exact(rows, rhs, q, equality):
    ok = all(_dot(r, q) <= b for r, b in zip(rows, rhs))
    if equality:
        ok = ok and _dot(rows[-1], q) == rhs[-1]
    return ok


def _check_vertex_cap(domain):
    if domain.size > MAX_VERTEX_POINTS:
        raise CapacityError(f"vertex enumeration capped at {MAX_VERTEX_POINTS} points")


def enumerate_vertices(spec):
    """Exact vertex set of the budget-constrained monotone-rule polytope.

    Candidate bases are screened in floating point (batched determinants and
    solves); every surviving point is re-solved and re-checked in exact
    rational arithmetic before it is reported.
    """
    _check_vertex_cap(spec.domain)
    rows, rhs = _constraint_system(spec)
    n, m = spec.domain.size, len(rows)
    equality = spec.constraint == "equality"
    a_float = np.array([[float(v) for v in r] for r in rows])
    b_float = np.array([float(v) for v in rhs])
    budget_row = m - 1

    if equality:
        combos = (c + (budget_row,) for c in combinations(range(m - 1), n - 1))
    else:
        combos = combinations(range(m), n)

    candidates = {}
    while True:
        chunk = [c for _, c in zip(range(_CHUNK), combos)]
        if not chunk:
            break
        idx = np.array(chunk, dtype=int)
        mats = a_float[idx]
        dets = np.linalg.det(mats)
        keep = np.abs(dets) > 1e-12
        if not keep.any():
            continue
        idx, mats = idx[keep], mats[keep]
        sols = np.linalg.solve(mats, b_float[idx][..., None])[..., 0]
        slackness = sols @ a_float.T - b_float
        feasible = np.all(slackness <= 1e-9, axis=1)
        if equality:
            feasible &= np.abs(slackness[:, budget_row]) <= 1e-9
        for basis, sol in zip(idx[feasible], sols[feasible]):
            key = tuple(np.round(sol, 9))
            candidates.setdefault(key, []).append(tuple(basis))

    vertices = set()
    for key in sorted(candidates):
        for basis in candidates[key]:
            q = _solve_exact([rows[r] for r in basis], [rhs[r] for r in basis])
            if q is None:
                continue
            if _feasible_exact(rows, rhs, q, equality):
                vertices.add(tuple(q))
            break

    out = []
    for q in sorted(vertices):
        values = list(q) if spec.exact else [float(v) for v in q]
        out.append(AllocationRule(spec.domain, values))
    return out


def is_vertex(rule, spec):
    """Exact test: ``rule`` is feasible and its active constraints have full rank."""
    _check_vertex_cap(spec.domain)
    rows, rhs = _constraint_system(spec)
    q = [to_exact(v) for v in rule.values]
    equality = spec.constraint == "equality"
    if not _feasible_exact(rows, rhs, q, equality):
        return False
    active = [r for r, b in zip(rows, rhs) if _dot(r, q) == b]
    return bool(active) and _rank_exact(active) == spec.domain.size


def certify_two_step(rule):
    """Try to write ``rule`` as ``lam * 1[A1] + (1 - lam) * 1[A2]`` with ``A1 <= A2``.

    Succeeds iff the rule has at most two distinct positive values, the larger
    of two being 1, and each level set is an up-set.
    """
    domain = rule.domain
    vals = rule.values
    exact = rule.exact
    tol = 0 if exact else CERTIFY_TOL
    levels = _distinct(v for v in vals if v > tol)
    failure = VertexCertificate(rule, None, float("inf"))

    one = Fraction(1) if exact else 1.0
    if not levels:
        a1 = a2 = frozenset()
        lam = 0 * one
    elif len(levels) == 1:
        (v,) = levels
        a1, a2 = frozenset(), rule.level_set(v - tol)
        lam = one - v
        if abs(v - 1) <= tol:
            a1, lam = a2, 0 * one
    elif len(levels) == 2:
        v_high, v_low = max(levels), min(levels)
        if abs(v_high - 1) > tol:
            return failure
        a1, a2 = rule.level_set(v_high - tol), rule.level_set(v_low - tol)
        lam = one - v_low
    else:
        return failure

    if not (domain.is_up_set(a1) and domain.is_up_set(a2)):
        return failure
    if a1 == a2:
        lam = 0 * one
    lam = min(max(lam, 0 * one), one)
    decomposition = TwoStepRule.from_up_sets(domain, a1, a2, lam)
    rebuilt = materialize(decomposition).values
    residual = max(abs(float(a - b)) for a, b in zip(rebuilt, vals))
    return VertexCertificate(rule, decomposition, residual)


def _distinct(values):
    out = []
    for v in values:
        if not any(abs(v - u) <= (0 if isinstance(v, Fraction) else CERTIFY_TOL) for u in out):
            out.append(v)
    return out


def two_step_search(objective, measure, k, slack=False):
    """Best rule in the 1D two-step family by exhaustive search over index pairs.

    The family is every ``(lower, upper, level)`` with ``level`` paid on
    ``[lower, upper)`` and 1 from ``upper`` on, ``level`` solved from the
    budget. Returns ``(TwoStepRule, value)``.
    """
    domain = measure.domain
    if domain.kind != "line":
        raise StructuralError("the two-step search runs on 1D grids")
    if domain.size > MAX_SEARCH_POINTS:
        raise CapacityError(f"two-step search capped at {MAX_SEARCH_POINTS} points")
    pi = as_numeric(objective.values if hasattr(objective, "values") else objective)
    if pi.size != domain.size:
        raise StructuralError("objective and measure differ in size")
    if measure.exact:
        lower, upper, level, value = _search_exact(pi, measure, to_exact(k), slack)
    else:
        lower, upper, level, value = _search_float(pi.astype(float), measure.mass, float(k), slack)
    return _canonical_rule(domain, lower, upper, level), value


def _canonical_rule(domain, lower, upper, level):
    if level == 0:
        lower = upper
    elif level == 1:
        upper = lower
    return TwoStepRule.from_indices(domain, lower, upper, level)


def _search_float(pi, mass, k, slack, tol=1e-12):
    n = mass.size
    tail = np.concatenate((np.cumsum(mass[::-1])[::-1], [0.0]))
    gain = np.concatenate((np.cumsum((pi * mass)[::-1])[::-1], [0.0]))
    if k > tail[0] + tol:
        raise InfeasibleError("budget exceeds the total mass")
    lo, hi = np.triu_indices(n + 1)
    width = tail[lo] - tail[hi]
    top = tail[hi]
    positive = width > tol
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(positive, (k - top) / np.where(positive, width, 1.0), 0.0)
    if slack:
        ok = top <= k + tol
        level = np.where(positive, np.clip(level, 0.0, 1.0), 0.0)
    else:
        ok = np.where(positive, (level >= -tol) & (level <= 1 + tol), np.abs(top - k) <= tol)
        level = np.clip(level, 0.0, 1.0)
    value = np.where(ok, level * (gain[lo] - gain[hi]) + gain[hi], -np.inf)
    best = int(np.argmax(value))
    if not np.isfinite(value[best]):
        raise InfeasibleError("no feasible two-step rule")
    return int(lo[best]), int(hi[best]), float(level[best]), float(value[best])


def _search_exact(pi, measure, k, slack):
    mass = measure.mass
    n = mass.size
    tail = list(measure.tail_masses())
    gain = [Fraction(0)] * (n + 1)
    for i in range(n - 1, -1, -1):
        gain[i] = gain[i + 1] + to_exact(pi[i]) * mass[i]
    if k > tail[0]:
        raise InfeasibleError("budget exceeds the total mass")
    best = None
    for lo in range(n + 1):
        for hi in range(lo, n + 1):
            width, top = tail[lo] - tail[hi], tail[hi]
            if width > 0:
                level = (k - top) / width
                if slack:
                    if top > k:
                        continue
                    level = min(level, Fraction(1))
                elif not 0 <= level <= 1:
                    continue
            else:
                if (top > k) if slack else (top != k):
                    continue
                level = Fraction(0)
            value = level * (gain[lo] - gain[hi]) + gain[hi]
            if best is None or value > best[3]:
                best = (lo, hi, level, value)
    if best is None:
        raise InfeasibleError("no feasible two-step rule")
    return best


def lp_maximize(objective, spec, method="auto"):
    """Maximise ``sum(objective * mass * q)`` over the polytope of ``spec``.

    ``method="two_step"`` runs the 1D structured search; ``"vertex_scan"``
    scans :func:`enumerate_vertices`. ``"auto"`` picks the former on 1D grids.
    Returns ``(AllocationRule, value)``.
    """
    if method == "auto":
        method = "two_step" if spec.domain.kind == "line" else "vertex_scan"
    pi = as_numeric(objective.values if hasattr(objective, "values") else objective)
    if pi.size != spec.domain.size:
        raise StructuralError("objective and domain differ in size")
    if to_exact(spec.k) > to_exact(spec.measure.total):
        raise InfeasibleError("budget exceeds the total mass")
    if method == "two_step":
        rule, value = two_step_search(pi, spec.measure, spec.k, slack=spec.slack)
        return materialize(rule), value
    if method != "vertex_scan":
        raise DomainError(f"unknown method {method!r}")
    weights = [to_exact(p) * to_exact(m) for p, m in zip(pi, spec.measure.mass)]
    best, best_value = None, None
    for vertex in enumerate_vertices(spec):
        value = sum((w * to_exact(v) for w, v in zip(weights, vertex.values)), Fraction(0))
        if best is None or value > best_value:
            best, best_value = vertex, value
    if best is None:
        raise InfeasibleError("polytope has no vertices")
    return best, best_value if spec.exact else float(best_value)
