"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible even without
``-s``) and then asserts, so the summary and the pytest verdict agree.
"""

import json
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from contestdesign.contest import (
    ConstantDesign,
    ContestPrimitives,
    ThresholdDesign,
    TwoStepDesign,
    two_atom_profile,
    verify_equilibrium,
    win_probabilities,
)
from contestdesign.extreme_oracle import PolytopeSpec, certify_two_step, enumerate_vertices, lp_maximize
from contestdesign.measures import GridDomain, GridMeasure, NoiseKernel, pushforward
from contestdesign.rules import (
    AllocationRule,
    constant_rule,
    majorizes,
    majorizing_pair,
    materialize,
    random_monotone_rule,
)
from contestdesign.solver import BilinearSurface, ObjectiveSpec, fan_lorentz_check, optimal_rule, sweep_budget

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert passed, detail

    return emit


def rational_masses(rng, n):
    raw = [int(v) for v in rng.integers(1, 50, size=n)]
    return [Fraction(r, sum(raw)) for r in raw]


def test_criterion_1_two_step_certification(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    total = certified = 0
    problems = []

    def audit(spec, label):
        nonlocal total, certified
        for vertex in enumerate_vertices(spec):
            total += 1
            cert = certify_two_step(vertex)
            exact = all(isinstance(v, Fraction) for v in vertex.values)
            ok = cert.certified and cert.residual == 0 and exact and cert.decomposition.a1 <= cert.decomposition.a2
            certified += ok
            if not ok:
                problems.append(label)

    for n in range(2, 9):
        d = GridDomain.linspace(0, 1, n)
        for _ in range(5):
            mu = GridMeasure(d, rational_masses(rng, n))
            for k in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
                for mode in ("equality", "inequality"):
                    audit(PolytopeSpec(d, mu, k, mode), (n, k, mode))
    for shape in ((2, 2), (2, 3), (3, 3)):
        d = GridDomain.plane(range(shape[0]), range(shape[1]))
        mu = GridMeasure.uniform(d, exact=True)
        for k in (Fraction(1, 4), Fraction(1, 2)):
            for mode in ("equality", "inequality"):
                audit(PolytopeSpec(d, mu, k, mode), (shape, k, mode))
    elapsed = time.perf_counter() - start
    report(
        1,
        "every enumerated vertex is an exact two-step rule",
        certified == total and total > 0 and elapsed < 60,
        f"{certified}/{total} vertices certified in {elapsed:.1f}s (limit 60s); failures: {problems[:3]}",
    )


def _walk(rng, n, case, exact):
    """Random-walk objective of the requested shape (resampled until it has it)."""
    low, high = {"increasing": (0, 6), "decreasing": (-5, 1), "non-monotone": (-5, 6)}[case]
    d = GridDomain.linspace(0, 1, n)
    while True:
        values = np.cumsum(rng.integers(low, high, size=n))
        pi = np.array([Fraction(int(v)) for v in values], dtype=object) if exact else values.astype(float)
        spec = ObjectiveSpec(d, pi)
        strict = case != "decreasing" or np.any(np.diff(values) < 0)
        if spec.classification == case and strict:
            return spec


def test_criterion_2_optimal_rule_matches_lp(report):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    checked = exact_checked = mismatches = 0
    for case in ("increasing", "decreasing", "non-monotone"):
        for i in range(200):
            small = i % 4 == 0
            low = 3 if case == "non-monotone" else 2
            n = int(rng.integers(low, 15)) if small else int(rng.integers(15, 202))
            d = GridDomain.linspace(0, 1, n)
            if small:
                mu = GridMeasure(d, rational_masses(rng, n))
                k = Fraction(int(rng.integers(1, 100)), 100)
            else:
                w = rng.random(n) + 0.01
                mu = GridMeasure(d, w / w.sum())
                k = float(rng.uniform(0.01, 0.99))
            pi = _walk(rng, n, case, exact=small)
            res = optimal_rule(pi, mu, k)
            spec = PolytopeSpec(d, mu, k)
            _, two_step = lp_maximize(pi, spec, method="two_step")
            gap = abs(float(res.payoff) - float(two_step))
            worst = max(worst, gap)
            checked += 1
            if gap > 1e-9:
                mismatches += 1
            if small:
                _, scanned = lp_maximize(pi, spec, method="vertex_scan")
                exact_checked += 1
                if not (res.payoff == two_step == scanned):
                    mismatches += 1
    elapsed = time.perf_counter() - start
    report(
        2,
        "optimal rule payoff equals the LP optimum",
        mismatches == 0 and elapsed < 120,
        f"{checked} instances, {exact_checked} also vertex-scanned exactly; max gap {worst:.2e} (tol 1e-9); "
        f"{mismatches} mismatches; {elapsed:.1f}s (limit 120s)",
    )


def test_criterion_3_two_atom_gap(report):
    rng = np.random.default_rng(3)
    gamma = Fraction(1, 2)
    bad = []

    def gap_for(k, pi_y, pi_z):
        d = GridDomain.line([0.25, 0.75])
        mu = GridMeasure(d, [gamma, 1 - gamma])
        pi = ObjectiveSpec(d, np.array([pi_y, pi_z], dtype=object))
        best = optimal_rule(pi, mu, k)
        beta = materialize(best.rule).values[0]
        flat = sum(v * p * m for v, p, m in zip(materialize(constant_rule(d, k)).values, pi.values, mu.mass))
        return best.payoff, flat, beta

    for _ in range(50):
        k = Fraction(int(rng.integers(51, 100)), 100)
        pi_y = Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 10)))
        pi_z = pi_y + Fraction(int(rng.integers(0, 30)), int(rng.integers(1, 10)))
        best, flat, beta = gap_for(k, pi_y, pi_z)
        if best - flat != (1 - k) * (1 - gamma) * (pi_z - pi_y) or beta != (k - (1 - gamma)) / gamma:
            bad.append((k, pi_y, pi_z))
    best, flat, _ = gap_for(Fraction(3, 4), Fraction(0), Fraction(1))
    anchor = (best, flat, best - flat) == (Fraction(1, 2), Fraction(3, 8), Fraction(1, 8))
    report(
        3,
        "two-atom payoff gap identity in exact arithmetic",
        not bad and anchor,
        f"{50 - len(bad)}/50 random instances exact; k=3/4 instance gives gap {best - flat} "
        f"(payoffs {best} vs {flat})",
    )


def test_criterion_4_concave_sweep(report):
    rng = np.random.default_rng(4)
    ks = np.linspace(0.02, 0.98, 50)
    worst_second, worst_match = -np.inf, 1.0
    failures = 0
    for i in range(20):
        n = (501, 1001, 2001)[i % 3]
        d = GridDomain.linspace(0, 1, n)
        x = d.points
        p = 1 + 0.25 * (i % 8)
        pi = ObjectiveSpec(d, x**p + 0.3 * (i % 2) * np.log1p(x))
        a, b = 1 + 2 * rng.random(), 1 + 2 * rng.random()
        mu = GridMeasure.from_density(d, x ** (a - 1) * (1 - x) ** (b - 1) + 1e-3)
        table = sweep_budget(pi, mu, ks)
        worst_second = max(worst_second, table.max_second_difference)
        worst_match = min(worst_match, table.marginal_match_fraction)
        failures += not (table.max_second_difference <= 1e-9 and table.marginal_match_fraction >= 0.95)
    report(
        4,
        "payoff is concave in the budget and its slope tracks the objective at the cutoff",
        failures == 0,
        f"20 instances x 50 budgets; max second difference {worst_second:.2e} (tol 1e-9); "
        f"worst marginal match {worst_match:.3f} (need 0.95)",
    )


def test_criterion_5_fan_lorentz(report):
    d = GridDomain.linspace(0, 1, 101)
    mu = GridMeasure.uniform(d)
    good = fan_lorentz_check(BilinearSurface.from_function(lambda u, t: u * t, d), mu, samples=1000, seed=5)
    bad = fan_lorentz_check(BilinearSurface.from_function(lambda u, t: u * (1 - t), d), mu, samples=1000, seed=5)
    witness_ok = bad.witness is not None and bad.witness["phi_f"] < bad.witness["phi_g"]
    if witness_ok:
        f = AllocationRule(d, bad.witness["f"])
        g = AllocationRule(d, bad.witness["g"])
        witness_ok = majorizes(f, g, mu)
    report(
        5,
        "Fan-Lorentz conditions separate order-preserving surfaces",
        good.passed and good.samples == 1000 and not bad.supermodular and witness_ok,
        f"u*t: conditions {good.conditions_hold}, {good.violations}/1000 violations; "
        f"u*(1-t): supermodular {bad.supermodular}, {bad.violations}/1000 violations, witness verified {witness_ok}",
    )


def test_criterion_6_equilibrium(report):
    details, ok = [], True
    for n in (101, 1001):
        d = GridDomain.linspace(0, 1, n)
        prim = ContestPrimitives.power_cost(d)
        for k in (0.2, 0.4, 0.8):
            rep = verify_equilibrium(two_atom_profile(prim, k), prim, k)
            star_ok = rep.is_equilibrium and rep.max_gain <= 1e-9 and rep.zero_profit
            gains = [
                verify_equilibrium(GridMeasure.dirac(d, d.points[i]), prim, k).max_gain for i in range(1, n - 1)
            ]
            ok &= star_ok and min(gains) > 0
            details.append(f"n={n},k={k}: two-atom gain {rep.max_gain:.1e}, min single-atom gain {min(gains):.2e}")
    report(6, "two-atom profile is an equilibrium and no interior atom is", ok, "; ".join(details))


def test_criterion_7_noisy_performance(report):
    rng = np.random.default_rng(7)
    effort = GridDomain.linspace(0, 1, 101)
    perf = GridDomain.linspace(-0.3, 1.3, 81)
    kernel = NoiseKernel.logistic(effort, perf, 0.1)
    prim = ContestPrimitives.power_cost(effort, kernel=kernel)
    k = 0.4
    profiles = [GridMeasure.uniform(effort), two_atom_profile(prim, k), GridMeasure.dirac(effort, 0.5)]
    for _ in range(7):
        w = rng.random(101) ** 4
        profiles.append(GridMeasure(effort, w / w.sum()))
    max_err, monotone = 0.0, True
    for mu in profiles:
        for design in (ThresholdDesign(k), ConstantDesign(k), TwoStepDesign(k, 0.2, 0.9)):
            wp = win_probabilities(design, mu, prim)
            max_err = max(max_err, abs(float(np.dot(mu.mass, wp)) - k))
            monotone &= bool(np.all(np.diff(wp) >= -1e-12))
    pairs_ok = 0
    for i in range(100):
        mu = profiles[i % len(profiles)]
        nu = pushforward(mu, kernel)
        f, g = majorizing_pair(nu, rng, base=random_monotone_rule(perf, rng, nu, k))
        ff = AllocationRule(effort, np.clip(kernel.compose(f.values), 0, 1))
        gg = AllocationRule(effort, np.clip(kernel.compose(g.values), 0, 1))
        pairs_ok += majorizes(f, g, nu) and majorizes(ff, gg, mu)
    report(
        7,
        "budget, monotonicity and majorization survive performance noise",
        max_err <= 1e-12 and monotone and pairs_ok == 100,
        f"max budget error {max_err:.1e} (tol 1e-12); monotone {monotone}; {pairs_ok}/100 pairs keep the order",
    )


def _cli(command, config, out, *extra):
    return subprocess.Popen(
        [sys.executable, "-m", "contestdesign", command, "--config", str(config), "--out", str(out), *extra],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
    )


def test_criterion_8_determinism(report, tmp_path):
    jobs = {
        "solve": ("bump.json", ["solve.json"], []),
        "sweep": ("increasing.json", ["sweep.json", "sweep.csv"], ["--jobs", "{j}"]),
        "equilibrium": ("bump.json", ["equilibrium.json", "trace.csv"], []),
    }
    identical, compared = 0, 0
    for command, (config, files, extra) in jobs.items():
        runs = []
        # two sequential runs, then three concurrent ones with different thread counts
        for r in range(2):
            out = tmp_path / f"{command}-seq{r}"
            assert _cli(command, ROOT / "configs" / config, out, *[e.format(j=1) for e in extra]).wait(timeout=300) == 0
            runs.append(out)
        procs = []
        for r in range(3):
            out = tmp_path / f"{command}-par{r}"
            procs.append(_cli(command, ROOT / "configs" / config, out, *[e.format(j=2 + 2 * r) for e in extra]))
            runs.append(out)
        assert all(p.wait(timeout=300) == 0 for p in procs)
        for f in files:
            ref = (runs[0] / f).read_bytes()
            for other in runs[1:]:
                compared += 1
                identical += (other / f).read_bytes() == ref
    hashes = {json.loads((tmp_path / "solve-seq0" / "solve.json").read_text())["config_hash"]}
    report(
        8,
        "reruns are byte-identical, sequential or parallel",
        identical == compared and len(hashes) == 1,
        f"{identical}/{compared} output files identical across 5 runs per command",
    )
