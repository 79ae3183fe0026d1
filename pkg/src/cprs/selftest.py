"""Built-in invariant suite: order tables, marginal projection, backend
equivalence, equilibrium residuals, and bound-table reproduction.

Each check prints one pass/fail line; the suite returns False as soon
as any check fails (all are evaluated). ``inject_projection_typo``
corrupts one coupling-table rate on purpose so the projection check
demonstrably catches a bad row.
"""
from __future__ import annotations

import time
from fractions import Fraction

import numpy as np

from . import coupling, graphical, meanfield, quenched
from .lattice import BoxGeometry, Configuration, compare_states, wild_set
from .params import Params


def _check(name, ok, detail="") -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail and not ok:
        line += f" ({detail})"
    print(line)
    return bool(ok)


def check_state_order() -> bool:
    rank = {2: 0, 0: 1, 3: 2, 1: 3}
    ok = True
    for a in range(4):
        for b in range(4):
            want = (rank[a] > rank[b]) - (rank[a] < rank[b])
            ok &= compare_states(a, b) == want
    return _check("state order 2 < 0 < 3 < 1 over all 16 pairs", ok)


def check_projection(inject_typo: bool = False) -> bool:
    p1 = Params(0.5, 0.2, 2.0)
    p2 = Params(0.9, 0.3, 1.5)
    report = coupling.check_marginal_projection(p1, p2, kind="sym", d=1)
    ok = report.ok and not report.negative_rates
    detail = ""
    if inject_typo:
        # corrupt one shared-clock row and show the check localises it
        original = coupling.basic_pair_rows

        def corrupted(pair, counts, rates1, rates2, sym1, sym2):
            rows = original(pair, counts, rates1, rates2, sym1, sym2)
            if pair == (1, 1):
                rows = [
                    (t, r + Fraction(1, 2) if t == (0, 0) else r)
                    for t, r in rows
                ]
            return rows

        coupling.basic_pair_rows = corrupted
        try:
            bad = coupling.check_marginal_projection(p1, p2, kind="sym", d=1)
        finally:
            coupling.basic_pair_rows = original
        caught = any(v.pair_state == (1, 1) for v in bad.violations)
        detail = f"typo caught at rows {sorted({v.pair_state for v in bad.violations})}"
        ok = ok and caught
        print(f"[info] injected typo localised: {detail}")
    return _check(
        "marginal projection identity (all pair states, d=1 classes)", ok,
        f"{len(report.violations)} violations",
    )


def check_backend_equivalence(n_schedules: int = 40) -> bool:
    box = BoxGeometry(1, 8)
    p = Params(2.0, 0.5, 1.0)
    ok = True
    for s in range(n_schedules):
        rng = np.random.default_rng(1000 + s)
        sched = graphical.sample_schedule(box, p, 2.0, rng)
        for variant in ("symmetric", "asymmetric"):
            traj = graphical.apply_schedule(
                Configuration.from_wild_sites(box, [4]), sched, variant
            )
            reach = graphical.active_paths({4}, sched, variant, 2.0)
            ok &= wild_set(traj.terminal) == reach
    return _check(
        f"graphical backends agree exactly on {n_schedules} random schedules", ok
    )


def check_equilibria() -> bool:
    ok = True
    for r in (0.25, 1.0, 3.0):
        p = Params(2.0, 0.25, r)
        px = meanfield.exact_params(p)
        for system in meanfield.SYSTEMS:
            triv = meanfield.trivial_equilibrium(system, p, exact=True)
            res = meanfield.rhs(system, triv, px, version=meanfield.CORRECTED)
            ok &= all(c == 0 for c in res)
    return _check("trivial equilibrium residual identically zero", ok)


def check_bound_table() -> bool:
    report = quenched.bounds_verification_report()
    matches = sum(1 for c in report["cells"] if c["match"])
    flagged = {
        (c["lambda1"], c["lambda2"], c["bound"])
        for c in report["discrepancies"]
    }
    ok = matches == 15 and flagged == {(10.0, 0.8, "lower")}
    return _check(
        "bound table: 15/16 cells match, (10, 0.8) lower flagged", ok,
        f"matches={matches}, flagged={flagged}",
    )


def run_selftest(quick: bool = False, inject_projection_typo: bool = False) -> bool:
    t0 = time.time()
    results = [
        check_state_order(),
        check_projection(inject_typo=inject_projection_typo),
        check_backend_equivalence(n_schedules=10 if quick else 40),
        check_equilibria(),
        check_bound_table(),
    ]
    ok = all(results)
    print(
        f"[{'PASS' if ok else 'FAIL'}] selftest "
        f"({sum(results)}/{len(results)} checks, {time.time() - t0:.1f}s)"
    )
    return ok
