import math

import numpy as np
import pytest

from cprs.lattice import BoxGeometry, Configuration
from cprs.montecarlo import (
    SurvivalEstimate,
    coupled_r_sweep,
    estimate_rc,
    estimate_rc_both_variants,
    estimate_survival,
    sweep,
    trial_generator,
    wilson_interval,
)
from cprs.params import Params


class TestWilson:
    def test_reference_value(self):
        # standard published example: 8 successes in 10 trials
        lo, hi = wilson_interval(8, 10)
        assert lo == pytest.approx(0.4902, abs=2e-4)
        assert hi == pytest.approx(0.9433, abs=2e-4)

    def test_brackets_point_estimate(self):
        for s, n in [(0, 10), (10, 10), (3, 17), (250, 500)]:
            lo, hi = wilson_interval(s, n)
            assert 0.0 <= lo <= s / n <= hi <= 1.0

    def test_error_on_zero_trials(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


class TestEstimateSurvival:
    def test_pure_death_matches_exponential(self):
        # no births, no releases: the lone wild site survives to t with
        # probability exp(-t) exactly
        p = Params(0.0, 0.0, 0.0)
        box = BoxGeometry(1, 4)
        t = 1.0
        est = estimate_survival(p, box, t, 4000, 31)
        want = math.exp(-t)
        sigma = math.sqrt(want * (1 - want) / est.trials)
        assert abs(est.p_hat - want) < 3 * sigma

    def test_determinism(self):
        p = Params(4.0, 0.5, 0.5)
        box = BoxGeometry(1, 24)
        a = estimate_survival(p, box, 5.0, 60, 42)
        b = estimate_survival(p, box, 5.0, 60, 42)
        assert a == b

    def test_backends_agree_statistically(self):
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 10)
        g = estimate_survival(p, box, 3.0, 400, 5, backend="gillespie")
        s = estimate_survival(p, box, 3.0, 400, 6, backend="graphical")
        assert g.ci_low <= s.ci_high and s.ci_low <= g.ci_high

    def test_supercritical_vs_huge_release_rate(self):
        box = BoxGeometry(1, 60)
        alive = estimate_survival(Params(4.0, 0.5, 0.01), box, 20.0, 120, 9)
        dead = estimate_survival(Params(4.0, 0.5, 50.0), box, 20.0, 120, 9)
        assert alive.p_hat > 0.3
        assert dead.p_hat < 0.05

    def test_trial_streams_are_stable_under_growth(self):
        # first trials are unchanged when the count grows
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 10)
        small = [trial_generator(3, i).random(2).tolist() for i in range(5)]
        big = [trial_generator(3, i).random(2).tolist() for i in range(9)]
        assert big[:5] == small


class TestCoupledRSweep:
    def test_pathwise_monotone_and_zero_violations(self):
        p = Params(4.0, 0.5, 0.0)
        box = BoxGeometry(1, 30)
        res = coupled_r_sweep([0.0, 0.5, 1.0, 2.0, 5.0], p, box, 8.0, 80, 77)
        assert res.order_violations(non_increasing=True) == 0
        phats = [e.p_hat for e in res.estimates]
        assert all(a >= b for a, b in zip(phats, phats[1:]))

    def test_repeated_grid_value_identical_columns(self):
        p = Params(4.0, 0.5, 0.0)
        box = BoxGeometry(1, 20)
        res = coupled_r_sweep([1.0, 1.0], p, box, 5.0, 50, 3)
        assert np.array_equal(res.indicators[:, 0], res.indicators[:, 1])

    def test_r0_reduces_to_basic_contact_process(self):
        p = Params(3.0, 0.5, 0.0)
        box = BoxGeometry(1, 24)
        res = coupled_r_sweep([0.0], p, box, 6.0, 300, 11)
        direct = estimate_survival(
            Params(3.0, 0.0, 0.0), box, 6.0, 300, 12, backend="gillespie"
        )
        assert res.estimates[0].ci_low <= direct.ci_high
        assert direct.ci_low <= res.estimates[0].ci_high

    def test_unsorted_grid_rejected(self):
        p = Params(3.0, 0.5, 0.0)
        with pytest.raises(ValueError):
            coupled_r_sweep([1.0, 0.5], p, BoxGeometry(1, 10), 2.0, 10, 1)


class TestSweep:
    def test_lambda2_sweep_non_decreasing(self):
        p = Params(4.0, 0.5, 1.0)
        box = BoxGeometry(1, 24)
        res = sweep("lambda2", [0.0, 0.2, 0.4], p, box, 6.0, 60, 13)
        assert res.order_violations(non_increasing=False) == 0

    def test_lambda1_sweep_non_decreasing(self):
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 24)
        res = sweep("lambda1", [1.0, 2.0, 4.0], p, box, 6.0, 60, 13)
        assert res.order_violations(non_increasing=False) == 0

    def test_empty_wild_initial_all_zero(self):
        p = Params(4.0, 0.5, 1.0)
        box = BoxGeometry(1, 12)
        res = sweep(
            "r", [0.0, 1.0], p, box, 3.0, 20, 5,
            initial=Configuration(box),
        )
        assert all(e.survivals == 0 for e in res.estimates)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep("r", [], Params(2.0, 0.5, 1.0), BoxGeometry(1, 8), 2.0, 10, 1)

    def test_csv_output(self, tmp_path):
        p = Params(4.0, 0.5, 1.0)
        res = sweep("r", [0.0, 1.0], p, BoxGeometry(1, 12), 2.0, 20, 5)
        path = tmp_path / "sweep.csv"
        res.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "param_value,trials,survivals,p_hat,ci_low,ci_high"
        assert len(lines) == 3

    def test_ci_width_shrinks_with_trials(self):
        p = Params(3.0, 0.5, 0.5)
        box = BoxGeometry(1, 20)
        small = estimate_survival(p, box, 5.0, 200, 21)
        big = estimate_survival(p, box, 5.0, 800, 21)
        w_small = small.ci_high - small.ci_low
        w_big = big.ci_high - big.ci_low
        # doubling trials twice should halve the width, within 20%
        assert w_big < w_small * 0.5 * 1.2
        assert w_big > w_small * 0.5 * 0.8


class TestEstimateRc:
    def test_finite_bracket_supercritical(self):
        ce = estimate_rc(
            4.0, 0.5, "symmetric", BoxGeometry(1, 40), 15.0, 80, 0.25, 97
        )
        assert ce.flag is None
        assert 0 < ce.r_low < ce.r_high
        assert ce.r_high - ce.r_low <= 0.25 + 1e-12
        rs = [r for r, _ in ce.points]
        phats = [e.p_hat for _, e in ce.points]
        assert rs == sorted(rs)
        assert all(a >= b for a, b in zip(phats, phats[1:]))

    def test_subcritical_flag(self):
        ce = estimate_rc(
            1.0, 0.5, "symmetric", BoxGeometry(1, 40), 15.0, 60, 0.25, 97
        )
        assert ce.flag == "subcritical-at-r0"

    def test_variant_brackets_ordered(self):
        both = estimate_rc_both_variants(
            4.0, 0.5, BoxGeometry(1, 40), 15.0, 60, 0.25, 41
        )
        sym, asym = both["symmetric"], both["asymmetric"]
        assert asym.r_low <= sym.r_low
        assert asym.r_high <= sym.r_high
        assert asym.theta == sym.theta

    def test_determinism(self):
        kwargs = dict(box=BoxGeometry(1, 30), t_max=10.0, trials=40,
                      resolution=0.5, seed=123)
        a = estimate_rc(4.0, 0.5, "symmetric", **kwargs)
        b = estimate_rc(4.0, 0.5, "symmetric", **kwargs)
        assert a.r_low == b.r_low and a.r_high == b.r_high
        assert [e.p_hat for _, e in a.points] == [e.p_hat for _, e in b.points]
