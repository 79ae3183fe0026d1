import math

import numpy as np
import pytest

from cprs.dynamics import (
    Trajectory,
    gillespie_step,
    simulate,
    total_rate,
    transition_rates,
)
from cprs.errors import AbsorbingStateError
from cprs.lattice import BoxGeometry, Configuration, wild_set
from cprs.params import Params


def expected_rates(state, n1, n3, lam1, lam2, r, symmetric):
    """Transition table written out case by case, as an independent
    check of the implementation's single formula."""
    birth = lam1 * n1 + lam2 * n3
    if state == 0:
        rows = [(1, birth), (2, r)]
    elif state == 1:
        rows = [(0, 1.0), (3, r)]
    elif state == 2:
        rows = [(0, 1.0)] + ([(3, birth)] if symmetric else [])
    else:
        rows = [(1, 1.0), (2, 1.0)]
    return [(t, rate) for t, rate in rows if rate != 0]


class TestTransitionRates:
    @pytest.mark.parametrize("symmetric", [True, False])
    def test_exhaustive_d1(self, symmetric):
        lam1, lam2, r = 2.0, 0.5, 1.5
        variant = "symmetric" if symmetric else "asymmetric"
        p = Params(lam1, lam2, r, variant=variant)
        g = BoxGeometry(1, 3, "empty-exterior")
        for state in range(4):
            for n1 in range(3):
                for n3 in range(3 - n1):
                    neighbors = [1] * n1 + [3] * n3 + [0] * (2 - n1 - n3)
                    c = Configuration(
                        g, [neighbors[0], state, neighbors[1]]
                    )
                    assert transition_rates(c, 1, p) == expected_rates(
                        state, n1, n3, lam1, lam2, r, symmetric
                    )

    def test_state0_example(self):
        p = Params(2.0, 0.5, 1.0)
        g = BoxGeometry(1, 5, "empty-exterior")
        c = Configuration(g, [1, 1, 0, 3, 0])
        assert transition_rates(c, 2, p) == [(1, 2.0 * 1 + 0.5 * 1), (2, 1.0)]
        c2 = Configuration(g, [0, 1, 0, 1, 0])
        assert transition_rates(c2, 2, p) == [(1, 4.0), (2, 1.0)]

    def test_state0_n1_2_n3_1_not_possible_d1_uses_d2(self):
        # (n1, n3) = (2, 1) needs three neighbours: use a 2D box
        p = Params(2.0, 0.5, 1.0, d=2)
        g = BoxGeometry(2, 3, "empty-exterior")
        c = Configuration(g)
        centre = g.index((1, 1))
        c.set_state(g.index((0, 1)), 1)
        c.set_state(g.index((2, 1)), 1)
        c.set_state(g.index((1, 0)), 3)
        assert transition_rates(c, centre, p) == [(1, 4.5), (2, 1.0)]

    def test_state3_unit_deaths(self):
        p = Params(2.0, 0.5, 1.0)
        g = BoxGeometry(1, 3)
        c = Configuration(g, [1, 3, 1])
        assert transition_rates(c, 1, p) == [(1, 1.0), (2, 1.0)]

    def test_state2_variant_difference(self):
        g = BoxGeometry(1, 3, "empty-exterior")
        c = Configuration(g, [1, 2, 0])
        sym = Params(2.0, 0.5, 1.0, variant="symmetric")
        asym = Params(2.0, 0.5, 1.0, variant="asymmetric")
        assert transition_rates(c, 1, sym) == [(0, 1.0), (3, 2.0)]
        assert transition_rates(c, 1, asym) == [(0, 1.0)]


class TestTotalRate:
    def test_all_empty_r0(self):
        p = Params(2.0, 0.5, 0.0)
        assert total_rate(Configuration(BoxGeometry(1, 6)), p) == 0.0

    def test_all_empty_releases_only(self):
        p = Params(2.0, 0.5, 0.5)
        assert total_rate(Configuration(BoxGeometry(1, 6)), p) == 0.5 * 6

    def test_isolated_mixed_site(self):
        p = Params(2.0, 0.5, 1.0)
        g = BoxGeometry(1, 5)
        c = Configuration(g)
        c.set_state(2, 3)
        # two unit death clocks at the site plus birth clocks at the
        # two empty neighbours (lambda2 each) plus releases at empty sites
        assert total_rate(c, p) == pytest.approx(2.0 + 2 * 0.5 + 4 * 1.0)

    def test_isolated_mixed_site_r1_no_neighbor_births(self):
        p = Params(2.0, 0.0, 1.0)
        g = BoxGeometry(1, 5)
        c = Configuration.filled(g, 0)
        c.set_state(2, 3)
        assert total_rate(c, p) == 2.0 + 4 * 1.0


class TestGillespieStep:
    def test_absorbing(self):
        p = Params(2.0, 0.5, 0.0)
        c = Configuration(BoxGeometry(1, 4))
        with pytest.raises(AbsorbingStateError):
            gillespie_step(c, p, np.random.default_rng(0))

    def test_single_wild_flip_distribution(self):
        # lone state-1 site, empty lambda-neighbourhood: flips to 0 with
        # probability 1/(1+r) and to 3 with probability r/(1+r)
        r = 1.5
        p = Params(0.0, 0.0, r)
        g = BoxGeometry(1, 1)
        c = Configuration(g, [1])
        rng = np.random.default_rng(7)
        n = 20000
        to_sterile = 0
        for _ in range(n):
            out, _ = gillespie_step(c, p, rng)
            to_sterile += out.state(0) == 3
        want = r / (1.0 + r)
        sigma = math.sqrt(want * (1 - want) / n)
        assert abs(to_sterile / n - want) < 3 * sigma

    def test_flip_frequencies_match_rates(self):
        # empirical per-transition frequencies across many one-step draws
        p = Params(2.0, 0.5, 1.0)
        g = BoxGeometry(1, 4, "empty-exterior")
        c = Configuration(g, [1, 0, 3, 2])
        # frozen per-site transition rates for this configuration
        table = {
            (0, 0): 1.0, (0, 3): 1.0,            # site 0 in state 1
            (1, 1): 2.0 + 0.5, (1, 2): 1.0,      # site 1 in state 0
            (2, 1): 1.0, (2, 2): 1.0,            # site 2 in state 3
            (3, 0): 1.0, (3, 3): 0.5,            # site 3 in state 2 (sym)
        }
        total = sum(table.values())
        rng = np.random.default_rng(21)
        n = 100_000
        counts = {k: 0 for k in table}
        for _ in range(n):
            out, _ = gillespie_step(c, p, rng)
            changed = [x for x in range(4) if out.state(x) != c.state(x)]
            assert len(changed) == 1
            counts[(changed[0], out.state(changed[0]))] += 1
        for key, rate in table.items():
            want = rate / total
            sigma = math.sqrt(want * (1 - want) / n)
            assert abs(counts[key] / n - want) < 3 * sigma, key

    def test_seed_reproducibility(self):
        p = Params(2.0, 0.5, 1.0)
        c = Configuration(BoxGeometry(1, 6), [0, 1, 0, 3, 2, 0])
        a, dta = gillespie_step(c, p, np.random.default_rng(5))
        b, dtb = gillespie_step(c, p, np.random.default_rng(5))
        assert a == b and dta == dtb


class TestSimulate:
    def test_pure_death_chain(self):
        p = Params(0.0, 0.0, 0.0)
        g = BoxGeometry(1, 5)
        c = Configuration.from_wild_sites(g, [2])
        traj = simulate(c, p, 1e9, np.random.default_rng(3))
        assert len(traj.events) == 1
        assert traj.events[0][1:] == (2, 1, 0)
        assert traj.wild_extinct()
        assert traj.stopped == "absorbed"

    def test_r0_never_reaches_sterile_states(self):
        p = Params(3.0, 0.5, 0.0)
        g = BoxGeometry(1, 10)
        for seed in range(30):
            traj = simulate(
                Configuration.from_wild_sites(g, [5]), p, 3.0,
                np.random.default_rng(seed),
            )
            assert set(traj.new_states.tolist()) <= {0, 1}

    def test_asymmetric_never_2_to_3(self):
        p = Params(3.0, 0.5, 2.0, variant="asymmetric")
        g = BoxGeometry(1, 10)
        for seed in range(30):
            traj = simulate(
                Configuration.from_wild_sites(g, [5]), p, 3.0,
                np.random.default_rng(seed),
            )
            for _, _, old, new in traj.events:
                assert not (old == 2 and new == 3)

    def test_replay_matches_terminal(self):
        p = Params(3.0, 0.5, 1.0)
        g = BoxGeometry(2, 4)
        traj = simulate(
            Configuration.from_wild_sites(g, [5]), p, 2.0,
            np.random.default_rng(11),
        )
        assert traj.replay() == traj.terminal
        assert (np.diff(traj.times) > 0).all()

    def test_seed_reproducibility(self):
        p = Params(3.0, 0.5, 1.0)
        g = BoxGeometry(1, 12)
        runs = [
            simulate(
                Configuration.from_wild_sites(g, [6]), p, 4.0,
                np.random.default_rng(17),
            )
            for _ in range(2)
        ]
        assert runs[0].events == runs[1].events
        assert runs[0].terminal == runs[1].terminal

    def test_r0_matches_reference_contact_process(self):
        # independent oracle: a minimal direct contact-process sampler
        lam = 2.0
        g = BoxGeometry(1, 6, "periodic")
        t_max = 1.5

        def reference_terminal_count(rng):
            occ = np.zeros(6, dtype=int)
            occ[3] = 1
            t = 0.0
            while True:
                rates = []
                for x in range(6):
                    if occ[x]:
                        rates.append((x, 0, 1.0))
                    else:
                        k = occ[(x - 1) % 6] + occ[(x + 1) % 6]
                        if k:
                            rates.append((x, 1, lam * k))
                total = sum(r for _, _, r in rates)
                if total == 0:
                    return 0
                t += rng.exponential(1.0 / total)
                if t > t_max:
                    return int(occ.sum())
                u = rng.random() * total
                acc = 0.0
                for x, new, rate in rates:
                    acc += rate
                    if u < acc:
                        occ[x] = new
                        break

        n = 4000
        ref_rng = np.random.default_rng(100)
        ref = np.bincount(
            [reference_terminal_count(ref_rng) for _ in range(n)], minlength=7
        )
        p = Params(lam, 0.5, 0.0)
        got = np.zeros(7, dtype=int)
        for seed in range(n):
            traj = simulate(
                Configuration.from_wild_sites(g, [3]), p, t_max,
                np.random.default_rng(200000 + seed), record=False,
            )
            got[traj.terminal.wild_count()] += 1
        from scipy.stats import chi2_contingency

        table = np.vstack([ref, got])
        keep = table.sum(axis=0) >= 5
        table = np.column_stack(
            [table[:, keep], table[:, ~keep].sum(axis=1)]
        ) if (~keep).any() else table[:, keep]
        _, pvalue, _, _ = chi2_contingency(table)
        assert pvalue > 0.001

    def test_trajectory_export(self, tmp_path):
        p = Params(3.0, 0.5, 1.0)
        g = BoxGeometry(1, 8)
        traj = simulate(
            Configuration.from_wild_sites(g, [4]), p, 1.0,
            np.random.default_rng(2), seed=2,
        )
        csv = tmp_path / "t.csv"
        traj.to_csv(csv)
        lines = csv.read_text().splitlines()
        assert lines[0] == "time,site,old,new"
        assert len(lines) == 1 + len(traj.events)
        js = tmp_path / "s.json"
        traj.summary_json(js)
        import json

        summary = json.loads(js.read_text())
        assert summary["seed"] == 2
        assert summary["wild_extinct"] == traj.wild_extinct()
