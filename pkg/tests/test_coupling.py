from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from cprs.coupling import (
    KIND_ASYM,
    KIND_ASYM_VS_SYM,
    KIND_SYM,
    ORDERED_PAIRS,
    PAIR_ZERO_THREE,
    PairConfiguration,
    UNORDERED_PAIRS,
    asymmetric_rate_family,
    basic_pair_rows,
    check_conditions,
    check_marginal_projection,
    contact_rate_family_high,
    contact_rate_family_low,
    coupled_rates,
    coupled_step,
    lower_birth_intensity,
    neighbor_class_counts,
    order_preserving_zero_three_rows,
    simulate_coupled,
    symmetric_rate_family,
    upper_birth_surplus,
    verify_borrello_inequalities,
)
from cprs.errors import ContractViolationError
from cprs.lattice import BoxGeometry, Configuration, STATE_RANK, compare_configs
from cprs.params import Params

R1 = (Fraction(2), Fraction(1, 2), Fraction(2))      # lower (lam1, lam2, r)
R2 = (Fraction(3), Fraction(1), Fraction(1))          # upper
COUNTS = (1, 1, 0, 1, 0)                               # n11, n31, n33, ne1, ne3


def frozen_shared_clock_tables(counts, rates1, rates2):
    """The nine ordered non-(0,3) rows, the basic (0,3) row, and the six
    unordered rows, written out literally as published."""
    n11, n31, n33, ne1, ne3 = counts
    l1, m1, r1 = rates1
    l2, m2, r2 = rates2
    b1 = l1 * n11 + m1 * (n31 + n33)
    b2 = l2 * (n11 + n31 + ne1) + m2 * (n33 + ne3)
    diff = b2 - b1
    ordered = {
        (0, 0): {(1, 1): b1, (0, 1): diff, (2, 2): r2, (2, 0): r1 - r2},
        (1, 1): {(0, 0): 1, (3, 3): r2, (3, 1): r1 - r2},
        (2, 2): {(3, 3): b1, (2, 3): diff, (0, 0): 1},
        (3, 3): {(1, 1): 1, (2, 2): 1},
        (2, 0): {(3, 1): b1, (2, 1): diff, (0, 0): 1, (2, 2): r2},
        (2, 3): {(3, 3): b1, (0, 1): 1, (2, 2): 1},
        (2, 1): {(3, 1): b1, (2, 0): 1, (0, 1): 1, (2, 3): r2},
        (3, 1): {(2, 0): 1, (1, 1): 1, (3, 3): r2},
        (0, 1): {(2, 3): r2, (1, 1): b1, (2, 1): r1 - r2, (0, 0): 1},
    }
    zero_three_basic = {(1, 3): b1, (0, 1): 1, (0, 2): 1, (2, 3): r1}
    unordered = {
        (1, 0): {(1, 1): b2, (3, 2): r2, (3, 0): r1 - r2, (0, 0): 1},
        (0, 2): {(1, 3): b1, (0, 3): diff, (0, 0): 1, (2, 2): r1},
        (1, 2): {(1, 3): b2, (3, 2): r1, (1, 0): 1, (0, 2): 1},
        (1, 3): {(0, 2): 1, (3, 3): r1, (1, 1): 1},
        (3, 0): {(1, 0): 1, (2, 0): 1, (3, 1): b2, (3, 2): r2},
        (3, 2): {(3, 3): b2, (1, 0): 1, (2, 2): 1},
    }
    return ordered, zero_three_basic, unordered


class TestSharedClockRows:
    def test_ordered_rows_match_published_tables(self):
        ordered, zero_three, unordered = frozen_shared_clock_tables(
            COUNTS, R1, R2
        )
        for pair, want in ordered.items():
            got = dict(basic_pair_rows(pair, COUNTS, R1, R2, True, True))
            want = {t: r for t, r in want.items() if r != 0}
            assert got == want, pair
        got = dict(basic_pair_rows((0, 3), COUNTS, R1, R2, True, True))
        assert got == zero_three
        for pair, want in unordered.items():
            got = dict(basic_pair_rows(pair, COUNTS, R1, R2, True, True))
            want = {t: r for t, r in want.items() if r != 0}
            assert got == want, pair

    def test_rows_cover_every_pair_state(self):
        ordered, _, unordered = frozen_shared_clock_tables(COUNTS, R1, R2)
        assert set(ordered) | {(0, 3)} | set(unordered) == {
            (a, b) for a in range(4) for b in range(4)
        }
        assert set(ordered) | {(0, 3)} == set(ORDERED_PAIRS)
        assert set(unordered) == set(UNORDERED_PAIRS)

    def test_zero_three_example_rates(self):
        # restricted-contract rows at (0,3)
        p1 = Params(2.0, 0.5, 2.0)
        p2 = Params(3.0, 1.0, 1.0)
        box = BoxGeometry(1, 3, "empty-exterior")
        pair = PairConfiguration(
            Configuration(box, [1, 0, 0]), Configuration(box, [1, 3, 3])
        )
        rows = dict(coupled_rates(pair, 1, p1, p2, contract="restricted"))
        b1 = 2.0 * 1 + 0.5 * 0  # one shared wild neighbour
        assert rows == {(1, 3): b1, (0, 1): 1, (0, 2): 1, (2, 3): 2.0}

    def test_zero_zero_example(self):
        p1 = Params(2.0, 0.5, 2.0)
        p2 = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 3, "empty-exterior")
        pair = PairConfiguration(
            Configuration(box, [1, 0, 3]), Configuration(box, [1, 0, 3])
        )
        rows = dict(coupled_rates(pair, 1, p1, p2))
        birth = 2.0 * 1 + 0.5 * 1
        assert rows == {(1, 1): birth, (2, 2): 1.0, (2, 0): 1.0}
        assert rows.get((0, 1), 0) == 0

    def test_three_three_rows(self):
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 3, "empty-exterior")
        pair = PairConfiguration(
            Configuration(box, [1, 3, 0]), Configuration(box, [1, 3, 0])
        )
        assert dict(coupled_rates(pair, 1, p, p)) == {(1, 1): 1, (2, 2): 1}

    def test_restricted_contract_rejects_unordered(self):
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 2, "empty-exterior")
        pair = PairConfiguration(
            Configuration(box, [1, 0]), Configuration(box, [0, 0])
        )
        with pytest.raises(ContractViolationError):
            coupled_rates(pair, 0, p, p, contract="restricted")
        # the general contract covers the same state
        rows = coupled_rates(pair, 0, p, p, contract="general")
        assert rows

    def test_general_zero_three_row_nonnegative_under_conditions(self):
        rates1 = (Fraction(1, 2), Fraction(1, 4), Fraction(3, 2))
        rows = dict(order_preserving_zero_three_rows(COUNTS, rates1))
        assert all(r >= 0 for r in rows.values())
        assert rows[(2, 3)] == Fraction(1, 2)  # r1 - 1
        # lambda > 1 or r < 1 breaks nonnegativity
        bad = dict(
            order_preserving_zero_three_rows(COUNTS, (Fraction(2), Fraction(1, 2), Fraction(2)))
        )
        assert any(r < 0 for r in bad.values())

    def test_order_preservation_of_generator_rows(self):
        # every reachable target from an ordered pair state is ordered,
        # with the general (0,3) row swapped in for the basic one
        rates1 = (Fraction(1, 2), Fraction(1, 4), Fraction(3, 2))
        rates2 = (Fraction(3, 4), Fraction(1, 2), Fraction(1))
        rank = {s: int(STATE_RANK[s]) for s in range(4)}
        for pair in ORDERED_PAIRS:
            if pair == PAIR_ZERO_THREE:
                rows = order_preserving_zero_three_rows(COUNTS, rates1)
            else:
                rows = basic_pair_rows(pair, COUNTS, rates1, rates2, True, True)
            for (t1, t2), rate in rows:
                assert rate >= 0
                assert rank[t1] <= rank[t2], (pair, (t1, t2))

    def test_basic_rows_from_non_zero_three_stay_in_table_one(self):
        # closure: away from (0,3), the shared-clock rows never create
        # (0,3) or an unordered pair
        table_one = set(ORDERED_PAIRS) - {PAIR_ZERO_THREE}
        for pair in table_one:
            for counts in product(range(3), repeat=5):
                if sum(counts) > 2:
                    continue
                rows = basic_pair_rows(pair, counts, R1, R2, True, True)
                for target, _ in rows:
                    assert target in table_one, (pair, target)


class TestMarginalProjection:
    def test_exact_projection_under_conditions(self):
        p1 = Params(0.5, 0.2, 2.0)
        p2 = Params(0.9, 0.3, 1.5)
        report = check_marginal_projection(p1, p2, kind=KIND_SYM, d=1)
        assert report.ok
        assert not report.negative_rates
        assert report.checked == 16 * 21

    def test_asym_and_mixed_kinds(self):
        p1 = Params(0.5, 0.2, 2.0)
        p2 = Params(0.9, 0.3, 1.5)
        for kind in (KIND_ASYM, KIND_ASYM_VS_SYM):
            report = check_marginal_projection(p1, p2, kind=kind, d=1)
            assert report.ok, kind

    def test_reversed_release_rates_flagged_not_broken(self):
        # r1 < r2 violates the monotonicity conditions: the projection
        # identity still holds but negative residual rates are flagged
        p1 = Params(0.5, 0.2, 1.0)
        p2 = Params(0.9, 0.3, 1.5)
        report = check_marginal_projection(p1, p2, kind=KIND_SYM, d=1)
        assert report.ok
        assert report.negative_rates

    def test_diagonal_matches_marginal(self):
        # identical parameters and identical configurations: the coupled
        # chain moves on the diagonal with the marginal rates
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 4, "empty-exterior")
        cfg = Configuration(box, [1, 0, 3, 2])
        pair = PairConfiguration(cfg, cfg.copy())
        from cprs.dynamics import transition_rates

        for x in range(4):
            rows = coupled_rates(pair, x, p, p)
            marg = dict(transition_rates(cfg, x, p))
            got = {}
            for (t1, t2), rate in rows:
                assert t1 == t2
                got[t1] = got.get(t1, 0) + rate
            assert got == marg


class TestCoupledSimulation:
    def test_restricted_trajectories_stay_ordered(self):
        p1 = Params(2.0, 0.5, 1.5)
        p2 = Params(2.0, 0.5, 1.0)
        ok, _ = check_conditions(p1, p2, "restricted-initials")
        assert ok
        box = BoxGeometry(1, 6)
        lo = Configuration.from_wild_sites(box, [3])
        hi = Configuration.from_wild_sites(box, [2, 3])
        total_violations = 0
        for seed in range(150):
            traj = simulate_coupled(
                PairConfiguration(lo.copy(), hi.copy()), p1, p2, 1.5,
                np.random.default_rng(31000 + seed),
            )
            total_violations += traj.order_violations
            assert not traj.reached_unordered
            for pair_state in traj.new_pairs:
                assert pair_state != PAIR_ZERO_THREE
        assert total_violations == 0

    def test_identical_marginals_stay_identical(self):
        p = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 6)
        init = Configuration.from_wild_sites(box, [2, 3])
        traj = simulate_coupled(
            PairConfiguration(init.copy(), init.copy()), p, p, 2.0,
            np.random.default_rng(77),
        )
        assert traj.terminal.lower == traj.terminal.upper
        for a, b in traj.new_pairs:
            assert a == b

    def test_seed_reproducibility(self):
        p1 = Params(2.0, 0.5, 1.5)
        p2 = Params(2.0, 0.5, 1.0)
        box = BoxGeometry(1, 5)
        init = Configuration.from_wild_sites(box, [2])
        runs = [
            simulate_coupled(
                PairConfiguration(init.copy(), init.copy()), p1, p2, 1.0,
                np.random.default_rng(5),
            )
            for _ in range(2)
        ]
        assert runs[0].events == runs[1].events

    def test_release_rate_monotone_wild_sets(self):
        # lower coordinate has the larger release rate, hence the
        # smaller wild set, at every event time
        from cprs.lattice import wild_set

        p_more = Params(2.0, 0.5, 2.0)
        p_less = Params(2.0, 0.5, 0.5)
        box = BoxGeometry(1, 6)
        init = Configuration.from_wild_sites(box, [3])
        for seed in range(60):
            traj = simulate_coupled(
                PairConfiguration(init.copy(), init.copy()), p_more, p_less,
                2.0, np.random.default_rng(8800 + seed),
            )
            assert compare_configs(
                traj.terminal.lower, traj.terminal.upper
            ) in ("le", "equal")
            assert wild_set(traj.terminal.lower) <= wild_set(
                traj.terminal.upper
            )

    def test_negative_rate_raises(self):
        p1 = Params(2.0, 0.5, 0.5)
        p2 = Params(2.0, 0.5, 1.0)  # r1 < r2 breaks the coupling
        box = BoxGeometry(1, 4)
        init = Configuration.from_wild_sites(box, [1])
        with pytest.raises(ContractViolationError):
            simulate_coupled(
                PairConfiguration(init.copy(), init.copy()), p1, p2, 5.0,
                np.random.default_rng(1),
            )


class TestNeighborClasses:
    def test_counts(self):
        box = BoxGeometry(1, 5, "empty-exterior")
        lower = Configuration(box, [1, 0, 0, 3, 0])
        upper = Configuration(box, [1, 0, 0, 1, 0])
        pair = PairConfiguration(lower, upper)
        assert neighbor_class_counts(pair, 1) == (1, 0, 0, 0, 0)
        assert neighbor_class_counts(pair, 2) == (0, 1, 0, 0, 0)

    def test_unordered_neighbor_rejected(self):
        box = BoxGeometry(1, 3, "empty-exterior")
        pair = PairConfiguration(
            Configuration(box, [1, 0, 0]), Configuration(box, [0, 0, 0])
        )
        with pytest.raises(ContractViolationError):
            neighbor_class_counts(pair, 1)

    def test_surplus_decomposition_matches_difference(self):
        # on ordered neighbour classes the five-term surplus equals the
        # plain difference of the birth intensities
        for counts in product(range(3), repeat=5):
            if sum(counts) > 2:
                continue
            n11, n31, n33, ne1, ne3 = counts
            b1 = lower_birth_intensity(counts, R1)
            b2 = R2[0] * (n11 + n31 + ne1) + R2[1] * (n33 + ne3)
            assert upper_birth_surplus(counts, R1, R2) == b2 - b1


class TestConditions:
    def test_general_example(self):
        ok, violated = check_conditions(
            Params(0.5, 0.2, 2.0), Params(0.9, 0.3, 1.5), "general"
        )
        assert ok and not violated

    def test_attractiveness(self):
        p = Params(2.0, 0.5, 1.0)
        ok, _ = check_conditions(p, p, "restricted-initials")
        assert ok

    def test_release_rate_reversal(self):
        ok, violated = check_conditions(
            Params(2.0, 0.5, 1.0), Params(2.0, 0.5, 2.0),
            "restricted-initials",
        )
        assert not ok
        assert violated == ["r(1) >= r(2)"]

    def test_general_needs_unit_bounds(self):
        ok, violated = check_conditions(
            Params(2.0, 0.5, 2.0), Params(2.0, 0.5, 1.0), "general"
        )
        assert not ok
        assert "lambda1(1) <= 1" in violated

    def test_cp_kinds(self):
        cprs = Params(2.0, 0.5, 1.0)
        cp_hi = Params(2.0, 0.0, 0.0)
        ok, _ = check_conditions(cprs, cp_hi, "cp-upper")
        assert ok
        cp_lo = Params(0.5, 0.0, 0.0)
        ok, _ = check_conditions(cp_lo, cprs, "cp-lower")
        assert ok
        ok, violated = check_conditions(Params(0.6, 0.0, 0.0), cprs, "cp-lower")
        assert not ok


class TestDominationInequalities:
    def test_satisfying_families_empty(self):
        lo = symmetric_rate_family(0.5, 0.2, 2.0)
        hi = symmetric_rate_family(0.9, 0.3, 1.5)
        assert verify_borrello_inequalities(lo, hi) == []

    def test_unit_release_violation_localised(self):
        lo = symmetric_rate_family(0.5, 0.2, 0.5)  # r(1) < 1
        hi = symmetric_rate_family(0.9, 0.3, 0.4)
        violations = verify_borrello_inequalities(lo, hi)
        assert violations
        hits = [
            v for v in violations
            if v.inequality == "down" and v.alpha == 0 and v.gamma == 3
            and v.offset == 0
        ]
        assert hits and all(v.lhs == 0.5 and v.rhs == 1 for v in hits)

    def test_release_order_violation_localised(self):
        lo = symmetric_rate_family(0.5, 0.2, 1.2)
        hi = symmetric_rate_family(0.9, 0.3, 1.5)  # r(1) < r(2)
        violations = verify_borrello_inequalities(lo, hi)
        hits = [
            v for v in violations
            if v.inequality == "down" and v.alpha == v.gamma
            and v.alpha in (0, 1)
        ]
        assert hits

    def test_contact_process_dominates_slowdown_process(self):
        lo = symmetric_rate_family(2.0, 0.5, 1.0)
        hi = contact_rate_family_high(2.0)
        assert verify_borrello_inequalities(lo, hi) == []
        # and with lambda2 > the contact rate it breaks
        bad = symmetric_rate_family(2.0, 2.0, 1.0)
        hi_small = contact_rate_family_high(1.5)
        assert verify_borrello_inequalities(bad, hi_small)

    def test_sub_contact_process_is_dominated(self):
        lo = contact_rate_family_low(0.5)
        hi = symmetric_rate_family(2.0, 0.5, 1.0)
        assert verify_borrello_inequalities(lo, hi) == []

    def test_asym_below_sym_needs_unit_release_in_general(self):
        lo = asymmetric_rate_family(2.0, 0.5, 0.5)
        hi = symmetric_rate_family(2.0, 0.5, 0.5)
        violations = verify_borrello_inequalities(lo, hi)
        hits = [
            v for v in violations
            if v.inequality == "down" and v.alpha == 0 and v.gamma == 3
        ]
        assert hits  # r >= 1 shows up as a general-initials requirement
        lo2 = asymmetric_rate_family(0.9, 0.5, 1.5)
        hi2 = symmetric_rate_family(0.9, 0.5, 1.5)
        assert verify_borrello_inequalities(lo2, hi2) == []
