"""Coupled-pair dynamics, monotonicity conditions, and the rate-family
stochastic-domination verifier.

Two processes run on one probability space by sharing clocks site by
site: one wild-death clock, one sterile-death clock, a shared release
clock at the smaller release rate (surplus on the lower coordinate),
and a shared birth clock at the lower coordinate's intensity with the
surplus on the upper. For pairwise-ordered configurations the surplus
birth rate decomposes over five joint neighbour classes with every
addend nonnegative under the monotonicity conditions, so each table
entry is individually testable.

The pair state (0,3) is special: its basic-coupling rows can break the
order, so the general-initials contract swaps in a dedicated
order-preserving row whose nonnegativity needs lambda1, lambda2 <= 1
and r >= 1 on the lower coordinate. Restricted initials (both
configurations in {0,1}) never reach (0,3), and the basic rows apply
throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .dynamics import single_site_rates
from .errors import ContractViolationError, GeometryMismatchError
from .lattice import (
    CONFIG_EQUAL,
    CONFIG_LE,
    Configuration,
    STATE_RANK,
    compare_configs,
)
from .params import ASYMMETRIC, SYMMETRIC, Params

RESTRICTED = "restricted"
GENERAL = "general"
CONTRACTS = (RESTRICTED, GENERAL)

KIND_SYM = "sym"
KIND_ASYM = "asym"
KIND_ASYM_VS_SYM = "asym-vs-sym"
KINDS = (KIND_SYM, KIND_ASYM, KIND_ASYM_VS_SYM)

# all (a, b) with a <= b in the order 2 < 0 < 3 < 1
ORDERED_PAIRS = tuple(
    (a, b)
    for a in range(4)
    for b in range(4)
    if STATE_RANK[a] <= STATE_RANK[b]
)
UNORDERED_PAIRS = tuple(
    (a, b) for a in range(4) for b in range(4) if (a, b) not in ORDERED_PAIRS
)
PAIR_ZERO_THREE = (0, 3)

# joint neighbour classes of an ordered pair (lower value, upper value)
CLASS_11 = (1, 1)
CLASS_31 = (3, 1)
CLASS_33 = (3, 3)
CLASS_E1 = ("e", 1)  # lower in {0,2}, upper 1
CLASS_E3 = ("e", 3)  # lower in {0,2}, upper 3
NEIGHBOR_CLASSES = (CLASS_11, CLASS_31, CLASS_33, CLASS_E1, CLASS_E3)


def _death1(s):
    return {1: 0, 3: 2}.get(s, s)


def _death2(s):
    return {2: 0, 3: 1}.get(s, s)


def _release(s):
    return {0: 2, 1: 3}.get(s, s)


def _birth(s, symmetric):
    if s == 0:
        return 1
    if s == 2 and symmetric:
        return 3
    return s


def _kind_flags(kind: str) -> tuple[bool, bool]:
    if kind == KIND_SYM:
        return True, True
    if kind == KIND_ASYM:
        return False, False
    if kind == KIND_ASYM_VS_SYM:
        return False, True
    raise ValueError(f"kind must be one of {KINDS}")


def lower_birth_intensity(counts, rates1):
    """lambda1*n1 + lambda2*n3 of the lower marginal from class counts."""
    n11, n31, n33, ne1, ne3 = counts
    lam1, lam2, _ = rates1
    return lam1 * n11 + lam2 * (n31 + n33)


def upper_birth_surplus(counts, rates1, rates2):
    """Upper-minus-lower birth intensity as five nonnegative-by-condition
    addends over the joint neighbour classes."""
    n11, n31, n33, ne1, ne3 = counts
    lam1_1, lam2_1, _ = rates1
    lam1_2, lam2_2, _ = rates2
    return (
        (lam1_2 - lam1_1) * n11
        + (lam1_2 - lam2_1) * n31
        + (lam2_2 - lam2_1) * n33
        + lam1_2 * ne1
        + lam2_2 * ne3
    )


def basic_pair_rows(pair, counts, rates1, rates2, sym1: bool, sym2: bool):
    """Shared-clock coupling rows at one site.

    ``rates`` are (lambda1, lambda2, r) triples of any numeric type.
    Returns a list of ((lower_target, upper_target), rate) with zero and
    identity rows dropped; rates may be negative when the monotonicity
    conditions fail, which the projection check flags.
    """
    a, b = pair
    r1 = rates1[2]
    r2 = rates2[2]
    acc: dict[tuple[int, int], object] = {}

    def add(target, rate):
        if target != (a, b) and rate != 0:
            acc[target] = acc.get(target, 0) + rate

    add((_death1(a), _death1(b)), 1)
    add((_death2(a), _death2(b)), 1)
    add((_release(a), _release(b)), r2)
    add((_release(a), b), r1 - r2)
    b1 = lower_birth_intensity(counts, rates1)
    add((_birth(a, sym1), _birth(b, sym2)), b1)
    add((a, _birth(b, sym2)), upper_birth_surplus(counts, rates1, rates2))
    return sorted(acc.items())


def order_preserving_zero_three_rows(counts, rates1):
    """The order-preserving (0,3) rows of the general-initials coupling.

    This is not a shared-clock table: the lower birth rides the upper
    sterile death. The printed surplus coefficients (1 - lambda) per
    wild neighbour keep every entry nonnegative when lambda1, lambda2
    <= 1 and r >= 1 on the lower coordinate, at the price of an exact
    marginal only when n1 + n3 = 1.
    """
    n11, n31, n33, _, _ = counts
    lam1, lam2, r1 = rates1
    b1 = lower_birth_intensity(counts, rates1)
    rows = [
        ((1, 1), b1),
        ((0, 1), (1 - lam1) * n11 + (1 - lam2) * (n31 + n33)),
        ((2, 2), 1),
        ((2, 3), r1 - 1),
    ]
    return [(t, rate) for t, rate in rows if rate != 0]


def neighbor_class_counts(pair, x: int) -> tuple[int, int, int, int, int]:
    """Counts (n11, n31, n33, ne1, ne3) of the joint neighbour classes.

    Requires every neighbour pair to be coordinate-ordered.
    """
    lower, upper = pair.lower, pair.upper
    n11 = n31 = n33 = ne1 = ne3 = 0
    for y in lower.geometry.neighbor_table()[x]:
        if y < 0:
            continue
        s1 = int(lower.states[y])
        s2 = int(upper.states[y])
        if STATE_RANK[s1] > STATE_RANK[s2]:
            raise ContractViolationError(
                f"neighbour pair {(s1, s2)} at site {int(y)} is not ordered"
            )
        if (s1, s2) == (1, 1):
            n11 += 1
        elif (s1, s2) == (3, 1):
            n31 += 1
        elif (s1, s2) == (3, 3):
            n33 += 1
        elif s2 == 1:
            ne1 += 1
        elif s2 == 3:
            ne3 += 1
    return n11, n31, n33, ne1, ne3


@dataclass
class PairConfiguration:
    """Two configurations on one box, lower candidate first."""

    lower: Configuration
    upper: Configuration

    def __post_init__(self):
        if self.lower.geometry != self.upper.geometry:
            raise GeometryMismatchError("pair must share one box")

    @property
    def ordered(self) -> bool:
        return compare_configs(self.lower, self.upper) in (CONFIG_LE, CONFIG_EQUAL)

    def pair_state(self, x: int) -> tuple[int, int]:
        return (int(self.lower.states[x]), int(self.upper.states[x]))

    def copy(self) -> "PairConfiguration":
        return PairConfiguration(self.lower.copy(), self.upper.copy())


def coupled_rates(pair: PairConfiguration, x: int, p1: Params, p2: Params,
                  contract: str = RESTRICTED, kind: str = KIND_SYM):
    """Coupling rows for site ``x`` of the pair configuration."""
    if contract not in CONTRACTS:
        raise ValueError(f"contract must be one of {CONTRACTS}")
    sym1, sym2 = _kind_flags(kind)
    s = pair.pair_state(x)
    counts = neighbor_class_counts(pair, x)
    rates1 = (p1.lambda1, p1.lambda2, p1.r)
    rates2 = (p2.lambda1, p2.lambda2, p2.r)
    if s in UNORDERED_PAIRS and contract == RESTRICTED:
        raise ContractViolationError(
            f"pair state {s} at site {x} is outside the restricted contract"
        )
    if s == PAIR_ZERO_THREE and contract == GENERAL:
        return order_preserving_zero_three_rows(counts, rates1)
    return basic_pair_rows(s, counts, rates1, rates2, sym1, sym2)


@dataclass
class CoupledTrajectory:
    initial: PairConfiguration
    times: list[float]
    sites: list[int]
    old_pairs: list[tuple[int, int]]
    new_pairs: list[tuple[int, int]]
    terminal: PairConfiguration
    terminal_time: float
    order_violations: int = 0
    reached_unordered: bool = False

    @property
    def events(self):
        return list(zip(self.times, self.sites, self.old_pairs, self.new_pairs))


def coupled_step(pair: PairConfiguration, p1: Params, p2: Params,
                 rng: np.random.Generator, contract: str = RESTRICTED,
                 kind: str = KIND_SYM):
    """One exact event of the coupled chain; returns (pair', dt)."""
    n = pair.lower.geometry.n_sites
    entries = []
    total = 0.0
    for x in range(n):
        for target, rate in coupled_rates(pair, x, p1, p2, contract, kind):
            if rate < 0:
                raise ContractViolationError(
                    f"negative coupled rate {rate} at site {x}: the claimed "
                    "monotonicity conditions do not hold"
                )
            entries.append((x, target, float(rate)))
            total += float(rate)
    if total <= 0:
        return None, float("inf")
    dt = rng.exponential(1.0 / total)
    u = rng.random() * total
    acc = 0.0
    chosen = entries[-1]
    for e in entries:
        acc += e[2]
        if u < acc:
            chosen = e
            break
    x, (t1, t2), _ = chosen
    out = pair.copy()
    out.lower.set_state(x, t1)
    out.upper.set_state(x, t2)
    return out, dt


def simulate_coupled(pair0: PairConfiguration, p1: Params, p2: Params,
                     t_max: float, rng: np.random.Generator,
                     contract: str = RESTRICTED, kind: str = KIND_SYM,
                     max_events: int = 1_000_000) -> CoupledTrajectory:
    """Run the coupled chain to ``t_max``, logging pair flips and order."""
    pair = pair0.copy()
    t = 0.0
    times, sites, olds, news = [], [], [], []
    order_violations = 0
    reached_unordered = False
    for _ in range(max_events):
        nxt, dt = coupled_step(pair, p1, p2, rng, contract, kind)
        if nxt is None or t + dt > t_max:
            t = t_max
            break
        t += dt
        for x in range(pair.lower.geometry.n_sites):
            if pair.pair_state(x) != nxt.pair_state(x):
                times.append(t)
                sites.append(x)
                olds.append(pair.pair_state(x))
                news.append(nxt.pair_state(x))
                if nxt.pair_state(x) in UNORDERED_PAIRS:
                    reached_unordered = True
        pair = nxt
        if not pair.ordered:
            order_violations += 1
    else:
        raise RuntimeError("max_events exceeded")
    return CoupledTrajectory(
        initial=pair0.copy(), times=times, sites=sites, old_pairs=olds,
        new_pairs=news, terminal=pair, terminal_time=t,
        order_violations=order_violations, reached_unordered=reached_unordered,
    )


# ---------------------------------------------------------------------------
# marginal projection check
# ---------------------------------------------------------------------------


@dataclass
class ProjectionViolation:
    pair_state: tuple[int, int]
    counts: tuple[int, int, int, int, int]
    coordinate: str  # "lower" / "upper" / "sign"
    flip: tuple[int, int] | None
    table_rate: object
    marginal_rate: object


@dataclass
class ProjectionReport:
    checked: int = 0
    violations: list[ProjectionViolation] = field(default_factory=list)
    negative_rates: list[ProjectionViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _class_count_vectors(max_neighbors: int):
    for total in range(max_neighbors + 1):
        for n11 in range(total + 1):
            for n31 in range(total - n11 + 1):
                for n33 in range(total - n11 - n31 + 1):
                    for ne1 in range(total - n11 - n31 - n33 + 1):
                        ne3 = total - n11 - n31 - n33 - ne1
                        yield (n11, n31, n33, ne1, ne3)


def _marginal_flip_rates(state, n1, n3, rates, symmetric):
    lam1, lam2, r = rates
    return {
        tgt: rate
        for tgt, rate in single_site_rates(state, n1, n3, lam1, lam2, r, symmetric)
    }


def check_marginal_projection(p1: Params, p2: Params, kind: str = KIND_SYM,
                              d: int = 1, pair_states=None) -> ProjectionReport:
    """Verify, in exact rational arithmetic, that the shared-clock rows
    project onto both marginal generators for every pair state and every
    joint neighbour class vector with at most 2d neighbours.

    Negative entries (possible when the monotonicity conditions fail)
    are flagged separately; they do not break the projection identity.
    """
    sym1, sym2 = _kind_flags(kind)
    rates1 = tuple(Fraction(str(v)) for v in (p1.lambda1, p1.lambda2, p1.r))
    rates2 = tuple(Fraction(str(v)) for v in (p2.lambda1, p2.lambda2, p2.r))
    report = ProjectionReport()
    states = pair_states if pair_states is not None else [
        (a, b) for a in range(4) for b in range(4)
    ]
    for pair_state in states:
        a, b = pair_state
        for counts in _class_count_vectors(2 * d):
            rows = basic_pair_rows(pair_state, counts, rates1, rates2, sym1, sym2)
            report.checked += 1
            for target, rate in rows:
                if rate < 0:
                    report.negative_rates.append(
                        ProjectionViolation(
                            pair_state, counts, "sign", target, rate, None
                        )
                    )
            n11, n31, n33, ne1, ne3 = counts
            lower_marg = _marginal_flip_rates(
                a, n11, n31 + n33, rates1, sym1
            )
            upper_marg = _marginal_flip_rates(
                b, n11 + n31 + ne1, n33 + ne3, rates2, sym2
            )
            for coord, marg, pos in (
                ("lower", lower_marg, 0),
                ("upper", upper_marg, 1),
            ):
                here = (a, b)[pos]
                got: dict[int, object] = {}
                for target, rate in rows:
                    eff = target[pos]
                    if eff != here:
                        got[eff] = got.get(eff, 0) + rate
                for tgt in set(got) | set(marg):
                    tab = got.get(tgt, 0)
                    want = marg.get(tgt, 0)
                    if tab != want:
                        report.violations.append(
                            ProjectionViolation(
                                pair_state, counts, coord,
                                (here, tgt), tab, want,
                            )
                        )
    return report


# ---------------------------------------------------------------------------
# monotonicity condition lists
# ---------------------------------------------------------------------------

CONDITION_KINDS = (
    "general", "restricted-initials", "asymmetric", "sym-vs-asym",
    "cp-upper", "cp-lower",
)


def check_conditions(p1: Params, p2: Params, kind: str):
    """Evaluate the parameter conditions of the increasing couplings.

    Returns ``(ok, violated)`` where ``violated`` lists the failed
    conditions by name. ``p1`` is always the lower process.
    """
    five = [
        ("lambda2(1) <= lambda1(1)", p1.lambda2 <= p1.lambda1),
        ("lambda2(2) <= lambda1(2)", p2.lambda2 <= p2.lambda1),
        ("lambda1(1) <= lambda1(2)", p1.lambda1 <= p2.lambda1),
        ("lambda2(1) <= lambda2(2)", p1.lambda2 <= p2.lambda2),
        ("r(1) >= r(2)", p1.r >= p2.r),
    ]
    if kind == "general":
        conds = five + [
            ("lambda1(1) <= 1", p1.lambda1 <= 1),
            ("lambda2(1) <= 1", p1.lambda2 <= 1),
            ("r(1) >= 1", p1.r >= 1),
        ]
    elif kind in ("restricted-initials", "asymmetric"):
        conds = five
    elif kind == "sym-vs-asym":
        conds = [
            ("lambda1 matched", p1.lambda1 == p2.lambda1),
            ("lambda2 matched", p1.lambda2 == p2.lambda2),
            ("r matched", p1.r == p2.r),
            ("lambda2 < lambda1", p1.lambda2 < p1.lambda1),
        ]
    elif kind == "cp-upper":
        conds = [
            ("lambda2(1) <= lambda1(1)", p1.lambda2 <= p1.lambda1),
            ("lambda1(1) <= cp rate", p1.lambda1 <= p2.lambda1),
        ]
    elif kind == "cp-lower":
        conds = [
            ("cp rate <= lambda2(2)", p1.lambda1 <= p2.lambda2),
            ("lambda2(2) <= lambda1(2)", p2.lambda2 <= p2.lambda1),
        ]
    else:
        raise ValueError(f"kind must be one of {CONDITION_KINDS}")
    violated = [name for name, ok in conds if not ok]
    return (not violated, violated)


# ---------------------------------------------------------------------------
# rate families and the domination inequalities
# ---------------------------------------------------------------------------

# positions of the state codes in the order 2 < 0 < 3 < 1
POSITION_OF_STATE = {2: 0, 0: 1, 3: 2, 1: 3}
STATE_AT_POSITION = {v: k for k, v in POSITION_OF_STATE.items()}


@dataclass(frozen=True)
class RateFamily:
    """Transition rates in the order-position encoding.

    ``births[(src_pos, tgt_pos, k)]`` is the rate at which a neighbour
    sitting at ``src_pos`` lifts a site at ``tgt_pos`` up ``k`` order
    positions; ``up[(pos, k)]`` and ``down[(pos, k)]`` are the
    spontaneous jumps. ``support`` lists the order positions the
    process can occupy.
    """

    label: str
    support: tuple[int, ...]
    births: dict
    up: dict
    down: dict

    def pi_up(self, src_pos, tgt_pos, k):
        return self.births.get((src_pos, tgt_pos, k), 0) + self.up.get(
            (tgt_pos, k), 0
        )

    def pi_down(self, pos, k):
        return self.down.get((pos, k), 0)


_A, _B, _C, _D = 0, 1, 2, 3  # order positions of states 2, 0, 3, 1


def asymmetric_rate_family(lam1, lam2, r) -> RateFamily:
    return RateFamily(
        label="asymmetric",
        support=(_A, _B, _C, _D),
        births={(_D, _B, 2): lam1, (_C, _B, 2): lam2},
        up={(_A, 1): 1, (_C, 1): 1},
        down={(_B, 1): r, (_D, 1): r, (_C, 2): 1, (_D, 2): 1},
    )


def symmetric_rate_family(lam1, lam2, r) -> RateFamily:
    fam = asymmetric_rate_family(lam1, lam2, r)
    births = dict(fam.births)
    births[(_D, _A, 2)] = lam1
    births[(_C, _A, 2)] = lam2
    return RateFamily("symmetric", fam.support, births, fam.up, fam.down)


def contact_rate_family_high(lam) -> RateFamily:
    """Basic contact process on the two top states ({0,1} codes)."""
    return RateFamily(
        label="contact-01",
        support=(_B, _D),
        births={(_D, _B, 2): lam},
        up={},
        down={(_D, 2): 1},
    )


def contact_rate_family_low(lam) -> RateFamily:
    """Basic contact process on the two bottom states ({2,3} codes)."""
    return RateFamily(
        label="contact-23",
        support=(_A, _C),
        births={(_C, _A, 2): lam},
        up={},
        down={(_C, 2): 1},
    )


def family_for_params(p: Params) -> RateFamily:
    maker = symmetric_rate_family if p.symmetric else asymmetric_rate_family
    return maker(p.lambda1, p.lambda2, p.r)


@dataclass
class DominationViolation:
    inequality: str  # "up" or "down"
    alpha: int  # state codes, for readability
    beta: int
    gamma: int
    delta: int
    offset: int  # j1 or h1
    lhs: object
    rhs: object


def verify_borrello_inequalities(lower: RateFamily, upper: RateFamily,
                                 offsets=(0, 1)) -> list[DominationViolation]:
    """Enumerate the finite domination inequalities between two rate
    families and return every violated instance with its bindings.

    ``upper`` is stochastically above ``lower`` iff the list is empty:
    for all ordered position pairs (alpha,beta) <= (gamma,delta) and
    offsets j1, h1, the lower family's up-moves past the gap must be
    dominated, and its down-moves must dominate the upper family's
    large down-moves.
    """
    max_k = 3
    violations = []
    for alpha, beta in product(lower.support, repeat=2):
        for gamma, delta in product(upper.support, repeat=2):
            if alpha > gamma or beta > delta:
                continue
            for j1 in offsets:
                lhs = sum(
                    lower.pi_up(alpha, beta, k)
                    for k in range(delta - beta + j1 + 1, max_k + 1)
                )
                rhs = sum(
                    upper.pi_up(gamma, delta, l)
                    for l in range(j1 + 1, max_k + 1)
                )
                if lhs > rhs:
                    violations.append(
                        DominationViolation(
                            "up",
                            STATE_AT_POSITION[alpha], STATE_AT_POSITION[beta],
                            STATE_AT_POSITION[gamma], STATE_AT_POSITION[delta],
                            j1, lhs, rhs,
                        )
                    )
            for h1 in offsets:
                lhs = sum(
                    lower.pi_down(alpha, k) for k in range(h1 + 1, max_k + 1)
                )
                rhs = sum(
                    upper.pi_down(gamma, l)
                    for l in range(gamma - alpha + h1 + 1, max_k + 1)
                )
                if lhs < rhs:
                    violations.append(
                        DominationViolation(
                            "down",
                            STATE_AT_POSITION[alpha], STATE_AT_POSITION[beta],
                            STATE_AT_POSITION[gamma], STATE_AT_POSITION[delta],
                            h1, lhs, rhs,
                        )
                    )
    return violations


def violations_to_json(violations) -> list[dict]:
    return [
        {
            "inequality": v.inequality,
            "alpha": v.alpha,
            "beta": v.beta,
            "gamma": v.gamma,
            "delta": v.delta,
            "offset": v.offset,
            "lhs": float(v.lhs),
            "rhs": float(v.rhs),
        }
        for v in violations
    ]
