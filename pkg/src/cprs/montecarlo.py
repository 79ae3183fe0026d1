"""Survival estimation, critical-value bracketing, and parameter sweeps.

All estimators run independent trials whose randomness comes from a
counter-based splitting scheme: trial i of a run with master seed s
draws from ``SeedSequence(s, spawn_key=(tag, i, ...))``, so enlarging a
grid or adding trials never reshuffles earlier trials.

Sweeps and critical-value runs couple their grid points pathwise: every
trial owns one arrow/death schedule, releases are sampled once at a cap
rate with uniform levels and a grid point with release rate r keeps the
marks below r, and thinning marks make birth effectiveness monotone in
(lambda1, lambda2). Survival indicators are then exactly monotone along
the grid, trial by trial, and the asymmetric variant's indicator never
exceeds the symmetric one on the same schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import simulate
from .errors import ModelAssumptionError
from .graphical import sample_schedule, apply_schedule
from .lattice import BoxGeometry, Configuration
from .params import ASYMMETRIC, SYMMETRIC, Params

_TRIAL_TAG = 7
_LAYER_TAG = 11

Z95 = 1.959963984540054


def trial_seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Deterministic substream: (master, key...) -> SeedSequence."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(key))


def trial_generator(master_seed: int, trial: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(
        trial_seed_sequence(master_seed, _TRIAL_TAG, trial, *extra)
    )


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = (
        z
        * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
        / denom
    )
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class SurvivalEstimate:
    trials: int
    survivals: int
    p_hat: float
    ci_low: float
    ci_high: float
    t_max: float
    box: BoxGeometry
    seed: int

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "survivals": self.survivals,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "t_max": self.t_max,
            "box": {
                "dimension": self.box.dimension,
                "side": self.box.side,
                "boundary": self.box.boundary,
            },
            "seed": self.seed,
        }


def _estimate_from_indicators(indicators, t_max, box, seed) -> SurvivalEstimate:
    trials = len(indicators)
    survivals = int(sum(indicators))
    lo, hi = wilson_interval(survivals, trials)
    return SurvivalEstimate(
        trials=trials, survivals=survivals, p_hat=survivals / trials,
        ci_low=lo, ci_high=hi, t_max=t_max, box=box, seed=seed,
    )


def default_initial(box: BoxGeometry) -> Configuration:
    """One wild site at the box centre."""
    centre = box.index(tuple(box.side // 2 for _ in range(box.dimension)))
    return Configuration.from_wild_sites(box, [centre])


def estimate_survival(p: Params, box: BoxGeometry, t_max: float, trials: int,
                      seed: int, backend: str = "gillespie",
                      initial: Configuration | None = None) -> SurvivalEstimate:
    """Fraction of trials whose wild set is nonempty at ``t_max``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    init = initial if initial is not None else default_initial(box)
    indicators = []
    for trial in range(trials):
        rg = trial_generator(seed, trial)
        if backend == "gillespie":
            traj = simulate(
                init.copy(), p, t_max, rg,
                stop_on_wild_extinction=True, record=False,
            )
            indicators.append(not traj.wild_extinct())
        elif backend == "graphical":
            sched = sample_schedule(box, p, t_max, rg)
            traj = apply_schedule(
                init, sched, p.variant, record=False,
                stop_on_wild_extinction=True,
            )
            indicators.append(not traj.wild_extinct())
        else:
            raise ValueError("backend must be 'gillespie' or 'graphical'")
    return _estimate_from_indicators(indicators, t_max, box, seed)


# ---------------------------------------------------------------------------
# coupled event streams: one schedule per trial, shared across a grid
# ---------------------------------------------------------------------------


class TrialEvents:
    """Merged, time-sorted event arrays of one trial.

    Arrows and deaths are fixed; release candidates live in dyadic rate
    layers carrying absolute levels, so any release rate below the
    materialised cap can be evaluated by thresholding the levels. A
    higher rate keeps a superset of release marks, which is what makes
    survival monotone in r trial by trial.
    """

    def __init__(self, box: BoxGeometry, birth_cap: float, horizon: float,
                 master_seed: int, trial: int):
        self.box = box
        self.birth_cap = float(birth_cap)
        self.horizon = float(horizon)
        self.master_seed = master_seed
        self.trial = trial
        base = Params(birth_cap, 0.0, 0.0, d=box.dimension)
        sched = sample_schedule(
            box, base, horizon, trial_generator(master_seed, trial, 0),
            birth_cap=birth_cap, release_cap=0.0,
        )
        time, kind, site, src, mark = sched.merged()
        self._base = (time, kind, site, src, mark)
        self._layers: dict[int, tuple] = {}
        self._merged_cache: tuple[float, tuple] | None = None

    @staticmethod
    def _layer_band(layer: int) -> tuple[float, float]:
        return (0.0, 1.0) if layer == 0 else (float(2 ** (layer - 1)), float(2**layer))

    def _layer(self, layer: int):
        if layer not in self._layers:
            lo, hi = self._layer_band(layer)
            rg = trial_generator(self.master_seed, self.trial, _LAYER_TAG, layer)
            n = self.box.n_sites
            counts = rg.poisson((hi - lo) * self.horizon, n)
            total = int(counts.sum())
            times = rg.random(total) * self.horizon
            levels = lo + rg.random(total) * (hi - lo)
            sites = np.repeat(np.arange(n, dtype=np.int64), counts)
            self._layers[layer] = (times, sites, levels)
        return self._layers[layer]

    def merged_for_release_cap(self, release_cap: float):
        """Event arrays containing every release candidate below the cap."""
        if release_cap <= 0:
            return self._base
        n_layers = 1
        while self._layer_band(n_layers - 1)[1] < release_cap:
            n_layers += 1
        cached = self._merged_cache
        if cached is not None and cached[0] >= release_cap:
            return cached[1]
        rts, rss, rls = [], [], []
        for layer in range(n_layers):
            t, s, l = self._layer(layer)
            rts.append(t)
            rss.append(s)
            rls.append(l)
        rel_t = np.concatenate(rts)
        rel_s = np.concatenate(rss)
        rel_l = np.concatenate(rls)
        bt, bk, bs, bsrc, bm = self._base
        time = np.concatenate([bt, rel_t])
        kind = np.concatenate(
            [bk, np.full(rel_t.size, _kernels.EV_RELEASE, dtype=np.uint8)]
        )
        site = np.concatenate([bs, rel_s])
        src = np.concatenate([bsrc, np.full(rel_t.size, -1, dtype=np.int64)])
        mark = np.concatenate([bm, rel_l])
        order = np.lexsort((src, site, kind, time))
        merged = (time[order], kind[order], site[order], src[order], mark[order])
        self._merged_cache = (float(self._layer_band(n_layers - 1)[1]), merged)
        return merged

    def survives(self, initial: Configuration, lambda1: float, lambda2: float,
                 r: float, variant: str, t_max: float | None = None) -> bool:
        """Survival indicator of this trial at one parameter point."""
        if lambda1 > self.birth_cap:
            raise ValueError("lambda1 exceeds the schedule's arrow cap")
        time, kind, site, src, mark = self.merged_for_release_cap(r)
        states = initial.states.copy()
        empty = np.empty(0)
        empty_i = np.empty(0, dtype=np.int64)
        empty_b = np.empty(0, dtype=np.int8)
        wild, _, _, _ = _kernels.apply_event_stream(
            states, time, kind, site, src, mark,
            min(lambda1 / self.birth_cap, 1.0),
            min(lambda2 / self.birth_cap, 1.0),
            float(r), variant == SYMMETRIC,
            self.horizon if t_max is None else float(t_max),
            False, empty, empty_i, empty_b, empty_b, True,
        )
        return wild > 0


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEP_AXES = ("r", "lambda1", "lambda2")


@dataclass
class SweepResult:
    axis: str
    grid: list[float]
    estimates: list[SurvivalEstimate]
    coupled: bool
    indicators: np.ndarray | None = None  # (trials, grid) when coupled

    def order_violations(self, non_increasing: bool) -> int:
        """Per-trial monotonicity violations along the grid (coupled only)."""
        if self.indicators is None:
            raise ValueError("indicators only exist for coupled sweeps")
        ind = self.indicators.astype(np.int8)
        diffs = np.diff(ind, axis=1)
        return int((diffs > 0).sum() if non_increasing else (diffs < 0).sum())

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("param_value,trials,survivals,p_hat,ci_low,ci_high\n")
            for value, est in zip(self.grid, self.estimates):
                fh.write(
                    f"{value!r},{est.trials},{est.survivals},{est.p_hat!r},"
                    f"{est.ci_low!r},{est.ci_high!r}\n"
                )


def sweep(axis: str, grid, p: Params, box: BoxGeometry, t_max: float,
          trials: int, seed: int, coupled: bool = True,
          initial: Configuration | None = None) -> SweepResult:
    """One survival estimate per grid point.

    Coupled sweeps (default) share each trial's schedule across the
    grid, so the per-trial indicator column is exactly monotone: births
    strengthen with lambda1 and lambda2, releases weaken survival as r
    grows. Uncoupled sweeps draw independent Gillespie trials per point.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    init = initial if initial is not None else default_initial(box)
    if not coupled:
        estimates = [
            estimate_survival(
                _point_params(axis, value, p), box, t_max, trials,
                seed, initial=init,
            )
            for value in grid
        ]
        return SweepResult(axis, grid, estimates, coupled=False)

    birth_cap = max(grid) if axis == "lambda1" else p.lambda1
    for value in grid:
        _point_params(axis, value, p)  # validates each grid point
    indicators = np.zeros((trials, len(grid)), dtype=bool)
    for trial in range(trials):
        ev = TrialEvents(box, birth_cap, t_max, seed, trial)
        for j, value in enumerate(grid):
            pt = _point_params(axis, value, p)
            indicators[trial, j] = ev.survives(
                init, pt.lambda1, pt.lambda2, pt.r, pt.variant
            )
    estimates = [
        _estimate_from_indicators(list(indicators[:, j]), t_max, box, seed)
        for j in range(len(grid))
    ]
    return SweepResult(axis, grid, estimates, coupled=True, indicators=indicators)


def _point_params(axis: str, value: float, p: Params) -> Params:
    if axis == "r":
        return p.with_r(value)
    if axis == "lambda1":
        return Params(value, p.lambda2, p.r, p.d, p.variant)
    if axis == "lambda2":
        return Params(p.lambda1, value, p.r, p.d, p.variant)
    raise ValueError(axis)


def coupled_r_sweep(r_grid, p: Params, box: BoxGeometry, t_max: float,
                    trials: int, seed: int,
                    initial: Configuration | None = None) -> SweepResult:
    """Release-rate sweep on shared schedules: release marks are
    sampled once per trial at the grid maximum and a point with rate r
    keeps the marks with level below r, so the per-trial indicator
    sequence is non-increasing along an ascending grid by construction."""
    grid = [float(g) for g in r_grid]
    if sorted(grid) != grid:
        raise ValueError("r grid must be sorted ascending")
    return sweep("r", grid, p, box, t_max, trials, seed, coupled=True,
                 initial=initial)


# ---------------------------------------------------------------------------
# critical-value bracketing
# ---------------------------------------------------------------------------


@dataclass
class CriticalEstimate:
    r_low: float
    r_high: float
    target_resolution: float
    theta: float | None
    baseline: SurvivalEstimate | None
    points: list[tuple[float, SurvivalEstimate]] = field(default_factory=list)
    flag: str | None = None
    variant: str = SYMMETRIC

    @property
    def degenerate(self) -> bool:
        return self.flag is not None

    def as_dict(self) -> dict:
        return {
            "r_low": self.r_low,
            "r_high": self.r_high,
            "target_resolution": self.target_resolution,
            "theta": self.theta,
            "flag": self.flag,
            "variant": self.variant,
            "baseline": self.baseline.as_dict() if self.baseline else None,
            "points": [
                {"r": r, **est.as_dict()} for r, est in self.points
            ],
        }


SUBCRITICAL_FLOOR = 0.2
_MAX_DOUBLINGS = 40


class _CoupledSurvivalCurves:
    """Per-trial survival indicators, evaluated lazily probe by probe.

    Each trial's schedule is rebuilt deterministically from the same
    substreams at every probe, so nothing trial-sized is retained while
    the monotone coupling across r and across variants still holds
    exactly.
    """

    def __init__(self, lambda1, lambda2, box, t_max, trials, seed,
                 initial=None, variants=(SYMMETRIC,)):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.box = box
        self.t_max = t_max
        self.trials = trials
        self.seed = seed
        self.initial = initial if initial is not None else default_initial(box)
        self.variants = tuple(variants)
        self._cache: dict[tuple[str, float], np.ndarray] = {}

    def _evaluate(self, r: float) -> None:
        cols = {v: np.zeros(self.trials, dtype=bool) for v in self.variants}
        for trial in range(self.trials):
            ev = TrialEvents(self.box, self.lambda1, self.t_max, self.seed, trial)
            for variant in self.variants:
                cols[variant][trial] = ev.survives(
                    self.initial, self.lambda1, self.lambda2, r, variant
                )
        for variant in self.variants:
            self._cache[(variant, float(r))] = cols[variant]

    def indicators(self, variant: str, r: float) -> np.ndarray:
        key = (variant, float(r))
        if key not in self._cache:
            self._evaluate(float(r))
        return self._cache[key]

    def estimate(self, variant: str, r: float) -> SurvivalEstimate:
        return _estimate_from_indicators(
            list(self.indicators(variant, r)), self.t_max, self.box, self.seed
        )

    def probed(self, variant: str) -> list[float]:
        return sorted(r for v, r in self._cache if v == variant)


def _bisect_on_curves(curves: _CoupledSurvivalCurves, variant: str,
                      theta: float, resolution: float) -> tuple[float, float]:
    """Bracket the theta-crossing of the coupled survival profile.

    The per-trial indicators are exactly non-increasing in r, so the
    empirical profile is a monotone step curve and plain bisection on
    probed points is sound.
    """
    def alive(r):
        return curves.estimate(variant, r).p_hat >= theta

    lo = 0.0
    hi = max(resolution, 1.0)
    doublings = 0
    while alive(hi):
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > _MAX_DOUBLINGS:
            raise RuntimeError("no extinction found while doubling r")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if alive(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def estimate_rc(lambda1: float, lambda2: float, variant: str,
                box: BoxGeometry, t_max: float, trials: int,
                resolution: float, seed: int, theta: float | None = None,
                subcritical_floor: float = SUBCRITICAL_FLOOR,
                initial: Configuration | None = None) -> CriticalEstimate:
    """Bracket the release rate at which the survival proxy crosses
    ``theta`` (default: half the r=0 baseline).

    Trials share schedules across probed r values, making each trial's
    indicator exactly non-increasing in r; a baseline below
    ``subcritical_floor`` short-circuits with a "subcritical-at-r0"
    flag instead of bisection.
    """
    curves = _CoupledSurvivalCurves(
        lambda1, lambda2, box, t_max, trials, seed, initial=initial,
        variants=(variant,),
    )
    baseline = curves.estimate(variant, 0.0)
    if baseline.p_hat < subcritical_floor:
        return CriticalEstimate(
            r_low=0.0, r_high=0.0, target_resolution=resolution,
            theta=theta, baseline=baseline,
            points=[(0.0, baseline)], flag="subcritical-at-r0",
            variant=variant,
        )
    th = theta if theta is not None else 0.5 * baseline.p_hat
    r_low, r_high = _bisect_on_curves(curves, variant, th, resolution)
    points = [
        (r, curves.estimate(variant, r)) for r in curves.probed(variant)
    ]
    return CriticalEstimate(
        r_low=r_low, r_high=r_high, target_resolution=resolution, theta=th,
        baseline=baseline, points=points, variant=variant,
    )


def estimate_rc_both_variants(lambda1: float, lambda2: float,
                              box: BoxGeometry, t_max: float, trials: int,
                              resolution: float, seed: int,
                              theta: float | None = None,
                              subcritical_floor: float = SUBCRITICAL_FLOOR,
                              initial: Configuration | None = None) -> dict:
    """Bracket both variants on shared schedules.

    Every probed r is evaluated for both variants on the same trial
    schedules, and the asymmetric indicator is dominated by the
    symmetric one pathwise, so the union-grid brackets come out ordered
    endpoint by endpoint.
    """
    curves = _CoupledSurvivalCurves(
        lambda1, lambda2, box, t_max, trials, seed, initial=initial,
        variants=(SYMMETRIC, ASYMMETRIC),
    )
    baseline = curves.estimate(SYMMETRIC, 0.0)
    out = {}
    if baseline.p_hat < subcritical_floor:
        for variant in (SYMMETRIC, ASYMMETRIC):
            out[variant] = CriticalEstimate(
                r_low=0.0, r_high=0.0, target_resolution=resolution,
                theta=theta, baseline=baseline, points=[(0.0, baseline)],
                flag="subcritical-at-r0", variant=variant,
            )
        return out
    th = theta if theta is not None else 0.5 * baseline.p_hat
    for variant in (SYMMETRIC, ASYMMETRIC):
        _bisect_on_curves(curves, variant, th, resolution)
    # evaluate the union probe set for both variants, then read each
    # bracket off the shared monotone step curves
    union = sorted(set(curves.probed(SYMMETRIC)) | set(curves.probed(ASYMMETRIC)))
    for variant in (SYMMETRIC, ASYMMETRIC):
        alive = [r for r in union if curves.estimate(variant, r).p_hat >= th]
        dead = [r for r in union if curves.estimate(variant, r).p_hat < th]
        r_low = max(alive) if alive else 0.0
        r_high = min(dead) if dead else max(union)
        points = [(r, curves.estimate(variant, r)) for r in union]
        out[variant] = CriticalEstimate(
            r_low=r_low, r_high=r_high, target_resolution=resolution,
            theta=th, baseline=baseline, points=points, variant=variant,
        )
    return out
