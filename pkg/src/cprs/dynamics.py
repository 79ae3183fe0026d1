"""Exact continuous-time simulation of the slowdown contact process.

Transitions at a site x holding state s, with n1 / n3 neighbours in
state 1 / 3:

    0 -> 1  at lambda1*n1 + lambda2*n3      1 -> 0  at 1
    0 -> 2  at r                            2 -> 0  at 1
    1 -> 3  at r                            3 -> 1  at 1
                                            3 -> 2  at 1
    2 -> 3  at lambda1*n1 + lambda2*n3      (symmetric variant only)

The simulator is an exact Gillespie chain; per-site rates live in a
binary-indexed tree so an event costs O(log n_sites).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import AbsorbingStateError
from .lattice import Configuration, neighbor_counts, wild_set
from .params import Params

_EVENT_CHUNK = 1 << 16


def single_site_rates(state: int, n1: int, n3: int, lam1, lam2, r,
                      symmetric: bool) -> list[tuple[int, object]]:
    """Nonzero transitions (target, rate) of one site; pure arithmetic.

    Shared by the marginal simulator and the coupling projection check,
    and polymorphic over the numeric type of the rates.
    """
    birth = lam1 * n1 + lam2 * n3
    one = 1  # int stays exact under both float and Fraction arithmetic
    out = []
    if state == 0:
        if birth != 0:
            out.append((1, birth))
        if r != 0:
            out.append((2, r))
    elif state == 1:
        out.append((0, one))
        if r != 0:
            out.append((3, r))
    elif state == 2:
        out.append((0, one))
        if symmetric and birth != 0:
            out.append((3, birth))
    else:  # state == 3
        out.append((1, one))
        out.append((2, one))
    return out


def transition_rates(config: Configuration, x: int, p: Params) -> list[tuple[int, float]]:
    """Nonzero transitions of site ``x`` under ``p``."""
    n1, n3 = neighbor_counts(config, x)
    return single_site_rates(
        config.state(x), n1, n3, p.lambda1, p.lambda2, p.r, p.symmetric
    )


def total_rate(config: Configuration, p: Params) -> float:
    """Sum of all per-site transition rates."""
    return float(
        sum(
            rate
            for x in range(config.geometry.n_sites)
            for _, rate in transition_rates(config, x, p)
        )
    )


def gillespie_step(config: Configuration, p: Params, rng: np.random.Generator):
    """One exact event: sample the holding time and one site flip.

    Returns ``(new_config, dt)`` and raises :class:`AbsorbingStateError`
    when no transition has positive rate.
    """
    rates = [
        (x, tgt, rate)
        for x in range(config.geometry.n_sites)
        for tgt, rate in transition_rates(config, x, p)
    ]
    total = sum(rate for _, _, rate in rates)
    if total <= 0:
        raise AbsorbingStateError("configuration has no active transition")
    dt = rng.exponential(1.0 / total)
    u = rng.random() * total
    acc = 0.0
    for x, tgt, rate in rates:
        acc += rate
        if u < acc:
            out = config.copy()
            out.set_state(x, tgt)
            return out, dt
    out = config.copy()
    out.set_state(rates[-1][0], rates[-1][1])
    return out, dt


@dataclass
class Trajectory:
    """Event log of one run plus its terminal configuration."""

    initial: Configuration
    params: Params
    times: np.ndarray
    sites: np.ndarray
    old_states: np.ndarray
    new_states: np.ndarray
    terminal: Configuration
    terminal_time: float
    stopped: str = "t_max"  # or "absorbed", "wild-extinct"
    seed: object = None

    @property
    def events(self) -> list[tuple[float, int, int, int]]:
        return [
            (float(t), int(x), int(o), int(n))
            for t, x, o, n in zip(
                self.times, self.sites, self.old_states, self.new_states
            )
        ]

    def replay(self) -> Configuration:
        """Fold the event list over the initial configuration."""
        cfg = self.initial.copy()
        for _, x, old, new in self.events:
            if cfg.state(x) != old:
                raise ValueError(f"event log inconsistent at site {x}")
            cfg.set_state(x, new)
        return cfg

    def config_at(self, t: float) -> Configuration:
        """Configuration after all events with time <= t."""
        cfg = self.initial.copy()
        for tt, x, _, new in self.events:
            if tt > t:
                break
            cfg.set_state(x, new)
        return cfg

    def wild_extinct(self) -> bool:
        return len(wild_set(self.terminal)) == 0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,site,old,new\n")
            for t, x, o, n in self.events:
                fh.write(f"{t!r},{x},{o},{n}\n")

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "lambda1": self.params.lambda1,
            "lambda2": self.params.lambda2,
            "r": self.params.r,
            "d": self.params.d,
            "variant": self.params.variant,
            "terminal_time": self.terminal_time,
            "n_events": int(self.times.size),
            "wild_count": self.terminal.wild_count(),
            "wild_extinct": self.wild_extinct(),
            "stopped": self.stopped,
        }

    def summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


_STATUS_NAMES = {
    _kernels.STATUS_TMAX: "t_max",
    _kernels.STATUS_ABSORBED: "absorbed",
    _kernels.STATUS_WILD_EXTINCT: "wild-extinct",
}


def simulate(config0: Configuration, p: Params, t_max: float,
             rng: np.random.Generator, stop_on_wild_extinction: bool = False,
             record: bool = True, seed=None) -> Trajectory:
    """Run the exact chain until ``t_max``, absorption, or wild extinction.

    With ``record=False`` the event log is left empty (survival studies
    only need the terminal state).
    """
    states = config0.states.copy()
    nbr = config0.geometry.neighbor_table()
    t = 0.0
    chunks_t, chunks_site, chunks_old, chunks_new = [], [], [], []
    cap = _EVENT_CHUNK if record else 0
    while True:
        ev_time = np.empty(cap)
        ev_site = np.empty(cap, dtype=np.int64)
        ev_old = np.empty(cap, dtype=np.int8)
        ev_new = np.empty(cap, dtype=np.int8)
        t, k, status = _kernels.gillespie_run(
            states, nbr, float(p.lambda1), float(p.lambda2), float(p.r),
            p.symmetric, t, float(t_max), stop_on_wild_extinction, record,
            ev_time, ev_site, ev_old, ev_new, rng,
        )
        if k:
            chunks_t.append(ev_time[:k].copy())
            chunks_site.append(ev_site[:k].copy())
            chunks_old.append(ev_old[:k].copy())
            chunks_new.append(ev_new[:k].copy())
        if status != _kernels.STATUS_BUFFER_FULL:
            break
    concat = lambda parts, dtype: (
        np.concatenate(parts) if parts else np.empty(0, dtype=dtype)
    )
    return Trajectory(
        initial=config0.copy(),
        params=p,
        times=concat(chunks_t, float),
        sites=concat(chunks_site, np.int64),
        old_states=concat(chunks_old, np.int8),
        new_states=concat(chunks_new, np.int8),
        terminal=Configuration(config0.geometry, states),
        terminal_time=float(t),
        stopped=_STATUS_NAMES[status],
        seed=seed,
    )
