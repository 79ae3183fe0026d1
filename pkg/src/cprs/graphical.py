"""Marked-Poisson event schedules and the two schedule backends.

A schedule carries, per site, release times (rate r), wild-death times
(rate 1, drawn as "X"), sterile-death times (rate 1, drawn as "o"), and
per ordered neighbour pair arrow times (rate lambda1) each with one
uniform mark in (0,1).

Two independent computations consume a schedule:

* :func:`apply_schedule` evolves the full four-state configuration
  through the events in time order;
* :func:`active_paths` runs a reachability search over the space-time
  graph cut by X marks, thinning arrows out of sterile sources.

For any schedule and any wild-site initial set the two agree exactly.

Simultaneous events are a probability-zero tie; both backends break
them identically in the order releases < wild-deaths < sterile-deaths <
arrows, then by site / edge index.

Schedules can be sampled with arrow and release rates above the model
rates (``birth_cap``, ``release_cap``); the surplus is removed by the
marks (an arrow from a state-1 source needs mark < lambda1/birth_cap, a
release needs mark < r/release_cap). With the caps at the model rates
this reduces to the plain construction, and it lets parameter sweeps
reuse one schedule across grid points so survival indicators are
monotone trial by trial.
"""
from __future__ import annotations

import heapq
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import Trajectory
from .errors import GeometryMismatchError, ScheduleSizeError
from .lattice import BoxGeometry, Configuration
from .params import Params

MAX_SCHEDULE_EVENTS = 20_000_000


@dataclass
class EventSchedule:
    """Materialised marked-Poisson streams on a box up to a horizon."""

    box: BoxGeometry
    params: Params
    horizon: float
    birth_cap: float
    release_cap: float
    release_time: np.ndarray
    release_site: np.ndarray
    release_level: np.ndarray  # uniform in [0,1); kept when < r/release_cap
    death1_time: np.ndarray
    death1_site: np.ndarray
    death2_time: np.ndarray
    death2_site: np.ndarray
    arrow_time: np.ndarray
    arrow_src: np.ndarray
    arrow_dst: np.ndarray
    arrow_mark: np.ndarray
    seed: object = None
    _merged: tuple | None = field(default=None, repr=False)

    @property
    def n_events(self) -> int:
        return (
            self.release_time.size
            + self.death1_time.size
            + self.death2_time.size
            + self.arrow_time.size
        )

    def releases_at(self, x: int) -> np.ndarray:
        return np.sort(self.release_time[self.release_site == x])

    def death1_at(self, x: int) -> np.ndarray:
        return np.sort(self.death1_time[self.death1_site == x])

    def death2_at(self, x: int) -> np.ndarray:
        return np.sort(self.death2_time[self.death2_site == x])

    def arrows_on(self, x: int, y: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted times and marks of the arrows x -> y."""
        sel = (self.arrow_src == x) & (self.arrow_dst == y)
        order = np.argsort(self.arrow_time[sel], kind="stable")
        return self.arrow_time[sel][order], self.arrow_mark[sel][order]

    def merged(self):
        """Single time-sorted event stream with the documented tie order."""
        if self._merged is None:
            n = self.n_events
            time = np.empty(n)
            kind = np.empty(n, dtype=np.uint8)
            site = np.empty(n, dtype=np.int64)
            src = np.full(n, -1, dtype=np.int64)
            mark = np.zeros(n)
            pieces = (
                (self.release_time, _kernels.EV_RELEASE, self.release_site,
                 None, self.release_level),
                (self.death1_time, _kernels.EV_DEATH_WILD, self.death1_site,
                 None, None),
                (self.death2_time, _kernels.EV_DEATH_STERILE, self.death2_site,
                 None, None),
                (self.arrow_time, _kernels.EV_ARROW, self.arrow_dst,
                 self.arrow_src, self.arrow_mark),
            )
            at = 0
            for times, k, sites, srcs, marks in pieces:
                m = times.size
                time[at:at + m] = times
                kind[at:at + m] = k
                site[at:at + m] = sites
                if srcs is not None:
                    src[at:at + m] = srcs
                if marks is not None:
                    mark[at:at + m] = marks
                at += m
            order = np.lexsort((src, site, kind, time))
            self._merged = (
                time[order], kind[order], site[order], src[order], mark[order]
            )
        return self._merged

    def to_json(self, path) -> None:
        payload = {
            "box": {
                "dimension": self.box.dimension,
                "side": self.box.side,
                "boundary": self.box.boundary,
            },
            "params": {
                "lambda1": self.params.lambda1,
                "lambda2": self.params.lambda2,
                "r": self.params.r,
                "d": self.params.d,
                "variant": self.params.variant,
            },
            "horizon": self.horizon,
            "birth_cap": self.birth_cap,
            "release_cap": self.release_cap,
            "seed": self.seed,
            "release": {
                "time": self.release_time.tolist(),
                "site": self.release_site.tolist(),
                "level": self.release_level.tolist(),
            },
            "death1": {
                "time": self.death1_time.tolist(),
                "site": self.death1_site.tolist(),
            },
            "death2": {
                "time": self.death2_time.tolist(),
                "site": self.death2_site.tolist(),
            },
            "arrow": {
                "time": self.arrow_time.tolist(),
                "src": self.arrow_src.tolist(),
                "dst": self.arrow_dst.tolist(),
                "mark": self.arrow_mark.tolist(),
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "EventSchedule":
        with open(path) as fh:
            payload = json.load(fh)
        box = BoxGeometry(**payload["box"])
        params = Params(**payload["params"])
        arr = lambda key, sub, dtype=float: np.asarray(
            payload[key][sub], dtype=dtype
        )
        return cls(
            box=box,
            params=params,
            horizon=payload["horizon"],
            birth_cap=payload["birth_cap"],
            release_cap=payload["release_cap"],
            release_time=arr("release", "time"),
            release_site=arr("release", "site", np.int64),
            release_level=arr("release", "level"),
            death1_time=arr("death1", "time"),
            death1_site=arr("death1", "site", np.int64),
            death2_time=arr("death2", "time"),
            death2_site=arr("death2", "site", np.int64),
            arrow_time=arr("arrow", "time"),
            arrow_src=arr("arrow", "src", np.int64),
            arrow_dst=arr("arrow", "dst", np.int64),
            arrow_mark=arr("arrow", "mark"),
            seed=payload.get("seed"),
        )


def _poisson_stream(rng, rate, horizon, n_units):
    """Event counts and sorted times for n_units independent streams."""
    if rate <= 0:
        return np.zeros(n_units, dtype=np.int64), np.empty(0)
    counts = rng.poisson(rate * horizon, n_units)
    times = rng.random(int(counts.sum())) * horizon
    # sort within each unit
    offsets = np.concatenate(([0], np.cumsum(counts)))
    for i in range(n_units):
        seg = times[offsets[i]:offsets[i + 1]]
        seg.sort()
    return counts, times


def sample_schedule(box: BoxGeometry, p: Params, horizon: float,
                    rng: np.random.Generator, birth_cap: float | None = None,
                    release_cap: float | None = None, seed=None,
                    max_events: int = MAX_SCHEDULE_EVENTS) -> EventSchedule:
    """Sample all streams: releases, both death types, marked arrows.

    Streams are drawn in a fixed documented order (releases, wild
    deaths, sterile deaths, then arrows edge by edge), so a fixed
    generator state yields an identical schedule.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    birth_cap = p.lambda1 if birth_cap is None else float(birth_cap)
    release_cap = p.r if release_cap is None else float(release_cap)
    if birth_cap < p.lambda1:
        raise ValueError("birth_cap must not undercut lambda1")
    if release_cap < p.r:
        raise ValueError("release_cap must not undercut r")
    n = box.n_sites
    edges = box.directed_edges()
    expected = horizon * (n * (release_cap + 2.0) + len(edges) * birth_cap)
    if expected > max_events:
        raise ScheduleSizeError(
            f"schedule would hold ~{expected:.2e} events (cap {max_events})"
        )

    rel_counts, rel_times = _poisson_stream(rng, release_cap, horizon, n)
    rel_sites = np.repeat(np.arange(n, dtype=np.int64), rel_counts)
    rel_levels = rng.random(rel_times.size)

    d1_counts, d1_times = _poisson_stream(rng, 1.0, horizon, n)
    d1_sites = np.repeat(np.arange(n, dtype=np.int64), d1_counts)
    d2_counts, d2_times = _poisson_stream(rng, 1.0, horizon, n)
    d2_sites = np.repeat(np.arange(n, dtype=np.int64), d2_counts)

    ar_counts, ar_times = _poisson_stream(rng, birth_cap, horizon, len(edges))
    edge_arr = np.asarray(edges, dtype=np.int64).reshape(len(edges), 2)
    ar_src = np.repeat(edge_arr[:, 0], ar_counts)
    ar_dst = np.repeat(edge_arr[:, 1], ar_counts)
    ar_marks = rng.random(ar_times.size)

    return EventSchedule(
        box=box, params=p, horizon=float(horizon), birth_cap=birth_cap,
        release_cap=release_cap,
        release_time=rel_times, release_site=rel_sites,
        release_level=rel_levels,
        death1_time=d1_times, death1_site=d1_sites,
        death2_time=d2_times, death2_site=d2_sites,
        arrow_time=ar_times, arrow_src=ar_src, arrow_dst=ar_dst,
        arrow_mark=ar_marks, seed=seed,
    )


def _thinning_thresholds(sched: EventSchedule, p: Params):
    w1 = p.lambda1 / sched.birth_cap if sched.birth_cap > 0 else 0.0
    w3 = p.lambda2 / sched.birth_cap if sched.birth_cap > 0 else 0.0
    keep = p.r / sched.release_cap if sched.release_cap > 0 else 0.0
    # marks are uniform in [0,1); a threshold of exactly 1 keeps everything
    return min(w1, 1.0), min(w3, 1.0), min(keep, 1.0)


def apply_schedule(initial: Configuration, sched: EventSchedule, variant: str,
                   t: float | None = None, params: Params | None = None,
                   record: bool = True,
                   stop_on_wild_extinction: bool = False) -> Trajectory:
    """Evolve ``initial`` through the schedule's events up to time ``t``.

    ``params`` defaults to the schedule's own; passing smaller rates
    evaluates a thinned process on the same randomness.
    """
    if initial.geometry != sched.box:
        raise GeometryMismatchError("configuration does not match schedule box")
    p = (params or sched.params).with_variant(variant)
    if p.lambda1 > sched.birth_cap or p.r > sched.release_cap:
        raise ValueError("params exceed the schedule's sampling caps")
    t_end = sched.horizon if t is None else float(t)
    if t_end > sched.horizon:
        raise ValueError("t exceeds the schedule horizon")
    time, kind, site, src, mark = sched.merged()
    states = initial.states.copy()
    w1, w3, keep = _thinning_thresholds(sched, p)
    cap = time.size if record else 0
    rec_time = np.empty(cap)
    rec_site = np.empty(cap, dtype=np.int64)
    rec_old = np.empty(cap, dtype=np.int8)
    rec_new = np.empty(cap, dtype=np.int8)
    wild, k, t_done, status = _kernels.apply_event_stream(
        states, time, kind, site, src, mark, w1, w3, keep, p.symmetric,
        t_end, record, rec_time, rec_site, rec_old, rec_new,
        stop_on_wild_extinction,
    )
    return Trajectory(
        initial=initial.copy(),
        params=p,
        times=rec_time[:k].copy(),
        sites=rec_site[:k].copy(),
        old_states=rec_old[:k].copy(),
        new_states=rec_new[:k].copy(),
        terminal=Configuration(sched.box, states),
        terminal_time=float(t_done),
        stopped="wild-extinct" if status == _kernels.STATUS_WILD_EXTINCT else "t_max",
        seed=sched.seed,
    )


def couple_by_schedule(initials: list[Configuration], sched: EventSchedule,
                       variant: str, t: float | None = None,
                       params: Params | None = None) -> list[Trajectory]:
    """Evolve several initial configurations under the same schedule."""
    return [
        apply_schedule(cfg, sched, variant, t=t, params=params)
        for cfg in initials
    ]


class _SterileTimeline:
    """Sterile-component indicator of one site driven by release and
    sterile-death marks, queried just before a given time."""

    def __init__(self, marks: list[tuple[float, int]]):
        # marks sorted by (time, kind); kind uses the global tie order so
        # a release (0) at the same instant precedes a sterile death (2)
        self.marks = sorted(marks)

    def sterile_before(self, t: float, kind: int) -> bool:
        """Indicator just before an event of ``kind`` at time ``t``.

        Marks strictly earlier always count; marks at exactly ``t``
        count when their kind precedes ``kind`` in the tie order.
        """
        idx = bisect_left(self.marks, (t, kind))
        if idx == 0:
            return False
        return self.marks[idx - 1][1] == _kernels.EV_RELEASE


def active_paths(initial_sites: set[int] | list[int], sched: EventSchedule,
                 variant: str, t: float, params: Params | None = None) -> set[int]:
    """Sites reached by an active path from ``initial_sites`` x {0}.

    A path climbs a site's timeline between X marks and crosses arrows.
    An arrow is usable when its source segment is already active, its
    mark passes the thinning test if the source carries the sterile
    component, and (asymmetric variant) the target does not carry it.

    Implemented as an earliest-activation search over death-cut
    segments, independent of the forward state evolution in
    :func:`apply_schedule`.
    """
    p = (params or sched.params).with_variant(variant)
    if p.lambda1 > sched.birth_cap or p.r > sched.release_cap:
        raise ValueError("params exceed the schedule's sampling caps")
    if t > sched.horizon:
        raise ValueError("t exceeds the schedule horizon")
    w1, w3, keep = _thinning_thresholds(sched, p)

    n = sched.box.n_sites
    # death-1 cut points per site define the segments
    cuts = [[] for _ in range(n)]
    for tt, x in zip(sched.death1_time, sched.death1_site):
        if tt <= t:
            cuts[x].append(float(tt))
    for c in cuts:
        c.sort()

    # sterile indicator timelines from kept releases and sterile deaths
    marks = [[] for _ in range(n)]
    for tt, x, level in zip(
        sched.release_time, sched.release_site, sched.release_level
    ):
        if tt <= t and level < keep:
            marks[x].append((float(tt), _kernels.EV_RELEASE))
    for tt, x in zip(sched.death2_time, sched.death2_site):
        if tt <= t:
            marks[x].append((float(tt), _kernels.EV_DEATH_STERILE))
    timelines = [_SterileTimeline(m) for m in marks]

    # arrows sorted exactly as in the merged stream
    order = np.lexsort(
        (sched.arrow_src, sched.arrow_dst, sched.arrow_time)
    )
    ar_t = sched.arrow_time[order]
    ar_s = sched.arrow_src[order]
    ar_d = sched.arrow_dst[order]
    ar_m = sched.arrow_mark[order]

    activation: dict[tuple[int, int], float] = {}
    heap: list[tuple[float, int, int, int]] = []
    for x in set(initial_sites):
        activation[(x, 0)] = 0.0

    # arrows indexed per source for the search
    arrows_from: dict[int, list[int]] = {}
    for i in range(ar_t.size):
        if ar_t[i] <= t:
            arrows_from.setdefault(int(ar_s[i]), []).append(i)

    # earliest-activation relaxation: process activations in time order
    for key, at in activation.items():
        heapq.heappush(heap, (at, -1, key[0], key[1]))
    seen = set()
    while heap:
        at, _, x, seg = heapq.heappop(heap)
        if (x, seg) in seen:
            continue
        seen.add((x, seg))
        seg_end = cuts[x][seg] if seg < len(cuts[x]) else float("inf")
        for i in arrows_from.get(x, ()):
            u = float(ar_t[i])
            if u < at or u >= seg_end:
                # an arrow at exactly the segment-ending X time is dead:
                # the X sorts first and kills the source
                continue
            y = int(ar_d[i])
            src_sterile = timelines[x].sterile_before(u, _kernels.EV_ARROW)
            mark = float(ar_m[i])
            if src_sterile:
                if not mark < w3:
                    continue
            else:
                if not mark < w1:
                    continue
            if p.variant == "asymmetric" and timelines[y].sterile_before(
                u, _kernels.EV_ARROW
            ):
                continue
            seg_y = bisect_right(cuts[y], u)
            key = (y, seg_y)
            if key not in activation or activation[key] > u:
                activation[key] = u
                heapq.heappush(heap, (u, i, y, seg_y))

    out = set()
    for x in range(n):
        last_seg = len(cuts[x])
        if (x, last_seg) in activation:
            out.add(x)
    return out
