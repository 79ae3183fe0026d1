"""Site states, finite boxes, configurations, and the state order.

Each lattice site carries one of four codes:

    0  empty
    1  wild population only
    2  sterile population only
    3  both populations (mixed)

Configurations are value-like wrappers around an ``int8`` array over a
finite box. All comparisons use the total order ``2 < 0 < 3 < 1``, the
only order on the codes under which the coupled dynamics is monotone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import GeometryMismatchError

EMPTY_STATE = 0
WILD_STATE = 1
STERILE_STATE = 2
MIXED_STATE = 3
ALL_STATES = (EMPTY_STATE, WILD_STATE, STERILE_STATE, MIXED_STATE)
WILD_STATES = (WILD_STATE, MIXED_STATE)

# Rank of each state code in the order 2 < 0 < 3 < 1, indexed by code.
STATE_RANK = np.array([1, 3, 0, 2], dtype=np.int8)

PERIODIC = "periodic"
EMPTY_EXTERIOR = "empty-exterior"
BOUNDARIES = (PERIODIC, EMPTY_EXTERIOR)

CONFIG_EQUAL = "equal"
CONFIG_LE = "le"
CONFIG_GE = "ge"
CONFIG_INCOMPARABLE = "incomparable"


def state_rank(state: int) -> int:
    """Position of a state code in the order 2 < 0 < 3 < 1."""
    return int(STATE_RANK[state])


def compare_states(a: int, b: int) -> int:
    """Return -1, 0, or +1 as ``a`` precedes, equals, or follows ``b``.

    The order is 2 < 0 < 3 < 1.
    """
    ra, rb = STATE_RANK[a], STATE_RANK[b]
    return int(ra > rb) - int(ra < rb)


@dataclass(frozen=True)
class BoxGeometry:
    """A finite d-dimensional box with ``side`` sites per axis.

    Sites are linearised row-major: the last axis varies fastest, so in
    1D index == coordinate and in 2D index == x0 * side + x1. Under the
    ``empty-exterior`` boundary, out-of-box neighbour slots exist but
    never contribute to neighbour counts.
    """

    dimension: int
    side: int
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.side < 1:
            raise ValueError("side must be >= 1")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @property
    def n_sites(self) -> int:
        return self.side**self.dimension

    def coords(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_sites:
            raise IndexError(f"site index {index} outside box")
        out = []
        for _ in range(self.dimension):
            out.append(index % self.side)
            index //= self.side
        return tuple(reversed(out))

    def index(self, coords: Iterable[int]) -> int:
        idx = 0
        n = 0
        for c in coords:
            if not 0 <= c < self.side:
                raise IndexError(f"coordinate {c} outside box")
            idx = idx * self.side + c
            n += 1
        if n != self.dimension:
            raise IndexError("wrong number of coordinates")
        return idx

    def neighbor_table(self) -> np.ndarray:
        """(n_sites, 2d) table of neighbour indices; -1 marks the exterior."""
        return _neighbor_table(self.dimension, self.side, self.boundary)

    def neighbors(self, x: int) -> list[int]:
        """In-box neighbours of ``x``."""
        return [int(y) for y in self.neighbor_table()[x] if y >= 0]

    def directed_edges(self) -> list[tuple[int, int]]:
        """All ordered in-box neighbour pairs, lexicographic in (x, slot)."""
        table = self.neighbor_table()
        return [
            (x, int(y))
            for x in range(self.n_sites)
            for y in table[x]
            if y >= 0
        ]


@lru_cache(maxsize=None)
def _neighbor_table(dimension: int, side: int, boundary: str) -> np.ndarray:
    n = side**dimension
    table = np.full((n, 2 * dimension), -1, dtype=np.int64)
    strides = [side ** (dimension - 1 - k) for k in range(dimension)]
    for x in range(n):
        rest = x
        coords = []
        for s in strides:
            coords.append(rest // s)
            rest %= s
        slot = 0
        for axis in range(dimension):
            for step in (-1, 1):
                c = coords[axis] + step
                if 0 <= c < side:
                    table[x, slot] = x + step * strides[axis]
                elif boundary == PERIODIC and side > 1:
                    table[x, slot] = x + (c % side - coords[axis]) * strides[axis]
                slot += 1
    table.setflags(write=False)
    return table


class Configuration:
    """Assignment of a state code to every site of a box."""

    __slots__ = ("geometry", "states")

    def __init__(self, geometry: BoxGeometry, states=None):
        self.geometry = geometry
        if states is None:
            self.states = np.zeros(geometry.n_sites, dtype=np.int8)
        else:
            arr = np.asarray(states, dtype=np.int8).copy()
            if arr.shape != (geometry.n_sites,):
                raise ValueError("states must cover every site of the box")
            if not np.isin(arr, ALL_STATES).all():
                raise ValueError("state codes must lie in {0,1,2,3}")
            self.states = arr

    @classmethod
    def filled(cls, geometry: BoxGeometry, state: int) -> "Configuration":
        return cls(geometry, np.full(geometry.n_sites, state, dtype=np.int8))

    @classmethod
    def from_wild_sites(cls, geometry: BoxGeometry, sites: Iterable[int]) -> "Configuration":
        """Configuration with state 1 on ``sites`` and state 0 elsewhere."""
        cfg = cls(geometry)
        for x in sites:
            cfg.states[x] = WILD_STATE
        return cfg

    def copy(self) -> "Configuration":
        return Configuration(self.geometry, self.states)

    def state(self, x: int) -> int:
        return int(self.states[x])

    def set_state(self, x: int, s: int) -> None:
        if s not in ALL_STATES:
            raise ValueError("state codes must lie in {0,1,2,3}")
        self.states[x] = s

    def wild_count(self) -> int:
        return int(np.isin(self.states, WILD_STATES).sum())

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.geometry == other.geometry
            and np.array_equal(self.states, other.states)
        )

    def __repr__(self):
        return f"Configuration({self.geometry!r}, {self.states.tolist()})"


def neighbor_counts(config: Configuration, x: int) -> tuple[int, int]:
    """Number of neighbours of ``x`` in state 1 and in state 3."""
    if not 0 <= x < config.geometry.n_sites:
        raise IndexError(f"site index {x} outside box")
    n1 = n3 = 0
    for y in config.geometry.neighbor_table()[x]:
        if y >= 0:
            s = config.states[y]
            if s == WILD_STATE:
                n1 += 1
            elif s == MIXED_STATE:
                n3 += 1
    return n1, n3


def wild_set(config: Configuration) -> set[int]:
    """Sites whose state is 1 or 3."""
    return set(np.flatnonzero(np.isin(config.states, WILD_STATES)).tolist())


def compare_configs(c1: Configuration, c2: Configuration) -> str:
    """Coordinate-wise comparison under the state order 2 < 0 < 3 < 1.

    Returns one of ``"equal"``, ``"le"`` (c1 <= c2), ``"ge"`` (c2 <= c1)
    or ``"incomparable"``.
    """
    if c1.geometry != c2.geometry:
        raise GeometryMismatchError("configurations live on different boxes")
    r1 = STATE_RANK[c1.states]
    r2 = STATE_RANK[c2.states]
    any_lt = bool((r1 < r2).any())
    any_gt = bool((r1 > r2).any())
    if any_lt and any_gt:
        return CONFIG_INCOMPARABLE
    if any_lt:
        return CONFIG_LE
    if any_gt:
        return CONFIG_GE
    return CONFIG_EQUAL


def save_configuration(config: Configuration, path) -> None:
    """Write a snapshot: a JSON geometry header then ``index,state`` rows."""
    g = config.geometry
    header = json.dumps(
        {"dimension": g.dimension, "side": g.side, "boundary": g.boundary}
    )
    with open(path, "w") as fh:
        fh.write(f"#{header}\n")
        fh.write("index,state\n")
        for i, s in enumerate(config.states):
            fh.write(f"{i},{int(s)}\n")


def load_configuration(path) -> Configuration:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("missing geometry header")
        meta = json.loads(header[1:])
        geometry = BoxGeometry(meta["dimension"], meta["side"], meta["boundary"])
        fh.readline()  # column names
        states = np.zeros(geometry.n_sites, dtype=np.int8)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            idx, state = line.split(",")
            states[int(idx)] = int(state)
    return Configuration(geometry, states)
