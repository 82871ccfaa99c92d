"""Pointed matched circles, chords, and the distinguished surgery curves."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple


class Chord(NamedTuple):
    """An oriented interval [start, end] between marked points, not crossing z."""

    start: int
    end: int

    def __str__(self) -> str:
        return f"[{self.start},{self.end}]"


@dataclass(frozen=True)
class Generic:
    """Curve whose feet are 3 apart, enclosing the two points d < u."""

    d: int
    u: int


@dataclass(frozen=True)
class DegenerateLow:
    """Curve with feet 2 apart at the low end of the circle (foot next to z)."""

    p: int


@dataclass(frozen=True)
class DegenerateHigh:
    """Mirror of DegenerateLow: feet 2 apart at the high end of the circle."""

    p: int


@dataclass(frozen=True)
class CurveClass:
    """One of the 2k distinguished curves, classified by its local shape."""

    n: int
    feet: tuple[int, int]
    kind: Generic | DegenerateLow | DegenerateHigh

    @property
    def c1(self) -> int:
        return self.feet[0]

    @property
    def c2(self) -> int:
        return self.feet[1]


class PointedMatchedCircle:
    """4k marked points on a circle cut at the basepoint z, matched in pairs.

    Positions are 1-based; z sits between position 4k and position 1, so
    chords never wrap.  Pairs are indexed 0..2k-1, sorted by lower foot.
    """

    def __init__(self, genus: int, matching: dict[int, int]):
        if genus < 1:
            raise ValueError("genus must be at least 1")
        n = 4 * genus
        if sorted(matching) != list(range(1, n + 1)):
            raise ValueError("matching must cover positions 1..4k exactly")
        for p, q in matching.items():
            if p == q or matching[q] != p:
                raise ValueError("matching must be a fixed-point-free involution")
        self.genus = genus
        self.n_points = n
        self._partner = matching
        self.pairs: tuple[tuple[int, int], ...] = tuple(
            sorted((min(p, q), max(p, q)) for p, q in matching.items() if p < q)
        )
        self._pair_of = {}
        for i, (p, q) in enumerate(self.pairs):
            self._pair_of[p] = i
            self._pair_of[q] = i
        if not self._surgery_connected():
            raise ValueError("surgery on the matched circle is disconnected")

    def _surgery_connected(self) -> bool:
        # Arc r = interval (r, r+1) for r = 1..4k-1, arc 0 = the z-arc.
        # Surgering pair {p,q} joins arc-left-of-p with arc-right-of-q and
        # vice versa; the result must be a single circle.
        n = self.n_points
        left = lambda p: p - 1
        right = lambda p: p % n
        adj: dict[int, list[int]] = {a: [] for a in range(n)}
        for p, q in self.pairs:
            adj[left(p)].append(right(q))
            adj[right(q)].append(left(p))
            adj[left(q)].append(right(p))
            adj[right(p)].append(left(q))
        if any(len(v) != 2 for v in adj.values()):
            return False
        seen = {0}
        stack = [0]
        while stack:
            for b in adj[stack.pop()]:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return len(seen) == n

    # -- basic queries ----------------------------------------------------

    def partner(self, p: int) -> int:
        return self._partner[p]

    def pair_of(self, p: int) -> int:
        """Index of the matched pair containing position p."""
        return self._pair_of[p]

    def pair_feet(self, i: int) -> tuple[int, int]:
        return self.pairs[i]

    @property
    def n_pairs(self) -> int:
        return 2 * self.genus

    def reflect(self, p: int) -> int:
        """The orientation-reversing position dictionary p -> 4k+1-p."""
        return self.n_points + 1 - p

    def reflect_pair(self, i: int) -> int:
        lo, hi = self.pairs[i]
        return self.pair_of(self.reflect(hi))

    def reflect_pairs(self, pair_ids) -> frozenset[int]:
        return frozenset(self.reflect_pair(i) for i in pair_ids)

    @property
    def is_linear(self) -> bool:
        return self.pairs == _linear_pairs(self.genus)

    def __eq__(self, other) -> bool:
        return isinstance(other, PointedMatchedCircle) and self.pairs == other.pairs

    def __hash__(self) -> int:
        return hash(self.pairs)

    def __repr__(self) -> str:
        return f"PointedMatchedCircle(genus={self.genus}, {self})"

    def __str__(self) -> str:
        return " ".join(f"{p}-{q}" for p, q in self.pairs)


def _linear_pairs(k: int) -> tuple[tuple[int, int], ...]:
    pairs = [(1, 3), (4 * k - 2, 4 * k)]
    pairs += [(2 * n, 2 * n + 3) for n in range(1, 2 * k - 1)]
    return tuple(sorted(pairs))


@lru_cache(maxsize=None)
def linear_pmc(k: int) -> PointedMatchedCircle:
    """The genus-k linear pointed matched circle."""
    if k < 1:
        raise ValueError("genus must be at least 1")
    matching = {}
    for p, q in _linear_pairs(k):
        matching[p] = q
        matching[q] = p
    return PointedMatchedCircle(k, matching)


def curve(pmc: PointedMatchedCircle, n: int) -> CurveClass:
    """The n-th distinguished curve of a linear pointed matched circle."""
    if not pmc.is_linear:
        raise ValueError("curve classification is defined for linear circles only")
    k = pmc.genus
    if not 1 <= n <= 2 * k:
        raise ValueError(f"curve index must be in 1..{2 * k}, got {n}")
    if n == 1:
        return CurveClass(n, (1, 3), DegenerateLow(p=2))
    if n == 2 * k:
        return CurveClass(n, (4 * k - 2, 4 * k), DegenerateHigh(p=4 * k - 1))
    c1 = 2 * (n - 1)
    return CurveClass(n, (c1, c1 + 3), Generic(d=c1 + 1, u=c1 + 2))


def all_chords(pmc: PointedMatchedCircle) -> list[Chord]:
    """All chords [s, e] with 1 <= s < e <= 4k, in lexicographic order."""
    n = pmc.n_points
    return [Chord(s, e) for s in range(1, n + 1) for e in range(s + 1, n + 1)]
