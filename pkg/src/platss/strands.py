"""The truncated strands algebra of a pointed matched circle.

Basic generators are symmetrized strand diagrams: a set of horizontal
matched pairs plus a set of moving chords with pairwise disjoint
interiors.  Any operation that would create local multiplicity >= 2
returns zero, which is what truncation means here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

from .pmc import Chord, PointedMatchedCircle, linear_pmc


def chord_mask(c: Chord) -> int:
    """Bitmask of the regions (gaps between consecutive points) a chord covers."""
    return (1 << (c.end - 1)) - (1 << (c.start - 1))


@dataclass(frozen=True)
class StrandDiagram:
    """A basic generator: horizontal matched pairs plus moving chords."""

    pmc: PointedMatchedCircle
    horizontals: frozenset[int]
    moving: tuple[Chord, ...]
    left_idem: frozenset[int] = field(init=False, compare=False)
    right_idem: frozenset[int] = field(init=False, compare=False)
    support: int = field(init=False, compare=False)
    _hash: int = field(init=False, compare=False)

    def __post_init__(self):
        pmc = self.pmc
        starts = [c.start for c in self.moving]
        ends = [c.end for c in self.moving]
        if any(not 1 <= c.start < c.end <= pmc.n_points for c in self.moving):
            raise ValueError(f"chord out of range: {self.moving}")
        prev_end = 0
        for c in self.moving:
            if c.start < prev_end:
                raise ValueError(f"overlapping chord interiors: {self.moving}")
            prev_end = c.end
        start_pairs = frozenset(pmc.pair_of(p) for p in starts)
        end_pairs = frozenset(pmc.pair_of(p) for p in ends)
        if len(start_pairs) != len(starts) or len(end_pairs) != len(ends):
            raise ValueError(f"repeated start or end pair: {self.moving}")
        if self.horizontals & (start_pairs | end_pairs):
            raise ValueError("horizontal pair meets a moving chord endpoint")
        object.__setattr__(self, "left_idem", self.horizontals | start_pairs)
        object.__setattr__(self, "right_idem", self.horizontals | end_pairs)
        mask = 0
        for c in self.moving:
            mask |= chord_mask(c)
        object.__setattr__(self, "support", mask)
        object.__setattr__(
            self, "_hash", hash((self.pmc.pairs, self.horizontals, self.moving))
        )

    def __hash__(self) -> int:
        return self._hash

    @property
    def weight(self) -> int:
        return len(self.horizontals) + len(self.moving)

    @property
    def is_idempotent(self) -> bool:
        return not self.moving

    def multiplicity(self, region: int) -> int:
        return (self.support >> (region - 1)) & 1

    def __str__(self) -> str:
        return diagram_name(self)

    def __repr__(self) -> str:
        return f"<{diagram_name(self)}>"


def make_diagram(pmc, horizontals, moving) -> StrandDiagram:
    return StrandDiagram(pmc, frozenset(horizontals), tuple(sorted(moving)))


def idempotent_diagram(pmc, pair_ids) -> StrandDiagram:
    return StrandDiagram(pmc, frozenset(pair_ids), ())


def idempotents(pmc: PointedMatchedCircle, weight: int) -> list[frozenset[int]]:
    """All weight-sized subsets of matched pairs, as pair-id sets."""
    if not 0 <= weight <= pmc.n_pairs:
        raise ValueError(f"weight must be in 0..{pmc.n_pairs}")
    return [
        frozenset(c) for c in itertools.combinations(range(pmc.n_pairs), weight)
    ]


# -- multiplication and differential ---------------------------------------


def _double_crossing(paths: list[tuple[int, int, int]]) -> bool:
    for (x1, y1, z1), (x2, y2, z2) in itertools.combinations(paths, 2):
        if (x1 - x2) * (y1 - y2) < 0 and (y1 - y2) * (z1 - z2) < 0:
            return True
    return False


def multiply_diagrams(a: StrandDiagram, b: StrandDiagram) -> StrandDiagram | None:
    """Concatenate two diagrams; None encodes the zero product."""
    if a.pmc != b.pmc:
        raise ValueError("cannot multiply diagrams over different circles")
    cache = _algebra(a.pmc)._mul_cache
    key = (a, b)
    try:
        return cache[key]
    except KeyError:
        pass
    result = _multiply_uncached(a, b)
    cache[key] = result
    return result


def _multiply_uncached(a: StrandDiagram, b: StrandDiagram) -> StrandDiagram | None:
    if a.right_idem != b.left_idem:
        return None
    if a.support & b.support:
        return None  # local multiplicity >= 2
    pmc = a.pmc
    b_by_start = {c.start: c for c in b.moving}
    a_ends = {c.end for c in a.moving}
    moving: list[Chord] = []
    paths: list[tuple[int, int, int]] = []
    for c in a.moving:
        nxt = b_by_start.get(c.end)
        if nxt is not None:
            moving.append(Chord(c.start, nxt.end))
            paths.append((c.start, c.end, nxt.end))
        elif pmc.pair_of(c.end) in b.horizontals:
            moving.append(c)
            paths.append((c.start, c.end, c.end))
        else:
            return None
    for c in b.moving:
        if c.start in a_ends:
            continue
        if pmc.pair_of(c.start) in a.horizontals:
            moving.append(c)
            paths.append((c.start, c.start, c.end))
        else:
            return None
    if _double_crossing(paths):
        return None
    return StrandDiagram(pmc, a.horizontals & b.horizontals, tuple(sorted(moving)))


def diff_diagram(d: StrandDiagram) -> frozenset[StrandDiagram]:
    """All resolutions of a crossing between a moving chord and a horizontal."""
    cache = _algebra(d.pmc)._diff_cache
    try:
        return cache[d]
    except KeyError:
        pass
    pmc = d.pmc
    out: set[StrandDiagram] = set()
    for c in d.moving:
        for h in d.horizontals:
            for q in pmc.pair_feet(h):
                if c.start < q < c.end:
                    rest = tuple(x for x in d.moving if x != c)
                    new = tuple(sorted(rest + (Chord(c.start, q), Chord(q, c.end))))
                    out.symmetric_difference_update(
                        {StrandDiagram(pmc, d.horizontals - {h}, new)}
                    )
    res = frozenset(out)
    cache[d] = res
    return res


# -- F2 linear combinations -------------------------------------------------


@dataclass(frozen=True)
class AlgebraElement:
    """An F2 sum of strand diagrams over a single circle."""

    pmc: PointedMatchedCircle
    terms: frozenset[StrandDiagram]

    def __post_init__(self):
        if any(t.pmc != self.pmc for t in self.terms):
            raise ValueError("mixed circles in one element")

    def __add__(self, other: AlgebraElement) -> AlgebraElement:
        if self.pmc != other.pmc:
            raise ValueError("mixed circles")
        return AlgebraElement(self.pmc, self.terms ^ other.terms)

    def __mul__(self, other: AlgebraElement) -> AlgebraElement:
        return multiply(self, other)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(sorted(diagram_name(t) for t in self.terms))


def element(pmc, diagrams) -> AlgebraElement:
    return AlgebraElement(pmc, frozenset(diagrams))


def zero(pmc) -> AlgebraElement:
    return AlgebraElement(pmc, frozenset())


def multiply(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    if a.pmc != b.pmc:
        raise ValueError("cannot multiply elements over different circles")
    out: set[StrandDiagram] = set()
    for x in a.terms:
        for y in b.terms:
            p = multiply_diagrams(x, y)
            if p is not None:
                out.symmetric_difference_update({p})
    return AlgebraElement(a.pmc, frozenset(out))


def differential(a: AlgebraElement) -> AlgebraElement:
    out: set[StrandDiagram] = set()
    for t in a.terms:
        out.symmetric_difference_update(diff_diagram(t))
    return AlgebraElement(a.pmc, frozenset(out))


def _completions(pmc, moving: tuple[Chord, ...], weight: int):
    used = {pmc.pair_of(c.start) for c in moving} | {
        pmc.pair_of(c.end) for c in moving
    }
    free = [i for i in range(pmc.n_pairs) if i not in used]
    need = weight - len(moving)
    if need < 0:
        return
    for horiz in itertools.combinations(free, need):
        yield StrandDiagram(pmc, frozenset(horiz), moving)


def chord_element(pmc, xi: Chord, weight: int) -> AlgebraElement:
    """Sum over all horizontal completions of the single moving chord xi."""
    return set_element(pmc, [xi], weight)


def set_element(pmc, chords, weight: int) -> AlgebraElement:
    """Sum over all horizontal completions of a set of disjoint moving chords."""
    moving = tuple(sorted(chords))
    prev_end = 0
    for c in moving:
        if c.start < prev_end:
            raise ValueError(f"chords overlap: {moving}")
        prev_end = c.end
    return AlgebraElement(pmc, frozenset(_completions(pmc, moving, weight)))


# -- whole-algebra enumeration ----------------------------------------------


class StrandAlgebra:
    """Per-circle caches: basis enumeration, products, differentials."""

    def __init__(self, pmc: PointedMatchedCircle):
        self.pmc = pmc
        self._mul_cache: dict = {}
        self._diff_cache: dict = {}
        self._diagrams: dict[int, tuple[StrandDiagram, ...]] = {}

    def diagrams(self, weight: int) -> tuple[StrandDiagram, ...]:
        if weight not in self._diagrams:
            self._diagrams[weight] = tuple(self._enumerate(weight))
        return self._diagrams[weight]

    def all_diagrams(self) -> list[StrandDiagram]:
        return [d for w in range(self.pmc.n_pairs + 1) for d in self.diagrams(w)]

    def _moving_sets(self):
        pmc = self.pmc
        chords = [
            Chord(s, e)
            for s in range(1, pmc.n_points + 1)
            for e in range(s + 1, pmc.n_points + 1)
        ]

        def extend(prefix: list[Chord], start_pairs, end_pairs, min_start):
            yield tuple(prefix)
            for c in chords:
                if c.start < min_start:
                    continue
                sp, ep = pmc.pair_of(c.start), pmc.pair_of(c.end)
                if sp in start_pairs or ep in end_pairs:
                    continue
                if prefix and c.start < prefix[-1].end:
                    continue
                prefix.append(c)
                yield from extend(
                    prefix, start_pairs | {sp}, end_pairs | {ep}, c.start + 1
                )
                prefix.pop()

        yield from extend([], frozenset(), frozenset(), 1)

    def _enumerate(self, weight: int):
        for moving in self._moving_sets():
            # moving sets from _moving_sets are sorted by construction but may
            # interleave; normalize and re-check interiors.
            moving = tuple(sorted(moving))
            if any(moving[i].end > moving[i + 1].start for i in range(len(moving) - 1)):
                continue
            yield from _completions(self.pmc, moving, weight)

    def by_left_idem(self, weight: int) -> dict[frozenset[int], list[StrandDiagram]]:
        out: dict[frozenset[int], list[StrandDiagram]] = {}
        for d in self.diagrams(weight):
            out.setdefault(d.left_idem, []).append(d)
        return out

    def by_right_idem(self, weight: int) -> dict[frozenset[int], list[StrandDiagram]]:
        out: dict[frozenset[int], list[StrandDiagram]] = {}
        for d in self.diagrams(weight):
            out.setdefault(d.right_idem, []).append(d)
        return out


@lru_cache(maxsize=None)
def _algebra(pmc: PointedMatchedCircle) -> StrandAlgebra:
    return StrandAlgebra(pmc)


def algebra(pmc: PointedMatchedCircle) -> StrandAlgebra:
    return _algebra(pmc)


# -- mirror symmetry ---------------------------------------------------------


def mirror_diagram(d: StrandDiagram) -> StrandDiagram:
    """Reflect positions through 4k+1-p and transpose; an anti-automorphism."""
    pmc = d.pmc
    moving = tuple(
        sorted(Chord(pmc.reflect(c.end), pmc.reflect(c.start)) for c in d.moving)
    )
    horiz = frozenset(pmc.reflect_pair(h) for h in d.horizontals)
    return StrandDiagram(pmc, horiz, moving)


# -- the outer algebra -------------------------------------------------------


class OuterDiagram(tuple):
    """A basic pair sigma ox rho; the rho factor uses reversed local labels."""

    __slots__ = ()

    def __new__(cls, sig: StrandDiagram, rho: StrandDiagram):
        return tuple.__new__(cls, (sig, rho))

    @property
    def sig(self) -> StrandDiagram:
        return self[0]

    @property
    def rho(self) -> StrandDiagram:
        return self[1]

    @property
    def left_idem(self):
        return (self[0].left_idem, self[1].left_idem)

    @property
    def right_idem(self):
        return (self[0].right_idem, self[1].right_idem)

    @property
    def is_idempotent(self) -> bool:
        return self[0].is_idempotent and self[1].is_idempotent

    def __str__(self) -> str:
        return f"{diagram_name(self[0], 'sig')}(x){diagram_name(self[1], 'rho')}"


def outer_mul(x: OuterDiagram, y: OuterDiagram) -> OuterDiagram | None:
    s = multiply_diagrams(x.sig, y.sig)
    if s is None:
        return None
    r = multiply_diagrams(x.rho, y.rho)
    if r is None:
        return None
    return OuterDiagram(s, r)


def outer_diff(x: OuterDiagram) -> frozenset[OuterDiagram]:
    out = {OuterDiagram(t, x.rho) for t in diff_diagram(x.sig)}
    out ^= {OuterDiagram(x.sig, t) for t in diff_diagram(x.rho)}
    return frozenset(out)


def mirror_outer(x: OuterDiagram) -> OuterDiagram:
    """Mirror both factors; an anti-automorphism of the outer algebra."""
    return OuterDiagram(mirror_diagram(x.sig), mirror_diagram(x.rho))


class OuterAlgebra:
    """A(Z) (x) A(-Z)^op, with the second factor stored in reversed-local
    coordinates so that both factors multiply forwards."""

    def __init__(self, pmc: PointedMatchedCircle):
        self.pmc = pmc

    def geom_to_local(self, c: Chord) -> Chord:
        """A chord of Z, rewritten in the local labels of -Z."""
        return Chord(self.pmc.reflect(c.end), self.pmc.reflect(c.start))

    def complementary(self, sig_idem: frozenset[int], rho_idem: frozenset[int]) -> bool:
        """Do a sigma-side idempotent and a local rho-side idempotent partition
        the matched pairs?"""
        rho_as_z = self.pmc.reflect_pairs(rho_idem)
        return not (sig_idem & rho_as_z) and (
            len(sig_idem) + len(rho_idem) == self.pmc.n_pairs
        )

    def mul(self, x, y):
        return outer_mul(x, y)

    def diff(self, x):
        return outer_diff(x)


@lru_cache(maxsize=None)
def outer_algebra(pmc: PointedMatchedCircle) -> OuterAlgebra:
    return OuterAlgebra(pmc)


# -- debug names -------------------------------------------------------------


def _torus_name(d: StrandDiagram, letter: str) -> str:
    sub = {frozenset(): "", frozenset({0}): "0", frozenset({1}): "1"}
    if d.is_idempotent:
        return f"i{sub[d.horizontals]}"
    (c,) = d.moving
    digits = "".join(str(r) for r in range(c.start, c.end))
    return f"{letter}{digits}"


def diagram_name(d: StrandDiagram, letter: str = "rho") -> str:
    if d.pmc.genus == 1 and d.weight == 1 and d.pmc.is_linear:
        return _torus_name(d, {"rho": "r", "sig": "s", "tau": "t"}.get(letter, letter))
    horiz = ",".join(
        "-".join(map(str, d.pmc.pair_feet(h))) for h in sorted(d.horizontals)
    )
    mov = ",".join(str(c) for c in d.moving)
    return f"H{{{horiz}}}|M{{{mov}}}"
