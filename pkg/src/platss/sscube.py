"""Cube-filtered F2 complexes, the weight collapse, and spectral sequence
pages by filtration-respecting cancellation."""

from __future__ import annotations

from dataclasses import dataclass, field

from ._gf2 import rank_bitrows
from .homalg import ChainComplex, Generator, StructureError


@dataclass(frozen=True)
class CubeFilteredComplex:
    """F2 complex whose generators carry {0,1}^n vertex labels."""

    n: int
    complex: ChainComplex

    def __post_init__(self):
        for g in self.complex.generators:
            if len(g.label) != self.n or any(v not in (0, 1) for v in g.label):
                raise StructureError(f"bad cube label on {g.display()}")
        ok, report = self.complex.structure_check()
        if not ok:
            raise StructureError("; ".join(report[:3]))

    def vertex_dims(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for g in self.complex.generators:
            out[g.label] = out.get(g.label, 0) + 1
        return out

    def vertex_homology(self) -> dict[tuple, int]:
        """Per-vertex homology of the label-preserving part."""
        out: dict[tuple, int] = {}
        for v, gens in _by_label(self.complex).items():
            idx = {g: i for i, g in enumerate(gens)}
            rows = []
            for g in gens:
                row = 0
                for h in self.complex.d[g]:
                    if h.label == v:
                        row |= 1 << idx[h]
                rows.append(row)
            out[v] = len(gens) - 2 * rank_bitrows(rows, len(gens))
        return out


def _by_label(cx: ChainComplex) -> dict[tuple, list]:
    out: dict[tuple, list] = {}
    for g in cx.generators:
        out.setdefault(g.label, []).append(g)
    return out


def weight_filtration(cube: CubeFilteredComplex) -> ChainComplex:
    """Replace each {0,1}^n label by its total weight."""
    relabel = {
        g: Generator(g.key, g.idem, (sum(g.label),), g.name)
        for g in cube.complex.generators
    }
    d = {
        relabel[g]: frozenset(relabel[h] for h in hs)
        for g, hs in cube.complex.d.items()
    }
    return ChainComplex(relabel.values(), d)


@dataclass(frozen=True)
class SpectralSequencePage:
    r: int
    ranks: dict[int, int] = field(hash=False)
    d_rank: dict[int, int] = field(hash=False)

    @property
    def total(self) -> int:
        return sum(self.ranks.values())


@dataclass(frozen=True)
class PageReport:
    pages: tuple[SpectralSequencePage, ...]
    collapse_page: int
    e_infinity: dict[int, int] = field(hash=False)

    @property
    def e_infinity_total(self) -> int:
        return sum(self.e_infinity.values())

    def page(self, r: int) -> SpectralSequencePage:
        for p in self.pages:
            if p.r == r:
                return p
        return SpectralSequencePage(r, dict(self.e_infinity), {})

    def to_json_dict(self) -> dict:
        return {
            "pages": [
                {
                    "r": p.r,
                    "ranks_by_weight": {str(k): v for k, v in sorted(p.ranks.items())},
                    "d_ranks": {str(k): v for k, v in sorted(p.d_rank.items())},
                }
                for p in self.pages
            ],
            "collapse_page": self.collapse_page,
            "e_infty_total": self.e_infinity_total,
        }


def pages(filtered: ChainComplex, max_weight: int | None = None) -> PageReport:
    """All spectral sequence pages of a Z-filtered complex, by canceling
    differential pairs in increasing order of filtration jump."""
    ok, report = filtered.structure_check()
    if not ok:
        raise StructureError("; ".join(report[:3]))
    weights = [g.label[0] for g in filtered.generators]
    if max_weight is None:
        max_weight = max(weights, default=0)
    arrows: set[tuple] = set()
    outs: dict = {}
    ins: dict = {}
    gens = set(filtered.generators)
    for x, ys in filtered.d.items():
        for y in ys:
            arrows.add((x, y))
            outs.setdefault(x, set()).add((x, y))
            ins.setdefault(y, set()).add((x, y))

    def ranks_now() -> dict[int, int]:
        out = {w: 0 for w in range(max_weight + 1)}
        for g in gens:
            out[g.label[0]] += 1
        return out

    page_list = []
    total_rank_before = None
    for r in range(0, max_weight + 2):
        ranks = ranks_now()
        d_rank: dict[int, int] = {}
        # cancel all arrows of jump exactly r (new arrows keep jump >= r)
        while True:
            cand = sorted(
                (
                    a
                    for a in arrows
                    if a[1].label[0] - a[0].label[0] == r
                ),
                key=lambda a: (a[0].skey, a[1].skey),
            )
            if not cand:
                break
            x, y = cand[0]
            d_rank[x.label[0]] = d_rank.get(x.label[0], 0) + 1
            gens.discard(x)
            gens.discard(y)
            into_y = [a for a in ins.get(y, set()) if a[0] not in (x, y)]
            outof_x = [b for b in outs.get(x, set()) if b[1] not in (x, y)]
            for a in list(ins.get(y, ())) + list(outs.get(y, ())):
                _drop(arrows, outs, ins, a)
            for a in list(ins.get(x, ())) + list(outs.get(x, ())):
                _drop(arrows, outs, ins, a)
            for a in into_y:
                for b in outof_x:
                    new = (a[0], b[1])
                    if new in arrows:
                        _drop(arrows, outs, ins, new)
                    else:
                        arrows.add(new)
                        outs.setdefault(new[0], set()).add(new)
                        ins.setdefault(new[1], set()).add(new)
        if any(ranks.values()) or r == 0:
            page_list.append(SpectralSequencePage(r, ranks, d_rank))
        if total_rank_before == sum(ranks.values()) and not d_rank and not arrows:
            break
        total_rank_before = sum(ranks.values())
    e_inf = ranks_now()
    collapse = max_weight + 1
    for p in page_list:
        if p.ranks == e_inf and not any(p.d_rank.values()):
            collapse = p.r
            break
    # internal consistency: survivors must match the homology of the total complex
    if sum(e_inf.values()) != homology_rank(filtered):
        raise StructureError("spectral sequence total disagrees with homology")
    return PageReport(tuple(page_list), collapse, e_inf)


def _drop(arrows, outs, ins, a):
    arrows.discard(a)
    outs.get(a[0], set()).discard(a)
    ins.get(a[1], set()).discard(a)


def homology_rank(cx: ChainComplex) -> int:
    """dim ker - dim im over F2, via bit-packed elimination."""
    idx = {g: i for i, g in enumerate(cx.generators)}
    rows = []
    for g in cx.generators:
        row = 0
        for h in cx.d[g]:
            row |= 1 << idx[h]
        rows.append(row)
    return len(cx.generators) - 2 * rank_bitrows(rows, len(cx.generators))


def render_grid(cube: CubeFilteredComplex) -> str:
    """Small text grid of per-vertex generator counts, for n <= 3."""
    dims = cube.vertex_dims()
    lines = []
    for v in sorted({g.label for g in cube.complex.generators} | set(dims)):
        lines.append(f"  {''.join(map(str, v))}: {dims.get(v, 0)}")
    return "\n".join(lines)
