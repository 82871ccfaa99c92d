"""Type D structures, A-infinity (bi)modules, box tensor products, mapping
cones, cancellation, and the Mor-dualization that turns the identity DD
bimodule into an AA bimodule.

Coefficients are either strand diagrams (modules over one circle) or
outer diagrams (DD structures over a pair of circles).  All sums are
mod 2, stored as frozensets.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from .pmc import PointedMatchedCircle
from .strands import (
    OuterDiagram,
    StrandDiagram,
    algebra,
    diff_diagram,
    idempotent_diagram,
    multiply_diagrams,
    outer_diff,
    outer_mul,
)


class BoundednessError(RuntimeError):
    """Raised when an iterated coaction fails to terminate within its cap."""


class StructureError(ValueError):
    """Raised when an operation receives a structurally invalid object."""


def _stable_repr(x) -> str:
    if isinstance(x, frozenset):
        return "{" + ",".join(sorted(_stable_repr(v) for v in x)) + "}"
    if isinstance(x, tuple):
        return "(" + ",".join(_stable_repr(v) for v in x) + ")"
    return repr(x)


@dataclass(frozen=True, eq=False)
class Generator:
    """A named basis element; identity semantics, one object per structure."""

    key: tuple
    idem: object = None
    label: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_skey", _stable_repr((self.label, self.key)))

    @property
    def skey(self) -> str:
        return self._skey

    def display(self) -> str:
        return self.name or _stable_repr(self.key)


def _relabel(g: Generator, label: tuple) -> Generator:
    return Generator(g.key, g.idem, label, g.name)


# -- coefficient dispatch -----------------------------------------------------


def cmul(a, b):
    if isinstance(a, OuterDiagram):
        return outer_mul(a, b)
    return multiply_diagrams(a, b)


def cdiff(a):
    if isinstance(a, OuterDiagram):
        return outer_diff(a)
    return diff_diagram(a)


def _toggle(acc: set, item) -> None:
    acc.symmetric_difference_update({item})


def _label_le(a: tuple, b: tuple) -> bool:
    return len(a) == len(b) and all(x <= y for x, y in zip(a, b))


# -- structures ---------------------------------------------------------------


class TypeD:
    """delta1: generator -> F2 sum of (coefficient, generator)."""

    def __init__(self, pmc: PointedMatchedCircle, generators, delta, outer: bool):
        self.pmc = pmc
        self.outer = outer
        self.generators = tuple(generators)
        self.delta = {g: frozenset(delta.get(g, ())) for g in self.generators}

    def arrows(self):
        for x, terms in self.delta.items():
            for c, y in terms:
                yield x, c, y

    def structure_check(self) -> tuple[bool, list[str]]:
        report = []
        for x, c, y in self.arrows():
            if c.left_idem != x.idem or c.right_idem != y.idem:
                report.append(f"idempotent mismatch on {x.display()}->{y.display()}")
            if not _label_le(x.label, y.label):
                report.append(f"label drop on {x.display()}->{y.display()}")
        for x in self.generators:
            acc: set = set()
            for c, y in self.delta[x]:
                for t in cdiff(c):
                    _toggle(acc, (t, y))
                for c2, z in self.delta[y]:
                    p = cmul(c, c2)
                    if p is not None:
                        _toggle(acc, (p, z))
            for t, z in acc:
                report.append(
                    f"d^2 term {t} : {x.display()} -> {z.display()}"
                )
        return not report, report

    def reduced(self) -> "TypeD":
        return _reduce(self)

    def to_json_dict(self) -> dict:
        return _serialize("D", self.generators, [
            {"src": x.skey, "coef": str(c), "tgt": y.skey} for x, c, y in self.arrows()
        ])


class ChainComplex:
    """F2 chain complex; generators may carry filtration labels."""

    def __init__(self, generators, d):
        self.generators = tuple(generators)
        self.d = {g: frozenset(d.get(g, ())) for g in self.generators}

    def arrows(self):
        for x, ys in self.d.items():
            for y in ys:
                yield x, y

    def structure_check(self) -> tuple[bool, list[str]]:
        report = []
        for x, y in self.arrows():
            if not _label_le(x.label, y.label):
                report.append(f"label drop on {x.display()}->{y.display()}")
        for x in self.generators:
            acc: set = set()
            for y in self.d[x]:
                acc ^= self.d[y]
            for z in acc:
                report.append(f"d^2 term {x.display()} -> {z.display()}")
        return not report, report

    def reduced(self) -> "ChainComplex":
        return _reduce(self)

    def to_json_dict(self) -> dict:
        return _serialize("complex", self.generators, [
            {"src": x.skey, "tgt": y.skey} for x, y in self.arrows()
        ])


class TypeA:
    """A-infinity module: actions (generator, inputs) -> F2 sum of generators."""

    def __init__(self, pmc, generators, actions):
        self.pmc = pmc
        self.generators = tuple(generators)
        self.actions = {k: frozenset(v) for k, v in actions.items() if v}

    def arrows(self):
        for (x, ins), ys in self.actions.items():
            for y in ys:
                yield x, ins, y

    def max_arity(self) -> int:
        return max((len(ins) for _, ins in self.actions), default=0)

    def structure_check(self) -> tuple[bool, list[str]]:
        report = []
        for x, ins, y in self.arrows():
            idem = x.idem
            for a in ins:
                if a.left_idem != idem:
                    report.append(f"input chain broken at {x.display()}{ins}")
                    break
                idem = a.right_idem
            else:
                if idem != y.idem:
                    report.append(f"output idem broken at {x.display()}{ins}")
            if not _label_le(x.label, y.label):
                report.append(f"label drop on {x.display()}->{y.display()}")
        for x, ins in _module_relation_candidates(self.pmc, self.actions):
            acc: set = set()
            for i in range(len(ins) + 1):
                for y in self.actions.get((x, ins[:i]), ()):
                    acc ^= self.actions.get((y, ins[i:]), frozenset())
            for k, a in enumerate(ins):
                for t in diff_diagram(a):
                    acc ^= self.actions.get((x, ins[:k] + (t,) + ins[k + 1:]), frozenset())
            for k in range(len(ins) - 1):
                p = multiply_diagrams(ins[k], ins[k + 1])
                if p is not None:
                    acc ^= self.actions.get((x, ins[:k] + (p,) + ins[k + 2:]), frozenset())
            for z in acc:
                report.append(f"relation fails at {x.display()};{ins} -> {z.display()}")
        return not report, report

    def reduced(self) -> "TypeA":
        return _reduce(self)

    def to_json_dict(self) -> dict:
        return _serialize("A", self.generators, [
            {"src": x.skey, "inputs": [str(a) for a in ins], "tgt": y.skey}
            for x, ins, y in self.arrows()
        ])


class TypeDA:
    """Type DA bimodule: (generator, inputs) -> F2 sum of (coefficient, generator)."""

    def __init__(self, pmc, generators, actions):
        self.pmc = pmc
        self.generators = tuple(generators)
        self.actions = {k: frozenset(v) for k, v in actions.items() if v}

    def arrows(self):
        for (x, ins), terms in self.actions.items():
            for c, y in terms:
                yield x, ins, c, y

    def max_arity(self) -> int:
        return max((len(ins) for _, ins in self.actions), default=0)

    def idem_out(self, g):
        return g.idem[0]

    def idem_in(self, g):
        return g.idem[1]

    def structure_check(self) -> tuple[bool, list[str]]:
        report = []
        for x, ins, c, y in self.arrows():
            if c.left_idem != self.idem_out(x) or c.right_idem != self.idem_out(y):
                report.append(f"output idem mismatch {x.display()}->{y.display()}")
            idem = self.idem_in(x)
            for a in ins:
                if a.left_idem != idem:
                    report.append(f"input chain broken at {x.display()}{ins}")
                    break
                idem = a.right_idem
            else:
                if idem != self.idem_in(y):
                    report.append(f"input idem mismatch {x.display()}->{y.display()}")
            if not _label_le(x.label, y.label):
                report.append(f"label drop on {x.display()}->{y.display()}")
        for x, ins in _da_relation_candidates(self.pmc, self.actions):
            acc: set = set()
            for i in range(len(ins) + 1):
                for c1, y in self.actions.get((x, ins[:i]), ()):
                    for c2, z in self.actions.get((y, ins[i:]), ()):
                        p = cmul(c1, c2)
                        if p is not None:
                            _toggle(acc, (p, z))
            for c, y in self.actions.get((x, ins), ()):
                for t in cdiff(c):
                    _toggle(acc, (t, y))
            for k, a in enumerate(ins):
                for t in diff_diagram(a):
                    for term in self.actions.get((x, ins[:k] + (t,) + ins[k + 1:]), ()):
                        _toggle(acc, term)
            for k in range(len(ins) - 1):
                p = multiply_diagrams(ins[k], ins[k + 1])
                if p is not None:
                    for term in self.actions.get((x, ins[:k] + (p,) + ins[k + 2:]), ()):
                        _toggle(acc, term)
            for c, z in acc:
                report.append(f"relation fails at {x.display()};{ins} -> {c} {z.display()}")
        return not report, report

    def reduced(self) -> "TypeDA":
        return _reduce(self)

    def to_json_dict(self) -> dict:
        return _serialize("DA", self.generators, [
            {"src": x.skey, "inputs": [str(a) for a in ins], "coef": str(c),
             "tgt": y.skey}
            for x, ins, c, y in self.arrows()
        ])


class TypeAA:
    """A-infinity bimodule with two right-style actions (slots P and Q)."""

    def __init__(self, pmc, generators, actions):
        self.pmc = pmc
        self.generators = tuple(generators)
        self.actions = {k: frozenset(v) for k, v in actions.items() if v}

    def arrows(self):
        for (x, inp, inq), ys in self.actions.items():
            for y in ys:
                yield x, inp, inq, y

    def idem_p(self, g):
        return g.idem[0]

    def idem_q(self, g):
        return g.idem[1]

    def structure_check(self) -> tuple[bool, list[str]]:
        report = []
        for x, inp, inq, y in self.arrows():
            for slot, ins, tgt in (
                (self.idem_p, inp, self.idem_p(y)),
                (self.idem_q, inq, self.idem_q(y)),
            ):
                idem = slot(x)
                ok = True
                for a in ins:
                    if a.left_idem != idem:
                        report.append(f"input chain broken at {x.display()}")
                        ok = False
                        break
                    idem = a.right_idem
                if ok and idem != tgt:
                    report.append(f"idem mismatch {x.display()}->{y.display()}")
        for x, inp, inq in _aa_relation_candidates(self.pmc, self.actions):
            acc: set = set()
            for i in range(len(inp) + 1):
                for j in range(len(inq) + 1):
                    for y in self.actions.get((x, inp[:i], inq[:j]), ()):
                        acc ^= self.actions.get((y, inp[i:], inq[j:]), frozenset())
            for seq, rebuild in (
                (inp, lambda s: (x, s, inq)),
                (inq, lambda s: (x, inp, s)),
            ):
                for k, a in enumerate(seq):
                    for t in diff_diagram(a):
                        acc ^= self.actions.get(
                            rebuild(seq[:k] + (t,) + seq[k + 1:]), frozenset()
                        )
                for k in range(len(seq) - 1):
                    p = multiply_diagrams(seq[k], seq[k + 1])
                    if p is not None:
                        acc ^= self.actions.get(
                            rebuild(seq[:k] + (p,) + seq[k + 2:]), frozenset()
                        )
            for z in acc:
                report.append(f"relation fails at {x.display()} -> {z.display()}")
        return not report, report

    def reduced(self) -> "TypeAA":
        return _reduce(self)

    def to_json_dict(self) -> dict:
        return _serialize("AA", self.generators, [
            {"src": x.skey, "inputs_p": [str(a) for a in inp],
             "inputs_q": [str(a) for a in inq], "tgt": y.skey}
            for x, inp, inq, y in self.arrows()
        ])


def structure_check(obj) -> tuple[bool, list[str]]:
    return obj.structure_check()


def _serialize(kind, generators, terms) -> dict:
    return {
        "kind": kind,
        "generators": [
            {"id": g.skey, "name": g.display(), "label": list(g.label)}
            for g in sorted(generators, key=lambda g: g.skey)
        ],
        "terms": sorted(terms, key=lambda t: sorted(t.items())),
    }


# -- relation-candidate generation -------------------------------------------


def _factor_index(pmc, weight):
    alg = algebra(pmc)
    key = ("factors", weight)
    if key not in alg.__dict__.setdefault("_indexes", {}):
        idx: dict[StrandDiagram, list] = {}
        diagrams = alg.diagrams(weight)
        by_left = alg.by_left_idem(weight)
        for u in diagrams:
            if u.is_idempotent:
                continue
            for v in by_left.get(u.right_idem, ()):
                if v.is_idempotent:
                    continue
                p = multiply_diagrams(u, v)
                if p is not None:
                    idx.setdefault(p, []).append((u, v))
        alg._indexes[key] = idx
    return alg._indexes[key]


def _dsource_index(pmc, weight):
    alg = algebra(pmc)
    key = ("dsources", weight)
    if key not in alg.__dict__.setdefault("_indexes", {}):
        idx: dict[StrandDiagram, list] = {}
        for c in alg.diagrams(weight):
            for t in diff_diagram(c):
                idx.setdefault(t, []).append(c)
        alg._indexes[key] = idx
    return alg._indexes[key]


def _seq_variants(pmc, seq):
    """Input tuples whose relation terms could involve a table tuple seq."""
    out = {seq}
    for k, a in enumerate(seq):
        for c in _dsource_index(pmc, a.weight).get(a, ()):
            out.add(seq[:k] + (c,) + seq[k + 1:])
        for u, v in _factor_index(pmc, a.weight).get(a, ()):
            out.add(seq[:k] + (u, v) + seq[k + 1:])
    return out


def _module_relation_candidates(pmc, actions):
    cands = set()
    by_gen: dict[Generator, list] = {}
    for (x, ins), ys in actions.items():
        by_gen.setdefault(x, []).append(ins)
    for (x, ins), ys in actions.items():
        for seq in _seq_variants(pmc, ins):
            cands.add((x, seq))
        for y in ys:
            for ins2 in by_gen.get(y, ()):
                cands.add((x, ins + ins2))
    return sorted(cands, key=lambda t: (t[0].skey, len(t[1])))


def _da_relation_candidates(pmc, actions):
    cands = set()
    by_gen: dict[Generator, list] = {}
    for (x, ins), terms in actions.items():
        by_gen.setdefault(x, []).append(ins)
    for (x, ins), terms in actions.items():
        for seq in _seq_variants(pmc, ins):
            cands.add((x, seq))
        for _, y in terms:
            for ins2 in by_gen.get(y, ()):
                cands.add((x, ins + ins2))
    return sorted(cands, key=lambda t: (t[0].skey, len(t[1])))


def _aa_relation_candidates(pmc, actions):
    cands = set()
    by_gen: dict[Generator, list] = {}
    for (x, inp, inq), ys in actions.items():
        by_gen.setdefault(x, []).append((inp, inq))
    for (x, inp, inq), ys in actions.items():
        for seq in _seq_variants(pmc, inp):
            cands.add((x, seq, inq))
        for seq in _seq_variants(pmc, inq):
            cands.add((x, inp, seq))
        for y in ys:
            for inp2, inq2 in by_gen.get(y, ()):
                cands.add((x, inp + inp2, inq + inq2))
    return sorted(cands, key=lambda t: (t[0].skey, len(t[1]), len(t[2])))


# -- morphisms of type D structures -------------------------------------------


@dataclass
class DMorphism:
    source: TypeD
    target: TypeD
    comps: dict

    def __post_init__(self):
        self.comps = {
            x: frozenset(self.comps.get(x, ())) for x in self.source.generators
        }

    def is_zero(self) -> bool:
        return not any(self.comps.values())

    def __add__(self, other: "DMorphism") -> "DMorphism":
        comps = {
            x: self.comps[x] ^ other.comps[x] for x in self.source.generators
        }
        return DMorphism(self.source, self.target, comps)


def mor_differential(f: DMorphism) -> DMorphism:
    comps: dict = {}
    for x in f.source.generators:
        acc: set = set()
        for c, y in f.comps[x]:
            for t in cdiff(c):
                _toggle(acc, (t, y))
            for a, z in f.target.delta[y]:
                p = cmul(c, a)
                if p is not None:
                    _toggle(acc, (p, z))
        for a, y in f.source.delta[x]:
            for c, z in f.comps.get(y, ()):
                p = cmul(a, c)
                if p is not None:
                    _toggle(acc, (p, z))
        comps[x] = frozenset(acc)
    return DMorphism(f.source, f.target, comps)


def compose(f: DMorphism, g: DMorphism) -> DMorphism:
    """The composite f after g."""
    if g.target is not f.source and g.target.generators != f.source.generators:
        raise StructureError("morphisms do not chain")
    comps: dict = {}
    for x in g.source.generators:
        acc: set = set()
        for c, y in g.comps[x]:
            for e, z in f.comps.get(y, ()):
                p = cmul(c, e)
                if p is not None:
                    _toggle(acc, (p, z))
        comps[x] = frozenset(acc)
    return DMorphism(g.source, f.target, comps)


def _idem_coef(struct: TypeD, g: Generator):
    if struct.outer:
        return OuterDiagram(
            idempotent_diagram(struct.pmc, g.idem[0]),
            idempotent_diagram(struct.pmc, g.idem[1]),
        )
    return idempotent_diagram(struct.pmc, g.idem)


def identity_morphism(P: TypeD) -> DMorphism:
    return DMorphism(P, P, {x: {(_idem_coef(P, x), x)} for x in P.generators})


def mapping_cone(f: DMorphism, check: bool = True) -> TypeD:
    """{0,1}-filtered type D structure with source at level 0, target at 1."""
    if check and not mor_differential(f).is_zero():
        raise StructureError("mapping cone of a non-homomorphism")
    if f.source.pmc != f.target.pmc or f.source.outer != f.target.outer:
        raise StructureError("cone endpoints live over different algebras")
    lift0 = {x: Generator((0,) + (x.key,), x.idem, (0,) + x.label, x.name)
             for x in f.source.generators}
    lift1 = {y: Generator((1,) + (y.key,), y.idem, (1,) + y.label, y.name)
             for y in f.target.generators}
    delta: dict = {}
    for x, c, y in f.source.arrows():
        delta.setdefault(lift0[x], set()).add((c, lift0[y]))
    for x, c, y in f.target.arrows():
        delta.setdefault(lift1[x], set()).add((c, lift1[y]))
    for x, terms in f.comps.items():
        for c, y in terms:
            delta.setdefault(lift0[x], set()).add((c, lift1[y]))
    gens = [lift0[x] for x in f.source.generators]
    gens += [lift1[y] for y in f.target.generators]
    return TypeD(f.source.pmc, gens, delta, f.source.outer)


# -- iterated coactions --------------------------------------------------------


def _d_paths(P: TypeD, start: Generator, prefixes: set, cap: int):
    """Walk delta of P; yield (consumed inputs, end, nonempty).  Idempotent
    coefficients act through the idempotent ring and consume nothing."""
    stack = [(start, (), 0)]
    while stack:
        gen, ins, depth = stack.pop()
        yield ins, gen, depth > 0
        if depth > cap:
            raise BoundednessError("iterated coaction exceeded its depth cap")
        for c, y in P.delta[gen]:
            if c.is_idempotent:
                stack.append((y, ins, depth + 1))
            else:
                nxt = ins + (c,)
                if nxt in prefixes:
                    stack.append((y, nxt, depth + 1))


def _dd_paths(P: TypeD, start: Generator, prefixes: set, cap: int):
    """Walk delta of a DD structure; consume non-idempotent sigma parts,
    multiply all rho parts in path order.  Yields (inputs, rho, end,
    nonempty)."""
    rho0 = idempotent_diagram(P.pmc, start.idem[1])
    stack = [(start, (), rho0, 0)]
    while stack:
        gen, ins, rho, depth = stack.pop()
        yield ins, rho, gen, depth > 0
        if depth > cap:
            raise BoundednessError("iterated coaction exceeded its depth cap")
        for c, y in P.delta[gen]:
            rho2 = multiply_diagrams(rho, c.rho)
            if rho2 is None:
                continue
            if c.sig.is_idempotent:
                stack.append((y, ins, rho2, depth + 1))
            else:
                nxt = ins + (c.sig,)
                if nxt in prefixes:
                    stack.append((y, nxt, rho2, depth + 1))


def _prefix_set(seqs) -> set:
    out = {()}
    for seq in seqs:
        for i in range(1, len(seq) + 1):
            out.add(seq[:i])
    return out


def _path_cap(P: TypeD, arity: int) -> int:
    return arity + len(P.generators) + 4 * P.pmc.n_points + 2


def nilpotency_depth(P: TypeD, cap: int | None = None) -> int:
    """Longest delta-iteration with nonvanishing coefficient product."""
    if cap is None:
        cap = P.pmc.n_points + 1
    best = 0
    one = lambda g: _idem_coef(P, g)
    stack = [(g, one(g), 0) for g in P.generators]
    while stack:
        gen, coef, depth = stack.pop()
        best = max(best, depth)
        if depth > cap:
            raise BoundednessError(f"delta iteration exceeded depth {cap}")
        for c, y in P.delta[gen]:
            p = cmul(coef, c)
            if p is not None:
                stack.append((y, p, depth + 1))
    return best


# -- box tensor products -------------------------------------------------------


def box_AD(M: TypeA, P: TypeD) -> ChainComplex:
    """Pair an A-infinity module with a type D structure into a complex."""
    if M.pmc != P.pmc or P.outer:
        raise StructureError("box_AD needs matching one-circle algebras")
    by_gen: dict[Generator, list] = {}
    for (x, ins), ys in M.actions.items():
        by_gen.setdefault(x, []).append((ins, ys))
    cap = _path_cap(P, M.max_arity())
    gens = {}
    for m in M.generators:
        for p in P.generators:
            if m.idem == p.idem:
                g = Generator((m.key, p.key), None, m.label + p.label,
                              f"{m.display()}{p.display()}")
                gens[(m, p)] = g
    d: dict = {}
    for (m, p), g in gens.items():
        prefixes = _prefix_set(ins for ins, _ in by_gen.get(m, ()))
        acc: set = set()
        for ins, end, nonempty in _d_paths(P, p, prefixes, cap):
            if not ins and nonempty:
                # idempotent coefficients act through the ground ring alone
                tgt = gens.get((m, end))
                if tgt is not None:
                    _toggle(acc, tgt)
                continue
            for y in M.actions.get((m, ins), ()):
                tgt = gens.get((y, end))
                if tgt is None:
                    raise StructureError("box_AD produced an unmatched generator")
                _toggle(acc, tgt)
        d[g] = acc
    return ChainComplex(sorted(gens.values(), key=lambda g: g.skey), d)


def box_DA_D(M: TypeDA, P: TypeD) -> TypeD:
    """Feed a type D structure into the input side of a DA bimodule."""
    if M.pmc != P.pmc or P.outer:
        raise StructureError("box_DA_D needs matching one-circle algebras")
    by_gen: dict[Generator, list] = {}
    for (x, ins), terms in M.actions.items():
        by_gen.setdefault(x, []).append(ins)
    cap = _path_cap(P, M.max_arity())
    gens = {}
    for x in M.generators:
        for p in P.generators:
            if M.idem_in(x) == p.idem:
                gens[(x, p)] = Generator(
                    (x.key, p.key), M.idem_out(x), x.label + p.label,
                    f"{x.display()}{p.display()}")
    delta: dict = {}
    for (x, p), g in gens.items():
        prefixes = _prefix_set(by_gen.get(x, ()))
        acc: set = set()
        for ins, end, nonempty in _d_paths(P, p, prefixes, cap):
            if not ins and nonempty:
                tgt = gens.get((x, end))
                if tgt is not None:
                    _toggle(acc, (idempotent_diagram(M.pmc, M.idem_out(x)), tgt))
                continue
            for c, y in M.actions.get((x, ins), ()):
                tgt = gens.get((y, end))
                if tgt is None:
                    raise StructureError("box_DA_D produced an unmatched generator")
                _toggle(acc, (c, tgt))
        delta[g] = acc
    return TypeD(M.pmc, sorted(gens.values(), key=lambda g: g.skey), delta, False)


def _da_paths(N: TypeDA, start: Generator, out_prefixes: set, cap: int):
    """Walk a DA bimodule as the D side of a further box product: yield
    (consumed input tuple, produced output tuple, end generator)."""
    by_gen: dict[Generator, list] = {}
    for (x, step), terms in N.actions.items():
        by_gen.setdefault(x, []).append((step, terms))
    stack = [(start, (), (), 0)]
    while stack:
        gen, ins, outs, depth = stack.pop()
        yield ins, outs, gen, depth > 0
        if depth > cap:
            raise BoundednessError("iterated coaction exceeded its depth cap")
        for step, terms in by_gen.get(gen, ()):
            for c, y in terms:
                if c.is_idempotent:
                    stack.append((y, ins + step, outs, depth + 1))
                else:
                    nxt = outs + (c,)
                    if nxt in out_prefixes:
                        stack.append((y, ins + step, nxt, depth + 1))


def box_DA_DA(M: TypeDA, N: TypeDA) -> TypeDA:
    """Compose two DA bimodules; M's inputs consume N's outputs."""
    if M.pmc != N.pmc:
        raise StructureError("box_DA_DA needs matching algebras")
    by_gen: dict[Generator, list] = {}
    for (x, ins), terms in M.actions.items():
        by_gen.setdefault(x, []).append(ins)
    cap = _path_cap(
        TypeD(N.pmc, N.generators, {}, False), M.max_arity()) + N.max_arity()
    gens = {}
    for x in M.generators:
        for y in N.generators:
            if M.idem_in(x) == N.idem_out(y):
                gens[(x, y)] = Generator(
                    (x.key, y.key), (M.idem_out(x), N.idem_in(y)),
                    x.label + y.label, f"{x.display()}{y.display()}")
    actions: dict = {}
    for (x, y), g in gens.items():
        out_prefixes = _prefix_set(by_gen.get(x, ()))
        for ins, outs, end, nonempty in _da_paths(N, y, out_prefixes, cap):
            if not outs and nonempty:
                tgt = gens.get((x, end))
                if tgt is not None:
                    acc = actions.setdefault((g, ins), set())
                    _toggle(acc, (idempotent_diagram(M.pmc, M.idem_out(x)), tgt))
                continue
            for c, x2 in M.actions.get((x, outs), ()):
                tgt = gens.get((x2, end))
                if tgt is None:
                    raise StructureError("box_DA_DA produced an unmatched generator")
                acc = actions.setdefault((g, ins), set())
                _toggle(acc, (c, tgt))
    return TypeDA(M.pmc, sorted(gens.values(), key=lambda g: g.skey), actions)


def _aa_index(M: TypeAA, slot: str):
    """by_gen[f][consumed-slot inputs] -> [(kept inputs, targets)]."""
    idx: dict[Generator, dict] = {}
    for (x, inp, inq), ys in M.actions.items():
        consumed, kept = (inp, inq) if slot == "P" else (inq, inp)
        idx.setdefault(x, {}).setdefault(consumed, []).append((kept, ys))
    return idx


def box_AA_DD(M: TypeAA, P: TypeD) -> TypeDA:
    """Contract the Q slot of an AA bimodule against the sigma side of a DD
    structure; the result is a DA bimodule with rho outputs and P inputs."""
    if M.pmc != P.pmc or not P.outer:
        raise StructureError("box_AA_DD needs a DD structure over the same circle")
    idx = _aa_index(M, "Q")
    cap = _path_cap(P, max((len(k[2]) for k in M.actions), default=0))
    gens = {}
    for f in M.generators:
        for x in P.generators:
            if M.idem_q(f) == x.idem[0]:
                gens[(f, x)] = Generator(
                    (f.key, x.key), (x.idem[1], M.idem_p(f)),
                    f.label + x.label, f"{f.display()}{x.display()}")
    actions: dict = {}
    for (f, x), g in gens.items():
        table = idx.get(f, {})
        prefixes = _prefix_set(table)
        for sig_ins, rho, end, nonempty in _dd_paths(P, x, prefixes, cap):
            if not sig_ins and nonempty:
                # purely idempotent sigma parts act through the ground ring
                tgt = gens.get((f, end))
                if tgt is not None:
                    acc = actions.setdefault((g, ()), set())
                    _toggle(acc, (rho, tgt))
                continue
            for inp, ys in table.get(sig_ins, ()):
                for y in ys:
                    tgt = gens.get((y, end))
                    if tgt is None:
                        raise StructureError("box_AA_DD produced an unmatched generator")
                    acc = actions.setdefault((g, inp), set())
                    _toggle(acc, (rho, tgt))
    return TypeDA(M.pmc, sorted(gens.values(), key=lambda g: g.skey), actions)


def box_AA_D(M: TypeAA, P: TypeD, slot: str = "P") -> TypeA:
    """Contract one slot of an AA bimodule against a plain type D structure."""
    if M.pmc != P.pmc or P.outer:
        raise StructureError("box_AA_D needs a one-circle D structure")
    if slot not in ("P", "Q"):
        raise ValueError("slot must be 'P' or 'Q'")
    idem = M.idem_p if slot == "P" else M.idem_q
    other_idem = M.idem_q if slot == "P" else M.idem_p
    idx = _aa_index(M, slot)
    cap = _path_cap(P, max((len(k[1]) + len(k[2]) for k in M.actions), default=0))
    gens = {}
    for f in M.generators:
        for p in P.generators:
            if idem(f) == p.idem:
                g = Generator((f.key, p.key), other_idem(f), f.label + p.label,
                              f"{f.display()}{p.display()}")
                gens[(f, p)] = g
    actions: dict = {}
    for (f, p), g in gens.items():
        table = idx.get(f, {})
        prefixes = _prefix_set(table)
        for ins, end, nonempty in _d_paths(P, p, prefixes, cap):
            if not ins and nonempty:
                tgt = gens.get((f, end))
                if tgt is not None:
                    acc = actions.setdefault((g, ()), set())
                    _toggle(acc, tgt)
                continue
            for kept, ys in table.get(ins, ()):
                for y in ys:
                    tgt = gens.get((y, end))
                    if tgt is None:
                        raise StructureError("box_AA_D produced an unmatched generator")
                    acc = actions.setdefault((g, kept), set())
                    _toggle(acc, tgt)
    return TypeA(M.pmc, sorted(gens.values(), key=lambda g: g.skey), actions)


@dataclass
class DAMorphism:
    """Morphism of DA bimodules: components (generator, inputs) -> sum of
    (coefficient, generator)."""

    source: TypeDA
    target: TypeDA
    comps: dict

    def __post_init__(self):
        self.comps = {k: frozenset(v) for k, v in self.comps.items() if v}


def cone_da(f: DAMorphism) -> TypeDA:
    """{0,1}-filtered DA bimodule of a DA-bimodule homomorphism."""
    lift0 = {x: Generator((0,) + (x.key,), x.idem, (0,) + x.label, x.name)
             for x in f.source.generators}
    lift1 = {y: Generator((1,) + (y.key,), y.idem, (1,) + y.label, y.name)
             for y in f.target.generators}
    actions: dict = {}
    for x, ins, c, y in f.source.arrows():
        actions.setdefault((lift0[x], ins), set()).add((c, lift0[y]))
    for x, ins, c, y in f.target.arrows():
        actions.setdefault((lift1[x], ins), set()).add((c, lift1[y]))
    for (x, ins), terms in f.comps.items():
        for c, y in terms:
            actions.setdefault((lift0[x], ins), set()).add((c, lift1[y]))
    gens = [lift0[x] for x in f.source.generators]
    gens += [lift1[y] for y in f.target.generators]
    return TypeDA(f.source.pmc, gens, actions)


def box_morphism(M: TypeAA, f: DMorphism) -> DAMorphism:
    """The induced morphism Id_M box f between box_AA_DD products."""
    src = box_AA_DD(M, f.source)
    tgt = box_AA_DD(M, f.target)
    tgt_by_key = {g.key: g for g in tgt.generators}
    m_by_key = {m.key: m for m in M.generators}
    p_by_key = {p.key: p for p in f.source.generators}
    idx = _aa_index(M, "Q")
    cap = _path_cap(f.source, max((len(k[2]) for k in M.actions), default=0)) + \
        _path_cap(f.target, 0)
    comps: dict = {}
    empty = frozenset()
    for g in src.generators:
        fkey, xkey = g.key
        fm = m_by_key[fkey]
        x0 = p_by_key[xkey]
        table = idx.get(fm, {})
        prefixes = _prefix_set(table)
        # sigma inputs: a path in the source, one morphism component, then a
        # path in the target; rho parts multiply straight through.
        for ins1, rho1, mid, _ in _dd_paths(f.source, x0, prefixes, cap):
            for c, q in f.comps.get(mid, empty):
                rho2 = multiply_diagrams(rho1, c.rho)
                if rho2 is None:
                    continue
                ins_mid = ins1 if c.sig.is_idempotent else ins1 + (c.sig,)
                if ins_mid not in prefixes:
                    continue
                shifted = {
                    p[len(ins_mid):] for p in prefixes
                    if p[: len(ins_mid)] == ins_mid
                }
                for ins3, rho3, end, _ in _dd_paths(f.target, q, shifted, cap):
                    rho = multiply_diagrams(rho2, rho3)
                    if rho is None:
                        continue
                    full = ins_mid + ins3
                    if not full:
                        tgt_gen = tgt_by_key.get((fm.key, end.key))
                        if tgt_gen is not None:
                            acc = comps.setdefault((g, ()), set())
                            _toggle(acc, (rho, tgt_gen))
                        continue
                    for inq, ys in table.get(full, ()):
                        for y in ys:
                            tgt_gen = tgt_by_key.get((y.key, end.key))
                            if tgt_gen is not None:
                                acc = comps.setdefault((g, inq), set())
                                _toggle(acc, (rho, tgt_gen))
    return DAMorphism(src, tgt, comps)


# -- cancellation ---------------------------------------------------------------


def _to_soup(obj):
    """(src, inP, inQ, coef, tgt) arrow soup for any structure type."""
    arrows = []
    if isinstance(obj, TypeD):
        for x, c, y in obj.arrows():
            arrows.append((x, (), (), c, y))
    elif isinstance(obj, ChainComplex):
        for x, y in obj.arrows():
            arrows.append((x, (), (), None, y))
    elif isinstance(obj, TypeA):
        for x, ins, y in obj.arrows():
            arrows.append((x, ins, (), None, y))
    elif isinstance(obj, TypeDA):
        for x, ins, c, y in obj.arrows():
            arrows.append((x, ins, (), c, y))
    elif isinstance(obj, TypeAA):
        for x, inp, inq, y in obj.arrows():
            arrows.append((x, inp, inq, None, y))
    else:
        raise TypeError(f"cannot reduce {type(obj).__name__}")
    return arrows


def _from_soup(obj, gens, arrows):
    gens = sorted(gens, key=lambda g: g.skey)
    if isinstance(obj, TypeD):
        delta: dict = {}
        for x, _, _, c, y in arrows:
            delta.setdefault(x, set()).add((c, y))
        return TypeD(obj.pmc, gens, delta, obj.outer)
    if isinstance(obj, ChainComplex):
        d: dict = {}
        for x, _, _, _, y in arrows:
            d.setdefault(x, set()).add(y)
        return ChainComplex(gens, d)
    if isinstance(obj, TypeA):
        actions: dict = {}
        for x, ins, _, _, y in arrows:
            actions.setdefault((x, ins), set()).add(y)
        return TypeA(obj.pmc, gens, actions)
    if isinstance(obj, TypeDA):
        actions = {}
        for x, ins, _, c, y in arrows:
            actions.setdefault((x, ins), set()).add((c, y))
        return TypeDA(obj.pmc, gens, actions)
    actions = {}
    for x, inp, inq, _, y in arrows:
        actions.setdefault((x, inp, inq), set()).add(y)
    return TypeAA(obj.pmc, gens, actions)


def _cancellable(arrow) -> bool:
    x, inp, inq, c, y = arrow
    if inp or inq or x is y:
        return False
    if c is not None and not c.is_idempotent:
        return False
    return x.label == y.label


def _blocks_series(extra) -> bool:
    """An extra arrow between a canceled pair blocks cancellation when the
    perturbation series through it cannot terminate (no coefficient support
    to use up)."""
    _, _, _, c, _ = extra
    return c is None or c.is_idempotent


def _compose_arrows(a, b):
    """Arrow through a canceled pair: into-y arrow a then out-of-x arrow b."""
    x1, p1, q1, c1, _ = a
    _, p2, q2, c2, y2 = b
    if c1 is None:
        coef = None
    else:
        coef = cmul(c1, c2)
        if coef is None:
            return None
    return (x1, p1 + p2, q1 + q2, coef, y2)


def _reduce(obj):
    """Cancel differential arrows with no inputs and idempotent coefficient,
    one pair at a time, in deterministic order.

    Other arrows between the canceled pair are handled by the perturbation
    series, which terminates because each pass uses up coefficient support;
    pairs whose extra arrows carry no support stay blocked, which is what
    keeps bounded models bounded."""
    arrows = set()
    outs: dict = {}
    ins: dict = {}
    idem_arrow: dict = {}
    gens = set(obj.generators)

    def fill(x, y):
        # arrows created by canceling (x, y); the order that keeps this
        # small avoids quadratic blowup during long reductions
        return (len(ins.get(y, ())) - 1) * (len(outs.get(x, ())) - 1)

    def push(arrow):
        x, y = arrow[0], arrow[4]
        heapq.heappush(heap, (fill(x, y), x.skey, y.skey, id(arrow), arrow))

    def add(arrow):
        if arrow in arrows:
            remove(arrow)
            return
        arrows.add(arrow)
        x, _, _, _, y = arrow
        outs.setdefault(x, set()).add(arrow)
        ins.setdefault(y, set()).add(arrow)
        if _cancellable(arrow):
            idem_arrow[(x, y)] = arrow
            push(arrow)

    def remove(arrow):
        if arrow not in arrows:
            return
        arrows.discard(arrow)
        x, _, _, _, y = arrow
        outs.get(x, set()).discard(arrow)
        ins.get(y, set()).discard(arrow)
        if idem_arrow.get((x, y)) is arrow:
            del idem_arrow[(x, y)]
        else:
            # removing a blocker may make a skipped pair cancellable again
            survivor = idem_arrow.get((x, y))
            if survivor is not None and x in gens and y in gens:
                push(survivor)

    def extras_of(x, y, canceled):
        return [b for b in outs.get(x, ()) if b[4] is y and b is not canceled]

    heap: list = []
    trace = []
    for arrow in _to_soup(obj):
        add(arrow)
    while heap:
        cost, _, _, _, arrow = heapq.heappop(heap)
        if arrow not in arrows or not _cancellable(arrow):
            continue
        x, _, _, _, y = arrow
        if x not in gens or y not in gens:
            continue
        if fill(x, y) > cost:
            push(arrow)  # stale estimate; requeue at the current cost
            continue
        extras = extras_of(x, y, arrow)
        if any(_blocks_series(e) for e in extras):
            continue
        trace.append((x, y))
        gens.discard(x)
        gens.discard(y)
        into_y = [a for a in ins.get(y, set()) if a[0] not in (x, y)]
        outof_x = [b for b in outs.get(x, set()) if b[4] not in (x, y)]
        for a in list(ins.get(y, ())) + list(outs.get(y, ())):
            remove(a)
        for a in list(ins.get(x, ())) + list(outs.get(x, ())):
            remove(a)
        cap = 4 * obj.pmc.n_points if hasattr(obj, "pmc") else 64
        for a in into_y:
            frontier = [a]
            depth = 0
            while frontier:
                for f in frontier:
                    for b in outof_x:
                        comp = _compose_arrows(f, b)
                        if comp is not None:
                            add(comp)
                depth += 1
                if depth > cap:
                    raise BoundednessError("perturbation series failed to stop")
                frontier = [
                    comp
                    for f in frontier
                    for e in extras
                    if (comp := _compose_arrows(f, e)) is not None
                ]
    result = _from_soup(obj, gens, arrows)
    result.reduction_trace = tuple((x.key, y.key) for x, y in trace)
    return result


def reduce_structure(obj):
    """Public entry point for cancellation; see _reduce."""
    return _reduce(obj)


def cancel_pair(obj, src_key, tgt_key):
    """Cancel one designated pair; used to replay textbook displays."""
    arrows = _to_soup(obj)
    match = [
        a for a in arrows
        if a[0].key == src_key and a[4].key == tgt_key and _cancellable(a)
    ]
    if len(match) != 1:
        raise StructureError("designated pair is not a cancellable arrow")
    (x, _, _, _, y) = match[0]
    extras = [a for a in arrows if a[0] == x and a[4] == y and a is not match[0]]
    if any(_blocks_series(e) for e in extras):
        raise StructureError("designated pair is blocked")
    gens = [g for g in obj.generators if g not in (x, y)]
    into_y = [a for a in arrows if a[4] == y and a[0] not in (x, y)]
    outof_x = [b for b in arrows if b[0] == x and b[4] not in (x, y)]
    kept = {a for a in arrows if x not in (a[0], a[4]) and y not in (a[0], a[4])}
    new: set = set()
    cap = 4 * obj.pmc.n_points if hasattr(obj, "pmc") else 64
    for a in into_y:
        frontier = [a]
        depth = 0
        while frontier:
            for f in frontier:
                for b in outof_x:
                    comp = _compose_arrows(f, b)
                    if comp is not None:
                        new ^= {comp}
            depth += 1
            if depth > cap:
                raise BoundednessError("perturbation series failed to stop")
            frontier = [
                comp
                for f in frontier
                for e in extras
                if (comp := _compose_arrows(f, e)) is not None
            ]
    return _from_soup(obj, gens, kept ^ new)


# -- Mor-dualization: identity DD to AA ----------------------------------------


def _sd_name(d: StrandDiagram, letter: str) -> str:
    from .strands import diagram_name

    return diagram_name(d, letter)


def mor_dd_to_alg(P: TypeD) -> TypeAA:
    """Left-module maps from the bimodule induced by the identity DD structure
    to the algebra, as a dg bimodule: basis (b', I, a) with chaining
    idempotents, right post-multiplication (slot P) and right
    pre-multiplication through the source (slot Q)."""
    if not P.outer:
        raise StructureError("mor_dd_to_alg expects a DD structure")
    pmc = P.pmc
    k = pmc.genus
    want = {
        (frozenset(s), frozenset(t))
        for s in map(frozenset, itertools.combinations(range(pmc.n_pairs), k))
        for t in [pmc.reflect_pairs(frozenset(range(pmc.n_pairs)) - s)]
    }
    if {g.idem for g in P.generators} != want or len(P.generators) != len(want):
        raise StructureError("input is not the identity DD bimodule")
    for x, c, y in P.arrows():
        from .strands import mirror_diagram

        if mirror_diagram(c.sig).support != c.rho.support:
            raise StructureError("input is not the identity DD bimodule")
    alg = algebra(pmc)
    mid = alg.diagrams(k)
    by_left = alg.by_left_idem(k)
    by_right = alg.by_right_idem(k)
    gens = {}
    for I in P.generators:
        sig_idem, rho_idem = I.idem
        for b in by_right.get(rho_idem, ()):
            for a in by_left.get(sig_idem, ()):
                g = Generator(
                    ("mor", b, I.key, a), (a.right_idem, b.left_idem), (),
                    f"[{_sd_name(b,'rho')};{I.display()};{_sd_name(a,'rho')}]")
                gens[(b, I.key, a)] = g
    actions: dict = {}

    def add(src, inp, inq, tgt):
        acc = actions.setdefault((src, inp, inq), set())
        _toggle(acc, tgt)

    # factorizations c*e = b with c non-idempotent, for slot Q
    prod_pairs: dict[StrandDiagram, list] = {}
    for c in mid:
        if c.is_idempotent:
            continue
        for e in by_left.get(c.right_idem, ()):
            p = multiply_diagrams(c, e)
            if p is not None:
                prod_pairs.setdefault(p, []).append((c, e))
    for (b, Ikey, a), g in gens.items():
        # differential, part 1: d of the value.
        for t in diff_diagram(a):
            add(g, (), (), gens[(b, Ikey, t)])
        # differential, part 2: d of the source coordinate.
        for c in by_right.get(b.right_idem, ()):
            if b in diff_diagram(c):
                add(g, (), (), gens[(c, Ikey, a)])
        # right A(Z)-action by post-multiplication (slot P).
        for x in by_left.get(a.right_idem, ()):
            if x.is_idempotent:
                continue
            p = multiply_diagrams(a, x)
            if p is not None:
                add(g, (x,), (), gens[(b, Ikey, p)])
        # right A(Z')-action by pre-multiplication through the source (slot Q).
        for c, e in prod_pairs.get(b, ()):
            add(g, (), (c,), gens[(e, Ikey, a)])
    for x, c, y in P.arrows():
        # differential, part 3, contravariant along the coaction x -> (c, y):
        # d f_{b', y, a} has a term f_{c', x, c.sig * a} whenever c' * c.rho = b'.
        e_sig, e_rho = c.sig, c.rho
        for cprime in by_right.get(e_rho.left_idem, ()):
            b = multiply_diagrams(cprime, e_rho)
            if b is None:
                continue
            for a in by_left.get(y.idem[0], ()):
                t = multiply_diagrams(e_sig, a)
                if t is None:
                    continue
                src = gens.get((b, y.key, a))
                tgt = gens.get((cprime, x.key, t))
                if src is not None and tgt is not None:
                    add(src, (), (), tgt)
    return TypeAA(pmc, sorted(gens.values(), key=lambda g: g.skey), actions)


def identity_da(pmc: PointedMatchedCircle) -> TypeDA:
    """The DA bimodule with one generator per middle-weight idempotent and
    delta^1_2(x, a) = a (x) x only."""
    alg = algebra(pmc)
    k = pmc.genus
    mid = alg.diagrams(k)
    gens = {}
    for idem in {d.left_idem for d in mid}:
        gens[idem] = Generator(("idDA", idem), (idem, idem), (), "e")
    actions: dict = {}
    for a in mid:
        if a.is_idempotent:
            continue
        src = gens[a.left_idem]
        tgt = gens[a.right_idem]
        actions.setdefault((src, (a,)), set()).add((a, tgt))
    return TypeDA(pmc, sorted(gens.values(), key=lambda g: g.skey), actions)
