"""Command line front end: braid parsing, the six-step pipeline, and
reporting."""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field
from functools import lru_cache

from . import __version__
from .homalg import (
    BoundednessError,
    StructureError,
    box_AA_DD,
    box_AD,
    box_DA_D,
)
from .khovanov import PlatDiagram, reduced_kh
from .pmc import curve, linear_pmc
from .sscube import (
    CubeFilteredComplex,
    PageReport,
    homology_rank,
    pages,
    render_grid,
    weight_filtration,
)

SCHEMA_VERSION = 1

_TOKEN = re.compile(r"^s(\d+)(?:\^(-?\d+))?$")


def parse_braid(text: str, strands: int) -> PlatDiagram:
    """Parse a braid word like "s2 s2^-1 s1" on the given strand count."""
    if strands < 4 or strands % 2:
        raise ValueError("strand count must be even and at least 4")
    word: list[int] = []
    for token in text.split():
        m = _TOKEN.match(token)
        if not m:
            raise ValueError(f"malformed braid token {token!r}")
        i = int(m.group(1))
        power = int(m.group(2) or "1")
        if i == strands - 1:
            raise ValueError(
                f"generator s{i} is forbidden on {strands} strands: the plat "
                "convention keeps the last strand free of crossings"
            )
        if not 1 <= i <= strands - 2:
            raise ValueError(f"generator s{i} out of range for {strands} strands")
        sign = 1 if power > 0 else -1
        word.extend([sign * i] * abs(power))
    return PlatDiagram(strands, tuple(word))


@lru_cache(maxsize=None)
def _da_cone(pmc, n: int, sign: int):
    """Reduced filtered DA bimodule of one crossing; cached per curve.
    Boxing the unreduced dualized bimodule keeps intermediate tables small."""
    from .bordered import cfdd_dehn_twist, cfdd_identity
    from .homalg import mor_dd_to_alg

    cone = cfdd_dehn_twist(pmc, curve(pmc, n), sign)
    return box_AA_DD(mor_dd_to_alg(cfdd_identity(pmc)), cone).reduced()


@dataclass
class StageInfo:
    name: str
    generators: int
    terms: int
    seconds: float


@dataclass
class PipelineReport:
    diagram: PlatDiagram
    stages: list[StageInfo]
    vertex_dims: dict
    vertex_homology: dict
    page_report: PageReport
    oracle_ranks: dict | None = None
    oracle_verdict: str = "skipped"
    dumped: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "input": {
                "strands": self.diagram.strands,
                "word": list(self.diagram.word),
            },
            "stages": [
                {"name": s.name, "generators": s.generators, "terms": s.terms,
                 "seconds": round(s.seconds, 4)}
                for s in self.stages
            ],
            "e0_by_vertex": {_vkey(v): n for v, n in sorted(self.vertex_dims.items())},
            "e1_by_vertex": {
                _vkey(v): n for v, n in sorted(self.vertex_homology.items())
            },
            "spectral_sequence": self.page_report.to_json_dict(),
            "oracle": {
                "verdict": self.oracle_verdict,
                "reduced_khovanov": (
                    {str(k): v for k, v in sorted(self.oracle_ranks.items())}
                    if self.oracle_ranks is not None
                    else None
                ),
            },
        }
        return out

    def render_text(self) -> str:
        lines = [
            f"plat closure on {self.diagram.strands} strands, word "
            + (" ".join(_token(g) for g in self.diagram.word) or "(empty)"),
        ]
        for s in self.stages:
            lines.append(
                f"  stage {s.name}: {s.generators} generators, "
                f"{s.terms} terms ({s.seconds:.2f}s)"
            )
        if self.diagram.n_crossings <= 3:
            lines.append("E0/E1 by cube vertex:")
            for v in sorted(self.vertex_dims):
                lines.append(
                    f"  {_vkey(v)}: {self.vertex_dims[v]} / {self.vertex_homology[v]}"
                )
        for p in self.page_report.pages:
            lines.append(
                f"E_{p.r}: " + " ".join(
                    f"w{w}:{r}" for w, r in sorted(p.ranks.items())
                ) + (f"   d_{p.r} ranks " + str(p.d_rank) if p.d_rank else "")
            )
        lines.append(
            f"collapse at page {self.page_report.collapse_page}; "
            f"E_infinity total {self.page_report.e_infinity_total}"
        )
        lines.append(f"oracle: {self.oracle_verdict}")
        return "\n".join(lines)


def _vkey(v: tuple) -> str:
    return "".join(map(str, v)) if v else "-"


def _token(g: int) -> str:
    return f"s{abs(g)}" + ("^-1" if g < 0 else "")


def _count_terms(obj) -> int:
    if hasattr(obj, "delta"):
        return sum(len(v) for v in obj.delta.values())
    if hasattr(obj, "actions"):
        return sum(len(v) for v in obj.actions.values())
    return sum(len(v) for v in obj.d.values())


def run_pipeline(
    diagram: PlatDiagram,
    reduce_stages: bool = True,
    oracle: bool = False,
    dump_dir: str | None = None,
    jobs: int = 1,
) -> PipelineReport:
    """Assemble the filtered complex of the plat closure and compute its
    spectral sequence, optionally comparing the second page with the
    reduced Khovanov oracle."""
    from .bordered import cfa_plat, cfd_plat_mirror

    genus = diagram.strands // 2 - 1
    pmc = linear_pmc(genus)
    stages: list[StageInfo] = []
    dumped: list[str] = []

    def stage(name, obj, t0):
        stages.append(
            StageInfo(name, len(obj.generators), _count_terms(obj), time.time() - t0)
        )
        if dump_dir is not None:
            import os

            os.makedirs(dump_dir, exist_ok=True)
            path = os.path.join(dump_dir, f"{len(stages):02d}_{name}.json")
            with open(path, "w") as fh:
                json.dump(obj.to_json_dict(), fh, indent=1, sort_keys=True)
            dumped.append(path)
        return obj

    t0 = time.time()
    tower = stage("plat_d", cfd_plat_mirror(pmc), t0)
    for i in range(diagram.n_crossings, 0, -1):
        g = diagram.word[i - 1]
        t0 = time.time()
        cone = _da_cone(pmc, abs(g), 1 if g > 0 else -1)
        tower = box_DA_D(cone, tower)
        if reduce_stages:
            tower = tower.reduced()
        tower = stage(f"crossing_{i}", tower, t0)
    t0 = time.time()
    final = box_AD(cfa_plat(pmc), tower)
    if reduce_stages:
        final = final.reduced()
    final = stage("pairing", final, t0)
    cube = CubeFilteredComplex(diagram.n_crossings, final)
    report = pages(weight_filtration(cube))
    oracle_ranks = None
    verdict = "skipped"
    if oracle:
        oracle_ranks = reduced_kh(diagram)
        e2 = report.page(2).ranks
        match = all(
            e2.get(w, 0) == oracle_ranks.get(w, 0)
            for w in range(diagram.n_crossings + 1)
        )
        verdict = "pass" if match else "fail"
    return PipelineReport(
        diagram,
        stages,
        cube.vertex_dims(),
        cube.vertex_homology(),
        report,
        oracle_ranks,
        verdict,
        dumped,
    )


def _algebra_table_lines(genus: int) -> list[str]:
    from .strands import algebra, diagram_name, diff_diagram, multiply_diagrams

    pmc = linear_pmc(genus)
    mid = algebra(pmc).diagrams(genus)
    names = {d: diagram_name(d) for d in mid}
    lines = [f"basis ({len(mid)} elements):"]
    for d in sorted(mid, key=lambda d: names[d]):
        lines.append(f"  {names[d]}")
    lines.append("nonzero products:")
    for a in sorted(mid, key=lambda d: names[d]):
        for b in sorted(mid, key=lambda d: names[d]):
            p = multiply_diagrams(a, b)
            if p is not None:
                lines.append(f"  {names[a]}*{names[b]} = {names[p]}")
    lines.append("nonzero differentials:")
    count = 0
    for a in sorted(mid, key=lambda d: names[d]):
        da = diff_diagram(a)
        if da:
            count += 1
            lines.append(f"  d({names[a]}) = " + " + ".join(sorted(map(str, da))))
    if not count:
        lines.append("  (none)")
    return lines


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="platss",
        description="Spectral sequences for branched double covers of plats",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_compute = sub.add_parser("compute", help="run the full pipeline")
    p_compute.add_argument("--strands", type=int, required=True)
    p_compute.add_argument("--braid", type=str, required=True)
    p_compute.add_argument("--format", choices=("text", "json"), default="text")
    p_compute.add_argument("--oracle", action="store_true")
    p_compute.add_argument("--dump-stage", type=str, default=None, metavar="DIR")
    p_compute.add_argument("--no-reduce", action="store_true")
    p_compute.add_argument("--jobs", type=int, default=1)

    p_kh = sub.add_parser("kh", help="reduced Khovanov oracle only")
    p_kh.add_argument("--strands", type=int, required=True)
    p_kh.add_argument("--braid", type=str, required=True)

    p_alg = sub.add_parser("algebra", help="algebra inspection")
    alg_sub = p_alg.add_subparsers(dest="algebra_command", required=True)
    p_table = alg_sub.add_parser("table", help="print the multiplication table")
    p_table.add_argument("--genus", type=int, required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "compute":
            diagram = parse_braid(args.braid, args.strands)
            report = run_pipeline(
                diagram,
                reduce_stages=not args.no_reduce,
                oracle=args.oracle,
                dump_dir=args.dump_stage,
                jobs=args.jobs,
            )
            if args.format == "json":
                print(json.dumps(report.to_json_dict(), indent=1, sort_keys=True))
            else:
                print(report.render_text())
            if args.oracle and report.oracle_verdict != "pass":
                return 2
        elif args.command == "kh":
            diagram = parse_braid(args.braid, args.strands)
            ranks = reduced_kh(diagram)
            print(json.dumps(
                {"schema_version": SCHEMA_VERSION,
                 "reduced_khovanov": {str(k): v for k, v in sorted(ranks.items())}},
                indent=1, sort_keys=True))
        elif args.command == "algebra":
            if args.genus < 1:
                raise ValueError("genus must be at least 1")
            print("\n".join(_algebra_table_lines(args.genus)))
    except (ValueError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BoundednessError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
