"""Spectral sequences for branched double covers of plat closures."""

from .pmc import (
    Chord,
    CurveClass,
    DegenerateHigh,
    DegenerateLow,
    Generic,
    PointedMatchedCircle,
    all_chords,
    curve,
    linear_pmc,
)
from .strands import (
    AlgebraElement,
    OuterAlgebra,
    OuterDiagram,
    StrandDiagram,
    algebra,
    chord_element,
    differential,
    idempotents,
    multiply,
    outer_algebra,
    set_element,
)

__version__ = "0.1.0"
