"""Crease stiffness from film and cut pattern, force tables and cut-file export."""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .structure import CLASSES, FlatPattern, OrigamiSpec, build_leafout, transition_force

E_REF = 2.5e9  # Pa, polyimide
# Single global calibration constant in N*m/rad per (m^3 * m): fitted once so
# the bare 12.5 um film with 26% cuts on main and sub creases needs 6.5 mN.
K0 = 5.0962588e10
ROOT_MULTIPLIER = 5.2


@dataclass(frozen=True)
class FilmSpec:
    thickness: float  # m
    youngs_modulus: float = E_REF  # Pa
    name: str = "polyimide"

    def __post_init__(self):
        if not self.thickness > 0 or not self.youngs_modulus > 0:
            raise DomainError("film thickness and modulus must be positive")


@dataclass(frozen=True)
class CutPattern:
    cut_fraction: dict = field(default_factory=lambda: {"main": 0.26, "sub": 0.26, "boundary": 0.0})
    hole_pitch: float = 1e-3  # m
    hole_width: float = 1e-4  # m

    def __post_init__(self):
        for k in CLASSES:
            c = self.cut_fraction.get(k, 0.0)
            if not 0.0 <= c < 1.0:
                raise DomainError(f"cut fraction for {k!r} must lie in [0, 1), got {c}")
        if not self.hole_pitch > 0 or not self.hole_width > 0:
            raise DomainError("hole pitch and width must be positive")

    @classmethod
    def uniform(cls, fraction, boundary=0.0, **kw):
        return cls({"main": fraction, "sub": fraction, "boundary": boundary}, **kw)


@dataclass(frozen=True)
class RootStructure:
    enabled: bool = False
    stiffness_multiplier: float = ROOT_MULTIPLIER

    def __post_init__(self):
        if self.stiffness_multiplier < 1:
            raise DomainError("root stiffness multiplier must be >= 1")

    @property
    def factor(self) -> float:
        return self.stiffness_multiplier if self.enabled else 1.0


def crease_stiffness(film: FilmSpec, cut_fraction: float, crease_length: float, k0: float = K0) -> float:
    """Plate-hinge stiffness ``k0 * t^3 * l * (1 - cut) * E/E_ref`` in N*m/rad."""
    if not 0.0 <= cut_fraction < 1.0:
        raise DomainError(f"cut fraction must lie in [0, 1), got {cut_fraction}")
    if not crease_length > 0:
        raise DomainError("crease length must be positive")
    return k0 * film.thickness ** 3 * crease_length * (1.0 - cut_fraction) * film.youngs_modulus / E_REF


def class_lengths(pattern: FlatPattern) -> dict:
    """Mean flat crease length per class."""
    out = {}
    for k in CLASSES:
        ls = [np.linalg.norm(pattern.vertices[c.b] - pattern.vertices[c.a]) for c in pattern.creases if c.cls == k]
        out[k] = float(np.mean(ls))
    return out


def design_spec(film: FilmSpec, cut: CutPattern, root: RootStructure = RootStructure(),
                base: OrigamiSpec | None = None, k0: float = K0) -> OrigamiSpec:
    """``base`` with crease stiffness derived from film, cuts and root structure."""
    base = base or OrigamiSpec()
    lengths = class_lengths(build_leafout(base))
    kappa = {k: root.factor * crease_stiffness(film, cut.cut_fraction.get(k, 0.0), lengths[k], k0)
             for k in CLASSES}
    return base.with_stiffness(kappa)


@dataclass(frozen=True)
class ForceRow:
    thickness_um: float
    cut_pct: float
    root: bool
    force_mN: float


def force_table(films, cuts, spec: OrigamiSpec | None = None, roots=(False, True), k0: float = K0) -> list:
    """Transition force for every film x cut x root combination, in input order."""
    rows = []
    for film in films:
        for cut in cuts:
            for r in roots:
                s = design_spec(film, cut, RootStructure(enabled=r), spec, k0)
                f = transition_force(s)
                rows.append(ForceRow(film.thickness * 1e6, 100.0 * cut.cut_fraction["main"], r, f * 1e3))
    return rows


def calibrate_k0(target: float = 6.5e-3, film: FilmSpec = FilmSpec(12.5e-6),
                 cut: CutPattern = CutPattern(), spec: OrigamiSpec | None = None) -> float:
    """k0 that makes the bare design need ``target`` newtons (force is linear in k0)."""
    f1 = transition_force(design_spec(film, cut, RootStructure(), spec, k0=1.0))
    return target / f1


# --- cut-file export -------------------------------------------------------

@dataclass(frozen=True)
class CutDrawing:
    """Geometry of a cut file in millimetres."""

    boundary: tuple  # closed polygon ((x, y), ...)
    holes: tuple  # ((x0, y0, x1, y1), ...) cut segments
    scores: tuple  # uncut crease annotations
    hole_width: float  # mm
    extent: tuple  # (xmin, ymin, xmax, ymax)


def cut_drawing(pattern: FlatPattern, cut: CutPattern) -> CutDrawing:
    n = pattern.n_cells
    mm = 1e3
    ring = []
    for k in range(n):
        ring.append(pattern.vertices[pattern.index("M", k)])
        ring.append(pattern.vertices[pattern.index("Q", k)])
    boundary = tuple((round(float(p[0] * mm), 6), round(float(p[1] * mm), 6)) for p in ring)
    holes, scores = [], []
    for c in pattern.creases:
        frac = cut.cut_fraction.get(c.cls, 0.0)
        a, b = pattern.vertices[c.a] * mm, pattern.vertices[c.b] * mm
        length = float(np.linalg.norm(b - a))
        if frac == 0.0:
            scores.append(tuple(round(float(v), 6) for v in (*a, *b)))
            continue
        pitch = cut.hole_pitch * mm
        if pitch > length or cut.hole_width * mm > pitch:
            raise DomainError("hole geometry does not fit on the crease")
        cells = int(length // pitch)
        u = (b - a) / length
        start = (length - cells * pitch) / 2
        for i in range(cells):
            mid = start + (i + 0.5) * pitch
            p0 = a + u * (mid - frac * pitch / 2)
            p1 = a + u * (mid + frac * pitch / 2)
            holes.append(tuple(round(float(v), 6) for v in (*p0, *p1)))
    xs = [p[0] for p in boundary]
    ys = [p[1] for p in boundary]
    return CutDrawing(boundary, tuple(holes), tuple(scores), round(cut.hole_width * mm, 6),
                      (min(xs), min(ys), max(xs), max(ys)))


def _f(v):
    return f"{v + 0.0:.6f}".rstrip("0").rstrip(".")


def render_svg(d: CutDrawing) -> str:
    x0, y0, x1, y1 = d.extent
    pad = 1.0
    w, h = x1 - x0 + 2 * pad, y1 - y0 + 2 * pad
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(w)}mm" height="{_f(h)}mm" '
        f'viewBox="{_f(x0 - pad)} {_f(y0 - pad)} {_f(w)} {_f(h)}">',
        '<g id="cut-boundary" fill="none" stroke="#000000" stroke-width="0.05">',
        '<polygon points="' + " ".join(f"{_f(x)},{_f(y)}" for x, y in d.boundary) + '"/>',
        "</g>",
        f'<g id="cut-crease" fill="none" stroke="#ff0000" stroke-width="{_f(d.hole_width)}">',
    ]
    lines += [f'<line x1="{_f(a)}" y1="{_f(b)}" x2="{_f(c)}" y2="{_f(e)}"/>' for a, b, c, e in d.holes]
    lines.append("</g>")
    if d.scores:
        lines.append('<g id="score-crease" fill="none" stroke="#0000ff" stroke-width="0.02">')
        lines += [f'<line x1="{_f(a)}" y1="{_f(b)}" x2="{_f(c)}" y2="{_f(e)}"/>' for a, b, c, e in d.scores]
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_cut_pattern(pattern: FlatPattern, cut: CutPattern) -> str:
    """SVG 1.1 cut file (millimetre user units) for ``pattern``."""
    return render_svg(cut_drawing(pattern, cut))


def parse_cut_svg(text: str) -> CutDrawing:
    """Read back a document written by :func:`export_cut_pattern`."""
    ns = {"s": "http://www.w3.org/2000/svg"}
    root = ET.fromstring(text)
    groups = {g.get("id"): g for g in root.findall("s:g", ns)}

    def segs(g):
        if g is None:
            return ()
        return tuple(tuple(float(ln.get(k)) for k in ("x1", "y1", "x2", "y2")) for ln in g.findall("s:line", ns))

    poly = groups["cut-boundary"].find("s:polygon", ns).get("points").split()
    boundary = tuple(tuple(float(v) for v in p.split(",")) for p in poly)
    xs = [p[0] for p in boundary]
    ys = [p[1] for p in boundary]
    width = float(groups["cut-crease"].get("stroke-width"))
    return CutDrawing(boundary, segs(groups["cut-crease"]), segs(groups.get("score-crease")), width,
                      (min(xs), min(ys), max(xs), max(ys)))
