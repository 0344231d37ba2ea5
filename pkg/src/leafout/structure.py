"""Rigid leaf-out origami: flat pattern, fold kinematics and fold energy.

The pattern is a regular n-gon split into ``n`` Miura-type cells around a
centre vertex ``O``. Each cell spans ``2*alpha`` of azimuth and contains

* a main crease ``O -> M_k`` ending on a polygon corner (azimuth ``2k*alpha``),
* a boundary crease ``O -> S_k`` along the cell mid-ray (azimuth
  ``(2k+1)*alpha``), ending at an interior degree-4 vertex ``S_k``,
* three sub creases ``M_k -> S_k``, ``S_k -> M_{k+1}`` and ``S_k -> Q_k``,
  where ``Q_k`` is the midpoint of the polygon edge.

Fold angles are signed, valley positive. The fold coordinate ``psi`` is the
signed elevation of the main creases above the plane normal to the symmetry
axis, so ``psi = 0`` is the flat sheet. For ``psi > 0`` and ``psi < 0`` the
solver follows the two kinematic branches that respect the mountain/valley
assignment; they meet at the flat state, which is where the energy barrier
of a bistable design sits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SolverError

CLASSES = ("main", "sub", "boundary")
DEFAULT_MV = {"main": -1, "sub": 1, "boundary": 1}
# rest angles in degrees; tuned so the folded minimum of the 4-cell design
# sits near 55 degrees
DEFAULT_REST_DEG = {"main": -45.0, "sub": 135.0, "boundary": 102.0}
DEFAULT_KAPPA = 1.0e-4  # N*m/rad, replaced by design.crease_stiffness in practice

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200
CONTINUATION_STEP = math.radians(2.0)
_SEED_PSI = 1e-4


@dataclass(frozen=True)
class CreaseClass:
    rest_angle: float  # rad, signed
    stiffness: float  # N*m/rad


@dataclass(frozen=True)
class OrigamiSpec:
    """Geometry and crease mechanics of one leaf-out structure."""

    n_cells: int = 4
    L: float = 0.039
    crease_classes: dict = field(default_factory=lambda: {
        k: CreaseClass(math.radians(v), DEFAULT_KAPPA) for k, v in DEFAULT_REST_DEG.items()})
    mv_assignment: dict = field(default_factory=lambda: dict(DEFAULT_MV))
    sub_fraction: float = 0.5  # |OS| as a fraction of the polygon apothem

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or not 3 <= self.n_cells <= 8:
            raise DomainError(f"n_cells must be an integer in [3, 8], got {self.n_cells}")
        if not self.L > 0:
            raise DomainError("L must be positive")
        if not 0.05 <= self.sub_fraction <= 0.95:
            raise DomainError("sub_fraction must lie in [0.05, 0.95]")
        for name in CLASSES:
            if name not in self.crease_classes or name not in self.mv_assignment:
                raise DomainError(f"missing crease class {name!r}")
            cc = self.crease_classes[name]
            mv = self.mv_assignment[name]
            if mv not in (-1, 1):
                raise DomainError(f"mv_assignment[{name!r}] must be +1 or -1")
            if not cc.stiffness > 0:
                raise DomainError(f"stiffness of {name!r} creases must be positive")
            if cc.rest_angle * mv < 0:
                raise DomainError(f"rest angle of {name!r} creases contradicts its mountain/valley sign")

    @property
    def alpha(self) -> float:
        return math.pi / self.n_cells

    @property
    def kappa_ref(self) -> float:
        """Stiffness used to normalise energies (the main-crease class)."""
        return self.crease_classes["main"].stiffness

    def replace(self, **changes) -> "OrigamiSpec":
        d = {"n_cells": self.n_cells, "L": self.L, "crease_classes": dict(self.crease_classes),
             "mv_assignment": dict(self.mv_assignment), "sub_fraction": self.sub_fraction}
        d.update(changes)
        return OrigamiSpec(**d)

    def with_stiffness(self, kappa) -> "OrigamiSpec":
        """Copy with new per-class stiffness (a float or a class -> float mapping)."""
        if not isinstance(kappa, dict):
            kappa = {k: float(kappa) for k in CLASSES}
        cc = {k: CreaseClass(v.rest_angle, kappa.get(k, v.stiffness))
              for k, v in self.crease_classes.items()}
        return self.replace(crease_classes=cc)

    def with_rest_angles(self, rest) -> "OrigamiSpec":
        cc = {k: CreaseClass(rest.get(k, v.rest_angle), v.stiffness)
              for k, v in self.crease_classes.items()}
        return self.replace(crease_classes=cc)

    def to_dict(self) -> dict:
        return {
            "n_cells": self.n_cells,
            "L": self.L,
            "sub_fraction": self.sub_fraction,
            "mv_assignment": dict(self.mv_assignment),
            "crease_classes": {k: {"rest_angle_deg": math.degrees(v.rest_angle), "stiffness": v.stiffness}
                               for k, v in self.crease_classes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrigamiSpec":
        base = cls(n_cells=int(d.get("n_cells", 4)))
        classes = dict(base.crease_classes)
        for k, v in d.get("crease_classes", {}).items():
            if k not in CLASSES:
                raise DomainError(f"unknown crease class {k!r}")
            old = classes[k]
            rest = math.radians(v["rest_angle_deg"]) if "rest_angle_deg" in v else old.rest_angle
            classes[k] = CreaseClass(rest, float(v.get("stiffness", old.stiffness)))
        mv = dict(DEFAULT_MV)
        mv.update({k: int(v) for k, v in d.get("mv_assignment", {}).items()})
        return cls(n_cells=int(d.get("n_cells", 4)), L=float(d.get("L", base.L)),
                   crease_classes=classes, mv_assignment=mv,
                   sub_fraction=float(d.get("sub_fraction", base.sub_fraction)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OrigamiSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Crease:
    a: int
    b: int
    cls: str
    mv_sign: int
    left: int  # apex of the face to the left of a -> b
    right: int  # apex of the face to the right


@dataclass(frozen=True)
class FlatPattern:
    vertices: np.ndarray  # (V, 2), metres
    creases: tuple
    faces: tuple  # CCW vertex triples
    n_cells: int

    def index(self, kind: str, k: int) -> int:
        """Vertex index of ``O`` or of ``M``/``S``/``Q`` in cell ``k``."""
        n = self.n_cells
        if kind == "O":
            return 0
        return {"M": 1, "S": 1 + n, "Q": 1 + 2 * n}[kind] + (k % n)

    def crease_counts(self) -> dict:
        out = {c: 0 for c in CLASSES}
        for c in self.creases:
            out[c.cls] += 1
        return out

    def face_edges(self) -> np.ndarray:
        edges = set()
        for f in self.faces:
            for i in range(3):
                a, b = f[i], f[(i + 1) % 3]
                edges.add((min(a, b), max(a, b)))
        return np.array(sorted(edges))

    def interior_vertices(self) -> list:
        return [0] + [self.index("S", k) for k in range(self.n_cells)]

    def vertex_star(self, v: int):
        """Creases around vertex ``v`` in CCW order with the sector angle after each."""
        p = self.vertices
        items = []
        for j, c in enumerate(self.creases):
            if v in (c.a, c.b):
                other = c.b if c.a == v else c.a
                d = p[other] - p[v]
                items.append((math.atan2(d[1], d[0]) % (2 * math.pi), j))
        items.sort()
        az = [a for a, _ in items]
        sectors = [(az[(i + 1) % len(az)] - az[i]) % (2 * math.pi) for i in range(len(az))]
        return [j for _, j in items], sectors


def build_leafout(spec: OrigamiSpec) -> FlatPattern:
    """Construct the flat crease pattern for ``spec``."""
    n = spec.n_cells
    if n < 3:
        raise DomainError("at least 3 cells are needed to close the disk")
    a = spec.alpha
    L = spec.L
    r_s = spec.sub_fraction * L * math.cos(a)
    r_q = L * math.cos(a)
    verts = [(0.0, 0.0)]
    verts += [(L * math.cos(2 * k * a), L * math.sin(2 * k * a)) for k in range(n)]
    verts += [(r_s * math.cos((2 * k + 1) * a), r_s * math.sin((2 * k + 1) * a)) for k in range(n)]
    verts += [(r_q * math.cos((2 * k + 1) * a), r_q * math.sin((2 * k + 1) * a)) for k in range(n)]

    def M(k):
        return 1 + k % n

    def S(k):
        return 1 + n + k % n

    def Q(k):
        return 1 + 2 * n + k % n

    faces = []
    for k in range(n):
        faces += [(0, M(k), S(k)), (0, S(k), M(k + 1)), (M(k), Q(k), S(k)), (S(k), Q(k), M(k + 1))]
    mv = spec.mv_assignment
    creases = []
    for k in range(n):
        creases.append(Crease(0, M(k), "main", mv["main"], S(k), S(k - 1)))
    for k in range(n):
        creases.append(Crease(0, S(k), "boundary", mv["boundary"], M(k + 1), M(k)))
    for k in range(n):
        creases.append(Crease(M(k), S(k), "sub", mv["sub"], 0, Q(k)))
        creases.append(Crease(S(k), M(k + 1), "sub", mv["sub"], 0, Q(k)))
    for k in range(n):
        # the short sub crease folds against its class so the degree-4 vertex
        # S keeps a 3:1 mountain/valley split
        creases.append(Crease(S(k), Q(k), "sub", -mv["sub"], M(k + 1), M(k)))
    return FlatPattern(np.array(verts), tuple(creases), tuple(faces), n)


def psi_limits(spec: OrigamiSpec) -> tuple:
    """Open interval of admissible ``psi`` (faces collide at the ends)."""
    return (-(math.pi / 2 - spec.alpha), math.pi / 2)


def default_psi_grid(spec: OrigamiSpec, num: int = 161, span: float = 0.96,
                     psi_hi: float = math.radians(80.0)) -> np.ndarray:
    """Uniform grid covering both branches with ``psi = 0`` on a node."""
    lo = -span * (math.pi / 2 - spec.alpha)
    step = (psi_hi - lo) / (num - 1)
    k = round(-lo / step)
    return (np.arange(num) - k) * step


def _rot_z(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class _Cell:
    """Reduced kinematics of one cell in the mirror plane at azimuth alpha.

    Unknowns are u = (s_r, s_z, q_r, q_z): radial and axial coordinates of
    S_0 and Q_0. ``M_0`` is driven directly by psi.
    """

    def __init__(self, pattern: FlatPattern, spec: OrigamiSpec):
        self.L = spec.L
        self.a = spec.alpha
        p = pattern.vertices
        O, M, S, Q = (p[pattern.index(t, 0)] for t in "OMSQ")
        self.r_s = float(np.linalg.norm(S - O))
        self.d_ms = float(np.linalg.norm(S - M))
        self.d_sq = float(np.linalg.norm(Q - S))
        self.d_mq = float(np.linalg.norm(Q - M))

    def m_coords(self, psi):
        """Radial projection, out-of-plane offset and height of M_0."""
        c = self.L * math.cos(psi)
        return c * math.cos(self.a), c * math.sin(self.a), self.L * math.sin(psi)

    def residual(self, u, psi):
        sr, sz, qr, qz = u
        mr, mo, mz = self.m_coords(psi)
        L2 = self.L ** 2
        return np.array([
            (sr ** 2 + sz ** 2 - self.r_s ** 2) / L2,
            ((sr - mr) ** 2 + mo ** 2 + (sz - mz) ** 2 - self.d_ms ** 2) / L2,
            ((qr - sr) ** 2 + (qz - sz) ** 2 - self.d_sq ** 2) / L2,
            ((qr - mr) ** 2 + mo ** 2 + (qz - mz) ** 2 - self.d_mq ** 2) / L2,
        ])

    def jacobian(self, u, psi):
        sr, sz, qr, qz = u
        mr, _, mz = self.m_coords(psi)
        J = np.array([
            [2 * sr, 2 * sz, 0.0, 0.0],
            [2 * (sr - mr), 2 * (sz - mz), 0.0, 0.0],
            [-2 * (qr - sr), -2 * (qz - sz), 2 * (qr - sr), 2 * (qz - sz)],
            [0.0, 0.0, 2 * (qr - mr), 2 * (qz - mz)],
        ])
        return J / self.L ** 2

    def d_residual_d_psi(self, u, psi):
        sr, sz, qr, qz = u
        mr, mo, mz = self.m_coords(psi)
        # d(mr)/dpsi = -tan(psi)*mr etc.; mr^2 + mo^2 + mz^2 = L^2
        dmr = -self.L * math.sin(psi) * math.cos(self.a)
        dmo = -self.L * math.sin(psi) * math.sin(self.a)
        dmz = self.L * math.cos(psi)
        g2 = -2 * (sr - mr) * dmr + 2 * mo * dmo - 2 * (sz - mz) * dmz
        g4 = -2 * (qr - mr) * dmr + 2 * mo * dmo - 2 * (qz - mz) * dmz
        return np.array([0.0, g2, 0.0, g4]) / self.L ** 2

    def newton(self, u0, psi):
        """Damped Newton on the reduced system; returns (u, residual norm)."""
        u = np.array(u0, dtype=float)
        r = self.residual(u, psi)
        nr = float(np.max(np.abs(r)))
        for _ in range(NEWTON_MAX_ITER):
            if nr < NEWTON_TOL * 1e-3:
                break
            try:
                du = np.linalg.solve(self.jacobian(u, psi), -r)
            except np.linalg.LinAlgError:
                raise SolverError("singular reduced Jacobian", residual=nr) from None
            t = 1.0
            while t > 1e-6:
                trial = u + t * du
                rt = self.residual(trial, psi)
                nt = float(np.max(np.abs(rt)))
                if nt < nr:
                    break
                t *= 0.5
            else:
                break
            u, r, nr = trial, rt, nt
        return u, nr

    @staticmethod
    def _circle_pair(c0, r0, c1, r1):
        d = np.linalg.norm(c1 - c0)
        a = (r0 ** 2 - r1 ** 2 + d ** 2) / (2 * d)
        h = math.sqrt(max(r0 ** 2 - a ** 2, 0.0))
        e = (c1 - c0) / d
        base = c0 + a * e
        perp = np.array([-e[1], e[0]])
        return base + h * perp, base - h * perp

    def seed(self, psi):
        """Closed-form start near the flat state on the branch selected by sign(psi)."""
        mr, mo, mz = self.m_coords(psi)
        m = np.array([mr, mz])
        s_cands = self._circle_pair(np.zeros(2), self.r_s, m, math.sqrt(self.d_ms ** 2 - mo ** 2))
        sa = math.sin(self.a)
        slope = (1 - sa) / math.cos(self.a) if psi > 0 else (1 + sa) / math.cos(self.a)
        target = self.r_s * np.array([math.cos(slope * psi), math.sin(slope * psi)])
        s = min(s_cands, key=lambda c: np.linalg.norm(c - target))
        q_cands = self._circle_pair(s, self.d_sq, m, math.sqrt(self.d_mq ** 2 - mo ** 2))
        straight = s + self.d_sq * s / np.linalg.norm(s)
        q = max(q_cands, key=lambda c: np.linalg.norm(c - straight))
        return np.array([s[0], s[1], q[0], q[1]])

    def flat(self):
        return np.array([self.r_s, 0.0, self.L * math.cos(self.a), 0.0])

    def track(self, psis):
        """Continue the branch along ``psis`` (same sign, increasing magnitude).

        Returns one entry per target: the reduced coordinates, or the
        ``SolverError`` raised there (later targets restart from the last
        converged point).
        """
        out = []
        prev = []  # (psi, u) history for secant prediction
        for psi in psis:
            if psi == 0.0:
                out.append(self.flat())
                continue
            try:
                if not prev or math.copysign(1, prev[-1][0]) != math.copysign(1, psi):
                    # two closed-form points fix the branch tangent for the secant predictor
                    ps = math.copysign(min(_SEED_PSI, abs(psi) / 2), psi)
                    prev = [(t, self.newton(self.seed(t), t)[0]) for t in (ps, 2 * ps)]
                hist = list(prev)
                last_psi = hist[-1][0]
                n_sub = max(1, math.ceil(abs(psi - last_psi) / CONTINUATION_STEP))
                for t in np.linspace(last_psi, psi, n_sub + 1)[1:]:
                    if len(hist) >= 2:
                        (p0, u0), (p1, u1) = hist[-2], hist[-1]
                        guess = u1 + (u1 - u0) * (t - p1) / (p1 - p0)
                    else:
                        guess = hist[-1][1]
                    u, res = self.newton(guess, t)
                    if res > NEWTON_TOL:
                        raise SolverError(f"reduced solver did not converge at psi={t:.6g}", residual=res)
                    hist = [hist[-1], (t, u)]
            except SolverError as exc:
                out.append(exc)
                continue
            prev = hist
            out.append(u)
        return out


@dataclass(frozen=True)
class FoldState:
    psi: float
    rho: np.ndarray  # per crease, pattern order
    positions: np.ndarray  # (V, 3)
    closure_residual: float
    rho_rate: np.ndarray  # d rho / d psi


def _positions(pattern, cell, u, psi):
    n = pattern.n_cells
    a = cell.a
    sr, sz, qr, qz = u
    m0 = np.array([cell.L * math.cos(psi), 0.0, cell.L * math.sin(psi)])
    s0 = np.array([sr * math.cos(a), sr * math.sin(a), sz])
    q0 = np.array([qr * math.cos(a), qr * math.sin(a), qz])
    R = np.stack([_rot_z(2 * k * a) for k in range(n)])
    return np.vstack([np.zeros((1, 3)), R @ m0, R @ s0, R @ q0])


def _dihedrals(pattern, x, v=None):
    """Signed fold angles and, if velocities ``v`` are given, their rates."""
    c = pattern.creases
    ia = np.array([k.a for k in c])
    ib = np.array([k.b for k in c])
    il = np.array([k.left for k in c])
    ir = np.array([k.right for k in c])
    a, b, l, r = x[ia], x[ib], x[il], x[ir]
    e = b - a
    nl = np.cross(e, l - a)
    nr = np.cross(a - b, r - b)
    le = np.linalg.norm(e, axis=1)
    cr = np.cross(nr, nl)
    y = np.einsum("ij,ij->i", cr, e) / le
    xx = np.einsum("ij,ij->i", nl, nr)
    rho = np.arctan2(y, xx)
    if v is None:
        return rho, None
    va, vb, vl, vr = v[ia], v[ib], v[il], v[ir]
    de = vb - va
    dnl = np.cross(de, l - a) + np.cross(e, vl - va)
    dnr = np.cross(va - vb, r - b) + np.cross(a - b, vr - vb)
    dcr = np.cross(dnr, nl) + np.cross(nr, dnl)
    dle = np.einsum("ij,ij->i", e, de) / le
    dy = (np.einsum("ij,ij->i", dcr, e) + np.einsum("ij,ij->i", cr, de)) / le - y * dle / le
    dx = np.einsum("ij,ij->i", dnl, nr) + np.einsum("ij,ij->i", nl, dnr)
    return rho, (xx * dy - y * dx) / (xx ** 2 + y ** 2)


def _rx(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def loop_closure_residual(pattern: FlatPattern, rho) -> float:
    """Max deviation from identity of the rotation product around interior vertices."""
    worst = 0.0
    for v in pattern.interior_vertices():
        order, sectors = pattern.vertex_star(v)
        R = np.eye(3)
        for j, th in zip(order, sectors):
            R = R @ _rx(rho[j]) @ _rot_z(th)
        worst = max(worst, float(np.max(np.abs(R - np.eye(3)))))
    return worst


def edge_length_error(pattern: FlatPattern, positions) -> float:
    """Max relative change in face edge length versus the flat pattern."""
    e = pattern.face_edges()
    flat = np.linalg.norm(pattern.vertices[e[:, 1]] - pattern.vertices[e[:, 0]], axis=1)
    now = np.linalg.norm(positions[e[:, 1]] - positions[e[:, 0]], axis=1)
    return float(np.max(np.abs(now - flat) / flat))


def _state(pattern, spec, cell, psi, u):
    x = _positions(pattern, cell, u, psi)
    if abs(psi) < 1e-9:
        # the reduced Jacobian is singular at the flat state; use the
        # one-sided branch tangent instead
        rho_rate = _flat_rates(pattern, cell, -1.0 if psi < 0 else 1.0)
        rho = _dihedrals(pattern, x)[0] if psi else np.zeros(len(pattern.creases))
    else:
        du = np.linalg.solve(cell.jacobian(u, psi), -cell.d_residual_d_psi(u, psi))
        v = _positions_rate(pattern, cell, du, psi)
        rho, rho_rate = _dihedrals(pattern, x, v)
    res = max(loop_closure_residual(pattern, rho), edge_length_error(pattern, x))
    return FoldState(float(psi), rho, x, res, rho_rate)


def _positions_rate(pattern, cell, du, psi):
    n = pattern.n_cells
    a = cell.a
    m0 = np.array([-cell.L * math.sin(psi), 0.0, cell.L * math.cos(psi)])
    s0 = np.array([du[0] * math.cos(a), du[0] * math.sin(a), du[1]])
    q0 = np.array([du[2] * math.cos(a), du[2] * math.sin(a), du[3]])
    R = np.stack([_rot_z(2 * k * a) for k in range(n)])
    return np.vstack([np.zeros((1, 3)), R @ m0, R @ s0, R @ q0])


def _flat_rates(pattern, cell, sign):
    h = sign * 1e-7
    u = cell.seed(h)  # closed form, exact near the flat state
    return _dihedrals(pattern, _positions(pattern, cell, u, h))[0] / h


def _check_psi(spec, psi):
    lo, hi = psi_limits(spec)
    if not math.isfinite(psi) or psi <= lo or psi >= hi:
        raise DomainError(f"psi={psi:.6g} rad outside the kinematic range ({lo:.6g}, {hi:.6g})")


def solve_fold_state(pattern: FlatPattern, spec: OrigamiSpec, psi: float) -> FoldState:
    """Rigid configuration at fold coordinate ``psi``."""
    psi = float(psi)
    _check_psi(spec, psi)
    cell = _Cell(pattern, spec)
    u = cell.track([psi])[0]
    if isinstance(u, SolverError):
        raise u
    return _state(pattern, spec, cell, psi, u)


def solve_fold_states(pattern: FlatPattern, spec: OrigamiSpec, psis) -> list:
    """Solve many states, sharing continuation along each branch.

    Failed points come back as ``SolverError`` instances in place of a state.
    """
    psis = [float(p) for p in psis]
    for p in psis:
        _check_psi(spec, p)
    cell = _Cell(pattern, spec)
    out = [None] * len(psis)
    for positive in (True, False):
        idx = sorted((i for i, p in enumerate(psis) if p != 0.0 and (p > 0) == positive),
                     key=lambda i: abs(psis[i]))
        for i, u in zip(idx, cell.track([psis[i] for i in idx])):
            out[i] = u if isinstance(u, SolverError) else _state(pattern, spec, cell, psis[i], u)
    for i, p in enumerate(psis):
        if p == 0.0:
            out[i] = _state(pattern, spec, cell, 0.0, cell.flat())
    return out


def crease_rest_and_stiffness(pattern: FlatPattern, spec: OrigamiSpec):
    """Per-crease rest angle and stiffness arrays."""
    rest = np.array([c.mv_sign * abs(spec.crease_classes[c.cls].rest_angle) for c in pattern.creases])
    kappa = np.array([spec.crease_classes[c.cls].stiffness for c in pattern.creases])
    return rest, kappa


def fold_energy(state: FoldState, spec: OrigamiSpec, pattern: FlatPattern | None = None):
    """Torsional-spring energy of ``state``: (joules, normalised by ``kappa_ref``)."""
    pattern = pattern or build_leafout(spec)
    rest, kappa = crease_rest_and_stiffness(pattern, spec)
    e = 0.5 * float(np.sum(kappa * (state.rho - rest) ** 2))
    return e, e / spec.kappa_ref


def fold_energy_rate(state: FoldState, spec: OrigamiSpec, pattern: FlatPattern | None = None) -> float:
    """dE/dpsi in J/rad (one-sided from the positive branch at the flat state)."""
    pattern = pattern or build_leafout(spec)
    rest, kappa = crease_rest_and_stiffness(pattern, spec)
    return float(np.sum(kappa * (state.rho - rest) * state.rho_rate))


@dataclass(frozen=True)
class EnergyLandscape:
    psi_grid: np.ndarray
    energy: np.ndarray  # J above the lowest sampled state; NaN at gaps
    energy_normalized: np.ndarray
    barrier_psi: float | None
    barrier_energy: float | None  # J
    minima: tuple  # ((psi, E), ...)
    bistable: bool
    gaps: tuple = ()  # grid indices where the solver failed

    @property
    def barrier_normalized(self):
        if self.barrier_energy is None:
            return None
        i = int(np.argmin(np.abs(self.psi_grid - self.barrier_psi)))
        return float(self.energy_normalized[i])

    def to_csv_rows(self):
        yield ("psi_deg", "energy_J", "energy_normalized")
        for p, e, en in zip(self.psi_grid, self.energy, self.energy_normalized):
            yield (f"{math.degrees(p):.6f}", f"{e:.9e}", f"{en:.9e}")


def _local_minima(e):
    idx = []
    for i in range(1, len(e) - 1):
        if np.isnan(e[i - 1:i + 2]).any():
            continue
        if e[i] < e[i - 1] and e[i] <= e[i + 1]:
            idx.append(i)
    return idx


def energy_landscape(spec: OrigamiSpec, psi_grid=None) -> EnergyLandscape:
    """Sample the fold energy over ``psi_grid`` and locate minima and barrier."""
    grid = default_psi_grid(spec) if psi_grid is None else np.asarray(psi_grid, dtype=float)
    pattern = build_leafout(spec)
    rest, kappa = crease_rest_and_stiffness(pattern, spec)
    raw = np.full(len(grid), np.nan)
    gaps = []
    for i, st in enumerate(solve_fold_states(pattern, spec, grid)):
        if isinstance(st, SolverError):
            gaps.append(i)
        else:
            raw[i] = 0.5 * float(np.sum(kappa * (st.rho - rest) ** 2))
    energy = raw - np.nanmin(raw)
    norm = energy / spec.kappa_ref
    mins = _local_minima(energy)
    minima = tuple((float(grid[i]), float(energy[i])) for i in mins)
    barrier_psi = barrier_e = None
    bistable = False
    if len(mins) == 2:
        seg = energy[mins[0]:mins[1] + 1]
        j = mins[0] + int(np.nanargmax(seg))
        inner = _local_minima(-energy[mins[0]:mins[1] + 1])
        if len(inner) == 1:
            bistable = True
            barrier_psi, barrier_e = float(grid[j]), float(energy[j])
    return EnergyLandscape(grid, energy, norm, barrier_psi, barrier_e, minima, bistable, tuple(gaps))


def transition_force(spec: OrigamiSpec, payload_mass: float = 0.0, g: float = 9.81,
                     payload_coupling: float = 0.5, n_samples: int = 400) -> float:
    """Peak centre force (N) needed to push the tumbling state over the barrier.

    The centre height relative to the rim is ``z = L*sin(psi)``, so
    ``dE/dz = (dE/dpsi) / (L*cos(psi))``. The path runs from the tumbling
    minimum (psi < 0) up to the flat state. A payload carried on the faces
    pre-loads the centre by ``payload_coupling * m * g``.
    """
    if payload_mass < 0:
        raise DomainError("payload_mass must be non-negative")
    land = energy_landscape(spec)
    if not land.bistable:
        raise DomainError("transition force is only defined for a bistable spec")
    psi_t = min(land.minima, key=lambda m: m[0])[0]
    if psi_t >= 0:
        raise DomainError("no tumbling minimum on the negative branch")
    pattern = build_leafout(spec)
    rest, kappa = crease_rest_and_stiffness(pattern, spec)
    psis = np.linspace(psi_t, 0.0, n_samples)[:-1]
    best = 0.0
    for st in solve_fold_states(pattern, spec, psis):
        if isinstance(st, SolverError):
            raise st
        de = float(np.sum(kappa * (st.rho - rest) * st.rho_rate))
        best = max(best, abs(de) / (spec.L * math.cos(st.psi)))
    return max(best - payload_coupling * payload_mass * g, 0.0)
