"""Capacitor-driven solenoid actuator: circuit, magnet motion and force delivery.

Coordinates: ``x`` is the height of the moving magnet's centre above the
coil's mid-plane, positive upward. The magnet starts at ``start_offset``
and is pushed upward until it meets the tube-top stop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, IntegratorError

MU0 = 4e-7 * math.pi
G = 9.81
CU_RESISTIVITY = 1.72e-8  # ohm*m
# Single field calibration factor on the dipole model, fitted so the default
# bank and coil produce a 250 mN peak in the bench configuration (no second
# magnet).
B_SCALE = 3.0622946


def awg_diameter(gauge: int) -> float:
    """Bare wire diameter in metres for an AWG gauge."""
    return 0.127e-3 * 92 ** ((36 - gauge) / 39)


@dataclass(frozen=True)
class Magnet:
    diameter: float = 1.0e-3
    height: float = 2.0e-3
    remanence: float = 1.45  # T, N52
    density: float = 7500.0  # kg/m^3

    @property
    def volume(self) -> float:
        return math.pi * self.diameter ** 2 / 4 * self.height

    @property
    def moment(self) -> float:
        """Dipole moment in A*m^2."""
        return self.remanence * self.volume / MU0

    @property
    def mass(self) -> float:
        return self.density * self.volume


@dataclass(frozen=True)
class ActuatorSpec:
    n_turns: int = 90
    coil_diameter: float = 2.1e-3
    coil_length: float = 2.1e-3
    wire_gauge: int = 41
    coil_resistance: float | None = None  # ohm; derived from wire length if None
    coil_inductance: float | None = None  # H; Wheeler's formula if None
    magnet: Magnet = field(default_factory=Magnet)
    moving_mass: float = 60e-6  # kg: magnet plus rod and reflector
    second_magnet_gap: float | None = 8.0e-3  # centre-to-centre at rest; None for bench tests
    tube_length: float = 10.5e-3
    rod_angle_theta: float = math.radians(45.0)
    rod_count: int = 4
    friction_coefficient: float = 2e-3  # N*s/m
    start_offset: float | None = None  # m; peak-coupling position if None
    b_scale: float = B_SCALE

    def __post_init__(self):
        for name in ("coil_diameter", "coil_length", "tube_length", "moving_mass"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.n_turns < 1 or self.rod_count < 1:
            raise DomainError("n_turns and rod_count must be >= 1")
        if not 0 < self.rod_angle_theta < math.pi / 2:
            raise DomainError("rod angle must lie in (0, pi/2)")
        if self.second_magnet_gap is not None and not self.second_magnet_gap > self.magnet.height:
            raise DomainError("second magnet gap must exceed the magnet height")
        if self.friction_coefficient < 0:
            raise DomainError("friction must be non-negative")

    @property
    def wire_length(self) -> float:
        return self.n_turns * math.pi * self.coil_diameter

    @property
    def resistance(self) -> float:
        if self.coil_resistance is not None:
            return self.coil_resistance
        area = math.pi * awg_diameter(self.wire_gauge) ** 2 / 4
        return CU_RESISTIVITY * self.wire_length / area

    @property
    def inductance(self) -> float:
        if self.coil_inductance is not None:
            return self.coil_inductance
        r_in = self.coil_diameter / 2 / 0.0254
        l_in = self.coil_length / 0.0254
        return r_in ** 2 * self.n_turns ** 2 / (9 * r_in + 10 * l_in) * 1e-6

    @property
    def x_start(self) -> float:
        return peak_coupling_offset(self) if self.start_offset is None else self.start_offset

    @property
    def x_top(self) -> float:
        """Magnet-centre height where the stroke ends."""
        top = self.tube_length - self.coil_length / 2 - self.magnet.height / 2
        if self.second_magnet_gap is not None:
            top = min(top, self.x_start + self.second_magnet_gap - self.magnet.height)
        return top


@dataclass(frozen=True)
class CapacitorBank:
    capacitance: float = 330e-6  # F, per capacitor
    esr: float = 0.5  # ohm, per capacitor
    initial_voltage: float = 5.5
    parallel_count: int = 2

    def __post_init__(self):
        if not self.capacitance > 0 or self.esr < 0 or self.initial_voltage < 0 or self.parallel_count < 1:
            raise DomainError("invalid capacitor bank")

    @property
    def total_capacitance(self) -> float:
        return self.capacitance * self.parallel_count

    @property
    def total_esr(self) -> float:
        return self.esr / self.parallel_count


def lorentz_force(b_radial: float, i_coil: float, l_coil: float, n_turns: int) -> float:
    """Axial force ``B * I * l * n``; ``l`` is the length of one turn."""
    return b_radial * i_coil * l_coil * n_turns


def radial_field(spec: ActuatorSpec, x) -> np.ndarray | float:
    """Radial field at the winding radius averaged over the coil length (T).

    Point-dipole model of the magnet, scaled by ``spec.b_scale``. Odd in
    ``x``: zero with the magnet centred in the coil.
    """
    a = spec.coil_diameter / 2
    half = spec.coil_length / 2
    c = MU0 * spec.magnet.moment / (4 * math.pi)
    x = np.asarray(x, dtype=float)
    z1, z2 = -half - x, half - x
    b = c * a * ((z1 ** 2 + a ** 2) ** -1.5 - (z2 ** 2 + a ** 2) ** -1.5) / spec.coil_length
    b = -spec.b_scale * b  # positive above the coil centre
    return float(b) if b.ndim == 0 else b


def peak_coupling_offset(spec: ActuatorSpec) -> float:
    """Offset above the coil centre where the averaged radial field peaks."""
    a = spec.coil_diameter / 2
    res = minimize_scalar(lambda x: -radial_field(spec, x),
                          bounds=(0.0, 3 * a + spec.coil_length), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def magnet_attraction(gap: float, magnet: Magnet = Magnet()) -> float:
    """Coaxial dipole-dipole attraction ``3 mu0 m^2 / (2 pi gap^4)`` in N."""
    if not gap > 0:
        raise DomainError("gap must be positive")
    return 3 * MU0 * magnet.moment ** 2 / (2 * math.pi * gap ** 4)


def _attraction_potential(gap, magnet):
    return -MU0 * magnet.moment ** 2 / (2 * math.pi * gap ** 3)


@dataclass(frozen=True)
class DischargeTrace:
    t: np.ndarray
    v_cap: np.ndarray
    i_coil: np.ndarray
    x_magnet: np.ndarray
    f_lorentz: np.ndarray
    f_attract: np.ndarray
    peak_force: float  # N, peak of the axial drive force
    time_to_peak: float
    energy_error: float  # max relative energy-balance violation
    t_stop: float | None  # time the magnet reached the stop
    energy: dict

    def csv_rows(self, stride: int = 1):
        yield ("t_us", "v_cap_V", "i_A", "x_mm", "f_mN")
        f = self.f_lorentz + self.f_attract
        for k in range(0, len(self.t), stride):
            yield (f"{self.t[k] * 1e6:.3f}", f"{self.v_cap[k]:.6f}", f"{self.i_coil[k]:.6f}",
                   f"{self.x_magnet[k] * 1e3:.6f}", f"{f[k] * 1e3:.6f}")


def simulate_discharge(spec: ActuatorSpec, bank: CapacitorBank, t_max: float = 0.05,
                       dt: float = 1e-6, energy_tol: float = 0.01) -> DischargeTrace:
    """Fixed-step RK4 transient of the bank discharging through the coil."""
    if dt > 10e-6 or dt <= 0:
        raise DomainError("dt must lie in (0, 10 us]")
    if t_max < 0.05:
        raise DomainError("t_max must be at least 50 ms")
    C = bank.total_capacitance
    R = bank.total_esr + spec.resistance
    Lc = spec.inductance
    m = spec.moving_mass
    c_f = spec.friction_coefficient
    turn = math.pi * spec.coil_diameter
    n = spec.n_turns
    x0, x_top = spec.x_start, spec.x_top
    has_b = spec.second_magnet_gap is not None
    gap0 = spec.second_magnet_gap
    mag = spec.magnet
    # closed-form field coefficients for speed in the inner loop
    a = spec.coil_diameter / 2
    half = spec.coil_length / 2
    kb = -spec.b_scale * MU0 * mag.moment / (4 * math.pi) * a / spec.coil_length * turn * n
    ka = 3 * MU0 * mag.moment ** 2 / (2 * math.pi)

    def coupling(x):
        z1, z2 = -half - x, half - x
        return kb * ((z1 * z1 + a * a) ** -1.5 - (z2 * z2 + a * a) ** -1.5)

    def attract(x):
        if not has_b:
            return 0.0
        g = gap0 - (x - x0)
        return ka / g ** 4

    def deriv(s, pinned):
        v_c, i, x, v = s[0], s[1], s[2], s[3]
        k = coupling(x)
        di = (v_c - i * R - k * v) / Lc
        if pinned:
            return (-i / C, di, 0.0, 0.0, i * i * R, 0.0)
        acc = (k * i + attract(x) - m * G - c_f * v) / m
        return (-i / C, di, v, acc, i * i * R, c_f * v * v)

    def rk4(s, h, pinned):
        k1 = deriv(s, pinned)
        s2 = [p + 0.5 * h * q for p, q in zip(s, k1)]
        k2 = deriv(s2, pinned)
        s3 = [p + 0.5 * h * q for p, q in zip(s, k2)]
        k3 = deriv(s3, pinned)
        s4 = [p + h * q for p, q in zip(s, k3)]
        k4 = deriv(s4, pinned)
        return [p + h / 6 * (q1 + 2 * q2 + 2 * q3 + q4) for p, q1, q2, q3, q4 in zip(s, k1, k2, k3, k4)]

    def net_up(s):
        return coupling(s[2]) * s[1] + attract(s[2]) - m * G

    steps = int(round(t_max / dt))
    out = np.zeros((steps + 1, 4))
    s = [bank.initial_voltage, 0.0, x0, 0.0, 0.0, 0.0]  # v_cap, i, x, v, joule, friction
    state = "base"  # base | free | top
    stop_loss = 0.0
    t_stop = None
    u0 = _attraction_potential(gap0, mag) if has_b else 0.0
    e0 = 0.5 * C * bank.initial_voltage ** 2
    worst = 0.0
    out[0] = s[:4]
    for k in range(steps):
        if state == "base" and net_up(s) > 0:
            state = "free"
        new = rk4(s, dt, state != "free")
        if state == "free" and new[2] < x0:
            # fell back to the base: stop there
            stop_loss += 0.5 * m * new[3] ** 2
            new[2], new[3] = x0, 0.0
            state = "base"
        elif state == "free" and new[2] >= x_top:
            lo, hi = 0.0, dt
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if rk4(s, mid, False)[2] < x_top:
                    lo = mid
                else:
                    hi = mid
            hit = rk4(s, hi, False)
            stop_loss += 0.5 * m * hit[3] ** 2
            hit[2], hit[3] = x_top, 0.0
            new = rk4(hit, dt - hi, True)
            state = "top"
            t_stop = k * dt + hi
        s = new
        out[k + 1] = s[:4]
        if e0 > 0:
            u = _attraction_potential(gap0 - (s[2] - x0), mag) if has_b else 0.0
            lhs = e0 - 0.5 * C * s[0] ** 2 - (u - u0)
            rhs = s[4] + s[5] + stop_loss + 0.5 * Lc * s[1] ** 2 + 0.5 * m * s[3] ** 2 + m * G * (s[2] - x0)
            worst = max(worst, abs(lhs - rhs) / e0)
    if worst > energy_tol:
        raise IntegratorError(f"energy balance violated by {worst:.3%}; reduce dt")
    t = np.arange(steps + 1) * dt
    x = out[:, 2]
    fl = np.array([coupling(xx) for xx in x]) * out[:, 1]
    fa = np.array([attract(xx) for xx in x])
    total = fl + fa
    j = int(np.argmax(total))
    energy = {"initial_J": e0, "joule_J": s[4], "friction_J": s[5], "stop_J": stop_loss,
              "kinetic_J": 0.5 * m * s[3] ** 2, "inductor_J": 0.5 * Lc * s[1] ** 2,
              "gravity_J": m * G * (s[2] - x0), "capacitor_J": 0.5 * C * s[0] ** 2}
    return DischargeTrace(t, out[:, 0], out[:, 1], x, fl, fa, float(total[j]), float(t[j]),
                          worst, t_stop, energy)


@dataclass(frozen=True)
class TransitionDecision:
    success: bool
    margin: float
    peak_vertical_force: float


def transition_check(trace: DischargeTrace, required_force: float, theta: float) -> TransitionDecision:
    """Compare the vertical force delivered through the rods with the requirement."""
    if not 0 < theta < math.pi / 2:
        raise DomainError("theta must lie in (0, pi/2)")
    fz = trace.peak_force * math.cos(theta)
    if required_force <= 0:
        return TransitionDecision(True, math.inf, fz)
    margin = fz / required_force
    return TransitionDecision(margin >= 1.0, margin, fz)


def bench_spec(**kw) -> ActuatorSpec:
    """Bench-test configuration: no second magnet."""
    return ActuatorSpec(second_magnet_gap=None, **kw)


def calibrate_b_scale(target: float = 0.25, bank: CapacitorBank = CapacitorBank(), dt: float = 1e-6) -> float:
    """Field scale that makes the bench peak force equal ``target`` newtons."""
    s = 1.0
    for _ in range(20):
        f = simulate_discharge(bench_spec(b_scale=s), bank, dt=dt).peak_force
        s_new = s * target / f
        if abs(s_new - s) < 1e-9 * s:
            return s_new
        s = s_new
    return s
