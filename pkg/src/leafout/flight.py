"""Reduced-order descent dynamics, mid-air transitions and dispersal statistics.

The sensor falls at a mode-dependent terminal velocity and picks up a
mode-dependent fraction of the horizontal wind. Tumbling adds a zero-mean
lateral velocity fluctuation driven by the centre-of-pressure oscillation.
The power state machine decides when the actuator fires.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .actuator import ActuatorSpec, CapacitorBank, simulate_discharge, transition_check
from .design import CutPattern, FilmSpec, RootStructure, design_spec
from .errors import DomainError
from .power import (
    V_ACTUATE, V_CLAMP, PowerState, RadioModel, SolarModel, Telemetry, TriggerPolicy, advance,
    altitude_to_pressure, pressure_to_altitude,
)
from .structure import OrigamiSpec, transition_force

V_TUMBLE = 2.7  # m/s, 40 m in about 15 s
V_STABLE = 1.1  # m/s
COUPLING_TUMBLE = 0.8  # fraction of wind speed picked up laterally
COUPLING_STABLE = 0.11
UPRIGHT_TUMBLE = 0.52
UPRIGHT_STABLE = 0.87
COP_RANGE = 10e-3  # m, peak-to-peak centre-of-pressure excursion
COP_FREQUENCY = 10.0  # Hz
FLIP_RATE_4 = 1.5  # flips per second for the 4-cell design
TAU_VERTICAL = 0.2  # s, vertical speed relaxation
TAU_LATERAL = 0.3  # s, lateral velocity relaxation
TAU_FORCING = 0.5  # s, correlation time of the tumble fluctuation
MODES = ("tumbling", "stable")


def _rotation_weight(n):
    """Relative autorotation intensity, falling off with cell count."""
    return 1.0 / (n - 2)


def _drag_area(n):
    """Planform area (per L^2) times an effective drag coefficient that grows with autorotation."""
    area = 0.5 * n * math.sin(2 * math.pi / n)
    return area * (0.6 + 1.6 * _rotation_weight(n))


def flip_rate(n_cells: int) -> float:
    """Expected tumbling flips per second."""
    if not 3 <= n_cells <= 8:
        raise DomainError("n_cells must lie in [3, 8]")
    return FLIP_RATE_4 * _rotation_weight(n_cells) / _rotation_weight(4)


def terminal_velocity_table(cells=range(3, 9), v_ref: float = V_TUMBLE) -> dict:
    """Tumbling terminal velocity per cell count, referenced to the 4-cell value."""
    out = {}
    for n in cells:
        if not 3 <= n <= 8:
            raise DomainError("n_cells must lie in [3, 8]")
        out[n] = v_ref * math.sqrt(_drag_area(4) / _drag_area(n))
    return out


@dataclass(frozen=True)
class DescentModel:
    mode: str = "tumbling"
    terminal_velocity: float = V_TUMBLE
    lateral_coupling: float = COUPLING_TUMBLE
    cop_range: float = COP_RANGE
    cop_frequency: float = COP_FREQUENCY
    upright_prob: float = UPRIGHT_TUMBLE
    flip_rate: float = FLIP_RATE_4

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        if not self.terminal_velocity > 0 or not 0 <= self.upright_prob <= 1 or self.lateral_coupling < 0:
            raise DomainError("invalid descent model")

    @property
    def forcing_sigma(self) -> float:
        """Stationary std of the tumble velocity fluctuation (CoP velocity amplitude)."""
        if self.mode != "tumbling":
            return 0.0
        return 2 * math.pi * self.cop_frequency * self.cop_range / 2


@dataclass(frozen=True)
class DescentParams:
    tumbling: DescentModel = DescentModel()
    stable: DescentModel = DescentModel("stable", V_STABLE, COUPLING_STABLE, upright_prob=UPRIGHT_STABLE,
                                        flip_rate=0.0)

    def __post_init__(self):
        if self.tumbling.mode != "tumbling" or self.stable.mode != "stable":
            raise DomainError("descent params need one tumbling and one stable model")
        if not self.tumbling.lateral_coupling > self.stable.lateral_coupling:
            raise DomainError("tumbling must couple more strongly to the wind than stable flight")

    def model(self, mode):
        return self.tumbling if mode == "tumbling" else self.stable

    @classmethod
    def for_cells(cls, n_cells: int):
        v = terminal_velocity_table([n_cells])[n_cells]
        return cls(tumbling=DescentModel(terminal_velocity=v, flip_rate=flip_rate(n_cells)))


@dataclass(frozen=True)
class WindModel:
    mean_speed: float = 3.0  # m/s
    reversion_time: float = 5.0  # s
    volatility: float = 0.6  # m/s per sqrt(s)
    azimuth: float = 0.0  # rad, direction the wind blows towards

    def __post_init__(self):
        if self.mean_speed < 0 or self.reversion_time <= 0 or self.volatility < 0:
            raise DomainError("invalid wind model")

    @property
    def stationary_std(self) -> float:
        return self.volatility * math.sqrt(self.reversion_time / 2)

    def series(self, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
        """Exact OU discretisation of the speed, clipped at zero."""
        a = math.exp(-dt / self.reversion_time)
        s = self.stationary_std * math.sqrt(1 - a * a)
        xi = rng.standard_normal(n)
        w = np.empty(n)
        u = self.stationary_std * xi[0]
        for k in range(n):
            if k:
                u = a * u + s * xi[k]
            w[k] = u
        return np.maximum(self.mean_speed + w, 0.0)


@dataclass(frozen=True)
class FlightState:
    t: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    mode: str = "tumbling"
    phase: float = 0.0  # rad, tumble rotation angle
    flips: int = 0
    fx: float = 0.0  # tumble fluctuation velocity
    fy: float = 0.0


def _kinematics(t, x, y, z, vx, vy, vz, phase, fx, fy, model: DescentModel, wind, azimuth, dt, n1, n2):
    """One explicit step with unit-normal draws ``n1``, ``n2`` for the fluctuation."""
    sig = model.forcing_sigma
    if sig > 0:
        a = math.exp(-dt / TAU_FORCING)
        s = sig * math.sqrt(1 - a * a)
        fx, fy = a * fx + s * n1, a * fy + s * n2
    else:
        fx = fy = 0.0
    c = model.lateral_coupling * wind
    tx = c * math.cos(azimuth) + fx
    ty = c * math.sin(azimuth) + fy
    kl = dt / TAU_LATERAL
    kv = dt / TAU_VERTICAL
    vx += (tx - vx) * kl
    vy += (ty - vy) * kl
    vz += (-model.terminal_velocity - vz) * kv
    x += vx * dt
    y += vy * dt
    z += vz * dt
    phase += math.pi * model.flip_rate * dt
    return t + dt, x, y, z, vx, vy, vz, phase, fx, fy


def step_dynamics(state: FlightState, model: DescentModel, wind: float, dt: float,
                  rng: np.random.Generator | None = None, azimuth: float = 0.0) -> FlightState:
    """Advance the descent by ``dt`` (at most 5 ms)."""
    if not 0 < dt <= 5e-3:
        raise DomainError("step_dynamics requires 0 < dt <= 5 ms")
    n1, n2 = rng.standard_normal(2) if (rng is not None and model.forcing_sigma > 0) else (0.0, 0.0)
    t, x, y, z, vx, vy, vz, ph, fx, fy = _kinematics(state.t, state.x, state.y, state.z, state.vx, state.vy,
                                                     state.vz, state.phase, state.fx, state.fy, model, wind,
                                                     azimuth, dt, n1, n2)
    return FlightState(t, x, y, z, vx, vy, vz, model.mode, ph, int(ph // math.pi), fx, fy)


def landing_orientation(mode: str, rng: np.random.Generator, params: DescentParams = DescentParams()) -> bool:
    """Bernoulli upright draw with the mode's probability."""
    return bool(rng.random() < params.model(mode).upright_prob)


# --- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class DropScenario:
    altitude: float = 40.0
    n_cells: int = 4
    descent: DescentParams | None = None  # None: derived from n_cells
    wind: WindModel = WindModel()
    policy: TriggerPolicy = TriggerPolicy("pressure", threshold=2.0, precharge=True)
    fixed_mode: str | None = None  # "tumbling" or "stable" disables the actuator
    irradiance: float = 800.0
    n_solar_cells: int = 2
    initial_power: str = "charged"  # empty | charged | precharged
    actuator: ActuatorSpec = ActuatorSpec()
    bank: CapacitorBank = CapacitorBank()
    root: bool = True
    command_time: float | None = None  # s after release; None samples the radio latency
    dt: float = 5e-3
    sensor_period: float = 0.1  # s, pressure sampling for the trigger
    telemetry_period: float = 1.0  # s, packet interval
    pressure_noise_m: float = 1.0  # altitude-equivalent sigma
    p0: float = 101325.0
    radio: RadioModel = RadioModel()

    def __post_init__(self):
        if not self.altitude > 0:
            raise DomainError("altitude must be positive")
        if not 3 <= self.n_cells <= 8:
            raise DomainError("n_cells must lie in [3, 8]")
        if self.fixed_mode not in (None, *MODES):
            raise DomainError(f"unknown fixed_mode {self.fixed_mode!r}")
        if self.initial_power not in ("empty", "charged", "precharged"):
            raise DomainError(f"unknown initial_power {self.initial_power!r}")
        if not 0 < self.dt <= 5e-3:
            raise DomainError("dt must lie in (0, 5 ms]")
        if self.sensor_period < self.dt or self.telemetry_period < self.dt or self.pressure_noise_m < 0:
            raise DomainError("sensor and telemetry periods must be at least dt")

    @property
    def params(self) -> DescentParams:
        return self.descent or DescentParams.for_cells(self.n_cells)


@dataclass(frozen=True)
class Capability:
    """Whether the actuator can flip the structure, and how long its stroke takes."""

    success: bool
    margin: float
    delay: float
    required_force: float


@lru_cache(maxsize=32)
def _capability(n_cells, root, actuator, bank):
    spec = design_spec(FilmSpec(12.5e-6), CutPattern(), RootStructure(enabled=root), OrigamiSpec(n_cells))
    need = transition_force(spec)
    trace = simulate_discharge(actuator, bank)
    d = transition_check(trace, need, actuator.rod_angle_theta)
    return Capability(d.success, d.margin, trace.time_to_peak, need)


def transition_capability(sc: DropScenario) -> Capability:
    return _capability(sc.n_cells, sc.root, sc.actuator, sc.bank)


def fraction_policy(fraction: float, altitude: float, params: DescentParams = DescentParams()) -> TriggerPolicy:
    """Precharged timer that spends ``fraction`` of the airborne time tumbling.

    Pair it with ``initial_power="precharged"`` so a zero delay fires at release.
    """
    if not 0 <= fraction <= 1:
        raise DomainError("fraction must lie in [0, 1]")
    vt, vs = params.tumbling.terminal_velocity, params.stable.terminal_velocity
    if fraction == 1:
        return TriggerPolicy("timer", delay=2 * altitude / vt + 60.0, precharge=True)
    delay = fraction * altitude / ((1 - fraction) * vs + fraction * vt)
    return TriggerPolicy("timer", delay=delay, precharge=True)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    pos: np.ndarray  # (k, 3)
    mode: tuple
    phase: tuple  # FSM phase
    telemetry: tuple  # (t, altitude_m, delivered)
    landing: tuple  # (x, y)
    distance: float
    upright: bool
    airborne_time: float
    frac_tumbling: float
    outcome: str  # transitioned | no-transition | stable-only | tumbling-only
    transition_time: float | None
    flips: int
    capability: Capability | None

    def csv_rows(self):
        yield ("t_s", "x_m", "y_m", "z_m", "mode", "phase")
        for k in range(len(self.t)):
            x, y, z = self.pos[k]
            yield (f"{self.t[k]:.3f}", f"{x:.4f}", f"{y:.4f}", f"{z:.4f}", self.mode[k], self.phase[k])

    def telemetry_rows(self):
        yield ("t_s", "v_store_V", "v_coil_V", "phase", "altitude_m", "packets_sent", "packets_delivered")
        sent = delivered = 0
        for t, alt, ok, vs, vc, ph in self.telemetry:
            sent += 1
            delivered += int(ok)
            yield (f"{t:.3f}", f"{vs:.6f}", f"{vc:.6f}", ph, f"{alt:.3f}", str(sent), str(delivered))


def _streams(seed, trial):
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]  # wind, tumble, sensors, landing


def _initial_power(sc):
    if sc.initial_power == "empty":
        return PowerState()
    coil = V_ACTUATE if sc.initial_power == "precharged" else 0.0
    return PowerState(v_store=V_CLAMP, v_coil=coil, phase="mcu_on", cold_starts=1)


def run_drop(sc: DropScenario, seed: int = 0, trial: int = 0, capability: Capability | None = None,
             wind_series: np.ndarray | None = None, record: bool = True) -> Trajectory:
    """Release in tumbling mode and fly until touchdown."""
    r_wind, r_tumble, r_sense, r_land = _streams(seed, trial)
    params = sc.params
    dt = sc.dt
    horizon = sc.altitude / params.stable.terminal_velocity * 1.5 + 10.0
    n_max = int(horizon / dt) + 1
    if wind_series is None:
        wind_series = sc.wind.series(n_max, dt, r_wind)
    noise = r_tumble.standard_normal((n_max, 2)).tolist()
    wind = wind_series.tolist()

    mode = sc.fixed_mode or "tumbling"
    fixed = sc.fixed_mode is not None
    cap = None if fixed else (capability or transition_capability(sc))
    if sc.policy.kind == "radio":
        cmd_t = sc.command_time if sc.command_time is not None else sc.radio.command_latency(sc.policy, r_sense)
    else:
        cmd_t = math.inf
    sig_p = altitude_to_pressure(0.0, sc.p0) - altitude_to_pressure(sc.pressure_noise_m, sc.p0)
    solar = SolarModel(sc.n_solar_cells)
    power = _initial_power(sc)

    t = x = y = vx = vy = vz = ph = fx = fy = 0.0
    z = sc.altitude
    alts = []
    switch_at = math.inf
    transition_time = None
    t_tumble = 0.0
    ts, ps, ms, fs, tel = [], [], [], [], []
    steps_per_sense = max(int(round(sc.sensor_period / dt)), 1)
    steps_per_tel = max(int(round(sc.telemetry_period / dt)), 1)
    rec_stride = steps_per_sense
    k = 0
    landed = None
    while k < n_max - 1:
        if k % steps_per_sense == 0:
            if record and k % rec_stride == 0:
                ts.append(t)
                ps.append((x, y, z))
                ms.append(mode)
                fs.append(power.phase)
            alt = pressure_to_altitude(altitude_to_pressure(max(z, 0.0), sc.p0) + sig_p * r_sense.standard_normal(),
                                       sc.p0)
            alts = (alts + [alt])[-2:]
            if k % steps_per_tel == 0 and power.phase not in ("dark", "cold_start"):
                d = math.sqrt(x * x + y * y + z * z)
                tel.append((t, alt, bool(r_sense.random() < sc.radio.pdr(d)), power.v_store, power.v_coil,
                            power.phase))
            if not fixed:
                cmds = (sc.policy.command_id,) if t >= cmd_t else ()
                fired = power.v_trig
                power = advance(power, sc.sensor_period, sc.irradiance, sc.policy,
                                Telemetry(power.mcu_elapsed, tuple(alts), cmds), solar)
                if power.v_trig and not fired and cap.success and switch_at == math.inf:
                    switch_at = t + (power.fired_at - (power.elapsed - sc.sensor_period)) + cap.delay
        if mode == "tumbling" and t >= switch_at:
            mode = "stable"
            transition_time = t
        model = params.model(mode)
        n1, n2 = noise[k]
        t0, z0, x0, y0 = t, z, x, y
        t, x, y, z, vx, vy, vz, ph, fx, fy = _kinematics(t, x, y, z, vx, vy, vz, ph, fx, fy, model, wind[k],
                                                         sc.wind.azimuth, dt, n1, n2)
        if mode == "tumbling":
            t_tumble += dt
        k += 1
        if z <= 0.0:
            s = z0 / (z0 - z)
            landed = (t0 + s * dt, x0 + s * (x - x0), y0 + s * (y - y0))
            if mode == "tumbling":
                t_tumble -= (1 - s) * dt
            break
    if landed is None:
        raise DomainError("drop did not land within the simulation horizon")
    t_land, lx, ly = landed
    if record:
        ts.append(t_land)
        ps.append((lx, ly, 0.0))
        ms.append(mode)
        fs.append(power.phase)
    upright = landing_orientation(mode, r_land, params)
    if fixed:
        outcome = f"{sc.fixed_mode}-only"
    else:
        outcome = "transitioned" if transition_time is not None else "no-transition"
    return Trajectory(np.array(ts), np.array(ps).reshape(-1, 3), tuple(ms), tuple(fs), tuple(tel), (lx, ly),
                      math.hypot(lx, ly), upright, t_land, min(t_tumble / t_land, 1.0), outcome,
                      transition_time, int(ph // math.pi), cap)


# --- Monte Carlo ---------------------------------------------------------------

@dataclass(frozen=True)
class DispersalStats:
    distances: np.ndarray
    frac_tumbling: np.ndarray
    upright: np.ndarray
    landings: np.ndarray  # (n, 2)
    airborne: np.ndarray
    outcomes: tuple

    @property
    def summary(self) -> dict:
        d = self.distances
        return {"n": int(d.size), "mean": float(d.mean()), "median": float(np.median(d)),
                "p10": float(np.quantile(d, 0.1)), "p90": float(np.quantile(d, 0.9)), "max": float(d.max()),
                "upright_fraction": float(self.upright.mean()), "mean_frac_tumbling": float(self.frac_tumbling.mean())}

    def csv_rows(self):
        yield ("trial", "distance_m", "frac_tumbling", "upright")
        for k in range(self.distances.size):
            yield (str(k), f"{self.distances[k]:.4f}", f"{self.frac_tumbling[k]:.4f}", str(int(self.upright[k])))

    def landing_map(self) -> dict:
        return {"origin": [0.0, 0.0], "units": "m",
                "landings": [{"trial": k, "x": round(float(x), 4), "y": round(float(y), 4),
                              "upright": bool(self.upright[k])} for k, (x, y) in enumerate(self.landings)]}

    def landing_map_json(self) -> str:
        return json.dumps(self.landing_map(), indent=1, sort_keys=True) + "\n"


def monte_carlo(sc: DropScenario, n_trials: int, seed: int, threads: int = 1) -> DispersalStats:
    """Independent trials with substreams from (seed, trial); order-independent."""
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    cap = None if sc.fixed_mode else transition_capability(sc)

    def one(k):
        return run_drop(sc, seed, k, cap, record=False)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            trs = list(ex.map(one, range(n_trials)))
    else:
        trs = [one(k) for k in range(n_trials)]
    return _stats(trs)


def _stats(trs):
    return DispersalStats(np.array([tr.distance for tr in trs]), np.array([tr.frac_tumbling for tr in trs]),
                          np.array([tr.upright for tr in trs]), np.array([tr.landing for tr in trs]),
                          np.array([tr.airborne_time for tr in trs]), tuple(tr.outcome for tr in trs))


def paired_trials(sc: DropScenario, n_trials: int, seed: int, threads: int = 1):
    """Tumbling-only and stable-only drops sharing each trial's wind realisation."""
    tum = replace(sc, fixed_mode="tumbling")
    sta = replace(sc, fixed_mode="stable")
    n_max = int((sc.altitude / sc.params.stable.terminal_velocity * 1.5 + 10.0) / sc.dt) + 1

    def one(k):
        w = sc.wind.series(n_max, sc.dt, _streams(seed, k)[0])
        return (run_drop(tum, seed, k, wind_series=w, record=False),
                run_drop(sta, seed, k, wind_series=w, record=False))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            pairs = list(ex.map(one, range(n_trials)))
    else:
        pairs = [one(k) for k in range(n_trials)]
    return _stats([p[0] for p in pairs]), _stats([p[1] for p in pairs])
