"""Solar harvesting state machine, trigger policies, radio link and barometry.

Capacitor voltages are advanced exactly for piecewise-constant irradiance:
the array behaves as a current source proportional to irradiance, limited
near open circuit by a series resistance, so each capacitor follows
straight-line or exponential segments and threshold crossings are found in
closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

C_STORE = 7.5e-3 + 100e-6  # F, supercapacitor plus transient buffer (lumped)
V_CLAMP = 2.5  # regulator limit on the store
V_STORE_MAX = 2.6  # absolute rating of the store
V_ENABLE = 2.45  # MCU enable: clamp level minus 50 mV hysteresis
V_BROWNOUT = 2.0  # below this the 1.9 V rail drops out
V_ACTUATE = 5.5  # coil bank voltage needed to fire
I_SLEEP = 30e-6  # A
Q_PACKET = 30e-6  # C per transmitted packet
PACKET_RATE = 1.0  # Hz, low-power telemetry rate
MAX_PACKET_RATE = 50.0  # one packet per 20 ms

PHASES = ("dark", "cold_start", "mcu_on", "charging_coil", "armed", "triggered")
_OFF = ("dark", "cold_start")


@dataclass(frozen=True)
class SolarModel:
    """Linear irradiance-to-current map of a 2- or 4-cell array (2 cells in series per string)."""

    n_solar_cells: int = 2
    slope: float | None = None  # A per W/m^2
    intercept: float | None = None  # A
    v_oc_cell: float = 2.8
    series_resistance: float = 20.0  # ohm, sets the open-circuit roll-off

    _DEFAULTS = {2: (2.6e-6, -1.0e-5), 4: (5.2e-6, -1.0e-5)}

    def __post_init__(self):
        if self.n_solar_cells not in (2, 4):
            raise DomainError("n_solar_cells must be 2 or 4")
        if not 0 < self.v_oc_cell <= 2.8:
            raise DomainError("cell open-circuit voltage must lie in (0, 2.8] V")

    @property
    def coeffs(self):
        s, b = self._DEFAULTS[self.n_solar_cells]
        return (s if self.slope is None else self.slope, b if self.intercept is None else self.intercept)

    @property
    def v_oc(self) -> float:
        return 2 * self.v_oc_cell

    def current(self, irradiance: float) -> float:
        if irradiance < 0:
            raise DomainError("irradiance must be non-negative")
        s, b = self.coeffs
        return max(s * irradiance + b, 0.0)


def harvest_current(irradiance: float, n_solar_cells: int = 2, solar: SolarModel | None = None) -> float:
    """Short-circuit-limited array current in A."""
    solar = solar or SolarModel(n_solar_cells)
    return solar.current(irradiance)


def fit_irradiance_current(irradiance, current):
    """Least-squares (slope, intercept) of current against irradiance."""
    slope, intercept = np.polyfit(np.asarray(irradiance, float), np.asarray(current, float), 1)
    return float(slope), float(intercept)


# --- exact capacitor evolution ---------------------------------------------

@dataclass(frozen=True)
class _Source:
    current: float  # A, current-limited region
    v_oc: float
    r_s: float
    load: float  # A drawn from the capacitor
    c: float

    @property
    def v_knee(self):
        return self.v_oc - self.current * self.r_s

    @property
    def v_inf(self):
        return self.v_oc - self.load * self.r_s

    def rate(self, v):
        return (min(self.current, (self.v_oc - v) / self.r_s) - self.load) / self.c


def _evolve(v, t, src: _Source, vmax=math.inf):
    """Voltage after ``t`` seconds (clamped to [0, vmax])."""
    if src.c <= 0:
        return min(max(src.v_inf if src.current > src.load else 0.0, 0.0), vmax)
    while t > 0:
        if v >= vmax and src.rate(vmax) >= 0:
            return vmax
        vk = src.v_knee
        if v < vk or (v == vk and src.current <= src.load):
            slope = (src.current - src.load) / src.c
            if slope > 0:
                dt_k = (vk - v) / slope
                if vmax < vk:
                    dt_m = (vmax - v) / slope
                    if dt_m <= t:
                        return vmax
                if dt_k >= t:
                    return v + slope * t
                v, t = vk, t - dt_k
                continue
            return max(v + slope * t, 0.0)
        tau = src.r_s * src.c
        vi = src.v_inf
        if vi >= vk:
            nv = vi + (v - vi) * math.exp(-t / tau)
            return min(nv, vmax)
        # decaying through the knee into the linear region
        dt_k = tau * math.log((v - vi) / (vk - vi))
        if dt_k >= t:
            return vi + (v - vi) * math.exp(-t / tau)
        v, t = vk, t - dt_k
        slope = (src.current - src.load) / src.c
        return max(v + slope * t, 0.0)
    return v


def _hit_time(v, target, src: _Source):
    """Time until the voltage first reaches ``target`` (inf if never)."""
    if v == target:
        return 0.0
    if src.c <= 0:
        return 0.0 if (target > v) == (src.current > src.load) else math.inf
    up = target > v
    vk = src.v_knee
    t = 0.0
    if v < vk or (v == vk and src.current <= src.load):
        slope = (src.current - src.load) / src.c
        if slope == 0 or (slope > 0) != up:
            return math.inf
        if not up or target <= vk:
            return (target - v) / slope
        t, v = (vk - v) / slope, vk
    tau = src.r_s * src.c
    vi = src.v_inf
    if up:
        if target >= vi:
            return math.inf
        return t + tau * math.log((v - vi) / (target - vi))
    # falling inside the exponential region
    if target > vi and target >= vk:
        return tau * math.log((v - vi) / (target - vi))
    if vi >= vk:
        return math.inf
    dt_k = tau * math.log((v - vi) / (vk - vi))
    slope = (src.current - src.load) / src.c
    return dt_k + (target - vk) / slope


# --- policies and telemetry -------------------------------------------------

@dataclass(frozen=True)
class TriggerPolicy:
    kind: str = "timer"  # timer | pressure | radio
    delay: float = 0.0  # s after the MCU starts (timer)
    threshold: float = 20.0  # m (pressure)
    require_descending: bool = True
    command_id: int = 1
    rx_period: float = 1.0  # s
    rx_window: float = 5e-3  # s
    precharge: bool = False  # charge the coil first, fire when the condition holds

    def __post_init__(self):
        if self.kind not in ("timer", "pressure", "radio"):
            raise DomainError(f"unknown trigger policy {self.kind!r}")
        if self.delay < 0 or self.threshold < 0 or self.rx_period <= 0 or not 0 < self.rx_window <= self.rx_period:
            raise DomainError("policy delays, thresholds and windows must be non-negative and consistent")


@dataclass(frozen=True)
class Telemetry:
    elapsed: float = 0.0  # s since the MCU started
    altitudes: tuple = ()  # recent altitude samples, oldest first
    commands: tuple = ()  # ids received inside an open rx window


def evaluate_trigger(policy: TriggerPolicy, telemetry: Telemetry) -> bool:
    """Whether the policy's firing condition holds now."""
    if policy.kind == "timer":
        return telemetry.elapsed >= policy.delay
    if policy.kind == "pressure":
        if not telemetry.altitudes or telemetry.altitudes[-1] > policy.threshold:
            return False
        if not policy.require_descending:
            return True
        return len(telemetry.altitudes) >= 2 and telemetry.altitudes[-1] < telemetry.altitudes[-2]
    return policy.command_id in telemetry.commands


# --- the state machine -------------------------------------------------------

@dataclass(frozen=True)
class PowerParams:
    c_store: float = C_STORE
    c_coil: float = 660e-6
    v_actuate: float = V_ACTUATE
    i_sleep: float = I_SLEEP
    q_packet: float = Q_PACKET
    packet_rate: float = PACKET_RATE

    @property
    def i_load(self) -> float:
        return self.i_sleep + self.q_packet * self.packet_rate


@dataclass(frozen=True)
class PowerState:
    v_store: float = 0.0
    v_coil: float = 0.0
    phase: str = "dark"
    v_switch: bool = False
    v_trig: bool = False
    elapsed: float = 0.0
    mcu_elapsed: float = 0.0
    cold_starts: int = 0
    packets_sent: int = 0
    fired_at: float | None = None


def _sources(state, irradiance, solar, params):
    i_h = solar.current(irradiance)
    on = state.phase not in _OFF
    load = params.i_load if on else 0.0
    to_coil = state.phase == "charging_coil"
    store = _Source(0.0 if to_coil else i_h, solar.v_oc, solar.series_resistance, load, params.c_store)
    coil = _Source(i_h if to_coil else 0.0, solar.v_oc, solar.series_resistance, 0.0, params.c_coil)
    return store, coil, i_h


def _settle(state, irradiance, policy, telemetry, params, trace=None):
    """Apply zero-time transitions until the phase is stable."""
    for _ in range(8):
        ph = state.phase
        if ph in _OFF:
            state = replace(state, phase="cold_start" if irradiance > 0 else "dark")
            if state.v_store >= V_ENABLE:
                state = replace(state, phase="mcu_on", mcu_elapsed=0.0, cold_starts=state.cold_starts + 1)
        elif state.v_store < V_BROWNOUT:
            state = replace(state, phase="cold_start" if irradiance > 0 else "dark", v_switch=False,
                            v_trig=False, mcu_elapsed=0.0)
        elif ph == "mcu_on":
            cond = evaluate_trigger(policy, replace(telemetry, elapsed=state.mcu_elapsed))
            if policy.precharge or cond:
                state = replace(state, phase="charging_coil", v_switch=True)
        elif ph == "charging_coil" and state.v_coil >= params.v_actuate:
            state = replace(state, phase="armed", v_switch=False)
        elif ph == "armed":
            cond = evaluate_trigger(policy, replace(telemetry, elapsed=state.mcu_elapsed))
            if cond or not policy.precharge:
                state = replace(state, phase="triggered", v_trig=True, v_coil=0.0, fired_at=state.elapsed)
        if state.phase == ph:
            return state
        if trace is not None:
            trace.append((state.elapsed, state.phase))
    return state


def advance(state: PowerState, duration: float, irradiance: float, policy: TriggerPolicy,
            telemetry: Telemetry = Telemetry(), solar: SolarModel | None = None,
            params: PowerParams = PowerParams(), trace: list | None = None) -> PowerState:
    """Advance exactly over ``duration`` seconds of constant irradiance.

    Threshold crossings inside the interval (enable, brown-out, coil ready,
    timer expiry) are resolved in closed form. Telemetry-driven conditions
    are evaluated at the start of the interval. Phase changes are appended
    to ``trace`` as ``(t, phase)`` when a list is given.
    """
    if irradiance < 0:
        raise DomainError("irradiance must be non-negative")
    solar = solar or SolarModel()
    state = _settle(state, irradiance, policy, telemetry, params, trace)
    left = float(duration)
    for _ in range(64):
        if left <= 0:
            break
        store, coil, _ = _sources(state, irradiance, solar, params)
        ph = state.phase
        events = [left]
        if ph == "cold_start":
            events.append(_hit_time(state.v_store, V_ENABLE, store))
        if ph not in _OFF:
            events.append(_hit_time(state.v_store, V_BROWNOUT, store) if state.v_store > V_BROWNOUT else 0.0)
        if ph == "charging_coil":
            events.append(_hit_time(state.v_coil, params.v_actuate, coil))
        if policy.kind == "timer" and ph in ("mcu_on", "armed"):
            events.append(max(policy.delay - state.mcu_elapsed, 0.0) if state.mcu_elapsed < policy.delay else left)
        step = max(min(events), 0.0)
        v_store = _evolve(state.v_store, step, store, V_CLAMP)
        v_coil = _evolve(state.v_coil, step, coil)
        # snap onto thresholds reached by this step to avoid round-off chatter
        if ph == "cold_start" and step == events[1]:
            v_store = max(v_store, V_ENABLE)
        if ph not in _OFF and step < left and v_store <= V_BROWNOUT + 1e-12 and step == min(events):
            v_store = min(v_store, V_BROWNOUT - 1e-12)
        if ph == "charging_coil" and step < left and abs(v_coil - params.v_actuate) < 1e-9:
            v_coil = max(v_coil, params.v_actuate)
        on = ph not in _OFF
        mcu = state.mcu_elapsed + step if on else state.mcu_elapsed
        pk = state.packets_sent
        if on:
            pk += math.floor(mcu * params.packet_rate + 1e-9) - math.floor(state.mcu_elapsed * params.packet_rate + 1e-9)
        state = replace(state, v_store=v_store, v_coil=v_coil, elapsed=state.elapsed + step,
                        mcu_elapsed=mcu, packets_sent=pk)
        left -= step
        state = _settle(state, irradiance, policy, telemetry, params, trace)
    return state


def fsm_step(state: PowerState, dt: float, irradiance: float, policy: TriggerPolicy,
             telemetry: Telemetry = Telemetry(), solar: SolarModel | None = None,
             params: PowerParams = PowerParams(), trace: list | None = None) -> PowerState:
    """One FSM tick of at most 1 ms."""
    if not 0 < dt <= 1e-3:
        raise DomainError("fsm_step requires 0 < dt <= 1 ms")
    return advance(state, dt, irradiance, policy, telemetry, solar, params, trace)


@dataclass(frozen=True)
class IrradianceProfile:
    """Piecewise-constant irradiance: ``values[k]`` holds from ``times[k]``."""

    times: tuple
    values: tuple

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times or self.times[0] != 0:
            raise DomainError("profile needs matching times/values starting at t=0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("profile times must increase")
        if any(v < 0 for v in self.values):
            raise DomainError("irradiance must be non-negative")

    def at(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(k, 0)]

    @classmethod
    def constant(cls, value):
        return cls((0.0,), (float(value),))

    @classmethod
    def day_night(cls, days: int, day_irradiance: float = 800.0, day_hours: float = 12.0):
        times, values = [], []
        for d in range(days):
            times += [d * 86400.0, d * 86400.0 + day_hours * 3600.0]
            values += [day_irradiance, 0.0]
        return cls(tuple(times), tuple(values))


@dataclass(frozen=True)
class PowerLog:
    t: np.ndarray
    v_store: np.ndarray
    v_coil: np.ndarray
    phase: tuple
    packets_sent: np.ndarray
    events: tuple  # (t, phase) at every phase change
    final: PowerState

    @property
    def cold_starts(self) -> int:
        return self.final.cold_starts

    def csv_rows(self):
        yield ("t_s", "v_store_V", "v_coil_V", "phase", "altitude_m", "packets_sent", "packets_delivered")
        for k in range(len(self.t)):
            yield (f"{self.t[k]:.3f}", f"{self.v_store[k]:.6f}", f"{self.v_coil[k]:.6f}", self.phase[k], "",
                   str(int(self.packets_sent[k])), "")


def simulate_power(profile: IrradianceProfile, policy: TriggerPolicy, t_end: float, log_dt: float = 1.0,
                   solar: SolarModel | None = None, params: PowerParams = PowerParams(),
                   state: PowerState = PowerState()) -> PowerLog:
    """Run the FSM over ``profile`` and sample it every ``log_dt`` seconds."""
    solar = solar or SolarModel()
    breaks = sorted(set([t for t in profile.times if 0 < t < t_end]))
    n = int(math.floor(t_end / log_dt + 1e-9))
    samples = [k * log_dt for k in range(n + 1)]
    marks = sorted(set(samples) | set(breaks))
    out_t, vs, vc, ph, pk = [], [], [], [], []
    trace = [(0.0, state.phase)]
    t = 0.0
    sample_set = set(samples)
    for m in marks:
        if m > t:
            g = profile.at(t)
            state = advance(state, m - t, g, policy, solar=solar, params=params, trace=trace)
            t = m
        state = _settle(state, profile.at(t), policy, Telemetry(), params, trace)
        if m in sample_set:
            out_t.append(m)
            vs.append(state.v_store)
            vc.append(state.v_coil)
            ph.append(state.phase)
            pk.append(state.packets_sent)
    return PowerLog(np.array(out_t), np.array(vs), np.array(vc), tuple(ph), np.array(pk), tuple(trace), state)


def cold_start_time(irradiance: float, n_solar_cells: int = 2, c_store: float = C_STORE,
                    solar: SolarModel | None = None) -> float:
    """Seconds from zero charge to MCU enable (``inf`` if it never starts)."""
    solar = solar or SolarModel(n_solar_cells)
    src = _Source(solar.current(irradiance), solar.v_oc, solar.series_resistance, 0.0, c_store)
    return _hit_time(0.0, V_ENABLE, src)


def coil_charge_time(irradiance: float, n_solar_cells: int = 2, capacitance: float = 660e-6,
                     v_actuate: float = V_ACTUATE, solar: SolarModel | None = None) -> float:
    """Seconds to charge an empty coil bank to the actuation voltage."""
    if capacitance < 0:
        raise DomainError("capacitance must be non-negative")
    solar = solar or SolarModel(n_solar_cells)
    if capacitance == 0:
        return 0.0
    src = _Source(solar.current(irradiance), solar.v_oc, solar.series_resistance, 0.0, capacitance)
    return _hit_time(0.0, v_actuate, src)


@dataclass(frozen=True)
class ChargeReport:
    cold_start_s: float
    coil_charge_s: float
    total_s: float
    min_drop_altitude_m: float  # altitude lost while charging, at the given descent speed


def charge_report(irradiance: float, n_solar_cells: int = 2, capacitance: float = 660e-6,
                  descent_speed: float = 2.7) -> ChargeReport:
    cs = cold_start_time(irradiance, n_solar_cells)
    cc = coil_charge_time(irradiance, n_solar_cells, capacitance)
    tot = cs + cc
    return ChargeReport(cs, cc, tot, tot * descent_speed)


# --- radio -----------------------------------------------------------------

@dataclass(frozen=True)
class RadioModel:
    pdr_max: float = 0.99
    d50: float = 85.0  # m, distance of 50% delivery
    width: float = 6.0  # m, logistic roll-off scale
    max_rate: float = MAX_PACKET_RATE
    q_packet: float = Q_PACKET
    i_sleep: float = I_SLEEP
    cmd_period: float = 20e-3  # s between ground-station commands
    airtime: float = 0.376e-3  # s per command packet
    n_channels: int = 3
    sync_efficiency: float = 0.45  # fraction of windows where the scanner is actually on-channel

    def __post_init__(self):
        if not 0 <= self.pdr_max <= 1 or self.width <= 0:
            raise DomainError("invalid link curve")

    def pdr(self, distance: float) -> float:
        if distance < 0:
            raise DomainError("distance must be non-negative")
        return self.pdr_max / (1.0 + math.exp((distance - self.d50) / self.width))

    def throughput(self, irradiance: float, solar: SolarModel | None = None) -> float:
        """Sustainable packets per second from harvested current alone."""
        solar = solar or SolarModel()
        spare = solar.current(irradiance) - self.i_sleep
        return min(max(spare / self.q_packet, 0.0), self.max_rate)

    def packet_budget(self, v_store: float, rate: float = PACKET_RATE, c_store: float = 7.5e-3) -> float:
        """Seconds of transmission at ``rate`` from a store at ``v_store`` with no input."""
        if v_store <= V_BROWNOUT:
            return 0.0
        return c_store * (v_store - V_BROWNOUT) / (self.i_sleep + self.q_packet * rate)

    def capture_probability(self, policy: TriggerPolicy, distance: float = 0.0) -> float:
        """Chance that one rx window catches a command."""
        usable = max(policy.rx_window - self.airtime, 0.0)
        return min(usable / self.cmd_period, 1.0) / self.n_channels * self.sync_efficiency * self.pdr(distance)

    def command_latency(self, policy: TriggerPolicy, rng: np.random.Generator, distance: float = 0.0) -> float:
        """Seconds until the first captured command (windows every ``rx_period``)."""
        p = self.capture_probability(policy, distance)
        if p <= 0:
            return math.inf
        return float(rng.geometric(p)) * policy.rx_period


def link_budget(distance: float, radio: RadioModel = RadioModel()) -> float:
    return radio.pdr(distance)


# --- barometry ---------------------------------------------------------------

_T0 = 288.15  # K
_LAPSE = 0.0065  # K/m
_G0 = 9.80665
_M = 0.0289644  # kg/mol
_R = 8.3144598
_EXP = _G0 * _M / (_R * _LAPSE)


def altitude_to_pressure(h: float, p0: float = 101325.0) -> float:
    """Standard-atmosphere pressure (Pa) at height ``h`` above the reference."""
    if p0 <= 0:
        raise DomainError("reference pressure must be positive")
    return p0 * (1.0 - _LAPSE * h / _T0) ** _EXP


def pressure_to_altitude(p: float, p0: float = 101325.0) -> float:
    """Height (m) above the reference level ``p0`` for pressure ``p``."""
    if p <= 0 or p0 <= 0:
        raise DomainError("pressures must be positive")
    return _T0 / _LAPSE * (1.0 - (p / p0) ** (1.0 / _EXP))
