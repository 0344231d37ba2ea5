import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leafout.errors import DomainError
from leafout.power import (
    C_STORE, PHASES, V_ACTUATE, V_BROWNOUT, V_ENABLE, IrradianceProfile, PowerParams, PowerState,
    RadioModel, SolarModel, Telemetry, TriggerPolicy, _Source, _evolve, _hit_time, advance,
    altitude_to_pressure, charge_report, coil_charge_time, cold_start_time, evaluate_trigger,
    fit_irradiance_current, fsm_step, harvest_current, link_budget, pressure_to_altitude,
    simulate_power,
)

# standard atmosphere at 50 m above 101325 Pa, evaluated once and frozen
P_AT_50M = 100725.79300126254

FORWARD = {p: i for i, p in enumerate(PHASES)}


def assert_phase_order(events):
    """Each change moves one step forward or resets to dark/cold_start."""
    for (_, a), (_, b) in zip(events, events[1:]):
        if b in ("dark", "cold_start") and a not in ("dark", "cold_start"):
            continue
        if {a, b} == {"dark", "cold_start"}:
            continue
        assert FORWARD[b] == FORWARD[a] + 1, (a, b)


def test_harvest_dark_and_negative():
    assert harvest_current(0.0) == 0.0
    with pytest.raises(DomainError):
        harvest_current(-1.0)


@pytest.mark.parametrize("g", [50.0, 200.0, 800.0, 1200.0])
def test_four_cells_beat_two(g):
    assert harvest_current(g, 4) > harvest_current(g, 2)


def test_slope_recovery():
    s = SolarModel(4)
    g = np.linspace(100, 1200, 12)
    slope, intercept = fit_irradiance_current(g, [s.current(x) for x in g])
    assert abs(slope - s.coeffs[0]) < 1e-9
    assert abs(intercept - s.coeffs[1]) < 1e-9


def test_solar_validation():
    with pytest.raises(DomainError):
        SolarModel(3)
    with pytest.raises(DomainError):
        SolarModel(v_oc_cell=3.0)


def test_exact_evolution_matches_ode():
    from scipy.integrate import solve_ivp

    src = _Source(3e-3, 5.6, 20.0, 1e-4, 660e-6)
    sol = solve_ivp(lambda t, v: [src.rate(v[0])], (0, 8.0), [0.0], rtol=1e-10, atol=1e-12, max_step=1e-3)
    assert abs(_evolve(0.0, 8.0, src) - sol.y[0, -1]) < 1e-6
    t = _hit_time(0.0, 5.58, src)
    assert abs(_evolve(0.0, t, src) - 5.58) < 1e-9
    # discharge through the knee region
    dsrc = _Source(1e-4, 5.6, 20.0, 3e-3, 660e-6)
    sol = solve_ivp(lambda t, v: [dsrc.rate(v[0])], (0, 0.5), [5.59], rtol=1e-10, atol=1e-12, max_step=1e-4)
    assert abs(_evolve(5.59, 0.5, dsrc) - sol.y[0, -1]) < 1e-6


def test_bright_sequence():
    log = simulate_power(IrradianceProfile.constant(800.0), TriggerPolicy("timer", delay=2.0), 40.0, log_dt=0.5)
    phases = [p for _, p in log.events]
    assert phases == ["dark", "cold_start", "mcu_on", "charging_coil", "armed", "triggered"]
    assert_phase_order(log.events)
    assert log.final.v_trig and log.final.fired_at is not None


def test_dark_forever():
    log = simulate_power(IrradianceProfile.constant(0.0), TriggerPolicy(), 3600.0, log_dt=60.0)
    assert set(log.phase) == {"dark"}
    assert log.final.v_store == 0.0 and log.final.cold_starts == 0


def test_fsm_step_dt_limit():
    with pytest.raises(DomainError):
        fsm_step(PowerState(), 2e-3, 100.0, TriggerPolicy())
    s = fsm_step(PowerState(), 1e-3, 800.0, TriggerPolicy())
    assert s.phase == "cold_start" and s.v_store > 0


def test_fsm_step_matches_advance():
    pol = TriggerPolicy("timer", delay=0.5)
    s = PowerState(v_store=2.44)
    big = advance(s, 1.0, 600.0, pol)
    for _ in range(1000):
        s = fsm_step(s, 1e-3, 600.0, pol)
    assert s.phase == big.phase
    assert abs(s.v_store - big.v_store) < 1e-9 and abs(s.v_coil - big.v_coil) < 1e-9


def test_trigger_only_after_coil_ready():
    trace = []
    s = PowerState()
    pol = TriggerPolicy("timer", delay=0.0)
    for _ in range(60):
        before = s
        s = advance(s, 0.5, 800.0, pol, trace=trace)
        if s.v_trig and not before.v_trig:
            assert ("armed" in [p for _, p in trace])
    assert s.v_trig
    # the coil reached the actuation level immediately before firing
    k = [p for _, p in trace].index("armed")
    assert trace[k][0] == pytest.approx(s.fired_at)


def test_charge_monotone_constant_light():
    s = PowerState()
    pol = TriggerPolicy("radio")  # never arms without commands
    prev = s
    for _ in range(200):
        s = advance(s, 0.05, 500.0, pol)
        if s.phase == prev.phase:
            assert s.v_store >= prev.v_store - 1e-15
            assert s.v_coil >= prev.v_coil
        prev = s


def test_precharge_waits_for_condition():
    pol = TriggerPolicy("pressure", threshold=20.0, precharge=True)
    s = advance(PowerState(), 30.0, 800.0, pol, Telemetry(altitudes=(40.0, 39.0)))
    assert s.phase == "armed" and s.v_coil >= V_ACTUATE
    s = advance(s, 0.001, 800.0, pol, Telemetry(altitudes=(20.5, 19.5)))
    assert s.phase == "triggered"


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(st.lists(st.tuples(st.floats(0.01, 120.0), st.floats(0.0, 1500.0)), min_size=1, max_size=12),
       st.sampled_from(["timer", "radio"]), st.floats(0.0, 30.0), st.sampled_from([2, 4]))
def test_fsm_safety_random_profiles(segments, kind, delay, cells):
    times, values, t = [], [], 0.0
    for dur, g in segments:
        times.append(t)
        values.append(g)
        t += dur
    prof = IrradianceProfile(tuple(times), tuple(values))
    solar = SolarModel(cells)
    log = simulate_power(prof, TriggerPolicy(kind, delay=delay), t, log_dt=max(t / 20, 0.01), solar=solar)
    assert log.v_store.max() <= 2.6
    assert log.v_coil.max() <= solar.v_oc + 1e-12
    assert_phase_order(log.events)


def test_three_day_cold_starts():
    t0 = time.perf_counter()
    log = simulate_power(IrradianceProfile.day_night(3, 600.0), TriggerPolicy("radio"), 3 * 86400.0, log_dt=60.0)
    assert log.cold_starts == 3
    assert time.perf_counter() - t0 < 5.0
    assert_phase_order(log.events)


def test_determinism():
    prof = IrradianceProfile((0.0, 5.0, 40.0), (300.0, 900.0, 0.0))
    a = simulate_power(prof, TriggerPolicy("timer", delay=3.0), 200.0, log_dt=0.25)
    b = simulate_power(prof, TriggerPolicy("timer", delay=3.0), 200.0, log_dt=0.25)
    assert list(a.csv_rows()) == list(b.csv_rows())
    assert np.array_equal(a.v_store, b.v_store)


def test_csv_header():
    log = simulate_power(IrradianceProfile.constant(100.0), TriggerPolicy(), 2.0)
    rows = list(log.csv_rows())
    assert rows[0] == ("t_s", "v_store_V", "v_coil_V", "phase", "altitude_m", "packets_sent", "packets_delivered")
    assert len(rows) == 4


def test_profile_validation():
    with pytest.raises(DomainError):
        IrradianceProfile((1.0,), (1.0,))
    with pytest.raises(DomainError):
        IrradianceProfile((0.0, 0.0), (1.0, 2.0))
    with pytest.raises(DomainError):
        IrradianceProfile((0.0,), (-1.0,))


# --- cold start and coil charge -------------------------------------------

def test_cold_start_monotone_and_floor():
    g = np.geomspace(10, 2e4, 40)
    t = [cold_start_time(x) for x in g]
    assert all(b < a for a, b in zip(t, t[1:]))
    # far past sunlight levels the array is voltage-limited and the time flattens out
    t = [cold_start_time(x) for x in np.geomspace(2e4, 1e8, 20)]
    assert all(b <= a for a, b in zip(t, t[1:]))
    floor = 20.0 * C_STORE * math.log(5.6 / (5.6 - V_ENABLE))
    assert t[-1] > 0.9 * floor
    assert cold_start_time(1e12) >= floor * (1 - 1e-6)


def test_cold_start_never():
    assert cold_start_time(1.0) == math.inf


def test_cold_start_cells_and_capacitance():
    for g in (100.0, 500.0, 1000.0):
        assert cold_start_time(g, 4) <= cold_start_time(g, 2)
    t1 = cold_start_time(300.0, c_store=C_STORE)
    t2 = cold_start_time(300.0, c_store=2 * C_STORE)
    assert t2 == pytest.approx(2 * t1, rel=1e-12)
    i = harvest_current(300.0)
    assert t1 == pytest.approx(C_STORE * V_ENABLE / i, rel=1e-12)


def test_coil_charge_time():
    g = np.linspace(50, 1500, 20)
    t = [coil_charge_time(x) for x in g]
    assert all(b < a for a, b in zip(t, t[1:]))
    assert coil_charge_time(500.0, 4) < coil_charge_time(500.0, 2)
    assert coil_charge_time(500.0, capacitance=0.0) == 0.0
    assert coil_charge_time(1.0) == math.inf
    with pytest.raises(DomainError):
        coil_charge_time(500.0, capacitance=-1.0)


def test_charge_report_altitude():
    r = charge_report(200.0, descent_speed=2.0)
    assert r.total_s == pytest.approx(r.cold_start_s + r.coil_charge_s)
    assert r.min_drop_altitude_m == pytest.approx(2.0 * r.total_s)
    assert charge_report(1000.0).min_drop_altitude_m < charge_report(200.0).min_drop_altitude_m


# --- triggers ---------------------------------------------------------------

def test_timer_zero_fires_immediately():
    assert evaluate_trigger(TriggerPolicy("timer", delay=0.0), Telemetry(elapsed=0.0))
    assert not evaluate_trigger(TriggerPolicy("timer", delay=5.0), Telemetry(elapsed=4.9))


def test_pressure_descending_check():
    pol = TriggerPolicy("pressure", threshold=20.0)
    assert not evaluate_trigger(pol, Telemetry(altitudes=(19.0, 21.0)))
    assert evaluate_trigger(pol, Telemetry(altitudes=(21.0, 19.0)))
    assert not evaluate_trigger(pol, Telemetry(altitudes=(19.0,)))
    assert evaluate_trigger(TriggerPolicy("pressure", threshold=20.0, require_descending=False),
                            Telemetry(altitudes=(19.0,)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=60, unique=True), st.floats(0.0, 100.0))
def test_pressure_never_fires_ascending(samples, threshold):
    alts = sorted(samples)
    pol = TriggerPolicy("pressure", threshold=threshold)
    for k in range(1, len(alts) + 1):
        assert not evaluate_trigger(pol, Telemetry(altitudes=tuple(alts[:k])))


def test_radio_trigger():
    pol = TriggerPolicy("radio", command_id=7)
    assert evaluate_trigger(pol, Telemetry(commands=(7,)))
    assert not evaluate_trigger(pol, Telemetry(commands=(3,)))


def test_radio_latency_spread():
    radio = RadioModel()
    pol = TriggerPolicy("radio")
    lat = [radio.command_latency(pol, np.random.default_rng(s)) for s in range(2000)]
    assert 10.0 <= np.std(lat) <= 60.0
    assert all(x >= 1.0 for x in lat)


def test_policy_validation():
    with pytest.raises(DomainError):
        TriggerPolicy("laser")
    with pytest.raises(DomainError):
        TriggerPolicy("timer", delay=-1.0)
    with pytest.raises(DomainError):
        TriggerPolicy("radio", rx_window=2.0)


# --- radio link ---------------------------------------------------------------

def test_pdr_curve():
    r = RadioModel()
    assert r.pdr(0.0) == pytest.approx(1.0, abs=0.02)
    assert link_budget(60.0) >= 0.9
    d = np.linspace(10, 200, 100)
    p = [r.pdr(x) for x in d]
    assert all(b <= a for a, b in zip(p, p[1:]))
    assert all(0 <= x <= 1 for x in p)
    with pytest.raises(DomainError):
        r.pdr(-1.0)


def test_throughput():
    r = RadioModel()
    assert r.throughput(0.0) == 0.0
    assert r.throughput(1e5) == 50.0
    g = np.linspace(0, 2000, 50)
    tp = [r.throughput(x) for x in g]
    assert all(b >= a for a, b in zip(tp, tp[1:]))


def test_packet_budget():
    r = RadioModel()
    assert r.packet_budget(2.5, 1.0, 7.5e-3) >= 60.0
    assert r.packet_budget(V_BROWNOUT) == 0.0
    assert r.packet_budget(2.5, 0.5) > r.packet_budget(2.5, 1.0)


def test_store_drains_to_brownout_in_budget():
    pol = TriggerPolicy("radio")
    s = PowerState(v_store=2.5, phase="mcu_on")
    p = PowerParams(c_store=7.5e-3)
    s = advance(s, 60.0, 0.0, pol, params=p)
    assert s.phase == "mcu_on" and s.packets_sent == 60
    s = advance(s, 10.0, 0.0, pol, params=p)
    assert s.phase == "dark"


# --- barometry ---------------------------------------------------------------

def test_barometric():
    assert pressure_to_altitude(101325.0) == 0.0
    assert altitude_to_pressure(50.0) == pytest.approx(P_AT_50M, abs=1e-6)
    for h in (-20.0, 0.0, 50.0, 1234.5):
        assert abs(pressure_to_altitude(altitude_to_pressure(h)) - h) < 1e-9
    assert altitude_to_pressure(50.0, 90000.0) < 90000.0
    with pytest.raises(DomainError):
        pressure_to_altitude(0.0)
