"""Command-line front end.

Each subcommand reads its section of the JSON config, runs the library and
writes its artifacts to ``--out``. Every output file starts with a metadata
line naming the tool version, seed and config hash.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .actuator import simulate_discharge, transition_check
from .config import (
    actuator_pair, build, config_hash, drop_scenario, irradiance_profile, load_config, no_extra,
    origami_spec, section, take,
)
from .design import CutPattern, FilmSpec, RootStructure, design_spec, export_cut_pattern, force_table
from .errors import ConfigError, DomainError, IntegratorError, SolverError
from .flight import fraction_policy, monte_carlo, paired_trials, run_drop
from .power import PowerParams, PowerState, SolarModel, TriggerPolicy, simulate_power
from .structure import build_leafout, default_psi_grid, energy_landscape, transition_force

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Run:
    """Per-invocation context: output directory, format and metadata."""

    def __init__(self, command, doc, seed, out, fmt, threads):
        self.command = command
        self.doc = doc
        self.seed = seed
        self.out = Path(out)
        self.fmt = fmt
        self.threads = threads
        self.meta = {"tool": "leafout", "version": __version__, "command": command, "seed": seed,
                     "config_sha256": config_hash(doc)}
        self.written = []

    @property
    def header(self) -> str:
        return "# " + " ".join(f"{k}={v}" for k, v in self.meta.items())

    def _write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        self.written.append(str(p))

    def table(self, stem, rows):
        """Write ``rows`` (header first) as CSV or JSON records per ``--format``."""
        rows = list(rows)
        if self.fmt == "json":
            head = rows[0]
            recs = [dict(zip(head, r)) for r in rows[1:]]
            self.json(stem, {"columns": list(head), "rows": recs})
            return
        buf = io.StringIO()
        buf.write(self.header + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerows(rows)
        self._write(f"{stem}.csv", buf.getvalue())

    def json(self, stem, payload):
        body = json.dumps(payload, indent=1, sort_keys=True, allow_nan=False, default=_jsonable)
        meta = json.dumps(self.meta, sort_keys=True)
        # metadata occupies the first line; the rest is the payload's members
        inner = body[1:].lstrip("\n")
        text = '{"meta": ' + meta + (",\n" + inner if inner.strip() != "}" else "}") + "\n"
        self._write(f"{stem}.json", text)

    def text(self, name, text):
        self._write(name, text)


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _num(x):
    """JSON-safe float (infinity and NaN become null)."""
    return None if x is None or not math.isfinite(x) else float(x)


# --- commands -------------------------------------------------------------------

def cmd_energy(run: Run):
    d = section(run.doc, "energy")
    spec = origami_spec(run.doc)
    num = take(d, "num", 161, "energy", int)
    sweep = take(d, "n_cells_sweep", None, "energy", list)
    payload = take(d, "payload_mass", 0.0, "energy")
    no_extra(d, "energy")
    if num < 3:
        raise ConfigError("must be at least 3", "energy.num")
    land = energy_landscape(spec, default_psi_grid(spec, num))
    run.table("energy", land.to_csv_rows())
    summary = {
        "n_cells": spec.n_cells,
        "barrier_psi_deg": _num(None if land.barrier_psi is None else math.degrees(land.barrier_psi)),
        "barrier_energy_J": _num(land.barrier_energy),
        "barrier_normalized": _num(land.barrier_normalized),
        "bistable": land.bistable,
        "minima_deg": [[math.degrees(p), float(e)] for p, e in land.minima],
        "gaps": list(land.gaps),
        "transition_force_N": _num(transition_force(spec, payload_mass=payload)) if land.bistable else None,
    }
    if sweep:
        rows = [("n_cells", "barrier_normalized")]
        for n in sweep:
            if not isinstance(n, int) or isinstance(n, bool):
                raise ConfigError("cell counts must be integers", "energy.n_cells_sweep")
            try:
                s = spec.replace(n_cells=n)
            except DomainError as e:
                raise ConfigError(str(e), "energy.n_cells_sweep") from None
            ln = energy_landscape(s, default_psi_grid(s, num))
            rows.append((str(n), "" if ln.barrier_normalized is None else f"{ln.barrier_normalized:.9e}"))
        run.table("barrier_table", rows)
    run.json("energy_summary", summary)


def cmd_pattern(run: Run):
    d = section(run.doc, "pattern")
    spec = origami_spec(run.doc)
    thick = take(d, "thickness_um", [7.5, 12.5, 25.0], "pattern", list)
    cuts = take(d, "cut_pct", [0.0, 13.0, 26.0, 39.0], "pattern", list)
    modulus = take(d, "youngs_modulus", 2.5e9, "pattern")
    pitch = take(d, "hole_pitch", 1e-3, "pattern")
    width = take(d, "hole_width", 1e-4, "pattern")
    svg_cut = take(d, "svg_cut_pct", 26.0, "pattern")
    roots = take(d, "roots", [False, True], "pattern", list)
    no_extra(d, "pattern")
    try:
        films = [FilmSpec(float(t) * 1e-6, modulus) for t in thick]
        cut_list = [CutPattern.uniform(float(c) / 100, hole_pitch=pitch, hole_width=width) for c in cuts]
        svg_pattern = CutPattern.uniform(svg_cut / 100, hole_pitch=pitch, hole_width=width)
        rows = force_table(films, cut_list, spec, roots=tuple(bool(r) for r in roots))
        svg = export_cut_pattern(build_leafout(spec), svg_pattern)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), "pattern") from None
    run.table("force_table", [("thickness_um", "cut_pct", "root", "force_mN")] +
              [(f"{r.thickness_um:g}", f"{r.cut_pct:g}", str(int(r.root)), f"{r.force_mN:.6f}") for r in rows])
    # the XML declaration is optional, so the metadata comment can lead the file
    body = svg.split("\n", 1)[1]
    run.text("pattern.svg", f"<!-- {run.header[2:]} -->\n" + body)


def cmd_actuate(run: Run):
    d = section(run.doc, "actuate")
    bench = take(d, "bench", False, "actuate", bool)
    t_max = take(d, "t_max", 0.05, "actuate")
    dt = take(d, "dt", 1e-6, "actuate")
    stride = take(d, "stride", 10, "actuate", int)
    req = take(d, "required_force", None, "actuate")
    act, bank = actuator_pair(d, "actuate")
    no_extra(d, "actuate")
    if stride < 1:
        raise ConfigError("must be at least 1", "actuate.stride")
    if bench:
        act = replace(act, second_magnet_gap=None)
    try:
        trace = simulate_discharge(act, bank, t_max=t_max, dt=dt)
    except DomainError as e:
        raise ConfigError(str(e), "actuate") from None
    if req is None:
        spec = design_spec(FilmSpec(12.5e-6), CutPattern(), RootStructure(True), origami_spec(run.doc))
        req = transition_force(spec)
    dec = transition_check(trace, req, act.rod_angle_theta)
    run.table("discharge", trace.csv_rows(stride))
    run.json("actuate_summary", {"peak_force_N": trace.peak_force, "time_to_peak_s": trace.time_to_peak,
                                 "energy_error": trace.energy_error, "required_force_N": req,
                                 "vertical_force_N": dec.peak_vertical_force, "margin": _num(dec.margin),
                                 "success": dec.success})


def cmd_power(run: Run):
    d = section(run.doc, "power")
    prof = irradiance_profile(d.pop("profile", 800.0), "power.profile")
    policy = build(TriggerPolicy, d.pop("policy", {}), "power.policy")
    solar = build(SolarModel, d.pop("solar", {}), "power.solar")
    params = build(PowerParams, d.pop("params", {}), "power.params")
    state = build(PowerState, d.pop("initial", {}), "power.initial")
    t_end = take(d, "t_end", 60.0, "power")
    log_dt = take(d, "log_dt", 0.1, "power")
    no_extra(d, "power")
    if not t_end > 0 or not log_dt > 0:
        raise ConfigError("t_end and log_dt must be positive", "power")
    log = simulate_power(prof, policy, t_end, log_dt, solar, params, state)
    run.table("power", log.csv_rows())
    run.json("power_summary", {"cold_starts": log.cold_starts, "fired_at_s": log.final.fired_at,
                               "final_phase": log.final.phase, "packets_sent": log.final.packets_sent,
                               "events": [[t, p] for t, p in log.events]})


def cmd_mission(run: Run):
    d = section(run.doc, "mission")
    trial = take(d, "trial", 0, "mission", int)
    sc = drop_scenario(d, "mission")
    tr = run_drop(sc, run.seed, trial)
    run.table("trajectory", tr.csv_rows())
    run.table("telemetry", tr.telemetry_rows())
    cap = tr.capability
    run.json("mission_summary", {
        "outcome": tr.outcome, "airborne_time_s": tr.airborne_time, "distance_m": tr.distance,
        "landing_m": list(tr.landing), "upright": tr.upright, "frac_tumbling": tr.frac_tumbling,
        "transition_time_s": tr.transition_time, "flips": tr.flips,
        "actuator_margin": None if cap is None else _num(cap.margin),
    })


def cmd_disperse(run: Run):
    d = section(run.doc, "disperse")
    n = take(d, "n_trials", 200, "disperse", int)
    paired = take(d, "paired", False, "disperse", bool)
    fractions = take(d, "fractions", None, "disperse", list)
    sc = drop_scenario(d.pop("scenario", {}), "disperse.scenario")
    no_extra(d, "disperse")
    if n < 1:
        raise ConfigError("must be at least 1", "disperse.n_trials")
    stats = monte_carlo(sc, n, run.seed, run.threads)
    run.table("dispersal", stats.csv_rows())
    run.json("landing_map", stats.landing_map())
    summary = {"scenario": stats.summary}
    if paired:
        tum, sta = paired_trials(sc, n, run.seed, run.threads)
        run.table("paired", [("trial", "tumbling_m", "stable_m")] +
                  [(str(k), f"{a:.4f}", f"{b:.4f}") for k, (a, b) in enumerate(zip(tum.distances, sta.distances))])
        summary["paired"] = {"mean_tumbling_m": float(tum.distances.mean()),
                             "mean_stable_m": float(sta.distances.mean()),
                             "ratio": float(tum.distances.mean() / sta.distances.mean())
                             if sta.distances.mean() > 0 else None}
    if fractions is not None:
        rows = [("fraction", "median_m", "mean_m", "mean_frac_tumbling")]
        for f in fractions:
            if not isinstance(f, (int, float)) or isinstance(f, bool) or not 0 <= f <= 1:
                raise ConfigError("fractions must lie in [0, 1]", "disperse.fractions")
            fs = replace(sc, policy=fraction_policy(f, sc.altitude, sc.params), initial_power="precharged",
                         fixed_mode=None)
            st = monte_carlo(fs, n, run.seed, run.threads).summary
            rows.append((f"{f:g}", f"{st['median']:.4f}", f"{st['mean']:.4f}", f"{st['mean_frac_tumbling']:.4f}"))
        run.table("fraction_sweep", rows)
    run.json("disperse_summary", summary)


COMMANDS = {"energy": cmd_energy, "pattern": cmd_pattern, "actuate": cmd_actuate, "power": cmd_power,
            "mission": cmd_mission, "disperse": cmd_disperse}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leafout", description="Leaf-out origami sensor simulator.")
    p.add_argument("--version", action="version", version=f"leafout {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"energy": "fold-energy landscape and barrier summary",
             "pattern": "cut-file SVG and transition-force table",
             "actuate": "capacitor discharge through the actuator coil",
             "power": "solar harvesting state-machine timeline",
             "mission": "single drop with trajectory and telemetry",
             "disperse": "Monte Carlo dispersal study and landing map"}
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", help="JSON scenario file (defaults when omitted)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        sp.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config) if args.config else {}
        seed = args.seed if args.seed is not None else doc.get("seed", 0)
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError("must lie in [0, 2^64)", "seed")
        if args.threads < 1:
            raise ConfigError("must be at least 1", "--threads")
        run = Run(args.command, doc, seed, args.out, args.format, args.threads)
        COMMANDS[args.command](run)
    except ConfigError as e:
        print(f"leafout: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, IntegratorError, FloatingPointError, ZeroDivisionError, OverflowError) as e:
        print(f"leafout: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as e:
        print(f"leafout: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in run.written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
