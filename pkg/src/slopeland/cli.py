"""Command-line front end: ``land run | sweep | validate``.

Configuration files are flat ``section.key = value`` lines; ``#`` starts a
comment. Angles are given in degrees (keys ending in ``_deg``) and converted to
radians internally. ``auto`` is accepted where the value can be derived from
the rest of the scenario.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import so3
from .control import GainSet
from .dynamics import VehicleParams
from .errors import ConfigInvalid, EmptyLog, LandingError, ParseError, UnknownKey
from .sequencer import Corridor, LandingPad, ManeuverConfig
from .simulator import (FeedbackMode, Outcome, RunSummary, ScenarioConfig, SensorModel,
                        TrajectoryLog, run_scenario)

log = logging.getLogger("slopeland")

COLUMNS = ("t", "x", "y", "h", "vx", "vy", "vz", "roll_deg", "pitch_deg", "yaw_deg",
           "p", "q", "r", "d_coll", "d_pitch", "d_roll", "d_rud", "phase", "corridor_ok")
SWEEP_COLUMNS = ("pitch_deg", "outcome", "touchdown_pitch_deg", "touchdown_normal_speed",
                 "max_corridor_violation", "min_altitude", "error")

_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+\Z")


# --- configuration schema -------------------------------------------------
#
# Each key maps to (section, field, kind[, index]). Kinds:
#   num      plain float          deg      degrees <-> radians
#   num?     float or auto (None) deg?     degrees or auto (None)
#   int      integer              choice:a|b  one of the listed words
# An index addresses one component of an array field; "-" in front of it
# stores the negated value (altitude <-> NED z).

SCHEMA: dict[str, tuple] = {
    "vehicle.mass_kg": ("vehicle", "mass", "num"),
    "vehicle.k_du": ("vehicle", "k_du", "num"),
    "vehicle.k_dv": ("vehicle", "k_dv", "num"),
    "vehicle.k_zdot": ("vehicle", "k_zdot", "num"),
    "vehicle.k_coll": ("vehicle", "k_coll", "num"),
    "vehicle.g": ("vehicle", "g", "num"),
    "vehicle.tau_att_s": ("vehicle", "tau_att", "num"),
    "vehicle.k_act": ("vehicle", "k_act", "num"),
    "gains.v_max": ("gains", "v_max", "num"),
    "gains.lambda_p": ("gains", "lambda_p", "num"),
    "gains.lambda_z": ("gains", "lambda_z", "num"),
    "gains.lambda_u": ("gains", "lambda_u", "num"),
    "gains.lambda_v": ("gains", "lambda_v", "num"),
    "gains.k_iu": ("gains", "k_iu", "num"),
    "gains.k_iv": ("gains", "k_iv", "num"),
    "gains.lambda_vz": ("gains", "lambda_vz", "num"),
    "gains.k_ivz": ("gains", "k_ivz", "num"),
    "gains.k_phi": ("gains", "k_phi", "num"),
    "gains.k_theta": ("gains", "k_theta", "num"),
    "gains.k_psi": ("gains", "k_psi", "num"),
    "gains.pitch_filter_tau_s": ("gains", "pitch_filter_tau", "num"),
    "gains.theta_max_deg": ("gains", "theta_max", "deg"),
    "pad.x": ("pad", "center", "num", 0),
    "pad.y": ("pad", "center", "num", 1),
    "pad.h": ("pad", "center", "num", -2),
    "pad.pitch_deg": ("pad", "pitch", "deg"),
    "pad.heading_deg": ("pad", "heading", "deg"),
    "pad.side_m": ("pad", "side", "num"),
    "pad.bond_distance_m": ("pad", "bond_distance", "num"),
    "pad.bond_attitude_tol_deg": ("pad", "bond_attitude_tol", "deg"),
    "pad.offset_x": ("pad_offset", None, "num", 0),
    "pad.offset_y": ("pad_offset", None, "num", 1),
    "pad.offset_h": ("pad_offset", None, "num", -2),
    "corridor.x_start": ("corridor", "x_start", "num"),
    "corridor.depth_m": ("corridor", "depth", "num"),
    "corridor.width_start_m": ("corridor", "width_start", "num"),
    "corridor.width_end_m": ("corridor", "width_end", "num"),
    "corridor.height_m": ("corridor", "height", "num"),
    "corridor.y_center": ("corridor", "y_center", "num"),
    "maneuver.start_x": ("maneuver", "hover_start", "num", 0),
    "maneuver.start_y": ("maneuver", "hover_start", "num", 1),
    "maneuver.start_h": ("maneuver", "hover_start", "num", -2),
    "maneuver.start_time_s": ("maneuver", "start_time", "num"),
    "maneuver.approach_speed": ("maneuver", "approach_speed", "num"),
    "maneuver.x_switch": ("maneuver", "x_switch", "num?"),
    "maneuver.flare_pitch_deg": ("maneuver", "flare_pitch", "deg?"),
    "maneuver.flare_descent_m": ("maneuver", "flare_descent", "num"),
    "maneuver.t_abort_s": ("maneuver", "t_abort", "num?"),
    "maneuver.abort_margin_s": ("maneuver", "abort_margin", "num"),
    "maneuver.abort_climb_m": ("maneuver", "abort_climb", "num"),
    "maneuver.abort_level_time_s": ("maneuver", "abort_level_time", "num"),
    "maneuver.abort_x": ("maneuver", "abort_waypoint", "num?", 0),
    "maneuver.abort_y": ("maneuver", "abort_waypoint", "num?", 1),
    "maneuver.abort_h": ("maneuver", "abort_waypoint", "num?", -2),
    "maneuver.recover_radius_m": ("maneuver", "recover_radius", "num"),
    "maneuver.recover_speed": ("maneuver", "recover_speed", "num"),
    "maneuver.yaw_hold": ("maneuver", "yaw_hold", "choice:pad|approach"),
    "sensor.sigma_pos_m": ("sensor", "sigma_pos", "num"),
    "sensor.sigma_att_deg": ("sensor", "sigma_att", "deg"),
    "sensor.sigma_vel": ("sensor", "sigma_vel", "num"),
    "sensor.sigma_rate": ("sensor", "sigma_rate", "num"),
    "sensor.feedback": ("sensor", "feedback", "choice:direct|differencing"),
    "sensor.filter_tau_s": ("sensor", "filter_tau", "num"),
    "sensor.seed": ("sensor", "seed", "int"),
    "sim.dt_s": (None, "dt", "num"),
    "sim.t_max_s": (None, "t_max", "num"),
    "sim.decimation_s": (None, "decimation", "num"),
}


def _deg_text(rad: float) -> str:
    """Decimal degree string that converts back to exactly ``rad`` when one exists.

    Every angle that was itself parsed from degrees has such a string, which
    keeps parse -> serialize -> parse a fixed point.
    """
    d = math.degrees(rad)
    cands = [d]
    lo = hi = d
    for _ in range(4):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        cands += [lo, hi]
    for cand in cands:
        text = repr(cand)
        if math.radians(float(text)) == rad:
            return text
    return repr(d)


def _convert(key: str, kind: str, raw: str, line: int, col: int):
    if kind.endswith("?"):
        if raw == "auto":
            return None
        kind = kind[:-1]
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split("|")
        if raw not in options:
            raise ParseError(line, col, f"{key} must be one of {', '.join(options)}")
        return raw
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ParseError(line, col, f"{key} expects an integer, got {raw!r}") from None
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(line, col, f"{key} expects a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, col, f"{key} must be finite")
    return math.radians(value) if kind == "deg" else value


def parse_lines(text: bytes | str) -> dict[str, tuple[str, int, int]]:
    """Split config text into {key: (raw value, line, value column)}."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(1, exc.start + 1, "configuration is not valid UTF-8") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ParseError(lineno, col, "expected 'key = value'")
        k_part, v_part = body.split("=", 1)
        key = k_part.strip()
        key_col = len(k_part) - len(k_part.lstrip()) + 1
        if not _KEY_RE.match(key):
            raise ParseError(lineno, key_col, f"malformed key {key!r}")
        raw = v_part.strip()
        val_col = len(k_part) + 2 + (len(v_part) - len(v_part.lstrip()))
        if not raw:
            raise ParseError(lineno, val_col, f"missing value for {key}")
        if key in out:
            raise ParseError(lineno, key_col, f"duplicate key {key}")
        out[key] = (raw, lineno, val_col)
    return out


def config_from_values(values: dict[str, tuple[str, int, int]],
                       base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    sections = {
        "vehicle": {f.name: getattr(base.vehicle, f.name) for f in fields(VehicleParams)},
        "gains": {f.name: getattr(base.gains, f.name) for f in fields(GainSet)},
        "pad": {f.name: getattr(base.pad, f.name) for f in fields(LandingPad)},
        "corridor": {f.name: getattr(base.corridor, f.name) for f in fields(Corridor)},
        "maneuver": {f.name: getattr(base.maneuver, f.name) for f in fields(ManeuverConfig)},
        "sensor": {f.name: getattr(base.sensor, f.name) for f in fields(SensorModel)},
    }
    top = {"pad_offset": np.array(base.pad_offset, dtype=float), "dt": base.dt,
           "t_max": base.t_max, "decimation": base.decimation}
    for arr in (("pad", "center"), ("maneuver", "hover_start")):
        sections[arr[0]][arr[1]] = np.array(sections[arr[0]][arr[1]], dtype=float)
    wp = sections["maneuver"]["abort_waypoint"]
    waypoint = [None] * 3 if wp is None else [float(v) for v in wp]

    for key, (raw, line, col) in values.items():
        if key not in SCHEMA:
            raise UnknownKey(key, line)
        section, name, kind, *index = SCHEMA[key]
        value = _convert(key, kind, raw, line, col)
        if name == "abort_waypoint":
            i = index[0]
            waypoint[abs(i)] = None if value is None else (-value if i < 0 else value)
            continue
        if index:
            i = index[0]
            target = top["pad_offset"] if section == "pad_offset" else sections[section][name]
            target[abs(i)] = -value if i < 0 else value
        elif section is None:
            top[name] = value
        else:
            sections[section][name] = value

    if all(v is None for v in waypoint):
        sections["maneuver"]["abort_waypoint"] = None
    elif any(v is None for v in waypoint):
        raise ConfigInvalid("abort waypoint fully specified",
                            "set all of maneuver.abort_x/abort_y/abort_h or none")
    else:
        sections["maneuver"]["abort_waypoint"] = np.array(waypoint)
    sections["sensor"]["feedback"] = FeedbackMode(sections["sensor"]["feedback"])
    cfg = ScenarioConfig(
        vehicle=VehicleParams(**sections["vehicle"]),
        gains=GainSet(**sections["gains"]),
        pad=LandingPad(**sections["pad"]),
        pad_offset=top["pad_offset"],
        corridor=Corridor(**sections["corridor"]),
        maneuver=ManeuverConfig(**sections["maneuver"]),
        sensor=SensorModel(**sections["sensor"]),
        dt=top["dt"], t_max=top["t_max"], decimation=top["decimation"],
    )
    cfg.validate()
    return cfg


def parse_config(text: bytes | str, overrides: list[str] | None = None) -> ScenarioConfig:
    """Parse config text, apply ``key=value`` overrides, validate.

    Raises ParseError, UnknownKey or ConstraintViolation.
    """
    values = parse_lines(text)
    for i, item in enumerate(overrides or [], 1):
        more = parse_lines(item)
        for k, (raw, _, col) in more.items():
            # overrides report their position in the --set list as the line
            values[k] = (raw, -i, col)
    return config_from_values(values)


def config_values(cfg: ScenarioConfig) -> dict[str, str]:
    out = {}
    for key, (section, name, kind, *index) in SCHEMA.items():
        if section is None:
            value = getattr(cfg, name)
        elif section == "pad_offset":
            value = cfg.pad_offset
        else:
            value = getattr(getattr(cfg, section), name)
        if index and value is not None:
            i = index[0]
            value = -float(value[abs(i)]) if i < 0 else float(value[abs(i)])
            value = value + 0.0  # normalise -0.0
        if value is None:
            text = "auto"
        elif isinstance(value, FeedbackMode):
            text = value.value
        elif kind.startswith("choice:"):
            text = str(value)
        elif kind == "int":
            text = str(int(value))
        elif kind.startswith("deg"):
            text = _deg_text(float(value))
        else:
            text = repr(float(value))
        out[key] = text
    return out


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    section = None
    for key, text in config_values(cfg).items():
        head = key.split(".", 1)[0]
        if head != section:
            if section is not None:
                lines.append("")
            section = head
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


# --- trajectory output ----------------------------------------------------

def _g9(x: float) -> str:
    return f"{x + 0.0:.9g}"  # + 0.0 folds -0.0 into 0.0


def trajectory_rows(tlog: TrajectoryLog) -> list[dict]:
    """One dict per logged sample with the exported columns (true state)."""
    if not tlog.samples:
        raise EmptyLog("trajectory log has no samples")
    rows = []
    for smp in tlog.samples:
        s = smp.state
        e = so3.euler_unchecked(s.R)
        c = smp.command
        nums = (smp.t, s.position[0], s.position[1], -s.position[2],
                s.velocity[0], s.velocity[1], s.velocity[2],
                math.degrees(e.roll), math.degrees(e.pitch), math.degrees(e.yaw),
                s.omega[0], s.omega[1], s.omega[2],
                c.coll, c.pitch_cyclic, c.roll_cyclic, c.rudder)
        row = {k: float(_g9(float(v))) for k, v in zip(COLUMNS, nums)}
        row["phase"] = smp.phase.value
        row["corridor_ok"] = bool(smp.corridor_ok)
        rows.append(row)
    return rows


def emit_trajectory(tlog: TrajectoryLog, fmt: str = "csv") -> bytes:
    """Serialize the log. CSV columns are fixed (see COLUMNS); JSON mirrors them."""
    rows = trajectory_rows(tlog)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_g9(row[k]) for k in COLUMNS[:-2]]
                       + [row["phase"], "1" if row["corridor_ok"] else "0"])
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        doc = {"columns": list(COLUMNS), "samples": rows,
               "events": [{"t": float(_g9(e.t)), "from": e.source.value, "to": e.target.value}
                          for e in tlog.events]}
        return (json.dumps(doc, indent=None, separators=(",", ":")) + "\n").encode("utf-8")
    raise ValueError(f"unknown trajectory format {fmt!r}")


def summary_json(summary: RunSummary, tlog: TrajectoryLog | None = None) -> bytes:
    doc = summary.to_dict()
    if tlog is not None:
        doc["x_switch"] = tlog.x_switch
        doc["t_abort"] = tlog.t_abort
        doc["fault"] = tlog.fault
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_run(out: Path, tlog: TrajectoryLog, summary: RunSummary) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_bytes(emit_trajectory(tlog, "csv"))
    (out / "trajectory.json").write_bytes(emit_trajectory(tlog, "json"))
    (out / "summary.json").write_bytes(summary_json(summary, tlog))


# --- sweep ----------------------------------------------------------------

@dataclass
class SweepRow:
    pitch: float
    summary: RunSummary | None
    error: str | None = None

    def as_csv(self) -> list[str]:
        s = self.summary
        if s is None:
            return [_deg_text(self.pitch), "Error", "", "", "", "", self.error or ""]
        tp = "" if s.touchdown_pitch is None else _g9(math.degrees(s.touchdown_pitch))
        vn = "" if s.touchdown_normal_speed is None else _g9(s.touchdown_normal_speed)
        return [_g9(math.degrees(self.pitch)), s.outcome.value, tp, vn,
                _g9(s.max_corridor_violation), _g9(s.min_altitude), ""]


@dataclass
class SweepReport:
    rows: list[SweepRow]

    @property
    def exit_code(self) -> int:
        if any(r.summary is not None and r.summary.outcome is Outcome.CRASHED for r in self.rows):
            return 2
        if any(r.summary is None for r in self.rows):
            return 1
        return 0


def _sweep_one(args):
    cfg, pitch, out = args
    try:
        tlog, summary = run_scenario(cfg)
    except LandingError as exc:
        return SweepRow(pitch, None, f"{type(exc).__name__}: {exc}")
    if out is not None:
        write_run(Path(out), tlog, summary)
    return SweepRow(pitch, summary)


def run_sweep(base: ScenarioConfig, pitches: list[float], out_dir: Path | str | None = None,
              overrides: dict[int, list[str]] | None = None, workers: int | None = None) -> SweepReport:
    """Run ``base`` once per pad pitch (radians), all with the same seed.

    ``overrides`` maps a pitch index to extra ``key=value`` settings for that run.
    Per-run failures are collected in the report rather than raised.
    """
    if not pitches:
        raise ValueError("pitch list is empty")
    jobs = []
    base_values = {k: (v, 0, 0) for k, v in config_values(base).items()}
    for i, beta in enumerate(pitches):
        values = dict(base_values)
        values["pad.pitch_deg"] = (_deg_text(beta), 0, 0)
        for item in (overrides or {}).get(i, []):
            values.update(parse_lines(item))
        cfg = config_from_values(values)
        out = None if out_dir is None else str(Path(out_dir) / f"pitch_{math.degrees(beta):g}")
        jobs.append((cfg, beta, out))
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    report = SweepReport(rows)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())
        (Path(out_dir) / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    return report


# --- entry point ----------------------------------------------------------

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("LAND_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args) -> ScenarioConfig:
    text = Path(args.config).read_bytes() if args.config else b""
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"sensor.seed = {args.seed}")
    return parse_config(text, overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="land", description="Simulated landing on pitched surfaces.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="scenario configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--seed", type=int, help="sensor noise seed")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.add_argument("--out", default="out", help="output directory")
    s = sub.add_parser("sweep", help="run one scenario per pad pitch")
    common(s)
    s.add_argument("--pitches", default="10,25,40,60", help="comma-separated pad pitches in degrees")
    s.add_argument("--out", default="out", help="output directory")
    s.add_argument("--workers", type=int, help="parallel worker processes")
    v = sub.add_parser("validate", help="parse and validate a configuration, print it resolved")
    common(v)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (OSError, ParseError, UnknownKey, ConfigInvalid) as exc:
        print(f"land: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        sys.stdout.write(serialize_config(cfg))
        return 0

    if args.command == "run":
        try:
            tlog, summary = run_scenario(cfg)
            write_run(Path(args.out), tlog, summary)
        except OSError as exc:
            print(f"land: {exc}", file=sys.stderr)
            return 1
        except LandingError as exc:
            print(f"land: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        print(f"{summary.outcome.value}")
        return 2 if summary.outcome is Outcome.CRASHED else 0

    try:
        pitches = [math.radians(float(x)) for x in args.pitches.split(",") if x.strip()]
    except ValueError:
        print(f"land: bad --pitches {args.pitches!r}", file=sys.stderr)
        return 1
    if not pitches:
        print("land: --pitches is empty", file=sys.stderr)
        return 1
    try:
        report = run_sweep(cfg, pitches, args.out, workers=args.workers)
    except OSError as exc:
        print(f"land: {exc}", file=sys.stderr)
        return 1
    for row in report.rows:
        outcome = row.summary.outcome.value if row.summary else f"Error ({row.error})"
        print(f"{math.degrees(row.pitch):g} deg: {outcome}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
