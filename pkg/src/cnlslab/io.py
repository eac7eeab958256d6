"""Run configuration, newline-delimited diagnostics and binary snapshots."""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .domain import Grid, ModelParams, State
from .errors import (
    BadMagic,
    ParseError,
    SchemaMismatch,
    TruncatedPayload,
    ValidationError,
    VersionUnsupported,
)
from .functionals import FunctionalReport
from .groundstate import SolverConfig
from .propagator import Outcome, Record, StepperConfig, Trajectory

# configuration

INIT_KINDS = ("gaussian", "groundstate-file", "dilated-groundstate", "scaled")

# key -> (type, default); None default means required
SCHEMA = {
    "model.p": (float, None),
    "model.mu": (int, -1),
    "model.m": (int, 1),
    "model.coupling": (list, None),
    "grid.d": (int, None),
    "grid.n": (int, None),
    "grid.L": (float, None),
    "time.dt": (float, 1e-3),
    "time.t_end": (float, 1.0),
    "time.snapshot_every": (int, 10),
    "time.blowup_grad_factor": (float, 1e4),
    "time.blowup_amp": (float, 1e6),
    "time.drift_tol": (float, 1e-10),
    "time.energy_drift_tol": (float, 0.0),
    "time.max_steps": (int, 0),
    "init.kind": (str, "gaussian"),
    "init.amp": (list, [1.0]),
    "init.width": (list, [1.0]),
    "init.center": (list, []),
    "init.eps": (float, 0.0),
    "init.path": (str, ""),
    "init.lambda": (float, 1.0),
    "init.c": (float, 1.0),
    "solver.constraint": (list, [1.0, 0.0]),
    "solver.step": (float, 0.04),
    "solver.precond_shift": (float, 0.0),
    "solver.tol": (float, 1e-8),
    "solver.max_iter": (int, 20000),
    "scan.lambdas": (list, [1.01, 1.05, 1.1]),
    "scan.eps": (list, [1e-3]),
    "scan.count": (int, 200),
    "output.diagnostics": (str, ""),
    "output.snapshot": (str, ""),
    "seed": (int, 0),
}


@dataclass
class InitSpec:
    kind: str
    amp: list
    width: list
    center: list
    eps: float
    path: str
    lam: float
    c: float


@dataclass
class RunConfig:
    params: ModelParams
    grid: Grid
    init: InitSpec
    stepper: StepperConfig
    solver: SolverConfig
    outputs: dict
    seed: int
    scan: dict
    effective: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        """Full flat configuration including defaults."""
        return dict(self.effective)


def _flatten(table, prefix=""):
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def _line_of(text: str, key: str) -> int:
    """Best-effort line number of a dotted key in the document."""
    parts = key.split(".")
    leaf = re.escape(parts[-1])
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            section = header.group(1).strip()
            continue
        lhs = line.split("=", 1)[0].strip() if "=" in line else ""
        full = f"{section}.{lhs}" if section else lhs
        if full.replace(" ", "").replace('"', "") == key or (
            len(parts) == 1 and re.fullmatch(leaf, lhs)
        ):
            return i
    return 0


def _coerce(key, value, kind, text):
    line = _line_of(text, key)
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind is list:
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return [float(value)]
            if not isinstance(value, list):
                raise TypeError
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ParseError(line, key, f"expected {kind.__name__}") from None
    raise AssertionError(kind)


def parse_config(text: str) -> RunConfig:
    """Parse a TOML run configuration with flat dotted keys."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(getattr(exc, "lineno", 0), "", str(exc)) from None
    values = {}
    for key, value in _flatten(doc):
        if key not in SCHEMA:
            raise ParseError(_line_of(text, key), key, "unknown key")
        values[key] = _coerce(key, value, SCHEMA[key][0], text)
    for key, (_, default) in SCHEMA.items():
        if key not in values:
            if default is None:
                raise ParseError(0, key, "required key missing")
            values[key] = list(default) if isinstance(default, list) else default
    return build_config(values)


def build_config(v: dict) -> RunConfig:
    grid = Grid(v["grid.d"], v["grid.n"], v["grid.L"])
    params = ModelParams(d=v["grid.d"], m=v["model.m"], p=v["model.p"], mu=v["model.mu"], a=v["model.coupling"])
    kind = v["init.kind"]
    if kind not in INIT_KINDS:
        raise ValidationError("init.kind", f"must be one of {', '.join(INIT_KINDS)}")
    if kind == "groundstate-file" and not v["init.path"]:
        raise ValidationError("init.path", "groundstate-file needs a snapshot path")
    if kind == "dilated-groundstate" and not v["init.lambda"] > 0:
        raise ValidationError("init.lambda", "must be positive")
    init = InitSpec(
        kind=kind,
        amp=v["init.amp"],
        width=v["init.width"],
        center=v["init.center"] or None,
        eps=v["init.eps"],
        path=v["init.path"],
        lam=v["init.lambda"],
        c=v["init.c"],
    )
    stepper = StepperConfig(
        dt=v["time.dt"],
        t_end=v["time.t_end"],
        snapshot_every=v["time.snapshot_every"],
        blowup_grad_factor=v["time.blowup_grad_factor"],
        blowup_amp=v["time.blowup_amp"],
        drift_tol=v["time.drift_tol"],
        energy_drift_tol=v["time.energy_drift_tol"] or None,
        max_steps=v["time.max_steps"] or None,
    )
    if len(v["solver.constraint"]) != 2:
        raise ValidationError("solver.constraint", "expected [alpha, beta]")
    try:
        solver = SolverConfig(
            constraint=tuple(v["solver.constraint"]),
            step=v["solver.step"],
            precond_shift=v["solver.precond_shift"] or None,
            tol=v["solver.tol"],
            max_iter=v["solver.max_iter"],
        )
    except ValueError as exc:
        raise ValidationError("solver", str(exc)) from None
    outputs = {"diagnostics": v["output.diagnostics"], "snapshot": v["output.snapshot"]}
    for name, path in outputs.items():
        if path and not Path(path).resolve().parent.is_dir():
            raise ValidationError(f"output.{name}", f"directory of {path} does not exist")
    scan = {"lambdas": v["scan.lambdas"], "eps": v["scan.eps"], "count": v["scan.count"]}
    return RunConfig(params, grid, init, stepper, solver, outputs, v["seed"], scan, dict(v))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# diagnostics

DIAG_SCHEMA = "cnlslab.diagnostics"
DIAG_VERSION = 1
RECORD_FIELDS = (
    "t",
    "mass",
    "kinetic",
    "potential",
    "interaction",
    "energy",
    "action",
    "k_1_0",
    "k_1_m2overd",
    "Q",
    "virial_rhs",
    "flags",
)


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _dump(obj) -> str:
    """Compact JSON with floats at 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_dump(v)}" for k, v in obj.items()) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def record_to_dict(rec: Record) -> dict:
    r = rec.report
    return {
        "type": "record",
        "t": float(rec.t),
        "mass": [float(x) for x in np.atleast_1d(r.mass)],
        "kinetic": [float(x) for x in np.atleast_1d(r.kinetic)],
        "potential": [float(x) for x in np.atleast_1d(r.potential)],
        "interaction": r.interaction,
        "energy": r.energy,
        "action": r.action,
        "k_1_0": r.nehari,
        "k_1_m2overd": r.k_virial,
        "Q": rec.Q,
        "virial_rhs": rec.virial_rhs,
        "flags": list(rec.flags),
    }


def write_diagnostics(traj: Trajectory, path, config: dict | None = None) -> None:
    lines = [_dump({"schema": DIAG_SCHEMA, "version": DIAG_VERSION, "config": config or {}})]
    lines += [_dump(record_to_dict(r)) for r in traj.records]
    o = traj.outcome
    lines.append(_dump({"type": "outcome", "kind": o.kind, "t": o.t, "reason": o.reason, "steps": traj.steps}))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Diagnostics:
    header: dict
    trajectory: Trajectory

    @property
    def config(self) -> dict:
        return self.header.get("config", {})


def _record_from_dict(obj: dict, lineno: int) -> Record:
    missing = [k for k in RECORD_FIELDS if k not in obj]
    if missing:
        raise SchemaMismatch(lineno, f"record lacks {missing}")
    try:
        rep = FunctionalReport(
            mass=np.array(obj["mass"], dtype=float),
            kinetic=np.array(obj["kinetic"], dtype=float),
            potential=np.array(obj["potential"], dtype=float),
            interaction=float(obj["interaction"]),
            energy=float(obj["energy"]),
            action=float(obj["action"]),
            nehari=float(obj["k_1_0"]),
            k_virial=float(obj["k_1_m2overd"]),
        )
        return Record(
            t=float(obj["t"]),
            report=rep,
            Q=float(obj["Q"]),
            virial_rhs=float(obj["virial_rhs"]),
            k_virial=rep.k_virial,
            flags=tuple(str(f) for f in obj["flags"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(lineno, f"bad field value: {exc}") from None


def read_diagnostics(path) -> Diagnostics:
    lines = Path(path).read_text().splitlines()
    header = None
    traj = Trajectory()
    outcome_seen = False
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise SchemaMismatch(lineno, "not a JSON object") from None
        if not isinstance(obj, dict):
            raise SchemaMismatch(lineno, "not a JSON object")
        if header is None:
            if obj.get("schema") != DIAG_SCHEMA or obj.get("version") != DIAG_VERSION:
                raise SchemaMismatch(lineno, "missing or unsupported header")
            header = obj
            continue
        if outcome_seen:
            raise SchemaMismatch(lineno, "content after the outcome line")
        kind = obj.get("type")
        if kind == "record":
            traj.records.append(_record_from_dict(obj, lineno))
        elif kind == "outcome":
            try:
                traj.outcome = Outcome(str(obj["kind"]), obj["t"], str(obj["reason"]))
                traj.steps = int(obj.get("steps", 0))
            except KeyError as exc:
                raise SchemaMismatch(lineno, f"outcome lacks {exc}") from None
            outcome_seen = True
        else:
            raise SchemaMismatch(lineno, f"unknown line type {kind!r}")
    if header is None:
        raise SchemaMismatch(1, "empty file")
    if not outcome_seen:
        raise SchemaMismatch(len(lines), "missing outcome line")
    for rec in traj.records:
        for flag in rec.flags:
            traj.flags.setdefault(flag, rec.t)
    return Diagnostics(header, traj)


# snapshots

MAGIC = b"CNLS1"
SNAP_VERSION = 1
_HEAD = struct.Struct("<5sHBBIddb")


def write_snapshot(state: State, params: ModelParams, path, provenance: dict | None = None) -> None:
    """Binary snapshot; a JSON sidecar next to it records provenance."""
    g = state.grid
    if params.d != g.d or params.m != state.m:
        raise ValidationError("snapshot", "params do not match the state")
    head = _HEAD.pack(MAGIC, SNAP_VERSION, g.d, state.m, g.n, g.L, params.p, params.mu)
    coupling = np.ascontiguousarray(params.a, dtype="<f8").tobytes()
    fields = np.ascontiguousarray(state.fields, dtype="<c16").tobytes()
    Path(path).write_bytes(head + coupling + fields)
    if provenance is not None:
        sidecar = {"params": params.to_dict(), "grid": {"d": g.d, "n": g.n, "L": g.L}}
        sidecar.update(provenance)
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, default=str) + "\n")


def read_snapshot(path) -> tuple:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:5]!r}")
    if len(data) < _HEAD.size:
        raise TruncatedPayload(_HEAD.size, len(data))
    _, version, d, m, n, L, p, mu = _HEAD.unpack_from(data)
    if version != SNAP_VERSION:
        raise VersionUnsupported(f"snapshot version {version} (supported: {SNAP_VERSION})")
    expected = _HEAD.size + 8 * m * m + 16 * m * n**d
    if len(data) != expected:
        raise TruncatedPayload(expected, len(data))
    off = _HEAD.size
    a = np.frombuffer(data, dtype="<f8", count=m * m, offset=off).reshape(m, m)
    off += 8 * m * m
    fields = np.frombuffer(data, dtype="<c16", count=m * n**d, offset=off).reshape((m,) + (n,) * d)
    grid = Grid(d, n, L)
    params = ModelParams(d=d, m=m, p=p, mu=mu, a=a.copy())
    return State(grid, fields.astype(complex)), params
