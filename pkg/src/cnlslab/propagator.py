"""Strang-split time evolution with conservation monitoring and blow-up guards."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import ModelParams, State
from .errors import NonFinite, ValidationError
from .functionals import FunctionalReport, report

log = logging.getLogger(__name__)

COMPLETED = "Completed"
BLOWUP = "BlowupDetected"
ABORTED = "Aborted"

TAIL_FLAG_TOL = 1e-6
BOUNDARY_FLAG_TOL = 1e-12


@dataclass
class StepperConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    snapshot_every: int = 10
    blowup_grad_factor: float = 1e4
    blowup_amp: float = 1e6
    dt_min: float = 1e-9
    drift_tol: float = 1e-10
    # per-step relative energy change that triggers halving; None disables it
    energy_drift_tol: Optional[float] = None
    max_steps: Optional[int] = None
    store_states: bool = False

    def __post_init__(self):
        if not (self.dt > self.dt_min > 0):
            raise ValidationError("dt", "need dt > dt_min > 0")
        if not self.t_end > 0:
            raise ValidationError("t_end", "must be positive")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ValidationError("snapshot_every", "must be a positive integer")
        if not (self.blowup_grad_factor > 1 and self.blowup_amp > 1):
            raise ValidationError("blowup_grad_factor", "factors must exceed 1")
        if not self.drift_tol > 0:
            raise ValidationError("drift_tol", "must be positive")


@dataclass
class Record:
    t: float
    report: FunctionalReport
    Q: float
    virial_rhs: float
    k_virial: float
    flags: tuple = ()


@dataclass
class Outcome:
    kind: str = COMPLETED
    t: Optional[float] = None
    reason: str = ""

    @property
    def blew_up(self) -> bool:
        return self.kind == BLOWUP

    def __str__(self):
        if self.kind == COMPLETED:
            return COMPLETED
        return f"{self.kind}(t={self.t}, {self.reason})"


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    outcome: Outcome = field(default_factory=Outcome)
    snapshots: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    steps: int = 0
    final_state: Optional[State] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        """Scalar series by record attribute or report field (summed over components)."""
        out = []
        for r in self.records:
            v = getattr(r, name) if hasattr(r, name) else getattr(r.report, name)
            out.append(float(np.sum(v)))
        return np.array(out)


# substeps


def _phase_multiplier(fields, params: ModelParams, r2):
    if params.mu == 0 or not np.any(params.a):
        return np.broadcast_to(r2, fields.shape)
    p = params.p
    amp = np.abs(fields)
    rho = amp**p
    coupled = np.tensordot(params.a, rho, axes=([1], [0]))
    if p == 2:
        own = np.ones_like(amp)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            own = np.where(amp > 0, amp ** (p - 2), 0.0)
    return r2 + params.mu * coupled * own


def _cis_neg(theta):
    """exp(-i theta) for real theta."""
    out = np.empty(theta.shape, dtype=complex)
    np.cos(theta, out=out.real)
    np.sin(theta, out=out.imag)
    np.negative(out.imag, out=out.imag)
    return out


def _phase(fields, params, r2, dt):
    return fields * _cis_neg(dt * _phase_multiplier(fields, params, r2))


def _check(fields, where):
    bad = ~np.isfinite(fields.reshape(fields.shape[0], -1)).all(axis=1)
    if bad.any():
        raise NonFinite(int(np.argmax(bad)), where)


def phase_step(state: State, params: ModelParams, dt: float) -> State:
    """Exact flow of the potential plus nonlinear multiplier; |u_j| is invariant."""
    _check(state.fields, "phase_step input")
    if dt == 0:
        return state.copy()
    return state.with_fields(_phase(state.fields, params, state.grid.r2, dt))


def kinetic_step(state: State, dt: float) -> State:
    """Free flow exp(i dt Lap) as the Fourier multiplier exp(-i |k|^2 dt)."""
    _check(state.fields, "kinetic_step input")
    if dt == 0:
        return state.copy()
    g = state.grid
    return state.with_fields(g.ifft(np.exp(-1j * dt * g.k2) * g.fft(state.fields)))


def strang_step(state: State, params: ModelParams, dt: float) -> State:
    half = phase_step(state, params, dt / 2)
    return phase_step(kinetic_step(half, dt), params, dt / 2)


class _Stepper:
    """Array-level Strang stepper with a cached kinetic propagator."""

    def __init__(self, grid, params):
        self.grid = grid
        self.params = params
        self._dt = None
        self._kin = None

    def __call__(self, fields, dt):
        g = self.grid
        if dt != self._dt:
            self._dt = dt
            self._kin = _cis_neg(dt * g.k2)
        f = _phase(fields, self.params, g.r2, dt / 2)
        f = g.ifft(self._kin * g.fft(f))
        return _phase(f, self.params, g.r2, dt / 2)


def _monitor_flags(state: State) -> tuple:
    g = state.grid
    flags = []
    spec = np.abs(g.fft(state.fields)) ** 2
    total = spec.sum()
    if total > 0:
        if spec[:, g.tail_mask].sum() / total > TAIL_FLAG_TOL:
            flags.append("under_resolved")
        dens = np.abs(state.fields) ** 2
        if dens[:, g.boundary_mask].sum() / dens.sum() > BOUNDARY_FLAG_TOL:
            flags.append("boundary_mass")
    return tuple(flags)


def _make_record(t, state, params) -> Record:
    rep = report(state, params)
    return Record(
        t=t,
        report=rep,
        Q=rep.variance,
        virial_rhs=params.d / 2 * rep.k_virial,
        k_virial=rep.k_virial,
        flags=_monitor_flags(state),
    )


def _energy_scale(rep: FunctionalReport, params) -> float:
    return 0.5 * rep.xi + abs(params.mu) / (2 * params.p) * rep.interaction


def evolve(state: State, params: ModelParams, cfg: StepperConfig) -> Trajectory:
    """Integrate to cfg.t_end or until a blow-up guard fires."""
    grid = state.grid
    step = _Stepper(grid, params)
    traj = Trajectory()
    u = state.fields.copy()
    t = 0.0
    dt = cfg.dt
    steps = 0

    def record(t, fields):
        s = State(grid, fields)
        rec = _make_record(t, s, params)
        traj.records.append(rec)
        for flag in rec.flags:
            traj.flags.setdefault(flag, t)
        if cfg.store_states:
            traj.snapshots.append((t, s.copy()))
        return rec

    try:
        first = record(0.0, u)
    except NonFinite as exc:
        traj.outcome = Outcome(ABORTED, 0.0, f"NonFinite: {exc}")
        return traj
    kin0 = float(np.sum(first.report.kinetic))
    mass_prev = first.report.mass
    energy_prev = first.report.energy
    escale = _energy_scale(first.report, params)
    eps_t = 1e-12 * max(cfg.t_end, 1.0)
    last_recorded = 0
    # t = t_base + n_since * dt keeps record times uniform between halvings
    t_base, n_since = 0.0, 0

    while t < cfg.t_end - eps_t:
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            traj.outcome = Outcome(ABORTED, t, "step budget exhausted")
            break
        h = min(dt, cfg.t_end - t)
        v = step(u, h)
        if not np.all(np.isfinite(v)):
            traj.outcome = Outcome(ABORTED, t, "NonFinite")
            break
        dens = np.abs(v) ** 2
        mass = grid.integrate(dens)
        with np.errstate(divide="ignore", invalid="ignore"):
            drift = np.where(mass_prev > 0, np.abs(mass - mass_prev) / mass_prev, 0.0)
        halve = bool(np.max(drift, initial=0.0) > cfg.drift_tol)
        energy = None
        if not halve and cfg.energy_drift_tol is not None and escale > 0:
            energy = report(State(grid, v), params).energy
            halve = abs(energy - energy_prev) / escale > cfg.energy_drift_tol
        if halve:
            t_base, n_since = t, 0
            dt /= 2
            if dt < cfg.dt_min:
                traj.outcome = Outcome(BLOWUP, t, "time step underflow")
                record(t, u)
                break
            log.debug("halving dt to %g at t=%g", dt, t)
            continue

        u = v
        n_since += 1
        t = t_base + n_since * dt if h == dt else t + h
        steps += 1
        mass_prev = mass
        if energy is not None:
            energy_prev = energy

        kin = float(np.sum(grid.grad_sq(u)))
        amp = float(np.abs(u).max())
        reason = ""
        if kin0 > 0 and kin > cfg.blowup_grad_factor * kin0:
            reason = f"gradient norm grew by {kin / kin0:.3g}"
        elif amp > cfg.blowup_amp:
            reason = f"amplitude {amp:.3g} exceeds {cfg.blowup_amp:g}"
        if reason:
            traj.outcome = Outcome(BLOWUP, t, reason)
            record(t, u)
            break
        if steps % cfg.snapshot_every == 0:
            record(t, u)
            last_recorded = steps
    else:
        traj.outcome = Outcome(COMPLETED, t)
        if last_recorded != steps:
            record(t, u)

    traj.steps = steps
    traj.final_state = State(grid, u)
    return traj
