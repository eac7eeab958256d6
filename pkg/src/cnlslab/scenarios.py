"""Scenario runners: potential-well classification, the global/blow-up
dichotomy, variance diagnostics, instability scans and the small-data run.

Every runner returns a plain report object. Outcomes that contradict the
theory raise ``ContradictionReport`` carrying that report, so a failing
scenario is never silent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import Grid, ModelParams, State, gaussian_state, perturbed_state
from .errors import ContradictionReport, InsufficientSnapshots, ValidationError
from .functionals import (
    FunctionalReport,
    dilate_l2,
    gn_ratio,
    k_from_report,
    report,
    virial_rhs_from_report,
)
from .groundstate import GroundState, _check_admissible, nehari_scale, p1_threshold
from .propagator import ABORTED, BLOWUP, COMPLETED, StepperConfig, Trajectory, evolve
from .domain import sigma_norm_sq

INSIDE_PLUS = "InsideAPlus"
INSIDE_MINUS = "InsideAMinus"
OUTSIDE = "OutsideWell"
INCONSISTENT = "Inconsistent"

GLOBAL = "Global"
BLOWUP_OBSERVED = "Blowup"
INCONCLUSIVE = "Inconclusive"

KINETIC_SLACK = 1.1


def well_pairs(params: ModelParams) -> list:
    """Nehari plus one pair with beta > 0, both inside the admissible set.

    The virial pair (1, -2/d) is left out on purpose: with the trap its
    constraint level is zero, so its sign is tracked separately instead.
    """
    beta = min(1.0, params.p - 1.0)
    return [(1.0, 0.0), (1.0, beta)]


@dataclass
class WellClassification:
    action: float
    m_level: float
    k_values: list
    verdict: str
    consistent_across_pairs: bool

    def __str__(self):
        ks = ", ".join(f"K({a:g},{b:g})={k:.6g}" for a, b, k in self.k_values)
        return f"{self.verdict}: S={self.action:.10g} m={self.m_level:.10g} [{ks}]"


def _verdict(action, m_level, ks):
    if action >= m_level:
        return OUTSIDE, True
    if all(k >= 0 for k in ks):
        return INSIDE_PLUS, True
    if all(k < 0 for k in ks):
        return INSIDE_MINUS, True
    return INCONSISTENT, False


def classify_report(rep: FunctionalReport, params: ModelParams, m_level: float, pairs) -> WellClassification:
    k_values = [(a, b, k_from_report(rep, params, a, b)) for a, b in pairs]
    verdict, consistent = _verdict(rep.action, m_level, [k for _, _, k in k_values])
    return WellClassification(rep.action, m_level, k_values, verdict, consistent)


def classify(state: State, params: ModelParams, m_level: float, pairs=None) -> WellClassification:
    """Place a state relative to the potential well {S < m} split by the sign of K."""
    if not m_level > 0:
        raise ValidationError("m_level", "must be a positive ground-state level")
    pairs = well_pairs(params) if pairs is None else list(pairs)
    for a, b in pairs:
        _check_admissible(params, a, b)
    out = classify_report(report(state, params), params, m_level, pairs)
    if not out.consistent_across_pairs:
        warnings.warn(f"constraint signs disagree across pairs: {out}", stacklevel=2)
    return out


def sublevel_states(psi: State, params: ModelParams, m_level: float, count: int, seed: int = 0) -> list:
    """Random states with S < m: Nehari-projected perturbed copies of psi, shrunk
    along the ray (A+ side) or L2-dilated (A- side), alternating."""
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 50 * count:
            raise RuntimeError("could not generate enough sub-level states")
        base = perturbed_state(psi, int(rng.integers(2**31)), float(rng.uniform(0.01, 0.2)))
        base = base * nehari_scale(base, params)
        if len(out) % 2 == 0:
            cand = base * float(rng.uniform(0.05, 0.95))
        else:
            try:
                cand = dilate_l2(base, float(rng.uniform(1.05, 1.3)))
            except Exception:
                continue
        if report(cand, params).action < m_level:
            out.append(cand)
    return out


# dichotomy


@dataclass
class DichotomyReport:
    initial: WellClassification
    outcome: str
    trajectory: Trajectory
    verdicts: list
    verdict_constant: bool
    kinetic_bound: float
    sup_kinetic: float
    sup_sigma_sq: float
    mass_drift: float
    energy_drift: float
    virial_sign_changes: int = 0
    problems: list = field(default_factory=list)

    def summary(self) -> str:
        return (
            f"{self.initial.verdict} -> {self.outcome} ({self.trajectory.outcome}); "
            f"sup kinetic {self.sup_kinetic:.6g} (bound {self.kinetic_bound:.6g}); "
            f"verdict constant: {self.verdict_constant}; "
            f"mass drift {self.mass_drift:.3e}, energy drift {self.energy_drift:.3e}; "
            f"K(1,-2/d) sign changes: {self.virial_sign_changes}"
        )


def _pre_blowup(traj: Trajectory) -> list:
    """Records taken before blow-up detection and before any resolution flag."""
    recs = list(traj.records)
    if traj.outcome.kind == BLOWUP and len(recs) > 1:
        recs = recs[:-1]
    clean = [r for r in recs if "under_resolved" not in r.flags]
    return clean or recs[:1]


def drifts(traj: Trajectory) -> tuple:
    """(max relative mass drift per component, relative energy drift) before blow-up."""
    recs = _pre_blowup(traj)
    if not recs:
        return 0.0, 0.0
    m0 = recs[0].report.mass
    e0 = recs[0].report.energy
    mass = np.array([r.report.mass for r in recs])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(m0 > 0, np.abs(mass - m0) / np.where(m0 > 0, m0, 1.0), 0.0)
    energy = np.array([r.report.energy for r in recs])
    escale = abs(e0) if e0 != 0 else max(1e-300, float(np.max(np.abs(energy))))
    e_drift = float(np.max(np.abs(energy - e0)) / escale) if escale > 1e-300 else 0.0
    return float(rel.max(initial=0.0)), e_drift


def dichotomy_run(state: State, params: ModelParams, m_level: float, cfg: StepperConfig, pairs=None) -> DichotomyReport:
    """Evolve data from inside the well and check the predicted fate.

    A+ data must complete with sum ||grad u_j||^2 <= (4+d)/2 m (10% slack).
    A- data must trigger blow-up detection; running out of time or steps
    first is reported as inconclusive. The verdict is recomputed at every
    record before detection and must not change.
    """
    pairs = well_pairs(params) if pairs is None else list(pairs)
    initial = classify(state, params, m_level, pairs)
    if initial.verdict not in (INSIDE_PLUS, INSIDE_MINUS):
        raise ValidationError("state", f"data not inside the potential well ({initial.verdict})")
    traj = evolve(state, params, cfg)
    recs = _pre_blowup(traj) if traj.outcome.kind == BLOWUP else traj.records
    verdicts = [classify_report(r.report, params, m_level, pairs).verdict for r in recs]
    constant = all(v == initial.verdict for v in verdicts)
    signs = np.sign([r.k_virial for r in recs])
    signs = signs[signs != 0]
    kin = traj.series("kinetic")
    sig = traj.series("sigma_norm_sq")
    mass_drift, energy_drift = drifts(traj)
    bound = (4 + params.d) / 2 * m_level

    kind = traj.outcome.kind
    if kind == BLOWUP:
        outcome = BLOWUP_OBSERVED
    elif kind == COMPLETED and initial.verdict == INSIDE_PLUS:
        outcome = GLOBAL
    else:
        outcome = INCONCLUSIVE
    rep = DichotomyReport(
        initial=initial,
        outcome=outcome,
        trajectory=traj,
        verdicts=verdicts,
        verdict_constant=constant,
        kinetic_bound=bound,
        sup_kinetic=float(kin.max()),
        sup_sigma_sq=float(sig.max()),
        mass_drift=mass_drift,
        energy_drift=energy_drift,
        virial_sign_changes=int(np.count_nonzero(np.diff(signs))),
    )
    if not constant:
        flips = sorted(set(verdicts) - {initial.verdict})
        rep.problems.append(f"verdict changed along the flow: {flips}")
    if initial.verdict == INSIDE_PLUS:
        if kind == BLOWUP:
            rep.problems.append(f"A+ data blew up: {traj.outcome}")
        elif kind == ABORTED and "budget" not in traj.outcome.reason:
            rep.problems.append(f"A+ run aborted: {traj.outcome}")
        if rep.sup_kinetic > KINETIC_SLACK * bound:
            rep.problems.append(
                f"kinetic energy {rep.sup_kinetic:.6g} exceeds {KINETIC_SLACK} x {bound:.6g}"
            )
    elif kind == ABORTED and "budget" not in traj.outcome.reason:
        rep.problems.append(f"A- run aborted: {traj.outcome}")
    if rep.problems:
        raise ContradictionReport("; ".join(rep.problems), rep)
    return rep


# variance diagnostics


@dataclass
class VirialReport:
    spacing: float
    rows: list  # (t, Q'' by differences, 8 * rhs)
    max_rel_err: float
    refinement: list  # (spacing, max abs error) for spacing, 2*spacing, ...
    slope: float
    concave: bool

    def summary(self) -> str:
        return (
            f"delta={self.spacing:g}: max rel err {self.max_rel_err:.3e}, "
            f"refinement slope {self.slope:.3f}, concave {self.concave}"
        )


def _uniform_prefix(times: np.ndarray) -> int:
    """Length of the longest prefix of times with constant spacing."""
    if times.size < 2:
        return times.size
    delta = times[1] - times[0]
    tol = 1e-9 * max(abs(delta), 1e-300) + 1e-12 * abs(times[-1])
    steps = np.diff(times)
    bad = np.nonzero(np.abs(steps - delta) > tol)[0]
    return int(bad[0] + 1) if bad.size else times.size


def _second_diff_errors(q, rhs, delta, stride):
    qs, rs = q[::stride], rhs[::stride]
    h = delta * stride
    dd = (qs[2:] - 2 * qs[1:-1] + qs[:-2]) / (h * h)
    return dd, 8 * rs[1:-1]


def virial_check_run(traj: Trajectory, params: ModelParams) -> VirialReport:
    """Centered second differences of Q against 8 times the virial right side."""
    times = traj.times
    n = _uniform_prefix(times)
    if n < 3:
        raise InsufficientSnapshots(f"need 3 uniformly spaced records, have {n}")
    recs = traj.records[:n]
    delta = float(times[1] - times[0])
    q = np.array([r.Q for r in recs])
    rhs = np.array([virial_rhs_from_report(r.report, params, params.mu) for r in recs])
    dd, target = _second_diff_errors(q, rhs, delta, 1)
    scale = float(np.max(np.abs(target)))
    err = np.abs(dd - target)
    if scale > 0:
        max_rel = float(err.max() / scale)
    else:
        max_rel = float(err.max())
    rows = list(zip(times[1 : n - 1].tolist(), dd.tolist(), target.tolist()))

    refinement = [(delta, float(err.max()))]
    stride = 2
    while (n - 1) // stride >= 2 and stride <= 4:
        d2, t2 = _second_diff_errors(q, rhs, delta, stride)
        refinement.append((delta * stride, float(np.max(np.abs(d2 - t2)))))
        stride *= 2
    slope = math.nan
    if len(refinement) >= 2 and refinement[0][1] > 0 and refinement[1][1] > 0:
        slope = math.log(refinement[1][1] / refinement[0][1]) / math.log(2.0)
    return VirialReport(
        spacing=delta,
        rows=rows,
        max_rel_err=max_rel,
        refinement=refinement,
        slope=slope,
        concave=bool(np.all(dd < 0)),
    )


# instability


@dataclass
class InstabilityRow:
    lam: float
    distance: float
    k_virial: float
    outcome: str
    t_blow: float | None


@dataclass
class InstabilityReport:
    rows: list
    distances_increasing: bool
    blowup_times_decreasing: bool

    def table(self) -> str:
        lines = ["lambda  ||Psi_l - Psi||_Sigma  K(Psi_l)  outcome  t_blow"]
        for r in self.rows:
            tb = "-" if r.t_blow is None else f"{r.t_blow:.6g}"
            lines.append(f"{r.lam:<7g} {r.distance:.6e}  {r.k_virial:.6g}  {r.outcome}  {tb}")
        return "\n".join(lines)


def instability_scan(psi: GroundState | State, params: ModelParams, lambdas, cfg: StepperConfig) -> InstabilityReport:
    """Evolve L2 dilations of the ground state for lam > 1 and expect blow-up."""
    if not params.p > p1_threshold(params.d):
        raise ValidationError("p", f"scan requires p > p1 = {p1_threshold(params.d):.6f}")
    lambdas = [float(x) for x in lambdas]
    if not lambdas or any(not x > 1 for x in lambdas):
        raise ValidationError("lambdas", "all dilation factors must exceed 1")
    base = psi.psi if isinstance(psi, GroundState) else psi
    rows, problems = [], []
    # runs are independent; they are executed in input order
    for lam in lambdas:
        data = dilate_l2(base, lam)
        dist = math.sqrt(sigma_norm_sq(data - base))
        kv = report(data, params).k_virial
        if not kv < 0:
            problems.append(f"lambda={lam}: K(Psi_lambda) = {kv:.3e} is not negative")
        traj = evolve(data, params, cfg)
        kind = traj.outcome.kind
        t_blow = traj.outcome.t if kind == BLOWUP else None
        label = {BLOWUP: BLOWUP, COMPLETED: COMPLETED}.get(kind, INCONCLUSIVE)
        if kind == COMPLETED:
            problems.append(f"lambda={lam}: run completed without blow-up")
        rows.append(InstabilityRow(lam, dist, kv, label, t_blow))

    order = np.argsort([r.lam for r in rows])
    dists = [rows[i].distance for i in order]
    increasing = bool(np.all(np.diff(dists) > 0))
    times = [rows[i].t_blow for i in order]
    decreasing = all(t is not None for t in times) and bool(np.all(np.diff(times) <= 0))
    out = InstabilityReport(rows, increasing, decreasing)
    if not increasing:
        problems.append("perturbation size is not increasing in lambda")
    if problems:
        raise ContradictionReport("; ".join(problems), out)
    return out


# small data at the energy-critical exponent


@dataclass
class SmallDataRow:
    eps: float
    outcome: str
    sup_xi: float
    ratio: float
    in_hypothesis: bool
    within_bound: bool


@dataclass
class SmallDataReport:
    rows: list
    factor: float
    failures: list


def xi_scaled_gaussian(grid: Grid, m: int, eps: float) -> State:
    """Unit-width Gaussian in every component, rescaled so that xi = eps."""
    base = gaussian_state(grid, m, amp=1.0, width=1.0)
    if eps == 0:
        return base * 0.0
    dens = np.abs(base.fields) ** 2
    xi0 = float(np.sum(grid.grad_sq(base.fields) + grid.integrate(dens * grid.r2)))
    return base * math.sqrt(eps / xi0)


def small_data_critical_run(
    eps_values,
    params: ModelParams,
    cfg: StepperConfig,
    grid: Grid | None = None,
    factor: float = 4.0,
    hypothesis_eps: float = 1e-2,
) -> SmallDataReport:
    """Evolve Gaussians with xi = eps at p = d/(d-2) and track sup_t xi(u(t)).

    Only eps <= hypothesis_eps counts as small; larger values are recorded
    without any claim.
    """
    if params.d < 3:
        raise ValidationError("d", "energy-critical run needs d >= 3")
    if not math.isclose(params.p, params.p_upper):
        raise ValidationError("p", f"p must equal d/(d-2) = {params.p_upper:g}")
    grid = grid or Grid(params.d, 64, 8.0)
    rows, failures = [], []
    for eps in eps_values:
        eps = float(eps)
        if eps < 0:
            raise ValidationError("eps", "must be nonnegative")
        traj = evolve(xi_scaled_gaussian(grid, params.m, eps), params, cfg)
        xi = traj.series("xi")
        sup = float(xi.max())
        ratio = sup / eps if eps > 0 else 0.0
        small = eps <= hypothesis_eps
        ok = traj.outcome.kind == COMPLETED and sup <= factor * eps
        rows.append(SmallDataRow(eps, traj.outcome.kind, sup, ratio, small, ok))
        if small and not ok:
            failures.append(f"eps={eps:g}: {traj.outcome}, sup xi = {sup:.6g}")
    return SmallDataReport(rows, factor, failures)


# Gagliardo-Nirenberg sampling


@dataclass
class GNScan:
    ratios: np.ndarray
    max_ratio: float
    argmax: int
    seed: int


def random_state(grid: Grid, m: int, rng: np.random.Generator) -> State:
    """Gaussian of random width, offset and amplitude per component plus smooth noise."""
    width = rng.uniform(0.6, 1.4, size=m)
    amp = rng.uniform(0.5, 2.0, size=m)
    center = rng.uniform(-1.0, 1.0, size=grid.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = gaussian_state(grid, m, amp=amp, width=width, center=center)
    return perturbed_state(base, int(rng.integers(2**31)), float(rng.uniform(0.0, 0.5)))


def gn_scan(params: ModelParams, grid: Grid, count: int = 200, seed: int = 0) -> GNScan:
    """gn_ratio over a seeded family of random states."""
    rng = np.random.default_rng(seed)
    ratios = np.array([gn_ratio(random_state(grid, params.m, rng), params) for _ in range(count)])
    i = int(np.argmax(ratios))
    return GNScan(ratios=ratios, max_ratio=float(ratios[i]), argmax=i, seed=seed)


def gn_dilation_spread(state: State, params: ModelParams, lambdas) -> float:
    """Max relative change of gn_ratio under L2 dilations."""
    r0 = gn_ratio(state, params)
    return max(abs(gn_ratio(dilate_l2(state, lam), params) - r0) / r0 for lam in lambdas)
