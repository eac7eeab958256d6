"""Acceptance checks, one per criterion, each printing a PASS or FAIL line.

Run under pytest (``pytest tests/test_acceptance.py -s``) or directly as a
script. The dichotomy, instability and small-data checks take minutes.
"""

from __future__ import annotations

import math
import sys
import time
import warnings

import numpy as np
import pytest

from cnlslab import scenarios
from cnlslab.domain import ModelParams, State, build_grid, gaussian_state, harmonic_ground, sigma_norm_sq
from cnlslab.errors import ContradictionReport
from cnlslab.functionals import dilate_l2
from cnlslab.groundstate import (
    SolverConfig,
    default_init,
    deriv_identity_check,
    f_prime_at_one,
    minimize_action,
    p1_by_root,
    p1_threshold,
    pohozaev_report,
)
from cnlslab.propagator import BLOWUP, COMPLETED, StepperConfig, evolve

_cache: dict = {}


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


def ground_state_p2():
    if "p2" not in _cache:
        g = build_grid(2, 128, 8.0)
        _cache["p2"] = _quiet(minimize_action, default_init(g), ModelParams.uniform(2, 1, 2.0))
    return _cache["p2"]


def ground_state_p3():
    if "p3" not in _cache:
        g = build_grid(2, 256, 8.0)
        _cache["p3"] = minimize_action(default_init(g), ModelParams.uniform(2, 1, 3.0))
    return _cache["p3"]


def _energy_drift(traj):
    e = traj.series("energy")
    return float(np.abs(e - e[0]).max() / abs(e[0]))


def _mass_drift(traj):
    mass = np.array([r.report.mass for r in traj.records])
    return float((np.abs(mass - mass[0]) / mass[0]).max())


def c1_conservation():
    g = build_grid(2, 128, 8.0)
    s = gaussian_state(g, 2, amp=[1.0, 0.8], width=[1.0, 0.8])
    ok, parts = True, []
    for mu in (-1, 1):
        p = ModelParams.uniform(2, 2, 2.0, mu=mu)
        coarse = evolve(s, p, StepperConfig(dt=1e-3, t_end=1.0, snapshot_every=10))
        fine = evolve(s, p, StepperConfig(dt=5e-4, t_end=1.0, snapshot_every=20))
        md, ed = _mass_drift(coarse), _energy_drift(coarse)
        ratio = ed / _energy_drift(fine)
        ok &= coarse.outcome.kind == COMPLETED and md <= 1e-10 and ed <= 1e-6 and 3.5 <= ratio <= 4.5
        parts.append(f"mu={mu:+d} mass {md:.1e} energy {ed:.1e} halving ratio {ratio:.2f}")
    return ok, "; ".join(parts)


def c2_linear_eigenstate():
    g = build_grid(2, 64, 8.0)
    phi = harmonic_ground(g)
    lin = ModelParams(d=2, m=1, p=2.0, mu=0, a=[[0.0]])
    traj = evolve(phi, lin, StepperConfig(dt=5e-5, t_end=1.0, snapshot_every=1000))
    dev = float(np.abs(np.abs(traj.final_state.fields) - np.abs(phi.fields)).max())
    q = traj.series("Q")
    qdev = float(np.abs(q / q[0] - 1).max())
    ok = traj.outcome.kind == COMPLETED and dev <= 1e-6 and qdev <= 1e-8
    return ok, f"modulus deviation {dev:.1e}, Q relative deviation {qdev:.1e}"


def c3_virial():
    g = build_grid(2, 128, 8.0)
    p = ModelParams.uniform(2, 1, 2.0)
    s = gaussian_state(g, 1, amp=1.5, width=1.0)
    traj = evolve(s, p, StepperConfig(dt=1e-3, t_end=1.0, snapshot_every=10))
    rep = scenarios.virial_check_run(traj, p)
    ok = rep.max_rel_err <= 1e-2 and abs(rep.slope - 2.0) <= 0.3
    return ok, f"delta={rep.spacing:g} rel err {rep.max_rel_err:.2e}, refinement slope {rep.slope:.2f}"


def c4_ground_state():
    gs = ground_state_p2()
    p = ModelParams.uniform(2, 1, 2.0)
    norm_sq = sigma_norm_sq(gs.psi)
    ks = pohozaev_report(gs.psi, p, [(1.0, 0.0), (1.0, 1.0), (1.0, -1.0)])
    kmax = max(abs(k) for _, _, k in ks) / norm_sq
    other = _quiet(minimize_action, default_init(gs.psi.grid), p, SolverConfig(constraint=(1.0, 1.0)))
    spread = abs(other.action_level - gs.action_level) / gs.action_level
    res = gs.el_residual / math.sqrt(norm_sq)
    ok = gs.converged and other.converged and res <= 1e-8 and kmax <= 1e-6 and spread <= 1e-4
    return ok, (
        f"m={gs.action_level:.10f} residual/norm {res:.1e}, max|K|/norm^2 {kmax:.1e}, "
        f"(1,1) level {other.action_level:.10f} spread {spread:.1e}"
    )


def c5_symmetric_reduction():
    p2 = ModelParams.uniform(2, 2, 2.0)
    scalar = ground_state_p2()
    g = scalar.psi.grid
    coupled = _quiet(minimize_action, gaussian_state(g, 2, 1.0, 1.0), p2)
    target = 2 ** (-1 / (2 * p2.p - 2)) * np.broadcast_to(scalar.psi.fields, coupled.psi.fields.shape)
    err = math.sqrt(sigma_norm_sq(State(g, coupled.psi.fields - target)) / sigma_norm_sq(coupled.psi))
    ok = coupled.converged and err <= 1e-5
    return ok, f"relative Sigma-norm error {err:.1e}"


def c6_derivative_identity():
    gs = ground_state_p2()
    p = ModelParams.uniform(2, 1, 2.0)
    at_psi = deriv_identity_check(gs.psi, p, [1.01, 1.05, 1.1], eps=1e-4)
    phi = harmonic_ground(gs.psi.grid)
    at_phi = deriv_identity_check(phi, p, [0.9, 1.0, 1.1], eps=1e-4)
    closed = abs(at_phi.rows[1][2] + 1 / (4 * math.pi))
    ok = at_psi.max_rel_err <= 1e-6 and at_phi.max_rel_err <= 1e-6 and closed <= 1e-8
    return ok, (
        f"Psi rel err {at_psi.max_rel_err:.1e}, phi0 rel err {at_phi.max_rel_err:.1e}, "
        f"phi0 closed form at 1 off by {closed:.1e}"
    )


def c7_dichotomy():
    gs = ground_state_p3()
    p = ModelParams.uniform(2, 1, 3.0)
    plus_cfg = StepperConfig(dt=4e-4, t_end=10.0, snapshot_every=50, blowup_grad_factor=10.0, max_steps=100_000)
    minus_cfg = StepperConfig(
        dt=5e-4, t_end=10.0, snapshot_every=10, blowup_grad_factor=10.0, energy_drift_tol=1e-9, max_steps=100_000
    )
    try:
        plus = scenarios.dichotomy_run(gs.psi * 0.9, p, gs.action_level, plus_cfg)
        minus = scenarios.dichotomy_run(dilate_l2(gs.psi, 1.1), p, gs.action_level, minus_cfg)
    except ContradictionReport as exc:
        return False, f"contradiction: {exc}"
    ok = (
        plus.outcome == scenarios.GLOBAL
        and plus.sup_kinetic <= 1.1 * plus.kinetic_bound
        and minus.outcome == scenarios.BLOWUP_OBSERVED
        and plus.verdict_constant
        and minus.verdict_constant
    )
    return ok, (
        f"A+ {plus.outcome} sup kinetic {plus.sup_kinetic:.4f} <= {1.1 * plus.kinetic_bound:.4f}; "
        f"A- {minus.outcome} at t={minus.trajectory.outcome.t:.4f}; "
        f"virial-pair sign changes on A+ {plus.virial_sign_changes}"
    )


def c8_instability():
    gs = ground_state_p3()
    p = ModelParams.uniform(2, 1, 3.0)
    cfg = StepperConfig(dt=5e-4, t_end=3.0, snapshot_every=10, blowup_grad_factor=10.0, energy_drift_tol=1e-9)
    try:
        rep = scenarios.instability_scan(gs, p, [1.01, 1.05, 1.1], cfg)
    except ContradictionReport as exc:
        return False, f"contradiction: {exc}"
    ok = all(r.outcome == BLOWUP for r in rep.rows) and rep.distances_increasing
    rows = ", ".join(f"lambda={r.lam:g} dist {r.distance:.3e} t*={r.t_blow:.3f}" for r in rep.rows)
    return ok, rows


def c9_threshold():
    p1 = p1_threshold(2)
    gap = max(abs(p1_by_root(d) - p1_threshold(d)) for d in (1, 2, 3, 4))
    ok = abs(p1 - 2.618034) <= 1e-6 and gap <= 1e-9 and abs(f_prime_at_one(p1, 2)) <= 1e-9
    return ok, f"p1(2)={p1:.9f}, root gap {gap:.1e}"


def c10_gagliardo_nirenberg():
    g = build_grid(2, 128, 8.0)
    p = ModelParams.uniform(2, 1, 2.0)
    a = scenarios.gn_scan(p, g, count=200, seed=0)
    b = scenarios.gn_scan(p, g, count=200, seed=0)
    same = a.max_ratio == b.max_ratio and np.array_equal(a.ratios, b.ratios)
    s = gaussian_state(g, 1, amp=1.0, width=0.7, center=[0.3, -0.2])
    spread = scenarios.gn_dilation_spread(s, p, [0.8, 1.25, 1.5])
    ok = bool(np.all(np.isfinite(a.ratios))) and same and spread <= 1e-8
    return ok, f"max ratio {a.max_ratio:.10g} reproduced: {same}, dilation spread {spread:.1e}"


def c11_small_data():
    p = ModelParams.uniform(3, 1, 3.0)
    cfg = StepperConfig(dt=1e-3, t_end=2.0, snapshot_every=20)
    rep = _quiet(scenarios.small_data_critical_run, [1e-3], p, cfg, build_grid(3, 64, 8.0))
    row = rep.rows[0]
    ok = row.outcome == COMPLETED and row.sup_xi <= 4e-3 and not rep.failures
    return ok, f"{row.outcome} sup xi {row.sup_xi:.4e} (ratio {row.ratio:.3f})"


CRITERIA = [
    ("1 conservation", c1_conservation),
    ("2 linear eigenstate", c2_linear_eigenstate),
    ("3 virial identity", c3_virial),
    ("4 ground state", c4_ground_state),
    ("5 symmetric reduction", c5_symmetric_reduction),
    ("6 derivative identity", c6_derivative_identity),
    ("7 dichotomy", c7_dichotomy),
    ("8 instability scan", c8_instability),
    ("9 p1 threshold", c9_threshold),
    ("10 G-N scan", c10_gagliardo_nirenberg),
    ("11 small-data critical", c11_small_data),
]


def run_one(name, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    line = f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail} [{time.perf_counter() - t0:.1f} s]"
    return ok, line


@pytest.mark.slow
@pytest.mark.parametrize("name,fn", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(name, fn, capsys):
    ok, line = run_one(name, fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [run_one(*c) for c in CRITERIA]
    for _, line in results:
        print(line, flush=True)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
