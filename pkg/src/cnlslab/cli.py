"""Command-line entry points.

Exit status: 0 on success, 1 when a scenario contradicts its prediction or
the solver fails, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings

import numpy as np

from . import io
from .domain import State, gaussian_state, perturbed_state, sigma_norm_sq
from .errors import (
    BadMagic,
    CNLSError,
    ContradictionReport,
    GridMismatch,
    ParseError,
    SchemaMismatch,
    TruncatedPayload,
    ValidationError,
    VersionUnsupported,
)
from .functionals import dilate_l2, report
from .groundstate import el_residual, minimize_action, default_init, pohozaev_report
from .propagator import evolve
from . import scenarios

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (
    ParseError,
    ValidationError,
    SchemaMismatch,
    BadMagic,
    VersionUnsupported,
    TruncatedPayload,
    GridMismatch,
    OSError,
)
SUBCOMMANDS = (
    "evolve",
    "groundstate",
    "classify",
    "virial-check",
    "instability-scan",
    "functionals",
    "gn-scan",
    "small-data-critical",
)


def _say(*parts):
    print(*parts, flush=True)


def _ground_state(cfg: io.RunConfig):
    """Ground state for the configured model: from init.path when given, else solved."""
    if cfg.init.path:
        psi, params = io.read_snapshot(cfg.init.path)
        if params.p != cfg.params.p or params.m != cfg.params.m or not np.array_equal(params.a, cfg.params.a):
            raise ValidationError("init.path", "snapshot model differs from the configured model")
        res = el_residual(psi, cfg.params)
        norm = math.sqrt(sigma_norm_sq(psi))
        if res > 100 * cfg.solver.tol * norm:
            raise ValidationError("init.path", f"snapshot is not a converged ground state (residual {res:.3e})")
        return psi, report(psi, cfg.params).action
    gs = minimize_action(default_init(cfg.grid, cfg.params.m), cfg.params, cfg.solver)
    return gs.psi, gs.action_level


def initial_state(cfg: io.RunConfig) -> State:
    spec = cfg.init
    if spec.kind == "gaussian":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = gaussian_state(cfg.grid, cfg.params.m, spec.amp, spec.width, spec.center)
    else:
        psi, _ = _ground_state(cfg)
        if spec.kind == "dilated-groundstate":
            u = dilate_l2(psi, spec.lam)
        elif spec.kind == "scaled":
            u = psi * spec.c
        else:
            u = psi
    if spec.eps > 0:
        u = perturbed_state(u, cfg.seed, spec.eps)
    return u


def _print_report(rep, params):
    _say(f"mass       {np.array2string(np.atleast_1d(rep.mass), precision=12)}")
    _say(f"kinetic    {np.array2string(np.atleast_1d(rep.kinetic), precision=12)}")
    _say(f"potential  {np.array2string(np.atleast_1d(rep.potential), precision=12)}")
    _say(f"interaction {rep.interaction:.12g}")
    _say(f"energy     {rep.energy:.12g}")
    _say(f"action     {rep.action:.12g}")
    _say(f"K(1,0)     {rep.nehari:.12g}")
    _say(f"K(1,-2/d)  {rep.k_virial:.12g}")


def cmd_evolve(args):
    cfg = io.load_config(args.config)
    traj = evolve(initial_state(cfg), cfg.params, cfg.stepper)
    out = args.out or cfg.outputs["diagnostics"]
    if out:
        io.write_diagnostics(traj, out, cfg.to_dict())
        _say(f"diagnostics written to {out}")
    if cfg.outputs["snapshot"] and traj.final_state is not None:
        io.write_snapshot(traj.final_state, cfg.params, cfg.outputs["snapshot"], {"config": cfg.to_dict()})
    mass_drift, energy_drift = scenarios.drifts(traj)
    _say(f"outcome {traj.outcome} after {traj.steps} steps")
    _say(f"mass drift {mass_drift:.3e}  energy drift {energy_drift:.3e}")
    return EXIT_OK


def cmd_groundstate(args):
    cfg = io.load_config(args.config)
    gs = minimize_action(default_init(cfg.grid, cfg.params.m, None), cfg.params, cfg.solver)
    norm_sq = sigma_norm_sq(gs.psi)
    out = args.out or cfg.outputs["snapshot"]
    if out:
        prov = {"config": cfg.to_dict(), "action_level": gs.action_level, "el_residual": gs.el_residual}
        io.write_snapshot(gs.psi, cfg.params, out, prov)
        _say(f"snapshot written to {out}")
    _say(f"action level {gs.action_level:.12g} after {gs.iterations} iterations")
    _say(f"el residual {gs.el_residual:.3e} (Sigma norm {math.sqrt(norm_sq):.6g})")
    for a, b, k in gs.pohozaev:
        _say(f"K({a:g},{b:g}) = {k:.3e}")
    _say(f"max |K| / ||Psi||^2 = {gs.max_pohozaev() / norm_sq:.3e}")
    return EXIT_OK


def cmd_classify(args):
    cfg = io.load_config(args.config)
    _, m_level = _ground_state(cfg)
    result = scenarios.classify(initial_state(cfg), cfg.params, m_level)
    _say(result.verdict)
    _say(str(result))
    return EXIT_OK


def cmd_virial_check(args):
    diag = io.read_diagnostics(args.diagnostics)
    params = _params_from_header(diag.config)
    rep = scenarios.virial_check_run(diag.trajectory, params)
    _say(rep.summary())
    return EXIT_OK


def _params_from_header(conf: dict):
    if not conf:
        raise ValidationError("diagnostics", "header carries no configuration")
    return io.build_config(conf).params


def cmd_instability_scan(args):
    cfg = io.load_config(args.config)
    psi, _ = _ground_state(cfg)
    rep = scenarios.instability_scan(psi, cfg.params, cfg.scan["lambdas"], cfg.stepper)
    _say(rep.table())
    return EXIT_OK


def cmd_functionals(args):
    state, params = io.read_snapshot(args.snapshot)
    _print_report(report(state, params), params)
    return EXIT_OK


def cmd_gn_scan(args):
    cfg = io.load_config(args.config)
    scan = scenarios.gn_scan(cfg.params, cfg.grid, cfg.scan["count"], cfg.seed)
    _say(f"{scan.ratios.size} states, seed {scan.seed}")
    _say(f"max ratio {scan.max_ratio:.17g} at index {scan.argmax}")
    _say(f"min ratio {scan.ratios.min():.17g}")
    return EXIT_OK


def cmd_small_data(args):
    cfg = io.load_config(args.config)
    rep = scenarios.small_data_critical_run(cfg.scan["eps"], cfg.params, cfg.stepper, cfg.grid)
    for r in rep.rows:
        _say(f"eps={r.eps:g} {r.outcome} sup xi={r.sup_xi:.6g} ratio={r.ratio:.4g} in_hypothesis={r.in_hypothesis}")
    if rep.failures:
        raise ContradictionReport("; ".join(rep.failures), rep)
    return EXIT_OK


HANDLERS = {
    "evolve": cmd_evolve,
    "groundstate": cmd_groundstate,
    "classify": cmd_classify,
    "virial-check": cmd_virial_check,
    "instability-scan": cmd_instability_scan,
    "functionals": cmd_functionals,
    "gn-scan": cmd_gn_scan,
    "small-data-critical": cmd_small_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnlslab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    for name in ("evolve", "groundstate"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out", default="")
    for name in ("classify", "instability-scan", "gn-scan", "small-data-critical"):
        sub.add_parser(name).add_argument("config")
    sub.add_parser("virial-check").add_argument("diagnostics")
    sub.add_parser("functionals").add_argument("snapshot")
    return parser


def dispatch(subcommand: str, argv=()) -> int:
    return main([subcommand, *argv])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return HANDLERS[args.command](args)
    except ContradictionReport as exc:
        print(f"contradiction: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CNLSError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
