"""Ground-state solver, projections and identities."""

import math
import warnings

import numpy as np
import pytest

from cnlslab.domain import ModelParams, State, gaussian_state, sigma_norm_sq
from cnlslab.errors import NoBracket, NonFinite, NotConverged, ZeroInteraction
from cnlslab.functionals import dilate_l2, k_functional, report, scale_exp
from cnlslab.groundstate import (
    SolverConfig,
    action_independence_check,
    constraint_root,
    default_init,
    deriv_identity_check,
    el_residual,
    f_prime_at_one,
    minimize_action,
    nehari_scale,
    p1_by_root,
    p1_threshold,
    pohozaev_report,
    project,
)


class TestResidual:
    def test_zero_state(self, grid2, params_p2):
        assert el_residual(State(grid2, np.zeros(grid2.shape)), params_p2) == 0.0

    def test_linear_eigenstate(self, phi0):
        lin = ModelParams(d=2, m=1, p=2.0, mu=0, a=[[0.0]])
        # (-Lap + 1 + |x|^2) phi0 = (d + 1) phi0
        assert el_residual(phi0, lin) == pytest.approx(3.0, rel=1e-10)

    def test_nonfinite(self, grid2, params_p2):
        f = np.full(grid2.shape, np.nan + 0j)
        with pytest.raises(NonFinite):
            el_residual(State(grid2, f), params_p2)


class TestProjection:
    def test_nehari_scale_phi0(self, phi0, params_p2):
        assert nehari_scale(phi0, params_p2) == pytest.approx(math.sqrt(6 * math.pi), rel=1e-10)

    def test_nehari_fixed_point(self, phi0, params_p2):
        on = phi0 * nehari_scale(phi0, params_p2)
        assert nehari_scale(on, params_p2) == pytest.approx(1.0, rel=1e-12)
        assert report(on, params_p2).nehari == pytest.approx(0.0, abs=1e-10)

    def test_nehari_zero(self, grid2, params_p2):
        with pytest.raises(ZeroInteraction):
            nehari_scale(State(grid2, np.zeros(grid2.shape)), params_p2)

    def test_root_matches_ray(self, phi0, params_p2):
        lam = constraint_root(phi0, params_p2, 1.0, 0.0)
        assert lam == pytest.approx(math.log(math.sqrt(6 * math.pi)), rel=1e-10)

    def test_root_on_manifold(self, phi0, params_p2):
        on = phi0 * nehari_scale(phi0, params_p2)
        assert constraint_root(on, params_p2, 1.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_general_pair(self, grid2, params_p3):
        s = gaussian_state(grid2, 1, amp=2.0, width=0.5)
        lam = constraint_root(s, params_p3, 1.0, 1.0)
        moved = scale_exp(s, lam, 1.0, 1.0)
        assert abs(k_functional(moved, params_p3, 1.0, 1.0)) < 1e-10 * sigma_norm_sq(moved)
        assert abs(k_functional(project(s, params_p3, (1.0, 1.0)), params_p3, 1.0, 1.0)) < 1e-9

    def test_inadmissible(self, phi0, params_p2):
        with pytest.raises(ValueError):
            constraint_root(phi0, params_p2, 1.0, 3.0)

    def test_no_bracket(self, grid2, params_p2):
        with pytest.raises(NoBracket):
            constraint_root(State(grid2, np.zeros(grid2.shape)), params_p2, 1.0, 0.5)


class TestSolver:
    def test_converged(self, gs_p2):
        norm = math.sqrt(sigma_norm_sq(gs_p2.psi))
        assert gs_p2.converged
        assert gs_p2.el_residual <= 1e-8 * norm
        assert gs_p2.action_level > 0
        assert gs_p2.max_pohozaev() <= 1e-6 * norm**2

    def test_monotone_descent(self, gs_p2):
        h = np.array(gs_p2.history)
        assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))

    def test_restart_is_fixed_point(self, gs_p2, params_p2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            again = minimize_action(gs_p2.psi, params_p2)
        assert again.iterations <= 2
        assert again.action_level == pytest.approx(gs_p2.action_level, rel=1e-12)

    @pytest.mark.parametrize("c", [0.5, 0.9, 1.1, 2.0])
    def test_ray_maximum(self, gs_p2, params_p2, c):
        assert report(gs_p2.psi * c, params_p2).action < gs_p2.action_level

    def test_radially_symmetric(self, gs_p2):
        f = np.abs(gs_p2.psi.fields[0])
        np.testing.assert_allclose(f, f.T, atol=1e-10)
        np.testing.assert_allclose(f[1:, :], f[:0:-1, :], atol=1e-10)

    def test_not_converged_carries_best(self, grid2, params_p2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(NotConverged) as exc:
                minimize_action(default_init(grid2), params_p2, SolverConfig(max_iter=5))
        best = exc.value.best
        assert best.el_residual > 0 and not best.converged and best.pohozaev

    def test_hypothesis_warning(self, grid2, params_p2):
        with pytest.warns(UserWarning, match="existence theory"):
            try:
                minimize_action(default_init(grid2), params_p2, SolverConfig(max_iter=1))
            except NotConverged:
                pass

    def test_config_validation(self):
        for kw in (dict(step=0.0), dict(precond_shift=-1.0), dict(tol=0.0)):
            with pytest.raises(ValueError):
                SolverConfig(**kw)

    def test_p3_pohozaev_all_pairs(self, gs_p3):
        norm_sq = sigma_norm_sq(gs_p3.psi)
        assert gs_p3.el_residual <= 1e-8 * math.sqrt(norm_sq)
        for _, _, k in gs_p3.pohozaev:
            assert abs(k) <= 1e-6 * norm_sq

    def test_p3_virial_negative_after_dilation(self, gs_p3, params_p3):
        for lam in (1.01, 1.05, 1.1):
            assert report(dilate_l2(gs_p3.psi, lam), params_p3).k_virial < 0


class TestIndependence:
    def test_single_pair_zero_spread(self, grid2, params_p2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = action_independence_check(params_p2, [(1.0, 0.0)], [None], grid2)
        assert rep.spread == 0.0 and not rep.failures

    def test_virial_pair_failure_is_listed(self, grid2, params_p2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = action_independence_check(
                params_p2, [(1.0, -1.0)], [None], grid2, SolverConfig(max_iter=50)
            )
        assert rep.failures and not rep.levels
        assert math.isnan(rep.spread)

    def test_pairs_required(self, params_p2):
        with pytest.raises(ValueError):
            action_independence_check(params_p2, [], [None])


class TestThreshold:
    def test_closed_forms(self):
        assert p1_threshold(2) == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)
        assert p1_threshold(3) == pytest.approx(1.924950, abs=1e-6)

    @pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 6])
    def test_root_agrees(self, d):
        assert abs(p1_by_root(d) - p1_threshold(d)) < 1e-9
        assert abs(f_prime_at_one(p1_threshold(d), d)) < 1e-9

    def test_sign_change(self):
        assert f_prime_at_one(2.5, 2) > 0 > f_prime_at_one(2.7, 2)

    def test_invalid(self):
        with pytest.raises(ValueError):
            p1_threshold(0)


class TestDerivativeIdentity:
    def test_phi0_closed_form(self, phi0, params_p2):
        rep = deriv_identity_check(phi0, params_p2, [1.0])
        _, fd, ident, err = rep.rows[0]
        assert ident == pytest.approx(-1 / (4 * math.pi), abs=1e-8)
        assert err <= 1e-6

    def test_phi0_off_center(self, phi0, params_p2):
        # S(v_lam) = (lam^2 + 1 + lam^-2)/2 - lam^2/(8 pi)
        for lam in (0.9, 1.2):
            row = deriv_identity_check(phi0, params_p2, [lam]).rows[0]
            exact = lam - lam**-3 - lam / (4 * math.pi)
            assert row[2] == pytest.approx(exact, rel=1e-9)

    def test_fd_second_order(self, phi0, params_p2):
        errs = [abs(deriv_identity_check(phi0, params_p2, [1.1], eps=e).rows[0][1] - (1.1 - 1.1**-3 - 1.1 / (4 * math.pi))) for e in (4e-2, 2e-2)]
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)

    def test_ground_state(self, gs_p2, params_p2):
        rep = deriv_identity_check(gs_p2.psi, params_p2, [1.01, 1.05, 1.1])
        assert rep.max_rel_err <= 1e-6

    def test_at_one_vanishes_on_manifold(self, gs_p2, params_p2):
        row = deriv_identity_check(gs_p2.psi, params_p2, [1.0]).rows[0]
        assert abs(row[1]) < 1e-6 and abs(row[2]) < 1e-6

    def test_positive_lambdas(self, phi0, params_p2):
        with pytest.raises(ValueError):
            deriv_identity_check(phi0, params_p2, [0.0])


class TestSymmetricReduction:
    """Equal components of the all-ones system solve the scalar equation with coupling 2."""

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_coupled_matches_scalar(self, grid2, p):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            coupled = minimize_action(gaussian_state(grid2, 2, 1.0, 1.0), ModelParams.uniform(2, 2, p))
            scalar = minimize_action(default_init(grid2), ModelParams.uniform(2, 1, p))
            doubled = minimize_action(default_init(grid2), ModelParams.uniform(2, 1, p, coupling=2.0))
        u = coupled.psi.fields
        np.testing.assert_array_equal(u[0], u[1])
        norm = math.sqrt(sigma_norm_sq(coupled.psi))
        shrink = 2 ** (-1 / (2 * p - 2))
        err1 = math.sqrt(sigma_norm_sq(State(grid2, u - shrink * scalar.psi.fields[0])))
        err2 = math.sqrt(sigma_norm_sq(State(grid2, u[:1] - doubled.psi.fields)))
        assert err1 <= 1e-6 * norm and err2 <= 1e-6 * norm / math.sqrt(2)
