"""Integral functionals, constraint identities and scaling operators.

All integrals use the rectangle rule on the periodic grid and spectral
gradients. The action S and the constraints K always carry the focusing
sign; only the energy uses the model sign ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import ModelParams, State
from .errors import ContainmentLost, DegenerateDenominator, NonFinite, ZeroState

CONTAINMENT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FunctionalReport:
    mass: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    interaction: float
    energy: float
    action: float
    nehari: float
    k_virial: float

    @property
    def sigma_norm_sq(self) -> float:
        return float(np.sum(self.mass + self.kinetic + self.potential))

    @property
    def variance(self) -> float:
        """Q = sum_j ||x u_j||^2."""
        return float(np.sum(self.potential))

    @property
    def xi(self) -> float:
        return float(np.sum(self.kinetic + self.potential))


def _check_finite(state: State) -> None:
    bad = ~np.isfinite(state.fields.reshape(state.m, -1)).all(axis=1)
    if bad.any():
        raise NonFinite(int(np.argmax(bad)))


def abs_pow(u, p):
    """|u|^p, elementwise."""
    return np.abs(u) ** p


def interaction_of(rho_p: np.ndarray, a: np.ndarray, grid) -> float:
    """sum_{j,k} a_jk int |u_j|^p |u_k|^p, given rho_p[j] = |u_j|^p."""
    flat = rho_p.reshape(rho_p.shape[0], -1)
    gram = flat @ flat.T
    return float(np.sum(a * gram) * grid.weight)


def report(state: State, params: ModelParams) -> FunctionalReport:
    _check_finite(state)
    g = state.grid
    dens = np.abs(state.fields) ** 2
    mass = g.integrate(dens)
    potential = g.integrate(dens * g.r2)
    kinetic = g.grad_sq(state.fields)
    inter = interaction_of(abs_pow(state.fields, params.p), params.a, g)
    return report_from_parts(mass, kinetic, potential, inter, params)


def report_from_parts(mass, kinetic, potential, interaction, params) -> FunctionalReport:
    mass = np.asarray(mass, dtype=float)
    kinetic = np.asarray(kinetic, dtype=float)
    potential = np.asarray(potential, dtype=float)
    p = params.p
    quad = float(np.sum(kinetic + potential))
    energy = 0.5 * quad + params.mu / (2 * p) * interaction
    action = 0.5 * float(np.sum(mass)) + 0.5 * quad - interaction / (2 * p)
    rep = FunctionalReport(
        mass=mass,
        kinetic=kinetic,
        potential=potential,
        interaction=float(interaction),
        energy=float(energy),
        action=float(action),
        nehari=0.0,
        k_virial=0.0,
    )
    object.__setattr__(rep, "nehari", k_from_report(rep, params, 1.0, 0.0))
    object.__setattr__(rep, "k_virial", k_from_report(rep, params, 1.0, -2.0 / params.d))
    return rep


def k_from_report(rep: FunctionalReport, params: ModelParams, alpha, beta) -> float:
    """K_{alpha,beta} assembled from precomputed integrals."""
    d, p = params.d, params.p
    kin = float(np.sum(rep.kinetic))
    mass = float(np.sum(rep.mass))
    pot = float(np.sum(rep.potential))
    quad = (
        (2 * alpha + (d - 2) * beta) * kin
        + (2 * alpha + d * beta) * mass
        + (2 * alpha + (d + 2) * beta) * pot
    )
    return 0.5 * quad - (2 * p * alpha + d * beta) / (2 * p) * rep.interaction


def k_functional(state: State, params: ModelParams, alpha: float, beta: float) -> float:
    return k_from_report(report(state, params), params, alpha, beta)


def nehari(state: State, params: ModelParams) -> float:
    """I = sum ||u_j||_Sigma^2 - interaction, evaluated directly."""
    rep = report(state, params)
    return rep.sigma_norm_sq - rep.interaction


def action(state: State, params: ModelParams) -> float:
    return report(state, params).action


def h_denominator(d, alpha, beta) -> float:
    return 2 * alpha + (d + 2) * beta


def h_functional(state: State, params: ModelParams, alpha: float, beta: float) -> float:
    """H_{alpha,beta} = S - K/(2 alpha + (d+2) beta) via its closed form."""
    den = h_denominator(params.d, alpha, beta)
    if den == 0:
        raise DegenerateDenominator(f"2*alpha + (d+2)*beta = 0 for {(alpha, beta)}")
    rep = report(state, params)
    p = params.p
    quad = float(np.sum(rep.mass + 2 * rep.kinetic))
    return (beta * quad + (alpha * (p - 1) - beta) / p * rep.interaction) / den


def virial_rhs(state: State, params: ModelParams) -> float:
    """sum (||grad u_j||^2 - ||x u_j||^2) - d(p-1)/(2p) * interaction."""
    return virial_rhs_from_report(report(state, params), params, mu=-1)


def virial_rhs_from_report(rep: FunctionalReport, params: ModelParams, mu=-1) -> float:
    """Right side of (1/8) Q'' for nonlinearity sign ``mu``; mu=-1 is focusing."""
    d, p = params.d, params.p
    lin = float(np.sum(rep.kinetic - rep.potential))
    return lin + mu * d * (p - 1) / (2 * p) * rep.interaction


def gn_ratio(state: State, params: ModelParams) -> float:
    """Gagliardo-Nirenberg quotient (uncoupled sum of |u_j u_k|^p)."""
    rep = report(state, params)
    kin = float(np.sum(rep.kinetic))
    mass = float(np.sum(rep.mass))
    if kin == 0 or mass == 0:
        raise ZeroState("Gagliardo-Nirenberg ratio undefined for the zero state")
    d, p = params.d, params.p
    rho = abs_pow(state.fields, p)
    num = interaction_of(rho, np.ones((state.m, state.m)), state.grid)
    den = kin ** ((p - 1) * d / 2) * mass ** ((d - p * (d - 2)) / 2)
    return num / den


# scaling operators


def _interp_matrix(grid, s: float) -> np.ndarray:
    """Matrix sampling the trigonometric interpolant at s * x along one axis."""
    n = grid.n
    k = grid.k_fft
    y = s * grid.x + grid.L
    basis = np.exp(1j * np.outer(y, k))
    nyq = n // 2
    basis[:, nyq] = np.cos(k[nyq] * y)
    # the interpolant is periodic; outside the box the contained field is zero
    outside = (s * grid.x < -grid.L) | (s * grid.x >= grid.L)
    basis[outside] = 0.0
    dft = np.fft.fft(np.eye(n), axis=0)
    return basis @ dft / n


def resample(state: State, s: float) -> State:
    """Fields evaluated at s * x by band-limited interpolation."""
    if s == 1.0:
        return state.copy()
    g = state.grid
    mat = _interp_matrix(g, s)
    f = state.fields
    for axis in range(1, g.d + 1):
        f = np.moveaxis(np.tensordot(mat, f, axes=([1], [axis])), 0, axis)
    return state.with_fields(f)


def check_containment(state: State) -> None:
    amp = np.abs(state.fields)
    peak = amp.max()
    if peak == 0:
        return
    g = state.grid
    edge = np.zeros(g.shape, dtype=bool)
    for axis in range(g.d):
        idx = [slice(None)] * g.d
        idx[axis] = 0
        edge[tuple(idx)] = True
        idx[axis] = -1
        edge[tuple(idx)] = True
    ratio = float(amp[:, edge].max() / peak)
    if ratio > CONTAINMENT_TOL:
        raise ContainmentLost(ratio)


def scale_exp(state: State, lam: float, alpha: float, beta: float) -> State:
    """u_j -> exp(alpha*lam) u_j(exp(-beta*lam) x)."""
    if lam == 0:
        return state.copy()
    out = resample(state, math.exp(-beta * lam)) * math.exp(alpha * lam)
    check_containment(out)
    return out


def dilate_l2(state: State, lam: float) -> State:
    """Mass-preserving dilation lam^(d/2) u(lam x)."""
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    if lam == 1:
        return state.copy()
    out = resample(state, lam) * lam ** (state.grid.d / 2)
    check_containment(out)
    return out
