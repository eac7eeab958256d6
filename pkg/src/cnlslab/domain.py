"""Spatial grid, model parameters and the multi-component state container."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch, ValidationError

FOCUSING = -1
DEFOCUSING = 1
LINEAR = 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid on [-L, L)^d."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValidationError("d", f"unsupported dimension {self.d}")
        if int(self.n) != self.n or self.n % 2:
            raise ValidationError("n", "n must be even")
        if self.n < 8:
            raise ValidationError("n", "n must be >= 8")
        if not self.L > 0:
            raise ValidationError("L", "L must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def weight(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def x(self) -> np.ndarray:
        """1D node coordinates, identical along every axis."""
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def k_fft(self) -> np.ndarray:
        """1D wavenumbers in FFT storage order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @property
    def wavenumbers(self) -> np.ndarray:
        """1D wavenumbers sorted ascending: (pi/L) * {-n/2, ..., n/2-1}."""
        return np.fft.fftshift(self.k_fft)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.x] * self.d), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        """|x|^2 at every node."""
        out = np.zeros(self.shape)
        for c in self.coords:
            out += c * c
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 in FFT storage order."""
        ks = np.meshgrid(*([self.k_fft] * self.d), indexing="ij")
        out = np.zeros(self.shape)
        for k in ks:
            out += k * k
        return out

    @cached_property
    def tail_mask(self) -> np.ndarray:
        """Modes with some |k_i| in the top 10% of the resolved band."""
        kmax = np.pi / self.h
        ks = np.meshgrid(*([np.abs(self.k_fft)] * self.d), indexing="ij")
        mask = np.zeros(self.shape, dtype=bool)
        for k in ks:
            mask |= k > 0.9 * kmax
        return mask

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Nodes within 5% of the box edge along some axis."""
        edge = np.abs(self.x) >= 0.95 * self.L
        grids = np.meshgrid(*([edge] * self.d), indexing="ij")
        mask = np.zeros(self.shape, dtype=bool)
        for g in grids:
            mask |= g
        return mask

    def integrate(self, f) -> float:
        """Rectangle-rule quadrature over the last d axes."""
        axes = tuple(range(-self.d, 0))
        return np.sum(f, axis=axes) * self.weight

    def fft(self, u):
        return np.fft.fftn(u, axes=tuple(range(-self.d, 0)))

    def ifft(self, u):
        return np.fft.ifftn(u, axes=tuple(range(-self.d, 0)))

    def grad_sq(self, u) -> np.ndarray:
        """Spectral ||grad u||^2 for each leading index of u."""
        uh = self.fft(u)
        axes = tuple(range(-self.d, 0))
        return np.sum(self.k2 * np.abs(uh) ** 2, axis=axes) * self.weight / self.size

    def laplacian(self, u):
        return self.ifft(-self.k2 * self.fft(u))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Dimension, exponent, sign and coupling of the coupled system."""

    d: int
    m: int
    p: float
    mu: int
    a: np.ndarray

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValidationError("d", f"unsupported dimension {self.d}")
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError("m", "component count must be >= 1")
        if not self.p > 1:
            raise ValidationError("p", "exponent must exceed 1")
        if self.mu not in (FOCUSING, LINEAR, DEFOCUSING):
            raise ValidationError("mu", "must be -1, 0 or +1")
        a = np.array(self.a, dtype=float)
        if a.size == self.m * self.m and a.ndim <= 1:
            a = a.reshape(self.m, self.m)
        if a.shape != (self.m, self.m):
            raise ValidationError("coupling", f"expected {self.m}x{self.m} entries")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValidationError("coupling", "entries must be finite and nonnegative")
        if not np.array_equal(a, a.T):
            raise ValidationError("coupling", "not symmetric")
        if self.mu != LINEAR and not np.any(a > 0):
            raise ValidationError("coupling", "nonlinear model needs a positive entry")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def uniform(cls, d, m, p, mu=FOCUSING, coupling=1.0):
        return cls(d=d, m=m, p=p, mu=mu, a=np.full((m, m), float(coupling)))

    def replace(self, **changes) -> "ModelParams":
        kw = dict(d=self.d, m=self.m, p=self.p, mu=self.mu, a=self.a)
        kw.update(changes)
        return ModelParams(**kw)

    @property
    def p_lower(self) -> float:
        return l2_critical_exponent(self.d)

    @property
    def p_upper(self) -> float:
        return energy_critical_exponent(self.d)

    @property
    def regime(self) -> str:
        """'subcritical', 'critical' or 'supercritical' relative to p^*."""
        if math.isclose(self.p, self.p_upper):
            return "critical"
        return "subcritical" if self.p < self.p_upper else "supercritical"

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "p": self.p,
            "mu": self.mu,
            "coupling": self.a.ravel().tolist(),
        }


def l2_critical_exponent(d: int) -> float:
    return 1.0 + 2.0 / d


def energy_critical_exponent(d: int) -> float:
    return d / (d - 2.0) if d > 2 else math.inf


@dataclass(frozen=True, eq=False)
class State:
    """m complex fields sampled on a grid; ``fields`` has shape (m, n, ..., n)."""

    grid: Grid
    fields: np.ndarray
    notes: tuple = field(default=())

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=complex)
        if f.shape[1:] != self.grid.shape:
            if f.shape == self.grid.shape:
                f = f[np.newaxis]
            else:
                raise GridMismatch(
                    f"field shape {f.shape} incompatible with grid {self.grid.shape}"
                )
        object.__setattr__(self, "fields", f)

    @property
    def m(self) -> int:
        return self.fields.shape[0]

    def with_fields(self, fields, notes=None) -> "State":
        return State(self.grid, fields, self.notes if notes is None else notes)

    def __add__(self, other: "State") -> "State":
        check_same_grid(self, other)
        return self.with_fields(self.fields + other.fields)

    def __sub__(self, other: "State") -> "State":
        check_same_grid(self, other)
        return self.with_fields(self.fields - other.fields)

    def __mul__(self, c) -> "State":
        return self.with_fields(self.fields * c)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.fields)))

    def copy(self) -> "State":
        return State(self.grid, self.fields.copy(), self.notes)


def check_same_grid(*states: State) -> None:
    g = states[0].grid
    for s in states[1:]:
        if s.grid != g:
            raise GridMismatch(f"states live on different grids: {g} vs {s.grid}")


def build_grid(d: int, n: int, L: float) -> Grid:
    return Grid(d, n, L)


def _per_component(value, m, name):
    arr = np.atleast_1d(np.asarray(value))
    if arr.size == 1:
        arr = np.repeat(arr, m)
    if arr.size != m:
        raise ValidationError(name, f"expected 1 or {m} values, got {arr.size}")
    return arr


def gaussian_state(grid: Grid, m: int = 1, amp=1.0, width=1.0, center=None) -> State:
    """u_j(x) = amp_j * exp(-|x - center|^2 / (2 width_j^2))."""
    amps = _per_component(amp, m, "amp").astype(complex)
    widths = _per_component(width, m, "width").astype(float)
    if np.any(widths <= 0):
        raise ValidationError("width", "widths must be positive")
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    c = np.broadcast_to(c, (grid.d,))
    r2 = np.zeros(grid.shape)
    for xi, ci in zip(grid.coords, c):
        r2 += (xi - ci) ** 2
    fields = np.stack([a * np.exp(-r2 / (2 * w * w)) for a, w in zip(amps, widths)])

    notes = []
    if widths.min() < 4 * grid.h:
        notes.append(f"under-resolved: width {widths.min():g} < 4h = {4 * grid.h:g}")
    reach = 6 * widths.max() + float(np.linalg.norm(c))
    if grid.L < reach:
        notes.append(f"not contained: L = {grid.L:g} < {reach:g}")
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return State(grid, fields, tuple(notes))


def harmonic_ground(grid: Grid, m: int = 1) -> State:
    """pi^(-d/4) exp(-|x|^2/2): unit mass, eigenvalue d of -Lap + |x|^2."""
    return gaussian_state(grid, m, amp=np.pi ** (-grid.d / 4), width=1.0)


def sigma_norm_sq(state: State) -> float:
    """Sum over components of ||u||^2 + ||grad u||^2 + ||x u||^2."""
    g = state.grid
    dens = np.abs(state.fields) ** 2
    mass = g.integrate(dens)
    pot = g.integrate(dens * g.r2)
    kin = g.grad_sq(state.fields)
    return float(np.sum(mass + pot + kin))


def smooth_noise(grid: Grid, m: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited complex noise under a confining Gaussian envelope."""
    shape = (m,) + grid.shape
    white = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    filtered = grid.ifft(grid.fft(white) * np.exp(-grid.k2 / 2.0))
    return filtered * np.exp(-grid.r2 / 2.0)


def perturbed_state(base: State, seed: int, eps: float) -> State:
    """base + perturbation whose Sigma-norm is eps * ||base||_Sigma."""
    if eps < 0:
        raise ValidationError("eps", "must be nonnegative")
    if eps == 0:
        return base.copy()
    rng = np.random.default_rng(seed)
    noise = State(base.grid, smooth_noise(base.grid, base.m, rng))
    scale = math.sqrt(sigma_norm_sq(base)) or 1.0
    noise_norm = math.sqrt(sigma_norm_sq(noise))
    return base.with_fields(base.fields + noise.fields * (eps * scale / noise_norm))
