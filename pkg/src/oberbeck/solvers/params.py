"""Physical parameters, state containers and the external potential."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..spectral import GridSpec, SpectralField, fft


@dataclass(frozen=True)
class PhysParams:
    """Mach parameter and transport coefficients; nu = lambda + 2 mu."""

    eps: float
    mu: float = 1.0
    lam: float = -1.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.nu > 0:
            raise ValueError("nu = lambda + 2 mu must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")

    @property
    def nu(self) -> float:
        return self.lam + 2 * self.mu

    @property
    def mu_t(self) -> float:
        return self.mu / self.nu

    @property
    def lambda_t(self) -> float:
        return self.lam / self.nu

    @property
    def kappa_t(self) -> float:
        return self.kappa / self.nu

    @property
    def variant(self) -> str:
        return "conducting" if self.kappa > 0 else "nonconducting"


@dataclass(frozen=True, eq=False)
class ConductingState:
    b: SpectralField
    u: SpectralField
    theta: SpectralField
    t: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.b.grid

    def fields(self):
        return (self.b, self.u, self.theta)


@dataclass(frozen=True, eq=False)
class NonConductingState:
    a: SpectralField
    u: SpectralField
    R: SpectralField
    t: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.a.grid

    def fields(self):
        return (self.a, self.u, self.R)


@dataclass(frozen=True, eq=False)
class BoussinesqState:
    Theta: SpectralField
    v: SpectralField
    t: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.Theta.grid

    def fields(self):
        return (self.Theta, self.v)


def state_with(state, t: float, *coeffs):
    """Rebuild a state of the same type from raw coefficient arrays."""
    flds = [f.with_coeffs(c) for f, c in zip(state.fields(), coeffs)]
    return type(state)(*flds, t=t)


PROFILES = ("zero", "gaussian_bump", "modulated_bump")


@dataclass(frozen=True)
class PotentialSpec:
    """V(t, x) = amplitude * exp(-|x - c|^2 / (2 width^2)) * m(t).

    m(t) = 1 for ``gaussian_bump`` and 1 + mod_amplitude sin(mod_frequency t)
    for ``modulated_bump``; distances use the minimum periodic image.
    ``center=None`` means the box center.
    """

    profile: str = "zero"
    amplitude: float = 0.0
    width: float = 1.0
    center: tuple[float, ...] | None = None
    mod_amplitude: float = 0.0
    mod_frequency: float = 0.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        if self.profile != "zero" and not self.width > 0:
            raise ValueError("width must be positive")

    @property
    def is_zero(self) -> bool:
        return self.profile == "zero" or self.amplitude == 0.0

    @property
    def time_dependent(self) -> bool:
        return self.profile == "modulated_bump" and self.mod_amplitude != 0.0 and self.mod_frequency != 0.0

    def modulation(self, t: float) -> tuple[float, float]:
        """(m(t), m'(t))."""
        if self.profile == "modulated_bump":
            w = self.mod_frequency
            return 1.0 + self.mod_amplitude * math.sin(w * t), self.mod_amplitude * w * math.cos(w * t)
        return 1.0, 0.0

    def shape_values(self, grid: GridSpec) -> np.ndarray:
        """Spatial profile (without modulation) sampled on the grid."""
        if self.is_zero:
            return np.zeros(grid.shape)
        if grid.L / 2 < 7.5 * self.width:
            raise ValueError(
                f"potential width {self.width} too large for box {grid.L}: tail above 1e-12 at the box scale"
            )
        c = self.center if self.center is not None else (grid.L / 2,) * grid.dim
        r2 = np.zeros(grid.shape)
        for x, cx in zip(grid.coords(), c):
            dxx = (x - cx + grid.L / 2) % grid.L - grid.L / 2
            r2 = r2 + dxx**2
        return self.amplitude * np.exp(-r2 / (2 * self.width**2))

    def rescaled(self, eps: float, nu: float) -> "PotentialSpec":
        """Potential seen after (t, x) -> (eps^2 nu t, eps nu x) and V -> eps V."""
        s = eps * nu
        c = None if self.center is None else tuple(x / s for x in self.center)
        return replace(
            self,
            amplitude=self.amplitude * eps,
            width=self.width / s,
            center=c,
            mod_frequency=self.mod_frequency * eps * eps * nu,
        )


@dataclass
class PotentialCache:
    """Spectral data of V on one grid: shape coefficients, gradient and Laplacian."""

    spec: PotentialSpec
    grid: GridSpec
    shape_hat: np.ndarray = field(init=False)
    shape_real: np.ndarray = field(init=False)
    grad_real: np.ndarray = field(init=False)
    lap_hat: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.grid
        vals = self.spec.shape_values(g)
        self.shape_hat = fft(vals, g) * g.dealias_mask
        from ..spectral import ifft

        self.shape_real = ifft(self.shape_hat, g)
        self.grad_real = ifft(1j * g.xi_full * self.shape_hat[None], g)
        self.lap_hat = -(g.xi_abs**2) * self.shape_hat

    @property
    def is_zero(self) -> bool:
        return self.spec.is_zero

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(V, dtV, grad V) in physical space at time t."""
        m, dm = self.spec.modulation(t)
        return m * self.shape_real, dm * self.shape_real, m * self.grad_real

    def hat(self, t: float) -> np.ndarray:
        return self.spec.modulation(t)[0] * self.shape_hat

    def field(self, t: float = 0.0) -> SpectralField:
        return SpectralField(self.grid, self.hat(t))
