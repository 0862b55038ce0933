"""Nonlinear tendencies of the primitive and limit systems.

Everything that is not the constant-coefficient linear part (the 1/eps
antisymmetric coupling, the Lame operator and the heat operators) is
evaluated pseudo-spectrally: derivatives in Fourier space, products and
the density factors 1/(1 + eps a) in physical space, result dealiased.
"""
from __future__ import annotations

import numpy as np

from ..errors import VacuumApproached
from ..spectral import GridSpec, SpectralField, fft, ifft
from .params import (
    BoussinesqState,
    ConductingState,
    NonConductingState,
    PhysParams,
    PotentialCache,
    PotentialSpec,
)

VACUUM_FLOOR = 0.1
SQ2 = np.sqrt(2.0)


def lame_hat(grid: GridSpec, uh: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """A u = mu Delta u + (lambda + mu) grad div u in Fourier space."""
    xi = grid.xi_full
    div = np.sum(xi * uh, axis=0)
    return -mu * grid.xi_abs**2 * uh - (lam + mu) * xi * div[None]


def _grad_tensor_hat(grid: GridSpec, uh: np.ndarray) -> np.ndarray:
    """G[i, j] = d_j u_i."""
    return 1j * grid.xi_full[None, :] * uh[:, None]


def _dissipation(G: np.ndarray, div: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """2 mu |Du|^2 + lambda (div u)^2 with Du the symmetrized gradient."""
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    return 2 * mu * np.sum(D * D, axis=(0, 1)) + lam * div * div


def _potential(pot, grid: GridSpec) -> PotentialCache | None:
    if pot is None:
        return None
    if isinstance(pot, PotentialSpec):
        pot = PotentialCache(pot, grid)
    return None if pot.is_zero else pot


class TendencyWork:
    """Physical-space quantities computed while evaluating a tendency."""

    umax: float = 0.0
    density_min: float = 1.0


def conducting_tendency(
    grid: GridSpec, p: PhysParams, pot: PotentialCache | None, t: float, bh, uh, th, work: TendencyWork | None = None
):
    """(N_b, N_u, N_theta) Fourier coefficients."""
    d = grid.dim
    G_hat = _grad_tensor_hat(grid, uh)
    stack = np.concatenate(
        [
            bh[None],
            uh,
            th[None],
            1j * grid.xi_full * bh[None],
            G_hat.reshape(d * d, *grid.shape),
            1j * grid.xi_full * th[None],
            lame_hat(grid, uh, p.mu, p.lam),
            (-(grid.xi_abs**2) * th)[None],
        ]
    )
    phys = ifft(stack, grid)
    i = 0
    b = phys[i]; i += 1
    u = phys[i : i + d]; i += d
    th_ = phys[i]; i += 1
    gb = phys[i : i + d]; i += d
    G = phys[i : i + d * d].reshape(d, d, *grid.shape); i += d * d
    gth = phys[i : i + d]; i += d
    Au = phys[i : i + d]; i += d
    lap_th = phys[i]
    div = np.einsum("ii...->...", G)
    if pot is not None:
        V, dtV, gV = pot.at(t)
    else:
        V = dtV = 0.0
        gV = np.zeros_like(gb)
    a = b + V
    dens = 1.0 + p.eps * a
    dmin = float(dens.min())
    if dmin < VACUUM_FLOOR:
        raise VacuumApproached(f"min(1 + eps a) = {dmin:.3g} < {VACUUM_FLOOR}")
    inv = 1.0 / dens
    ga = gb + gV
    adv_u = np.einsum("j...,ij...->i...", u, G)
    Nb = -np.sum(u * gb, axis=0) - dtV - (V * div + np.sum(u * gV, axis=0)) - b * div
    Nu = -adv_u + ((a - th_) * inv)[None] * ga - (p.eps * a * inv)[None] * Au
    Nth = (
        -np.sum(u * gth, axis=0)
        + p.eps * inv * _dissipation(G, div, p.mu, p.lam)
        - p.kappa * p.eps * a * inv * lap_th
        - th_ * div
    )
    if work is not None:
        work.umax = float(np.sqrt(np.sum(u * u, axis=0)).max())
        work.density_min = dmin
    out = fft(np.concatenate([Nb[None], Nu, Nth[None]]), grid) * grid.dealias_mask
    return out[0], out[1 : 1 + d], out[1 + d]


def nonconducting_tendency(
    grid: GridSpec, p: PhysParams, pot: PotentialCache | None, t: float, ah, uh, Rh, work: TendencyWork | None = None
):
    """(N_a, N_u, N_R) Fourier coefficients."""
    d = grid.dim
    G_hat = _grad_tensor_hat(grid, uh)
    stack = np.concatenate(
        [
            ah[None],
            uh,
            Rh[None],
            1j * grid.xi_full * ah[None],
            G_hat.reshape(d * d, *grid.shape),
            1j * grid.xi_full * Rh[None],
            lame_hat(grid, uh, p.mu, p.lam),
        ]
    )
    phys = ifft(stack, grid)
    i = 0
    a = phys[i]; i += 1
    u = phys[i : i + d]; i += d
    R = phys[i]; i += 1
    ga = phys[i : i + d]; i += d
    G = phys[i : i + d * d].reshape(d, d, *grid.shape); i += d * d
    gR = phys[i : i + d]; i += d
    Au = phys[i : i + d]
    div = np.einsum("ii...->...", G)
    if pot is not None:
        V, dtV, gV = pot.at(t)
    else:
        V = dtV = 0.0
        gV = np.zeros_like(ga)
    dens = 1.0 + p.eps * a
    dmin = float(dens.min())
    if dmin < VACUUM_FLOOR:
        raise VacuumApproached(f"min(1 + eps a) = {dmin:.3g} < {VACUUM_FLOOR}")
    inv = 1.0 / dens
    adv_u = np.einsum("j...,ij...->i...", u, G)
    Na = -np.sum(u * ga, axis=0) - a * div
    Nu = -adv_u + (a * inv)[None] * (gV + gR) - (p.eps * a * inv)[None] * Au
    NR = (
        -np.sum(u * gR, axis=0)
        - R * div
        + p.eps * _dissipation(G, div, p.mu, p.lam)
        - dtV
        - (V * div + np.sum(u * gV, axis=0))
    )
    if work is not None:
        work.umax = float(np.sqrt(np.sum(u * u, axis=0)).max())
        work.density_min = dmin
    out = fft(np.concatenate([Na[None], Nu, NR[None]]), grid) * grid.dealias_mask
    return out[0], out[1 : 1 + d], out[1 + d]


def boussinesq_tendency(
    grid: GridSpec,
    p: PhysParams,
    pot: PotentialCache | None,
    t: float,
    Th,
    vh,
    variant: str = "conducting",
    prime: bool = False,
    work: TendencyWork | None = None,
):
    """(N_Theta, N_v) for the limit systems; N_v is Leray-projected.

    conducting:  N_Theta = -v.grad Theta + sqrt2/2 (dt V + v.grad V),  N_v = -P(v.grad v) - sqrt2/2 P(Theta grad V)
    prime form:  N_Theta = -v.grad Theta + sqrt2/4 kappa Delta V,      N_v = -P(v.grad v) - sqrt2/2 P(Theta grad V)
    transport:   N_Theta = -v.grad Theta,                              N_v = -P(v.grad v) + P(Theta grad V)
    """
    d = grid.dim
    G_hat = _grad_tensor_hat(grid, vh)
    stack = np.concatenate([Th[None], vh, 1j * grid.xi_full * Th[None], G_hat.reshape(d * d, *grid.shape)])
    phys = ifft(stack, grid)
    T = phys[0]
    v = phys[1 : 1 + d]
    gT = phys[1 + d : 1 + 2 * d]
    G = phys[1 + 2 * d :].reshape(d, d, *grid.shape)
    NT = -np.sum(v * gT, axis=0)
    Nv = -np.einsum("j...,ij...->i...", v, G)
    extra_hat = None
    if pot is not None:
        V, dtV, gV = pot.at(t)
        if variant == "transport":
            Nv = Nv + T[None] * gV
        else:
            Nv = Nv - (SQ2 / 2) * T[None] * gV
            if prime:
                extra_hat = (SQ2 / 4) * p.kappa * pot.spec.modulation(t)[0] * pot.lap_hat
            else:
                NT = NT + (SQ2 / 2) * (dtV + np.sum(v * gV, axis=0))
    if work is not None:
        work.umax = float(np.sqrt(np.sum(v * v, axis=0)).max())
    out = fft(np.concatenate([NT[None], Nv]), grid) * grid.dealias_mask
    NTh = out[0]
    if extra_hat is not None:
        NTh = NTh + extra_hat
    Nvh = out[1:]
    xh = grid.xi_hat
    Nvh = Nvh - xh * np.sum(xh * Nvh, axis=0)[None]
    return NTh, Nvh


# --- public field-level wrappers ------------------------------------------------------


def rhs_conducting(state: ConductingState, params: PhysParams, V: PotentialSpec | PotentialCache | None = None):
    """Nonlinear tendency (b, u, theta) of the conducting system as SpectralFields."""
    g = state.grid
    nb, nu, nt = conducting_tendency(
        g, params, _potential(V, g), state.t, state.b.coeffs, state.u.coeffs, state.theta.coeffs
    )
    return SpectralField(g, nb), SpectralField(g, nu, "vector"), SpectralField(g, nt)


def rhs_nonconducting(state: NonConductingState, params: PhysParams, V: PotentialSpec | PotentialCache | None = None):
    g = state.grid
    na, nu, nr = nonconducting_tendency(
        g, params, _potential(V, g), state.t, state.a.coeffs, state.u.coeffs, state.R.coeffs
    )
    return SpectralField(g, na), SpectralField(g, nu, "vector"), SpectralField(g, nr)
