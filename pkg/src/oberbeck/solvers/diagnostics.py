"""Mode splitting, the buoyancy identity, rescaling and the small-data monitor."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..besov import BesovParams, block_norms, filter_bank, weights
from ..errors import IncompatibleScale
from ..spectral import GridSpec, SpectralField, dealias, fft, ifft, leray_project
from .params import (
    BoussinesqState,
    ConductingState,
    NonConductingState,
    PhysParams,
    PotentialCache,
    PotentialSpec,
)

SQ2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ModeSplit:
    """Oscillating pair (q, Qu) and incompressible pair (Theta, Pu).

    For the non-conducting system ``q`` holds R (the oscillating scalar).
    """

    q: SpectralField
    Theta: SpectralField
    Qu: SpectralField
    Pu: SpectralField


def _V_field(V, grid: GridSpec, t: float) -> SpectralField:
    if V is None:
        return SpectralField.zeros(grid)
    if isinstance(V, SpectralField):
        return V
    if isinstance(V, PotentialSpec):
        V = PotentialCache(V, grid)
    return V.field(t)


def mode_split(state, V=None) -> ModeSplit:
    if not isinstance(state, (ConductingState, NonConductingState)):
        raise TypeError(f"cannot split {type(state).__name__}")
    Qu = leray_project(state.u, "Q")
    Pu = state.u - Qu
    if isinstance(state, ConductingState):
        q = (state.theta + state.b) * (1 / SQ2)
        Th = (state.theta - state.b) * (1 / SQ2)
        return ModeSplit(q, Th, Qu, Pu)
    Vf = _V_field(V, state.grid, state.t)
    return ModeSplit(state.R, state.a - state.R - Vf, Qu, Pu)


def reconstruct_conducting(split: ModeSplit, t: float = 0.0) -> ConductingState:
    b = (split.q - split.Theta) * (1 / SQ2)
    th = (split.q + split.Theta) * (1 / SQ2)
    return ConductingState(b, split.Qu + split.Pu, th, t)


def _prod_hat(f: np.ndarray, g: np.ndarray, grid: GridSpec) -> np.ndarray:
    return fft(f * g, grid) * grid.dealias_mask


def relation_check(state: ConductingState, V=None) -> float:
    """Relative residual of sqrt2 P(theta grad a) = P(Theta grad V) + P(q grad V) + 2 P(q grad b)."""
    g = state.grid
    Vf = _V_field(V, g, state.t)
    sp = mode_split(state)
    a = state.b + Vf
    grad = lambda z: ifft(1j * g.xi_full * z.coeffs[None], g)  # noqa: E731
    th, q, Th = state.theta.to_real(), sp.q.to_real(), sp.Theta.to_real()
    gV, ga, gb = grad(Vf), grad(a), grad(state.b)

    def P(x):
        return leray_project(SpectralField(g, x, "vector"), "P").coeffs

    lhs = SQ2 * P(_prod_hat(th[None], ga, g))
    rhs = P(_prod_hat(Th[None], gV, g)) + P(_prod_hat(q[None], gV, g)) + 2 * P(_prod_hat(q[None], gb, g))
    nl = np.sqrt(np.sum(np.abs(lhs) ** 2))
    res = np.sqrt(np.sum(np.abs(lhs - rhs) ** 2))
    return float(res / nl) if nl > 0 else float(res)


# --- rescaling -----------------------------------------------------------------------------


def dyadic_exponent(eps: float, nu: float) -> int:
    """m with eps * nu = 2^m; IncompatibleScale otherwise."""
    s = eps * nu
    if not s > 0:
        raise IncompatibleScale("eps * nu must be positive")
    m = math.log2(s)
    if abs(m - round(m)) > 1e-12:
        raise IncompatibleScale(f"eps * nu = {s} is not a power of two")
    return int(round(m))


def rescale_grid(grid: GridSpec, eps: float, nu: float) -> GridSpec:
    dyadic_exponent(eps, nu)
    return replace(grid, L=grid.L / (eps * nu))


def rescale_params(params: PhysParams) -> PhysParams:
    """Coefficients at (eps, nu) = (1, 1): (lambda, mu, kappa) / nu."""
    nu = params.nu
    return PhysParams(1.0, params.mu / nu, params.lam / nu, params.kappa / nu)


def rescale_state(state, eps: float, nu: float):
    """(b, u, theta)(t, x) -> eps (b, u, theta)(eps^2 nu t, eps nu x) on the stretched box.

    Integer wavevectors are preserved, so the map is a coefficient scaling on
    a grid of side L / (eps nu); box and block labels shift by log2(eps nu).
    """
    g2 = rescale_grid(state.grid, eps, nu)
    flds = [SpectralField(g2, f.coeffs * eps, f.rank) for f in state.fields()]
    return type(state)(*flds, t=state.t / (eps * eps * nu))


def unrescale_state(state, eps: float, nu: float):
    g2 = replace(state.grid, L=state.grid.L * eps * nu)
    dyadic_exponent(eps, nu)
    flds = [SpectralField(g2, f.coeffs / eps, f.rank) for f in state.fields()]
    return type(state)(*flds, t=state.t * eps * eps * nu)


# --- small-data monitor ------------------------------------------------------------------------


def x_functional(states: Sequence[ConductingState], params: PhysParams) -> tuple[np.ndarray, np.ndarray]:
    """(t', X(t')) on the rescaled (eps = nu = 1) trajectory.

    X(t) = ||b||_{L~^inf_t(B~^{3/2,-}_1)} + ||u||_{L~^inf_t(B^{1/2}_{2,1})} + ||theta||_{L~^inf_t(B~^{-1/2,+}_1)}
           + int_0^t (||b||_{B~^{3/2,+}_1} + ||u||_{B^{5/2}_{2,1}} + ||theta||_{B~^{3/2,+}_1}).
    """
    eps, nu = params.eps, params.nu
    res = [rescale_state(s, eps, nu) for s in states]
    g = res[0].grid
    bank = filter_bank(g)
    tb = np.array([block_norms(s.b, 2, bank) for s in res])
    tu = np.array([block_norms(s.u, 2, bank) for s in res])
    tt = np.array([block_norms(s.theta, 2, bank) for s in res])
    t = np.array([s.t for s in res])
    w = lambda s, sign: weights(bank, BesovParams(s, 2, 1.0, sign))  # noqa: E731
    sup = (
        np.maximum.accumulate(tb, axis=0) @ w(1.5, "-")
        + np.maximum.accumulate(tu, axis=0) @ w(0.5, None)
        + np.maximum.accumulate(tt, axis=0) @ w(-0.5, "+")
    )
    inst = tb @ w(1.5, "+") + tu @ w(2.5, None) + tt @ w(1.5, "+")
    integ = cumulative_trapezoid(inst, t, initial=0.0) if len(t) > 1 else np.zeros(1)
    return t, sup + integ
