"""Exponential time differencing for the compressible and limit systems.

The linear part is integrated exactly per Fourier mode: a 3x3 block on
(b, d, theta) (resp. (a, d, R)) built from the linmodes generator with the
singular 1/eps coupling, and the scalar heat factor on w = P u. The
nonlinear tendency enters through phi-function weights (Cox-Matthews
ETDRK3 by default, ETDRK2 available).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..errors import CflViolation
from ..linmodes import mode_generator, phi_functions
from ..spectral import GridSpec
from .params import (
    BoussinesqState,
    ConductingState,
    NonConductingState,
    PhysParams,
    PotentialCache,
    PotentialSpec,
    state_with,
)
from .rhs import TendencyWork, boussinesq_tendency, conducting_tendency, nonconducting_tendency

CFL_CONSTANT = 0.5
SCHEMES = ("etdrk3", "etdrk2")


def _block_phi(A: np.ndarray) -> tuple[np.ndarray, ...]:
    """(e^A, phi1(A), phi2(A), phi3(A)) for a batch of 3x3 matrices via one augmented exponential."""
    m = A.shape[0]
    B = np.zeros((m, 12, 12))
    B[:, :3, :3] = A
    eye = np.eye(3)
    B[:, 0:3, 3:6] = eye
    B[:, 3:6, 6:9] = eye
    B[:, 6:9, 9:12] = eye
    E = expm(B)
    return E[:, :3, :3], E[:, :3, 3:6], E[:, :3, 6:9], E[:, :3, 9:12]


def _gather(mats: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    """(nuniq, 3, 3) -> (3, 3, *grid) by unique-radius lookup."""
    return np.moveaxis(mats[inverse], (-2, -1), (0, 1)).copy()


def _matvec(M: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", M, Y)


@dataclass
class _Weights:
    E: object
    Eh: object
    Ph: object
    P1: object
    P2: object
    W0: object
    Wa: object
    Wb: object


def _scalar_weights(lam: np.ndarray, h: float) -> _Weights:
    e, p1, p2, p3 = phi_functions(lam * h)
    eh, ph1, _, _ = phi_functions(lam * h / 2)
    return _Weights(
        E=e, Eh=eh, Ph=(h / 2) * ph1, P1=h * p1, P2=h * p2,
        W0=h * (p1 - 3 * p2 + 4 * p3), Wa=h * 4 * (p2 - 2 * p3), Wb=h * (4 * p3 - p2),
    )


def _block_weights(A_unique: np.ndarray, inverse: np.ndarray, h: float) -> _Weights:
    e, p1, p2, p3 = _block_phi(h * A_unique)
    eh, ph1, _, _ = _block_phi(h * A_unique / 2)
    g = lambda m: _gather(m, inverse)  # noqa: E731
    return _Weights(
        E=g(e), Eh=g(eh), Ph=g((h / 2) * ph1), P1=g(h * p1), P2=g(h * p2),
        W0=g(h * (p1 - 3 * p2 + 4 * p3)), Wa=g(h * 4 * (p2 - 2 * p3)), Wb=g(h * (4 * p3 - p2)),
    )


class _ETDCore:
    """Generic ETD stepping on a list of components, each with its own linear action."""

    def __init__(self, scheme: str):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        self.scheme = scheme

    # subclasses provide: _lin(name, Y) applying weight `name`, _N(Y, t) returning tendency list
    def advance(self, Y: list, t: float, h: float, nonlinear: bool, check_cfl=None) -> list:
        lin = self._lin
        if not nonlinear:
            return lin("E", Y)
        work = TendencyWork()
        N0 = self._N(Y, t, work)
        if check_cfl is not None:
            check_cfl(work.umax)
        if self.scheme == "etdrk2":
            a = _add(lin("E", Y), lin("P1", N0))
            Na = self._N(a, t + h, None)
            return _add(a, lin("P2", _sub(Na, N0)))
        a = _add(lin("Eh", Y), lin("Ph", N0))
        Na = self._N(a, t + h / 2, None)
        b = _add(lin("E", Y), lin("P1", _sub(_scale(Na, 2.0), N0)))
        Nb = self._N(b, t + h, None)
        return _add(_add(_add(lin("E", Y), lin("W0", N0)), lin("Wa", Na)), lin("Wb", Nb))


def _add(x, y):
    return [a + b for a, b in zip(x, y)]


def _sub(x, y):
    return [a - b for a, b in zip(x, y)]


def _scale(x, c):
    return [c * a for a in x]


class CompressibleStepper(_ETDCore):
    """Stepper for the conducting (b, u, theta) or non-conducting (a, u, R) system.

    The internal representation is Y = (s0, d, s2) with d = i xihat . u and
    W = P u; the velocity is reassembled as u = W - i xihat d.
    """

    def __init__(
        self,
        grid: GridSpec,
        params: PhysParams,
        potential: PotentialSpec | None,
        dt: float,
        variant: str = "conducting",
        scheme: str = "etdrk3",
        nonlinear: bool = True,
        cfl: float = CFL_CONSTANT,
    ):
        super().__init__(scheme)
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.params, self.dt, self.variant = grid, params, float(dt), variant
        self.nonlinear, self.cfl = nonlinear, cfl
        self.pot = None
        if potential is not None and not potential.is_zero:
            self.pot = PotentialCache(potential, grid)
        self._tend = conducting_tendency if variant == "conducting" else nonconducting_tendency
        k2u, inv = np.unique(grid.k2_int, return_inverse=True)
        inv = inv.reshape(grid.shape)
        r = np.sqrt(k2u.astype(float)) * grid.k_fundamental
        e, nu = params.eps, params.nu
        A = mode_generator(e * nu * r, params.kappa_t, variant) / (e * e * nu)
        self.wb = _block_weights(A, inv, self.dt)
        self.ws = _scalar_weights(-params.mu * grid.xi_abs**2, self.dt)

    def _lin(self, name: str, Y: list) -> list:
        M = getattr(self.wb, name)
        s = getattr(self.ws, name)
        return [_matvec(M, Y[0]), s * Y[1]]

    def split(self, c0, uh, c2):
        xh = self.grid.xi_hat
        d = 1j * np.sum(xh * uh, axis=0)
        W = uh + 1j * xh * d[None]
        return [np.stack([c0, d, c2]), W]

    def merge(self, Y):
        xh = self.grid.xi_hat
        uh = Y[1] - 1j * xh * Y[0][1][None]
        return Y[0][0], uh, Y[0][2]

    def _N(self, Y, t, work):
        c0, uh, c2 = self.merge(Y)
        n0, nu_, n2 = self._tend(self.grid, self.params, self.pot, t, c0, uh, c2, work)
        return self.split(n0, nu_, n2)

    def _check_cfl(self, umax: float) -> None:
        if umax > 0 and self.dt * umax / self.grid.dx > self.cfl:
            raise CflViolation(f"dt={self.dt} exceeds CFL bound {self.cfl * self.grid.dx / umax:.3g}")

    def step(self, state):
        c0, uh, c2 = (f.coeffs * self.grid.dealias_mask for f in state.fields())
        Y = self.split(c0, uh, c2)
        Y = self.advance(Y, state.t, self.dt, self.nonlinear, self._check_cfl)
        return state_with(state, state.t + self.dt, *self.merge(Y))


class BoussinesqStepper(_ETDCore):
    """Limit systems: Theta with heat factor kappa/2 (conducting) or none (transport); v with mu and projection."""

    def __init__(
        self,
        grid: GridSpec,
        params: PhysParams,
        potential: PotentialSpec | None,
        dt: float,
        variant: str = "conducting",
        prime: bool = False,
        scheme: str = "etdrk3",
        cfl: float = CFL_CONSTANT,
    ):
        super().__init__(scheme)
        if variant not in ("conducting", "transport"):
            raise ValueError("variant must be 'conducting' or 'transport'")
        self.grid, self.params, self.dt, self.variant, self.prime, self.cfl = grid, params, float(dt), variant, prime, cfl
        self.pot = None
        if potential is not None and not potential.is_zero:
            self.pot = PotentialCache(potential, grid)
        k2 = grid.xi_abs**2
        diff = params.kappa / 2 if variant == "conducting" else 0.0
        self.wT = _scalar_weights(-diff * k2, self.dt)
        self.wv = _scalar_weights(-params.mu * k2, self.dt)

    def _lin(self, name, Y):
        return [getattr(self.wT, name) * Y[0], getattr(self.wv, name) * Y[1]]

    def _N(self, Y, t, work):
        NT, Nv = boussinesq_tendency(self.grid, self.params, self.pot, t, Y[0], Y[1], self.variant, self.prime, work)
        return [NT, Nv]

    def _check_cfl(self, umax):
        if umax > 0 and self.dt * umax / self.grid.dx > self.cfl:
            raise CflViolation(f"dt={self.dt} exceeds CFL bound {self.cfl * self.grid.dx / umax:.3g}")

    def step(self, state: BoussinesqState) -> BoussinesqState:
        g = self.grid
        Th = state.Theta.coeffs * g.dealias_mask
        vh = state.v.coeffs * g.dealias_mask
        xh = g.xi_hat
        vh = vh - xh * np.sum(xh * vh, axis=0)[None]
        Y = self.advance([Th, vh], state.t, self.dt, True, self._check_cfl)
        vh = Y[1] - xh * np.sum(xh * Y[1], axis=0)[None]
        return state_with(state, state.t + self.dt, Y[0], vh)


# --- one-shot convenience API -----------------------------------------------------------

_CACHE: dict = {}


def _cached(key, factory):
    if key not in _CACHE:
        if len(_CACHE) > 8:
            _CACHE.clear()
        _CACHE[key] = factory()
    return _CACHE[key]


def step_conducting(state: ConductingState, params: PhysParams, V: PotentialSpec | None, dt: float, scheme: str = "etdrk3"):
    st = _cached(
        ("c", state.grid, params, V, dt, scheme),
        lambda: CompressibleStepper(state.grid, params, V, dt, "conducting", scheme),
    )
    return st.step(state)


def step_nonconducting(state: NonConductingState, params: PhysParams, V: PotentialSpec | None, dt: float, scheme: str = "etdrk3"):
    st = _cached(
        ("n", state.grid, params, V, dt, scheme),
        lambda: CompressibleStepper(state.grid, params, V, dt, "nonconducting", scheme),
    )
    return st.step(state)


def step_boussinesq(
    state: BoussinesqState, params: PhysParams, V: PotentialSpec | None, dt: float, variant: str = "conducting", prime: bool = False
):
    st = _cached(
        ("b", state.grid, params, V, dt, variant, prime),
        lambda: BoussinesqStepper(state.grid, params, V, dt, variant, prime),
    )
    return st.step(state)


def integrate(stepper, state, nsteps: int, stride: int = 1, callback=None):
    """Advance ``nsteps`` steps, returning the states at every ``stride``-th step (including the initial one)."""
    out = [state]
    if callback:
        callback(0, state)
    for k in range(1, nsteps + 1):
        state = stepper.step(state)
        if k % stride == 0:
            out.append(state)
            if callback:
                callback(k, state)
    return out
