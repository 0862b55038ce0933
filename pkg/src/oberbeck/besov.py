"""Littlewood-Paley blocks, (hybrid) homogeneous Besov norms, time-Besov norms
and the Bony paraproduct decomposition on a periodic grid."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import BlockOutOfRange, EmptySequence, NormDivergent
from .spectral import GridSpec, SpectralField, dealias, fft, ifft, lp_norm_real

_CHI_INNER = 0.75
_CHI_OUTER = 4.0 / 3.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _bump_integral(tau: np.ndarray) -> np.ndarray:
    """int_{-1}^{tau} exp(-1/(1-t^2)) dt by Gauss-Legendre on [-1, tau]."""
    tau = np.asarray(tau, dtype=float)
    half = (tau + 1.0) / 2.0
    t = -1.0 + half[..., None] * (_GL_NODES + 1.0)
    return half * np.sum(_GL_WEIGHTS * _bump(t), axis=-1)


_BUMP_TOTAL = float(_bump_integral(np.array(1.0)))


def chi_profile(rho: np.ndarray) -> np.ndarray:
    """Smooth radial cutoff: 1 on [0, 3/4], 0 on [4/3, inf), non-increasing in between."""
    rho = np.asarray(rho, dtype=float)
    out = np.where(rho <= _CHI_INNER, 1.0, 0.0)
    mid = (rho > _CHI_INNER) & (rho < _CHI_OUTER)
    if np.any(mid):
        tau = 2.0 * (rho[mid] - _CHI_INNER) / (_CHI_OUTER - _CHI_INNER) - 1.0
        out[mid] = 1.0 - _bump_integral(tau) / _BUMP_TOTAL
    return np.clip(out, 0.0, 1.0)


def phi_profile(rho: np.ndarray) -> np.ndarray:
    return chi_profile(np.asarray(rho) / 2.0) - chi_profile(rho)


class DyadicFilterBank:
    """Block multipliers phi(2^-j D) for j in [j_min, j_max] on one grid.

    ``j_min`` is chosen so that S_{j_min} only keeps the mean mode and the
    ring j_min reaches the fundamental frequency; ``j_max`` is the smallest
    index whose low-pass chi(2^-(j_max+1) xi) equals 1 on every grid mode, so
    the partition of unity is exact on the grid.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.j_min = math.floor(math.log2(_CHI_INNER * grid.k_fundamental))
        corner = grid.xi_abs.max()
        j = self.j_min
        while _CHI_INNER * 2.0 ** (j + 1) < corner:
            j += 1
        self.j_max = j
        self._unique_r, self._inverse = np.unique(grid.k2_int, return_inverse=True)
        self._unique_r = np.sqrt(self._unique_r.astype(float)) * grid.k_fundamental
        self._inverse = self._inverse.reshape(grid.shape)
        self._phi_cache: dict[int, np.ndarray] = {}
        self._s_cache: dict[int, np.ndarray] = {}

    @property
    def js(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @property
    def nblocks(self) -> int:
        return self.j_max - self.j_min + 1

    def _check(self, j: int) -> None:
        if not self.j_min <= j <= self.j_max:
            raise BlockOutOfRange(f"block {j} outside [{self.j_min}, {self.j_max}]")

    def phi(self, j: int) -> np.ndarray:
        self._check(j)
        if j not in self._phi_cache:
            m = phi_profile(self._unique_r * 2.0**-j)[self._inverse]
            m.setflags(write=False)
            self._phi_cache[j] = m
        return self._phi_cache[j]

    def low_pass(self, j: int) -> np.ndarray:
        """S_j = chi(2^-j D); defined for every integer j."""
        if j not in self._s_cache:
            m = chi_profile(self._unique_r * 2.0**-j)[self._inverse]
            m.setflags(write=False)
            self._s_cache[j] = m
        return self._s_cache[j]

    def residue(self) -> np.ndarray:
        return self.low_pass(self.j_min)


_BANKS: dict[GridSpec, DyadicFilterBank] = {}


def filter_bank(grid: GridSpec) -> DyadicFilterBank:
    """Shared bank per grid (multipliers are tabulated once)."""
    if grid not in _BANKS:
        _BANKS[grid] = DyadicFilterBank(grid)
    return _BANKS[grid]


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    alpha: float = 1.0
    sign: str | None = None  # "+", "-" or None for the plain norm

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        if self.sign not in ("+", "-", None):
            raise ValueError("sign must be '+', '-' or None")


def dyadic_block(z: SpectralField, j: int, bank: DyadicFilterBank) -> SpectralField:
    return z.with_coeffs(z.coeffs * bank.phi(j))


def low_high_split(z: SpectralField, alpha: float, bank: DyadicFilterBank) -> tuple[SpectralField, SpectralField]:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lo = np.zeros(z.grid.shape)
    hi = np.zeros(z.grid.shape)
    for j in bank.js:
        if 2.0**j * alpha <= 1.0:
            lo = lo + bank.phi(j)
        else:
            hi = hi + bank.phi(j)
    return z.with_coeffs(z.coeffs * lo), z.with_coeffs(z.coeffs * hi)


def block_norms(z: SpectralField, p: float, bank: DyadicFilterBank) -> np.ndarray:
    """||Delta_j z||_{L^p} for every j in the bank (vector fields: pointwise Euclidean norm)."""
    out = np.empty(bank.nblocks)
    for i, j in enumerate(bank.js):
        vals = ifft(z.coeffs * bank.phi(j), z.grid)
        out[i] = lp_norm_real(vals, p, z.grid, vector=z.is_vector)
    return out


def weights(bank: DyadicFilterBank, params: BesovParams) -> np.ndarray:
    """2^{js} min(1/alpha, 2^j)^{+-1} (plain: 2^{js})."""
    js = bank.js.astype(float)
    w = 2.0 ** (js * params.s)
    if params.sign is None:
        return w
    m = np.minimum(1.0 / params.alpha, 2.0**js)
    return w * (m if params.sign == "+" else 1.0 / m)


def tail_ratio(terms: np.ndarray) -> float:
    """Ratio of the top weighted block to its neighbour (0 when both vanish)."""
    if len(terms) < 2:
        return 0.0
    last, prev = terms[-1], terms[-2]
    if last == 0:
        return 0.0
    return float(last / prev) if prev > 0 else math.inf


def _finish(terms: np.ndarray, check_tail: bool) -> float:
    if check_tail:
        tr = tail_ratio(terms)
        if tr > 0.5:
            raise NormDivergent(f"tail ratio {tr:.3g} > 0.5 at j_max")
    return float(np.sum(terms))


def besov_norm(z: SpectralField, s: float, p: float, bank: DyadicFilterBank, *, check_tail: bool = True) -> float:
    """sum_j 2^{js} ||Delta_j z||_{L^p}. The mean mode is never seen by the blocks."""
    terms = weights(bank, BesovParams(s, p)) * block_norms(z, p, bank)
    return _finish(terms, check_tail)


def hybrid_norm(z: SpectralField, params: BesovParams, bank: DyadicFilterBank, *, check_tail: bool = True) -> float:
    terms = weights(bank, params) * block_norms(z, params.p, bank)
    return _finish(terms, check_tail)


def hybrid_norm_split(z: SpectralField, params: BesovParams, bank: DyadicFilterBank) -> float:
    """Split form ||z^l||_{B^{s+-1}} + alpha^{-+1} ||z^h||_{B^s}, with each part a sum over its own blocks."""
    if params.sign is None:
        return besov_norm(z, params.s, params.p, bank, check_tail=False)
    bn = block_norms(z, params.p, bank)
    js = bank.js.astype(float)
    low = 2.0**js * params.alpha <= 1.0
    sh = 1.0 if params.sign == "+" else -1.0
    lo = np.sum(2.0 ** (js[low] * (params.s + sh)) * bn[low])
    hi = params.alpha ** (-sh) * np.sum(2.0 ** (js[~low] * params.s) * bn[~low])
    return float(lo + hi)


def time_block_norms(block_traces: np.ndarray, times: Sequence[float], q: float) -> np.ndarray:
    """Per-block L^q_T norms of a (ntimes, nblocks) array of block norms."""
    tr = np.asarray(block_traces, dtype=float)
    if tr.ndim != 2 or tr.shape[0] == 0:
        raise EmptySequence("no snapshots")
    t = np.asarray(times, dtype=float)
    if len(t) != tr.shape[0]:
        raise ValueError("times and snapshots differ in length")
    if np.isinf(q):
        return tr.max(axis=0)
    if len(t) == 1:
        return np.zeros(tr.shape[1])
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("snapshots must be uniformly spaced in time")
    return trapezoid(tr**q, t, axis=0) ** (1.0 / q)


def time_besov_from_blocks(block_traces: np.ndarray, times, q: float, params: BesovParams, bank: DyadicFilterBank) -> float:
    return float(np.sum(weights(bank, params) * time_block_norms(block_traces, times, q)))


def time_besov_norm(
    snapshots: Sequence[SpectralField], times: Sequence[float], q: float, params: BesovParams, bank: DyadicFilterBank
) -> float:
    """L~^q_T(B^s_{p,1}) norm: time norm per block, then weighted dyadic sum."""
    if len(snapshots) == 0:
        raise EmptySequence("no snapshots")
    traces = np.array([block_norms(z, params.p, bank) for z in snapshots])
    return time_besov_from_blocks(traces, times, q, params, bank)


def lq_of_besov(snapshots, times, q: float, params: BesovParams, bank: DyadicFilterBank) -> float:
    """Plain L^q_T(B^s_{p,1}): Besov norm per snapshot, then the time norm."""
    if len(snapshots) == 0:
        raise EmptySequence("no snapshots")
    vals = np.array([hybrid_norm(z, params, bank, check_tail=False) for z in snapshots])
    return float(time_block_norms(vals[:, None], times, q)[0])


# --- Bony calculus --------------------------------------------------------------


def _product(f_real: np.ndarray, g_real: np.ndarray, grid: GridSpec) -> np.ndarray:
    return fft(f_real * g_real, grid) * grid.dealias_mask


def paraproduct(f: SpectralField, g: SpectralField, bank: DyadicFilterBank) -> SpectralField:
    """T_f g = sum_j S_{j-1} f Delta_j g (scalar fields)."""
    grid = f.grid
    acc = np.zeros(grid.shape, dtype=complex)
    for j in bank.js:
        lo = ifft(f.coeffs * bank.low_pass(j - 1), grid)
        hi = ifft(g.coeffs * bank.phi(j), grid)
        acc += _product(lo, hi, grid)
    return SpectralField(grid, acc)


def remainder(g: SpectralField, f: SpectralField, bank: DyadicFilterBank) -> SpectralField:
    """T'_g f = sum_j S_{j+2} g Delta_j f + (S_{j_min} f)(S_{j_min} g).

    The last term carries the mean-mode interaction so that
    T_f g + T'_g f reproduces the dealiased product exactly on the grid.
    """
    grid = f.grid
    acc = np.zeros(grid.shape, dtype=complex)
    for j in bank.js:
        lo = ifft(g.coeffs * bank.low_pass(j + 2), grid)
        hi = ifft(f.coeffs * bank.phi(j), grid)
        acc += _product(lo, hi, grid)
    r = bank.residue()
    acc += _product(ifft(f.coeffs * r, grid), ifft(g.coeffs * r, grid), grid)
    return SpectralField(grid, acc)


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    return SpectralField(f.grid, _product(f.to_real(), g.to_real(), f.grid))


def paraconv_pairing(v: SpectralField, z: SpectralField, j: int, bank: DyadicFilterBank, N: int = 4) -> tuple[float, float]:
    """(|<Delta_j T_{v^k} d_k z, Delta_j z>|, ||grad v||_inf ||Delta_j z||_2 sum_{|j'-j|<=N} ||Delta_j' z||_2)."""
    bank._check(j)
    grid = z.grid
    acc = np.zeros(grid.shape, dtype=complex)
    for k in range(grid.dim):
        dz = SpectralField(grid, 1j * grid.xi_full[k] * z.coeffs)
        acc += paraproduct(v.component(k), dz, bank).coeffs
    blk_a = acc * bank.phi(j)
    blk_z = z.coeffs * bank.phi(j)
    lhs = abs(grid.volume * np.sum(blk_a * np.conj(blk_z)))
    grad = 1j * grid.xi_full[:, None] * v.coeffs[None]
    gv = ifft(grad, grid)
    grad_inf = float(np.sqrt(np.sum(gv**2, axis=(0, 1))).max())
    norm_j = math.sqrt(grid.volume * np.sum(np.abs(blk_z) ** 2))
    near = 0.0
    for jp in range(max(bank.j_min, j - N), min(bank.j_max, j + N) + 1):
        near += math.sqrt(grid.volume * np.sum(np.abs(z.coeffs * bank.phi(jp)) ** 2))
    return float(lhs), grad_inf * norm_j * near


def product_law_ratio(
    f: SpectralField, g: SpectralField, s: float, beta: float, p: float, alpha: float, sign: str, bank: DyadicFilterBank
) -> float:
    """||fg||_{B~^{s-beta,sign}_{p,alpha}} / (||f||_{B~^{s,sign}_{p,alpha}} ||g||_{B^{3/2-beta}_{2,1}})."""
    fg = dealiased_product(f, g)
    num = hybrid_norm(fg, BesovParams(s - beta, p, alpha, sign), bank, check_tail=False)
    den = hybrid_norm(f, BesovParams(s, p, alpha, sign), bank, check_tail=False) * besov_norm(
        g, 1.5 - beta, 2.0, bank, check_tail=False
    )
    return num / den if den > 0 else 0.0


# --- records ----------------------------------------------------------------------


@dataclass
class NormRecord:
    name: str
    s: float
    p: float
    alpha: float | None
    sign: str | None
    value: float
    tail_ratio: float

    def to_json(self) -> str:
        d = asdict(self)
        if math.isinf(d["p"]):
            d["p"] = "inf"
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormRecord":
        d = json.loads(text)
        if d["p"] == "inf":
            d["p"] = math.inf
        return cls(**d)


def norm_record(name: str, z: SpectralField, params: BesovParams, bank: DyadicFilterBank) -> NormRecord:
    terms = weights(bank, params) * block_norms(z, params.p, bank)
    return NormRecord(
        name,
        params.s,
        params.p,
        params.alpha if params.sign else None,
        params.sign,
        float(terms.sum()),
        tail_ratio(terms),
    )
