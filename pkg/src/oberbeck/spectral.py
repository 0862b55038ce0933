"""Periodic-grid Fourier fields, spectral operators and the Leray projectors.

Coefficients use the Fourier-series normalization

    z(x) = sum_k zhat_k exp(i xi_k . x),   xi_k = 2 pi k / L,

so a plane wave of unit amplitude has a unit coefficient independent of n.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .errors import IoFailure, SingularSymbolOnMeanMode

_WORKERS: int | None = None


def set_threads(n: int | None) -> None:
    """Set the FFT worker count (None restores the environment default)."""
    global _WORKERS
    if n is None:
        env = os.environ.get("OBERBECK_THREADS")
        _WORKERS = int(env) if env else None
    else:
        if n < 1:
            raise ValueError("thread count must be >= 1")
        _WORKERS = int(n)


def get_threads() -> int | None:
    return _WORKERS


set_threads(None)


def _admissible_n(n: int) -> bool:
    m = n
    while m % 2 == 0 and m > 1:
        m //= 2
    return m in (1, 3)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0, L)^dim.

    ``n`` must be a power of two or three times a power of two (the latter
    admits the 48^3 grids used by the convergence studies).
    """

    dim: int
    n: int
    L: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or not _admissible_n(self.n):
            raise ValueError(f"n must be >= 8 and of the form 2^k or 3*2^k, got {self.n}")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.L**self.dim

    @property
    def k_nyquist(self) -> float:
        """Largest angular frequency per axis, pi n / L."""
        return np.pi * self.n / self.L

    @property
    def k_fundamental(self) -> float:
        return 2 * np.pi / self.L

    @cached_property
    def k_int(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers, broadcastable per axis."""
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)
        out = []
        for ax in range(self.dim):
            shp = [1] * self.dim
            shp[ax] = self.n
            out.append(k1.reshape(shp))
        return tuple(out)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Angular frequencies 2 pi k / L, broadcastable per axis."""
        return tuple(k * self.k_fundamental for k in self.k_int)

    @cached_property
    def xi_full(self) -> np.ndarray:
        """Frequency vectors materialized as an array of shape (dim, *shape)."""
        return np.stack([np.broadcast_to(x, self.shape) for x in self.xi]).astype(float)

    @cached_property
    def k2_int(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.int64)
        for k in self.k_int:
            out = out + k * k
        return out

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.k2_int.astype(float)) * self.k_fundamental

    @cached_property
    def xi_hat(self) -> np.ndarray:
        """Unit frequency vectors, zero at the origin."""
        r = self.xi_abs
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.xi_full / safe, 0.0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Keep mask: a mode survives iff every |k_i| is strictly below fraction * n / 2."""
        cut = self.dealias_fraction * self.n / 2
        keep = np.ones(self.shape, dtype=bool)
        for k in self.k_int:
            keep = keep & (np.abs(k) < cut)
        return keep

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for k in self.k_int:
            m = m | (np.abs(k) == self.n // 2)
        return m

    def coords(self) -> tuple[np.ndarray, ...]:
        """Physical coordinates, broadcastable per axis."""
        x1 = np.arange(self.n) * self.dx
        out = []
        for ax in range(self.dim):
            shp = [1] * self.dim
            shp[ax] = self.n
            out.append(x1.reshape(shp))
        return tuple(out)

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*[np.arange(self.n) * self.dx] * self.dim, indexing="ij"))


def fft(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Real-space samples -> Fourier-series coefficients (last ``dim`` axes)."""
    return sfft.fftn(values, axes=grid.axes, norm="forward", workers=_WORKERS)


def ifft(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Coefficients -> real-space samples; the imaginary part is discarded."""
    return sfft.ifftn(coeffs, axes=grid.axes, norm="forward", workers=_WORKERS).real


def ifft_complex(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.ifftn(coeffs, axes=grid.axes, norm="forward", workers=_WORKERS)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A scalar (coeffs.shape == grid.shape) or vector ((dim, *grid.shape)) field."""

    grid: GridSpec
    coeffs: np.ndarray
    rank: str = "scalar"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "coeffs", c)
        if self.rank == "scalar":
            if c.shape != self.grid.shape:
                raise ValueError(f"scalar coeffs must have shape {self.grid.shape}, got {c.shape}")
        elif self.rank == "vector":
            if c.shape != (self.grid.dim, *self.grid.shape):
                raise ValueError("vector coeffs must have shape (dim, *grid.shape)")
        else:
            raise ValueError(f"rank must be 'scalar' or 'vector', got {self.rank!r}")

    @classmethod
    def from_real(cls, grid: GridSpec, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        rank = "scalar" if values.shape == grid.shape else "vector"
        return cls(grid, fft(values, grid), rank)

    @classmethod
    def zeros(cls, grid: GridSpec, rank: str = "scalar") -> "SpectralField":
        shp = grid.shape if rank == "scalar" else (grid.dim, *grid.shape)
        return cls(grid, np.zeros(shp, dtype=complex), rank)

    def to_real(self) -> np.ndarray:
        return ifft(self.coeffs, self.grid)

    @property
    def is_vector(self) -> bool:
        return self.rank == "vector"

    def mean_coeff(self) -> complex | np.ndarray:
        idx = (0,) * self.grid.dim
        return self.coeffs[(..., *idx)]

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.rank)

    def component(self, i: int) -> "SpectralField":
        if not self.is_vector:
            raise ValueError("component() requires a vector field")
        return SpectralField(self.grid, self.coeffs[i], "scalar")

    def l2_norm(self) -> float:
        """L^2 norm over the torus via Parseval."""
        return float(np.sqrt(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        """max |c(k) - conj(c(-k))| relative to max |c|; zero for real fields."""
        c = self.coeffs
        flipped = np.flip(c, axis=self.grid.axes)
        flipped = np.roll(flipped, 1, axis=self.grid.axes)
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(c - np.conj(flipped))) / scale)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, c: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * c)

    __rmul__ = __mul__


def vector_field(components: list[SpectralField]) -> SpectralField:
    g = components[0].grid
    return SpectralField(g, np.stack([c.coeffs for c in components]), "vector")


# --- symbols -----------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    """A Fourier multiplier m(xi), evaluated lazily on a grid.

    ``singular_at_zero`` marks multipliers that are undefined at xi = 0; they
    are evaluated as 0 there and may only act on mean-free fields.
    """

    fn: Callable[[GridSpec], np.ndarray]
    singular_at_zero: bool = False
    name: str = "m"

    def __call__(self, grid: GridSpec) -> np.ndarray:
        return self.fn(grid)

    def __mul__(self, other: "Symbol") -> "Symbol":
        return Symbol(
            lambda g: self.fn(g) * other.fn(g),
            self.singular_at_zero or other.singular_at_zero,
            f"{self.name}*{other.name}",
        )


def identity_symbol() -> Symbol:
    return Symbol(lambda g: np.ones(g.shape), name="1")


def lambda_power(s: float) -> Symbol:
    """Lambda^s = |D|^s."""

    def fn(g: GridSpec) -> np.ndarray:
        r = g.xi_abs
        if s == 0:
            return np.ones(g.shape)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, safe**s, 0.0)

    return Symbol(fn, singular_at_zero=s < 0, name=f"Lambda^{s}")


def laplacian_symbol() -> Symbol:
    return Symbol(lambda g: -(g.xi_abs**2), name="Delta")


def heat_symbol(t: float, diffusivity: float = 1.0) -> Symbol:
    """exp(t * diffusivity * Delta)."""
    return Symbol(lambda g: np.exp(-diffusivity * t * g.xi_abs**2), name=f"heat({t})")


def partial_symbol(axis: int) -> Symbol:
    return Symbol(lambda g: 1j * np.broadcast_to(g.xi[axis], g.shape), name=f"d{axis}")


def apply_symbol(z: SpectralField, m: Symbol | np.ndarray, *, mean_tol: float = 1e-12) -> SpectralField:
    """Multiply coefficients by m(2 pi k / L); vector fields are treated componentwise."""
    if isinstance(m, Symbol):
        if m.singular_at_zero:
            c0 = np.max(np.abs(np.atleast_1d(z.mean_coeff())))
            scale = max(np.max(np.abs(z.coeffs)), 1e-300)
            if c0 > mean_tol * scale:
                raise SingularSymbolOnMeanMode(f"{m.name} applied to a field with mean {c0:.3e}")
        mult = m(z.grid)
    else:
        mult = np.asarray(m)
    return z.with_coeffs(z.coeffs * mult)


# --- differential operators ---------------------------------------------------


def gradient(z: SpectralField) -> SpectralField:
    g = z.grid
    return SpectralField(g, 1j * g.xi_full * z.coeffs[None], "vector")


def divergence(u: SpectralField) -> SpectralField:
    g = u.grid
    return SpectralField(g, np.sum(1j * g.xi_full * u.coeffs, axis=0), "scalar")


def laplacian(z: SpectralField) -> SpectralField:
    return z.with_coeffs(-(z.grid.xi_abs**2) * z.coeffs)


def leray_project(u: SpectralField, which: str = "P") -> SpectralField:
    """Orthogonal projection onto divergence-free (P) or gradient (Q) fields."""
    if not u.is_vector:
        raise ValueError("leray_project requires a vector field")
    q = _q_coeffs(u.grid, u.coeffs)
    if which == "Q":
        return u.with_coeffs(q)
    if which == "P":
        return u.with_coeffs(u.coeffs - q)
    raise ValueError("which must be 'P' or 'Q'")


def _q_coeffs(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    xh = grid.xi_hat
    return xh * np.sum(xh * c, axis=0)[None]


def dealias(z: SpectralField) -> SpectralField:
    return z.with_coeffs(z.coeffs * z.grid.dealias_mask)


def lp_norm_real(values: np.ndarray, p: float, grid: GridSpec, vector: bool = False) -> float:
    """L^p(torus) norm of real-space samples by rectangle quadrature (exact for trig polynomials at p=2)."""
    a = np.sqrt(np.sum(values**2, axis=0)) if vector else np.abs(values)
    if np.isinf(p):
        return float(np.max(a))
    return float((np.sum(a**p) * grid.cell_volume) ** (1.0 / p))


def random_field(
    grid: GridSpec,
    rng: np.random.Generator,
    rank: str = "scalar",
    kcut: float | None = None,
    mean_free: bool = True,
    decay: float = 0.0,
) -> SpectralField:
    """Random real band-limited field: Gaussian coefficients on |k_i| < kcut, Hermitian by construction."""
    shp = grid.shape if rank == "scalar" else (grid.dim, *grid.shape)
    vals = rng.standard_normal(shp)
    c = fft(vals, grid)
    cut = grid.dealias_fraction * grid.n / 2 if kcut is None else kcut
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.k_int:
        mask &= np.abs(k) < cut
    c = c * mask
    if decay:
        c = c * (1.0 + grid.k2_int) ** (-decay / 2)
    if mean_free:
        idx = (0,) * grid.dim
        c[(..., *idx)] = 0.0
    return SpectralField(grid, c, rank)


# --- snapshot container -------------------------------------------------------

SNAPSHOT_MAGIC = b"OBSNAP\x00\x01"


def write_snapshot(path: str | os.PathLike, z: SpectralField, time: float, name: str) -> Path:
    """Write ``z`` as real-space float64 samples behind a JSON header.

    Layout: 8-byte magic, uint32 little-endian header length, UTF-8 JSON
    header, then ``components * n**dim`` little-endian float64 values in
    C (row-major) order, component index slowest.
    """
    g = z.grid
    header = {
        "dim": g.dim,
        "n": g.n,
        "L": g.L,
        "rank": z.rank,
        "time": float(time),
        "name": name,
        "dealias_fraction": g.dealias_fraction,
        "components": g.dim if z.is_vector else 1,
        "dtype": "<f8",
    }
    hb = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<I", len(hb)))
            fh.write(hb)
            fh.write(np.ascontiguousarray(z.to_real(), dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path


def read_snapshot(path: str | os.PathLike) -> tuple[SpectralField, dict]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if raw[:8] != SNAPSHOT_MAGIC:
        raise IoFailure(f"{path}: not a snapshot container")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode())
    grid = GridSpec(header["dim"], header["n"], header["L"], header.get("dealias_fraction", 2 / 3))
    shp = grid.shape if header["rank"] == "scalar" else (grid.dim, *grid.shape)
    vals = np.frombuffer(raw[12 + hlen :], dtype="<f8").reshape(shp)
    return SpectralField.from_real(grid, vals), header
