"""epsilon-ladder experiments: run compressible and limit solvers in lockstep,
measure oscillating-mode decay and incompressible-mode convergence in
(hybrid) time-Besov norms, fit log-log rates and emit reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from scipy.integrate import trapezoid

from .besov import BesovParams, besov_norm, filter_bank, hybrid_norm, time_block_norms, weights
from .errors import DegenerateFit, IoFailure, OberbeckError, TimeGridMismatch
from .spectral import GridSpec, SpectralField, fft, gradient, ifft, lp_norm_real, set_threads, write_snapshot
from .solvers import (
    BoussinesqState,
    BoussinesqStepper,
    CompressibleStepper,
    ConductingState,
    NonConductingState,
    PhysParams,
    PotentialCache,
    PotentialSpec,
    mode_split,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
CSV_COLUMNS = ("variant", "eps", "p", "s", "norm_id", "value", "expected_slope")
SQ2 = math.sqrt(2.0)


# --- norms ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class NormTerm:
    """nu^{nu_pow} * || quantity ||_{L~^{time}_T(B^{s + s_shift, sign}_{p, eps nu})}.

    ``alt`` = (time, s_shift) adds a sum-space partner; the block contribution
    is then the smaller of the two weighted block terms.
    """

    quantity: str
    time: float
    s_shift: float = 0.0
    sign: str | None = None
    nu_pow: float = 0.0
    alt: tuple[float, float] | None = None

    def label(self) -> str:
        def one(tq, sh):
            tq_s = "inf" if math.isinf(tq) else f"{tq:g}"
            reg = "s" if sh == 0 else f"s{sh:+g}"
            sp = f"B~{{{reg},{self.sign}}}_{{p,eps*nu}}" if self.sign else f"B{{{reg}}}_{{p,1}}"
            return f"Lt{tq_s}({sp})"

        body = one(self.time, self.s_shift)
        if self.alt is not None:
            body = f"[{body}+{one(*self.alt)}]"
        pre = "" if self.nu_pow == 0 else f"nu^{self.nu_pow:g}*"
        return f"{pre}{self.quantity}:{body}"

    def evaluate(self, traces: np.ndarray, times, p: float, s: float, eps: float, nu: float, bank) -> float:
        bp = BesovParams(s + self.s_shift, p, eps * nu, self.sign)
        terms = weights(bank, bp) * time_block_norms(traces, times, self.time)
        if self.alt is not None:
            tq, sh = self.alt
            bp2 = BesovParams(s + sh, p, eps * nu, self.sign)
            terms = np.minimum(terms, weights(bank, bp2) * time_block_norms(traces, times, tq))
        return float(nu**self.nu_pow * np.sum(terms))


@dataclass(frozen=True)
class Measurement:
    name: str
    role: str  # "osc" or "incomp"
    terms: tuple[NormTerm, ...]
    slope_kind: str  # "3/p-s" or "1/2-1/p"

    def norm_id(self) -> str:
        return f"{self.name}=" + " + ".join(t.label() for t in self.terms)

    def expected_slope(self, p: float, s: float) -> float:
        return expected_slope(self.slope_kind, p, s)

    def evaluate(self, traj: "Trajectory", p, s, eps, nu, bank, stride: int = 1) -> float:
        total = 0.0
        t = traj.times[::stride]
        for term in self.terms:
            total += term.evaluate(traj.traces[term.quantity][_pkey(p)][::stride], t, p, s, eps, nu, bank)
        return total


def expected_slope(kind: str, p: float, s: float) -> float:
    if kind == "3/p-s":
        return 3.0 / p - s
    if kind == "1/2-1/p":
        return 0.5 - 1.0 / p
    raise ValueError(kind)


def _pkey(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def conducting_measurements() -> list[Measurement]:
    return [
        Measurement("osc_q", "osc", (NormTerm("q", 2, -1.0, "+", 0.5),), "3/p-s"),
        Measurement("osc_Qu", "osc", (NormTerm("Qu", 2, 0.0, None, 0.5),), "3/p-s"),
        Measurement(
            "incomp",
            "incomp",
            (
                NormTerm("dTheta", 2, -1.0, "+", 0.5),
                NormTerm("dTheta", math.inf, -2.0, "+"),
                NormTerm("dv", 1, 0.0, "+", 1.0),
                NormTerm("dv", math.inf, -2.0, "+"),
            ),
            "3/p-s",
        ),
    ]


def nonconducting_measurements() -> list[Measurement]:
    return [
        # s is pinned to 2/p - 1/2 for this measurement; the time exponent is set per p
        Measurement("osc_QuR", "osc", (NormTerm("QuR", math.nan, 0.0),), "1/2-1/p"),
        Measurement(
            "incomp0",
            "incomp",
            (
                NormTerm("dTheta", math.inf, -2.0),
                NormTerm("dv", math.inf, -1.0, alt=(math.inf, -2.0)),
                NormTerm("dv", 2, 0.0, alt=(1.0, 0.0)),
            ),
            "3/p-s",
        ),
    ]


def strichartz_time_exponent(p: float) -> float:
    return math.inf if p == 2 else (2 * p / (p - 2) if not math.isinf(p) else 2.0)


# --- plans ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialDataSpec:
    """Gaussian-based smooth data, deterministic given ``seed``.

    Limit pair (Theta0, v0) and oscillating pair (q0, Qu0) are eps-independent
    (well prepared). ``ill_prepared`` adds an eps-dependent O(1) oscillating
    component (a Gaussian whose centre moves with log2 eps).
    """

    seed: int = 0
    amplitude: float = 0.01
    osc_amplitude: float = 0.01
    width: float = 10.0
    ill_prepared: bool = False


@dataclass(frozen=True)
class Acceptance:
    measurement: str
    p: float
    s: float
    tolerance: float
    mode: str = "band"  # "band": |slope - expected| <= tol; "floor": slope >= expected - tol and monotone


@dataclass(frozen=True)
class ExperimentPlan:
    variant: str
    eps_ladder: tuple[float, ...]
    grid: GridSpec
    mu: float = 1.0
    lam: float = -1.0
    kappa: float = 1.0
    potential: PotentialSpec = PotentialSpec()
    data: InitialDataSpec = InitialDataSpec()
    osc_pairs: tuple[tuple[float, float], ...] = ((4.0, 0.5), (8.0, 0.0))
    incomp_pairs: tuple[tuple[float, float], ...] = ((4.0, 0.6),)
    T: float = 2.0
    dt: float = 0.02
    stride: int = 1
    nonlinear: bool = True
    scheme: str = "etdrk3"
    workers: int = 1
    threads: int | None = None
    acceptance: tuple[Acceptance, ...] = ()
    snapshot_dir: str | None = None
    eta: float | None = 0.01  # cap the potential amplitude at this smallness level (None: use as given)

    def __post_init__(self):
        if self.variant not in ("conducting", "nonconducting"):
            raise ValueError("variant must be 'conducting' or 'nonconducting'")
        if len(self.eps_ladder) == 0:
            raise ValueError("eps_ladder must be non-empty")
        for e in self.eps_ladder:
            m = math.log2(e)
            if not e > 0 or abs(m - round(m)) > 1e-12:
                raise ValueError(f"ladder values must be dyadic, got {e}")
        if self.variant == "conducting" and not self.kappa > 0:
            raise ValueError("conducting plans need kappa > 0")
        if self.variant == "nonconducting" and self.kappa != 0:
            raise ValueError("nonconducting plans need kappa = 0")
        nsteps = self.T / self.dt
        if abs(nsteps - round(nsteps)) > 1e-9 or round(nsteps) % self.stride:
            raise ValueError("T/dt must be an integer multiple of the stride")
        for p, s in self.osc_pairs:
            if p < 2:
                raise ValueError(f"p = {p} < 2")
            if self.variant == "conducting" and not (-0.5 + 4 / p - 1e-12 <= s <= 3 / p + 1e-12):
                raise ValueError(f"(p, s) = ({p}, {s}) outside [-1/2 + 4/p, 3/p]")
        for p, s in self.incomp_pairs:
            if math.isinf(p) or p < 2 or not (-0.5 + 4 / p - 1e-12 <= s <= 3 / p + 1e-12) or not s > 0.5:
                raise ValueError(f"incompressible pair (p, s) = ({p}, {s}) out of range")
        for m in self.measurements():
            for p, s in self.pairs_for(m):
                want = 3 / p - s if m.slope_kind == "3/p-s" else 0.5 - 1 / p
                assert m.expected_slope(p, s) == want, "expected-slope construction bug"

    def effective_potential(self) -> PotentialSpec:
        """The configured potential, amplitude capped so its smallness value is at most eta * nu on every ladder rung."""
        if self.eta is None or self.potential.is_zero:
            return self.potential
        nu = self.params_base.nu
        worst = max(potential_smallness(self.potential, self.grid, self.params(e), self.T) for e in self.eps_ladder)
        if worst <= self.eta * nu:
            return self.potential
        return replace(self.potential, amplitude=self.potential.amplitude * self.eta * nu / worst)

    @property
    def params_base(self) -> PhysParams:
        return PhysParams(1.0, self.mu, self.lam, self.kappa)

    def params(self, eps: float) -> PhysParams:
        return PhysParams(eps, self.mu, self.lam, self.kappa)

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))

    def measurements(self) -> list[Measurement]:
        return conducting_measurements() if self.variant == "conducting" else nonconducting_measurements()

    def pairs_for(self, m: Measurement) -> list[tuple[float, float]]:
        if m.role == "incomp":
            return list(self.incomp_pairs)
        if self.variant == "nonconducting":
            return [(p, (2 / p - 0.5) if not math.isinf(p) else -0.5) for p, _ in self.osc_pairs]
        return list(self.osc_pairs)

    @property
    def p_values(self) -> tuple[float, ...]:
        ps = {p for p, _ in self.osc_pairs} | {p for p, _ in self.incomp_pairs}
        return tuple(sorted(ps))

    def default_acceptance(self) -> tuple[Acceptance, ...]:
        if self.acceptance:
            return self.acceptance
        acc = []
        if self.variant == "conducting":
            acc += [Acceptance("osc_q", p, s, 0.25) for p, s in self.osc_pairs if not math.isinf(p)]
            acc += [Acceptance("incomp", p, s, 0.3, "floor") for p, s in self.incomp_pairs]
        else:
            acc += [Acceptance("osc_QuR", p, 2 / p - 0.5, 0.2) for p, _ in self.osc_pairs if not math.isinf(p)]
        return tuple(acc)


# --- smallness --------------------------------------------------------------------------


def _hyb32(z: SpectralField, alpha: float) -> float:
    return hybrid_norm(z, BesovParams(1.5, 2.0, alpha, "-"), filter_bank(z.grid), check_tail=False)


def potential_smallness(spec: PotentialSpec, grid: GridSpec, params: PhysParams, T: float, nt: int = 2001) -> float:
    """nu^{1/2}||grad V||_{L^2_T(B~^{3/2,-})} + ||V||_{L~^inf_T(B~^{3/2,-})} + ||dV/dt||_{L^1_T(B~^{3/2,-})}, alpha = eps nu.

    V = m(t) S(x), so every term factors into a time integral of m or m' times a norm of S.
    """
    if spec.is_zero:
        return 0.0
    S = PotentialCache(spec, grid).field(0.0) * (1.0 / spec.modulation(0.0)[0])
    alpha = params.eps * params.nu
    nS, ngS = _hyb32(S, alpha), _hyb32(gradient(S), alpha)
    t = np.linspace(0.0, T, nt)
    m = np.array([spec.modulation(x) for x in t])
    l2 = math.sqrt(trapezoid(m[:, 0] ** 2, t))
    return math.sqrt(params.nu) * l2 * ngS + float(np.max(np.abs(m[:, 0]))) * nS + trapezoid(np.abs(m[:, 1]), t) * nS


def data_smallness(state: ConductingState, params: PhysParams) -> float:
    """||b0||_{B~^{3/2,-}} + ||u0||_{B^{1/2}_{2,1}} + ||theta0||_{B~^{-1/2,+}}, alpha = eps nu."""
    alpha = params.eps * params.nu
    bank = filter_bank(state.grid)
    return (
        _hyb32(state.b, alpha)
        + besov_norm(state.u, 0.5, 2.0, bank, check_tail=False)
        + hybrid_norm(state.theta, BesovParams(-0.5, 2.0, alpha, "+"), bank, check_tail=False)
    )


# --- initial data ---------------------------------------------------------------------------


def _gaussian(grid: GridSpec, center, width: float) -> np.ndarray:
    r2 = np.zeros(grid.shape)
    for x, c in zip(grid.coords(), center):
        d = (x - c + grid.L / 2) % grid.L - grid.L / 2
        r2 = r2 + d * d
    return np.exp(-r2 / (2 * width * width))


def _mean_free(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    c = c * grid.dealias_mask
    c[(..., *((0,) * grid.dim))] = 0.0
    return c


@dataclass(frozen=True, eq=False)
class LimitData:
    Theta0: SpectralField
    v0: SpectralField
    q0: SpectralField
    Qu0: SpectralField


def make_limit_data(grid: GridSpec, spec: InitialDataSpec, eps: float | None = None) -> LimitData:
    rng = np.random.default_rng(spec.seed)
    w = spec.width
    mid = np.full(grid.dim, grid.L / 2)

    def centre():
        return mid + rng.uniform(-0.5, 0.5, grid.dim) * w

    Th = _mean_free(fft(spec.amplitude * _gaussian(grid, centre(), w), grid), grid)
    coef = rng.standard_normal(grid.dim)
    g = _gaussian(grid, centre(), w)
    vraw = fft(spec.amplitude * coef.reshape((grid.dim,) + (1,) * grid.dim) * g[None], grid)
    xh = grid.xi_hat
    v = _mean_free(vraw - xh * np.sum(xh * vraw, axis=0)[None], grid)
    q = _mean_free(fft(spec.osc_amplitude * _gaussian(grid, centre(), w), grid), grid)
    # curl-free velocity: gradient of a Gaussian potential, normalized to unit peak scale
    phi = fft(spec.osc_amplitude * w * _gaussian(grid, centre(), w), grid)
    Qu = _mean_free(1j * grid.xi_full * phi[None], grid)
    if spec.ill_prepared and eps is not None:
        shift = mid + (0.25 * w * math.log2(eps)) * np.ones(grid.dim) / math.sqrt(grid.dim)
        q = q + _mean_free(fft(spec.osc_amplitude * _gaussian(grid, shift, w), grid), grid)
    return LimitData(
        SpectralField(grid, Th), SpectralField(grid, v, "vector"), SpectralField(grid, q), SpectralField(grid, Qu, "vector")
    )


def initial_state(plan: ExperimentPlan, eps: float, vspec: PotentialSpec | None = None):
    """Compressible initial state at this eps plus the limit initial state."""
    grid = plan.grid
    vspec = plan.effective_potential() if vspec is None else vspec
    ld = make_limit_data(grid, plan.data, eps)
    u0 = ld.v0 + ld.Qu0
    t0 = 0.0
    if plan.variant == "conducting":
        b = (ld.q0 - ld.Theta0) * (1 / SQ2)
        th = (ld.q0 + ld.Theta0) * (1 / SQ2)
        st = ConductingState(b, u0, th, t0)
    else:
        V0 = PotentialCache(vspec, grid).field(0.0) if not vspec.is_zero else SpectralField.zeros(grid)
        R = ld.q0
        a = ld.Theta0 + R + V0
        st = NonConductingState(a, u0, R, t0)
    return st, BoussinesqState(ld.Theta0, ld.v0, t0)


# --- trajectories ----------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Per-snapshot block norms: traces[quantity][p] has shape (ntimes, nblocks)."""

    eps: float
    times: np.ndarray
    traces: dict
    states: list | None = None
    limit_states: list | None = None
    steps: int = 0


def _measure_snapshot(quantities: dict, ps: Sequence[float], bank, out: dict) -> None:
    grid = bank.grid
    for name, coeffs in quantities.items():
        vec = coeffs.ndim == grid.dim + 1
        per_p = out.setdefault(name, {_pkey(p): [] for p in ps})
        row = {_pkey(p): np.empty(bank.nblocks) for p in ps}
        for i, j in enumerate(bank.js):
            vals = ifft(coeffs * bank.phi(j), grid)
            for p in ps:
                row[_pkey(p)][i] = lp_norm_real(vals, p, grid, vector=vec)
        for p in ps:
            per_p[_pkey(p)].append(row[_pkey(p)])


def _snapshot_quantities(plan: ExperimentPlan, state, limit: BoussinesqState, pot: PotentialCache | None) -> dict:
    V = pot.field(state.t) if pot is not None else None
    sp = mode_split(state, V)
    dTh = sp.Theta.coeffs - limit.Theta.coeffs
    dv = sp.Pu.coeffs - limit.v.coeffs
    if plan.variant == "conducting":
        return {"q": sp.q.coeffs, "Qu": sp.Qu.coeffs, "dTheta": dTh, "dv": dv}
    return {"QuR": np.concatenate([sp.Qu.coeffs, sp.q.coeffs[None]]), "dTheta": dTh, "dv": dv}


def run_single(plan: ExperimentPlan, eps: float, keep_states: bool = False) -> Trajectory:
    """One eps-run and the limit run in lockstep; measurement happens on the fly."""
    if plan.threads:
        set_threads(plan.threads)
    grid = plan.grid
    params = plan.params(eps)
    bank = filter_bank(grid)
    vspec = plan.effective_potential()
    st, lim = initial_state(plan, eps, vspec)
    comp = CompressibleStepper(grid, params, vspec, plan.dt, plan.variant, plan.scheme, plan.nonlinear)
    bvar = "conducting" if plan.variant == "conducting" else "transport"
    bous = BoussinesqStepper(grid, params, vspec, plan.dt, bvar, scheme=plan.scheme)
    pot = None if vspec.is_zero else PotentialCache(vspec, grid)
    traces: dict = {}
    times = []
    states, lstates = ([], []) if keep_states else (None, None)
    snapdir = Path(plan.snapshot_dir) / f"eps_{eps:g}" if plan.snapshot_dir else None
    if snapdir:
        snapdir.mkdir(parents=True, exist_ok=True)

    def record(k, s, l):
        times.append(s.t)
        _measure_snapshot(_snapshot_quantities(plan, s, l, pot), plan.p_values, bank, traces)
        if keep_states:
            states.append(s)
            lstates.append(l)
        if snapdir:
            names = ("b", "u", "theta") if plan.variant == "conducting" else ("a", "u", "R")
            for nm, f in zip(names, s.fields()):
                write_snapshot(snapdir / f"{nm}_{k:05d}.obs", f, s.t, nm)

    record(0, st, lim)
    for k in range(1, plan.nsteps + 1):
        try:
            st = comp.step(st)
        except OberbeckError as exc:
            raise type(exc)(f"eps={eps:g}: {exc}") from exc
        lim = bous.step(lim)
        if k % plan.stride == 0:
            record(k, st, lim)
    arr = {q: {p: np.array(v) for p, v in d.items()} for q, d in traces.items()}
    return Trajectory(eps, np.array(times), arr, states, lstates, plan.nsteps)


def measure_states(plan: ExperimentPlan, eps: float, states: Sequence, limit_states: Sequence) -> Trajectory:
    """Measure stored snapshots exactly as ``run_single`` does on the fly."""
    if len(states) != len(limit_states):
        raise TimeGridMismatch("state and limit sequences differ in length")
    vspec = plan.effective_potential()
    pot = None if vspec.is_zero else PotentialCache(vspec, plan.grid)
    bank = filter_bank(plan.grid)
    traces: dict = {}
    for s, l in zip(states, limit_states):
        if abs(s.t - l.t) > 1e-12:
            raise TimeGridMismatch(f"snapshot at t={s.t} paired with limit at t={l.t}")
        _measure_snapshot(_snapshot_quantities(plan, s, l, pot), plan.p_values, bank, traces)
    arr = {q: {p: np.array(v) for p, v in d.items()} for q, d in traces.items()}
    return Trajectory(eps, np.array([s.t for s in states]), arr, list(states), list(limit_states), len(states) - 1)


def run_epsilon_family(plan: ExperimentPlan, keep_states: bool = False) -> dict[float, Trajectory]:
    """Every eps of the ladder (bounded parallelism via ``plan.workers``); deterministic."""
    ladder = list(plan.eps_ladder)
    if plan.workers > 1 and len(ladder) > 1:
        with ProcessPoolExecutor(max_workers=min(plan.workers, len(ladder))) as ex:
            futs = [ex.submit(run_single, plan, e, keep_states) for e in ladder]
            results = [f.result() for f in futs]
    else:
        results = [run_single(plan, e, keep_states) for e in ladder]
    return dict(zip(ladder, results))


def measure_osc_decay(traj: Trajectory, eps: float, plan: ExperimentPlan, stride: int = 1) -> dict:
    """{(name, p, s): value} for the oscillating-mode measurements."""
    bank = filter_bank(plan.grid)
    nu = plan.params_base.nu
    out = {}
    for m in plan.measurements():
        if m.role != "osc":
            continue
        for p, s in plan.pairs_for(m):
            if m.name == "osc_QuR":
                m_eff = replace(m, terms=(replace(m.terms[0], time=strichartz_time_exponent(p)),))
            else:
                m_eff = m
            out[(m.name, p, s)] = m_eff.evaluate(traj, p, s, eps, nu, bank, stride)
    return out


def measure_incompressible_error(traj: Trajectory, limit_traj: Trajectory | None, eps: float, plan: ExperimentPlan, stride: int = 1) -> dict:
    """{(name, p, s): value} for the delta-norms; the traces already hold the lockstep differences.

    ``limit_traj`` (if given) must share the time grid.
    """
    if limit_traj is not None and (len(limit_traj.times) != len(traj.times) or not np.allclose(limit_traj.times, traj.times)):
        raise TimeGridMismatch("limit and eps trajectories sampled at different times")
    bank = filter_bank(plan.grid)
    nu = plan.params_base.nu
    out = {}
    for m in plan.measurements():
        if m.role == "incomp":
            for p, s in plan.pairs_for(m):
                out[(m.name, p, s)] = m.evaluate(traj, p, s, eps, nu, bank, stride)
    return out


# --- fitting -------------------------------------------------------------------------------------


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    n: int
    dropped_coarsest: bool = False


def fit_rate(eps: Sequence[float], values: Sequence[float]) -> FitResult:
    """OLS of log(value) on log(eps)."""
    e = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(e) < 3:
        raise DegenerateFit(f"need at least 3 ladder points, got {len(e)}")
    if np.any(v <= 0) or np.any(e <= 0):
        raise DegenerateFit("values and eps must be positive")
    x, y = np.log(e), np.log(v)
    if np.ptp(y) == 0:
        return FitResult(0.0, float(y[0]), 0.0, len(e))
    res = stats.linregress(x, y)
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), len(e))


def fit_rate_robust(eps: Sequence[float], values: Sequence[float]) -> FitResult:
    """Fit; drop the coarsest eps when it deviates from the inner-point fit (pre-asymptotic curvature)."""
    full = fit_rate(eps, values)
    if len(eps) < 4:
        return full
    order = np.argsort(eps)[::-1]
    e = np.asarray(eps, float)[order]
    v = np.asarray(values, float)[order]
    inner = fit_rate(e[1:], v[1:])
    pred = inner.intercept + inner.slope * math.log(e[0])
    resid_inner = np.log(v[1:]) - (inner.intercept + inner.slope * np.log(e[1:]))
    scale = max(3 * float(np.sqrt(np.mean(resid_inner**2))), 0.02)
    if abs(math.log(v[0]) - pred) > scale:
        inner.dropped_coarsest = True
        return inner
    return full


# --- reports -----------------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    variant: str
    records: list = field(default_factory=list)  # dicts with CSV_COLUMNS
    fits: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def values(self, name: str, p: float, s: float) -> tuple[list, list]:
        rows = [r for r in self.records if r["norm_id"].startswith(name + "=") and r["p"] == p and abs(r["s"] - s) < 1e-12]
        rows.sort(key=lambda r: -r["eps"])
        return [r["eps"] for r in rows], [r["value"] for r in rows]

    @property
    def passed(self) -> bool:
        return all(f["passed"] for f in self.fits if f.get("acceptance"))


def build_report(plan: ExperimentPlan, family: dict[float, Trajectory]) -> ConvergenceReport:
    rep = ConvergenceReport(plan.variant)
    nu = plan.params_base.nu
    quad = {}
    for eps in sorted(family, reverse=True):
        traj = family[eps]
        vals = {**measure_osc_decay(traj, eps, plan), **measure_incompressible_error(traj, None, eps, plan)}
        half = {}
        if len(traj.times) >= 3 and (len(traj.times) - 1) % 2 == 0:
            half = {**measure_osc_decay(traj, eps, plan, 2), **measure_incompressible_error(traj, None, eps, plan, 2)}
        ms = {m.name: m for m in plan.measurements()}
        for (name, p, s), val in sorted(vals.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            m = ms[name]
            rep.records.append(
                {
                    "variant": plan.variant,
                    "eps": float(eps),
                    "p": float(p),
                    "s": float(s),
                    "norm_id": m.norm_id(),
                    "value": float(val),
                    "expected_slope": m.expected_slope(p, s),
                }
            )
            if (name, p, s) in half and val > 0:
                quad[(name, p, s)] = max(quad.get((name, p, s), 0.0), abs(half[(name, p, s)] - val) / val)
    acc = {(a.measurement, a.p, round(a.s, 12)): a for a in plan.default_acceptance()}
    for m in plan.measurements():
        for p, s in plan.pairs_for(m):
            eps_l, vals = rep.values(m.name, p, s)
            a = acc.get((m.name, p, round(s, 12)))
            entry = {
                "measurement": m.name,
                "norm_id": m.norm_id(),
                "p": float(p),
                "s": float(s),
                "expected_slope": m.expected_slope(p, s),
                "acceptance": a is not None,
                "tolerance": a.tolerance if a else None,
                "mode": a.mode if a else None,
                "quadrature_rel_change": quad.get((m.name, p, s)),
                "monotone": bool(np.all(np.diff(vals) < 0)) if len(vals) > 1 else None,
            }
            try:
                f = fit_rate_robust(eps_l, vals)
                entry.update(slope=f.slope, stderr=f.stderr, intercept=f.intercept, points=f.n, dropped_coarsest=f.dropped_coarsest)
                if a is None:
                    ok = None
                elif a.mode == "band":
                    ok = abs(f.slope - entry["expected_slope"]) <= a.tolerance
                else:
                    ok = f.slope >= entry["expected_slope"] - a.tolerance and bool(entry["monotone"])
            except DegenerateFit as exc:
                entry.update(slope=None, stderr=None, intercept=None, points=len(vals), dropped_coarsest=False, error=str(exc))
                ok = False if a is not None else None
            entry["passed"] = ok
            rep.fits.append(entry)
    rep.meta = {
        "grid": {"dim": plan.grid.dim, "n": plan.grid.n, "L": plan.grid.L},
        "T": plan.T,
        "dt": plan.dt,
        "stride": plan.stride,
        "scheme": plan.scheme,
        "nu": nu,
        "mu": plan.mu,
        "lambda": plan.lam,
        "kappa": plan.kappa,
        "seed": plan.data.seed,
        "ill_prepared": plan.data.ill_prepared,
        "eps_ladder": [float(e) for e in plan.eps_ladder],
        "torus_surrogate": "finite-window periodic measurement before acoustic wrap-around",
        "potential_amplitude": plan.effective_potential().amplitude,
        "eta": plan.eta,
    }
    if plan.variant == "conducting":
        rep.meta["data_smallness"] = {
            f"{e:g}": data_smallness(initial_state(plan, e)[0], plan.params(e)) for e in plan.eps_ladder
        }
    return rep


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_report(report: ConvergenceReport, fmt: str, path: str | Path) -> Path:
    """Deterministic CSV (fixed columns) or versioned JSON."""
    path = Path(path)
    try:
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in report.records:
                w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
            path.write_text(buf.getvalue())
        elif fmt == "json":
            doc = {
                "schema_version": SCHEMA_VERSION,
                "variant": report.variant,
                "records": report.records,
                "fits": report.fits,
                "meta": report.meta,
            }
            path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path


def read_report(path: str | Path) -> ConvergenceReport:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if path.suffix == ".json":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise IoFailure(f"unsupported schema_version {doc.get('schema_version')}")
        return ConvergenceReport(doc["variant"], doc["records"], doc["fits"], doc["meta"])
    rows = list(csv.DictReader(io.StringIO(text)))
    recs = []
    for r in rows:
        recs.append(
            {
                "variant": r["variant"],
                "eps": float(r["eps"]),
                "p": float(r["p"]),
                "s": float(r["s"]),
                "norm_id": r["norm_id"],
                "value": float(r["value"]),
                "expected_slope": float(r["expected_slope"]),
            }
        )
    return ConvergenceReport(rows[0]["variant"] if rows else "", recs)


def emit_svg(report: ConvergenceReport, path: str | Path, width: int = 640, height: int = 480) -> Path:
    """Log-log plot of every fitted measurement against eps, with its fitted line."""
    fits = [f for f in report.fits if f.get("slope") is not None]
    series = []
    for f in fits:
        e, v = report.values(f["measurement"], f["p"], f["s"])
        if e:
            series.append((f, np.log2(e), np.log2(v)))
    pad = 60
    if series:
        xs = np.concatenate([s[1] for s in series])
        ys = np.concatenate([s[2] for s in series])
        x0, x1 = xs.min() - 0.5, xs.max() + 0.5
        y0, y1 = ys.min() - 0.5, ys.max() + 0.5
    else:
        x0, x1, y0, y1 = -1, 1, -1, 1
    X = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)  # noqa: E731
    Y = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)  # noqa: E731
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 20}" text-anchor="middle">log2 eps</text>',
        f'<text x="15" y="{height / 2}" transform="rotate(-90 15 {height / 2})" text-anchor="middle">log2 norm</text>',
    ]
    for i, (f, lx, ly) in enumerate(series):
        c = colors[i % len(colors)]
        for a, b in zip(lx, ly):
            parts.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{c}"/>')
        xa, xb = lx.min(), lx.max()
        # fit is in natural logs; the slope is base-invariant
        ic = f["intercept"] / math.log(2)
        parts.append(
            f'<line x1="{X(xa):.2f}" y1="{Y(ic + f["slope"] * xa):.2f}" x2="{X(xb):.2f}" y2="{Y(ic + f["slope"] * xb):.2f}" stroke="{c}"/>'
        )
        parts.append(
            f'<text x="{width - pad - 220}" y="{pad + 14 * i}" fill="{c}">{f["measurement"]} p={f["p"]:g} s={f["s"]:g}: '
            f'{f["slope"]:.3f} (expected {f["expected_slope"]:.3f})</text>'
        )
    parts.append("</svg>")
    path = Path(path)
    try:
        path.write_text("\n".join(parts) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path
