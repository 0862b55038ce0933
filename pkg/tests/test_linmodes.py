import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from oberbeck.besov import filter_bank
from oberbeck.errors import NegativeHSquare, NoAdmissibleConstants, NonPositiveFrequency, NotCurlFree
from oberbeck.linmodes import (
    SOUND_SPEED,
    SWEEP_COLUMNS,
    EnergyWeights,
    acoustic_evolve,
    be2_dissipation,
    energy_f,
    energy_f2,
    energy_H,
    energy_H2,
    f2_rate,
    heat_regularity_ratio,
    heat_trajectory,
    integrated_bound_ratios,
    mode_matrix,
    phi_functions,
    propagate,
    strichartz_ratio,
    trajectory,
    verify_decay,
    write_sweep_csv,
)
from oberbeck.spectral import GridSpec, SpectralField, gradient, leray_project, random_field, vector_field


class TestModeMatrix:
    def test_conducting_entries(self):
        M = mode_matrix(1.0, 1.0, "conducting").M
        assert np.array_equal(M, [[0, -1, 0], [1, -1, 1], [0, -1, -1]])

    def test_nonconducting_entries(self):
        M = mode_matrix(1.0, 0.0, "nonconducting").M
        assert np.array_equal(M, [[0, -1, 0], [0, -1, 1], [0, -1, 0]])

    def test_eigenvalues_from_characteristic_polynomial(self):
        # det(lambda I - M) = lambda^3 + 2 lambda^2 + 3 lambda + 1 for r = kappa_t = 1
        roots = np.roots([1, 2, 3, 1])
        ev = np.linalg.eigvals(mode_matrix(1.0, 1.0).M)
        assert np.allclose(np.sort_complex(roots), np.sort_complex(ev), atol=1e-12)
        assert np.all(roots.real <= 0)

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_rejects_nonpositive_frequency(self, r):
        with pytest.raises(NonPositiveFrequency):
            mode_matrix(r, 1.0)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            mode_matrix(1.0, 1.0, "plasma")


class TestPropagate:
    def test_time_zero(self):
        s0 = np.array([0.3, -1.0, 2.0])
        assert np.array_equal(propagate(mode_matrix(2.0, 0.5), 0.0, s0), s0)

    # scaling-and-squaring roundoff grows with r t; keep r t <= 100 for a 1e-12 budget
    @given(r=st.floats(0.01, 10), t=st.floats(0, 10), seed=st.integers(0, 1000))
    def test_antisymmetric_conservation(self, r, t, seed):
        s0 = np.random.default_rng(seed).standard_normal(3)
        M = mode_matrix(r, 0.0, "conducting", viscous=False)
        assert np.linalg.norm(propagate(M, t, s0)) == pytest.approx(np.linalg.norm(s0), rel=1e-12)

    def test_ode_oracle(self):
        M = mode_matrix(1.0, 1.0)
        s0 = np.array([1.0, 0.0, 0.0])
        sol = solve_ivp(lambda t, y: M.M @ y, (0, 1), s0, method="DOP853", rtol=1e-13, atol=1e-15)
        assert np.allclose(propagate(M, 1.0, s0), sol.y[:, -1], rtol=0, atol=1e-10)

    def test_trajectory_matches_propagate(self):
        M = mode_matrix(0.7, 2.0)
        s0 = np.array([1.0, 2.0, -1.0])
        ts = [0.0, 0.5, 3.0]
        tr = trajectory(M, ts, s0)
        for k, t in enumerate(ts):
            assert np.allclose(tr[k], propagate(M, t, s0), atol=1e-14)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            propagate(mode_matrix(1, 1), -1.0, np.ones(3))

    def test_nonconducting_a_minus_R_conserved(self):
        M = mode_matrix(3.0, 0.0, "nonconducting")
        s0 = np.array([0.4, -0.2, 1.3])
        for t in (0.1, 1.0, 10.0):
            s = propagate(M, t, s0)
            assert s[0] - s[2] == pytest.approx(s0[0] - s0[2], abs=1e-13)


class TestEnergy:
    def test_weights(self):
        assert EnergyWeights.for_kappa(2.0).alpha == 1.0
        assert EnergyWeights.for_kappa(1.0).alpha == 1.0
        assert EnergyWeights.for_kappa(0.5).alpha == pytest.approx(3.0)
        assert math.isinf(EnergyWeights.for_kappa(0.0).alpha)
        with pytest.raises(ValueError):
            EnergyWeights(-1.0)

    def test_zero_state(self):
        w = EnergyWeights(1.0)
        assert energy_f(np.zeros(3), 1.0, w) == 0
        assert energy_H(np.zeros(3), 1.0, w, 1.0) == 0

    def test_negative_H_square(self):
        with pytest.raises(NegativeHSquare):
            energy_H2(np.ones(3), 1.0, EnergyWeights(0.0), 0.25)

    @pytest.mark.parametrize("r", [0.25, 1.0, 4.0])
    def test_equivalence_bounds(self, r):
        rng = np.random.default_rng(5)
        for kt in (0.3, 1.0, 3.0):
            w = EnergyWeights.for_kappa(kt)
            a = w.alpha
            S = rng.standard_normal((1000, 3)) * rng.lognormal(0, 1, (1000, 1))
            b, d, th = S.T
            mid = energy_f2(S, r, w) - (a + 1) * (b * b + th * th)
            lo = (a - 0.5) * d * d + (r * b) ** 2 / 3
            hi = (a + 2.5) * d * d + 5 / 3 * (r * b) ** 2
            assert np.all(lo <= mid + 1e-12 * np.abs(mid))
            assert np.all(mid <= hi + 1e-12 * np.abs(hi))

    def test_be2_identity_and_be4(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            kt = float(rng.uniform(0.1, 5))
            r = float(2.0 ** rng.uniform(-3, 3))
            s0 = rng.standard_normal(3)
            t = float(rng.uniform(0.1, 2))
            M, w = mode_matrix(r, kt), EnergyWeights.for_kappa(kt)
            rate = f2_rate(M, s0, t, w)
            st_ = propagate(M, t, s0)
            f0 = energy_f2(s0, r, w)
            assert abs(0.5 * rate + be2_dissipation(st_, r, w, kt)) <= 1e-6 * f0
            assert rate + 2 * energy_H2(st_, r, w, kt) <= 1e-8 * f0

    def test_dissipation_dominates_H(self):
        rng = np.random.default_rng(2)
        S = rng.standard_normal((500, 3))
        for kt in (0.2, 1.0, 4.0):
            w = EnergyWeights.for_kappa(kt)
            assert np.all(be2_dissipation(S, 1.3, w, kt) - energy_H2(S, 1.3, w, kt) >= -1e-12)


class TestVerifyDecay:
    R = np.geomspace(2.0**-6, 2.0**6, 64)
    T = np.linspace(0, 50, 32)

    def test_low_regime_at_time_zero(self):
        res = verify_decay(1.0, "conducting", [1e-3], [0.0])
        assert res.C >= 1 and res.passed

    @pytest.mark.parametrize("kt", [0.5, 1.0, 2.0])
    def test_conducting_admissible(self, kt):
        res = verify_decay(kt, "conducting", self.R, self.T)
        assert res.passed and res.C <= 10 and res.c >= 0.01
        assert len(res.rows) == 64 * 32 * 3
        assert res.failures == 0

    def test_nonconducting_admissible(self):
        res = verify_decay(0.0, "nonconducting", self.R, self.T)
        assert res.passed and res.C <= 10 and res.c >= 0.01

    def test_conducting_without_conduction_rejected(self):
        with pytest.raises(NoAdmissibleConstants, match="alpha"):
            verify_decay(0.0, "conducting", self.R, self.T)

    def test_empty_and_invalid(self):
        with pytest.raises(ValueError):
            verify_decay(1.0, "conducting", [], self.T)
        with pytest.raises(NonPositiveFrequency):
            verify_decay(1.0, "conducting", [0.0, 1.0], self.T)

    def test_sweep_csv(self, tmp_path):
        res = verify_decay(1.0, "conducting", self.R[::8], self.T[::4])
        path = write_sweep_csv(res.rows, tmp_path / "sweep.csv")
        rows = list(csv.DictReader(path.open()))
        assert tuple(rows[0].keys()) == SWEEP_COLUMNS
        assert len(rows) == 8 * 8 * 3
        assert {r["regime"] for r in rows} == {"low", "high"}

    @pytest.mark.parametrize("kt,variant", [(0.5, "conducting"), (1.0, "conducting"), (2.0, "conducting"), (0.0, "nonconducting")])
    def test_integrated_bounds(self, kt, variant):
        out = integrated_bound_ratios(kt, variant, np.geomspace(2.0**-6, 2.0**6, 13))
        assert out["I1"] <= 20
        if variant == "conducting":
            assert out["I2"] <= 20
        else:
            assert out["I2"] < 1e-12


def _acoustic_data(g, width=1.0):
    x = g.mesh()
    r2 = sum((xi - g.L / 2) ** 2 for xi in x)
    q0 = SpectralField.from_real(g, np.exp(-r2 / (2 * width**2)))
    phi = SpectralField.from_real(g, 0.5 * np.exp(-r2 / (2 * width**2)))
    return q0, gradient(phi)


class TestAcoustic:
    def test_identity_at_zero(self):
        g = GridSpec(2, 32, 20.0)
        q0, w0 = _acoustic_data(g)
        q, w = acoustic_evolve(q0, w0, 0.0)
        assert np.allclose(q.coeffs, q0.coeffs, atol=1e-15)
        assert np.allclose(w.coeffs, leray_project(w0, "Q").coeffs, atol=1e-15)

    def test_plane_wave(self):
        g = GridSpec(2, 16, 2 * np.pi)
        x, y = g.mesh()
        k = 2.0
        q0 = SpectralField.from_real(g, np.cos(k * x))
        w0 = SpectralField.zeros(g, "vector")
        t = 0.37
        q, w = acoustic_evolve(q0, w0, t)
        om = SOUND_SPEED * k
        assert np.allclose(q.to_real(), np.cos(om * t) * np.cos(k * x), atol=1e-13)
        # dt w = -sqrt2 grad q  =>  w_x = sin(om t) sin(k x)
        assert np.allclose(w.component(0).to_real(), np.sin(om * t) * np.sin(k * x), atol=1e-13)
        assert np.allclose(w.component(1).to_real(), 0, atol=1e-13)

    def test_energy_conservation(self):
        g = GridSpec(3, 16, 20.0)
        q0, w0 = _acoustic_data(g, 2.0)
        e0 = q0.l2_norm() ** 2 + w0.l2_norm() ** 2
        for t in (0.5, 3.0, 11.0):
            q, w = acoustic_evolve(q0, w0, t)
            assert q.l2_norm() ** 2 + w.l2_norm() ** 2 == pytest.approx(e0, rel=1e-12)

    def test_rejects_solenoidal_velocity(self):
        g = GridSpec(2, 16, 2 * np.pi)
        psi = random_field(g, np.random.default_rng(0))
        gr = gradient(psi)
        w = vector_field([gr.component(1), -gr.component(0)])
        with pytest.raises(NotCurlFree):
            acoustic_evolve(SpectralField.zeros(g), w, 1.0)

    def test_strichartz_p2_is_unitary(self):
        g = GridSpec(2, 64, 40.0)
        q0, w0 = _acoustic_data(g, 2.0)
        ratio = strichartz_ratio(q0, w0, 2.0, 0.0, 4.0, filter_bank(g), nt=9)
        assert ratio == pytest.approx(1.0, rel=0.05)

    def test_strichartz_zero_data(self):
        g = GridSpec(2, 16, 10.0)
        z = SpectralField.zeros(g)
        assert strichartz_ratio(z, SpectralField.zeros(g, "vector"), 4.0, 0.5, 1.0, filter_bank(g), nt=3) == 0


class TestHeat:
    def test_phi_functions(self):
        z = np.array([-3.0, -0.5, -0.19, -1e-3, 0.0, 1e-8, 0.1, 0.5, 2.0])
        e, p1, p2, p3 = phi_functions(z)
        zz = np.where(z == 0, 1.0, z)
        ref1 = np.where(z == 0, 1.0, np.expm1(zz) / zz)
        big = np.abs(z) > 0.3
        assert np.allclose(e, np.exp(z), rtol=1e-15)
        assert np.allclose(p1, ref1, rtol=1e-14)
        zb = z[big]
        assert np.allclose(p2[big], (np.exp(zb) - 1 - zb) / zb**2, rtol=1e-12)
        assert np.allclose(p3[big], (np.exp(zb) - 1 - zb - zb**2 / 2) / zb**3, rtol=1e-10)
        assert p2[4] == pytest.approx(0.5) and p3[4] == pytest.approx(1 / 6)

    def test_phi_functions_continuous_at_switch(self):
        lo = phi_functions(np.array([-0.2 + 1e-12]))
        hi = phi_functions(np.array([-0.2 - 1e-12]))
        for a, b in zip(lo, hi):
            assert a[0] == pytest.approx(b[0], rel=1e-9)

    def test_duhamel_against_closed_form(self):
        # single mode, f = c constant in time: u(t) = e^{-l t} u0 + (1 - e^{-l t}) c / l
        g = GridSpec(2, 16, 2 * np.pi)
        x, y = g.mesh()
        u0 = SpectralField.from_real(g, np.cos(x))
        f = SpectralField.from_real(g, 0.3 * np.cos(x))
        t = np.linspace(0, 1.5, 4)
        tr = heat_trajectory(u0, [f.coeffs] * 4, t)
        lam = 1.0
        exact = (np.exp(-lam * 1.5) + 0.3 * (1 - np.exp(-lam * 1.5)) / lam) * np.cos(x)
        assert np.allclose(tr[-1].to_real(), exact, atol=1e-13)

    def test_contraction_q_inf(self):
        g = GridSpec(2, 64, 64.0)
        q0, _ = _acoustic_data(g, 3.0)
        ratio = heat_regularity_ratio(q0, None, np.linspace(0, 2, 41), math.inf, 1, 0.5, filter_bank(g))
        assert ratio <= 1 + 1e-12

    @pytest.mark.parametrize("width", [2.0, 4.0, 8.0])
    def test_q1_family(self, width):
        g = GridSpec(2, 64, 64.0)
        q0, _ = _acoustic_data(g, width)
        ratio = heat_regularity_ratio(q0, None, np.linspace(0, 2, 401), 1, 1, 0.5, filter_bank(g))
        assert 0 < ratio <= 5

    def test_forcing_only(self):
        g = GridSpec(2, 64, 64.0)
        f, _ = _acoustic_data(g, 3.0)
        t = np.linspace(0, 2, 401)
        ratio = heat_regularity_ratio(SpectralField.zeros(g), [f] * len(t), t, 1, 1, 0.5, filter_bank(g))
        assert 0 < ratio <= 5

    def test_exponent_order(self):
        g = GridSpec(2, 16, 10.0)
        with pytest.raises(ValueError):
            heat_regularity_ratio(SpectralField.zeros(g), None, [0, 1], 1, 2, 0.0, filter_bank(g))
