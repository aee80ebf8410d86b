import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sfrecon import gp
from sfrecon.errors import InvalidInputError, OptimizationError, SingularSystemError
from sfrecon.fields import ObservationSet, wavenumber

J0_FIRST_ZERO = 2.404825557695773


def j0_series(x, terms=80):
    """J0 by its power series in 50-digit arithmetic."""
    with mpmath.workdps(50):
        x = mpmath.mpf(x)
        total, term = mpmath.mpf(0), mpmath.mpf(1)
        for m in range(terms):
            total += term
            term *= -(x / 2) ** 2 / (m + 1) ** 2
        return float(total)


def obs_from(locs, values):
    locs = np.asarray(locs, dtype=float)
    return ObservationSet(np.arange(len(locs)), locs, np.asarray(values, dtype=complex), 0)


def all_specs(k=wavenumber(200.0)):
    u2 = np.array([[0.6, 0.8], [-0.8, 0.6]])
    u8 = gp.unit_directions(8)
    rng = np.random.default_rng(4)
    return [
        gp.RbfIso(1.3, 0.4),
        gp.RbfAniso(0.8, [0.3, 0.9], u2),
        gp.RbfPeriodic(1.1, [0.5, 1.2], u2, k),
        gp.PlaneWaveMulti(0.2, u8, k),
        gp.PlaneWaveSparse(rng.uniform(0.1, 1, 8), u8, k),
        gp.Hierarchical(rng.uniform(0.1, 1, 8), 2.0, u8, k),
        gp.Bessel(0.7, k),
    ]


SPEC_IDS = [s.family for s in all_specs()]


class TestKernelValues:
    def test_rbf_at_zero_lag(self):
        assert gp.kernel_eval(gp.RbfIso(1.7, 0.2), [0.3, 0.4], [0.3, 0.4]) == pytest.approx(1.7 ** 2)

    def test_rbf_one_over_e(self):
        rho = 0.37
        val = gp.kernel_eval(gp.RbfIso(1.0, rho), [0.0, 0.0], [rho, rho])
        assert val.real == pytest.approx(0.36787944117144233, rel=1e-14)
        assert val.imag == 0

    def test_j0_oracle_agrees_with_kernel_away_from_zero(self):
        k = 3.0
        for r in [0.0, 0.1, 0.5, 1.3, 4.0]:
            v = gp.kernel_eval(gp.Bessel(1.0, k), [r, 0.0], [0.0, 0.0]).real
            assert v == pytest.approx(j0_series(k * r), abs=1e-13)

    def test_bessel_vanishes_at_first_zero(self):
        assert abs(j0_series(J0_FIRST_ZERO)) < 1e-14
        k = 5.0
        v = gp.kernel_eval(gp.Bessel(1.0, k), [J0_FIRST_ZERO / k, 0.0], [0.0, 0.0])
        assert abs(v) < 1e-10

    def test_plane_wave_multi_at_zero_lag(self):
        u = gp.unit_directions(128)
        v = gp.kernel_eval(gp.PlaneWaveMulti(0.3, u, 2.0), [1, 1], [1, 1])
        assert v == pytest.approx(0.09 * 128, rel=1e-13)

    def test_plane_wave_single_direction(self):
        u = np.array([[1.0, 0.0]])
        k = 2.5
        v = gp.kernel_eval(gp.PlaneWaveSparse([2.0], u, k), [0.7, 9.0], [0.1, -3.0])
        assert v == pytest.approx(4.0 * np.exp(-1j * k * 0.6), rel=1e-14)

    def test_aniso_reduces_to_iso(self):
        rng = np.random.default_rng(0)
        u = np.array([[0.6, 0.8], [-0.8, 0.6]])
        a, b = rng.uniform(0, 2, (2, 6, 2))
        iso = gp.cross_gram(gp.RbfIso(0.9, 0.35), a, b)
        aniso = gp.cross_gram(gp.RbfAniso(0.9, [0.35, 0.35], u), a, b)
        np.testing.assert_allclose(aniso, iso, rtol=1e-13)

    def test_periodic_has_wavelength_period(self):
        k = wavenumber(250.0)
        u = np.array([[1.0, 0.0]])
        spec = gp.RbfPeriodic(1.0, [0.4], u, k)
        lam = 2 * np.pi / k
        assert gp.kernel_eval(spec, [lam, 0.2], [0, 0.2]) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("bad", [
        lambda: gp.RbfIso(0.0, 1.0),
        lambda: gp.RbfIso(1.0, -1.0),
        lambda: gp.RbfAniso(1.0, [1.0], [[1.0, 1.0]]),
        lambda: gp.PlaneWaveMulti(-0.1, gp.unit_directions(4), 1.0),
        lambda: gp.PlaneWaveSparse([0.1, 0.2], gp.unit_directions(4), 1.0),
        lambda: gp.PlaneWaveSparse([0.1], gp.unit_directions(1), 1.0, b=0.0),
        lambda: gp.Bessel(1.0, 0.0),
    ])
    def test_invalid_specs(self, bad):
        with pytest.raises(InvalidInputError):
            bad()


class TestGram:
    @pytest.mark.parametrize("spec", all_specs(), ids=SPEC_IDS)
    def test_hermitian_and_psd(self, spec):
        locs = np.random.default_rng(1).uniform(0, 2, (25, 2))
        K = gp.gram(spec, locs)
        assert np.max(np.abs(K - K.conj().T)) <= 1e-12 * np.max(np.abs(K))
        jit = 1e-10 * np.trace(K).real / len(K)
        assert np.linalg.eigvalsh(K + jit * np.eye(len(K))).min() >= -1e-8

    def test_bessel_psd_before_jitter(self):
        for seed in range(20):
            locs = np.random.default_rng(seed).uniform(0, 2, (10, 2))
            K = gp.gram(gp.Bessel(1.0, wavenumber(400.0)), locs)
            assert np.linalg.eigvalsh(K).min() >= -1e-8

    def test_entries_match_kernel_eval(self):
        locs = np.random.default_rng(2).uniform(0, 2, (5, 2))
        for spec in all_specs():
            K = gp.gram(spec, locs)
            for i in range(5):
                for j in range(5):
                    assert K[i, j] == gp.kernel_eval(spec, locs[i], locs[j])

    def test_single_location(self):
        K = gp.gram(gp.RbfIso(2.0, 1.0), [[0.4, 0.6]])
        np.testing.assert_array_equal(K, [[4.0]])

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            gp.gram(gp.RbfIso(1.0, 1.0), np.zeros((0, 2)))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        locs = rng.uniform(0, 2, (9, 2))
        perm = rng.permutation(9)
        for spec in all_specs():
            np.testing.assert_array_equal(gp.gram(spec, locs[perm]), gp.gram(spec, locs)[np.ix_(perm, perm)])

    @pytest.mark.parametrize("spec", all_specs(), ids=SPEC_IDS)
    def test_stationarity_exact(self, spec):
        # dyadic coordinates make the shifted differences bit-identical
        rng = np.random.default_rng(3)
        r, rp = rng.integers(0, 64, (2, 2)) / 32.0
        t = rng.integers(-64, 64, 2) / 16.0
        assert gp.kernel_eval(spec, r + t, rp + t) == gp.kernel_eval(spec, r, rp)

    def test_plane_wave_average_tends_to_bessel(self):
        L = 2048
        u = gp.unit_directions(L)
        spec = gp.PlaneWaveMulti(1.0, u, 1.0)
        r = np.linspace(0, 20, 201)
        vals = spec.of_delta(r * 0.6, r * 0.8) / L
        ref = np.array([j0_series(x, terms=120) for x in r])
        np.testing.assert_allclose(vals.real, ref, atol=1e-3)
        np.testing.assert_allclose(vals.imag, 0, atol=1e-3)


class TestPosteriorMean:
    def test_noiseless_interpolation(self):
        rng = np.random.default_rng(5)
        locs = rng.uniform(0, 2, (8, 2))
        y = rng.normal(size=8) + 1j * rng.normal(size=8)
        for spec in all_specs():
            fit = gp.GpFit(spec, 0.0)
            vals, mags = gp.posterior_mean(obs_from(locs, y), locs, fit)
            np.testing.assert_allclose(vals, y, atol=1e-9 * np.abs(y).max(), err_msg=spec.family)
            np.testing.assert_array_equal(mags, np.abs(vals))

    def test_zero_data_gives_zero(self):
        locs = np.random.default_rng(6).uniform(0, 2, (5, 2))
        vals, _ = gp.posterior_mean(obs_from(locs, np.zeros(5)), locs + 0.1, gp.GpFit(gp.Bessel(1, 3), 0.01))
        np.testing.assert_array_equal(vals, 0)

    def test_dense_inverse_oracle(self):
        rng = np.random.default_rng(7)
        locs = rng.uniform(0, 2, (5, 2))
        targets = rng.uniform(0, 2, (3, 2))
        y = rng.normal(size=5) + 1j * rng.normal(size=5)
        spec, noise = gp.Bessel(0.8, wavenumber(150.0)), 0.05
        vals, _ = gp.posterior_mean(obs_from(locs, y), targets, gp.GpFit(spec, noise))
        with mpmath.workdps(40):
            def kern(a, b):
                return mpmath.mpf(0.64) * mpmath.besselj(0, mpmath.mpf(wavenumber(150.0)) * mpmath.sqrt(
                    (mpmath.mpf(a[0]) - b[0]) ** 2 + (mpmath.mpf(a[1]) - b[1]) ** 2))
            C = mpmath.matrix(5, 5)
            for i in range(5):
                for j in range(5):
                    C[i, j] = kern(locs[i], locs[j]) + (noise if i == j else 0)
            w = C ** -1 * mpmath.matrix([mpmath.mpc(v.real, v.imag) for v in y])
            ref = [complex(sum(kern(t, locs[j]) * w[j] for j in range(5))) for t in targets]
        np.testing.assert_allclose(vals, ref, rtol=0, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_linear_in_data(self, seed):
        rng = np.random.default_rng(seed)
        locs = rng.uniform(0, 2, (6, 2))
        targets = rng.uniform(0, 2, (4, 2))
        y1, y2 = rng.normal(size=(2, 6)) + 1j * rng.normal(size=(2, 6))
        fit = gp.GpFit(gp.RbfIso(1.0, 0.5), 0.1)
        p = lambda y: gp.posterior_mean(obs_from(locs, y), targets, fit)[0]
        np.testing.assert_allclose(p(y1 + y2), p(y1) + p(y2), rtol=0, atol=1e-10)

    def test_scale_round_trip(self):
        rng = np.random.default_rng(8)
        locs, targets = rng.uniform(0, 2, (2, 6, 2))
        y = rng.normal(size=6) + 0j
        spec = gp.RbfIso(1.0, 0.5)
        a = gp.posterior_mean(obs_from(locs, y), targets, gp.GpFit(spec, 0.1))[0]
        b = gp.posterior_mean(obs_from(locs, 3 * y), targets, gp.GpFit(spec, 0.1, scale=3.0))[0]
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)

    def test_coincident_points_survive_jitter(self):
        locs = np.zeros((3, 2))
        vals, _ = gp.posterior_mean(obs_from(locs, [1, 1, 1]), [[0.0, 0.0]], gp.GpFit(gp.RbfIso(1, 1), 0.0))
        assert vals[0] == pytest.approx(1.0, rel=1e-6)

    def test_indefinite_system_reports_condition(self):
        with pytest.raises(SingularSystemError) as info:
            gp._factor(np.diag([1.0, -1.0]).astype(complex))
        assert info.value.condition == pytest.approx(1.0)


class TestInverseGamma:
    def test_unit_case(self):
        assert gp.inverse_gamma_logpdf(1.0, 1.0, 1.0) == pytest.approx(-1.0, abs=1e-15)

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (5.0, 5.0), (1.0, 0.01), (2.5, 0.3)])
    def test_normalized(self, a, b):
        f = lambda x: math.exp(gp.inverse_gamma_logpdf(x, a, b))
        mode = b / (a + 1)
        total = integrate.quad(f, 0, mode)[0] + integrate.quad(f, mode, np.inf, limit=200)[0]
        assert abs(total - 1.0) < 1e-6

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (5.0, 5.0), (3.0, 0.2)])
    def test_mode(self, a, b):
        xs = np.linspace(1e-4, 3 * b / (a + 1), 30001)
        lp = [gp.inverse_gamma_logpdf(x, a, b) for x in xs]
        assert abs(xs[int(np.argmax(lp))] - b / (a + 1)) <= xs[1] - xs[0]

    @pytest.mark.parametrize("x,a,b", [(0.0, 1, 1), (-1.0, 1, 1), (1.0, 0, 1), (1.0, 1, -2)])
    def test_domain(self, x, a, b):
        with pytest.raises(InvalidInputError):
            gp.inverse_gamma_logpdf(x, a, b)

    def test_vector_prior_agrees(self):
        xs = np.array([0.1, 0.7, 3.0])
        np.testing.assert_allclose(gp.InvGamma(5, 5).logpdf(xs),
                                   [gp.inverse_gamma_logpdf(x, 5, 5) for x in xs], rtol=1e-14)


def rbf_draw(rho, n=200, noise=1e-4, seed=0):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(0, 2, (n, 2))
    K = gp.gram(gp.RbfIso(1.0, rho), locs).real + noise * np.eye(n)
    z = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
    return obs_from(locs, np.linalg.cholesky(K) @ z)


class TestFitMap:
    @pytest.mark.parametrize("rho", [0.25, 0.4])
    def test_recovers_length_scale(self, rho):
        tight = gp.PriorConfig(alpha=gp.Pinned(1.0), noise=gp.Pinned(1e-4))
        fit = gp.fit_map(rbf_draw(rho), "rbf-iso", tight, restarts=4, seed=1, scale=False)
        assert abs(fit.spec.rho - rho) / rho < 0.2

    def test_more_restarts_never_worse(self):
        obs = rbf_draw(0.3, n=30, noise=1e-2, seed=3)
        one = gp.fit_map(obs, "rbf-aniso", restarts=1, seed=9)
        eight = gp.fit_map(obs, "rbf-aniso", restarts=8, seed=9)
        assert eight.log_map >= one.log_map - 1e-12

    def test_deterministic(self):
        obs = rbf_draw(0.3, n=20, noise=1e-2, seed=4)
        a = gp.fit_map(obs, "bessel", restarts=3, seed=2, freq_hz=150.0)
        b = gp.fit_map(obs, "bessel", restarts=3, seed=2, freq_hz=150.0)
        assert a.log_map == b.log_map and a.spec == b.spec and a.noise_variance == b.noise_variance

    @pytest.mark.parametrize("family", ["rbf-iso", "rbf-aniso", "bessel", "pw-multi"])
    def test_trace_never_decreases(self, family):
        obs = rbf_draw(0.3, n=15, noise=1e-2, seed=5)
        fit = gp.fit_map(obs, family, restarts=2, seed=0, freq_hz=200.0)
        for trace in fit.trace:
            assert np.all(np.diff(trace) >= -1e-12)

    def test_pinned_priors_return_modes(self):
        pinned = gp.PriorConfig().pinned()
        obs = rbf_draw(0.3, n=10, seed=6)
        fit = gp.fit_map(obs, "rbf-iso", pinned, restarts=2, seed=0)
        assert fit.spec.alpha == gp.PriorConfig().alpha.mode
        assert fit.spec.rho == gp.PriorConfig().rho.mode
        assert fit.noise_variance == gp.PriorConfig().noise.mode

    def test_pinned_hierarchical(self):
        pinned = gp.PriorConfig().pinned(num_directions=16)
        obs = rbf_draw(0.3, n=10, seed=6)
        fit = gp.fit_map(obs, "hier", pinned, restarts=1, seed=0, freq_hz=200.0, num_directions=16)
        assert fit.spec.b_log == 2.0
        np.testing.assert_array_equal(fit.spec.sigmas, 10.0 ** -2.0)

    def test_log_posterior_reproduces_objective(self):
        obs = rbf_draw(0.3, n=12, noise=1e-2, seed=7)
        fit = gp.fit_map(obs, "rbf-per", restarts=2, seed=0, freq_hz=180.0)
        assert gp.log_posterior(obs, fit, "rbf-per", freq_hz=180.0) == pytest.approx(fit.log_map, rel=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("family", ["pw-sparse", "hier"])
    def test_sparse_families_fit(self, family):
        obs = rbf_draw(0.3, n=10, noise=1e-2, seed=8)
        fit = gp.fit_map(obs, family, restarts=1, seed=0, freq_hz=150.0, maxfev=300)
        assert np.isfinite(fit.log_map)
        assert np.all(np.asarray(fit.spec.sigmas) > 0)

    def test_errors(self):
        obs = rbf_draw(0.3, n=5)
        with pytest.raises(InvalidInputError):
            gp.fit_map(obs, "matern")
        with pytest.raises(InvalidInputError):
            gp.fit_map(obs, "bessel")
        with pytest.raises(InvalidInputError):
            gp.fit_map(obs_from([[0, 0]], [1]), "rbf-iso")
        with pytest.raises(InvalidInputError):
            gp.fit_map(obs, "rbf-iso", restarts=0)

    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_all_nonfinite_raises(self):
        obs = obs_from([[0.0, 0.0], [np.nan, 1.0], [1.0, 1.0]], [1.0, 2.0, 3.0])
        with pytest.raises(OptimizationError):
            gp.fit_map(obs, "rbf-iso", restarts=2)
