"""LMS channel model: Loo states, Markov environments, fading streams."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from lmsacm.channel import (
    ChannelTrace,
    ConfigError,
    EnvironmentModel,
    FadingProcess,
    LmsProcess,
    LooParams,
    MobilityConfig,
    PowerCdf,
    builtin_environment,
    builtin_environment_names,
    doppler_taps,
    filter_autocorrelation,
    generate_codewords,
    generate_trace,
    loo_amplitude_cdf,
    loo_mixture_cdf,
    loo_pdf,
    rician_state_trace,
    stationary_distribution,
)
from lmsacm.mathx import RngStream, marcum_q1


# 1 ms symbols: f_D T ~ 0.29, nearly independent fading samples
FAST = MobilityConfig(40.0, symbol_period=1e-3)
# 2 ms symbols at 10 m/s: 50 symbols per meter, so the Markov chain and the
# shadowing mix within a few hundred symbols while fading stays correlated
MIXING = MobilityConfig(10.0, symbol_period=2e-3)


def two_state_doc(**over):
    doc = {
        "units": "natural",
        "states": [{"b0": 0.05, "d0": 0.04, "mu": -0.1}, {"b0": 0.02, "d0": 0.3, "mu": -1.0}],
        "p": [2 / 3, 1 / 3],
        "P": [[0.9, 0.1], [0.2, 0.8]],
    }
    doc.update(over)
    return doc


class TestLooParams:
    def test_from_db_conventions(self):
        loo = LooParams.from_db(alpha_db=-20 * math.log10(math.e), psi_db=20 * math.log10(math.e) * 0.5, mp_db=-10)
        assert loo.mu_loo == pytest.approx(-1.0)
        assert loo.d0 == pytest.approx(0.25)
        assert 2 * loo.b0 == pytest.approx(0.1)

    def test_mean_power(self):
        loo = LooParams(b0=0.1, d0=0.0, mu_loo=0.0)
        assert loo.mean_power == pytest.approx(1.2)

    @pytest.mark.parametrize("kw", [{"b0": 0.0, "d0": 0.1, "mu_loo": 0.0}, {"b0": 0.1, "d0": -1.0, "mu_loo": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            LooParams(**kw)


class TestEnvironmentModel:
    def test_builtins_load_and_are_stationary(self):
        names = builtin_environment_names()
        assert {"its", "open", "suburban", "heavy-tree"} <= set(names)
        for n in names:
            env = builtin_environment(n)
            npt.assert_allclose(stationary_distribution(env.transition_matrix), env.state_probs, atol=1e-6)

    def test_its_state2_sojourn_matches_frame_model(self, its_env):
        # 420 ms at 15 m/s with 1 m frames -> 6.3 frames mean sojourn
        assert 1.0 / (1.0 - its_env.transition_matrix[1, 1]) == pytest.approx(6.3, rel=1e-9)

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="p: "):
            EnvironmentModel.from_mapping(two_state_doc(p=[0.6, 0.3]))

    def test_rows_must_be_stochastic(self):
        with pytest.raises(ConfigError, match=r"P\[1\]"):
            EnvironmentModel.from_mapping(two_state_doc(P=[[0.9, 0.1], [0.2, 0.7]]))

    def test_p_must_be_stationary(self):
        with pytest.raises(ConfigError, match="stationary"):
            EnvironmentModel.from_mapping(two_state_doc(p=[0.5, 0.5]))

    def test_missing_field_is_named(self):
        doc = two_state_doc()
        del doc["states"][1]["b0"]
        with pytest.raises(ConfigError, match=r"states\[1\]\.b0"):
            EnvironmentModel.from_mapping(doc)

    def test_missing_file_names_path(self, tmp_path):
        path = tmp_path / "nowhere.yaml"
        with pytest.raises(ConfigError, match="nowhere.yaml"):
            EnvironmentModel.load(path)

    def test_mapping_round_trip(self):
        env = EnvironmentModel.from_mapping(two_state_doc())
        back = EnvironmentModel.from_mapping(env.to_mapping())
        assert back.states == env.states
        npt.assert_array_equal(back.transition_matrix, env.transition_matrix)


class TestMobility:
    def test_doppler(self):
        mob = MobilityConfig(40.0)
        assert mob.doppler == pytest.approx(40.0 * 2.2e9 / 299_792_458.0)
        assert mob.normalized_doppler == pytest.approx(mob.doppler * 2.7e-6)

    def test_rejects_doppler_above_half(self):
        with pytest.raises(ConfigError):
            MobilityConfig(speed=1e5, symbol_period=1e-3)


class TestDopplerFilter:
    def test_unit_energy(self):
        for fc in (0.01, 0.1, 0.3):
            assert np.sum(doppler_taps(fc) ** 2) == pytest.approx(1.0)

    def test_white_at_half(self):
        taps = doppler_taps(0.5)
        assert np.count_nonzero(taps) == 1

    def test_lag1_autocorrelation_matches_filter(self):
        # f_D T = 0.5 is the white limit; a mid-range cutoff checks the shaping itself
        for fd in (0.5, 0.1):
            proc = FadingProcess(fd, RngStream(3, 1))
            h = proc.take(400_000)
            emp = np.mean(h[1:] * np.conj(h[:-1])).real / np.mean(np.abs(h) ** 2)
            rho = filter_autocorrelation(proc.taps, 1)
            assert emp == pytest.approx(rho[1] / rho[0], abs=0.01)

    def test_slow_fading_power_and_correlation(self):
        fd = 2e-3  # coarse-grid path
        h = FadingProcess(fd, RngStream(5, 2)).take(2_000_000)
        assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.05)
        lag = 100  # sinc(2 f_D k) for an ideal rectangular spectrum
        emp = np.mean(h[lag:] * np.conj(h[:-lag])).real / np.mean(np.abs(h) ** 2)
        assert emp == pytest.approx(np.sinc(2 * fd * lag), abs=0.05)

    def test_streaming_continuity(self):
        a = FadingProcess(0.01, RngStream(9, 9)).take(5000)
        p = FadingProcess(0.01, RngStream(9, 9))
        b = np.concatenate([p.take(1234), p.take(3766)])
        npt.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_rejects_invalid_doppler(self):
        with pytest.raises(ConfigError):
            FadingProcess(0.0, RngStream(1))


class TestTraces:
    def test_pure_los(self):
        env = EnvironmentModel.single_state(LooParams(b0=1e-14, d0=0.0, mu_loo=0.0))
        tr = generate_trace(env, MobilityConfig(10.0), 1.0, 2, 1000, RngStream(1))
        npt.assert_allclose(np.abs(tr.gains), 1.0, atol=1e-5)

    def test_rayleigh_power(self):
        env = EnvironmentModel.single_state(LooParams(b0=0.5, d0=0.0, mu_loo=-40.0))
        # fast fading (f_D T ~ 0.29) so 1e6 symbols are close to independent
        tr = generate_trace(env, FAST, 1.0, 1, 1_000_000, RngStream(2))
        assert np.mean(np.abs(tr.gains) ** 2) == pytest.approx(1.0, rel=0.02)

    def test_power_bookkeeping(self):
        loo = LooParams(b0=0.1, d0=0.0, mu_loo=-0.2)
        env = EnvironmentModel.single_state(loo)
        tr = generate_trace(env, FAST, 1.0, 1, 1_000_000, RngStream(3))
        assert np.mean(np.abs(tr.gains) ** 2) == pytest.approx(loo.mean_power, rel=0.02)

    def test_state2_sojourn_time(self, its_env):
        # coarser symbols keep the test short: 15 m/s, 1 ms symbols, 1 m frames
        mob = MobilityConfig(15.0, symbol_period=1e-3)
        _, states = LmsProcess(its_env, mob, RngStream(4)).take(3_000_000)
        in2 = states == 1
        edges = np.flatnonzero(np.diff(in2.astype(np.int8)))
        runs = np.diff(edges)[(in2[edges[:-1] + 1])]
        assert runs.mean() * mob.symbol_period == pytest.approx(0.420, rel=0.15)

    def test_reproducible(self, its_env):
        mob = MobilityConfig(5.0)
        a = generate_trace(its_env, mob, 0.1, 1, 20_000, RngStream(11, 2))
        b = generate_trace(its_env, mob, 0.1, 1, 20_000, RngStream(11, 2))
        npt.assert_array_equal(a.gains, b.gains)

    def test_codewords_reshape_and_snr(self, its_env):
        tr = generate_codewords(its_env, MobilityConfig(1.0), 0.5, 3, 100, RngStream(1))
        assert tr.codewords(100).shape == (3, 100)
        npt.assert_allclose(tr.snr, np.abs(tr.gains) ** 2 / 0.5)
        with pytest.raises(ValueError):
            tr.codewords(7)

    def test_rician_trace_mean_snr(self):
        tr = rician_state_trace(0.0, 0.5, 1.0, 1e5, 2.7e-6, 1_000_000, RngStream(5))
        assert np.mean(tr.snr) == pytest.approx(1.0, rel=0.01)

    def test_rician_trace_cdf(self):
        mu, theta2, sigma2 = 1.0, 0.25, 1.0
        tr = rician_state_trace(mu, theta2, sigma2, 1e5, 2.7e-6, 100_000, RngStream(6))
        zeta = math.sqrt(theta2 / sigma2)
        cdf = lambda x: 1 - marcum_q1(mu / math.sqrt(theta2), np.sqrt(x) / zeta)
        assert stats.kstest(tr.snr, cdf).statistic <= 0.01

    def test_trace_csv(self, tmp_path):
        tr = ChannelTrace.from_gains(np.array([1 + 1j, 0.5j]), 2.0, [0, 2])
        path = tmp_path / "t.csv"
        tr.to_csv(path, "seed=1")
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1] == "index,state,re_h,im_h,gamma"
        assert lines[2].split(",")[-1] == "1.0"


class TestLooDistribution:
    def test_zero(self, its_env):
        assert loo_mixture_cdf(its_env, 0.0) == 0.0

    def test_rician_limit(self):
        b0 = 0.08
        loo = LooParams(b0=b0, d0=0.0, mu_loo=0.0)
        x = np.linspace(0.1, 2.0, 12)
        npt.assert_allclose(loo_amplitude_cdf(loo, x), 1 - marcum_q1(1 / math.sqrt(b0), x / math.sqrt(b0)), atol=1e-14)
        tiny = LooParams(b0=b0, d0=1e-10, mu_loo=0.0)
        npt.assert_allclose(loo_amplitude_cdf(tiny, x), loo_amplitude_cdf(loo, x), atol=1e-5)

    @pytest.mark.parametrize("state", [0, 1, 2])
    def test_cdf_against_density_quadrature(self, its_env, state):
        # oracle: integrate the nested-integral density
        loo = its_env.states[state]
        for x in (0.05, 0.3, math.exp(loo.mu_loo), 1.2):
            ref = integrate.quad(lambda r: loo_pdf(loo, r), 0, x, limit=200, epsabs=1e-12)[0]
            assert loo_amplitude_cdf(loo, x)[0] == pytest.approx(ref, abs=2e-8)

    def test_monotone_and_bounded(self):
        for name in builtin_environment_names():
            env = builtin_environment(name)
            c = loo_mixture_cdf(env, np.linspace(0, 3, 100))
            assert np.all(np.diff(c) >= -1e-14)
            assert c[0] >= 0 and c[-1] <= 1

    def test_median_against_trace(self, its_env):
        tr = generate_trace(its_env, MIXING, 1.0, 1, 3_000_000, RngStream(7))
        amp = np.abs(tr.gains)
        med = np.median(amp)
        assert loo_mixture_cdf(its_env, med) == pytest.approx(0.5, abs=0.01)

    def test_trace_ks_against_mixture(self, its_env):
        tr = generate_trace(its_env, MIXING, 1.0, 1, 1_000_000, RngStream(8))
        amp = np.sort(np.abs(tr.gains))
        grid = np.quantile(amp, np.linspace(0.001, 0.999, 300))
        emp = np.searchsorted(amp, grid, side="right") / amp.size
        assert np.max(np.abs(emp - loo_mixture_cdf(its_env, grid))) <= 0.02

    def test_power_cdf_table(self, its_env):
        law = PowerCdf(its_env, points=400)
        k = np.array([1e-3, 0.05, 0.3, 0.9, 2.0])
        npt.assert_allclose(law(k), loo_mixture_cdf(its_env, np.sqrt(k)), atol=1e-4)
        assert law(0.0) == 0.0 and law(math.inf) == 1.0

    @given(st.floats(0.01, 0.3), st.floats(0.0, 0.6), st.floats(-2.0, 0.5))
    @settings(max_examples=15, deadline=None)
    def test_single_state_cdf_monotone(self, b0, d0, mu):
        loo = LooParams(b0=b0, d0=d0, mu_loo=mu)
        c = loo_amplitude_cdf(loo, np.linspace(0, 4, 40))
        assert np.all(np.diff(c) >= -1e-12)
