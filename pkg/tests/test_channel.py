"""Closed-form and Monte-Carlo checks for path-level synthesis."""

import numpy as np
import pytest
from scipy import stats

from chanlab.channel import (
    ArrayGeometry,
    Path,
    PathSet,
    array_response,
    fading_sample,
    merge_pathsets,
    synth_geometric,
    synth_tdl,
)


class TestArrayResponse:
    def test_broadside_is_all_ones(self):
        a = array_response(ArrayGeometry(4, 0.5), 0.0)
        np.testing.assert_allclose(a, np.ones(4), atol=1e-15)

    def test_endfire_two_elements(self):
        a = array_response(ArrayGeometry(2, 0.5), np.pi / 2)
        np.testing.assert_allclose(a, [1.0, -1.0], atol=1e-12)

    def test_30_degrees_three_elements(self):
        # phases 2*pi*0.5*k*sin(pi/6) = k*pi/2 -> [1, j, -1]
        a = array_response(ArrayGeometry(3, 0.5), np.pi / 6)
        np.testing.assert_allclose(a, [1.0, 1.0j, -1.0], atol=1e-12)

    def test_unit_modulus(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            geo = ArrayGeometry(int(rng.integers(1, 64)), rng.uniform(0.1, 2.0))
            a = array_response(geo, rng.uniform(-np.pi, np.pi))
            np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)

    def test_invalid_geometry(self):
        with pytest.raises(ValueError):
            ArrayGeometry(0)
        with pytest.raises(ValueError):
            ArrayGeometry(4, 0.0)


class TestSynthGeometric:
    def setup_method(self):
        self.rx1 = ArrayGeometry(1)
        self.tx1 = ArrayGeometry(1)

    def test_single_unit_path_is_one_everywhere(self):
        ps = PathSet(paths=[Path(gain=1.0 + 0j, delay_s=0.0)])
        freqs = np.arange(8) * 15e3
        for t in (0.0, 1e-3, 5e-3):
            g = synth_geometric(ps, self.rx1, self.tx1, freqs, t_s=t)
            np.testing.assert_allclose(g.data, np.ones((1, 1, 8)), atol=1e-14)

    def test_doppler_half_period(self):
        # 2*pi*100*0.005 = pi -> H = -1
        ps = PathSet(paths=[Path(gain=1.0 + 0j, delay_s=0.0, doppler_hz=100.0)])
        g = synth_geometric(ps, self.rx1, self.tx1, np.array([0.0]), t_s=5e-3)
        np.testing.assert_allclose(g.data[0, 0, 0], -1.0 + 0j, atol=1e-12)

    def test_delay_phase_slope_across_tones(self):
        ps = PathSet(paths=[Path(gain=1.0 + 0j, delay_s=1e-6)])
        g = synth_geometric(ps, self.rx1, self.tx1, np.array([0.0, 15e3]), t_s=0.0)
        dphi = np.angle(g.data[0, 0, 1] / g.data[0, 0, 0])
        assert dphi == pytest.approx(-2 * np.pi * 15e3 * 1e-6, abs=1e-12)

    def test_linear_in_path_gains(self):
        rng = np.random.default_rng(3)
        freqs = np.arange(16) * 15e3

        def random_pathset(n):
            return PathSet(paths=[
                Path(
                    gain=complex(rng.standard_normal(), rng.standard_normal()),
                    delay_s=rng.uniform(0, 1e-6),
                    aod_rad=rng.uniform(-np.pi, np.pi),
                    aoa_rad=rng.uniform(-np.pi, np.pi),
                    doppler_hz=rng.uniform(-100, 100),
                )
                for _ in range(n)
            ])

        rx, tx = ArrayGeometry(2), ArrayGeometry(4)
        a, b = random_pathset(3), random_pathset(5)
        union = merge_pathsets(a, b)
        h_union = synth_geometric(union, rx, tx, freqs, t_s=1e-3)

        # Exact superposition: the union equals the ordered accumulation of
        # per-path syntheses, bit for bit.
        acc = np.zeros_like(h_union.data)
        for p in union.paths:
            acc += synth_geometric(PathSet(paths=[p]), rx, tx, freqs, t_s=1e-3).data
        np.testing.assert_array_equal(h_union.data, acc)

        # Arbitrary splits only differ by summation order (rounding).
        h_a = synth_geometric(a, rx, tx, freqs, t_s=1e-3)
        h_b = synth_geometric(b, rx, tx, freqs, t_s=1e-3)
        np.testing.assert_allclose(h_union.data, h_a.data + h_b.data, rtol=1e-13)

    def test_doppler_phase_linearity(self):
        fd = 73.5
        ps = PathSet(paths=[Path(gain=1.0 + 0j, delay_s=0.0, doppler_hz=fd)])
        h0 = synth_geometric(ps, self.rx1, self.tx1, np.array([0.0]), 0.0).data[0, 0, 0]
        for t in np.linspace(1e-4, 20e-3, 17):
            ht = synth_geometric(ps, self.rx1, self.tx1, np.array([0.0]), t).data[0, 0, 0]
            expected = (2 * np.pi * fd * t) % (2 * np.pi)
            measured = np.angle(ht / h0) % (2 * np.pi)
            diff = min(abs(measured - expected), 2 * np.pi - abs(measured - expected))
            assert diff < 1e-9

    def test_imaginary_parts_not_discarded(self):
        ps = PathSet(paths=[Path(gain=1.0j, delay_s=0.0)])
        g = synth_geometric(ps, self.rx1, self.tx1, np.array([0.0]))
        assert g.data[0, 0, 0] == 1.0j

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            synth_geometric(PathSet(), self.rx1, self.tx1, np.array([0.0]))
        bad = PathSet(paths=[Path(gain=complex(np.nan, 0), delay_s=0.0)])
        with pytest.raises(ValueError):
            synth_geometric(bad, self.rx1, self.tx1, np.array([0.0]))
        with pytest.raises(ValueError):
            Path(gain=1.0 + 0j, delay_s=-1e-9).validate()

    def test_weights_path_uses_matrix(self):
        w = np.array([[1.0 + 0j, -1.0j]])
        ps = PathSet(paths=[Path(gain=1.0 + 0j, delay_s=0.0, weights=w)])
        g = synth_geometric(ps, ArrayGeometry(1), ArrayGeometry(2), np.array([0.0]))
        np.testing.assert_allclose(g.data[0, :, 0], w[0])


class TestSynthTdl:
    def test_single_tap_flat_magnitude(self):
        rng = np.random.default_rng(0)
        freqs = np.arange(32) * 15e3
        h = synth_tdl([(1.0, 0.0, 0.0)], freqs, 0.0, rng)
        np.testing.assert_allclose(np.abs(h), np.abs(h[0]), atol=1e-12)

    def test_two_tap_expected_power(self):
        # E[|H(f)|^2] = sum of tap powers = 1 at every tone.
        freqs = np.array([0.0, 120e3, 240e3])
        taps = [(0.5, 0.0, 0.0), (0.5, 2.083e-6, 0.0)]
        acc = np.zeros(3)
        rng = np.random.default_rng(42)
        n = 20000
        for _ in range(n):
            h = synth_tdl(taps, freqs, 0.0, rng)
            acc += np.abs(h) ** 2
        np.testing.assert_allclose(acc / n, 1.0, rtol=0.02)

    def test_frequency_selective_two_taps(self):
        rng = np.random.default_rng(1)
        n_f, df = 64, 15e3
        freqs = np.arange(n_f) * df
        # second tap at half the delay window -> strong ripple across tones
        h = synth_tdl([(0.5, 0.0, 0.0), (0.5, 1 / (2 * df * n_f) * n_f, 0.0)], freqs, 0.0, rng)
        assert np.abs(h).std() > 1e-3

    def test_time_shift_is_per_tap_rotation(self):
        taps = [(0.6, 0.0, 40.0), (0.4, 2e-7, -75.0)]
        freqs = np.arange(8) * 15e3
        t, dt = 3e-3, 2e-3
        h_t = synth_tdl(taps, freqs, t, np.random.default_rng(9))
        h_tdt = synth_tdl(taps, freqs, t + dt, np.random.default_rng(9))
        # same realization: value at t+dt equals per-tap rotated value at t
        gains = np.sqrt(np.array([0.6, 0.4]) / 2)
        rng = np.random.default_rng(9)
        g = gains * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        phases = np.exp(-1j * 2 * np.pi * np.outer([0.0, 2e-7], freqs))
        rot_t = np.exp(1j * 2 * np.pi * np.array([40.0, -75.0]) * t)
        rot_dt = np.exp(1j * 2 * np.pi * np.array([40.0, -75.0]) * dt)
        np.testing.assert_allclose(h_tdt, ((g * rot_t * rot_dt) @ phases), atol=1e-15)
        np.testing.assert_allclose(h_t, ((g * rot_t) @ phases), atol=1e-15)

    def test_rejects_empty_taps(self):
        with pytest.raises(ValueError):
            synth_tdl([], np.array([0.0]), 0.0, np.random.default_rng(0))


class TestFadingSample:
    def _draw(self, kind, n, seed=0, **kw):
        rng = np.random.default_rng(seed)
        return np.array([fading_sample(kind, rng, **kw) for _ in range(n)])

    def test_awgn_is_identity(self):
        assert fading_sample("awgn", np.random.default_rng(0)) == 1.0 + 0j

    def test_rayleigh_mean_power(self):
        h = self._draw("rayleigh", 100_000, seed=5, omega=2.0)
        assert np.mean(np.abs(h) ** 2) == pytest.approx(2.0, rel=0.03)

    def test_rician_k0_matches_rayleigh(self):
        h = self._draw("rician", 20_000, seed=11, k=0.0, omega=1.0)
        # envelope ~ Rayleigh(sigma = sqrt(omega/2))
        _, p = stats.kstest(np.abs(h), stats.rayleigh(scale=np.sqrt(0.5)).cdf)
        assert p > 1e-3

    def test_nakagami_m1_matches_rayleigh(self):
        h = self._draw("nakagami", 20_000, seed=13, m=1.0, omega=1.0)
        _, p = stats.kstest(np.abs(h), stats.rayleigh(scale=np.sqrt(0.5)).cdf)
        assert p > 1e-3

    def test_rician_envelope_distribution(self):
        k, omega = 4.0, 1.5
        h = self._draw("rician", 20_000, seed=17, k=k, omega=omega)
        s = np.sqrt(omega * k / (k + 1))
        sigma = np.sqrt(omega / (2 * (k + 1)))
        _, p = stats.kstest(np.abs(h), stats.rice(b=s / sigma, scale=sigma).cdf)
        assert p > 1e-3

    def test_nakagami_envelope_distribution(self):
        m, omega = 2.5, 0.8
        h = self._draw("nakagami", 20_000, seed=19, m=m, omega=omega)
        _, p = stats.kstest(np.abs(h), stats.nakagami(nu=m, scale=np.sqrt(omega)).cdf)
        assert p > 1e-3

    def test_parameter_domains(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            fading_sample("rician", rng, k=-0.1)
        with pytest.raises(ValueError):
            fading_sample("nakagami", rng, m=0.4)
        with pytest.raises(ValueError):
            fading_sample("rayleigh", rng, omega=0.0)
        with pytest.raises(ValueError):
            fading_sample("weibull", rng)
