"""Samplers, sample I/O and the closed-form maps of rotationally invariant laws."""
import math

import numpy as np
import pytest
from scipy import integrate, stats

from spherequant.distributions import (
    RotInvariantLaw,
    SphericalSample,
    VonMisesFisher,
    angular_cdf,
    angular_cdf_star,
    angular_cdf_star_inv,
    angular_quantile,
    closed_form_F,
    closed_form_Q,
    load_sample,
    parse_sample,
    sample_mixture,
    sample_uniform,
    sample_vmf,
)
from spherequant.exceptions import DomainError
from spherequant.geometry import E1, E2, E3, geodesic_distance, normalize, random_rotation


class TestUniform:
    def test_mean_and_marginals(self):
        x = sample_uniform(10_000, seed=1).points
        assert np.linalg.norm(x.mean(axis=0)) <= 0.05
        for i in range(3):
            assert stats.kstest(x[:, i], stats.uniform(-1, 2).cdf).statistic <= 0.02

    def test_deterministic(self):
        a, b = sample_uniform(100, seed=3), sample_uniform(100, seed=3)
        np.testing.assert_array_equal(a.points, b.points)
        assert a.to_csv() == b.to_csv()

    def test_empty(self):
        assert len(sample_uniform(0, seed=1)) == 0


class TestVMF:
    def test_kappa_zero_is_uniform(self):
        x = sample_vmf(E3, 0.0, 10_000, seed=4).points
        u = sample_uniform(10_000, seed=5).points
        for i in range(3):
            assert stats.ks_2samp(x[:, i], u[:, i]).statistic <= 0.03

    def test_mean_resultant_length(self):
        # E<X, mu> = coth(kappa) - 1/kappa, checked against numeric integration
        kappa = 10.0
        num = integrate.quad(lambda t: t * math.exp(kappa * t), -1, 1)[0]
        den = integrate.quad(lambda t: math.exp(kappa * t), -1, 1)[0]
        assert num / den == pytest.approx(1 / math.tanh(kappa) - 1 / kappa, abs=1e-12)
        x = sample_vmf(E3, kappa, 10_000, seed=6).points
        assert x[:, 2].mean() == pytest.approx(0.9, abs=0.01)

    def test_mean_direction(self):
        mu = normalize(np.array([1.0, -2.0, 0.5]))
        x = sample_vmf(mu, 10.0, 10_000, seed=7).points
        assert math.degrees(geodesic_distance(normalize(x.mean(axis=0)), mu)) < 2.0

    def test_negative_kappa(self):
        with pytest.raises(DomainError):
            sample_vmf(E3, -1.0, 5, seed=0)

    def test_latitude_law(self):
        kappa = 4.0
        x = sample_vmf(E2, kappa, 5000, seed=8).points
        law = RotInvariantLaw.vmf(E2, kappa)
        assert stats.kstest(x[:, 1], lambda r: angular_cdf(law, r)).pvalue > 1e-3


class TestMixture:
    def test_single_component_matches_vmf(self):
        comp = VonMisesFisher(E1, 5.0)
        a = sample_mixture([(1.0, comp)], 200, seed=9).points
        b = sample_vmf(E1, 5.0, 200, seed=9).points
        np.testing.assert_array_equal(a, b)

    def test_component_counts(self):
        n = 10_000
        x = sample_mixture([(0.5, VonMisesFisher(E3, 50.0)), (0.5, VonMisesFisher(-E3, 50.0))], n, seed=10).points
        upper = int(np.sum(x[:, 2] > 0))
        assert abs(upper - n / 2) <= 3 * math.sqrt(n / 4)

    def test_zero_weight_never_drawn(self):
        x = sample_mixture([(1.0, VonMisesFisher(E3, 50.0)), (0.0, VonMisesFisher(-E3, 50.0))], 2000, seed=11).points
        assert np.all(x[:, 2] > 0)

    def test_bad_weights(self):
        with pytest.raises(DomainError):
            sample_mixture([(0.6, VonMisesFisher(E3, 1.0)), (0.6, VonMisesFisher(E1, 1.0))], 10, seed=0)


class TestSampleIO:
    def test_xyz_row(self):
        np.testing.assert_array_equal(parse_sample("0,0,1\n", "xyz").points, [E3])

    def test_lonlat_row(self):
        np.testing.assert_allclose(parse_sample("90,0\n", "lonlat").points, [E2], atol=1e-15)

    def test_auto_detect(self):
        np.testing.assert_allclose(parse_sample("lon_deg,lat_deg\n0,90\n").points, [E3], atol=1e-15)
        np.testing.assert_allclose(parse_sample("x,y,z\n1,0,0\n").points, [E1])

    def test_renormalizes_within_tolerance(self):
        p = parse_sample("0,0,1.005\n", "xyz").points
        np.testing.assert_allclose(p, [E3])

    def test_rejects_bad_norm_with_line(self):
        with pytest.raises(DomainError, match="line 3"):
            parse_sample("x,y,z\n0,0,1\n0,0,1.5\n")

    def test_rejects_malformed_row(self):
        with pytest.raises(DomainError, match="line 2"):
            parse_sample("0,0,1\n0,abc,1\n", "xyz")

    def test_csv_roundtrip_is_exact(self, tmp_path):
        s = sample_uniform(50, seed=12)
        path = tmp_path / "s.csv"
        s.to_csv(path)
        np.testing.assert_array_equal(load_sample(path).points, s.points)

    def test_lonlat_roundtrip(self, tmp_path):
        s = sample_uniform(50, seed=13)
        path = tmp_path / "s.csv"
        s.to_csv(path, fmt="lonlat")
        np.testing.assert_allclose(load_sample(path).points, s.points, atol=1e-12)

    def test_sample_validates_norm(self):
        with pytest.raises(DomainError):
            SphericalSample(np.array([[1.0, 1.0, 0.0]]))


class TestAngularLaw:
    def test_uniform_angular_part(self):
        law = RotInvariantLaw.vmf(E3, 0.0)
        r = np.linspace(-1, 1, 11)
        np.testing.assert_allclose(angular_cdf(law, r), (r + 1) / 2, atol=1e-15)
        np.testing.assert_allclose(angular_cdf_star(law, r), r, atol=1e-15)

    def test_vmf_star_at_zero(self):
        k = 10.0
        expected = 2 * (1 - math.exp(-k)) / (math.exp(k) - math.exp(-k)) - 1
        law = RotInvariantLaw.vmf(E3, k)
        assert angular_cdf_star(law, 0.0) == pytest.approx(expected, abs=1e-14)
        assert angular_cdf_star(law, 0.0) == pytest.approx(-0.99991, abs=1e-5)

    @pytest.mark.parametrize("kappa", [0.5, 10.0, 50.0])
    def test_quantile_inverts_cdf(self, kappa):
        law = RotInvariantLaw.vmf(E3, kappa)
        r = np.linspace(-1, 1, 101)
        np.testing.assert_allclose(angular_quantile(law, angular_cdf(law, r)), r, atol=1e-10)
        s = angular_cdf_star(law, r)
        # below |s| = 1 - 1e-8 the value 2F - 1 still resolves r in double precision
        ok = np.abs(s) < 1 - 1e-8
        np.testing.assert_allclose(angular_cdf_star_inv(law, s[ok]), r[ok], atol=1e-7)

    def test_general_angular_function_matches_vmf(self):
        k = 3.0
        general = RotInvariantLaw(E3, angular=lambda s: np.exp(k * s))
        vmf = RotInvariantLaw.vmf(E3, k)
        r = np.linspace(-1, 1, 21)
        np.testing.assert_allclose(angular_cdf(general, r), angular_cdf(vmf, r), atol=1e-10)
        p = np.linspace(0.01, 0.99, 9)
        np.testing.assert_allclose(angular_quantile(general, p), angular_quantile(vmf, p), atol=1e-10)

    def test_rejects_nonpositive_angular(self):
        with pytest.raises(DomainError):
            RotInvariantLaw(E3, angular=lambda s: s)


class TestClosedForms:
    def test_uniform_is_identity(self):
        law = RotInvariantLaw.vmf(E3, 0.0)
        z = sample_uniform(100, seed=14).points
        np.testing.assert_allclose(closed_form_F(law, z), z, atol=1e-14)
        np.testing.assert_allclose(closed_form_Q(law, z), z, atol=1e-14)

    def test_axis_fixed(self):
        law = RotInvariantLaw.vmf(E3, 10.0)
        np.testing.assert_allclose(closed_form_F(law, E3), E3)
        np.testing.assert_allclose(closed_form_Q(law, E3), E3)
        np.testing.assert_allclose(closed_form_F(law, -E3), -E3)

    def test_equator_point(self):
        law = RotInvariantLaw.vmf(E3, 10.0)
        a = angular_cdf_star(law, 0.0)
        np.testing.assert_allclose(closed_form_F(law, E1), [math.sqrt(1 - a * a), 0.0, a], atol=1e-14)

    def test_inverse_composition(self):
        law = RotInvariantLaw.vmf(E3, 10.0)
        z = sample_uniform(20_000, seed=15).points
        np.testing.assert_allclose(closed_form_Q(law, closed_form_F(law, z)), z, atol=1e-9)

    def test_pushforward_latitude(self):
        law = RotInvariantLaw.vmf(E2, 10.0)
        q = closed_form_Q(law, sample_uniform(10_000, seed=16).points)
        assert stats.kstest(q @ E2, lambda r: angular_cdf(law, r)).statistic <= 0.02

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(17)
        o = random_rotation(rng)
        law = RotInvariantLaw.vmf(E3, 10.0)
        rlaw = RotInvariantLaw.vmf(o @ E3, 10.0)
        z = sample_uniform(500, seed=18).points
        np.testing.assert_allclose(closed_form_F(rlaw, z @ o.T), closed_form_F(law, z) @ o.T, atol=1e-10)
        np.testing.assert_allclose(closed_form_Q(rlaw, z @ o.T), closed_form_Q(law, z) @ o.T, atol=1e-10)

    def test_unit_outputs(self):
        law = RotInvariantLaw.vmf(normalize(np.array([1.0, 2.0, 3.0])), 25.0)
        z = sample_uniform(1000, seed=19).points
        np.testing.assert_allclose(np.linalg.norm(closed_form_F(law, z), axis=1), 1.0, atol=1e-14)
