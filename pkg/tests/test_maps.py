"""Entropic quantile and distribution maps, their closed-form derivatives and interpolation."""
import math

import numpy as np
import pytest
from scipy.spatial.distance import directed_hausdorff

from spherequant.depth import reference_contour
from spherequant.distributions import RotInvariantLaw, closed_form_Q, sample_uniform, sample_vmf
from spherequant.exceptions import DomainError, SingularityError
from spherequant.geometry import E1, E3, cost, exp_map, geodesic_distance, log_map, normalize, tangent_project
from spherequant.harmonics import HarmonicCoeffs, n_coeffs
from spherequant.maps import (
    EntropicMapContext,
    cost_derivatives,
    distribution_weights,
    empirical_c_transform,
    g_eps_density,
    grad_u_ceps_closed_form,
    grad_u_eps_closed_form,
    hessian_u_eps,
    interpolate_potentials,
    map_F_eps,
    map_Q_eps,
    pushforward_defect,
    quantile_weights,
    series_gradient,
)
from spherequant.solver import PotentialEstimate, SolverConfig, fit, smooth_conjugate_grid


def _random_pairs(n, seed):
    rng = np.random.default_rng(seed)
    x = sample_uniform(n, seed=seed).points
    z = sample_uniform(n, seed=seed + 1000).points
    keep = np.abs(np.sum(x * z, axis=1)) < 0.95
    return x[keep], z[keep], rng


def _small_context(eps=0.5, n=6, seed=0, L=6):
    rng = np.random.default_rng(seed)
    v = 0.2 * rng.standard_normal(n_coeffs(L))
    potential = PotentialEstimate(HarmonicCoeffs(L, v), eps)
    target = sample_vmf(E3, 3.0, n, seed=seed + 1).points
    return EntropicMapContext.build(potential, target, n_uniform=512, seed=seed)


class TestCostDerivatives:
    def test_quarter_circle(self):
        g, _ = cost_derivatives(E1, E3)
        assert np.linalg.norm(g) == pytest.approx(math.pi / 2, abs=1e-15)
        np.testing.assert_allclose(g, -math.pi / 2 * E3)

    def test_gradient_finite_differences(self):
        x, z, _ = _random_pairs(40, 1)
        g, _ = cost_derivatives(x, z)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (0.5 * np.arccos(np.sum((x + e) * z, axis=1)) ** 2
                  - 0.5 * np.arccos(np.sum((x - e) * z, axis=1)) ** 2) / (2 * h)
            np.testing.assert_allclose(g[:, i], fd, atol=1e-6)

    def test_hessian_finite_differences(self):
        x, z, _ = _random_pairs(40, 2)
        _, hess = cost_derivatives(x, z)
        h = 1e-5
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (cost_derivatives(x + e, z)[0] - cost_derivatives(x - e, z)[0]) / (2 * h)
            np.testing.assert_allclose(hess[:, :, i], fd, atol=1e-5)

    def test_coincident_limit(self):
        x = normalize(np.array([0.3, -0.4, 0.8]))
        g, hess = cost_derivatives(x, x)
        np.testing.assert_allclose(g, -x)
        np.testing.assert_allclose(hess, np.outer(x, x) / 3.0)

    def test_near_coincident_tangent_finite_differences(self):
        # t = <x, z> exceeds 1 off the sphere near z = x, so step along Exp rays
        x = normalize(np.array([0.2, 0.5, 0.7]))
        rng = np.random.default_rng(3)
        for scale in (1e-3, 1e-5):
            z = exp_map(x, scale * normalize(tangent_project(x, rng.standard_normal(3))))
            g, _ = cost_derivatives(x, z)
            v = normalize(tangent_project(x, rng.standard_normal(3)))
            h = 1e-7
            fd = (cost(exp_map(x, h * v), z) - cost(exp_map(x, -h * v), z)) / (2 * h)
            assert g @ v == pytest.approx(fd, abs=1e-6)

    @pytest.mark.parametrize("theta", [0.5e-4, 0.99e-4, 1.01e-4, 1e-3])
    def test_small_angle_branches(self, theta):
        # exact values in theta from the series of theta cot theta
        x = normalize(np.array([0.1, 0.2, 0.9]))
        v = normalize(tangent_project(x, np.array([1.0, 0.0, 0.0])))
        z = exp_map(x, theta * v)
        sn = math.sin(theta)
        one_minus_cot = theta**2 / 3 + theta**4 / 45 + 2 * theta**6 / 945
        g, hess = cost_derivatives(x, z)
        np.testing.assert_allclose(g, -(theta / sn) * z, atol=1e-12)
        np.testing.assert_allclose(hess, one_minus_cot / sn**2 * np.outer(z, z), atol=1e-7)

    def test_antipodal_raises(self):
        with pytest.raises(SingularityError):
            cost_derivatives(E3, -E3)


class TestEmpiricalCTransform:
    def test_single_atom(self):
        u = sample_uniform(1, seed=4).points
        z = sample_uniform(5, seed=5).points
        np.testing.assert_allclose(empirical_c_transform(0.3, u, z, 0.1), cost(u[0], z) - 0.3, atol=1e-14)

    def test_shift(self):
        u = sample_uniform(50, seed=6).points
        vals = np.random.default_rng(7).standard_normal(50)
        z = sample_uniform(5, seed=8).points
        np.testing.assert_allclose(empirical_c_transform(vals + 2.0, u, z, 0.2),
                                   empirical_c_transform(vals, u, z, 0.2) - 2.0, atol=1e-13)

    def test_monte_carlo_matches_quadrature(self):
        u = sample_uniform(10_000, seed=9).points
        z = sample_uniform(20, seed=10).points
        mc = empirical_c_transform(0.0, u, z, 0.5)
        quad = smooth_conjugate_grid(HarmonicCoeffs.zeros(24), z, 0.5)
        assert np.max(np.abs(mc - quad)) <= 2e-2

    def test_weights_validation(self):
        with pytest.raises(DomainError):
            empirical_c_transform(0.0, sample_uniform(3, seed=0).points, E3, 0.1, log_weights=np.zeros(2))
        with pytest.raises(DomainError):
            empirical_c_transform(0.0, np.zeros((0, 3)), E3, 0.1)


class TestContext:
    def test_caches(self):
        ctx = _small_context()
        assert ctx.u_at_uniform.shape == (ctx.n_uniform,)
        assert ctx.v_at_target.shape == (ctx.n_target,)
        with pytest.raises(ValueError):
            ctx.target[0, 0] = 1.0

    def test_uniform_draw_is_seeded(self):
        a, b = _small_context(seed=3), _small_context(seed=3)
        np.testing.assert_array_equal(a.uniform, b.uniform)

    def test_empty_target(self):
        with pytest.raises(DomainError):
            EntropicMapContext.build(PotentialEstimate.zero(4, 0.1), np.zeros((0, 3)))


class TestMaps:
    def test_single_atom_is_exact(self):
        atom = normalize(np.array([0.3, 0.2, 0.9]))
        ctx = EntropicMapContext.build(PotentialEstimate.zero(4, 0.1), atom, n_uniform=64)
        x = sample_uniform(50, seed=11).points
        x = x[x @ atom > -0.9]
        np.testing.assert_allclose(map_Q_eps(ctx, x), np.broadcast_to(atom, x.shape), atol=1e-12)

    def test_exact_uniform_is_identity(self):
        ctx = EntropicMapContext.exact_uniform(24, 0.5)
        x = sample_uniform(30, seed=12).points
        np.testing.assert_allclose(map_Q_eps(ctx, x), x, atol=1e-6)
        np.testing.assert_allclose(map_F_eps(ctx, x), x, atol=1e-6)
        np.testing.assert_allclose(tangent_project(x, grad_u_eps_closed_form(ctx, x)), 0.0, atol=1e-6)

    def test_weights_are_probabilities(self):
        ctx = _small_context(eps=0.05, n=20)
        x = sample_uniform(100, seed=13).points
        for w in (quantile_weights(ctx, x), distribution_weights(ctx, x)):
            assert np.all(w >= 0)
            np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        res = map_F_eps(ctx, x, full=True)
        np.testing.assert_allclose(res.weights_sum, 1.0, atol=1e-12)

    def test_outputs_are_unit(self):
        ctx = _small_context(eps=0.02, n=20)
        x = sample_uniform(300, seed=14).points
        q = map_Q_eps(ctx, x)
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-14)
        assert map_Q_eps(ctx, x[0]).shape == (3,)

    def test_antipodal_atom_dropped(self):
        target = np.array([E3, -E3])
        ctx = EntropicMapContext.build(PotentialEstimate.zero(4, 0.5), target, n_uniform=64)
        res = map_Q_eps(ctx, E3[None, :], full=True)
        assert res.dropped == 1
        np.testing.assert_allclose(res.points[0], E3, atol=1e-12)

    def test_all_antipodal_raises(self):
        ctx = EntropicMapContext.build(PotentialEstimate.zero(4, 0.5), -E3, n_uniform=64)
        with pytest.raises(SingularityError, match="antipodal"):
            map_Q_eps(ctx, E3)

    def test_tiny_eps_collapses_to_atom(self):
        ctx = _small_context(eps=1e-4, n=10)
        x = sample_uniform(20, seed=15).points
        q = map_Q_eps(ctx, x)
        d = geodesic_distance(q[:, None, :], ctx.target[None, :, :])
        assert np.all(np.min(d, axis=1) <= 1e-6)


class TestDensity:
    def test_flat_limit(self):
        ctx = EntropicMapContext.exact_uniform(12, 1e3)
        x = sample_uniform(10, seed=16).points
        np.testing.assert_allclose(g_eps_density(ctx, x, sample_uniform(10, seed=17).points), 1.0, atol=1e-2)

    def test_consistent_version_integrates_to_one(self):
        ctx = _small_context(eps=0.1, n=30)
        x = sample_uniform(8, seed=18).points
        g = g_eps_density(ctx, x, ctx.target, consistent=True)
        np.testing.assert_allclose(g.mean(axis=1), 1.0, atol=1e-8)

    def test_positive(self):
        ctx = _small_context(eps=0.02, n=30)
        g = g_eps_density(ctx, sample_uniform(20, seed=19).points, sample_uniform(20, seed=20).points)
        assert np.all(g > 0) and g.shape == (20, 20)


class TestClosedFormDerivatives:
    def test_gradient_tangent_part_is_minus_log_average(self):
        ctx = _small_context(eps=0.3, n=15)
        x = sample_uniform(20, seed=21).points
        w = quantile_weights(ctx, x)
        logs = log_map(x[:, None, :], ctx.target[None, :, :])
        avg = np.einsum("qk,qkd->qd", w, logs)
        np.testing.assert_allclose(tangent_project(x, grad_u_eps_closed_form(ctx, x)), -avg, atol=1e-12)

    def test_conjugate_gradient_shape(self):
        ctx = _small_context(eps=0.3, n=15)
        g = grad_u_ceps_closed_form(ctx, sample_uniform(7, seed=22).points)
        assert g.shape == (7, 3) and np.all(np.isfinite(g))

    def test_hessian_symmetric(self):
        ctx = _small_context(eps=0.5, n=8)
        h = hessian_u_eps(ctx, sample_uniform(20, seed=23).points)
        np.testing.assert_allclose(h, np.swapaxes(h, 1, 2), atol=1e-8)

    def test_hessian_finite_differences(self):
        ctx = _small_context(eps=0.5, n=8)
        x = sample_uniform(10, seed=24).points
        h = hessian_u_eps(ctx, x)
        step = 1e-5
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            fd = (grad_u_eps_closed_form(ctx, x + e) - grad_u_eps_closed_form(ctx, x - e)) / (2 * step)
            np.testing.assert_allclose(h[:, :, i], fd, atol=1e-3)

    def test_exact_uniform_hessian_structure(self):
        ctx = EntropicMapContext.exact_uniform(24, 0.5)
        h = hessian_u_eps(ctx, E3)
        assert max(abs(h[0, 1]), abs(h[0, 2]), abs(h[1, 2])) <= 1e-6
        assert h[0, 0] == pytest.approx(h[1, 1], abs=1e-6)


class TestInterpolation:
    def test_endpoints_and_self(self):
        a = PotentialEstimate(HarmonicCoeffs(3, np.arange(16.0)), 0.1)
        b = PotentialEstimate(HarmonicCoeffs(3, -np.arange(16.0)), 0.1)
        np.testing.assert_array_equal(interpolate_potentials(a, b, 1.0).coeffs.values, a.coeffs.values)
        np.testing.assert_array_equal(interpolate_potentials(a, b, 0.0).coeffs.values, b.coeffs.values)
        np.testing.assert_array_equal(interpolate_potentials(a, a, 0.5).coeffs.values, a.coeffs.values)

    def test_mismatch(self):
        with pytest.raises(DomainError):
            interpolate_potentials(PotentialEstimate.zero(3, 0.1), PotentialEstimate.zero(4, 0.1), 0.5)
        with pytest.raises(DomainError):
            interpolate_potentials(PotentialEstimate.zero(3, 0.1), PotentialEstimate.zero(3, 0.2), 0.5)
        with pytest.raises(DomainError):
            interpolate_potentials(PotentialEstimate.zero(3, 0.1), PotentialEstimate.zero(3, 0.1), 1.5)

    def test_blend_contour_sandwich(self):
        cfg = SolverConfig(epsilon=0.1, band_limit=16, n_iters=10_000, seed=25)
        p1 = fit(sample_vmf(E1, 10.0, 1000, seed=26).points, cfg)
        p3 = fit(sample_vmf(E3, 10.0, 1000, seed=27).points, cfg)
        blend = interpolate_potentials(p1, p3, 0.5)
        ref = reference_contour(0.5, normalize(E1 + E3)).points

        def image(p):
            return exp_map(ref, -series_gradient(p, ref))

        c1, c3, cb = image(p1), image(p3), image(blend)

        def hausdorff(a, b):
            return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])

        gap = hausdorff(c1, c3)
        assert gap > 0.1
        assert hausdorff(cb, c1) < gap and hausdorff(cb, c3) < gap


@pytest.fixture(scope="module")
def vmf_contexts():
    data = sample_vmf(E3, 10.0, 2000, seed=28).points
    out = {}
    for eps in (0.5, 0.1, 0.05):
        cfg = SolverConfig(epsilon=eps, seed=29)
        out[eps] = EntropicMapContext.build(fit(data, cfg), data, seed=29)
    return out


class TestFittedMaps:
    def test_quantile_map_accuracy(self, vmf_contexts):
        ctx = vmf_contexts[0.05]
        x = sample_uniform(500, seed=30).points
        law = RotInvariantLaw.vmf(E3, 10.0)
        err = geodesic_distance(map_Q_eps(ctx, x), closed_form_Q(law, x))
        assert float(np.mean(err)) <= 0.15

    def test_approximate_inverse(self, vmf_contexts):
        x = sample_uniform(500, seed=31).points
        errs = [float(np.mean(geodesic_distance(map_F_eps(ctx, map_Q_eps(ctx, x)), x)))
                for ctx in (vmf_contexts[0.5], vmf_contexts[0.1], vmf_contexts[0.05])]
        assert errs[2] <= 0.2
        assert errs[0] > errs[1] > errs[2]

    def test_tangent_norm_bound(self, vmf_contexts):
        x = sample_uniform(500, seed=32).points
        for ctx in vmf_contexts.values():
            assert map_Q_eps(ctx, x, full=True).tangent_norm_max <= math.pi - 1e-6
            assert map_F_eps(ctx, x, full=True).tangent_norm_max <= math.pi - 1e-6

    def test_pushforward_defect_is_a_distance(self, vmf_contexts):
        ctx = vmf_contexts[0.05]
        d = pushforward_defect(ctx, sample_uniform(2000, seed=33).points, n_directions=16, seed=34)
        assert 0.0 <= d <= 1.0
        far = pushforward_defect(vmf_contexts[0.5], sample_uniform(2000, seed=33).points, 16, seed=34)
        assert d < far
