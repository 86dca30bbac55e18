import numpy as np
import pytest
import scipy.stats

from ldct.operators import back_project, desk_scale_geometry, forward_project
from ldct.physics import (
    PhysicsParams,
    counter_uniform,
    kl_gradient,
    kl_value,
    lipschitz_bound,
    simulate_lowdose,
)


def log_dose_oracle(lam, n0, mu, min_counts=1.0, tail=1e-12):
    """Exact mean and sd of z = -log(max(K, min_counts)/n0)/mu, K ~ Poisson(lam).

    Computed by direct enumeration of the Poisson pmf out to negligible tail
    mass, independent of the sampler under test.
    """
    hi = int(scipy.stats.poisson.ppf(1 - tail, lam)) + 10
    k = np.arange(hi + 1)
    p = scipy.stats.poisson.pmf(k, lam)
    z = -np.log(np.maximum(k, min_counts) / n0) / mu
    mean = float(np.sum(p * z))
    var = float(np.sum(p * (z - mean) ** 2))
    return mean, np.sqrt(var)


class TestPhysicsParams:
    def test_defaults(self):
        p = PhysicsParams()
        assert p.n0 == 4096.0
        assert p.mu == pytest.approx(81.35858)
        assert p.min_counts == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n0=0.0),
            dict(n0=-5.0),
            dict(mu=0.0),
            dict(min_counts=0.0),
            dict(min_counts=5000.0),  # floor above the blank scan makes z < 0
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            PhysicsParams(**kwargs)


class TestCounterUniform:
    def test_deterministic(self):
        idx = np.arange(1000)
        a = counter_uniform(42, idx)
        b = counter_uniform(42, idx)
        assert np.array_equal(a, b)

    def test_keys_independent(self):
        idx = np.arange(1000)
        base = counter_uniform(42, idx)
        assert not np.array_equal(base, counter_uniform(43, idx))
        assert not np.array_equal(base, counter_uniform(42, idx, stream=1))
        assert not np.array_equal(base, counter_uniform(42, idx + 1))

    def test_range_open_interval(self):
        u = counter_uniform(0, np.arange(10**5))
        assert np.all(u > 0) and np.all(u < 1)

    def test_moments(self):
        n = 10**5
        u = counter_uniform(123, np.arange(n))
        se_mean = 1 / np.sqrt(12 * n)
        assert abs(u.mean() - 0.5) < 4 * se_mean
        assert abs(u.var() - 1 / 12) < 0.001

    def test_counter_order_irrelevant(self):
        # value at a counter does not depend on which batch requested it
        idx = np.array([17, 4, 900])
        whole = counter_uniform(7, np.arange(1000))
        assert np.array_equal(counter_uniform(7, idx), whole[idx])


class TestSimulateLowdose:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            simulate_lowdose(np.array([[-0.1]]), PhysicsParams(), 0)

    def test_sample_false_is_identity(self):
        s = np.random.default_rng(0).random((5, 7)) * 0.05
        z = simulate_lowdose(s, PhysicsParams(), 3, sample=False)
        assert np.array_equal(z, s)
        assert z is not s

    def test_deterministic_in_seed(self):
        s = np.full((20, 20), 0.02)
        p = PhysicsParams()
        assert np.array_equal(
            simulate_lowdose(s, p, 9), simulate_lowdose(s, p, 9)
        )
        assert not np.array_equal(
            simulate_lowdose(s, p, 9), simulate_lowdose(s, p, 10)
        )

    def test_exact_path_matches_enumeration(self):
        # lam = 30 photons per bin exercises the inverse-CDF branch; the
        # sample mean must sit within Monte Carlo error of the enumerated
        # expectation (measured 0.29 standard errors at this seed).
        n = 10**5
        p = PhysicsParams(n0=4096.0, mu=1.0, min_counts=1.0)
        s_clean = np.log(p.n0 / 30.0)
        z = simulate_lowdose(np.full((1, n), s_clean), p, 0)
        mean, sd = log_dose_oracle(30.0, p.n0, p.mu)
        assert abs(z.mean() - mean) < 3 * sd / np.sqrt(n)
        assert z.std() == pytest.approx(sd, rel=0.02)

    def test_normal_path_matches_enumeration(self):
        # lam = 4096 exercises the rounded-normal branch; agreement with the
        # exact Poisson enumeration validates the approximation (measured
        # 0.42 standard errors at this seed).
        n = 10**5
        p = PhysicsParams(n0=4096.0, mu=1.0, min_counts=1.0)
        z = simulate_lowdose(np.zeros((1, n)), p, 0)
        mean, sd = log_dose_oracle(4096.0, p.n0, p.mu)
        assert abs(z.mean() - mean) < 3 * sd / np.sqrt(n)
        assert z.std() == pytest.approx(sd, rel=0.02)

    def test_count_floor_caps_z(self):
        # a nearly opaque object drives counts to the floor, so z saturates
        # at log(n0 / min_counts) / mu
        p = PhysicsParams(n0=100.0, mu=1.0, min_counts=1.0)
        z = simulate_lowdose(np.full((4, 50), 40.0), p, 1)
        cap = np.log(p.n0 / p.min_counts) / p.mu
        np.testing.assert_allclose(z, cap, rtol=1e-15)

    def test_zero_attenuation_high_dose(self):
        # with no object the counts hover around n0, so z is near 0
        p = PhysicsParams(n0=10**6, mu=1.0)
        z = simulate_lowdose(np.zeros((1, 1000)), p, 2)
        assert np.all(np.abs(z) < 0.01)


class TestKLFidelity:
    def geom(self):
        return desk_scale_geometry(16, n_angles=10)

    def test_gradient_finite_difference(self):
        g = self.geom()
        p = PhysicsParams(n0=100.0, mu=1.0)
        rng = np.random.default_rng(5)
        x = rng.random(g.image_shape) * 0.2
        z = rng.random(g.sinogram_shape) * 0.1
        grad_val = kl_gradient(x, z, g, p)
        eps = 1e-5
        for idx in [(0, 0), (7, 3), (15, 15), (8, 8), (2, 13)]:
            e = np.zeros(g.image_shape)
            e[idx] = eps
            fd = (kl_value(x + e, z, g, p) - kl_value(x - e, z, g, p)) / (2 * eps)
            assert fd == pytest.approx(grad_val[idx], rel=1e-5, abs=1e-10)

    def test_gradient_zero_at_data_match(self):
        g = self.geom()
        p = PhysicsParams(n0=50.0, mu=1.0)
        x = np.random.default_rng(1).random(g.image_shape) * 0.1
        z = forward_project(x, g)
        assert np.max(np.abs(kl_gradient(x, z, g, p))) < 1e-10

    def test_value_minimized_at_data_match(self):
        g = self.geom()
        p = PhysicsParams(n0=50.0, mu=1.0)
        rng = np.random.default_rng(2)
        x = rng.random(g.image_shape) * 0.1
        z = forward_project(x, g)
        v0 = kl_value(x, z, g, p)
        for k in range(5):
            pert = rng.standard_normal(g.image_shape) * 0.01
            assert kl_value(np.maximum(x + pert, 0), z, g, p) >= v0 - 1e-12

    def test_convex_along_segments(self):
        g = self.geom()
        p = PhysicsParams(n0=200.0, mu=2.0)
        rng = np.random.default_rng(3)
        z = rng.random(g.sinogram_shape) * 0.05
        for _ in range(5):
            a = rng.random(g.image_shape) * 0.1
            b = rng.random(g.image_shape) * 0.1
            mid = kl_value(0.5 * (a + b), z, g, p)
            assert mid <= 0.5 * (kl_value(a, z, g, p) + kl_value(b, z, g, p)) + 1e-9

    def test_precomputed_sinogram_path(self):
        g = self.geom()
        p = PhysicsParams()
        rng = np.random.default_rng(4)
        x = rng.random(g.image_shape) * 0.01
        z = rng.random(g.sinogram_shape) * 0.01
        sx = forward_project(x, g)
        assert kl_value(x, z, g, p, sino_x=sx) == kl_value(x, z, g, p)
        np.testing.assert_array_equal(
            kl_gradient(x, z, g, p, sino_x=sx), kl_gradient(x, z, g, p)
        )

    def test_gradient_is_backprojection_of_count_mismatch(self):
        g = self.geom()
        p = PhysicsParams(n0=70.0, mu=1.5)
        rng = np.random.default_rng(6)
        x = rng.random(g.image_shape) * 0.05
        z = rng.random(g.sinogram_shape) * 0.05
        expected_counts = p.n0 * np.exp(-p.mu * forward_project(x, g))
        observed_counts = p.n0 * np.exp(-p.mu * z)
        ref = back_project(p.mu * (observed_counts - expected_counts), g)
        np.testing.assert_allclose(kl_gradient(x, z, g, p), ref, atol=1e-12)


class TestLipschitzBound:
    def test_formula(self):
        g = desk_scale_geometry(16)
        p = PhysicsParams(n0=100.0, mu=2.0)
        assert lipschitz_bound(g, p, norm_a=3.0) == pytest.approx(9.0 * 4.0 * 100.0)

    def test_default_norm(self):
        from ldct.operators import projector_norm

        g = desk_scale_geometry(16)
        p = PhysicsParams()
        expect = projector_norm(g) ** 2 * p.mu**2 * p.n0
        assert lipschitz_bound(g, p) == pytest.approx(expect)

    def test_rejects_bad_norm(self):
        g = desk_scale_geometry(16)
        with pytest.raises(ValueError):
            lipschitz_bound(g, PhysicsParams(), norm_a=0.0)

    def test_bounds_hessian_on_nonneg_images(self):
        # dense Hessian of the fidelity at random nonneg points never exceeds
        # the global bound
        g = desk_scale_geometry(4, n_angles=6)
        p = PhysicsParams(n0=30.0, mu=1.0)
        from ldct.operators import system_matrix

        a = system_matrix(g).toarray()
        bound = lipschitz_bound(g, p)
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.random(16) * 0.5
            w = p.mu**2 * p.n0 * np.exp(-p.mu * (a @ x))
            hess = a.T @ (w[:, None] * a)
            top = np.linalg.eigvalsh(hess)[-1]
            assert top <= bound + 1e-9
