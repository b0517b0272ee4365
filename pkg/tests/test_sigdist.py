import math

import numpy as np
import pytest
from scipy import integrate

from vlcbeam.sigdist import (
    SignalDistribution,
    _erf_partition,
    _log_partition,
    density,
    entropy_bits,
    solve_distribution,
)


def quad_moment(dist, power):
    """Independent quadrature oracle for the k-th moment of the density."""
    val, _ = integrate.quad(
        lambda s: s**power * density(dist, s),
        -dist.amplitude,
        dist.amplitude,
        epsabs=1e-14,
        epsrel=1e-13,
        limit=200,
    )
    return val


class TestUniformCase:
    def test_gamma_zero(self):
        d = solve_distribution(2.0, 4.0 / 3.0)
        assert d.gamma == 0.0
        assert math.exp(1.0 + d.alpha) == pytest.approx(4.0, rel=1e-12)

    def test_density_is_quarter(self):
        d = solve_distribution(2.0, 4.0 / 3.0)
        assert density(d, 0.0) == pytest.approx(0.25, rel=1e-12)

    def test_tau_closed_form(self):
        d = solve_distribution(2.0, 4.0 / 3.0)
        assert d.tau == pytest.approx(16.0 / math.e, abs=1e-10)

    def test_entropy_two_bits(self):
        d = solve_distribution(2.0, 4.0 / 3.0)
        assert entropy_bits(d) == pytest.approx(2.0, abs=1e-12)


class TestSolver:
    @pytest.mark.parametrize("eps", [0.3, 1.0, 1.2, 2.5, 3.5])
    def test_moments_by_quadrature(self, eps):
        d = solve_distribution(2.0, eps)
        assert quad_moment(d, 0) == pytest.approx(1.0, abs=1e-10)
        assert quad_moment(d, 1) == pytest.approx(0.0, abs=1e-10)
        assert quad_moment(d, 2) == pytest.approx(eps, abs=1e-8)

    def test_gamma_sign(self):
        assert solve_distribution(2.0, 1.0).gamma > 0.0
        assert solve_distribution(2.0, 4.0 / 3.0).gamma == 0.0
        assert solve_distribution(2.0, 3.0).gamma < 0.0

    def test_variance_residual_tight(self):
        d = solve_distribution(2.0, 1.0)
        assert abs(quad_moment(d, 2) - 1.0) <= 1e-10

    def test_frozen_gamma_eps_one(self):
        # value frozen from the bracketed root search against the quadrature oracle
        d = solve_distribution(2.0, 1.0)
        assert d.gamma == pytest.approx(0.2633499650627895, rel=1e-10)
        assert d.tau == pytest.approx(5.4115757722725535, rel=1e-10)

    def test_erf_crosscheck_positive_gamma(self):
        d = solve_distribution(2.0, 1.0)
        assert _erf_partition(d.gamma, 2.0) == pytest.approx(
            math.exp(_log_partition(d.gamma, 2.0)), rel=1e-12
        )

    @pytest.mark.parametrize("eps", [0.0, 4.0, -1.0, 5.0])
    def test_variance_domain(self, eps):
        with pytest.raises(ValueError):
            solve_distribution(2.0, eps)


class TestDensity:
    def test_outside_support_zero(self):
        d = solve_distribution(2.0, 1.0)
        assert density(d, 2.1) == 0.0
        assert density(d, -2.1) == 0.0

    def test_symmetry(self):
        d = solve_distribution(2.0, 2.5)
        s = np.linspace(0.0, 2.0, 41)
        np.testing.assert_allclose(density(d, s), density(d, -s), rtol=1e-13)

    def test_edge_heavy_when_variance_large(self):
        d = solve_distribution(2.0, 3.0)
        assert density(d, 1.99) > density(d, 0.0)


class TestEntropyAndTau:
    def test_tau_identity(self):
        for eps in (0.5, 1.0, 2.0, 3.0):
            d = solve_distribution(2.0, eps)
            h = entropy_bits(d)
            assert 2.0 ** (2.0 * h) / math.e == pytest.approx(d.tau, rel=1e-8)

    def test_gaussian_entropy_bound(self):
        for eps in (0.2, 0.7, 1.0, 1.33, 2.0, 3.2):
            d = solve_distribution(2.0, eps)
            assert d.tau <= 2.0 * math.pi * eps + 1e-12

    def test_monte_carlo_entropy(self):
        d = solve_distribution(2.0, 1.0)
        rng = np.random.default_rng(3)
        # rejection-sample the density, then resubstitution estimate of H
        peak = float(density(d, 0.0))
        samples = []
        while len(samples) < 200_000:
            s = rng.uniform(-2.0, 2.0, size=100_000)
            u = rng.uniform(0.0, peak, size=100_000)
            samples.extend(s[u < density(d, s)].tolist())
        s = np.asarray(samples[:200_000])
        h_mc = -np.mean(np.log2(density(d, s)))
        assert h_mc == pytest.approx(entropy_bits(d), abs=1e-2)

    def test_tau_peaks_at_uniform_variance(self):
        # tau = 2^(2H)/e and the uniform density (eps = A^2/3) maximizes the
        # entropy over the supported variances, so tau rises up to A^2/3 and
        # falls beyond it
        rising = [solve_distribution(2.0, eps).tau for eps in np.linspace(0.2, 4.0 / 3.0, 9)]
        falling = [solve_distribution(2.0, eps).tau for eps in np.linspace(4.0 / 3.0, 3.8, 9)]
        assert all(a < b for a, b in zip(rising, rising[1:]))
        assert all(a > b for a, b in zip(falling, falling[1:]))

    def test_immutable(self):
        d = solve_distribution(2.0, 1.0)
        with pytest.raises(AttributeError):
            d.tau = 1.0  # type: ignore[misc]
