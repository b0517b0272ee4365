import math

import numpy as np
import pytest

from vlcbeam.rates import (
    BeamformingSolution,
    common_rate_lb,
    private_rate_lb,
    sample_error_ball,
    worst_case_common_rate,
    worst_case_private_rate,
    worst_case_validate,
)
from vlcbeam.scene import ChannelEstimate
from vlcbeam.sigdist import solve_distribution

TWO_PI = 2.0 * math.pi


def make_dists(count, amplitude=2.0, variance=1.0):
    d = solve_distribution(amplitude, variance)
    return [d] * count


def toy_setup():
    """Two LEDs, one user, fixed beams sized so rates are O(1)."""
    h_hat = np.array([3.0, 1.0])
    beams = [np.array([0.5, 0.5]), np.array([1.0, -0.2])]
    dists = make_dists(2)
    noise = 0.5
    return h_hat, beams, dists, noise


class TestPointwiseBounds:
    def test_common_rate_hand_value(self):
        h_hat, beams, dists, noise = toy_setup()
        tau = dists[0].tau
        eps = 1.0
        g0 = float(h_hat @ beams[0])
        g1 = float(h_hat @ beams[1])
        num = TWO_PI * noise + tau * (g0**2 + g1**2)
        den = TWO_PI * noise + TWO_PI * eps * g1**2
        expect = 0.5 * math.log2(num / den)
        got = common_rate_lb(h_hat, np.zeros(2), beams, dists, noise)
        assert got == pytest.approx(expect, rel=1e-13)

    def test_private_rate_hand_value_single_user(self):
        # one user: no cross interference, residual common term only via error
        h_hat, beams, dists, noise = toy_setup()
        tau = dists[0].tau
        dh = np.array([0.05, -0.02])
        g0_res = float(dh @ beams[0])
        g1 = float((h_hat + dh) @ beams[1])
        num = TWO_PI * noise + tau * g0_res**2 + tau * g1**2
        den = TWO_PI * (noise + 1.0 * g0_res**2)
        expect = 0.5 * math.log2(num / den)
        got = private_rate_lb(h_hat, dh, 0, beams, dists, noise)
        assert got == pytest.approx(expect, rel=1e-13)

    def test_private_rate_excludes_own_stream_interference(self):
        # two users; user 0's denominator holds only user 1's stream
        h_hat = np.array([3.0, 1.0])
        beams = [np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        dists = make_dists(3)
        noise = 0.5
        tau = dists[0].tau
        g1 = float(h_hat @ beams[1])
        g2 = float(h_hat @ beams[2])
        num = TWO_PI * noise + tau * (g1**2 + g2**2)
        den = TWO_PI * (noise + 1.0 * g2**2)
        got = private_rate_lb(h_hat, np.zeros(2), 0, beams, dists, noise)
        assert got == pytest.approx(0.5 * math.log2(num / den), rel=1e-13)

    def test_clamped_at_zero(self):
        # tiny beams give a negative unclamped bound for the private stream
        h_hat = np.array([1.0, 1.0])
        beams = [np.array([2.0, 2.0]), np.array([1e-6, 0.0]), np.array([3.0, 1.0])]
        dists = make_dists(3)
        raw = private_rate_lb(h_hat, np.zeros(2), 0, beams, dists, 1e-3, clamp=False)
        assert raw < 0.0
        assert private_rate_lb(h_hat, np.zeros(2), 0, beams, dists, 1e-3) == 0.0

    def test_rate_decreases_with_noise(self):
        h_hat, beams, dists, _ = toy_setup()
        vals = [
            common_rate_lb(h_hat, np.zeros(2), beams, dists, s) for s in (0.1, 0.5, 2.0, 10.0)
        ]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestErrorBallSampling:
    def test_radius_respected(self):
        rng = np.random.default_rng(0)
        pts = sample_error_ball(0.09, 3, 5000, rng)
        norms = np.linalg.norm(pts, axis=1)
        assert float(norms.max()) <= 0.3 + 1e-12
        # uniform in the ball: P(r <= R/2) = 1/8 in 3 dimensions
        assert np.mean(norms <= 0.15) == pytest.approx(0.125, abs=0.02)

    def test_zero_ball(self):
        pts = sample_error_ball(0.0, 4, 10, np.random.default_rng(0))
        assert not pts.any()
        assert pts.shape == (10, 4)

    def test_deterministic(self):
        a = sample_error_ball(1.0, 2, 50, np.random.default_rng(42))
        b = sample_error_ball(1.0, 2, 50, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)


class TestCertifiedWorstCase:
    def setup_method(self):
        self.h_hat = np.array([3.0, 1.0])
        self.v = 0.04
        self.est = ChannelEstimate(
            h_hat=self.h_hat,
            v=self.v,
            h_upper=self.h_hat + 0.1,
            h_lower=self.h_hat - 0.1,
        )
        self.beams = [np.array([0.4, 0.4]), np.array([1.0, -0.2])]
        self.dists = make_dists(2)
        self.noise = 0.5

    def grid_minimum(self, fn, n=400):
        """Dense boundary+interior grid oracle for the worst-case rate."""
        best = math.inf
        for t in np.linspace(0.0, 2.0 * np.pi, n, endpoint=False):
            direc = np.array([math.cos(t), math.sin(t)])
            for r in (1.0, 0.5, 0.999):
                dh = math.sqrt(self.v) * r * direc
                best = min(best, fn(dh))
        return min(best, fn(np.zeros(2)))

    def test_common_bound_below_all_samples(self):
        cert = worst_case_common_rate(self.est, self.beams, self.dists, self.noise)
        grid = self.grid_minimum(
            lambda dh: common_rate_lb(self.h_hat, dh, self.beams, self.dists, self.noise)
        )
        assert cert <= grid + 1e-9
        assert cert >= grid - 5e-4  # certificate is tight, not just valid

    def test_private_bound_below_all_samples(self):
        cert = worst_case_private_rate(self.est, 0, self.beams, self.dists, self.noise)
        grid = self.grid_minimum(
            lambda dh: private_rate_lb(self.h_hat, dh, 0, self.beams, self.dists, self.noise)
        )
        assert cert <= grid + 1e-9
        assert cert >= grid - 5e-4

    def test_perfect_csit_recovers_pointwise(self):
        est0 = ChannelEstimate(self.h_hat, 0.0, self.h_hat.copy(), self.h_hat.copy())
        cert = worst_case_common_rate(est0, self.beams, self.dists, self.noise)
        point = common_rate_lb(self.h_hat, np.zeros(2), self.beams, self.dists, self.noise)
        assert cert == pytest.approx(point, rel=1e-10)

    def test_bound_monotone_in_uncertainty(self):
        vals = []
        for v in (0.0, 0.01, 0.04, 0.16):
            est = ChannelEstimate(self.h_hat, v, self.h_hat + 1.0, self.h_hat - 1.0)
            vals.append(worst_case_common_rate(est, self.beams, self.dists, self.noise))
        assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))


class TestValidate:
    def test_margins_nonnegative_for_certified_solution(self):
        h_hat = np.array([3.0, 1.0])
        est = ChannelEstimate(h_hat, 0.04, h_hat + 0.1, h_hat - 0.1)
        beams = [np.array([0.4, 0.4]), np.array([1.0, -0.2])]
        dists = make_dists(2)
        noise = 0.5
        r_c = worst_case_common_rate(est, beams, dists, noise)
        r_p = worst_case_private_rate(est, 0, beams, dists, noise)
        sol = BeamformingSolution(
            common_beam=beams[0],
            private_beams=[beams[1]],
            common_shares=np.array([r_c]),
            mmf_value=r_c + r_p,
            per_user_private=np.array([r_p]),
            common_bound=r_c,
        )
        report = worst_case_validate([est], sol, dists, noise, samples=1000, seed=5)
        assert report.private_margin >= -1e-9
        assert report.common_margin >= -1e-9
        assert report.samples == 1000

    def test_overclaimed_rate_flagged(self):
        h_hat = np.array([3.0, 1.0])
        est = ChannelEstimate(h_hat, 0.04, h_hat + 0.1, h_hat - 0.1)
        beams = [np.array([0.4, 0.4]), np.array([1.0, -0.2])]
        dists = make_dists(2)
        noise = 0.5
        sol = BeamformingSolution(
            common_beam=beams[0],
            private_beams=[beams[1]],
            common_shares=np.array([10.0]),
            mmf_value=20.0,
            per_user_private=np.array([10.0]),
            common_bound=10.0,
        )
        report = worst_case_validate([est], sol, dists, noise, samples=200, seed=1)
        assert report.private_margin < 0.0
        assert report.common_margin < 0.0

    def test_seed_reproducible(self):
        h_hat = np.array([3.0, 1.0])
        est = ChannelEstimate(h_hat, 0.04, h_hat + 0.1, h_hat - 0.1)
        beams = [np.array([0.4, 0.4]), np.array([1.0, -0.2])]
        dists = make_dists(2)
        sol = BeamformingSolution(
            common_beam=beams[0],
            private_beams=[beams[1]],
            common_shares=np.array([0.1]),
            mmf_value=0.5,
            per_user_private=np.array([0.4]),
            common_bound=0.1,
        )
        a = worst_case_validate([est], sol, dists, 0.5, samples=300, seed=9)
        b = worst_case_validate([est], sol, dists, 0.5, samples=300, seed=9)
        assert a == b
