"""Closed-form rate lower bounds and robustness validation.

Both bounds are 1/2 * log2 of a ratio of quadratics in the channel error
vector.  ``worst_case_validate`` samples the error ball and reports the
minimum feasibility margins of a candidate solution;
``worst_case_common_rate`` and ``worst_case_private_rate`` certify lower
bounds on the worst-case rates by an S-procedure bisection on the quadratic
ratio, which the extraction step uses to report an MMF value that holds over
the whole ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import ChannelEstimate

__all__ = [
    "BeamformingSolution",
    "MarginReport",
    "common_rate_lb",
    "private_rate_lb",
    "worst_case_validate",
    "worst_case_common_rate",
    "worst_case_private_rate",
    "sample_error_ball",
]

TWO_PI = 2.0 * math.pi


@dataclass
class BeamformingSolution:
    """Extracted beamformers plus the certified rates and run diagnostics."""

    common_beam: np.ndarray  # zero vector for SDMA
    private_beams: list  # K vectors
    common_shares: np.ndarray  # c_k, zeros for SDMA
    mmf_value: float
    per_user_private: np.ndarray  # worst-case private-rate bounds
    common_bound: float  # worst-case common-rate bound (min over users)
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MarginReport:
    """Minimum sampled feasibility margins of a solution over the CSIT ball."""

    private_margin: float  # min over users/samples of c_k + R_kp - t
    common_margin: float  # min over users/samples of R_kc - sum(c)
    samples: int


def _beam_gains(h: np.ndarray, beams) -> np.ndarray:
    return np.array([float(h @ p) for p in beams])


def common_rate_lb(h_hat, delta_h, beams, dists, noise, clamp: bool = True) -> float:
    """Lower bound on the common-stream rate at channel h_hat + delta_h.

    ``beams`` lists p_0 first then the K private beams; ``dists`` matches.
    """
    h = np.asarray(h_hat, dtype=float) + np.asarray(delta_h, dtype=float)
    g = _beam_gains(h, beams)
    taus = np.array([d.tau for d in dists])
    epss = np.array([d.variance for d in dists])
    num = TWO_PI * noise + float(np.sum(g**2 * taus))
    den = TWO_PI * noise + TWO_PI * float(np.sum(g[1:] ** 2 * epss[1:]))
    rate = 0.5 * math.log2(num / den)
    return max(0.0, rate) if clamp else rate


def private_rate_lb(h_hat, delta_h, user_index, beams, dists, noise, clamp: bool = True) -> float:
    """Lower bound on user ``user_index``'s private rate after imperfect SIC.

    The residual common-stream term depends on delta_h alone.
    """
    h_hat = np.asarray(h_hat, dtype=float)
    delta_h = np.asarray(delta_h, dtype=float)
    h = h_hat + delta_h
    g = _beam_gains(h, beams)
    g0_res = float(delta_h @ beams[0])
    taus = np.array([d.tau for d in dists])
    epss = np.array([d.variance for d in dists])
    k = user_index + 1  # position in the stream list
    num = TWO_PI * noise + g0_res**2 * taus[0] + float(np.sum(g[1:] ** 2 * taus[1:]))
    interf = float(np.sum(g[1:] ** 2 * epss[1:])) - g[k] ** 2 * epss[k]
    den = TWO_PI * (noise + g0_res**2 * epss[0] + interf)
    rate = 0.5 * math.log2(num / den)
    return max(0.0, rate) if clamp else rate


def sample_error_ball(v: float, dim: int, count: int, rng) -> np.ndarray:
    """Uniform samples in the Euclidean ball of squared radius v."""
    if v == 0.0:
        return np.zeros((count, dim))
    direc = rng.standard_normal((count, dim))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    radii = math.sqrt(v) * rng.uniform(size=(count, 1)) ** (1.0 / dim)
    return direc * radii


def worst_case_validate(
    estimates,
    solution: BeamformingSolution,
    dists,
    noise: float,
    samples: int = 1000,
    seed: int = 0,
) -> MarginReport:
    """Monte-Carlo check of a solution over every user's CSIT error ball.

    Draws are deterministic given the seed; per-user streams use derived
    seeds so the result does not depend on evaluation order.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    beams = [solution.common_beam] + list(solution.private_beams)
    c_sum = float(np.sum(solution.common_shares))
    private_margin = math.inf
    common_margin = math.inf
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(estimates))
    for k, est in enumerate(estimates):
        rng = np.random.default_rng(children[k])
        n_draw = 1 if est.v == 0.0 else samples
        errors = sample_error_ball(est.v, est.h_hat.size, n_draw, rng)
        for dh in errors:
            r_c = common_rate_lb(est.h_hat, dh, beams, dists, noise)
            r_p = private_rate_lb(est.h_hat, dh, k, beams, dists, noise)
            common_margin = min(common_margin, r_c - c_sum)
            private_margin = min(
                private_margin,
                float(solution.common_shares[k]) + r_p - solution.mmf_value,
            )
    return MarginReport(
        private_margin=private_margin, common_margin=common_margin, samples=samples
    )


def _min_quadratic_ratio(A_num, b_num, c_num, A_den, b_den, c_den, v, tol=1e-11):
    """Certified lower bound on min over ||e||^2 <= v of a ratio of quadratics.

    Both quadratics are strictly positive on the ball.  Bisection on the
    level r: (num - r*den >= 0 on the ball) holds iff some multiplier
    lam >= 0 makes the bordered matrix PSD (S-procedure, exact for one ball
    constraint); the PSD check maximizes the concave minimum eigenvalue over
    lam by golden-section search.
    """
    if v == 0.0:
        return c_num / c_den

    dim = A_num.shape[0]

    def feasible(r) -> bool:
        A = A_num - r * A_den
        b = b_num - r * b_den
        c = c_num - r * c_den

        def neg_min_eig(lam):
            m = np.empty((dim + 1, dim + 1))
            m[:dim, :dim] = A + lam * np.eye(dim)
            m[:dim, dim] = b
            m[dim, :dim] = b
            m[dim, dim] = c - lam * v
            return -float(np.linalg.eigvalsh(m)[0])

        scale = max(abs(c), float(np.abs(A).max()) * v, 1e-300)
        lam_hi = max(2.0 * float(np.abs(A).max()), 1.0) + 2.0 * abs(c) / v
        lo, hi = 0.0, lam_hi
        # golden-section maximization of the (concave) minimum eigenvalue
        phi = (math.sqrt(5.0) - 1.0) / 2.0
        x1 = hi - phi * (hi - lo)
        x2 = lo + phi * (hi - lo)
        f1, f2 = neg_min_eig(x1), neg_min_eig(x2)
        best = min(neg_min_eig(0.0), f1, f2)
        for _ in range(90):
            if f1 < f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - phi * (hi - lo)
                f1 = neg_min_eig(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + phi * (hi - lo)
                f2 = neg_min_eig(x2)
            best = min(best, f1, f2)
        return best <= 1e-11 * scale

    r_hi = c_num / c_den  # value at e = 0 upper-bounds the minimum
    r_lo = 0.0
    if feasible(r_hi):
        return r_hi
    for _ in range(80):
        mid = 0.5 * (r_lo + r_hi)
        if feasible(mid):
            r_lo = mid
        else:
            r_hi = mid
        if r_hi - r_lo <= tol * max(1.0, r_lo):
            break
    return r_lo


def _stack_coeffs(h_hat, beams, weights):
    """Quadratic-in-error coefficients of sum_i w_i ((h_hat+e)^T p_i)^2."""
    n = h_hat.size
    A = np.zeros((n, n))
    b = np.zeros(n)
    c = 0.0
    for w, p in zip(weights, beams):
        if w == 0.0:
            continue
        A += w * np.outer(p, p)
        g = float(h_hat @ p)
        b += w * g * p
        c += w * g * g
    return A, b, c


def worst_case_common_rate(estimate: ChannelEstimate, beams, dists, noise) -> float:
    """Certified lower bound on the common-stream rate over the error ball."""
    h = estimate.h_hat
    taus = [d.tau for d in dists]
    epss = [d.variance for d in dists]
    An, bn, cn = _stack_coeffs(h, beams, taus)
    cn += TWO_PI * noise
    Ad, bd, cd = _stack_coeffs(h, beams[1:], [TWO_PI * e for e in epss[1:]])
    cd += TWO_PI * noise
    r = _min_quadratic_ratio(An, bn, cn, Ad, bd, cd, estimate.v)
    return max(0.0, 0.5 * math.log2(max(r, 1e-300)))


def worst_case_private_rate(
    estimate: ChannelEstimate, user_index: int, beams, dists, noise
) -> float:
    """Certified lower bound on one user's private rate over the error ball."""
    h = estimate.h_hat
    taus = [d.tau for d in dists]
    epss = [d.variance for d in dists]
    k = user_index + 1
    # numerator: residual common term tau_0 (e^T p_0)^2 + signal terms
    An, bn, cn = _stack_coeffs(h, beams[1:], taus[1:])
    An += taus[0] * np.outer(beams[0], beams[0])
    cn += TWO_PI * noise
    interf_w = [TWO_PI * e for e in epss[1:]]
    interf_w[user_index] = 0.0
    Ad, bd, cd = _stack_coeffs(h, beams[1:], interf_w)
    Ad += TWO_PI * epss[0] * np.outer(beams[0], beams[0])
    cd += TWO_PI * noise
    r = _min_quadratic_ratio(An, bn, cn, Ad, bd, cd, estimate.v)
    return max(0.0, 0.5 * math.log2(max(r, 1e-300)))
