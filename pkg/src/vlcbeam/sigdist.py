"""Maximum-entropy input distribution for amplitude- and variance-limited streams.

Each stream takes values in [-A, A] with zero mean and variance eps, and the
entropy-maximizing density has the form f(s) = exp(-1 - alpha - beta*s -
gamma*s^2) on the support.  For the symmetric zero-mean case beta = 0, gamma
is found by a bracketed root search matching the variance, and alpha follows
from normalization.  The per-stream constant tau = exp(1 + 2*(alpha +
gamma*eps)) is the entropy-power quantity entering the rate lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

__all__ = ["SignalDistribution", "solve_distribution", "density", "entropy_bits"]

LOG2_E = math.log2(math.e)


@dataclass(frozen=True)
class SignalDistribution:
    """Solved max-entropy density parameters for one stream."""

    amplitude: float
    variance: float
    alpha: float
    beta: float
    gamma: float
    tau: float


def _log_partition(gamma: float, amplitude: float) -> float:
    """log of Z(gamma) = integral of exp(-gamma s^2) over [-A, A].

    For gamma < 0 the integrand peaks at the endpoints; the exponent is
    shifted by its maximum so the quadrature never overflows.
    """
    a = amplitude
    shift = max(0.0, -gamma * a * a)
    val, _ = integrate.quad(
        lambda s: math.exp(-gamma * s * s - shift), -a, a, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return shift + math.log(val)


def _variance_of(gamma: float, amplitude: float) -> float:
    """Variance of the density proportional to exp(-gamma s^2) on [-A, A]."""
    a = amplitude
    shift = max(0.0, -gamma * a * a)
    z, _ = integrate.quad(
        lambda s: math.exp(-gamma * s * s - shift), -a, a, epsabs=0.0, epsrel=1e-13, limit=200
    )
    m2, _ = integrate.quad(
        lambda s: s * s * math.exp(-gamma * s * s - shift),
        -a,
        a,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return m2 / z


def _erf_partition(gamma: float, amplitude: float) -> float:
    """Closed form Z(gamma) = sqrt(pi/gamma) * erf(sqrt(gamma) A), gamma > 0."""
    if gamma <= 0.0:
        raise ValueError("closed form requires gamma > 0")
    r = math.sqrt(gamma)
    return math.sqrt(math.pi) / r * special.erf(r * amplitude)


def solve_distribution(amplitude: float, variance: float) -> SignalDistribution:
    """Solve the (alpha, beta=0, gamma) system for given amplitude and variance.

    The variance of the truncated density is strictly decreasing in gamma, so
    a bracketed root search is globally safe; gamma = 0 recovers the uniform
    density when variance = A^2 / 3.
    """
    a = float(amplitude)
    eps = float(variance)
    if a <= 0.0:
        raise ValueError("amplitude must be positive")
    if not 0.0 < eps < a * a:
        raise ValueError("variance must lie in (0, amplitude^2)")

    uniform_var = a * a / 3.0
    if abs(eps - uniform_var) <= 1e-14 * uniform_var:
        gamma = 0.0
    else:
        # grow the bracket geometrically until it straddles the target
        gamma_max = 1.0 / (a * a)
        lo, hi = -gamma_max, gamma_max
        for _ in range(200):
            if eps < uniform_var and _variance_of(hi, a) < eps:
                lo = 0.0
                break
            if eps > uniform_var and _variance_of(lo, a) > eps:
                hi = 0.0
                break
            gamma_max *= 2.0
            lo, hi = -gamma_max, gamma_max
        else:
            raise RuntimeError("failed to bracket gamma")
        if eps < uniform_var:
            lo, hi = 0.0, gamma_max
        else:
            lo, hi = -gamma_max, 0.0
        gamma = optimize.brentq(
            lambda g: _variance_of(g, a) - eps, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200
        )
        if abs(_variance_of(gamma, a) - eps) > 1e-10:
            raise RuntimeError("variance residual did not converge")

    log_z = _log_partition(gamma, a)
    alpha = log_z - 1.0
    tau = math.exp(1.0 + 2.0 * (alpha + gamma * eps))
    return SignalDistribution(
        amplitude=a, variance=eps, alpha=alpha, beta=0.0, gamma=gamma, tau=tau
    )


def density(dist: SignalDistribution, s) -> np.ndarray | float:
    """Evaluate the density exp(-1 - alpha - beta s - gamma s^2) on [-A, A]."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) <= dist.amplitude
    expo = -1.0 - dist.alpha - dist.beta * s - dist.gamma * s * s
    out = np.where(inside, np.exp(np.where(inside, expo, 0.0)), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def entropy_bits(dist: SignalDistribution) -> float:
    """Differential entropy in bits; closed form for the beta = 0 case."""
    if dist.beta != 0.0:
        raise ValueError("closed-form entropy requires beta = 0")
    return (1.0 + dist.alpha + dist.gamma * dist.variance) * LOG2_E
