"""Dense path-following barrier solver for the assembled subproblems.

One solver covers the three constraint kinds produced by :mod:`.lifting`:
log-det barriers for the PSD blocks, -log barriers for affine slack rows, and
-log(p - exp(x)) for the smooth exponential rows.  Problems here are tiny
(a few hundred variables), so everything is dense and deterministic: Newton
systems are solved by Cholesky with a fixed Levenberg fallback, and no
randomized pivoting is used anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .lifting import ConvexSubproblem, aggregate_matrices, svec

__all__ = [
    "SolverConfig",
    "SubproblemSolution",
    "solve",
    "strictly_feasible_start",
    "kkt_residuals",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SolverConfig:
    barrier_increase: float = 10.0
    initial_mu: float = 1.0
    newton_tol: float = 1e-9
    duality_gap_tol: float = 1e-7
    max_newton: int = 100
    max_path_steps: int = 60
    slope_fraction: float = 0.01
    shrink: float = 0.5
    verbose: bool = False

    def __post_init__(self):
        if min(self.newton_tol, self.duality_gap_tol, self.initial_mu) <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")


@dataclass
class SubproblemSolution:
    z: np.ndarray
    objective: float
    gap_estimate: float
    path_steps: int
    newton_steps: int
    min_lin_slack: float
    min_psd_eig: float
    converged: bool
    message: str = ""
    trace: list = field(default_factory=list)


class _Infeasible(Exception):
    pass


def _barrier_state(prob: ConvexSubproblem, z: np.ndarray):
    """Barrier value plus cached factorizations; raises if z leaves the interior."""
    value = 0.0
    chols = []
    for blk in prob.psd_blocks:
        S = blk.evaluate(z)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise _Infeasible(blk.label or "psd block")
        value -= 2.0 * float(np.sum(np.log(np.diag(L))))
        chols.append(L)
    slacks = prob.lin_const + prob.lin_coeffs @ z
    if np.any(slacks <= 0.0):
        raise _Infeasible("linear row")
    value -= float(np.sum(np.log(slacks)))
    exp_g = np.empty(len(prob.exp_rows))
    for r, (xi, pi) in enumerate(prob.exp_rows):
        g = z[pi] - math.exp(z[xi])
        if g <= 0.0:
            raise _Infeasible("exponential row")
        exp_g[r] = g
        value -= math.log(g)
    return value, chols, slacks, exp_g


def _barrier_derivatives(prob: ConvexSubproblem, z, chols, slacks, exp_g):
    """Gradient and Hessian of the full barrier at an interior point."""
    n = prob.num_vars
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for blk, L in zip(prob.psd_blocks, chols):
        F = blk.coeffs  # (m, d, d)
        m, d, _ = F.shape
        # G_a = L^-1 F_a L^-T  (symmetric); vectorized triangular solves
        B = F.transpose(1, 0, 2).reshape(d, m * d)
        Y = sla.solve_triangular(L, B, lower=True)
        Y3 = Y.reshape(d, m, d).transpose(1, 0, 2)  # L^-1 F_a
        C = Y3.transpose(0, 2, 1).transpose(1, 0, 2).reshape(d, m * d)
        G = sla.solve_triangular(L, C, lower=True)
        G3 = G.reshape(d, m, d).transpose(1, 0, 2)  # (L^-1 F_a L^-T)^T = G_a
        idx = blk.var_idx
        grad_blk = -np.einsum("aii->a", G3)
        np.add.at(grad, idx, grad_blk)
        Gflat = G3.reshape(m, d * d)
        hess[np.ix_(idx, idx)] += Gflat @ Gflat.T
    inv_s = 1.0 / slacks
    grad -= prob.lin_coeffs.T @ inv_s
    hess += (prob.lin_coeffs.T * inv_s**2) @ prob.lin_coeffs
    for r, (xi, pi) in enumerate(prob.exp_rows):
        g = exp_g[r]
        ex = math.exp(z[xi])
        grad[xi] += ex / g
        grad[pi] += -1.0 / g
        hess[xi, xi] += ex / g + (ex / g) ** 2
        hess[xi, pi] += -ex / g**2
        hess[pi, xi] += -ex / g**2
        hess[pi, pi] += 1.0 / g**2
    return grad, hess


def _total_barrier_parameter(prob: ConvexSubproblem) -> int:
    return (
        sum(blk.order for blk in prob.psd_blocks)
        + prob.lin_const.size
        + len(prob.exp_rows)
    )


def solve(
    prob: ConvexSubproblem,
    config: SolverConfig = SolverConfig(),
    z0: np.ndarray | None = None,
) -> SubproblemSolution:
    """Maximize the subproblem objective from a strictly feasible start."""
    z = strictly_feasible_start(prob) if z0 is None else np.array(z0, dtype=float)
    try:
        value, chols, slacks, exp_g = _barrier_state(prob, z)
    except _Infeasible as exc:
        raise ValueError(f"starting point is not strictly feasible ({exc})")

    m_total = _total_barrier_parameter(prob)
    mu = config.initial_mu
    c_obj = prob.objective
    newton_total = 0
    path_steps = 0
    trace = []
    converged = False
    message = "ok"

    while path_steps < config.max_path_steps:
        path_steps += 1
        # centering: minimize f(z) = -mu c.z + barrier(z)
        for _ in range(config.max_newton):
            newton_total += 1
            value, chols, slacks, exp_g = _barrier_state(prob, z)
            grad_b, hess = _barrier_derivatives(prob, z, chols, slacks, exp_g)
            grad = -mu * c_obj + grad_b
            diag_scale = 1.0 + float(np.abs(np.diag(hess)).max())
            reg = 0.0
            while True:
                try:
                    cho = sla.cho_factor(
                        hess + reg * np.eye(hess.shape[0]), lower=True, check_finite=False
                    )
                    break
                except np.linalg.LinAlgError:
                    reg = 1e-12 * diag_scale if reg == 0.0 else reg * 100.0
                    if reg > 1e-2 * diag_scale:
                        raise RuntimeError("Newton system factorization failed")
            step = -sla.cho_solve(cho, grad, check_finite=False)
            decrement = float(-grad @ step)
            if decrement <= 0.0:
                break
            f0 = -mu * float(c_obj @ z) + value
            alpha = 1.0
            accepted = False
            for _ in range(60):
                trial = z + alpha * step
                try:
                    v_t, *_ = _barrier_state(prob, trial)
                except _Infeasible:
                    alpha *= config.shrink
                    continue
                f_t = -mu * float(c_obj @ trial) + v_t
                if f_t <= f0 - config.slope_fraction * alpha * decrement:
                    z = trial
                    accepted = True
                    break
                alpha *= config.shrink
            if config.verbose:
                print(
                    f"  mu={mu:.3e} obj={float(c_obj @ z):+.9f} "
                    f"alpha={alpha:.3e} decrement={decrement:.3e}"
                )
            if not accepted:
                break
            if decrement * 0.5 <= config.newton_tol:
                break
        gap = m_total / mu
        trace.append((mu, float(c_obj @ z), gap, newton_total))
        if gap <= config.duality_gap_tol:
            converged = True
            break
        mu *= config.barrier_increase
    else:
        message = "path step limit reached"

    value, chols, slacks, exp_g = _barrier_state(prob, z)
    min_eig = min(
        (float(np.linalg.eigvalsh(blk.evaluate(z))[0]) for blk in prob.psd_blocks),
        default=math.inf,
    )
    return SubproblemSolution(
        z=z,
        objective=float(c_obj @ z),
        gap_estimate=m_total / mu,
        path_steps=path_steps,
        newton_steps=newton_total,
        min_lin_slack=float(slacks.min()) if slacks.size else math.inf,
        min_psd_eig=min_eig,
        converged=converged,
        message=message,
        trace=trace,
    )


def kkt_residuals(prob: ConvexSubproblem, solution: SubproblemSolution) -> dict:
    """Stationarity / primal feasibility / complementarity of a solve result.

    The barrier multipliers at parameter mu are the implied duals; at a
    central point the scaled stationarity residual vanishes and the
    complementarity equals (total barrier parameter)/mu.
    """
    z = solution.z
    try:
        value, chols, slacks, exp_g = _barrier_state(prob, z)
        primal = 0.0
    except _Infeasible:
        slacks = prob.lin_const + prob.lin_coeffs @ z
        min_eig = min(
            (float(np.linalg.eigvalsh(blk.evaluate(z))[0]) for blk in prob.psd_blocks),
            default=math.inf,
        )
        exp_slack = min(
            (z[pi] - math.exp(z[xi]) for xi, pi in prob.exp_rows), default=0.0
        )
        lin_min = float(slacks.min()) if slacks.size else math.inf
        primal = -min(lin_min, min_eig, exp_slack)
        return {"stationarity": math.inf, "primal": primal, "complementarity": math.inf}

    m_total = _total_barrier_parameter(prob)
    mu = m_total / max(solution.gap_estimate, 1e-300)
    grad_b, hess = _barrier_derivatives(prob, z, chols, slacks, exp_g)
    grad = -mu * prob.objective + grad_b
    # affine-invariant stationarity: Newton decrement of the barrier
    # subproblem at the final mu, normalized back to the objective scale
    reg = 0.0
    while True:
        try:
            cho = sla.cho_factor(
                hess + reg * np.eye(hess.shape[0]), lower=True, check_finite=False
            )
            break
        except np.linalg.LinAlgError:
            reg = 1e-12 if reg == 0.0 else reg * 100.0
    decrement = float(grad @ sla.cho_solve(cho, grad, check_finite=False))
    stationarity = math.sqrt(max(decrement, 0.0)) / mu
    return {
        "stationarity": stationarity,
        "primal": primal,
        "complementarity": m_total / mu,
    }


# ---------------------------------------------------------------------------
# Strictly feasible starting points


def _certified_cap(M_tl, m_off, corner0, v, lam_min_shift=0.0):
    """Largest certified corner budget over the multiplier.

    For a certificate [[u I + M_tl, m_off], [m_off^T, corner0 - u v - p]],
    the largest feasible p at multiplier u is
    cap(u) = corner0 - u v - m_off^T (u I + M_tl)^{-1} m_off; the returned
    value maximizes cap over u > lam_min_shift (which is -lambda_min(M_tl)
    when M_tl is indefinite-shifted, e.g. the floor certificates).
    """

    def neg_cap(u):
        A = M_tl + u * np.eye(M_tl.shape[0])
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return math.inf
        y = sla.solve_triangular(L, m_off, lower=True)
        return -(corner0 - u * v - float(y @ y))

    lo = lam_min_shift + 1e-12 + 1e-9 * abs(lam_min_shift)
    hi = max(1.0, 10.0 * float(np.abs(M_tl).max()) + lo)
    # expand until the maximizer is interior
    for _ in range(60):
        if neg_cap(hi) > neg_cap(0.5 * hi) or v == 0.0 and hi > 1e12:
            break
        hi *= 4.0
    res = optimize.minimize_scalar(neg_cap, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    u_best = float(res.x)
    return -neg_cap(u_best), u_best


def _chain_values(cap, floor, y_prev):
    """Slack placement between a certified floor and cap for one rate term.

    The tangent row requires y >= y_prev + q/e^{y_prev} - 1, and the x >= y
    chain requires e^y < p <= cap, so the corridor closes when the expansion
    point is too far below the certified floor.  Returns (x, y, p, q) or
    None when no strict placement exists.
    """
    gap = cap - floor
    if gap <= 1e-12 * max(abs(cap), 1.0) or floor <= 0.0:
        return None
    q = floor + 0.05 * gap
    p = floor + 0.95 * gap
    y = y_prev + (q / math.exp(y_prev) - 1.0) + 1e-6
    if y >= math.log(p) - 1e-9:
        return None
    x = 0.5 * (y + math.log(p))
    return x, y, p, q


def strictly_feasible_start(
    prob: ConvexSubproblem, start_mats=None
) -> np.ndarray:
    """Construct a strict interior point for an assembled subproblem.

    ``start_mats`` optionally supplies strictly positive definite matrices
    for the PSD blocks (e.g. the previous outer iterate plus a small
    multiple of the identity); by default a scaled identity is used.  The
    slack chain is then placed inside the certified corridor between each
    robustness floor and cap, with multipliers from 1-D certificate
    optimization.
    """
    meta = prob.meta
    lay = prob.layout
    if not meta:
        raise ValueError("subproblem carries no assembly metadata")
    ests = meta["estimates"]
    dists = meta["dists"]
    noise = meta["noise"]
    point = meta["point"]
    K, N = lay.num_users, lay.num_leds
    epss = [d.variance for d in dists]
    amp2 = dists[1].amplitude ** 2

    if start_mats is None:
        n_blocks = lay.num_blocks
        delta = 0.5 * min(
            meta["total_power"] / (n_blocks * max(epss) * N),
            meta["optical_limit"] ** 2 / (n_blocks * amp2),
        )
        if delta <= 0.0:
            raise ValueError("power budget admits no interior")
        start_mats = [delta * np.eye(N) for _ in range(n_blocks)]

    z = np.zeros(lay.num_vars)
    for b, m in enumerate(start_mats):
        if float(np.linalg.eigvalsh(m)[0]) <= 0.0:
            raise ValueError("start matrices must be strictly positive definite")
        z[lay.mat_indices(b)] = svec(m)

    # power rows must be strictly slack at the start matrices
    slacks = prob.lin_const + prob.lin_coeffs @ z
    if slacks[-(N + 1):].min() <= 0.0:
        raise ValueError("start matrices violate a power row")

    P_full = lay.extract_matrices(z)
    base = TWO_PI * noise
    common_rates = []
    private_rates = []
    for k, est in enumerate(ests):
        h, v = est.h_hat, est.v
        Phi, Phi_bar, Q, Q_bar, _, _ = aggregate_matrices(P_full, dists, k)
        if lay.include_common:
            cap_c, u_c = _certified_cap(Phi, Phi @ h, float(h @ Phi @ h) + base, v)
            # floor: smallest q certified by [[lam I - Phi_bar, ...]]; same
            # 1-D form after negating the matrix data
            neg_floor, lam_c = _certified_cap(
                -Phi_bar, -Phi_bar @ h, -float(h @ Phi_bar @ h) - base, v,
                lam_min_shift=float(np.linalg.eigvalsh(Phi_bar)[-1]),
            )
            chain = _chain_values(cap_c, -neg_floor, float(point.y_c[k]))
            if chain is None:
                raise ValueError(
                    "start matrices give no strictly positive common rate corridor"
                )
            x, y, p, q = chain
            z[lay.x_c[k]], z[lay.y_c[k]] = x, y
            z[lay.p_c[k]], z[lay.q_c[k]] = p, q
            z[lay.u_c[k]], z[lay.lam_c[k]] = max(u_c, 1e-10), max(lam_c, 1e-10)
            common_rates.append((x - y) / (2.0 * math.log(2.0)))
        cap_p, u_p = _certified_cap(
            Q + (dists[0].tau * P_full[0] if lay.include_common else 0.0),
            Q @ h, float(h @ Q @ h) + base, v,
        )
        R_bar = Q_bar + (TWO_PI * epss[0] * P_full[0] if lay.include_common else 0.0)
        neg_floor, lam_p = _certified_cap(
            -R_bar, -Q_bar @ h, -float(h @ Q_bar @ h) - base, v,
            lam_min_shift=float(np.linalg.eigvalsh(R_bar)[-1]),
        )
        chain = _chain_values(cap_p, -neg_floor, float(point.y_p[k]))
        if chain is None:
            raise ValueError(
                "start matrices give no strictly positive private rate corridor"
            )
        x, y, p, q = chain
        z[lay.x_p[k]], z[lay.y_p[k]] = x, y
        z[lay.p_p[k]], z[lay.q_p[k]] = p, q
        z[lay.u_p[k]], z[lay.lam_p[k]] = max(u_p, 1e-10), max(lam_p, 1e-10)
        private_rates.append((x - y) / (2.0 * math.log(2.0)))

    if lay.include_common:
        c_total = 0.5 * min(common_rates)
        z[lay.c_idx] = c_total / K
        z[lay.t_idx] = min(
            z[lay.c_idx[k]] + private_rates[k] for k in range(K)
        ) - 0.01 * max(min(private_rates), 0.01)
    else:
        z[lay.t_idx] = min(private_rates) * 0.99

    # final verification: every constraint strictly satisfied
    try:
        _barrier_state(prob, z)
    except _Infeasible as exc:
        raise ValueError(f"feasible-start construction failed ({exc})")
    return z
