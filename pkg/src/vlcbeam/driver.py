"""Outer loop: successive convex inner solves with a rank-one penalty.

Each outer iteration assembles the convex subproblem at the previous iterate
(Taylor expansion of the denominator slacks, linearized penalty at the
dominant eigenvectors), solves it with the barrier method, and re-expands.
The penalty coefficient is escalated on a schedule until every lifted matrix
is numerically rank one, then beamformers are extracted by eigen-
decomposition and re-certified at the extracted vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import ipm, lifting, rates, scene
from .sigdist import solve_distribution

__all__ = [
    "DriverConfig",
    "initialize",
    "run_mmf",
    "run_sdma",
    "extract_beamformers",
    "brute_force_oracle",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DriverConfig:
    zeta: float = 1e-4  # outer tolerance on the penalized objective
    rho_init: float = -0.01
    rho_growth: float = 2.0  # magnitude multiplier while rank gaps stall
    rho_patience: int = 5  # outer iterations between escalations
    rho_floor: float = -16.0
    rank_tol: float = 1e-6  # relative to the trace
    max_outer: int = 200
    seed: int = 0
    solver: ipm.SolverConfig = field(
        default_factory=lambda: ipm.SolverConfig(duality_gap_tol=5e-10)
    )
    verbose: bool = False

    def __post_init__(self):
        if self.zeta <= 0.0 or self.rank_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not -0.1 <= self.rho_init <= -0.01:
            raise ValueError("initial penalty coefficient outside [-0.1, -0.01]")
        if self.rho_growth <= 1.0:
            raise ValueError("penalty growth factor must exceed 1")


def _normalized_problem(scenario: scene.Scenario):
    """Channel estimates rescaled to O(1) gains, with matching noise.

    The rate bounds depend only on |h.p|^2 / sigma^2 ratios, so dividing the
    channels by a common scale and the noise by its square leaves every rate
    unchanged while keeping the subproblem numerics well conditioned.
    """
    ests_raw = [scene.estimate_csit(scenario, k) for k in range(scenario.num_users)]
    scale = math.sqrt(
        float(np.mean([e.h_hat @ e.h_hat for e in ests_raw]))
    )
    if scale <= 0.0:
        raise ValueError("all channel estimates are zero")
    ests = [
        scene.ChannelEstimate(
            h_hat=e.h_hat / scale,
            v=e.v / scale**2,
            h_upper=e.h_upper / scale,
            h_lower=e.h_lower / scale,
        )
        for e in ests_raw
    ]
    noise = scenario.params.noise_power / scale**2
    return ests, noise, scale


def _certified_denominators(P_list, ests, dists, noise, include_common):
    """Worst-case denominator floors at the given iterate, per user.

    Reuses the certificate machinery of the feasible-start construction so
    the subsequent corridor placement is feasible by construction.
    """
    y_c = np.zeros(len(ests))
    y_p = np.zeros(len(ests))
    base = TWO_PI * noise
    epss = [d.variance for d in dists]
    for k, est in enumerate(ests):
        h, v = est.h_hat, est.v
        _, Phi_bar, _, Q_bar, _, _ = lifting.aggregate_matrices(P_list, dists, k)
        if include_common:
            neg_floor, _ = ipm._certified_cap(
                -Phi_bar, -Phi_bar @ h, -float(h @ Phi_bar @ h) - base, v,
                lam_min_shift=float(np.linalg.eigvalsh(Phi_bar)[-1]),
            )
            y_c[k] = math.log(-neg_floor)
        R_bar = Q_bar + (TWO_PI * epss[0] * P_list[0] if include_common else 0.0)
        neg_floor, _ = ipm._certified_cap(
            -R_bar, -Q_bar @ h, -float(h @ Q_bar @ h) - base, v,
            lam_min_shift=float(np.linalg.eigvalsh(R_bar)[-1]),
        )
        y_p[k] = math.log(-neg_floor)
    return (y_c if include_common else None), y_p


def _certified_common_ratios(P_list, ests, dists, noise):
    """Certified worst-case (numerator floor) / (denominator cap) per user
    for the common rate."""
    base = TWO_PI * noise
    out = np.zeros(len(ests))
    for k, est in enumerate(ests):
        h, v = est.h_hat, est.v
        Phi, Phi_bar, _, _, _, _ = lifting.aggregate_matrices(P_list, dists, k)
        num_floor, _ = ipm._certified_cap(Phi, Phi @ h, float(h @ Phi @ h) + base, v)
        neg, _ = ipm._certified_cap(
            -Phi_bar, -Phi_bar @ h, -float(h @ Phi_bar @ h) - base, v,
            lam_min_shift=float(np.linalg.eigvalsh(Phi_bar)[-1]),
        )
        out[k] = num_floor / (-neg)
    return out


def _certified_private_ratios(P_list, ests, dists, noise, include_common):
    """Certified worst-case (numerator floor) / (denominator cap) per user
    for the private rate; a positive corridor needs every ratio > 1."""
    base = TWO_PI * noise
    tau0 = dists[0].tau
    eps0 = dists[0].variance
    out = np.zeros(len(ests))
    for k, est in enumerate(ests):
        h, v = est.h_hat, est.v
        _, _, Q, Q_bar, _, _ = lifting.aggregate_matrices(P_list, dists, k)
        num_mat = Q + (tau0 * P_list[0] if include_common else 0.0)
        num_floor, _ = ipm._certified_cap(num_mat, Q @ h, float(h @ Q @ h) + base, v)
        R_bar = Q_bar + (TWO_PI * eps0 * P_list[0] if include_common else 0.0)
        neg, _ = ipm._certified_cap(
            -R_bar, -Q_bar @ h, -float(h @ Q_bar @ h) - base, v,
            lam_min_shift=float(np.linalg.eigvalsh(R_bar)[-1]),
        )
        out[k] = num_floor / (-neg)
    return out


def initialize(
    ests,
    dists,
    total_power,
    optical_limit,
    noise,
    include_common=True,
    common_power_share=0.5,
):
    """Feasible starting iterate: regularized zero-forcing private beams plus
    a matched common beam, scaled to half of both power budgets.

    When users outnumber LEDs the lightly regularized beams can leave some
    user with a nonpositive certified worst-case private rate, which empties
    the slack corridor of the subproblem; a ladder of larger regularizations
    with max-min power reweighting is tried until every corridor opens.

    Returns (P_list, y_c, y_p) with P_list indexed by stream (common slot
    zero; an all-zero matrix there in SDMA mode) and the expansion values set
    to the certified worst-case denominators at this iterate.
    """
    K = len(ests)
    N = ests[0].h_hat.size
    H = np.stack([e.h_hat for e in ests])
    gram = H @ H.T
    common = H.mean(axis=0)
    common /= np.linalg.norm(common)
    share = common_power_share if include_common else 0.0
    eps = dists[1].variance
    amp = dists[1].amplitude

    def build(sh, reg_mult, weights):
        reg = reg_mult * float(np.trace(gram)) / K
        W = H.T @ np.linalg.solve(gram + reg * np.eye(K), np.eye(K))
        priv = [w / np.linalg.norm(w) for w in W.T]
        beams = [
            math.sqrt(max(sh, 1e-12)) * common if include_common
            else np.zeros(N)
        ]
        beams += [
            math.sqrt((1.0 - sh) * w) * p for w, p in zip(weights, priv)
        ]
        # scale all beams so both power rows sit at half budget
        electric = sum(eps * float(p @ p) for p in beams)
        optical = max(
            sum(amp * abs(float(p[n])) for p in beams) for n in range(N)
        )
        s = min(
            math.sqrt(0.5 * total_power / electric),
            0.5 * optical_limit / optical,
        )
        beams = [s * p for p in beams]
        delta = 1e-6 * max(float(p @ p) for p in beams)
        P_out = []
        for i, p in enumerate(beams):
            if i == 0 and not include_common:
                P_out.append(np.zeros((N, N)))
            else:
                P_out.append(np.outer(p, p) + delta * np.eye(N))
        return P_out

    def attempt(sh):
        best_local = None
        for reg_mult in (1e-3, 1e-2, 1e-1, 1.0):
            weights = np.full(K, 1.0 / K)
            for _ in range(20):
                P_list = build(sh, reg_mult, weights)
                ratios = _certified_private_ratios(
                    P_list, ests, dists, noise, include_common
                )
                score = float(ratios.min())
                if include_common and score > 1.0:
                    score = min(score, float(_certified_common_ratios(
                        P_list, ests, dists, noise
                    ).min()))
                if best_local is None or score > best_local[1]:
                    best_local = (P_list, score)
                if score > 1.01:
                    return best_local
                safe = np.clip(ratios, 1e-3, None)
                weights = weights * (safe.mean() / safe) ** 1.5
                weights /= weights.sum()
        return best_local

    # the requested common power split first; when a corridor stays closed
    # (large error balls), smaller splits trade common-stream leakage
    # against the common rate's own corridor
    shares = [share]
    if include_common:
        shares += [s for s in (0.3, 0.2, 0.1, 0.05) if abs(s - share) > 1e-9]
    best = None
    for sh in shares:
        cand = attempt(sh)
        if best is None or cand[1] > best[1]:
            best = cand
        if best[1] > 1.01:
            break
    P_list = best[0]
    y_c, y_p = _certified_denominators(P_list, ests, dists, noise, include_common)
    return P_list, y_c, y_p


def _true_penalty(P_list, rho, include_common):
    gaps = [
        lifting.rank_one_gap(P)
        for i, P in enumerate(P_list)
        if include_common or i > 0
    ]
    return rho * sum(gaps), gaps


def _certified_rates(beams, ests, dists, noise, include_common):
    K = len(ests)
    r_priv = np.array([
        rates.worst_case_private_rate(ests[k], k, beams, dists, noise)
        for k in range(K)
    ])
    if include_common:
        r_common = min(
            rates.worst_case_common_rate(ests[k], beams, dists, noise)
            for k in range(K)
        )
    else:
        r_common = 0.0
    return r_priv, r_common


def _waterfill(r_priv, r_common):
    """Split the common rate to maximize min_k (c_k + r_priv_k) subject to
    sum c = r_common, c >= 0 (exact water-filling level by bisection)."""
    K = r_priv.size
    lo, hi = float(r_priv.min()), float(r_priv.max()) + r_common
    for _ in range(200):
        t = 0.5 * (lo + hi)
        need = float(np.clip(t - r_priv, 0.0, None).sum())
        if need <= r_common:
            lo = t
        else:
            hi = t
    t = lo
    shares = np.clip(t - r_priv, 0.0, None)
    excess = r_common - float(shares.sum())
    if excess > 0.0:
        shares += excess / K  # spread leftover evenly; keeps sum = r_common
    return float(np.min(shares + r_priv)), shares


def _polish_stream_scales(
    beams, ests, dists, noise, total_power, optical_limit, include_common
):
    """Coordinate ascent over per-stream scale factors under the exact
    absolute-value optical rows and the electric row.

    The lifted subproblem sees only the weaker quadratic per-LED row, so the
    single global rescale after extraction can leave a few percent of rate
    on the table when the optical limit binds; re-optimizing one scale per
    stream against the certified rates recovers most of it.
    """
    eps = dists[1].variance
    amp = dists[1].amplitude
    N = beams[0].size
    B = len(beams)
    active = [i for i in range(B) if float(beams[i] @ beams[i]) > 0.0]
    if not active:
        return beams

    def scaled(s):
        return [s[i] * beams[i] for i in range(B)]

    def mmf_of(blist):
        r_priv, r_common = _certified_rates(blist, ests, dists, noise,
                                            include_common)
        return _waterfill(r_priv, r_common)[0]

    abs_rows = np.stack([
        np.array([amp * abs(float(beams[i][n])) for i in range(B)])
        for n in range(N)
    ])
    norms = np.array([eps * float(beams[i] @ beams[i]) for i in range(B)])

    def neg_mmf(sv):
        s_full = np.clip(sv, 0.0, None)
        return -mmf_of(scaled(s_full))

    cons = [
        {"type": "ineq", "fun": lambda sv: sv},
        {"type": "ineq",
         "fun": lambda sv: total_power - float(norms @ np.square(sv))},
        {"type": "ineq",
         "fun": lambda sv: optical_limit - abs_rows @ np.abs(sv)},
    ]
    s0 = np.ones(B)
    res = optimize.minimize(
        neg_mmf, s0, method="COBYLA", constraints=cons,
        options={"rhobeg": 0.15, "maxiter": 150, "tol": 1e-8},
    )
    cand = np.clip(res.x, 0.0, None)
    # only accept a polished point that is feasible and strictly better
    if (float(norms @ np.square(cand)) <= total_power * (1.0 + 1e-9)
            and np.all(abs_rows @ cand <= optical_limit * (1.0 + 1e-9))
            and mmf_of(scaled(cand)) > mmf_of(beams) + 1e-12):
        return scaled(cand)
    return beams


def _solution_from_state(
    z, layout, ests, dists, noise, total_power, optical_limit, diagnostics
):
    """Extract beams from the final iterate and certify rates at them."""
    P_list = layout.extract_matrices(z)
    beams = extract_beamformers(
        P_list, dists, total_power, optical_limit,
        include_common=layout.include_common,
    )
    amp = dists[1].amplitude
    eps = dists[1].variance
    optical_use = max(
        sum(amp * abs(float(p[n])) for p in beams)
        for n in range(beams[0].size)
    )
    if optical_use >= optical_limit * (1.0 - 1e-6):
        beams = _polish_stream_scales(
            beams, ests, dists, noise, total_power, optical_limit,
            layout.include_common,
        )
    K = layout.num_users

    def full_budget_scale(blist):
        electric = sum(eps * float(p @ p) for p in blist)
        optical = max(
            (sum(amp * abs(float(p[n])) for p in blist)
             for n in range(blist[0].size)),
            default=0.0,
        )
        s = math.inf
        if electric > 0.0:
            s = math.sqrt(total_power / electric)
        if optical > 0.0:
            s = min(s, optical_limit / optical)
        return [s * p for p in blist] if math.isfinite(s) else blist

    # the tangent majorization cannot reach the boundary splits (all power
    # to the common stream, or none), yet for loose uncertainty or few users
    # one of them is often the true optimum; they are cheap to certify, so
    # adopt a boundary candidate whenever it certifies strictly better
    candidates = [beams]
    if layout.include_common and np.any(beams[0]):
        candidates.append(full_budget_scale(
            [beams[0]] + [np.zeros_like(p) for p in beams[1:]]
        ))
        if any(np.any(p) for p in beams[1:]):
            candidates.append(full_budget_scale(
                [np.zeros_like(beams[0])] + list(beams[1:])
            ))
    best = None
    for cand in candidates:
        r_priv, r_common = _certified_rates(
            cand, ests, dists, noise, layout.include_common
        )
        if layout.include_common:
            mmf, shares = _waterfill(r_priv, r_common)
        else:
            shares = np.zeros(K)
            mmf = float(r_priv.min())
        if best is None or mmf > best[0] + 1e-12:
            best = (mmf, shares, r_priv, r_common, cand)
    mmf, shares, r_priv, r_common, beams = best
    return rates.BeamformingSolution(
        common_beam=beams[0],
        private_beams=beams[1:],
        common_shares=shares,
        mmf_value=mmf,
        per_user_private=r_priv,
        common_bound=r_common,
        diagnostics=diagnostics,
    )


def _run(
    scenario: scene.Scenario,
    config: DriverConfig,
    include_common: bool,
    common_power_share: float = 0.5,
):
    ests, noise, _ = _normalized_problem(scenario)
    params = scenario.params
    dist = solve_distribution(params.amplitude, params.variance)
    K = scenario.num_users
    dists = [dist] * (K + 1)
    total_power = scenario.total_power
    optical_limit = params.optical_limit

    P_list, y_c, y_p = initialize(
        ests, dists, total_power, optical_limit, noise, include_common,
        common_power_share=common_power_share,
    )
    rho = config.rho_init
    trace = []
    z_prev = None
    obj_prev = None
    converged = False
    stalled = 0

    for n in range(config.max_outer):
        blocks = [P for i, P in enumerate(P_list) if include_common or i > 0]
        u_max = [np.linalg.eigh(P)[1][:, -1] for P in blocks]
        point = lifting.LinearizationPoint(y_c=y_c, y_p=y_p, u_max=u_max, rho=rho)
        prob = lifting.assemble(
            ests, dists, point, total_power, optical_limit, noise,
            include_common=include_common,
        )
        start = [
            P + max(1e-9 * np.trace(P), 1e-14) * np.eye(P.shape[0]) for P in blocks
        ]
        if z_prev is None:
            z0 = ipm.strictly_feasible_start(prob, start_mats=start)
        else:
            # pull the warm start slightly off the boundary: the blend with a
            # freshly centered corridor point keeps every slack at least a
            # tenth of the centered one (all constraint maps are affine or
            # concave in z), which keeps the barrier Hessian factorable
            try:
                z_center = ipm.strictly_feasible_start(prob, start_mats=start)
                z0 = 0.9 * z_prev + 0.1 * z_center
            except ValueError:
                z0 = z_prev
        sol = ipm.solve(prob, config.solver, z0=z0)
        lay = prob.layout
        P_list = lay.extract_matrices(sol.z)
        t = float(sol.z[lay.t_idx])
        # re-expand at the certified denominators of the new iterate, not at
        # the tangent-limited y of the subproblem solution: the latter sits
        # above the true log-denominator and re-expanding there makes the
        # next model needlessly conservative (outer steps crawl)
        y_c, y_p = _certified_denominators(
            P_list, ests, dists, noise, include_common
        )
        z_prev = sol.z
        penalty, gaps = _true_penalty(P_list, rho, include_common)
        traces = [
            float(np.trace(P))
            for i, P in enumerate(P_list)
            if include_common or i > 0
        ]
        rel_gap = max(g / max(tr, 1e-300) for g, tr in zip(gaps, traces))
        obj = t + penalty
        trace.append({
            "iter": n,
            "t": t,
            "penalty": penalty,
            "max_rank_gap": rel_gap,
            "rho": rho,
            "newton_steps": sol.newton_steps,
        })
        if config.verbose:
            print(
                f"outer {n:3d}  t={t:.6f}  pen={penalty:+.2e}  "
                f"gap={rel_gap:.2e}  rho={rho:+.3f}"
            )
        if obj_prev is not None and abs(obj - obj_prev) < config.zeta:
            if rel_gap <= config.rank_tol:
                converged = True
                break
            stalled += 1
            if stalled >= 1 and rho > config.rho_floor:
                rho = max(rho * config.rho_growth, config.rho_floor)
                stalled = 0
        elif (n + 1) % config.rho_patience == 0 and rel_gap > config.rank_tol:
            if rho > config.rho_floor:
                rho = max(rho * config.rho_growth, config.rho_floor)
        obj_prev = obj

    diagnostics = {
        "trace": trace,
        "outer_iters": len(trace),
        "converged": converged,
        "rank_gaps": gaps,
        "final_rho": rho,
        "scheme": "rsma" if include_common else "sdma",
    }
    return _solution_from_state(
        z_prev, lay, ests, dists, noise, total_power, optical_limit, diagnostics
    )


def run_mmf(
    scenario: scene.Scenario,
    config: DriverConfig = DriverConfig(),
    common_power_share: float = 0.5,
):
    """Max-min-fair design with a common stream (rate splitting)."""
    return _run(
        scenario, config, include_common=True,
        common_power_share=common_power_share,
    )


def run_sdma(scenario: scene.Scenario, config: DriverConfig = DriverConfig()):
    """Baseline without a common stream: private beams only."""
    return _run(scenario, config, include_common=False)


def extract_beamformers(
    P_list, dists, total_power, optical_limit, include_common=True, rank_tol=1e-2
):
    """Dominant-eigenpair beams with one global rescale restoring exact
    feasibility of the absolute-value optical row and the electric row.

    The lifted subproblem uses the quadratic per-LED row, which is weaker
    than the physical sum-of-absolute-values limit; the single scale s <= 1
    closes that relaxation.
    """
    beams = []
    tr_max = max(float(np.trace(P)) for P in P_list)
    for i, P in enumerate(P_list):
        if i == 0 and not include_common:
            beams.append(np.zeros(P.shape[0]))
            continue
        tr = float(np.trace(P))
        if tr <= 1e-9 * tr_max:
            # numerically unused stream: emit a zero beam instead of judging
            # the rank of roundoff noise
            beams.append(np.zeros(P.shape[0]))
            continue
        if lifting.rank_one_gap(P) > rank_tol * tr:
            raise ValueError(f"matrix {i} is not numerically rank one")
        w, vecs = np.linalg.eigh(P)
        p = math.sqrt(max(w[-1], 0.0)) * vecs[:, -1]
        if p.size and abs(p).max() > 0.0 and p[np.argmax(np.abs(p))] < 0.0:
            p = -p
        beams.append(p)
    eps = dists[1].variance
    amp = dists[1].amplitude
    electric = sum(eps * float(p @ p) for p in beams)
    optical = max(
        (sum(amp * abs(float(p[n])) for p in beams) for n in range(beams[0].size)),
        default=0.0,
    )
    s = 1.0
    if electric > 0.0:
        s = min(s, math.sqrt(total_power / electric))
    if optical > 0.0:
        s = min(s, optical_limit / optical)
    return [s * p for p in beams]


def brute_force_oracle(
    h_hat, dists, noise, total_power, optical_limit, grid_points=60
):
    """Exhaustive search for the single-user best total rate, N <= 2.

    Scans beam directions and power splits for (common, private) on a grid
    under the exact absolute-value optical row and the electric row,
    evaluating the closed-form bounds directly.  Perfect CSIT only.
    """
    h = np.asarray(h_hat, dtype=float)
    N = h.size
    if N > 2:
        raise ValueError("oracle supports at most 2 LEDs")
    eps = dists[1].variance
    amp = dists[1].amplitude

    if N == 1:
        dirs = np.array([[1.0]])
    else:
        ang = np.linspace(0.0, math.pi, grid_points, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)

    # amplitude grid per beam (direction scaled), bounded by the single-beam
    # electric and optical caps
    best = 0.0
    amps = np.linspace(0.0, 1.0, grid_points)
    for d0 in dirs:
        g0 = float(h @ d0)
        for d1 in dirs:
            g1 = float(h @ d1)
            a0_max = min(
                math.sqrt(total_power / eps),
                optical_limit / (amp * float(np.abs(d0).max())),
            )
            a1_max = min(
                math.sqrt(total_power / eps),
                optical_limit / (amp * float(np.abs(d1).max())),
            )
            A0, A1 = np.meshgrid(amps * a0_max, amps * a1_max)
            elec_ok = eps * (A0**2 + A1**2) <= total_power
            opt = np.zeros_like(A0)
            for n in range(N):
                np.maximum(
                    opt, amp * (abs(d0[n]) * A0 + abs(d1[n]) * A1), out=opt
                )
            ok = elec_ok & (opt <= optical_limit)
            if not ok.any():
                continue
            s0 = (A0 * g0) ** 2
            s1 = (A1 * g1) ** 2
            tau = dists[0].tau
            base = TWO_PI * noise
            num_c = base + tau * (s0 + s1)
            den_c = base + TWO_PI * eps * s1
            r_c = np.clip(0.5 * np.log2(num_c / den_c), 0.0, None)
            num_p = base + tau * s1
            r_p = np.clip(0.5 * np.log2(num_p / base), 0.0, None)
            total = np.where(ok, r_c + r_p, 0.0)
            best = max(best, float(total.max()))
    return best
