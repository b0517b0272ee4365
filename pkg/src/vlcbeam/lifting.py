"""Assembly of the convex inner subproblem of the max-min-fair iteration.

The beamformer outer products are lifted to PSD matrix variables P_i.  Each
iteration maximizes t plus a linearized rank-one penalty subject to

* K+1 PSD constraints on the P_i themselves,
* 4K robustness LMIs of order N+1 (one S-procedure certificate per slack
  bound, with one nonnegative multiplier each),
* smooth rows exp(x) <= p for the numerator slacks,
* affine tangent rows for the denominator slacks (the concave side of the
  difference-of-convex split, expanded at the previous iterate),
* affine rate-linking, sign, and power rows.

Variables are flattened into one real vector: the symmetric matrices in svec
coordinates (off-diagonals scaled by sqrt(2) so the Euclidean inner product
equals the trace inner product) followed by the scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VariableLayout",
    "LinearizationPoint",
    "PSDBlock",
    "ConvexSubproblem",
    "svec",
    "smat",
    "svec_dim",
    "aggregate_matrices",
    "build_lmis",
    "linearize_exp_lower",
    "penalty_terms",
    "rank_one_gap",
    "assemble",
]

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
HALF_LOG2 = 1.0 / (2.0 * math.log(2.0))  # (x - y) * HALF_LOG2 = rate in bits


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def _svec_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def svec(mat: np.ndarray) -> np.ndarray:
    """Flatten a symmetric matrix; off-diagonals scaled so dot = trace product."""
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    out = np.empty(svec_dim(n))
    for a, (i, j) in enumerate(_svec_pairs(n)):
        out[a] = mat[i, i] if i == j else SQRT2 * mat[i, j]
    return out


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    out = np.zeros((n, n))
    for a, (i, j) in enumerate(_svec_pairs(n)):
        if i == j:
            out[i, i] = vec[a]
        else:
            out[i, j] = out[j, i] = vec[a] / SQRT2
    return out


def _svec_basis(n: int):
    """Basis matrices E_a with svec(M)[a] = <E_a, M> and M = sum vec[a] E_a."""
    mats = []
    for i, j in _svec_pairs(n):
        e = np.zeros((n, n))
        if i == j:
            e[i, i] = 1.0
        else:
            e[i, j] = e[j, i] = 1.0 / SQRT2
        mats.append(e)
    return mats


@dataclass(frozen=True)
class LinearizationPoint:
    """Expansion data carried from the previous outer iterate."""

    y_c: np.ndarray | None  # K previous common denominator slacks (None: no common stream)
    y_p: np.ndarray  # K previous private denominator slacks
    u_max: list  # dominant unit eigenvector of each previous P_i
    rho: float  # penalty coefficient, < 0

    def __post_init__(self):
        if not self.rho < 0.0:
            raise ValueError("penalty coefficient must be negative")
        for u in self.u_max:
            if abs(float(np.linalg.norm(u)) - 1.0) > 1e-8:
                raise ValueError("expansion eigenvectors must be unit vectors")


@dataclass
class PSDBlock:
    """Affine matrix map S(z) = const + sum_a z[var_idx[a]] * coeffs[a] >= 0."""

    var_idx: np.ndarray  # variable indices entering the block
    coeffs: np.ndarray  # (len(var_idx), d, d) symmetric coefficient matrices
    const: np.ndarray  # (d, d) constant term
    label: str = ""

    @property
    def order(self) -> int:
        return self.const.shape[0]

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(z[self.var_idx], self.coeffs, axes=(0, 0))


class VariableLayout:
    """Index bookkeeping for the flattened variable vector.

    Stream indices run 0..K with 0 the common stream; in SDMA mode
    (``include_common=False``) stream 0 and all common-side slack rows are
    absent and the common-decodability machinery is dropped.
    """

    def __init__(self, num_leds: int, num_users: int, include_common: bool = True):
        if num_leds < 1 or num_users < 1:
            raise ValueError("need at least one LED and one user")
        self.num_leds = num_leds
        self.num_users = num_users
        self.include_common = include_common
        self.mat_size = svec_dim(num_leds)
        self.num_blocks = num_users + 1 if include_common else num_users

        n = self.num_blocks * self.mat_size
        self.t_idx = n
        n += 1
        k = num_users
        if include_common:
            self.c_idx = np.arange(n, n + k)
            n += k
            self.x_c = np.arange(n, n + k); n += k
            self.y_c = np.arange(n, n + k); n += k
            self.p_c = np.arange(n, n + k); n += k
            self.q_c = np.arange(n, n + k); n += k
        else:
            self.c_idx = None
            self.x_c = self.y_c = self.p_c = self.q_c = None
        self.x_p = np.arange(n, n + k); n += k
        self.y_p = np.arange(n, n + k); n += k
        self.p_p = np.arange(n, n + k); n += k
        self.q_p = np.arange(n, n + k); n += k
        if include_common:
            self.u_c = np.arange(n, n + k); n += k
            self.lam_c = np.arange(n, n + k); n += k
        else:
            self.u_c = self.lam_c = None
        self.u_p = np.arange(n, n + k); n += k
        self.lam_p = np.arange(n, n + k); n += k
        self.num_vars = n

    def block_of_stream(self, stream: int) -> int | None:
        """Map stream index (0 = common) to its PSD block slot, if present."""
        if self.include_common:
            return stream
        return None if stream == 0 else stream - 1

    def mat_indices(self, block: int) -> np.ndarray:
        start = block * self.mat_size
        return np.arange(start, start + self.mat_size)

    def extract_matrices(self, z: np.ndarray):
        """Recover the K+1 stream matrices (common slot zero in SDMA mode)."""
        mats = []
        for stream in range(self.num_users + 1):
            b = self.block_of_stream(stream)
            if b is None:
                mats.append(np.zeros((self.num_leds, self.num_leds)))
            else:
                mats.append(smat(z[self.mat_indices(b)], self.num_leds))
        return mats


@dataclass
class ConvexSubproblem:
    """One inner maximization in flattened form.

    maximize   objective . z
    subject to psd_blocks[b](z) >= 0          (includes the P_i themselves)
               lin_const + lin_coeffs @ z >= 0  elementwise
               z[p_idx] - exp(z[x_idx]) >= 0    for each exponential row
    """

    layout: VariableLayout
    objective: np.ndarray
    psd_blocks: list
    lin_coeffs: np.ndarray
    lin_const: np.ndarray
    exp_rows: list  # (x_idx, p_idx) pairs
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.layout.num_vars


def aggregate_matrices(P_list, dists, user_index: int):
    """Stream-weighted matrix aggregates entering the robustness LMIs.

    Returns (Phi, Phi_bar, Q, Q_bar, R, R_bar) for the given user; the
    interference aggregates exclude that user's own private stream.
    """
    K = len(P_list) - 1
    if not 0 <= user_index < K:
        raise ValueError("user index out of range")
    taus = [d.tau for d in dists]
    epss = [d.variance for d in dists]
    n = P_list[0].shape[0]
    Phi = sum((taus[i] * P_list[i] for i in range(K + 1)), np.zeros((n, n)))
    Phi_bar = sum((TWO_PI * epss[j] * P_list[j] for j in range(1, K + 1)), np.zeros((n, n)))
    Q = sum((taus[j] * P_list[j] for j in range(1, K + 1)), np.zeros((n, n)))
    Q_bar = sum(
        (TWO_PI * epss[j] * P_list[j] for j in range(1, K + 1) if j != user_index + 1),
        np.zeros((n, n)),
    )
    R = taus[0] * P_list[0] + Q
    R_bar = TWO_PI * epss[0] * P_list[0] + Q_bar
    return Phi, Phi_bar, Q, Q_bar, R, R_bar


def _bordered(top_left, off_col, corner):
    n = top_left.shape[0]
    m = np.empty((n + 1, n + 1))
    m[:n, :n] = top_left
    m[:n, n] = off_col
    m[n, :n] = off_col
    m[n, n] = corner
    return m


def build_lmis(aggregates, h_hat, v, slacks, multipliers, noise):
    """Numeric evaluation of the four robustness certificates for one user.

    ``slacks`` = (p_c, q_c, p_p, q_p), ``multipliers`` = (u_c, lam_c, u_p,
    lam_p).  Each returned matrix must be PSD for the corresponding slack
    bound to hold over the whole error ball.
    """
    Phi, Phi_bar, Q, Q_bar, R, R_bar = aggregates
    p_c, q_c, p_p, q_p = slacks
    u_c, lam_c, u_p, lam_p = multipliers
    if min(u_c, lam_c, u_p, lam_p) < 0.0:
        raise ValueError("multipliers must be nonnegative")
    h = np.asarray(h_hat, dtype=float)
    n = h.size
    eye = np.eye(n)
    base = TWO_PI * noise
    a = _bordered(
        u_c * eye + Phi, Phi @ h, -u_c * v + h @ Phi @ h + base - p_c
    )
    b = _bordered(
        lam_c * eye - Phi_bar, -Phi_bar @ h, -lam_c * v - h @ Phi_bar @ h - base + q_c
    )
    c = _bordered(
        u_p * eye + R, Q @ h, -u_p * v + h @ Q @ h + base - p_p
    )
    d = _bordered(
        lam_p * eye - R_bar, -Q_bar @ h, -lam_p * v - h @ Q_bar @ h - base + q_p
    )
    return a, b, c, d


def linearize_exp_lower(y_prev: float):
    """Tangent of exp at y_prev: an affine underestimator of exp(y)."""
    e = math.exp(y_prev)

    def affine(y):
        return e * (1.0 + y - y_prev)

    return affine


def rank_one_gap(P: np.ndarray) -> float:
    """Trace minus largest eigenvalue; zero exactly for rank <= 1 PSD input."""
    w = np.linalg.eigvalsh(P)
    return float(np.trace(P) - w[-1])


def penalty_terms(P_list, point: LinearizationPoint) -> float:
    """Linearized rank-one penalty rho * sum_i (Tr P_i - u_i^T P_i u_i)."""
    total = 0.0
    for P, u in zip(P_list, point.u_max):
        total += float(np.trace(P)) - float(u @ P @ u)
    return point.rho * total


def _lmi_psd_block(layout, user, kind, stream_weights, h_hat, v, noise,
                   mult_idx, mult_sign_v, slack_idx, slack_sign, basis):
    """Build one symbolic robustness LMI of order N+1.

    ``stream_weights`` maps stream index -> (w_top_left, w_offdiag, w_corner)
    applied to that stream's matrix variable; the multiplier enters as
    diag(I, -v) and the slack enters the corner with the given sign.
    """
    n = layout.num_leds
    m = layout.mat_size
    h = np.asarray(h_hat, dtype=float)
    var_idx = []
    coeffs = []
    for stream, (w_tl, w_off, w_br) in stream_weights.items():
        block = layout.block_of_stream(stream)
        if block is None:
            continue
        idx = layout.mat_indices(block)
        for a in range(m):
            E = basis[a]
            col = w_off * (E @ h)
            mat = _bordered(w_tl * E, col, w_br * float(h @ E @ h))
            var_idx.append(idx[a])
            coeffs.append(mat)
    mult_mat = np.zeros((n + 1, n + 1))
    mult_mat[:n, :n] = np.eye(n)
    mult_mat[n, n] = -v
    var_idx.append(mult_idx)
    coeffs.append(mult_mat)
    slack_mat = np.zeros((n + 1, n + 1))
    slack_mat[n, n] = slack_sign
    var_idx.append(slack_idx)
    coeffs.append(slack_mat)
    const = np.zeros((n + 1, n + 1))
    const[n, n] = mult_sign_v
    return PSDBlock(
        var_idx=np.asarray(var_idx, dtype=int),
        coeffs=np.asarray(coeffs),
        const=const,
        label=f"lmi_{kind}_user{user}",
    )


def assemble(
    estimates,
    dists,
    point: LinearizationPoint,
    total_power: float,
    optical_limit: float,
    noise: float,
    include_common: bool = True,
) -> ConvexSubproblem:
    """Build the full inner subproblem for one outer iteration.

    ``estimates`` holds one ChannelEstimate per user; ``dists`` one
    distribution per stream (index 0 = common, ignored in SDMA mode).
    """
    K = len(estimates)
    N = estimates[0].h_hat.size
    if len(dists) != K + 1:
        raise ValueError("need one distribution per stream (common first)")
    if total_power <= 0.0 or optical_limit <= 0.0:
        raise ValueError("power limits must be positive")
    layout = VariableLayout(N, K, include_common)
    if len(point.u_max) != layout.num_blocks:
        raise ValueError("one expansion eigenvector per matrix block required")
    basis = _svec_basis(N)
    taus = [d.tau for d in dists]
    epss = [d.variance for d in dists]
    amp2 = dists[1].amplitude ** 2
    base = TWO_PI * noise

    psd_blocks = []
    # the matrix variables themselves
    for b in range(layout.num_blocks):
        idx = layout.mat_indices(b)
        psd_blocks.append(
            PSDBlock(
                var_idx=idx,
                coeffs=np.asarray(basis),
                const=np.zeros((N, N)),
                label=f"psd_P{b}",
            )
        )

    exp_rows = []
    rows = []  # (coeff dict {idx: val}, const)
    for k, est in enumerate(estimates):
        h, v = est.h_hat, est.v
        if include_common:
            # certificate (a): numerator cap p_c;  (b): denominator floor q_c
            psd_blocks.append(
                _lmi_psd_block(
                    layout, k, "a",
                    {i: (taus[i], taus[i], taus[i]) for i in range(K + 1)},
                    h, v, noise, layout.u_c[k], base, layout.p_c[k], -1.0, basis,
                )
            )
            psd_blocks.append(
                _lmi_psd_block(
                    layout, k, "b",
                    {j: (-TWO_PI * epss[j],) * 3 for j in range(1, K + 1)},
                    h, v, noise, layout.lam_c[k], -base, layout.q_c[k], 1.0, basis,
                )
            )
        weights_c = {j: (taus[j],) * 3 for j in range(1, K + 1)}
        if include_common:
            weights_c[0] = (taus[0], 0.0, 0.0)
        psd_blocks.append(
            _lmi_psd_block(
                layout, k, "c", weights_c, h, v, noise,
                layout.u_p[k], base, layout.p_p[k], -1.0, basis,
            )
        )
        weights_d = {
            j: (-TWO_PI * epss[j],) * 3 for j in range(1, K + 1) if j != k + 1
        }
        if include_common:
            weights_d[0] = (-TWO_PI * epss[0], 0.0, 0.0)
        psd_blocks.append(
            _lmi_psd_block(
                layout, k, "d", weights_d, h, v, noise,
                layout.lam_p[k], -base, layout.q_p[k], 1.0, basis,
            )
        )

        # numerator slacks: exp(x) <= p
        if include_common:
            exp_rows.append((int(layout.x_c[k]), int(layout.p_c[k])))
        exp_rows.append((int(layout.x_p[k]), int(layout.p_p[k])))

        # denominator tangent rows: e^{y0}(1 + y - y0) - q >= 0
        if include_common:
            e0 = math.exp(float(point.y_c[k]))
            rows.append((
                {int(layout.y_c[k]): e0, int(layout.q_c[k]): -1.0},
                e0 * (1.0 - float(point.y_c[k])),
            ))
        e0 = math.exp(float(point.y_p[k]))
        rows.append((
            {int(layout.y_p[k]): e0, int(layout.q_p[k]): -1.0},
            e0 * (1.0 - float(point.y_p[k])),
        ))

        # rate-linking rows
        if include_common:
            row = {int(c): -1.0 for c in layout.c_idx}
            row[int(layout.x_c[k])] = row.get(int(layout.x_c[k]), 0.0) + HALF_LOG2
            row[int(layout.y_c[k])] = row.get(int(layout.y_c[k]), 0.0) - HALF_LOG2
            rows.append((row, 0.0))
            rows.append((
                {
                    int(layout.x_p[k]): HALF_LOG2,
                    int(layout.y_p[k]): -HALF_LOG2,
                    layout.t_idx: -1.0,
                    int(layout.c_idx[k]): 1.0,
                },
                0.0,
            ))
        else:
            rows.append((
                {
                    int(layout.x_p[k]): HALF_LOG2,
                    int(layout.y_p[k]): -HALF_LOG2,
                    layout.t_idx: -1.0,
                },
                0.0,
            ))

        # sign rows x >= y
        if include_common:
            rows.append(({int(layout.x_c[k]): 1.0, int(layout.y_c[k]): -1.0}, 0.0))
        rows.append(({int(layout.x_p[k]): 1.0, int(layout.y_p[k]): -1.0}, 0.0))

        # multiplier nonnegativity
        if include_common:
            rows.append(({int(layout.u_c[k]): 1.0}, 0.0))
            rows.append(({int(layout.lam_c[k]): 1.0}, 0.0))
        rows.append(({int(layout.u_p[k]): 1.0}, 0.0))
        rows.append(({int(layout.lam_p[k]): 1.0}, 0.0))

    if include_common:
        for k in range(K):
            rows.append(({int(layout.c_idx[k]): 1.0}, 0.0))

    # electric power: P_t - sum_i eps_i Tr(P_i) >= 0
    diag_pos = [a for a, (i, j) in enumerate(_svec_pairs(N)) if i == j]
    row = {}
    for stream in range(K + 1):
        b = layout.block_of_stream(stream)
        if b is None:
            continue
        idx = layout.mat_indices(b)
        for a in diag_pos:
            row[int(idx[a])] = row.get(int(idx[a]), 0.0) - epss[stream]
    rows.append((row, total_power))

    # optical power per LED: limit^2 - sum_i A^2 (P_i)_nn >= 0
    for n_pos, a in enumerate(diag_pos):
        row = {}
        for stream in range(K + 1):
            b = layout.block_of_stream(stream)
            if b is None:
                continue
            row[int(layout.mat_indices(b)[a])] = -amp2
        rows.append((row, optical_limit**2))

    lin_coeffs = np.zeros((len(rows), layout.num_vars))
    lin_const = np.empty(len(rows))
    for r, (coeff, c0) in enumerate(rows):
        lin_const[r] = c0
        for idx, val in coeff.items():
            lin_coeffs[r, idx] = val

    # objective: t plus the linearized penalty (rho < 0)
    objective = np.zeros(layout.num_vars)
    objective[layout.t_idx] = 1.0
    for b in range(layout.num_blocks):
        u = np.asarray(point.u_max[b], dtype=float)
        pen = point.rho * (np.eye(N) - np.outer(u, u))
        objective[layout.mat_indices(b)] += svec(pen)

    prob = ConvexSubproblem(
        layout=layout,
        objective=objective,
        psd_blocks=psd_blocks,
        lin_coeffs=lin_coeffs,
        lin_const=lin_const,
        exp_rows=exp_rows,
        meta={
            "estimates": list(estimates),
            "dists": list(dists),
            "noise": noise,
            "total_power": total_power,
            "optical_limit": optical_limit,
            "point": point,
        },
    )
    _check_counts(prob)
    return prob


def _check_counts(prob: ConvexSubproblem) -> None:
    lay = prob.layout
    K, N = lay.num_users, lay.num_leds
    if lay.include_common:
        want_lmis, want_psd, want_exp = 4 * K, K + 1, 2 * K
        want_lin = 2 * K + 2 * K + 2 * K + K + 1 + N + 4 * K
    else:
        want_lmis, want_psd, want_exp = 2 * K, K, K
        want_lin = K + K + K + 1 + N + 2 * K
    lmis = sum(1 for b in prob.psd_blocks if b.order == N + 1)
    psd = sum(1 for b in prob.psd_blocks if b.order == N)
    if lmis != want_lmis or psd != want_psd:
        raise AssertionError("matrix-constraint tally mismatch")
    if len(prob.exp_rows) != want_exp or prob.lin_const.size != want_lin:
        raise AssertionError("scalar-constraint tally mismatch")
