"""Reference detectors: exhaustive-search global oracle and zero-forcing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .loss import LossContext, log_ncdf
from .model import RealInstance, quantize_one_bit

EXHAUSTIVE_K_CAP = 24
RANK_TOL = 1e-10
TIE_TOL = 1e-9


@dataclass
class OracleResult:
    x_opt: np.ndarray
    objective: float
    n_evaluated: int
    ties: int


def least_squares(H: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of H x ~ r.

    Complete orthogonal decomposition: column-pivoted QR with rank detected at
    RANK_TOL relative to the leading diagonal entry, then an LQ step on the
    rank-revealed block so rank-deficient systems get the minimum-norm solution
    deterministically.
    """
    H = np.asarray(H, dtype=float)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(r))):
        raise ValueError("least_squares requires finite input")
    q, R, piv = scipy.linalg.qr(H, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(H.shape[1])
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    R1 = R[:rank, :]  # rank x k, full row rank
    qr2, L_t = np.linalg.qr(R1.T)  # R1 = L_t.T @ qr2.T
    rhs = q[:, :rank].T @ r
    z = scipy.linalg.solve_triangular(L_t.T, rhs, lower=True)
    x_piv = qr2 @ z  # minimum-norm in the pivoted ordering
    x = np.empty(H.shape[1])
    x[piv] = x_piv
    return x


def zero_forcing(instance: RealInstance) -> np.ndarray:
    """Sign of the pseudo-inverse solution; also seeds the solver's cut pool."""
    return quantize_one_bit(least_squares(instance.H, instance.r))


def exhaustive_search(instance: RealInstance, k_cap: int = EXHAUSTIVE_K_CAP) -> OracleResult:
    """Global minimum of the detection objective over all 2^K sign vectors.

    Gray-code order: consecutive candidates differ in one coordinate, so the
    N margins update in O(N) per step. Ties within TIE_TOL are counted and
    broken by the lexicographically smallest vector, +1 ordered before -1.
    """
    k = instance.k
    if k > k_cap:
        raise ValueError(f"exhaustive search requires K <= {k_cap}, got K = {k}")
    ctx = LossContext.from_instance(instance)
    # bit j of the gray code set means x_j = -1; the all +1 vector is code 0
    x = np.ones(k)
    margins = ctx.rows @ x
    col_doubled = 2.0 * ctx.rows  # margin change when one coordinate flips sign

    min_f = float(np.sum(-log_ncdf(margins)))
    ties = 1
    chosen_rank = _lex_rank(0, k)
    chosen_x = x.copy()
    chosen_f = min_f
    code = 0
    for idx in range(1, 2**k):
        gray = idx ^ (idx >> 1)
        j = (gray ^ code).bit_length() - 1  # flipped coordinate
        code = gray
        if x[j] > 0:
            x[j] = -1.0
            margins -= col_doubled[:, j]
        else:
            x[j] = 1.0
            margins += col_doubled[:, j]
        f = float(np.sum(-log_ncdf(margins)))
        if f < min_f - TIE_TOL:
            min_f = f
            ties = 1
            chosen_rank = _lex_rank(code, k)
            chosen_x = x.copy()
            chosen_f = f
        elif f <= min_f + TIE_TOL:
            min_f = min(min_f, f)
            ties += 1
            rank = _lex_rank(code, k)
            if rank < chosen_rank:
                chosen_rank = rank
                chosen_x = x.copy()
                chosen_f = f
    return OracleResult(x_opt=chosen_x, objective=chosen_f, n_evaluated=2**k, ties=ties)


def _lex_rank(code: int, k: int) -> int:
    # bit j of `code` is coordinate j; lexicographic order reads coordinate 0 first
    rank = 0
    for j in range(k):
        rank = (rank << 1) | ((code >> j) & 1)
    return rank
