"""Negative log-likelihood of one-bit observations: stable log Phi, per-row losses, gradient cuts.

The detection objective is f(x) = sum_i g_i(x) with g_i(x) = -log Phi(u_i),
u_i = r_i h_i^T x / sigma. Each g_i is convex, so its tangent at any anchor
point underestimates it everywhere; those tangents are the cuts the solver
generates lazily.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)
_LOG_HALF = np.log(0.5)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Below this z the direct erfc form of log Phi loses accuracy to underflow and
# the scaled-erfc (erfcx) form takes over. erfc is still good at the switch, so
# the two branches agree there to ~1e-14.
LOG_NCDF_TAIL_SWITCH = -8.0

# Below this z the inverse Mills ratio is evaluated from its asymptotic series;
# above it, from exp(log phi - log Phi).
INV_MILLS_ASYMPTOTIC_SWITCH = -30.0


def _log_ncdf_erfc(z: np.ndarray) -> np.ndarray:
    return np.log(0.5 * special.erfc(-z / _SQRT2))


def _log_ncdf_tail(z: np.ndarray) -> np.ndarray:
    t = -z / _SQRT2
    return _LOG_HALF + np.log(special.erfcx(t)) - t * t


def _log_ncdf_pos(z: np.ndarray) -> np.ndarray:
    # log(1 - Phi(-z)); the complement survives where log(Phi) would round to 0
    return np.log1p(-0.5 * special.erfc(z / _SQRT2))


def log_ncdf(z):
    """log of the standard normal CDF, accurate over the whole real line.

    Scalar in, float out; arrays map elementwise.
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    tail = z < LOG_NCDF_TAIL_SWITCH
    pos = z >= 0.0
    mid = ~tail & ~pos
    if tail.any():
        out[tail] = _log_ncdf_tail(z[tail])
    if mid.any():
        out[mid] = _log_ncdf_erfc(z[mid])
    if pos.any():
        out[pos] = _log_ncdf_pos(z[pos])
    return float(out[0]) if scalar else out


def _inv_mills_series(z: np.ndarray) -> np.ndarray:
    # phi(-a)/Phi(-a) = a + 1/a - 2/a^3 + 10/a^5 - ..., truncation error ~74/a^7
    a = -z
    inv2 = 1.0 / (a * a)
    return a + (1.0 / a) * (1.0 + inv2 * (-2.0 + 10.0 * inv2))


def inv_mills(z):
    """Inverse Mills ratio phi(z)/Phi(z); positive, strictly decreasing.

    Evaluated as exp(log phi - log Phi) so the ratio never underflows to 0/0;
    far in the left tail the asymptotic series takes over.
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    tail = z < INV_MILLS_ASYMPTOTIC_SWITCH
    if tail.any():
        out[tail] = _inv_mills_series(z[tail])
    rest = ~tail
    if rest.any():
        zr = z[rest]
        log_pdf = -0.5 * zr * zr - _LOG_SQRT_2PI
        out[rest] = np.exp(log_pdf - log_ncdf(zr))
    return float(out[0]) if scalar else out


@dataclass
class Cut:
    """Tangent inequality w_row >= grad . x + offset anchored at ``point``."""

    row: int
    point: np.ndarray
    grad: np.ndarray
    offset: float

    def value_at(self, x: np.ndarray) -> float:
        return float(self.grad @ x + self.offset)


class LossContext:
    """Precomputed scaled rows r_i h_i / sigma of an instance.

    All evaluators are pure functions of this immutable context, so one
    context can serve any number of concurrent solves.
    """

    def __init__(self, H: np.ndarray, r: np.ndarray, sigma: float):
        H = np.asarray(H, dtype=float)
        r = np.asarray(r, dtype=float)
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.rows = (r[:, None] * H) / sigma
        self.rows.setflags(write=False)
        self.n, self.k = self.rows.shape

    @classmethod
    def from_instance(cls, instance) -> "LossContext":
        return cls(instance.H, instance.r, instance.sigma)

    def margins(self, x: np.ndarray) -> np.ndarray:
        """The N scaled inner products r_i h_i^T x / sigma."""
        return self.rows @ x

    def g_all(self, x: np.ndarray) -> np.ndarray:
        """All per-row losses g_i(x) at once."""
        return -log_ncdf(self.margins(x))


def g_eval(ctx: LossContext, i: int, x: np.ndarray) -> float:
    """Per-row loss g_i(x) = -log Phi(r_i h_i^T x / sigma); always positive."""
    if not 0 <= i < ctx.n:
        raise IndexError(f"row index {i} out of range [0, {ctx.n})")
    return -log_ncdf(float(ctx.rows[i] @ x))


def g_grad(ctx: LossContext, i: int, x: np.ndarray) -> np.ndarray:
    """Gradient of g_i at x: -inv_mills(u) * r_i h_i / sigma."""
    if not 0 <= i < ctx.n:
        raise IndexError(f"row index {i} out of range [0, {ctx.n})")
    u = float(ctx.rows[i] @ x)
    return -inv_mills(u) * ctx.rows[i]


def f_obj(ctx: LossContext, x: np.ndarray) -> float:
    """Full negative log-likelihood f(x) = sum_i g_i(x)."""
    return float(np.sum(ctx.g_all(np.asarray(x, dtype=float))))


def make_cut(ctx: LossContext, i: int, point: np.ndarray) -> Cut:
    """Tangent of g_i at ``point``: valid global underestimator by convexity."""
    point = np.array(point, dtype=float)
    grad = g_grad(ctx, i, point)
    offset = g_eval(ctx, i, point) - float(grad @ point)
    point.setflags(write=False)
    return Cut(row=i, point=point, grad=grad, offset=offset)
