"""Gyrovector numerics on the Poincare ball of curvature -c.

Points are arrays whose last axis holds model coordinates; leading axes
broadcast.  Every function also accepts tape variables
(:class:`ffhr.diff.tape.Var`) and records itself for differentiation.
"""

from __future__ import annotations

import math

import numpy as np

from .diff import tape as ad

BALL_EPS = 1e-5


class ClampCounter:
    """Counts how many points :func:`project_into_ball` had to rescale."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


clamp_events = ClampCounter()


def check_curvature(c):
    cv = float(np.asarray(ad.value(c)))
    if not (math.isfinite(cv) and cv > 0):
        raise ValueError(f"curvature must be positive and finite, got {cv}")
    return c


def _same_dim(*xs):
    dims = {np.shape(ad.value(x))[-1] for x in xs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def sqrt_c(c):
    return ad.sqrt(c) if isinstance(c, ad.Var) else math.sqrt(c)


def is_in_ball(x, c=1.0):
    sq = np.sum(np.square(ad.value(x)), axis=-1)
    return np.all(sq < 1.0 / float(ad.value(c)))


def conformal_factor(x, c=1.0, keepdims=True):
    """lambda_x = 2 / (1 - c |x|^2)."""
    return 2.0 / (1.0 - c * ad.sqnorm(x, keepdims=keepdims))


def mobius_add(x, y, c=1.0):
    _same_dim(x, y)
    xy = ad.dot(x, y)
    x2 = ad.sqnorm(x)
    y2 = ad.sqnorm(y)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return num / ad.clamp_min(den, ad.MIN_NORM)


def mobius_neg_add(x, y, c=1.0):
    """-x (+) y, the displacement used by distances and logarithms."""
    return mobius_add(-x, y, c)


def mobius_scalar_mul(r, x, c=1.0):
    sc = sqrt_c(c)
    n = ad.norm(x)
    return ad.tanh(r * ad.artanh(sc * n)) * x / (sc * n)


def exp0(v, c=1.0):
    sc = sqrt_c(c)
    n = ad.norm(v)
    return ad.tanh(sc * n) * v / (sc * n)


def log0(y, c=1.0):
    sc = sqrt_c(c)
    n = ad.norm(y)
    return ad.artanh(sc * n) * y / (sc * n)


def exp_x(x, v, c=1.0):
    _same_dim(x, v)
    sc = sqrt_c(c)
    n = ad.norm(v)
    lam = conformal_factor(x, c)
    step = ad.tanh(sc * lam * n / 2.0) * v / (sc * n)
    return mobius_add(x, step, c)


def log_x(x, y, c=1.0):
    _same_dim(x, y)
    sc = sqrt_c(c)
    u = mobius_neg_add(x, y, c)
    n = ad.norm(u)
    lam = conformal_factor(x, c)
    return 2.0 / (sc * lam) * ad.artanh(sc * n) * u / n


def apply_matrix(M, v):
    """Batched ``M @ v`` over the last axis, broadcasting leading axes."""
    vshape = np.shape(ad.value(v))
    return ad.sum_(M * ad.reshape(v, vshape[:-1] + (1, vshape[-1])), axis=-1)


def mobius_matvec(M, x, c=1.0):
    """M (x)_c x = exp0(M log0(x))."""
    if np.shape(ad.value(M))[-1] != np.shape(ad.value(x))[-1]:
        raise ValueError("matrix and point dimensions differ")
    return exp0(apply_matrix(M, log0(x, c)), c)


def distance(x, y, c=1.0, keepdims=False):
    _same_dim(x, y)
    sc = sqrt_c(c)
    n = ad.norm(mobius_neg_add(x, y, c), keepdims=keepdims)
    return 2.0 / sc * ad.artanh(sc * n)


def gyration(u, v, w, c=1.0):
    """gyr[u, v] w = -(u (+) v) (+) (u (+) (v (+) w))."""
    _same_dim(u, v, w)
    return mobius_add(-mobius_add(u, v, c), mobius_add(u, mobius_add(v, w, c), c), c)


def project_into_ball(x, c=1.0, eps=BALL_EPS):
    """Rescale points with norm >= (1 - eps)/sqrt(c) onto that radius.

    The rescaled rows carry no gradient.
    """
    xv = ad.value(x)
    if not np.all(np.isfinite(xv)):
        raise ValueError("cannot project non-finite coordinates")
    cv = float(ad.value(c))
    maxnorm = (1.0 - eps) / math.sqrt(cv)
    n = np.linalg.norm(xv, axis=-1, keepdims=True)
    outside = n >= maxnorm
    hits = int(np.count_nonzero(outside))
    if not hits:
        return x
    clamp_events.count += hits
    projected = xv / np.maximum(n, ad.MIN_NORM) * maxnorm
    return ad.where(outside, projected, x)


def pairwise_neg_add_sqnorm(x, y, c=1.0):
    """|-x_i (+) y_j|^2 for every row pair, without forming the sums."""
    _same_dim(x, y)
    xy = -(x @ ad.swap_last(y))  # <-x, y>
    x2 = ad.sqnorm(x)
    y2 = ad.swap_last(ad.sqnorm(y))
    a = 1.0 + 2.0 * c * xy + c * y2
    b = 1.0 - c * x2
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    num = a * a * x2 + 2.0 * a * b * xy + b * b * y2
    return ad.clamp_min(num, 0.0) / ad.square(den)


def pairwise_distance(x, y, c=1.0):
    sc = sqrt_c(c)
    n = ad.sqrt(ad.clamp_min(pairwise_neg_add_sqnorm(x, y, c), ad.MIN_NORM**2))
    return 2.0 / sc * ad.artanh(sc * n)
