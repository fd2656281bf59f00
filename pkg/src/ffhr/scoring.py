"""Plausibility scores between a transformed head and candidate tails."""

from __future__ import annotations

from enum import Enum

from . import ball
from .diff import tape as ad


class ScoreKind(str, Enum):
    HIN = "hin"
    EUCLIDEAN_INNER = "euclidean_inner"
    HYPERBOLIC_DISTANCE = "hyperbolic_distance"
    EUCLIDEAN_DISTANCE = "euclidean_distance"
    TANGENT_INNER = "tangent_inner"

    @property
    def hyperbolic(self) -> bool:
        return self in (ScoreKind.HIN, ScoreKind.HYPERBOLIC_DISTANCE, ScoreKind.TANGENT_INNER)


def _hin_from_parts(xy, x2, y2, c):
    c2 = c * c
    den = (1.0 + c2 * x2) * (1.0 + c2 * y2) - 2.0 * c2 * xy
    tiny = (ad.value(x2) < 1e-30) | (ad.value(y2) < 1e-30)
    return ad.where(tiny, 0.0, xy) / den


def hin(x, y, c=1.0):
    """Hyperbolic inner product of two ball points.

    At the origin the hyperbolic angle equals the Euclidean one, so the
    numerator |x||y|cos(psi) is the coordinate dot product; the score
    vanishes when either point sits at the origin.
    """
    ball._same_dim(x, y)
    return _hin_from_parts(
        ad.dot(x, y, keepdims=False),
        ad.sqnorm(x, keepdims=False),
        ad.sqnorm(y, keepdims=False),
        c,
    )


def tangent_inner(x, y, c=1.0):
    return ad.dot(ball.log0(x, c), ball.log0(y, c), keepdims=False)


def score_pair(q, e, kind, c=1.0):
    """Score rows of ``q`` against the matching rows of ``e``."""
    kind = ScoreKind(kind)
    if kind is ScoreKind.HIN:
        return hin(q, e, c)
    if kind is ScoreKind.EUCLIDEAN_INNER:
        return ad.dot(q, e, keepdims=False)
    if kind is ScoreKind.TANGENT_INNER:
        return tangent_inner(q, e, c)
    if kind is ScoreKind.HYPERBOLIC_DISTANCE:
        return -ad.square(ball.distance(q, e, c))
    return -ad.sqnorm(q - e, keepdims=False)


def score_all(q, entities, kind, c=1.0):
    """Score each query row against every entity: shape (queries, entities)."""
    kind = ScoreKind(kind)
    et = ad.swap_last(entities)
    if kind is ScoreKind.EUCLIDEAN_INNER:
        return q @ et
    if kind is ScoreKind.HIN:
        return _hin_from_parts(q @ et, ad.sqnorm(q), ad.swap_last(ad.sqnorm(entities)), c)
    if kind is ScoreKind.TANGENT_INNER:
        return ball.log0(q, c) @ ad.swap_last(ball.log0(entities, c))
    if kind is ScoreKind.HYPERBOLIC_DISTANCE:
        return -ad.square(ball.pairwise_distance(q, entities, c))
    sq = ad.sqnorm(q) - 2.0 * (q @ et) + ad.swap_last(ad.sqnorm(entities))
    return -sq


def score_triple(e_h, transform, e_t, kind, c=1.0):
    """s(h, r, t) with the relation transform applied to the head.

    Hyperbolic kinds use the Mobius matrix-vector product, Euclidean kinds
    the plain one.
    """
    kind = ScoreKind(kind)
    q = transform.apply(e_h, c=c, hyperbolic=kind.hyperbolic)
    return score_pair(q, e_t, kind, c)


def default_kind(space: str) -> ScoreKind:
    return ScoreKind.HIN if space == "hyperbolic" else ScoreKind.EUCLIDEAN_INNER

