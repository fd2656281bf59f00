"""FPM-GCN: a multi-relational graph encoder that never leaves the ball.

One layer maps entity points x to new points in three steps:

* messages   m = b_r (+) W_r x_j, with W_r a block-diagonal rotation
* attention  v = LeakyReLU(a_h . m_i + a_t . m_j), one weight per edge and head
* aggregate  Mobius gyromidpoint of the messages, gyromidpoint across heads,
             then the coordinatewise activation (1/sqrt c) sigma(sqrt c x)

``variant="hgcn"`` swaps the transform and aggregation for the tangent-space
versions (W (x)_c x and exp0 of the weighted mean of log0 messages) as an
ablation.  ``space="euclidean"`` runs the plain W x + b / weighted-sum GCN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ball
from .diff import tape as ad

DEGENERATE = 1e-12


@dataclass
class EncoderConfig:
    num_layers: int = 1
    num_heads: int = 1
    activation_slope: float = 0.01
    space: str = "hyperbolic"
    self_loops: bool = True
    variant: str = "fpm"

    def __post_init__(self):
        if self.num_layers < 1 or self.num_heads < 1:
            raise ValueError("num_layers and num_heads must be >= 1")
        if not 0.0 < self.activation_slope < 1.0:
            raise ValueError("activation_slope must lie in (0, 1)")
        if self.space not in ("hyperbolic", "euclidean"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.variant not in ("fpm", "hgcn"):
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.variant == "hgcn" and self.space != "hyperbolic":
            raise ValueError("the hgcn ablation is hyperbolic only")


@dataclass
class GcnLayerParams:
    """Per-layer parameters; relation-indexed rows include the self relation.

    ``bias`` holds ball points in hyperbolic mode and plain vectors in
    Euclidean mode.  The hgcn ablation uses ``weight`` (general matrices)
    instead of ``angles`` and ``bias``.
    """

    att_h: object
    att_t: object
    angles: object = None
    bias: object = None
    weight: object = None


@dataclass
class EdgeList:
    """Directed edges (src, rel, dst): src aggregates the message of dst."""

    src: np.ndarray
    rel: np.ndarray
    dst: np.ndarray
    num_entities: int
    num_relations: int

    @property
    def self_relation(self) -> int:
        return self.num_relations

    @classmethod
    def from_adjacency(cls, adjacency, num_relations, self_loops=True):
        src, rel, dst = [], [], []
        for i, edges in enumerate(adjacency):
            for r, j in edges:
                if not 0 <= r < num_relations:
                    raise ValueError(f"edge relation {r} out of range")
                if not 0 <= j < len(adjacency):
                    raise ValueError(f"edge target {j} out of range")
                src.append(i)
                rel.append(r)
                dst.append(j)
            if self_loops:
                src.append(i)
                rel.append(num_relations)
                dst.append(i)
        as_int = lambda v: np.asarray(v, dtype=np.int64)
        return cls(as_int(src), as_int(rel), as_int(dst), len(adjacency), num_relations)


# -- building blocks ----------------------------------------------------------


def build_rotation(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    n = 2 * theta.shape[-1]
    W = np.zeros(theta.shape[:-1] + (n, n))
    cs, sn = np.cos(theta), np.sin(theta)
    ii = np.arange(0, n, 2)
    W[..., ii, ii] = cs
    W[..., ii, ii + 1] = -sn
    W[..., ii + 1, ii] = sn
    W[..., ii + 1, ii + 1] = cs
    return W


def _rotation_maps(n):
    if n % 2:
        raise ValueError(f"block rotations need an even dimension, got {n}")
    pair = np.repeat(np.arange(n // 2), 2)
    swap = np.arange(n).reshape(-1, 2)[:, ::-1].ravel()
    sign = np.tile([-1.0, 1.0], n // 2)
    return pair, swap, sign


def rotate(x, theta):
    """Apply diag(A(theta_1), ..., A(theta_{n/2})) to x without forming it."""
    n = np.shape(ad.value(x))[-1]
    pair, swap, sign = _rotation_maps(n)
    cs = ad.take(ad.cos(theta), pair, axis=-1)
    sn = ad.take(ad.sin(theta), pair, axis=-1)
    return cs * x + sn * (sign * ad.take(x, swap, axis=-1))


def feature_transform(x, W, b, c=1.0):
    """b (+) W x for an orthogonal W; an isometry of the ball."""
    return ball.mobius_add(b, ball.apply_matrix(W, x), c)


def attention_weights(m_i, neighbors, a_h, a_t, slope=0.01):
    return ad.leaky_relu(ad.dot(m_i, a_h, keepdims=False) + ad.dot(neighbors, a_t, keepdims=False), slope)


def hyperbolic_activation(x, slope=0.01, c=1.0):
    sc = ball.sqrt_c(c)
    return ad.leaky_relu(sc * x, slope) / sc


def segment_gyromidpoint(points, weights, segments, num_segments, c=1.0):
    """Weighted Mobius gyromidpoint of ``points`` grouped by ``segments``.

    Groups whose weights are all (numerically) zero fall back to unit weights.
    Groups with no members come back as the origin.
    """
    w = ad.reshape(weights, (-1, 1))
    lam = ball.conformal_factor(points, c)
    den_probe = np.zeros((num_segments, 1))
    np.add.at(den_probe, segments, np.abs(ad.value(w)) * (ad.value(lam) - 1.0))
    degenerate = np.abs(den_probe) < DEGENERATE
    if degenerate.any():
        w = ad.where(degenerate[segments], 1.0, w)
    num = ad.segment_sum(w * lam * points, segments, num_segments)
    den = ad.segment_sum(ad.abs_(w) * (lam - 1.0), segments, num_segments)
    empty = np.bincount(segments, minlength=num_segments)[:, None] == 0
    if empty.any():
        den = ad.where(empty, 1.0, den)
    return ball.mobius_scalar_mul(0.5, num / den, c)


def gyromidpoint(points, weights, c=1.0):
    """Gyromidpoint of a list of points (rows) with real weights."""
    pv = np.asarray(ad.value(points))
    if pv.ndim != 2 or pv.shape[0] == 0:
        raise ValueError("gyromidpoint needs a nonempty (k, n) array of points")
    seg = np.zeros(pv.shape[0], dtype=np.int64)
    return ad.reshape(segment_gyromidpoint(points, weights, seg, 1, c), (pv.shape[1],))


def multi_head_combine(heads, c=1.0):
    """Equal-weight gyromidpoint of K head outputs, each shaped (N, n)."""
    if len(heads) == 1:
        return heads[0]
    num = 0.0
    den = 0.0
    for h in heads:
        lam = ball.conformal_factor(h, c)
        num = num + lam * h
        den = den + (lam - 1.0)
    return ball.mobius_scalar_mul(0.5, num / den, c)


def hgcn_feature_transform_ablation(x, W, c=1.0):
    return ball.project_into_ball(ball.mobius_matvec(W, x, c), c)


def segment_tangent_mean(points, weights, segments, num_segments, c=1.0):
    """exp0 of the v-normalised sum of log0 messages, grouped by segment."""
    w = ad.reshape(weights, (-1, 1))
    total = np.zeros((num_segments, 1))
    np.add.at(total, segments, ad.value(w))
    degenerate = np.abs(total) < DEGENERATE
    if degenerate.any():
        w = ad.where(degenerate[segments], 1.0, w)
    num = ad.segment_sum(w * ball.log0(points, c), segments, num_segments)
    den = ad.segment_sum(w, segments, num_segments)
    empty = np.bincount(segments, minlength=num_segments)[:, None] == 0
    if empty.any():
        den = ad.where(empty, 1.0, den)
    return ball.project_into_ball(ball.exp0(num / den, c), c)


def hgcn_aggregate_ablation(messages, weights, c=1.0):
    pv = np.asarray(ad.value(messages))
    seg = np.zeros(pv.shape[0], dtype=np.int64)
    return ad.reshape(segment_tangent_mean(messages, weights, seg, 1, c), (pv.shape[1],))


# -- forward pass ---------------------------------------------------------------


def _messages(x, layer, rel, c, config):
    """Messages along relation ids ``rel`` for source points ``x`` (row-aligned)."""
    if config.variant == "hgcn":
        W = ad.take(layer.weight, rel, axis=0)
        return hgcn_feature_transform_ablation(x, W, c)
    rotated = rotate(x, ad.take(layer.angles, rel, axis=0))
    b = ad.take(layer.bias, rel, axis=0)
    if config.space == "euclidean":
        return rotated + b
    return ball.mobius_add(b, rotated, c)


def _aggregate(msgs, v, graph, c, config):
    if config.variant == "hgcn":
        return segment_tangent_mean(msgs, v, graph.src, graph.num_entities, c)
    if config.space == "hyperbolic":
        return segment_gyromidpoint(msgs, v, graph.src, graph.num_entities, c)
    w = ad.reshape(v, (-1, 1))
    probe = np.zeros((graph.num_entities, 1))
    np.add.at(probe, graph.src, np.abs(ad.value(w)))
    degenerate = probe < DEGENERATE
    if degenerate.any():
        w = ad.where(degenerate[graph.src], 1.0, w)
    return ad.segment_sum(w * msgs, graph.src, graph.num_entities)


def gcn_layer(x, graph: EdgeList, layer: GcnLayerParams, config: EncoderConfig, c=1.0):
    n_ent = graph.num_entities
    self_rel = np.full(n_ent, graph.self_relation, dtype=np.int64)
    m_self = _messages(x, layer, self_rel, c, config)
    msgs = _messages(ad.take(x, graph.dst, axis=0), layer, graph.rel, c, config)
    query = ad.take(m_self, graph.src, axis=0)

    heads = []
    for k in range(config.num_heads):
        v = attention_weights(query, msgs, layer.att_h[k], layer.att_t[k], config.activation_slope)
        heads.append(_aggregate(msgs, v, graph, c, config))

    if config.space == "euclidean":
        out = heads[0]
        for h in heads[1:]:
            out = out + h
        out = out / float(len(heads))
    else:
        out = multi_head_combine(heads, c)

    isolated = np.bincount(graph.src, minlength=n_ent)[:, None] == 0
    if isolated.any():
        out = ad.where(isolated, m_self, out)

    if config.space == "euclidean":
        return ad.leaky_relu(out, config.activation_slope)
    return hyperbolic_activation(out, config.activation_slope, c)


def fpmgcn_forward(entities, graph: EdgeList, layers, config: EncoderConfig, c=1.0):
    """Run every layer; the input of layer l+1 is the activated output of layer l."""
    if np.shape(ad.value(entities))[0] != graph.num_entities:
        raise ValueError("embedding table and graph disagree on the entity count")
    if len(layers) != config.num_layers:
        raise ValueError(f"expected {config.num_layers} layers of parameters, got {len(layers)}")
    x = entities
    for layer in layers:
        x = gcn_layer(x, graph, layer, config, c)
    return x
