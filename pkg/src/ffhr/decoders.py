"""Relation transforms applied to the head entity before scoring.

Each variant stores a flat parameter row per relation and expands it into
a dense n x n matrix through a fixed index map:

    diagonal               n params     (DistMult)
    block2_rotation_scale  n params     (ComplEx: blocks [[a, -b], [b, a]])
    block2_general         2n params    (DualE: unconstrained 2x2 blocks)
    full                   n*n params   (RESCAL)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ball
from .diff import tape as ad

VARIANTS = ("diagonal", "block2_rotation_scale", "block2_general", "full")

MODEL_VARIANTS = {
    "distmult": "diagonal",
    "complex": "block2_rotation_scale",
    "duale": "block2_general",
    "rescal": "full",
}


def param_count(variant: str, n: int) -> int:
    if variant == "diagonal" or variant == "block2_rotation_scale":
        return n
    if variant == "block2_general":
        return 2 * n
    if variant == "full":
        return n * n
    raise ValueError(f"unknown relation transform {variant!r}")


@lru_cache(maxsize=None)
def index_map(variant: str, n: int):
    """(index, sign) arrays of length n*n; index k == param_count means zero."""
    k = param_count(variant, n)
    if variant != "diagonal" and variant != "full" and n % 2:
        raise ValueError(f"{variant} needs an even dimension, got {n}")
    idx = np.full((n, n), k, dtype=np.int64)
    sign = np.ones((n, n))
    if variant == "diagonal":
        idx[np.arange(n), np.arange(n)] = np.arange(n)
    elif variant == "full":
        idx[:] = np.arange(n * n).reshape(n, n)
    else:
        for b in range(n // 2):
            i = 2 * b
            if variant == "block2_rotation_scale":
                idx[i, i], idx[i, i + 1] = i, i + 1
                idx[i + 1, i], idx[i + 1, i + 1] = i + 1, i
                sign[i, i + 1] = -1.0
            else:
                idx[i, i], idx[i, i + 1] = 4 * b, 4 * b + 1
                idx[i + 1, i], idx[i + 1, i + 1] = 4 * b + 2, 4 * b + 3
    idx.setflags(write=False)
    sign.setflags(write=False)
    return idx.ravel(), sign.ravel()


def dense(variant: str, params, n: int):
    """Expand parameter rows (..., k) into matrices (..., n, n)."""
    idx, sign = index_map(variant, n)
    pv = ad.value(params)
    if pv.shape[-1] != param_count(variant, n):
        raise ValueError(
            f"{variant} expects {param_count(variant, n)} params per relation, got {pv.shape[-1]}"
        )
    padded = ad.concat([params, np.zeros(pv.shape[:-1] + (1,))], axis=-1)
    flat = ad.take(padded, idx, axis=-1) * sign
    return ad.reshape(flat, pv.shape[:-1] + (n, n))


def apply_params(variant, params, x, c=1.0, hyperbolic=True):
    n = np.shape(ad.value(x))[-1]
    M = dense(variant, params, n)
    if hyperbolic:
        return ball.mobius_matvec(M, x, c)
    return ball.apply_matrix(M, x)


@dataclass
class RelationTransform:
    variant: str
    params: np.ndarray

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown relation transform {self.variant!r}")

    def matrix(self, n: int) -> np.ndarray:
        return dense(self.variant, self.params, n)

    def apply(self, e_h, c=1.0, hyperbolic=True):
        return apply_params(self.variant, self.params, e_h, c, hyperbolic)


def apply_transform(t: RelationTransform, e_h, c=1.0, hyperbolic=True):
    return t.apply(e_h, c=c, hyperbolic=hyperbolic)


def xavier_uniform(shape, rng, fan_in=None, fan_out=None):
    """Glorot uniform; fans default to the last two axes of ``shape``."""
    if fan_in is None:
        fan_in = shape[-1]
    if fan_out is None:
        fan_out = shape[-2] if len(shape) > 1 else shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(variant: str, num_relations: int, n: int, rng) -> np.ndarray:
    """Xavier-uniform rows with fans taken from the n x n matrix each row encodes."""
    return xavier_uniform((num_relations, param_count(variant, n)), rng, fan_in=n, fan_out=n)
