"""Model parameters and the differentiable encoder/decoder pipeline.

All trainable arrays live in Euclidean (tangent) coordinates.  Entity rows
and GCN biases reach the ball through exp0 on read, so no update can push
an embedding outside it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import ball, decoders, scoring
from .diff import tape as ad
from .encoder import EdgeList, EncoderConfig, GcnLayerParams, fpmgcn_forward

SEARCH_GRID = {
    "batch_size": (100, 200, 500, 1000, 2000),
    "learning_rate": (0.005, 0.01, 0.05, 0.1, 0.5),
    "reg_coeff": (0.005, 0.01, 0.05, 0.1, 0.5),
    "heads": (1, 2, 4, 8),
    "layers": (1, 2),
}


@dataclass
class TrainConfig:
    dim: int = 32
    model: str = "rescal"
    space: str = "hyperbolic"
    score: str = "auto"
    curvature: float = 1.0
    trainable_curvature: bool = False
    use_gcn: bool = True
    gcn_variant: str = "fpm"
    layers: int = 1
    heads: int = 1
    slope: float = 0.01
    self_loops: bool = True
    batch_size: int = 500
    learning_rate: float = 0.1
    reg_coeff: float = 0.05
    max_epochs: int = 500
    eval_every: int = 5
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.model not in decoders.MODEL_VARIANTS:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(decoders.MODEL_VARIANTS)}")
        if self.space not in ("hyperbolic", "euclidean"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.score != "auto":
            scoring.ScoreKind(self.score)
        ball.check_curvature(self.curvature)
        if self.dim < 2 or self.dim % 2:
            raise ValueError("dim must be a positive even number")
        self.encoder_config()

    @property
    def decoder_variant(self) -> str:
        return decoders.MODEL_VARIANTS[self.model]

    @property
    def score_kind(self) -> scoring.ScoreKind:
        if self.score == "auto":
            return scoring.default_kind(self.space)
        return scoring.ScoreKind(self.score)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_layers=self.layers,
            num_heads=self.heads,
            activation_slope=self.slope,
            space=self.space,
            self_loops=self.self_loops,
            variant=self.gcn_variant,
        )

    def off_grid(self) -> list[str]:
        """Names of settings outside the usual search grid."""
        return [k for k, grid in SEARCH_GRID.items() if getattr(self, k) not in grid]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class ModelParams:
    config: TrainConfig
    num_entities: int
    num_relations: int
    arrays: dict = field(default_factory=dict)
    vocab_hash: str = ""

    @property
    def curvature(self) -> float:
        if "curvature" in self.arrays:
            return float(np.exp(self.arrays["curvature"][0]))
        return float(self.config.curvature)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            self.num_entities,
            self.num_relations,
            {k: v.copy() for k, v in self.arrays.items()},
            self.vocab_hash,
        )


def init_model(config: TrainConfig, num_entities: int, num_relations: int, vocab_hash: str = "", seed=None):
    """Xavier-uniform raw arrays; GCN rotation angles start at zero."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.dim
    arrays = {
        "entity": decoders.xavier_uniform((num_entities, n), rng),
        "relation": decoders.init_params(config.decoder_variant, num_relations, n, rng),
    }
    if config.trainable_curvature:
        arrays["curvature"] = np.array([np.log(config.curvature)])
    if config.use_gcn:
        rows = num_relations + 1  # + self relation
        for layer in range(config.layers):
            pre = f"gcn{layer}."
            if config.gcn_variant == "hgcn":
                arrays[pre + "weight"] = decoders.xavier_uniform((rows, n, n), rng, fan_in=n, fan_out=n)
            else:
                arrays[pre + "angles"] = np.zeros((rows, n // 2))
                arrays[pre + "bias"] = decoders.xavier_uniform((rows, n), rng)
            arrays[pre + "att_h"] = decoders.xavier_uniform((config.heads, n), rng)
            arrays[pre + "att_t"] = decoders.xavier_uniform((config.heads, n), rng)
    return ModelParams(config, num_entities, num_relations, arrays, vocab_hash)


def bind(model: ModelParams, tape: ad.Tape | None = None) -> dict:
    """Parameter arrays as tape leaves (or plain arrays when ``tape`` is None)."""
    if tape is None:
        return dict(model.arrays)
    return {k: tape.leaf(v, name=k) for k, v in model.arrays.items()}


def curvature_of(p: dict, config: TrainConfig):
    if "curvature" in p:
        return ad.exp(ad.reshape(p["curvature"], ()))
    return config.curvature


def layer_params(p: dict, config: TrainConfig, c):
    hyperbolic = config.space == "hyperbolic"
    layers = []
    for layer in range(config.layers):
        pre = f"gcn{layer}."
        if config.gcn_variant == "hgcn":
            layers.append(GcnLayerParams(p[pre + "att_h"], p[pre + "att_t"], weight=p[pre + "weight"]))
            continue
        bias = p[pre + "bias"]
        if hyperbolic:
            bias = ball.exp0(bias, c)
        layers.append(GcnLayerParams(p[pre + "att_h"], p[pre + "att_t"], angles=p[pre + "angles"], bias=bias))
    return layers


def entity_points(p: dict, config: TrainConfig, graph: EdgeList | None):
    """Final entity representations: exp0 of the raw table, then the encoder."""
    c = curvature_of(p, config)
    x = p["entity"]
    if config.space == "hyperbolic":
        x = ball.exp0(x, c)
    if config.use_gcn:
        if graph is None:
            raise ValueError("use_gcn needs the training graph")
        x = fpmgcn_forward(x, graph, layer_params(p, config, c), config.encoder_config(), c)
    return x


def queries(p: dict, config: TrainConfig, ent, heads, rels):
    c = curvature_of(p, config)
    rel = ad.take(p["relation"], rels, axis=0)
    e_h = ad.take(ent, heads, axis=0)
    return decoders.apply_params(config.decoder_variant, rel, e_h, c, hyperbolic=config.space == "hyperbolic")


def score_queries(p: dict, config: TrainConfig, ent, heads, rels):
    c = curvature_of(p, config)
    q = queries(p, config, ent, heads, rels)
    return scoring.score_all(q, ent, config.score_kind, c), q


def multiclass_log_loss(scores, targets):
    """Mean over rows of -s[target] + logsumexp(s); ``scores`` is (B, E)."""
    sv = ad.value(scores)
    targets = np.asarray(targets)
    if sv.ndim == 1:
        scores = ad.reshape(scores, (1, -1))
        sv = ad.value(scores)
        targets = targets.reshape(1)
    if np.any(targets < 0) or np.any(targets >= sv.shape[-1]):
        raise IndexError("target entity out of range")
    picked = scores[np.arange(sv.shape[0]), targets]
    return ad.mean(ad.logsumexp(scores, axis=-1) - picked)


def dura_regularizer(transformed, e_t, reg_coeff, c=1.0, hyperbolic=True):
    """reg * batch mean of |log0(transformed)|^2 + |log0(e_t)|^2."""
    if hyperbolic:
        transformed = ball.log0(transformed, c)
        e_t = ball.log0(e_t, c)
    per_row = ad.sqnorm(transformed, keepdims=False) + ad.sqnorm(e_t, keepdims=False)
    return reg_coeff * ad.mean(per_row)


def batch_loss(p: dict, config: TrainConfig, graph, batch):
    """Multiclass log-loss over all entities plus the DURA-style penalty."""
    batch = np.asarray(batch)
    ent = entity_points(p, config, graph)
    scores, q = score_queries(p, config, ent, batch[:, 0], batch[:, 1])
    loss = multiclass_log_loss(scores, batch[:, 2])
    if config.reg_coeff:
        e_t = ad.take(ent, batch[:, 2], axis=0)
        loss = loss + dura_regularizer(
            q, e_t, config.reg_coeff, curvature_of(p, config), config.space == "hyperbolic"
        )
    return loss


def graph_for(model: ModelParams, adjacency) -> EdgeList | None:
    if not model.config.use_gcn:
        return None
    return EdgeList.from_adjacency(adjacency, model.num_relations, model.config.self_loops)
