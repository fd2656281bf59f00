"""Adagrad training with early stopping on validation MRR."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ball
from .data import TripleStore, build_adjacency
from .diff import tape as ad
from .model import ModelParams, TrainConfig, batch_loss, bind, entity_points, graph_for, init_model

log = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10


@dataclass
class OptimizerState:
    accumulators: dict = field(default_factory=dict)
    skipped: int = 0


def adagrad_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """In-place update p <- p - lr g / (sqrt(acc) + eps) after acc <- acc + g^2.

    Arrays whose gradient has a non-finite entry are left untouched and
    counted in ``state.skipped``.
    """
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            log.warning("non-finite gradient for %s; step skipped", name)
            continue
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc += g * g
        p -= lr * g / (np.sqrt(acc) + ADAGRAD_EPS)


def loss_and_grads(model: ModelParams, graph, batch):
    tape = ad.Tape()
    p = bind(model, tape)
    loss = batch_loss(p, model.config, graph, batch)
    grads = ad.backward(tape, loss, leaves=list(p.values()))
    return float(ad.value(loss)), {k: grads[v] for k, v in p.items()}


def train_epoch(model: ModelParams, train, graph, state: OptimizerState, rng) -> float:
    """One seeded-shuffle pass over ``train``; returns the mean batch loss."""
    cfg = model.config
    order = rng.permutation(len(train))
    losses = []
    for start in range(0, len(order), cfg.batch_size):
        batch = train[order[start : start + cfg.batch_size]]
        loss, grads = loss_and_grads(model, graph, batch)
        adagrad_step(model.arrays, grads, state, cfg.learning_rate)
        losses.append(loss)
    return float(np.mean(losses))


def check_in_ball(model: ModelParams, graph) -> bool:
    if model.config.space != "hyperbolic":
        return True
    return bool(ball.is_in_ball(entity_points(bind(model), model.config, graph), model.curvature))


@dataclass
class FitResult:
    model: ModelParams
    best_epoch: int
    best_valid_mrr: float
    history: list


def fit(store: TripleStore, config: TrainConfig, metrics_path=None, verify_ball=False, on_epoch=None) -> FitResult:
    """Train on a reciprocal-augmented store, keeping the best-validation model.

    Validation MRR is checked every ``eval_every`` epochs; training stops after
    ``patience`` checks without improvement.  Without a validation split the
    final model is returned.
    """
    from .evaluate import evaluate_split

    if not store.reciprocal:
        raise ValueError("fit expects a reciprocal-augmented store")
    model = init_model(config, store.num_entities, store.num_relations, store.vocab_hash())
    adjacency = build_adjacency(store)
    graph = graph_for(model, adjacency)
    train = store.split("train")
    rng = np.random.default_rng(config.seed)
    state = OptimizerState()
    has_valid = len(store.split("valid")) > 0

    best = (model.copy(), 0, -math.inf)
    bad_checks = 0
    history = []
    t0 = time.perf_counter()
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            loss = train_epoch(model, train, graph, state, rng)
            if verify_ball and not check_in_ball(model, graph):
                raise AssertionError(f"embedding left the ball at epoch {epoch}")
            row = {"epoch": epoch, "loss": loss, "valid_mrr": None}
            if has_valid and (epoch % config.eval_every == 0 or epoch == config.max_epochs):
                mrr = evaluate_split(model, store, "valid", adjacency=adjacency).mrr
                row["valid_mrr"] = mrr
                if mrr > best[2]:
                    best = (model.copy(), epoch, mrr)
                    bad_checks = 0
                else:
                    bad_checks += 1
            row["wall_time"] = time.perf_counter() - t0
            history.append(row)
            if sink:
                sink.write(json.dumps(row) + "\n")
                sink.flush()
            if on_epoch:
                on_epoch(row)
            if has_valid and bad_checks >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best[1])
                break
    finally:
        if sink:
            sink.close()
    if not has_valid:
        return FitResult(model, history[-1]["epoch"] if history else 0, float("nan"), history)
    return FitResult(best[0], best[1], best[2], history)
