"""Mini-batch Adam training for the four model variants.

=====  ==========  ===========================  ==============
mode   scorer      negatives                    ranking cases
=====  ==========  ===========================  ==============
bpr    linear      unconditional                case 1
spl    linear      social (friend/foe-aware)    all six
dpl    tower       unconditional                case 1
sdpl   tower       social                       all six
=====  ==========  ===========================  ==============

``sdpl`` is normally fine-tuned from a ``dpl`` checkpoint.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .criteria import ContractError, CriterionContext, PartialRelation, relation_holds, sample_relations
from .data import SignedSocialGraph, observed_sets
from .mf import interaction_frequency
from .sampler import SOCIAL, UNCONDITIONAL, NegativePools, SamplerConfig, draw_negatives
from .tower import LinearScorer, TowerNetwork

_logger = logging.getLogger(__name__)

MODES = ("bpr", "dpl", "spl", "sdpl")
BPR_WEIGHTS = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
UNIFORM_WEIGHTS = (1.0,) * 6


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = "sdpl"
    batch_size: int = 512
    learning_rate: float = 1e-4
    lam: float = 1e-4
    epochs: int = 30
    pretrain_epochs: int = 30
    negatives_per_positive: int = 5
    h: int = 4
    train_embeddings: bool = False
    tie_item_branches: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 0
    check_relations: bool = True
    deterministic: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ConfigError("batch_size and negatives_per_positive must be >= 1")
        if self.learning_rate < 0 or self.lam < 0:
            raise ConfigError("learning_rate and lam must be >= 0")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")


@dataclass
class TrainReport:
    stage: str
    epoch_loss: list = field(default_factory=list)
    wall_time: float = 0.0
    skipped_users: int = 0
    fallback_steps: int = 0
    n_relations: int = 0
    diverged: bool = False
    checkpoint: str | None = None


@dataclass
class TrainingData:
    """Training-side view of a split: observed sets plus frequency biases."""

    observed: object
    user_freq: np.ndarray
    item_freq: np.ndarray

    @classmethod
    def from_split(cls, ds, split):
        fu, fi = interaction_frequency(ds, split)
        return cls(observed_sets(split, ds), fu, fi)

    @property
    def n_users(self):
        return self.observed.n_users


# ----------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# ----------------------------------------------------------------------
# the shared epoch loop


def _pick(rng, options):
    if not options:
        return None
    return options[rng.integers(len(options))]


def fit(net, data, graph, cfg, sampler_mode, case_weights, stage, epochs=None, validate=None):
    """Train ``net`` in place and return a :class:`TrainReport`.

    One epoch visits every training (user, positive) record once in shuffled
    order.  Each visit draws a friend and a foe uniformly (when the user has
    any), ``negatives_per_positive`` negatives without replacement, and then
    that many relations from the six cases with ``case_weights``.
    Relations accumulate into mini-batches of ``batch_size``.
    """
    epochs = cfg.epochs if epochs is None else epochs
    rng = rngs.stream(cfg.seed, "sampler")
    obs = data.observed
    if graph is None:
        graph = SignedSocialGraph.empty(obs.n_users)
    if sampler_mode == UNCONDITIONAL and not graph.is_empty():
        # unconstrained negatives can hit friend/foe items, breaking cases 1 and 4-6
        raise ConfigError("unconditional negatives cannot be combined with a social graph")
    pools = NegativePools(obs, graph, sampler_mode)
    scfg = SamplerConfig(cfg.negatives_per_positive, sampler_mode, cfg.seed)
    steps = np.concatenate([np.full(len(p), u) for u, p in enumerate(obs.positives)]).astype(np.int64)
    adam = AdamState()
    report = TrainReport(stage)
    start = time.perf_counter()
    best = (-np.inf, 0)
    last_good = net.copy()

    for epoch in range(epochs):
        order = rng.permutation(len(steps))
        bu, bi, bj = [], [], []
        total, count = 0.0, 0
        try:
            for u in steps[order]:
                u = int(u)
                neg = draw_negatives(u, 1, scfg, pools[u], rng)
                if len(neg) == 0:
                    report.skipped_users += 1
                    continue
                if pools.fallback[u]:
                    # unconstrained negatives may hit friend/foe items: no social cases
                    a = b = None
                    report.fallback_steps += 1
                else:
                    a = _pick(rng, graph.friends[u])
                    b = _pick(rng, graph.foes[u])
                ctx = CriterionContext.build(
                    u, obs.positives[u], neg,
                    None if a is None else obs.positives[a],
                    None if b is None else obs.positives[b], a, b,
                )
                drawn = sample_relations(ctx, case_weights, rng, cfg.negatives_per_positive)
                if drawn is None:
                    report.skipped_users += 1
                    continue
                cases, ii, jj = drawn
                if cfg.check_relations:
                    ctx.validate()
                    for r, i, j in zip(cases.tolist(), ii.tolist(), jj.tolist()):
                        rel = PartialRelation(u, i, j, r, a, b)
                        if not relation_holds(rel, ctx):
                            raise ContractError(f"relation {rel} violates its case predicate")
                bu.extend([u] * len(ii))
                bi.extend(ii.tolist())
                bj.extend(jj.tolist())
                while len(bu) >= cfg.batch_size:
                    n = cfg.batch_size
                    total += _step(net, bu[:n], bi[:n], bj[:n], cfg, adam)
                    count += n
                    del bu[:n], bi[:n], bj[:n]
            if bu:
                total += _step(net, bu, bi, bj, cfg, adam)
                count += len(bu)
        except FloatingPointError as exc:
            _logger.error("training diverged in epoch %d (%s); restoring last finite state", epoch, exc)
            net.params = last_good.params
            report.diverged = True
            break
        report.epoch_loss.append(total / max(count, 1))
        report.n_relations += count
        last_good = net.copy()
        if validate is not None and cfg.patience > 0:
            score = validate(net)
            if score > best[0]:
                best = (score, epoch)
            elif epoch - best[1] >= cfg.patience:
                break
    net.stage = stage
    report.wall_time = time.perf_counter() - start
    return report


def _step(net, bu, bi, bj, cfg, adam):
    loss, grads = net.loss_and_gradients(np.array(bu), np.array(bi), np.array(bj), cfg.lam)
    adam_step(net.params, grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return loss


# ----------------------------------------------------------------------
# model variants


def new_tower(data, emb, cfg):
    return TowerNetwork(emb.U, emb.V, cfg.h, rngs.stream_seed(cfg.seed, "init"),
                        data.user_freq, data.item_freq, cfg.train_embeddings,
                        tie_item_branches=cfg.tie_item_branches)


def new_linear(data, emb, cfg):
    return LinearScorer(emb.U, emb.V, rngs.stream_seed(cfg.seed, "init"),
                        data.user_freq, data.item_freq)


def _require_graph(graph):
    if graph is None:
        raise ConfigError("this mode needs trust/distrust graph files; use mode 'dpl' or 'bpr' without them")


def pretrain_dpl(data, emb, cfg, epochs=None):
    """Tower trained from random init on case 1 with unconditional negatives."""
    net = new_tower(data, emb, cfg)
    epochs = cfg.pretrain_epochs if epochs is None else epochs
    report = fit(net, data, None, cfg, UNCONDITIONAL, BPR_WEIGHTS, "pretrain", epochs)
    return net, report


def train_sdpl(data, graph, emb, cfg, init=None):
    """Fine-tune a tower with social negatives and all six cases.

    ``init`` is the pretrained (DPL) network; it is copied, not modified.
    Without it the tower starts from random weights.
    """
    _require_graph(graph)
    if init is None:
        net = new_tower(data, emb, cfg)
    else:
        if (init.d, init.n_users, init.n_items) != (emb.d, data.n_users, len(data.item_freq)):
            raise ConfigError("init checkpoint does not match the data dimensions")
        net = init.copy()
    report = fit(net, data, graph, cfg, SOCIAL, UNIFORM_WEIGHTS, "finetune")
    return net, report


def train_spl(data, graph, emb, cfg):
    """Linear scorer trained with social negatives and all six cases."""
    _require_graph(graph)
    net = new_linear(data, emb, cfg)
    return net, fit(net, data, graph, cfg, SOCIAL, UNIFORM_WEIGHTS, "spl")


def train_bpr(data, emb, cfg):
    """Linear scorer trained with unconditional negatives on case 1 only."""
    net = new_linear(data, emb, cfg)
    return net, fit(net, data, None, cfg, UNCONDITIONAL, BPR_WEIGHTS, "bpr")


def train_mode(mode, data, graph, emb, cfg, pretrained=None):
    """Train one variant; ``sdpl`` pretrains a ``dpl`` net first unless given one.

    Returns ``(net, [reports])``.
    """
    if mode == "bpr":
        net, rep = train_bpr(data, emb, cfg)
        return net, [rep]
    if mode == "spl":
        net, rep = train_spl(data, graph, emb, cfg)
        return net, [rep]
    if mode == "dpl":
        net, rep = pretrain_dpl(data, emb, cfg)
        return net, [rep]
    if mode == "sdpl":
        _require_graph(graph)
        reports = []
        if pretrained is None:
            pretrained, rep = pretrain_dpl(data, emb, cfg)
            reports.append(rep)
        net, rep = train_sdpl(data, graph, emb, cfg, init=pretrained)
        return net, reports + [rep]
    raise ConfigError(f"unknown mode {mode!r}")
