"""Multi-seed, multi-ratio comparison runs."""
from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import replace
from datetime import datetime, timezone

from . import rng as rngs
from .data import split_ratings
from .evaluate import EvalConfig, EvalReport, evaluate_model
from .mf import MFConfig, factorize
from .train import TrainConfig, TrainingData, pretrain_dpl, train_bpr, train_sdpl, train_spl

_logger = logging.getLogger(__name__)

# "sdpl-noinit" is SDPL fine-tuning started from random weights instead of DPL
ALL_MODES = ("bpr", "dpl", "spl", "sdpl", "sdpl-noinit")


@contextmanager
def _timed(stages, name):
    # records (UTC start time, seconds) per stage when a dict is supplied
    start, t0 = datetime.now(timezone.utc), time.perf_counter()
    yield
    if stages is not None:
        stages[name] = (start.isoformat(timespec="seconds"), time.perf_counter() - t0)


def run_repeat(ds, graph, ratio, seed, modes, mf_cfg, train_cfg, eval_cfg=None, stages=None,
               stratified=False):
    """One split/seed: factorize, train every requested mode, evaluate.

    Returns ``(results, nets)`` keyed by mode.  The DPL network doubles as
    the SDPL initialization, so requesting both costs one pretraining run.
    """
    eval_cfg = eval_cfg or EvalConfig()
    unknown = set(modes) - set(ALL_MODES)
    if unknown:
        raise ValueError(f"unknown mode(s) {sorted(unknown)}; expected {ALL_MODES}")
    with _timed(stages, "split"):
        split = split_ratings(ds, ratio, rngs.stream_seed(seed, "split"), stratified)
        data = TrainingData.from_split(ds, split)
    with _timed(stages, "mf"):
        emb = factorize(ds, replace(mf_cfg, seed=rngs.stream_seed(seed, "mf")), split)
    cfg = replace(train_cfg, seed=seed)
    nets = {}
    for mode in modes:
        if mode in nets:
            continue
        with _timed(stages, f"train.{mode}"):
            if mode == "bpr":
                nets[mode], _ = train_bpr(data, emb, cfg)
            elif mode == "spl":
                nets[mode], _ = train_spl(data, graph, emb, cfg)
            elif mode == "dpl":
                nets[mode], _ = pretrain_dpl(data, emb, cfg)
            elif mode == "sdpl":
                if "dpl" not in nets:
                    nets["dpl"], _ = pretrain_dpl(data, emb, cfg)
                nets[mode], _ = train_sdpl(data, graph, emb, cfg, init=nets["dpl"])
            else:
                nets[mode], _ = train_sdpl(data, graph, emb, cfg, init=None)
    with _timed(stages, "evaluate"):
        results = {m: evaluate_model(nets[m], ds, split, eval_cfg, data.observed) for m in modes}
    return results, nets


def run_experiment(ds, graph, modes, ratios=(0.7,), repeats=5, mf_cfg=None, train_cfg=None,
                   eval_cfg=None, seed=0):
    """Average every mode over ``repeats`` independent split+training seeds."""
    mf_cfg = mf_cfg or MFConfig()
    train_cfg = train_cfg or TrainConfig()
    eval_cfg = eval_cfg or EvalConfig(repeats=repeats)
    report = EvalReport()
    for ratio in ratios:
        for r in range(repeats):
            run_seed = rngs.stream_seed(seed, f"repeat/{r}")
            results, _ = run_repeat(ds, graph, ratio, run_seed, modes, mf_cfg, train_cfg, eval_cfg)
            for mode, res in results.items():
                report.add(mode, ratio, res)
            _logger.info("ratio %.2f repeat %d done", ratio, r)
    return report
