"""Command-line entry point.

Subcommands::

    socialrank ingest    --ratings r.tsv [--trust t.tsv] [--distrust d.tsv] --out DIR
    socialrank synth     --users 200 --items 500 --out DIR
    socialrank pipeline  --data DIR --modes bpr,dpl,spl,sdpl --ratios 0.7 --out RUN
    socialrank recommend --data DIR --checkpoint RUN/checkpoints/sdpl_r0.7_rep0.npz --user 17

A data directory holds ``dataset.txt`` (the line-oriented dataset cache),
optional ``trust.tsv`` / ``distrust.tsv`` edge files in external ids, and a
``manifest.txt``.  Pipeline settings come from built-in defaults, then an
optional ``--config`` file of ``key = value`` lines, then command-line
flags.  A run manifest is itself a valid config file, so
``socialrank pipeline --config RUN/manifest.txt`` repeats a run.

Exit codes: 0 success, 1 internal failure, 2 user or input error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from . import rng as rngs
from .data import (
    DataError,
    IMPLICIT,
    ingest_interactions,
    ingest_signed_graph,
    load_cache,
    save_cache,
    write_edges,
)
from .evaluate import EvalConfig, EvalReport
from .experiment import ALL_MODES, run_repeat
from .mf import MFConfig
from .synth import SynthConfig, generate
from .tower import load_checkpoint
from .train import ConfigError, TrainConfig

_logger = logging.getLogger("socialrank")

DATASET_FILE = "dataset.txt"
TRUST_FILE = "trust.tsv"
DISTRUST_FILE = "distrust.tsv"
MANIFEST_FILE = "manifest.txt"
SOCIAL_MODES = ("spl", "sdpl", "sdpl-noinit")


class UsageError(Exception):
    """Bad input from the user; reported with exit code 2."""


# ----------------------------------------------------------------------
# value parsing


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str_list(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _float_list(text):
    return tuple(float(t) for t in _str_list(text))


def _int_list(text):
    return tuple(int(t) for t in _str_list(text))


def _render(value):
    if isinstance(value, (tuple, list)):
        return ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# pipeline settings: key -> (parser, default, target).  Targets name the
# config object that receives the value ("mf.max_iters" etc.); None means
# the key is used by the pipeline itself.
_mf, _tr, _ev = MFConfig(), TrainConfig(), EvalConfig()
PIPELINE_KEYS = {
    "data": (str, None, None),
    "out": (str, "run", None),
    "modes": (_str_list, ("sdpl",), None),
    "ratios": (_float_list, (0.7,), None),
    "repeats": (int, 1, None),
    "seed": (int, 0, None),
    "stratified": (_bool, False, None),
    "deterministic": (_bool, True, None),
    "threads": (int, 1, None),
    "d": (int, _mf.d, "mf.d"),
    "mf_iters": (int, _mf.max_iters, "mf.max_iters"),
    "mf_tol": (float, _mf.tol, "mf.tol"),
    "mf_alpha": (float, _mf.alpha, "mf.alpha"),
    "mf_reg": (float, _mf.reg, "mf.reg"),
    "h": (int, _tr.h, "train.h"),
    "epochs": (int, _tr.epochs, "train.epochs"),
    "pretrain_epochs": (int, _tr.pretrain_epochs, "train.pretrain_epochs"),
    "batch_size": (int, _tr.batch_size, "train.batch_size"),
    "learning_rate": (float, _tr.learning_rate, "train.learning_rate"),
    "lam": (float, _tr.lam, "train.lam"),
    "negatives_per_positive": (int, _tr.negatives_per_positive, "train.negatives_per_positive"),
    "train_embeddings": (_bool, _tr.train_embeddings, "train.train_embeddings"),
    "tie_item_branches": (_bool, _tr.tie_item_branches, "train.tie_item_branches"),
    "beta1": (float, _tr.beta1, "train.beta1"),
    "beta2": (float, _tr.beta2, "train.beta2"),
    "eps": (float, _tr.eps, "train.eps"),
    "ks": (_int_list, _ev.ks, "eval.ks"),
    "cold_start_threshold": (int, _ev.cold_start_threshold, "eval.cold_start_threshold"),
}
del _mf, _tr, _ev


def read_config(path):
    """Parse a ``key = value`` file.  Lines before any ``[section]`` header
    and lines in a ``[config]`` section count; other sections are ignored."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = path.read_text(encoding="utf-8")
    has_section = any(line.strip() == "[config]" for line in text.splitlines())
    try:
        parser.read_string(text if has_section else "[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    return dict(parser["config"]) if parser.has_section("config") else {}


def resolve_settings(config_file, overrides):
    """Defaults, then the config file, then flag overrides; values parsed."""
    raw = {}
    if config_file:
        raw.update(read_config(config_file))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(raw) - set(PIPELINE_KEYS))
    if unknown:
        raise UsageError(f"unknown setting(s): {', '.join(unknown)}")
    settings = {}
    for key, (parse, default, _) in PIPELINE_KEYS.items():
        if key in raw:
            try:
                settings[key] = parse(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
        else:
            settings[key] = default
    return settings


def build_configs(settings):
    groups = {"mf": {}, "train": {}, "eval": {}}
    for key, (_, _, target) in PIPELINE_KEYS.items():
        if target:
            group, name = target.split(".")
            groups[group][name] = settings[key]
    try:
        mf = MFConfig(**groups["mf"])
        train = TrainConfig(**groups["train"], seed=settings["seed"],
                            deterministic=settings["deterministic"])
        ev = EvalConfig(**groups["eval"], repeats=settings["repeats"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return mf, train, ev


# ----------------------------------------------------------------------
# manifest


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest:
    """Line-oriented record of a command: config, seeds, input digests,
    stage timestamps and produced artifacts (an INI-style text file)."""

    SECTIONS = ("run", "config", "seeds", "inputs", "stages", "artifacts")

    def __init__(self, command):
        self.sections = {s: {} for s in self.SECTIONS}
        self.sections["run"].update({
            "command": command,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "started": _now(),
            "status": "running",
        })

    def __getitem__(self, section):
        return self.sections[section]

    def add_input(self, path):
        self.sections["inputs"][str(path)] = file_digest(path)

    def add_artifact(self, name, path):
        self.sections["artifacts"][name] = str(path)

    def write(self, path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name, values in self.sections.items():
            parser[name] = {k: _render(v) for k, v in values.items()}
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)

    @staticmethod
    def read(path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read(path, encoding="utf-8")
        return {s: dict(parser[s]) for s in parser.sections()}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ----------------------------------------------------------------------
# data directories


def save_data_dir(out, ds, graph, manifest):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_cache(out / DATASET_FILE, ds)
    manifest.add_artifact("dataset", out / DATASET_FILE)
    if graph is not None:
        write_edges(graph, out / TRUST_FILE, out / DISTRUST_FILE, ds.user_ids)
        manifest.add_artifact("trust", out / TRUST_FILE)
        manifest.add_artifact("distrust", out / DISTRUST_FILE)


def load_data_dir(path):
    """Returns ``(dataset, graph_or_None, files_read)``."""
    path = Path(path)
    cache = path / DATASET_FILE
    if not cache.is_file():
        raise FileNotFoundError(f"no dataset cache at {cache}; run 'ingest' or 'synth' first")
    ds, _ = load_cache(cache)
    files = [cache]
    trust, distrust = path / TRUST_FILE, path / DISTRUST_FILE
    graph = None
    if trust.is_file() or distrust.is_file():
        t = trust if trust.is_file() else None
        d = distrust if distrust.is_file() else None
        graph = ingest_signed_graph(t, d, ds.n_users, ds.user_ids)
        files += [f for f in (t, d) if f is not None]
    return ds, graph, files


# ----------------------------------------------------------------------
# commands


def cmd_ingest(args):
    for p in (args.ratings, args.trust, args.distrust):
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
    manifest = RunManifest("ingest")
    ds = ingest_interactions(args.ratings, args.kind)
    manifest.add_input(args.ratings)
    graph = None
    if args.trust or args.distrust:
        graph = ingest_signed_graph(args.trust, args.distrust, ds.n_users, ds.user_ids)
        for p in (args.trust, args.distrust):
            if p:
                manifest.add_input(p)
        manifest["run"]["dropped_edges"] = graph.dropped_edges
    manifest["config"].update({"kind": args.kind, "n_users": ds.n_users,
                               "n_items": ds.n_items, "interactions": len(ds)})
    save_data_dir(args.out, ds, graph, manifest)
    _finish(manifest, Path(args.out))
    edges = graph.n_edges if graph else (0, 0)
    print(f"ingested {len(ds)} interactions ({ds.n_users} users, {ds.n_items} items), "
          f"{edges[0]} trust and {edges[1]} distrust edges -> {args.out}")
    return 0


def cmd_synth(args):
    try:
        cfg = SynthConfig(
            n_users=args.users, n_items=args.items, n_clusters=args.clusters,
            density=args.density, avg_friends=args.friends, avg_foes=args.foes,
            purity=args.purity, circle_size=args.circle_size,
            circle_affinity=args.circle_affinity, friend_circle_share=args.friend_circle_share,
            kind=args.kind, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = RunManifest("synth")
    manifest["config"].update(cfg.as_dict())
    manifest["seeds"]["root"] = cfg.seed
    planted = generate(cfg)
    out = Path(args.out)
    save_data_dir(out, planted.dataset, planted.graph, manifest)
    with open(out / "clusters.tsv", "w", encoding="utf-8") as fh:
        fh.write("kind\tid\tcluster\tcircle\n")
        for u, (c, k) in enumerate(zip(planted.user_cluster, planted.user_circle)):
            fh.write(f"user\t{u}\t{c}\t{k}\n")
        for i, c in enumerate(planted.item_cluster):
            fh.write(f"item\t{i}\t{c}\t-\n")
    manifest.add_artifact("clusters", out / "clusters.tsv")
    _finish(manifest, out)
    ds, g = planted.dataset, planted.graph
    print(f"generated {len(ds)} interactions ({ds.n_users} users, {ds.n_items} items), "
          f"{g.n_edges[0]} trust and {g.n_edges[1]} distrust edges -> {out}")
    return 0


def _pipeline_overrides(args):
    keys = [k for k in PIPELINE_KEYS if hasattr(args, k)]
    out = {k: getattr(args, k) for k in keys}
    if getattr(args, "mode", None):
        out["modes"] = args.mode
    if getattr(args, "ratio", None):
        out["ratios"] = args.ratio
    return out


def cmd_pipeline(args):
    settings = resolve_settings(args.config, _pipeline_overrides(args))
    if not settings["data"]:
        raise UsageError("no data directory given (--data or 'data = ...' in the config)")
    modes = settings["modes"]
    bad = [m for m in modes if m not in ALL_MODES]
    if bad:
        raise UsageError(f"unknown mode(s) {bad}; expected some of {', '.join(ALL_MODES)}")
    mf_cfg, train_cfg, eval_cfg = build_configs(settings)
    ds, graph, files = load_data_dir(settings["data"])
    if graph is None and any(m in SOCIAL_MODES for m in modes):
        raise ConfigError(f"mode(s) {[m for m in modes if m in SOCIAL_MODES]} need trust/distrust "
                          "graph files in the data directory; use --modes dpl or bpr without them")

    out = Path(settings["out"])
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("pipeline")
    manifest["config"].update(settings)
    manifest["seeds"]["root"] = settings["seed"]
    for f in files:
        manifest.add_input(f)
    report = EvalReport()
    runs_path = out / "runs.csv"
    manifest.add_artifact("runs", runs_path)
    with open(runs_path, "w", encoding="utf-8") as fh:
        fh.write("model,split_ratio,repeat,seed,slice,metric,k,value\n")
    try:
        with threadpool_limits(limits=settings["threads"]):
            for ratio in settings["ratios"]:
                for r in range(settings["repeats"]):
                    seed = rngs.stream_seed(settings["seed"], f"repeat/{r}")
                    tag = f"r{ratio:g}_rep{r}"
                    manifest["seeds"][tag] = seed
                    for stream in ("split", "mf", "init", "sampler"):
                        manifest["seeds"][f"{tag}.{stream}"] = (
                            seed if stream == "sampler" else rngs.stream_seed(seed, stream))
                    stages = {}
                    try:
                        results, nets = run_repeat(ds, graph, ratio, seed, modes, mf_cfg,
                                                   train_cfg, eval_cfg, stages,
                                                   settings["stratified"])
                    finally:
                        for name, (start, secs) in stages.items():
                            manifest["stages"][f"{tag}.{name}"] = f"{start} ({secs:.2f}s)"
                    for mode in modes:
                        ck = out / "checkpoints" / f"{mode}_{tag}.npz"
                        nets[mode].save(ck)
                        manifest.add_artifact(f"checkpoint.{mode}_{tag}", ck)
                        report.add(mode, ratio, results[mode])
                    _append_runs(runs_path, results, ratio, r, seed)
                    _logger.info("ratio %g repeat %d done", ratio, r)
        text = "all users\n" + report.table("all") + "\ncold-start users\n" + report.table("cold")
        (out / "report.txt").write_text(text, encoding="utf-8")
        (out / "report.csv").write_text(report.records(), encoding="utf-8")
        manifest.add_artifact("report_table", out / "report.txt")
        manifest.add_artifact("report_records", out / "report.csv")
        print(text, end="")
    except BaseException:
        manifest["run"]["status"] = "failed"
        manifest["run"]["finished"] = _now()
        manifest.write(out / MANIFEST_FILE)
        raise
    _finish(manifest, out)
    return 0


def _append_runs(path, results, ratio, repeat, seed):
    with open(path, "a", encoding="utf-8") as fh:
        for mode, res in results.items():
            for (sl, metric, k), value in sorted(res.items()):
                if metric != "users":
                    fh.write(f"{mode},{ratio:g},{repeat},{seed},{sl},{metric},{k},{value:.6f}\n")


def cmd_recommend(args):
    ds, _, _ = load_data_dir(args.data)
    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    net = load_checkpoint(args.checkpoint)
    if (net.n_users, net.n_items) != (ds.n_users, ds.n_items):
        raise UsageError(f"checkpoint has {net.n_users} users x {net.n_items} items but the "
                         f"dataset has {ds.n_users} x {ds.n_items}")
    if args.k < 1:
        raise UsageError("k must be >= 1")
    try:
        u = ds.user_index(args.user)
    except KeyError:
        raise UsageError(f"unknown user id {args.user!r}") from None
    seen = set(ds.items[ds.users == u].tolist())
    candidates = np.array([i for i in range(ds.n_items) if i not in seen], dtype=np.int64)
    if len(candidates) == 0:
        _logger.warning("user %s has interacted with every item; nothing to recommend", args.user)
        return 0
    items, probs = net.score_all_items(u, candidates)
    for item, p in zip(items[: args.k], probs[: args.k]):
        print(f"{ds.item_ids[item]}\t{p:.6f}")
    return 0


def _finish(manifest, out):
    manifest["run"]["status"] = "ok"
    manifest["run"]["finished"] = _now()
    out.mkdir(parents=True, exist_ok=True)
    manifest.write(out / MANIFEST_FILE)


# ----------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="socialrank", description="Trust/distrust-aware top-k recommendation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load tab-separated ratings and trust/distrust edges")
    p.add_argument("--ratings", required=True, help="user<TAB>item<TAB>value file")
    p.add_argument("--trust", help="user<TAB>user trust edges")
    p.add_argument("--distrust", help="user<TAB>user distrust edges")
    p.add_argument("--kind", choices=("explicit", "implicit"), default="explicit")
    p.add_argument("--out", required=True, help="output data directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a planted friend/foe dataset")
    d = SynthConfig()
    p.add_argument("--users", type=int, default=d.n_users)
    p.add_argument("--items", type=int, default=d.n_items)
    p.add_argument("--clusters", type=int, default=d.n_clusters)
    p.add_argument("--density", type=float, default=d.density)
    p.add_argument("--friends", type=float, default=d.avg_friends, help="mean friends per user")
    p.add_argument("--foes", type=float, default=d.avg_foes, help="mean foes per user")
    p.add_argument("--purity", type=float, default=d.purity)
    p.add_argument("--circle-size", type=int, default=d.circle_size)
    p.add_argument("--circle-affinity", type=float, default=d.circle_affinity)
    p.add_argument("--friend-circle-share", type=float, default=d.friend_circle_share)
    p.add_argument("--kind", choices=("explicit", "implicit"), default=IMPLICIT)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True, help="output data directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="factorize, train, evaluate and write reports",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config", default=None, help="key = value settings file (or a run manifest)")
    p.add_argument("--mode", help="single mode; alias of --modes")
    p.add_argument("--ratio", help="single split ratio; alias of --ratios")
    flags = {
        "modes": "comma-separated subset of " + ",".join(ALL_MODES),
        "ratios": "comma-separated training ratios, e.g. 0.5,0.7,0.9",
        "threads": "cap on BLAS worker threads",
        "deterministic": "bitwise-reproducible training (the only mode implemented)",
    }
    for key in PIPELINE_KEYS:
        flag = "--" + key.replace("_", "-")
        parse, default = PIPELINE_KEYS[key][:2]
        if parse is _bool:
            p.add_argument(flag, dest=key, nargs="?", const="true", metavar="BOOL",
                           help=flags.get(key, f"default {_render(default)}"))
        else:
            p.add_argument(flag, dest=key, help=flags.get(key, f"default {_render(default)}"))
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("recommend", help="print the top-k items for one user")
    p.add_argument("--data", required=True, help="data directory of the checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--user", required=True, help="external user id")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        _logger.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
