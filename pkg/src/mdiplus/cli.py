"""``mdiplus`` command-line interface.

Subcommands: ``fit``, ``importance``, ``stability``, ``simulate``. Each run
writes its outputs plus a manifest holding the fully resolved arguments;
``mdiplus replay MANIFEST`` re-runs it. Exit codes: 0 success, 2 bad
configuration, 3 bad data, 4 every stability candidate failed screening,
1 anything else.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from mdiplus import __version__
from mdiplus._backend import BACKEND
from mdiplus.data import SeededRng, load_csv, normalize_task
from mdiplus.exceptions import ConfigError, DataError, ExperimentError, MdiPlusError, ScreeningError
from mdiplus.forest import Forest, ForestParams, fit_forest
from mdiplus.importance import METHODS, MdiPlusConfig, compute
from mdiplus.metrics import r_squared
from mdiplus.pcs import (
    DEFAULT_B, DEFAULT_PERSISTENCE, ensemble_rank, load_candidates, screen, selection_summary,
    stability_select,
)
from mdiplus.simulate import PRESETS, load_config, preset, run_experiment, with_overrides

MANIFEST_SCHEMA_VERSION = 1
THREADS_ENV = "MDIPLUS_THREADS"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_SCREEN = 0, 1, 2, 3, 4
_PATH_ARGS = ("data", "test", "model", "out", "metrics", "train", "candidates", "ensemble", "config",
              "summary", "out_dir")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _threads(value) -> int:
    if value in (None, "auto"):
        env = os.environ.get(THREADS_ENV)
        if env and env != "auto":
            return _threads(env)
        return max(1, os.cpu_count() or 1)
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"--threads must be a positive integer or 'auto', got {value!r}") from None
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    return n


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _metrics_dict(task, y, pred):
    if task == "binary-classification":
        return {"accuracy": float(np.mean((pred > 0.5) == (y > 0.5))),
                "brier": float(np.mean((pred - y) ** 2))}
    out = {"mse": float(np.mean((y - pred) ** 2))}
    if np.ptp(y) > 0:
        out["r2"] = r_squared(y, pred)
    return out


def _forest_params(args, task) -> ForestParams:
    mf = args.max_features
    if mf is not None and mf not in ("auto", "third", "sqrt", "all"):
        try:
            mf = int(mf)
        except ValueError:
            raise ConfigError(f"--max-features must be a count or auto/third/sqrt/all, got {mf!r}") from None
    return ForestParams.for_task(task, n_trees=args.n_trees, max_features=mf,
                                 min_samples_leaf=args.min_samples_leaf, max_depth=args.max_depth)


def _forest_dict(params: ForestParams) -> dict:
    return {"n_trees": params.n_trees, "max_features": params.max_features,
            "min_samples_leaf": params.min_samples_leaf, "max_depth": params.max_depth}


# ------------------------------------------------------------------ commands


def cmd_fit(args) -> dict:
    task = normalize_task(args.task)
    train = load_csv(args.data, args.response, task)
    params = _forest_params(args, task)
    params.validate(train.p, task)
    forest = fit_forest(train, params, SeededRng(args.seed), threads=args.threads)
    forest.save(args.out)
    metrics = {"schema_version": 1, "kind": "fit-metrics", "task": task,
               "train": _metrics_dict(task, train.y, forest.predict(train.X))}
    if args.test:
        test = load_csv(args.test, args.response, task)
        if test.column_names != train.column_names:
            raise DataError(f"{args.test}: feature columns differ from {args.data}")
        metrics["test"] = _metrics_dict(task, test.y, forest.predict(test.X))
    if args.metrics:
        _dump_json(metrics, args.metrics)
    args.resolved_forest = _forest_dict(params)
    return {"outputs": [args.out] + ([args.metrics] if args.metrics else [])}


def _mdi_plus_config(args, task) -> MdiPlusConfig:
    glm = args.glm or ("logistic-l2" if task == "binary-classification" else "ridge")
    cfg = MdiPlusConfig.from_options(glm, args.metric, not args.no_raw, not args.no_loo)
    cfg.validate(task)
    return cfg


def _load_for_model(path, response, forest: Forest):
    data = load_csv(path, response, forest.task)
    if forest.column_names and data.column_names != tuple(forest.column_names):
        raise DataError(f"{path}: feature columns {list(data.column_names)} differ from the model's "
                        f"{list(forest.column_names)}")
    return data


def cmd_importance(args) -> dict:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"--methods: unknown method {m!r}; expected a subset of {list(METHODS)}")
    forest = Forest.load(args.model)
    cfg = _mdi_plus_config(args, forest.task) if "mdi-plus" in methods else None
    data = _load_for_model(args.data, args.response, forest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, m in enumerate(methods):
        rep = compute(m, forest, data, cfg, SeededRng(args.seed).child(i), args.threads)
        stem = out_dir / m
        Path(f"{stem}.csv").write_text(rep.to_csv(), encoding="utf-8")
        Path(f"{stem}.json").write_text(rep.to_json(), encoding="utf-8")
        outputs += [f"{stem}.csv", f"{stem}.json"]
    if cfg is not None:
        args.resolved_mdi_plus = cfg.to_dict()
    return {"outputs": outputs}


def cmd_stability(args) -> dict:
    cands = load_candidates(args.candidates)
    if args.model:
        forest = Forest.load(args.model)
        task = forest.task
        train = _load_for_model(args.train, args.response, forest)
    else:
        task = normalize_task(args.task)
        train = load_csv(args.train, args.response, task)
        params = _forest_params(args, task)
        params.validate(train.p, task)
        forest = fit_forest(train, params, SeededRng(args.seed), threads=args.threads)
        args.resolved_forest = _forest_dict(params)
    test = load_csv(args.test, args.response, task)
    if test.column_names != train.column_names:
        raise DataError(f"{args.test}: feature columns differ from {args.train}")
    for c in cands:
        c.config().validate(task)
    res = screen(cands, train, test, forest, threads=args.threads)
    pool, fallback = res.screened, False
    if not pool:
        if not args.fallback:
            perf = ", ".join(f"{k}={v:.6g}" for k, v in res.performance.items())
            raise ScreeningError(
                f"no candidate reaches the forest's test performance {res.baseline:.6g} ({perf}); "
                "add candidates, or pass --fallback to select among all of them")
        pool, fallback = list(cands), True
    stab = stability_select(pool, forest, train, args.B, args.persistence, SeededRng(args.seed).child(1),
                            args.threads)
    summary = selection_summary(res, cands, stab, task, fallback)
    _dump_json(summary, args.out)
    outputs = [args.out]
    if args.ensemble:
        ens = ensemble_rank([stab.reports[c.id] for c in pool])
        Path(args.ensemble).write_text(ens.to_csv(), encoding="utf-8")
        outputs.append(args.ensemble)
    return {"outputs": outputs}


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip(), parsed


def cmd_simulate(args) -> dict:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset and --config")
    overrides = dict(_parse_override(s) for s in args.set or [])
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.preset:
        cfg = preset(args.preset, **overrides)
    else:
        cfg = with_overrides(load_config(args.config), overrides)
    try:
        result = run_experiment(cfg, threads=args.threads)
    except ExperimentError as exc:
        cause = exc.__cause__
        if isinstance(cause, ConfigError):
            raise ConfigError(str(exc)) from exc
        raise
    Path(args.out).write_text(result.to_csv(), encoding="utf-8")
    outputs = [args.out]
    summary = args.summary or str(Path(args.out).with_suffix("")) + ".summary.csv"
    Path(summary).write_text(result.summary_csv(), encoding="utf-8")
    outputs.append(summary)
    args.summary = summary
    args.resolved_experiment = cfg.to_dict()
    return {"outputs": outputs}


COMMANDS = {"fit": cmd_fit, "importance": cmd_importance, "stability": cmd_stability, "simulate": cmd_simulate}


# -------------------------------------------------------------------- parser


def _add_forest_flags(p):
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-features", default=None, help="count or auto/third/sqrt/all (default: task rule)")
    p.add_argument("--min-samples-leaf", type=int, default=None, help="default 5 (regression) or 1 (binary)")
    p.add_argument("--max-depth", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", default=None,
                        help=f"worker threads or 'auto' (default: ${THREADS_ENV}, else all cores)")
    common.add_argument("--manifest", default=None, help="manifest path (default: next to the main output)")

    parser = _Parser(prog="mdiplus", description="Random-forest feature importance with MDI+.")
    parser.add_argument("--version", action="version", version=f"mdiplus {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="train a forest")
    p.add_argument("--data", required=True)
    p.add_argument("--response", default="y")
    p.add_argument("--task", default="regression", help="regression or binary")
    p.add_argument("--test", default=None)
    p.add_argument("--out", required=True, help="forest JSON")
    p.add_argument("--metrics", default=None, help="metrics JSON")
    p.add_argument("--seed", type=int, default=0)
    _add_forest_flags(p)

    p = sub.add_parser("importance", parents=[common], help="feature importances of a fitted forest")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--response", default="y")
    p.add_argument("--methods", default="mdi-plus", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--glm", default=None, help="ols, ridge, logistic or huber (default: task default)")
    p.add_argument("--metric", default=None, help="r2, r2-unnormalized, neg-log-loss or neg-huber")
    p.add_argument("--no-raw", action="store_true", help="do not append raw features")
    p.add_argument("--no-loo", action="store_true", help="score in-bag fits without leave-one-out")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stability", parents=[common], help="screen and select MDI+ candidates")
    p.add_argument("--candidates", required=True, help="JSON list of candidate models")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--response", default="y")
    p.add_argument("--task", default="regression")
    p.add_argument("--model", default=None, help="forest JSON fitted on --train (default: fit one)")
    p.add_argument("--B", type=int, default=DEFAULT_B)
    p.add_argument("--persistence", type=float, default=DEFAULT_PERSISTENCE)
    p.add_argument("--fallback", action="store_true", help="select among all candidates if none pass screening")
    p.add_argument("--ensemble", default=None, help="write the median-rank ensemble CSV here")
    p.add_argument("--out", required=True, help="selection JSON")
    p.add_argument("--seed", type=int, default=0)
    _add_forest_flags(p)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation experiment")
    p.add_argument("--preset", default=None, choices=sorted(PRESETS))
    p.add_argument("--config", default=None, help="experiment JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. covariates.rho=0.5 (repeatable)")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="per-replicate CSV")
    p.add_argument("--summary", default=None, help="summary CSV (default: <out>.summary.csv)")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--threads", default=None, help="override the recorded thread count")
    return parser


# ------------------------------------------------------------------ manifest


def _resolve_paths(args):
    for name in _PATH_ARGS:
        v = getattr(args, name, None)
        if isinstance(v, str) and v:
            setattr(args, name, str(Path(v).resolve()))


def _write_manifest(args, info):
    record = {k: v for k, v in vars(args).items() if not k.startswith("resolved_") and k != "manifest"}
    resolved = {k[len("resolved_"):]: v for k, v in vars(args).items() if k.startswith("resolved_")}
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "kind": "manifest",
        "command": args.command,
        "args": record,
        "resolved": resolved,
        "outputs": info["outputs"],
        "package_version": __version__,
    }
    path = args.manifest or str(Path(info["outputs"][0]).with_suffix("")) + ".manifest.json"
    if args.command == "importance" and not args.manifest:
        path = str(Path(args.out_dir) / "manifest.json")
    _dump_json(manifest, path)
    return path


def _replay_args(path, threads):
    try:
        m = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if m.get("kind") != "manifest" or m.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ConfigError(f"{path}: not a version-{MANIFEST_SCHEMA_VERSION} manifest")
    if m.get("command") not in COMMANDS:
        raise ConfigError(f"{path}: unknown command {m.get('command')!r}")
    args = argparse.Namespace(**m["args"])
    args.manifest = str(Path(path).resolve())
    if threads is not None:
        args.threads = _threads(threads)
    return args


def run(args) -> int:
    if args.command == "replay":
        args = _replay_args(args.manifest, args.threads)
    else:
        args.threads = _threads(args.threads)
        _resolve_paths(args)
        if args.manifest:
            args.manifest = str(Path(args.manifest).resolve())
    info = COMMANDS[args.command](args)
    _write_manifest(args, info)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ScreeningError as exc:
        print(f"mdiplus: {exc}", file=sys.stderr)
        return EXIT_SCREEN
    except ConfigError as exc:
        print(f"mdiplus: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"mdiplus: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"mdiplus: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.__cause__, DataError) else EXIT_FAIL
    except MdiPlusError as exc:
        print(f"mdiplus: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
