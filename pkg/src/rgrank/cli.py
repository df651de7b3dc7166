"""Command-line orchestration: prep, train, eval, verify, curve, grid.

Configuration is a flat ``key=value`` text file; every key can be
overridden by a same-named command-line flag.  Exit status: 0 success,
1 usage error, 2 runtime error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from rgrank import data as dmod
from rgrank import metrics, verify
from rgrank.als import AlsConfig, als_fit, als_fit_full_matrix
from rgrank.data import TargetVariant, TextFormat, build_matrix, build_targets
from rgrank.errors import RgrankError
from rgrank.model import load_factors, save_factors
from rgrank.sgd import SgdConfig, sgd_fit

ALS_LOSSES = ("rg2", "rgx", "wrmf")
SGD_LOSSES = ("sm", "ssm", "bpr", "bce")

LAMBDA_GRID = (0.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001)
ALPHA_GRID = LAMBDA_GRID
LEARNING_RATE_GRID = (0.1, 0.01, 0.001)


@dataclass
class RunConfig:
    train_path: str = "train.tsv"
    valid_path: str = "valid.tsv"
    test_path: str = "test.tsv"
    loss: str = "rg2"
    optimizer: str = "als"            # als | als-full | sgd
    variant: str = "full"             # full | sampled | hyper (squared losses)
    dim: int = 32
    lam: float = 0.1
    alpha: float = 1.0
    beta: float = 0.0
    n_negatives: int = 10
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    batch_size: int = 256
    update_rule: str = "adaptive-moment"
    interaction_form: str = "rank-one"
    epochs: int = 50
    tolerance: float = 1e-4
    init: str = "uniform"
    init_scale: float = 0.01
    pd_floor: float = 1e-10
    k_eval: int = 10
    early_stop_metric: str = "ndcg"   # ndcg | map
    patience: int = 5
    seed: int = 0
    log_path: str = "run.log"
    snapshot_path: str = "best_factors.txt"
    snapshot_binary: bool = False

    def validate(self):
        if self.optimizer in ("als", "als-full") and self.loss not in ALS_LOSSES:
            raise ValueError(
                f"optimizer {self.optimizer!r} requires loss in {ALS_LOSSES}")
        if self.optimizer == "sgd" and self.loss not in SGD_LOSSES:
            raise ValueError(f"optimizer 'sgd' requires loss in {SGD_LOSSES}")
        if self.optimizer not in ("als", "als-full", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "als-full" and self.loss == "rgx":
            raise ValueError("full-matrix updates support only 'rg2' or 'wrmf'")
        if self.early_stop_metric not in ("ndcg", "map"):
            raise ValueError("early_stop_metric must be 'ndcg' or 'map'")
        return self


def _coerce(kind, raw):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    return kind(raw)


def parse_config(path_or_text, base=None):
    """Read flat key=value lines into a RunConfig."""
    text = path_or_text
    if "\n" not in str(path_or_text) and Path(path_or_text).exists():
        text = Path(path_or_text).read_text(encoding="utf-8")
    cfg = base or RunConfig()
    kinds = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    updates = {}
    for line_no, line in enumerate(str(text).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        updates[key] = _coerce(kinds[key], value)
    return replace(cfg, **updates)


def serialize_config(cfg):
    """Canonical form: sorted key=value lines."""
    return "\n".join(f"{f.name}={getattr(cfg, f.name)}"
                     for f in sorted(fields(cfg), key=lambda f: f.name)) + "\n"


def _load_set(path):
    return dmod.load_interactions(path)


def _rg_variant(cfg):
    if cfg.loss == "wrmf":
        return TargetVariant("wrmf", alpha=cfg.alpha)
    if cfg.variant == "sampled":
        return TargetVariant("sampled", n=cfg.n_negatives)
    if cfg.variant == "hyper":
        return TargetVariant("hyper", alpha=cfg.alpha, beta=cfg.beta)
    return TargetVariant("full")


@dataclass
class TrainResult:
    model: object
    logs: list
    best_value: float
    best_epoch: int
    snapshot_path: str


def run_train(cfg):
    """Train per the config with per-epoch validation, early stopping,
    and best-checkpoint persistence."""
    cfg.validate()
    train_set = _load_set(cfg.train_path)
    valid_set = _load_set(cfg.valid_path)
    matrix = build_matrix(train_set)

    state = {"best": -np.inf, "best_epoch": 0, "stale": 0}
    log_fh = open(cfg.log_path, "w", encoding="utf-8")

    def callback(model, log):
        t0 = time.perf_counter()
        result = metrics.evaluate(model, valid_set, matrix, k=cfg.k_eval)
        log.ndcg, log.mrr, log.map = result.ndcg, result.mrr, result.map
        log.eval_s = time.perf_counter() - t0
        log_fh.write(log.as_record() + "\n")
        current = getattr(result, cfg.early_stop_metric)
        if current > state["best"]:
            state["best"] = current
            state["best_epoch"] = log.epoch
            state["stale"] = 0
            save_factors(cfg.snapshot_path, model, binary=cfg.snapshot_binary)
        else:
            state["stale"] += 1
        return state["stale"] > cfg.patience

    try:
        if cfg.optimizer == "sgd":
            sgd_cfg = SgdConfig(
                loss=cfg.loss, dim=cfg.dim, learning_rate=cfg.learning_rate,
                weight_decay=cfg.weight_decay, batch_size=cfg.batch_size,
                n_negatives=cfg.n_negatives, epochs=cfg.epochs, seed=cfg.seed,
                update_rule=cfg.update_rule, init=cfg.init,
                init_scale=cfg.init_scale)
            model, logs = sgd_fit(matrix, sgd_cfg, callback=callback)
        else:
            targets = build_targets(matrix, _rg_variant(cfg))
            if cfg.optimizer == "als-full":
                model, logs = als_fit_full_matrix(
                    matrix, targets, cfg.lam, max_iters=cfg.epochs,
                    tolerance=cfg.tolerance, dim=cfg.dim, init=cfg.init,
                    init_scale=cfg.init_scale, seed=cfg.seed)
                for log in logs:
                    callback(model, log)
            else:
                kind = "rg2" if cfg.loss == "wrmf" else cfg.loss
                als_cfg = AlsConfig(
                    dim=cfg.dim, lam=cfg.lam, kind=kind,
                    interaction_form=cfg.interaction_form,
                    max_iters=cfg.epochs, tolerance=cfg.tolerance,
                    init=cfg.init, init_scale=cfg.init_scale, seed=cfg.seed,
                    pd_floor=cfg.pd_floor)
                model, logs = als_fit(matrix, targets, als_cfg, callback=callback)
    finally:
        log_fh.close()
    return TrainResult(model, logs, state["best"], state["best_epoch"],
                       cfg.snapshot_path)


def run_eval(snapshot_path, test_path, train_path, k=10):
    """Evaluate a persisted snapshot on a held-out set with training
    positives excluded."""
    model = load_factors(snapshot_path)
    test_set = _load_set(test_path)
    train_set = _load_set(train_path)
    matrix = build_matrix(train_set)
    return metrics.evaluate(model, test_set, matrix, k=k)


def parse_log_file(path):
    """Read back the one-record-per-line training log."""
    logs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = dict(tok.split("=", 1) for tok in line.split())
        logs.append({k: float(v) for k, v in rec.items()})
    return logs


def emit_convergence_curve(curves, path, metric="ndcg"):
    """Write per-run (label, cumulative seconds, metric) rows, sorted by
    label then time, for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"run\twall_clock_s\t{metric}\n")
        for label in sorted(curves):
            for rec in sorted(curves[label], key=lambda r: r["wall_clock_s"]):
                fh.write(f"{label}\t{rec['wall_clock_s']:.6f}\t{rec[metric]:.10g}\n")


def read_curve(path):
    curves = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        label, t, v = line.split("\t")
        curves.setdefault(label, []).append((float(t), float(v)))
    return curves


# ---------------------------------------------------------------------------
# Argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_config_flags(parser):
    for f in fields(RunConfig):
        parser.add_argument(f"--{f.name}", type=str, default=None,
                            help=f"override config key {f.name}")
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value config file")


def _config_from_args(args):
    cfg = RunConfig()
    if args.config:
        cfg = parse_config(args.config)
    overrides = {}
    kinds = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    for name, kind in kinds.items():
        raw = getattr(args, name, None)
        if raw is not None:
            overrides[name] = _coerce(kind, raw)
    return replace(cfg, **overrides).validate()


def _cmd_prep(args):
    fmt = TextFormat(delimiter=args.delimiter,
                     context_col=args.context_col, object_col=args.object_col,
                     rating_col=args.rating_col, has_header=args.has_header)
    iset = dmod.load_interactions(args.input, fmt,
                                  rating_threshold=args.rating_threshold)
    if args.min_degree > 1:
        iset = dmod.kcore_filter(iset, args.min_degree)
        if iset.size == 0:
            print("k-core filtering removed every interaction", file=sys.stderr)
            return 2
    ratios = tuple(float(r) for r in args.ratios.split(","))
    bundle = dmod.split_per_user(iset, ratios, seed=args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", bundle.train), ("valid", bundle.valid),
                       ("test", bundle.test)):
        dmod.serialize_interactions(part, out / f"{name}.tsv")
    dmod.save_id_map(out / "id_map.json", iset)
    dmod.save_matrix(out / "train_matrix.txt", build_matrix(bundle.train))
    print(f"prepared {iset.size} interactions -> {out} "
          f"(M={iset.n_contexts}, N={iset.n_objects}, "
          f"train={bundle.train.size}, valid={bundle.valid.size}, "
          f"test={bundle.test.size}, train_only={bundle.train_only_contexts})")
    return 0


def _cmd_train(args):
    cfg = _config_from_args(args)
    result = run_train(cfg)
    print(f"trained {cfg.loss}+{cfg.optimizer}: best {cfg.early_stop_metric}"
          f"@{cfg.k_eval}={result.best_value:.6f} at epoch {result.best_epoch}; "
          f"snapshot -> {result.snapshot_path}; log -> {cfg.log_path}")
    return 0


def _cmd_eval(args):
    result = run_eval(args.snapshot, args.test, args.train, k=args.k)
    print(result.as_record())
    return 0


def _cmd_verify(args):
    names = args.suites.split(",") if args.suites else None
    failures = 0
    for suite, results in verify.run_suites(names):
        for r in results:
            print(r.line())
            failures += 0 if r.passed else 1
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 3
    print("all checks passed")
    return 0


def _cmd_curve(args):
    curves = {}
    for spec in args.runs:
        if "=" not in spec:
            print(f"expected LABEL=LOGPATH, got {spec!r}", file=sys.stderr)
            return 1
        label, path = spec.split("=", 1)
        curves[label] = parse_log_file(path)
    emit_convergence_curve(curves, args.out, metric=args.metric)
    print(f"wrote {args.out}")
    return 0


def _cmd_grid(args):
    cfg = _config_from_args(args)
    if args.values:
        grid_values = [float(v) for v in args.values.split(",")]
        param = args.param
    elif cfg.optimizer == "sgd":
        param, grid_values = "learning_rate", list(LEARNING_RATE_GRID)
    elif cfg.loss == "wrmf" or cfg.variant == "hyper":
        param, grid_values = "alpha", list(ALPHA_GRID)
    else:
        param, grid_values = "lam", list(LAMBDA_GRID)
    rows = []
    for value in grid_values:
        trial = replace(cfg, **{param: value},
                        log_path=f"{cfg.log_path}.{param}={value}",
                        snapshot_path=f"{cfg.snapshot_path}.{param}={value}")
        if param == "alpha" and trial.loss in ("rg2", "rgx") and value <= 0:
            continue
        result = run_train(trial)
        rows.append((value, result.best_value))
        print(f"{param}={value}: best {cfg.early_stop_metric}="
              f"{result.best_value:.6f}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"{param}\tbest_{cfg.early_stop_metric}\n")
        for value, best in rows:
            fh.write(f"{value}\t{best:.10g}\n")
    best_value, best_metric = max(rows, key=lambda r: r[1])
    print(f"best: {param}={best_value} ({cfg.early_stop_metric}={best_metric:.6f}); "
          f"table -> {args.out}")
    return 0


def build_parser():
    parser = _Parser(prog="rgrank",
                     description="Squared ranking surrogates: data prep, "
                                 "training, evaluation, and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="ingest, filter, and split raw interactions")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--delimiter", default=None)
    p.add_argument("--context-col", type=int, default=0)
    p.add_argument("--object-col", type=int, default=1)
    p.add_argument("--rating-col", type=int, default=None)
    p.add_argument("--rating-threshold", type=float, default=None)
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--min-degree", type=int, default=1)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_prep)

    p = sub.add_parser("train", help="train a model per the config")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a factor snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("verify", help="run the numerical verification suites")
    p.add_argument("--suites", default=None,
                   help=f"comma-separated subset of: {', '.join(verify.SUITES)}")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("curve", help="merge training logs into a curve file")
    p.add_argument("runs", nargs="+", metavar="LABEL=LOGPATH")
    p.add_argument("--out", default="curves.tsv")
    p.add_argument("--metric", default="ndcg", choices=("ndcg", "mrr", "map",
                                                        "train_loss"))
    p.set_defaults(fn=_cmd_curve)

    p = sub.add_parser("grid", help="sweep one hyperparameter over its grid")
    _add_config_flags(p)
    p.add_argument("--param", default=None)
    p.add_argument("--values", default=None,
                   help="comma-separated values (defaults to the built-in grid)")
    p.add_argument("--out", default="grid.tsv")
    p.set_defaults(fn=_cmd_grid)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.fn(args)
    except (RgrankError, ValueError, OSError, ZeroDivisionError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
