"""Command-line interface: generate / train / eval / diagnose / grid.

Every artifact-producing invocation writes a JSON manifest next to its
output (<output>.manifest.json) carrying the tool version, the full
parameter set, and the output paths, so any run can be replayed from its
manifest alone. All commands are deterministic given their flags, including
--seed.

Exit codes: 0 success, 1 runtime failure (bad files, numeric breakdown),
2 usage or configuration errors.

Any flag can also be supplied through the environment with the WATERSHED_
prefix and the flag name upper-snake-cased (e.g. WATERSHED_THREADS=2,
WATERSHED_N_BATCHES=64); explicit flags win over the environment.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .core import ConfigError, DataFormatError, PointSet, RngState, UNLABELED
from .datasets import MoonsSpec, SpiralSpec, load_csv, make_moons, make_spiral, save_csv
from .evaluation import (
    EvalConfig,
    accuracy,
    export_boundary_grid,
    predict,
    write_predictions_csv,
)
from .propagation import cross_edge_count, margin, mst, propagate
from .training import TrainConfig, TrainedModel, load_model, save_model, train


def _write_manifest(out_path: str, command: str, params: dict, outputs: list) -> None:
    manifest = {
        "tool": "watershed-classifier",
        "version": __version__,
        "command": command,
        "parameters": params,
        "outputs": outputs,
    }
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params(args, skip=("func", "command", "subcommand")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _check_threads(args) -> None:
    if getattr(args, "threads", None) is not None and args.threads < 1:
        raise ConfigError("--threads must be at least 1")


def _load_labeled(path) -> PointSet:
    data = load_csv(path)
    if not data.is_fully_labeled():
        raise ConfigError(f"{path}: every row must carry a class label (no -1)")
    return data


def _maybe_model(args) -> TrainedModel | None:
    if getattr(args, "model", None) is None:
        return None
    model, _ = load_model(args.model)
    return model


def cmd_generate(args) -> int:
    _check_threads(args)
    if args.subcommand == "spiral":
        spec = SpiralSpec(
            n_per_class=args.n_per_class,
            n_rev=args.n_rev,
            noise_std=args.noise,
            rng_seed=args.seed,
        )
        points = make_spiral(spec)
    else:
        spec = MoonsSpec(n_samples=args.n, noise_std=args.noise, rng_seed=args.seed)
        points = make_moons(spec)
    save_csv(points, args.out)
    _write_manifest(args.out, f"generate {args.subcommand}", _params(args), [args.out])
    print(f"wrote {points.n} points to {args.out}")
    return 0


def cmd_train(args) -> int:
    _check_threads(args)
    data = _load_labeled(args.data)
    config = TrainConfig(
        loss_kind=args.loss,
        n_seeds=args.n_seeds,
        embed_dim=args.embed_dim,
        batch_size=args.batch_size,
        n_batches=args.n_batches,
        learning_rate=args.lr,
        momentum=args.momentum,
        max_epochs=args.epochs,
        patience=args.patience,
        valid_fraction=args.valid_fraction,
        rng_seed=args.seed,
    )
    report = train(data, config)
    meta = {f"config {k}": v for k, v in sorted(vars(config).items())}
    meta["best_epoch"] = report.best_epoch
    save_model(report.model, args.out_model, meta=meta)
    report_path = args.out_report or (args.out_model + ".report.csv")
    report.to_csv(report_path)
    _write_manifest(args.out_model, "train", _params(args), [args.out_model, report_path])
    print(
        f"trained {args.loss} for {len(report.train_losses)} epochs; "
        f"best epoch {report.best_epoch} with validation accuracy "
        f"{format(report.best_accuracy, '.9g')}"
    )
    return 0


def cmd_eval(args) -> int:
    _check_threads(args)
    queries = _load_labeled(args.data)
    train_points = _load_labeled(args.train_data)
    model = _maybe_model(args) or TrainedModel.identity(train_points.dim)
    if model.loss_kind == "linear" and model.head_weights is not None:
        pred = model.predict_linear(queries.coords)
    else:
        config = EvalConfig(
            n_batches=args.n_batches, batch_size=args.batch_size, rng_seed=args.seed
        )
        pred = predict(queries.coords, train_points, model, config)
    acc = accuracy(pred, queries.labels)
    write_predictions_csv(args.out, pred, queries.labels)
    _write_manifest(args.out, "eval", _params(args), [args.out])
    print(f"accuracy: {format(acc, '.9g')}")
    return 0


def _diagnose_points(args) -> PointSet:
    data = _load_labeled(args.data)
    model = _maybe_model(args)
    if model is None:
        return data
    return PointSet(model.transform(data.coords), data.labels)


def _emit(args, header: str, rows, command: str) -> None:
    text = header + "\n" + "".join(r + "\n" for r in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        _write_manifest(args.out, command, _params(args), [args.out])
    else:
        sys.stdout.write(text)


def cmd_diagnose(args) -> int:
    _check_threads(args)
    points = _diagnose_points(args)
    if args.subcommand == "margin":
        value = margin(points)
        _emit(args, "margin", [format(value, ".9g")], "diagnose margin")
        print(f"margin: {format(value, '.9g')}")
    elif args.subcommand == "mst":
        tree = mst(points)
        rows = [f"{i},{j},{format(w, '.9g')}" for i, j, w in tree.edges]
        _emit(args, "i,j,weight", rows, "diagnose mst")
        print(f"mst total weight: {format(tree.total_weight(), '.9g')}")
    elif args.subcommand == "cross-edges":
        count = cross_edge_count(mst(points), points.labels)
        _emit(args, "cross_edges", [str(count)], "diagnose cross-edges")
        print(f"cross edges: {count}")
    else:  # propagate
        gen = RngState(args.seed).generator()
        hidden = np.full(points.n, UNLABELED, dtype=np.int64)
        k = points.n_classes()
        for c in range(k):
            ids = np.flatnonzero(points.labels == c)
            if ids.size < args.seeds_per_class:
                raise ConfigError(
                    f"class {c} has {ids.size} points; cannot seed {args.seeds_per_class}"
                )
            chosen = np.sort(gen.choice(ids, size=args.seeds_per_class, replace=False))
            hidden[chosen] = c
        result = propagate(PointSet(points.coords, hidden), n_classes=k)
        rows = [
            f"{pid},{src},{format(w, '.9g')},{result.labels[pid]}"
            for pid, src, w in result.order
        ]
        _emit(args, "point_id,source_id,edge_weight,label", rows, "diagnose propagate")
        agree = accuracy(result.labels, points.labels)
        print(
            f"margin: {format(result.margin, '.9g')}  "
            f"agreement with true labels: {format(agree, '.9g')}"
        )
    return 0


def cmd_grid(args) -> int:
    _check_threads(args)
    train_points = _load_labeled(args.train_data)
    model = _maybe_model(args) or TrainedModel.identity(train_points.dim)
    batch_size = args.batch_size or min(2040, train_points.n)
    config = EvalConfig(n_batches=args.n_batches, batch_size=batch_size, rng_seed=args.seed)
    resolution = args.resolution if len(args.resolution) > 1 else args.resolution[0]
    pts, _ = export_boundary_grid(
        train_points, model, args.bounds, resolution, config, path=args.out
    )
    _write_manifest(args.out, "grid", _params(args), [args.out])
    print(f"wrote {pts.shape[0]} grid cells to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count(),
        help="cap on worker threads; computation is sequential today, so "
        "results never depend on this value",
    )

    parser = argparse.ArgumentParser(
        prog="watershed",
        description="Watershed (greedy 1-NN) classification toolkit",
        epilog="Flags may be set via environment variables with the WATERSHED_ prefix.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic dataset CSV")
    gensub = gen.add_subparsers(dest="subcommand", required=True)
    spiral = gensub.add_parser("spiral", parents=[common])
    spiral.add_argument("--n-per-class", type=int, default=1000)
    spiral.add_argument("--n-rev", type=float, default=4.0)
    spiral.add_argument("--noise", type=float, default=0.01)
    spiral.add_argument("--seed", type=int, default=0)
    spiral.add_argument("--out", required=True)
    spiral.set_defaults(func=cmd_generate)
    moons = gensub.add_parser("moons", parents=[common])
    moons.add_argument("--n", type=int, default=1000)
    moons.add_argument("--noise", type=float, default=0.1)
    moons.add_argument("--seed", type=int, default=0)
    moons.add_argument("--out", required=True)
    moons.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", parents=[common], help="train a linear embedding")
    tr.add_argument("--data", required=True)
    tr.add_argument("--loss", choices=("watershed", "nca", "linear"), default="watershed")
    tr.add_argument("--n-seeds", type=int, default=1)
    tr.add_argument("--batch-size", type=int, default=256)
    tr.add_argument("--n-batches", type=int, default=16)
    tr.add_argument("--embed-dim", type=int, default=2)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--momentum", type=float, default=0.0)
    tr.add_argument("--epochs", type=int, default=100)
    tr.add_argument("--patience", type=int, default=20)
    tr.add_argument("--valid-fraction", type=float, default=0.2)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out-model", required=True)
    tr.add_argument("--out-report", default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a model on labeled data")
    ev.add_argument("--data", required=True)
    ev.add_argument("--model", default=None,
                    help="model file; omitted = identity embedding; linear-baseline "
                         "models predict with their softmax head")
    ev.add_argument("--train-data", required=True)
    ev.add_argument("--n-batches", type=int, default=256)
    ev.add_argument("--batch-size", type=int, default=2040)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", default="predictions.csv")
    ev.set_defaults(func=cmd_eval)

    di = sub.add_parser("diagnose", help="propagation and spanning-tree diagnostics")
    disub = di.add_subparsers(dest="subcommand", required=True)
    for name in ("mst", "cross-edges", "margin", "propagate"):
        p = disub.add_parser(name, parents=[common])
        p.add_argument("--data", required=True)
        p.add_argument("--model", default=None)
        p.add_argument("--out", default=None)
        if name == "propagate":
            p.add_argument("--seeds-per-class", type=int, default=1)
            p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=cmd_diagnose)

    gr = sub.add_parser("grid", parents=[common], help="export a decision-boundary grid")
    gr.add_argument("--train-data", required=True)
    gr.add_argument("--model", default=None)
    gr.add_argument("--bounds", type=float, nargs=4, required=True,
                    metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    gr.add_argument("--resolution", type=int, nargs="+", required=True)
    gr.add_argument("--n-batches", type=int, default=16)
    gr.add_argument("--batch-size", type=int, default=None)
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--out", required=True)
    gr.set_defaults(func=cmd_grid)
    return parser


def _apply_env_overrides(parser: argparse.ArgumentParser) -> None:
    """Let WATERSHED_<FLAG> environment variables supply flag defaults."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _apply_env_overrides(sub)
        elif action.option_strings and action.dest not in ("help", "version"):
            raw = os.environ.get("WATERSHED_" + action.dest.upper())
            if raw is None:
                continue
            convert = action.type or str
            try:
                if action.nargs in ("+", "*") or isinstance(action.nargs, int):
                    action.default = [convert(tok) for tok in raw.replace(",", " ").split()]
                else:
                    action.default = convert(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"WATERSHED_{action.dest.upper()}={raw!r}: {exc}"
                ) from None
            action.required = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_env_overrides(parser)
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
