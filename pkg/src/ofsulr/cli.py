"""Command-line entry point (``ofsulr <verb> ...``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import load_bundle
from .config import load_config
from .errors import DataError, OfsulrError, UsageError
from .ingest import ColumnKind, load_csv, save_csv
from .pipeline import (
    clean_table,
    feature_columns,
    generate_synthetic,
    load_input,
    prepare,
    profile_report,
    run_comparison,
    run_ofsulr,
    save_synthetic,
    stage,
    tune,
)
from .metrics import evaluate
from .pca import pca_fit, select_n
from .preprocess import fit_encoder, scaler_fit
from .stream import jsonl_writer, stream_evaluate, stream_source


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _k_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN..MAX, got {text!r}") from None


def _add_data_flags(p):
    p.add_argument("--config", help="pipeline configuration file (INI sections)")
    p.add_argument("--input", help="CSV file or UCI Diabetes data directory")
    p.add_argument("--recipe", choices=["none", "us-cdi", "uci-diabetes"])
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any configuration key (repeatable)")


def _add_model_flags(p):
    p.add_argument("--scale", choices=["zscore", "minmax", "none"])
    p.add_argument("--encode", choices=["label", "onehot"])
    p.add_argument("--k", help="auto or a fixed cluster count")
    p.add_argument("--k-range", type=_k_range, help="elbow search range, e.g. 2..10")
    p.add_argument("--label-train-only", action="store_true", default=None,
                   help="fit k-means on training rows only (no label leakage)")
    p.add_argument("--no-scale-first", action="store_true", help="cluster unscaled features")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--components", type=int, help="fixed number of principal components")
    g.add_argument("--variance", type=float, help="explained-variance threshold")
    p.add_argument("--order", choices=["label-first", "pca-first"])
    p.add_argument("--ratio", type=float, help="train fraction of the split")


def _add_grid_flags(p):
    p.add_argument("--grid", help="file with a [grid] section (solver, penalty, C)")
    p.add_argument("--folds", type=int)
    p.add_argument("--metric", choices=["accuracy", "f1"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ofsulr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("profile", help="per-column null counts and inferred kinds")
    _add_data_flags(p)
    p.add_argument("--raw", action="store_true", help="profile the input before the recipe runs")

    p = sub.add_parser("prepare", help="apply a cleaning recipe and write the cleaned CSV")
    _add_data_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="derive labels with k-means (elbow-selected k)")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", help="write the cleaned rows plus a label column here")

    p = sub.add_parser("pca", help="principal components of the scaled, encoded features")
    _add_data_flags(p)
    _add_model_flags(p)

    p = sub.add_parser("tune", help="grid search for logistic regression")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--out", help="write the CV table (CSV) here")

    p = sub.add_parser("train", help="full OFS-ULR run; writes bundle and reports")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("evaluate", help="score a labeled CSV with a saved bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("compare", help="OFS-ULR against the baseline classifiers")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--classifiers", help="comma list of logreg,svm,tree,forest,gbt")
    p.add_argument("--stream", action="store_true", help="also evaluate each model in stream mode")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("stream-eval", help="micro-batch evaluation of a saved bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--interval-ms", type=float, default=0.0)
    p.add_argument("--queue-size", type=int, default=4)
    p.add_argument("--out", help="final report JSON; per-batch lines go to <out>.jsonl")

    p = sub.add_parser("synth", help="Gaussian blobs for experiments")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _overrides(args) -> dict:
    ov = {}

    def put(key, value):
        if value is not None:
            ov[key] = value

    put("data.input", getattr(args, "input", None))
    put("data.recipe", getattr(args, "recipe", None))
    put("run.seed", getattr(args, "seed", None))
    put("preprocess.scale", getattr(args, "scale", None))
    put("preprocess.encode", getattr(args, "encode", None))
    put("cluster.k", getattr(args, "k", None))
    if getattr(args, "k_range", None):
        ov["cluster.k_min"], ov["cluster.k_max"] = args.k_range
    put("cluster.label_train_only", getattr(args, "label_train_only", None))
    if getattr(args, "no_scale_first", False):
        ov["cluster.scale_first"] = False
    put("pca.components", getattr(args, "components", None))
    if getattr(args, "variance", None) is not None:
        ov["pca.variance"] = args.variance
        ov["pca.components"] = 0
    put("pca.order", getattr(args, "order", None))
    put("split.ratio", getattr(args, "ratio", None))
    put("grid.folds", getattr(args, "folds", None))
    put("grid.metric", getattr(args, "metric", None))
    put("classifiers.list", getattr(args, "classifiers", None))
    put("stream.batch_size", getattr(args, "batch_size", None))
    if getattr(args, "grid", None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(args.grid, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read grid file {args.grid}: {exc}") from exc
        if set(parser.sections()) - {"grid"}:
            raise UsageError("grid file may only contain a [grid] section")
        for key, value in parser.items("grid") if parser.has_section("grid") else []:
            ov[f"grid.{key}"] = value
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        ov[key.strip()] = value
    return ov


def _config(args):
    return load_config(args.config, _overrides(args))


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_profile(args) -> None:
    cfg = _config(args)
    if args.raw:
        with stage("load"):
            sys.stdout.write(profile_report(load_input(cfg.data.input)))
        return
    result = clean_table(cfg)
    sys.stdout.write(profile_report(result.table))
    for line in result.log:
        print(f"# {line}", file=sys.stderr)


def cmd_prepare(args) -> None:
    result = clean_table(_config(args))
    save_csv(result.table, args.out)
    for line in result.log:
        print(line)
    print(f"wrote {result.table.row_count} rows to {args.out}")


def cmd_cluster(args) -> None:
    cfg = _config(args)
    prep = prepare(cfg)
    if prep.elbow is not None:
        print("k,wcss")
        for k, w in zip(prep.elbow.ks, prep.elbow.wcss):
            print(f"{k},{w!r}")
    print(f"chosen k: {prep.cluster.k}; class counts: {np.bincount(prep.labels).tolist()}")
    if args.out:
        save_csv(prep.labeled_rows(np.arange(prep.table.row_count)), args.out)
        print(f"wrote labeled rows to {args.out}")


def cmd_pca(args) -> None:
    cfg = _config(args)
    result = clean_table(cfg)
    with stage("pca"):
        table = result.table
        enc = fit_encoder(table, cfg.preprocess.encode, feature_columns(cfg, table), cfg.preprocess.max_onehot)
        X = enc.transform(table).values
        if cfg.preprocess.scale != "none":
            X = scaler_fit(X, cfg.preprocess.scale).apply(X)
        model = pca_fit(X, variance=cfg.pca.variance, n_components=cfg.pca.components or None)
        n = select_n(model, cfg.pca.components or None, cfg.pca.variance)
    print("component,eigenvalue,explained_ratio,cumulative")
    cum = np.cumsum(model.explained_ratio)
    for i, (lam, r) in enumerate(zip(model.eigenvalues, model.explained_ratio)):
        print(f"PC{i + 1},{float(lam)!r},{float(r)!r},{float(cum[i])!r}")
    print(f"selected N = {n} of {model.d}")


def cmd_tune(args) -> None:
    cfg = _config(args)
    cv = tune(cfg, prepare(cfg))
    text = cv.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"best: {cv.best_params} ({cv.metric} {cv.cells[cv.best_cell].mean:.6f})", file=sys.stderr)


def cmd_train(args) -> None:
    cfg = _config(args)
    out = args.out or cfg.output.dir
    result = run_ofsulr(cfg, out_dir=out)
    rep = result.report
    print(f"k={result.prepared.cluster.k} N={result.prepared.n_selected} best={result.cv.best_params}")
    print(f"test Ac={rep.accuracy:.6f} Fm={rep.f1:.6f} Pr={rep.precision:.6f} Re={rep.recall:.6f}")
    print(f"outputs in {out}")


def cmd_evaluate(args) -> None:
    bundle = load_bundle(args.model)
    with stage("evaluate"):
        table = load_csv(args.input, kind_hints=_hints_for(bundle, args.input))
        scores = bundle.score(table)
        preds = bundle.predict(table)
        report = evaluate(bundle.labels(table), preds, scores)
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"Ac={report.accuracy:.6f} Fm={report.f1:.6f} Pr={report.precision:.6f} Re={report.recall:.6f}")


def _hints_for(bundle, path) -> dict:
    """Bundle column kinds, restricted to columns present in the file header."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), [])
    hints = {c: k for c, k in bundle.kind_hints().items() if c in header}
    if bundle.label_column in header:
        hints[bundle.label_column] = ColumnKind.INTEGER
    return hints


def cmd_compare(args) -> None:
    cfg = _config(args)
    out = args.out or cfg.output.dir
    report = run_comparison(cfg, stream=args.stream or None, out_dir=out)
    sys.stdout.write(report.to_csv())


def cmd_stream_eval(args) -> None:
    bundle = load_bundle(args.model)
    on_batch = None
    if args.out:
        lines = Path(str(args.out) + ".jsonl")
        lines.unlink(missing_ok=True)
        on_batch = jsonl_writer(lines)
    with stage("stream"):
        try:
            hints = _hints_for(bundle, args.input)
        except OSError as exc:
            raise DataError(f"cannot read {args.input}: {exc}") from exc
        source = stream_source(args.input, args.batch_size, args.interval_ms / 1000, hints)
        running = stream_evaluate(bundle, source, queue_size=args.queue_size, on_batch=on_batch)
    payload = running.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    fin = running.final()
    print(f"batches={len(running.batches)} Ac={fin.accuracy:.6f} Fm={fin.f1:.6f} "
          f"Pr={fin.precision:.6f} Re={fin.recall:.6f}")


def cmd_synth(args) -> None:
    table, truth = generate_synthetic(args.n, args.d, args.clusters, args.separation, args.seed)
    sidecar = save_synthetic(table, truth, args.out)
    print(f"wrote {table.row_count} rows to {args.out}; ground truth in {sidecar}")


COMMANDS = {
    "profile": cmd_profile,
    "prepare": cmd_prepare,
    "cluster": cmd_cluster,
    "pca": cmd_pca,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "stream-eval": cmd_stream_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.verb](args)
    except OfsulrError as exc:
        print(f"ofsulr: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
