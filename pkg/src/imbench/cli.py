"""Command line interface.

Subcommands: ``run`` (full benchmark suite), ``list-techniques``,
``train`` (single pipeline to a model JSON), ``eval`` (score a saved
model on a dataset). Exit codes: 0 success, 2 config error, 3 data error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import adapt, bench, decide
from .dataset import (ColumnSchema, GeneratorConfig, SplitSpec,
                      generate_synthetic, load_csv, stratified_split)
from .errors import ConfigError, DataError
from .forest import FitConfig
from .metrics import (accuracy_from_counts, confusion, f1_from_counts,
                      precision_from_counts, recall_from_counts)

log = logging.getLogger(__name__)


def _add_data_args(p):
    p.add_argument("--data", required=True,
                   help="CSV path, or 'synthetic' for the generator")
    p.add_argument("--schema", help="column schema JSON (CSV input only)")
    p.add_argument("--gen-config", help="generator config JSON")
    p.add_argument("--n-normal", type=int, help="generator normal count")
    p.add_argument("--n-failure", type=int, help="generator failure count")
    p.add_argument("--overlap", type=float, help="generator class overlap")
    p.add_argument("--noise-scale", type=float, help="generator noise scale")
    p.add_argument("--gen-seed", type=int, help="generator seed")
    p.add_argument("--include-categorical", action="store_true",
                   help="keep integer-encoded categorical columns")


def _load_data(args, default_seed):
    if args.data == "synthetic":
        if args.gen_config:
            cfg = GeneratorConfig.from_json(args.gen_config)
        else:
            cfg = GeneratorConfig(seed=default_seed)
        overrides = {}
        for attr, flag in (("n_normal", "n_normal"),
                           ("n_failure", "n_failure"),
                           ("overlap", "overlap"),
                           ("noise_scale", "noise_scale"),
                           ("seed", "gen_seed")):
            value = getattr(args, flag)
            if value is not None:
                overrides[attr] = value
        if overrides:
            cfg = GeneratorConfig(**{**cfg.__dict__, **overrides})
        return generate_synthetic(cfg)
    if not args.schema:
        raise ConfigError("--schema is required for CSV input")
    schema = ColumnSchema.from_json(args.schema)
    return load_csv(args.data, schema,
                    include_categorical=args.include_categorical)


def _parse_split(text, seed):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError("--split expects three comma-separated fractions")
    try:
        fracs = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad split fractions {text!r}") from exc
    return SplitSpec(train_frac=fracs[0], val_frac=fracs[1],
                     test_frac=fracs[2], seed=seed)


def _cmd_run(args):
    data = _load_data(args, args.seed)
    if args.techniques == "all":
        techniques = bench.default_techniques()
    else:
        techniques = [t for t in args.techniques.split(",") if t]
    split = _parse_split(args.split, args.seed)
    fit_cfg = FitConfig(n_trees=args.trees)
    report = bench.run_suite(
        techniques, data, runs=args.runs, base_seed=args.seed, split=split,
        fixed_split=args.fixed_split, measure_timing=not args.no_timing,
        fit_cfg=fit_cfg, progress=True)
    paths = bench.emit_report(report, args.out)
    print(f"reference baseline F1 (original lab dataset): "
          f"{bench.REFERENCE_BASELINE_F1}")
    for agg in report.aggregates:
        flag = " [unreliable]" if agg.unreliable else ""
        print(f"{agg.id:40s} f1={agg.means['f1']:.4f} "
              f"improvement={agg.pct_improvement_f1:+.2f}% "
              f"vmr={agg.vmr_f1:.2e} inference={agg.inference_ms:.3f}ms{flag}")
    if report.vmr_ordering_ok is False:
        print("note: VMR ordering differs from the reference observation")
    for note in report.notes:
        print(f"note: {note}")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_list(args):
    for tid in bench.default_techniques():
        print(tid)
    return 0


def _cmd_train(args):
    data = _load_data(args, args.seed)
    split = _parse_split(args.split, args.seed)
    train, val, _ = stratified_split(data, split)
    spec = bench.TechniqueSpec.parse(args.technique)
    model, rule = bench.fit_pipeline(spec, train, val, args.seed,
                                     fit_cfg=FitConfig(n_trees=args.trees))
    doc = adapt.model_to_doc(model)
    doc["technique"] = spec.id
    doc["rule"] = decide.rule_to_doc(rule)
    Path(args.out).write_text(json.dumps(doc) + "\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args):
    doc = json.loads(Path(args.model).read_text())
    model = adapt.model_from_doc(doc)
    rule = decide.rule_from_doc(doc.get("rule", {}))
    data = _load_data(args, 0)
    probs = bench._pipeline_probs(model, rule, data.rows)
    pred = decide.apply_rule(rule, probs)
    tp, fp, fn, tn = confusion(data.labels, pred)
    metrics = {
        "technique": doc.get("technique"),
        "n_rows": data.n,
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
        "f1": f1_from_counts(tp, fp, fn),
        "precision": precision_from_counts(tp, fp),
        "recall": recall_from_counts(tp, fn),
        "accuracy": accuracy_from_counts(tp, fp, fn, tn),
    }
    payload = json.dumps(metrics, indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n")
        print(f"wrote {args.out}")
    else:
        print(payload)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Class-imbalance mitigation benchmark for optical "
                    "failure detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the benchmark suite")
    _add_data_args(p_run)
    p_run.add_argument("--techniques", default="all",
                       help="comma-separated technique ids, or 'all'")
    p_run.add_argument("--runs", type=int, default=100)
    p_run.add_argument("--seed", type=int, default=42)
    p_run.add_argument("--split", default="0.6,0.2,0.2")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--fixed-split", action="store_true",
                       help="reuse one split across runs")
    p_run.add_argument("--no-timing", action="store_true",
                       help="zero timing fields for byte-stable output")
    p_run.add_argument("--trees", type=int, default=100,
                       help="trees per forest")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-techniques", help="print technique ids")
    p_list.set_defaults(func=_cmd_list)

    p_train = sub.add_parser("train", help="train one pipeline to JSON")
    _add_data_args(p_train)
    p_train.add_argument("--technique", default="baseline")
    p_train.add_argument("--seed", type=int, default=42)
    p_train.add_argument("--split", default="0.6,0.2,0.2")
    p_train.add_argument("--trees", type=int, default=100)
    p_train.add_argument("--out", required=True, help="model JSON path")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model")
    _add_data_args(p_eval)
    p_eval.add_argument("--model", required=True, help="model JSON path")
    p_eval.add_argument("--out", help="metrics JSON path (stdout if unset)")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
