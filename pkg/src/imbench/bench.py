"""Evaluation harness: technique grammar, paired repeated runs over fresh
stratified splits, inference timing, and report/figure-data emission.

Within one run index every technique sees identical train/val/test folds,
so cross-technique comparisons are paired. Pre-processing transforms touch
the training fold only; post-processing rules are tuned on the validation
fold; all metrics come from the untouched test fold.
"""

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adapt, decide, genmodel
from . import forest as rf
from . import resample
from .dataset import SplitSpec, stratified_split
from .errors import ConfigError, DataError
from .forest import FitConfig, ForestModel
from .metrics import (accuracy_from_counts, confusion, f1_from_counts,
                      precision_from_counts, recall_from_counts)

log = logging.getLogger(__name__)

# Baseline F1 reported on the original (private) lab dataset; kept as an
# annotation constant for report context.
REFERENCE_BASELINE_F1 = 0.7659

_TIMING_REPS = 5
_UNRELIABLE_FRACTION = 0.2

# (category, name) -> allowed parameter keys
_TECHNIQUES = {
    ("baseline", "baseline"): frozenset(),
    ("pre", "ros"): frozenset({"ratio"}),
    ("pre", "rus"): frozenset({"ratio"}),
    ("pre", "smote"): frozenset({"ratio", "k"}),
    ("pre", "adasyn"): frozenset({"ratio", "k"}),
    ("pre", "cluster_centroids"): frozenset({"ratio", "clusters"}),
    ("pre", "smote_tomek"): frozenset({"ratio", "k"}),
    ("pre", "massaging"): frozenset({"ratio"}),
    ("pre", "perturbation"): frozenset({"ratio", "noise"}),
    ("pre", "cluster_massaging"): frozenset({"ratio", "clusters"}),
    ("pre", "cvae"): frozenset({"ratio", "epochs", "latent", "hidden"}),
    ("pre", "cgan"): frozenset({"ratio", "epochs", "latent", "hidden"}),
    ("in", "cost_sensitive"): frozenset(),
    ("in", "bagging"): frozenset({"members"}),
    ("in", "boosting"): frozenset({"rounds", "trees"}),
    ("in", "brf"): frozenset(),
    ("in", "meta"): frozenset({"folds"}),
    ("post", "threshold"): frozenset(),
    ("post", "cost_threshold"): frozenset({"cfp", "cfn"}),
    ("post", "reweight"): frozenset(),
    ("post", "calibration"): frozenset({"method"}),
    ("post", "vote_weight"): frozenset(),
}


def default_techniques():
    """Canonical benchmark suite, baseline first."""
    return [
        "baseline",
        "pre:ros", "pre:rus", "pre:smote", "pre:adasyn",
        "pre:cluster_centroids", "pre:smote_tomek", "pre:massaging",
        "pre:perturbation", "pre:cluster_massaging", "pre:cvae", "pre:cgan",
        "in:cost_sensitive", "in:bagging", "in:boosting", "in:brf", "in:meta",
        "post:threshold", "post:cost_threshold", "post:reweight",
        "post:calibration?method=platt", "post:calibration?method=isotonic",
        "post:vote_weight",
    ]


def _parse_value(raw):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


@dataclass(frozen=True)
class TechniqueSpec:
    """Parsed technique id: ``<category>:<name>[?key=value&...]``."""

    id: str
    category: str
    name: str
    params: dict

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text == "baseline":
            return cls(id="baseline", category="baseline", name="baseline",
                       params={})
        if ":" not in text:
            raise ConfigError(f"technique {text!r} is not <category>:<name>")
        category, rest = text.split(":", 1)
        if "?" in rest:
            name, query = rest.split("?", 1)
        else:
            name, query = rest, ""
        key = (category, name)
        if key not in _TECHNIQUES:
            raise ConfigError(f"unknown technique {category}:{name}")
        params = {}
        if query:
            for pair in query.split("&"):
                if "=" not in pair:
                    raise ConfigError(f"bad parameter {pair!r} in {text!r}")
                k, v = pair.split("=", 1)
                if k not in _TECHNIQUES[key]:
                    raise ConfigError(
                        f"parameter {k!r} not valid for {category}:{name}")
                params[k] = _parse_value(v)
        return cls(id=text, category=category, name=name, params=params)


@dataclass(frozen=True)
class RunResult:
    """Metrics of one technique on one run's test fold."""

    technique: str
    seed: int
    f1: float
    precision: float
    recall: float
    accuracy: float
    inference_seconds: float
    train_seconds: float


@dataclass
class TechniqueAggregate:
    id: str
    category: str
    runs_succeeded: int
    runs_failed: int
    unreliable: bool
    means: dict
    stds: dict
    vmr_f1: float
    pct_improvement_f1: float
    inference_ms: float


@dataclass
class MetricsReport:
    aggregates: list
    run_count: int
    base_seed: int
    results: dict           # technique id -> list[RunResult]
    failures: dict          # technique id -> list[(run index, message)]
    vmr_ordering_ok: bool | None = None
    notes: list = field(default_factory=list)

    def aggregate(self, technique_id):
        for agg in self.aggregates:
            if agg.id == technique_id:
                return agg
        raise KeyError(technique_id)


def derive_seed(*parts):
    """Stable 63-bit seed from hashable parts (process-independent)."""
    digest = hashlib.blake2s(repr(parts).encode()).digest()[:8]
    return int.from_bytes(digest, "little") % (2 ** 63)


def _sampler_spec(spec, seed):
    kw = {"kind": spec.name, "seed": seed}
    if "ratio" in spec.params:
        kw["target_ratio"] = float(spec.params["ratio"])
    if "k" in spec.params:
        kw["k_neighbors"] = int(spec.params["k"])
    if "clusters" in spec.params:
        kw["n_clusters"] = int(spec.params["clusters"])
    if "noise" in spec.params:
        kw["noise_scale"] = float(spec.params["noise"])
    return resample.SamplerSpec(**kw)


def _generative_transform(spec, train, seed):
    ratio = float(spec.params.get("ratio", 1.0))
    minority = train.minority_label
    n_maj, n_min = train.row_count_per_class
    n_new = max(0, int(round(ratio * n_maj)) - n_min)
    if n_new == 0:
        return train
    if spec.name == "cvae":
        gspec = genmodel.CvaeSpec(
            latent_dim=int(spec.params.get("latent", 4)),
            hidden=int(spec.params.get("hidden", 32)),
            epochs=int(spec.params.get("epochs", 200)),
            seed=seed,
        )
        mu = train.rows.mean(axis=0)
        sd = train.rows.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        minority_rows = train.rows[train.labels == minority]
        gen = genmodel.cvae_fit(minority_rows, gspec, scaler=(mu, sd))
    else:
        gspec = genmodel.CganSpec(
            latent_dim=int(spec.params.get("latent", 8)),
            hidden=int(spec.params.get("hidden", 32)),
            epochs=int(spec.params.get("epochs", 20)),
            seed=seed,
        )
        gen = genmodel.cgan_fit(train, gspec)
    new_rows = genmodel.sample_synthetic(gen, n_new,
                                         seed=derive_seed(seed, "sample"))
    rows = np.vstack([train.rows, new_rows])
    labels = np.concatenate([train.labels,
                             np.full(n_new, minority, dtype=np.int64)])
    return train.with_rows(rows, labels)


def _pipeline_probs(model, rule, rows):
    if rule.vote_weights is not None and isinstance(model, ForestModel):
        return rf.predict_proba(model, rows, tree_weights=rule.vote_weights)
    return model.predict_proba(rows)


def _fit_post_rule(spec, model, train, val):
    probs_val = model.predict_proba(val.rows)
    n_maj, n_min = train.row_count_per_class
    if spec.name == "threshold":
        return decide.DecisionRule(
            threshold=decide.tune_threshold(probs_val, val.labels))
    if spec.name == "cost_threshold":
        cost = decide.CostSpec(
            c_fp=float(spec.params.get("cfp", 1.0)),
            c_fn=float(spec.params.get("cfn", n_maj / n_min)),
        )
        return decide.DecisionRule(threshold=decide.cost_threshold(cost))
    if spec.name == "reweight":
        return decide.DecisionRule(reweight=(1.0, n_maj / n_min))
    if spec.name == "calibration":
        method = spec.params.get("method", "platt")
        if method == "platt":
            cal = decide.platt_fit(probs_val, val.labels)
        elif method == "isotonic":
            cal = decide.isotonic_fit(probs_val, val.labels)
        else:
            raise ConfigError(f"unknown calibration method {method!r}")
        return decide.DecisionRule(calibrator=cal)
    if spec.name == "vote_weight":
        if not isinstance(model, ForestModel):
            raise ConfigError("vote_weight applies to forest models only")
        return decide.DecisionRule(
            vote_weights=decide.vote_weight_fit(model, val))
    raise ConfigError(f"unknown post technique {spec.name!r}")


def fit_pipeline(spec, train, val, seed, fit_cfg=None, baseline_model=None):
    """Fit one technique pipeline on the train/validation folds.

    Returns (model, rule). Deterministic per (spec, folds, seed);
    ``baseline_model`` may supply the plain forest fit on ``train`` with
    this run's fit seed (it is identical to what would be refit here).
    """
    cfg = fit_cfg or FitConfig()
    cfg_run = replace(cfg, seed=derive_seed(seed, "fit"))
    rule = decide.DecisionRule()

    def baseline():
        if baseline_model is not None:
            return baseline_model
        return rf.fit(train, cfg_run)

    if spec.category == "baseline":
        model = baseline()
    elif spec.category == "pre":
        tseed = derive_seed(seed, "pre", spec.name)
        if spec.name in ("cvae", "cgan"):
            transformed = _generative_transform(spec, train, tseed)
        elif spec.name == "massaging":
            transformed = resample.massaging(
                train, _sampler_spec(spec, tseed), ranker=baseline())
        else:
            transformed = resample.apply_sampler(
                train, _sampler_spec(spec, tseed))
        model = rf.fit(transformed, cfg_run)
    elif spec.category == "in":
        if spec.name == "cost_sensitive":
            model = adapt.cost_sensitive_fit(train, cfg_run)
        elif spec.name == "bagging":
            model = adapt.bagging_fit(
                train, n_members=int(spec.params.get("members", 10)),
                cfg=cfg_run)
        elif spec.name == "boosting":
            member_cfg = replace(cfg_run,
                                 n_trees=int(spec.params.get("trees", 60)))
            model = adapt.boosting_fit(
                train, n_rounds=int(spec.params.get("rounds", 10)),
                cfg=member_cfg)
        elif spec.name == "brf":
            model = adapt.balanced_rf_fit(train, cfg_run)
        elif spec.name == "meta":
            model = adapt.meta_fit(train, cfg_run,
                                   n_folds=int(spec.params.get("folds", 5)))
        else:
            raise ConfigError(f"unknown in technique {spec.name!r}")
    elif spec.category == "post":
        model = baseline()
        rule = _fit_post_rule(spec, model, train, val)
    else:
        raise ConfigError(f"unknown category {spec.category!r}")
    return model, rule


def run_technique(spec, train, val, test, seed, fit_cfg=None,
                  baseline_model=None, measure_timing=True):
    """Execute one technique pipeline on prepared folds and score it on
    the test fold. Deterministic per (spec, folds, seed) except the
    timing fields."""
    t_start = time.perf_counter()
    model, rule = fit_pipeline(spec, train, val, seed, fit_cfg=fit_cfg,
                               baseline_model=baseline_model)
    train_seconds = time.perf_counter() - t_start

    probs_test = _pipeline_probs(model, rule, test.rows)
    pred = decide.apply_rule(rule, probs_test)
    tp, fp, fn, tn = confusion(test.labels, pred)

    inference_seconds = 0.0
    if measure_timing:
        times = []
        for _ in range(_TIMING_REPS):
            t0 = time.perf_counter()
            decide.apply_rule(rule, _pipeline_probs(model, rule, test.rows))
            times.append(time.perf_counter() - t0)
        inference_seconds = float(np.median(times))

    return RunResult(
        technique=spec.id,
        seed=seed,
        f1=f1_from_counts(tp, fp, fn),
        precision=precision_from_counts(tp, fp),
        recall=recall_from_counts(tp, fn),
        accuracy=accuracy_from_counts(tp, fp, fn, tn),
        inference_seconds=inference_seconds,
        train_seconds=train_seconds,
    )


def run_suite(techniques, data, runs, base_seed, split=None,
              fixed_split=False, measure_timing=True, fit_cfg=None,
              progress=False):
    """Repeated paired runs of every technique.

    Run r splits with seed base_seed + r (or base_seed with
    ``fixed_split``) and derives its stage seeds from base_seed + r, so
    results are deterministic modulo timing fields. The baseline is
    auto-added when missing; techniques failing in more than 20% of runs
    are marked unreliable.
    """
    if runs < 2:
        raise ConfigError("runs must be >= 2")
    specs = [TechniqueSpec.parse(t) for t in techniques]
    if not any(s.category == "baseline" for s in specs):
        specs.insert(0, TechniqueSpec.parse("baseline"))
    seen = set()
    for s in specs:
        if s.id in seen:
            raise ConfigError(f"duplicate technique {s.id!r}")
        seen.add(s.id)

    cfg = fit_cfg or FitConfig()
    split = split or SplitSpec()
    results = {s.id: [] for s in specs}
    failures = {s.id: [] for s in specs}

    for r in range(runs):
        run_seed = base_seed + r
        split_seed = base_seed if fixed_split else base_seed + r
        folds = stratified_split(data, replace(split, seed=split_seed))
        train, val, test = folds
        baseline_model = rf.fit(train,
                                replace(cfg, seed=derive_seed(run_seed, "fit")))
        for spec in specs:
            try:
                res = run_technique(spec, train, val, test, run_seed,
                                    fit_cfg=cfg,
                                    baseline_model=baseline_model,
                                    measure_timing=measure_timing)
                results[spec.id].append(res)
            except Exception as exc:  # recorded, excluded from means
                log.warning("run %d technique %s failed: %s", r, spec.id, exc)
                failures[spec.id].append((r, str(exc)))
        if progress and (r + 1) % 10 == 0:
            log.info("completed %d/%d runs", r + 1, runs)

    report = _aggregate(specs, results, failures, runs, base_seed)
    return report


def _vmr(values):
    if len(values) < 2:
        return 0.0
    mean = float(np.mean(values))
    if mean == 0.0:
        return 0.0
    return float(np.var(values, ddof=1)) / mean


def _aggregate(specs, results, failures, runs, base_seed):
    aggregates = []
    baseline_mean = None
    for spec in specs:
        if spec.category == "baseline":
            vals = [r.f1 for r in results[spec.id]]
            baseline_mean = float(np.mean(vals)) if vals else None
    for spec in specs:
        rs = results[spec.id]
        means = {}
        stds = {}
        for metric in ("f1", "precision", "recall", "accuracy"):
            vals = [getattr(r, metric) for r in rs]
            means[metric] = float(np.mean(vals)) if vals else 0.0
            stds[metric] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        f1s = [r.f1 for r in rs]
        pct = 0.0
        if baseline_mean and rs:
            pct = 100.0 * (means["f1"] - baseline_mean) / baseline_mean
        aggregates.append(TechniqueAggregate(
            id=spec.id,
            category=spec.category,
            runs_succeeded=len(rs),
            runs_failed=len(failures[spec.id]),
            unreliable=len(failures[spec.id]) > _UNRELIABLE_FRACTION * runs,
            means=means,
            stds=stds,
            vmr_f1=_vmr(f1s),
            pct_improvement_f1=pct,
            inference_ms=float(np.mean([r.inference_seconds for r in rs]) * 1e3)
            if rs else 0.0,
        ))
    report = MetricsReport(aggregates=aggregates, run_count=runs,
                           base_seed=base_seed, results=results,
                           failures=failures)
    _check_vmr_ordering(report)
    for agg in aggregates:
        if agg.unreliable:
            report.notes.append(
                f"{agg.id}: unreliable ({agg.runs_failed}/{runs} runs failed)")
    return report


def best_per_category(report):
    """Highest mean-F1 technique per non-baseline category present."""
    best = {}
    for agg in report.aggregates:
        if agg.category == "baseline" or agg.runs_succeeded == 0:
            continue
        cur = best.get(agg.category)
        if cur is None or agg.means["f1"] > cur.means["f1"]:
            best[agg.category] = agg
    return best

def _check_vmr_ordering(report):
    try:
        base = report.aggregate("baseline")
    except KeyError:
        return
    best = best_per_category(report)
    if len(best) < 3:
        return
    vmrs = {cat: agg.vmr_f1 for cat, agg in best.items()}
    all_below = all(v < base.vmr_f1 for v in vmrs.values())
    post_lowest = vmrs["post"] <= min(vmrs.values())
    report.vmr_ordering_ok = bool(all_below and post_lowest)
    if not report.vmr_ordering_ok:
        report.notes.append(
            "VMR ordering differs from the reference observation "
            "(best-per-category VMR not all below baseline with the "
            "post-processing technique lowest); this is dataset-dependent.")


_CSV_COLUMNS = (
    "technique", "category", "f1_mean", "f1_std", "precision_mean",
    "precision_std", "recall_mean", "recall_std", "accuracy_mean",
    "accuracy_std", "vmr_f1", "pct_improvement_f1", "inference_ms",
)


def emit_report(report, out_dir):
    """Write report.csv plus fig2/fig3/fig4 JSON payloads; returns the
    file paths. Outputs are byte-stable for identical reports."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []

        csv_path = out / "report.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_CSV_COLUMNS)
            for agg in report.aggregates:
                writer.writerow([
                    agg.id, agg.category,
                    repr(agg.means["f1"]), repr(agg.stds["f1"]),
                    repr(agg.means["precision"]), repr(agg.stds["precision"]),
                    repr(agg.means["recall"]), repr(agg.stds["recall"]),
                    repr(agg.means["accuracy"]), repr(agg.stds["accuracy"]),
                    repr(agg.vmr_f1), repr(agg.pct_improvement_f1),
                    repr(agg.inference_ms),
                ])
        paths.append(csv_path)

        fig2 = {agg.id: agg.means["f1"] for agg in report.aggregates}
        fig3 = {agg.id: {"pct_improvement": agg.pct_improvement_f1,
                         "inference_ms": agg.inference_ms}
                for agg in report.aggregates}
        best = best_per_category(report)
        fig4 = {"baseline": report.aggregate("baseline").vmr_f1}
        for cat in ("pre", "in", "post"):
            if cat in best:
                fig4[best[cat].id] = best[cat].vmr_f1

        for name, payload in (("fig2.json", fig2), ("fig3.json", fig3),
                              ("fig4.json", fig4)):
            path = out / name
            path.write_text(json.dumps(payload, indent=2) + "\n")
            paths.append(path)
        return paths
    except OSError as exc:
        raise DataError(f"cannot write report to {out}: {exc}") from exc
