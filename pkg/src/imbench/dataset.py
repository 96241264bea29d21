"""Telemetry data model: column schema, CSV ingest/cleaning, stratified
splits, and a synthetic imbalanced testbed generator.

The generator emulates end-to-end monitoring of an optical link: TX/RX
BER and OSNR plus input/output powers of four optical amplifiers. Failure
rows are drawn from a shifted distribution (degraded ``osnr_rx``, elevated
``ber_rx``) whose separation from the normal class is controlled by the
``overlap`` knob.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

KIND_CONTINUOUS = "continuous"
KIND_CATEGORICAL = "categorical-id"
KIND_TIMESTAMP = "timestamp"
_VALID_KINDS = (KIND_CONTINUOUS, KIND_CATEGORICAL, KIND_TIMESTAMP)


@dataclass(frozen=True)
class ColumnSchema:
    """Ordered feature columns plus the binary label column."""

    names: tuple
    label_name: str
    feature_kinds: tuple

    def __post_init__(self):
        names = tuple(self.names)
        kinds = tuple(self.feature_kinds)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "feature_kinds", kinds)
        if len(names) != len(set(names)):
            raise ConfigError("feature names must be unique")
        if self.label_name in names:
            raise ConfigError("label column must not appear among feature names")
        if len(kinds) != len(names):
            raise ConfigError("feature_kinds must match names in length")
        for k in kinds:
            if k not in _VALID_KINDS:
                raise ConfigError(f"unknown feature kind {k!r}")
        if KIND_CONTINUOUS not in kinds:
            raise ConfigError("schema needs at least one continuous feature")

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(
            names=tuple(doc["names"]),
            label_name=doc["label_name"],
            feature_kinds=tuple(doc["feature_kinds"]),
        )

    def to_json(self, path):
        doc = {
            "names": list(self.names),
            "label_name": self.label_name,
            "feature_kinds": list(self.feature_kinds),
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with binary labels (0 normal, 1 failure)."""

    schema: ColumnSchema
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if rows.ndim != 2:
            raise DataError("rows must be a 2-D matrix")
        if labels.shape != (rows.shape[0],):
            raise DataError("labels length must match row count")
        if rows.shape[1] != len(self.schema.names):
            raise DataError("row width must match schema")
        if rows.size and not np.isfinite(rows).all():
            raise DataError("rows contain NaN/Inf after cleaning")
        bad = np.setdiff1d(np.unique(labels), [0, 1])
        if bad.size:
            raise DataError(f"non-binary label value(s): {bad.tolist()}")
        if int((labels == 1).sum()) < 1 or int((labels == 0).sum()) < 1:
            raise DataError("both classes must be present with >= 1 row")
        rows.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    @property
    def class_counts(self):
        """(count of label 0, count of label 1)."""
        return int((self.labels == 0).sum()), int((self.labels == 1).sum())

    @property
    def minority_label(self):
        n0, n1 = self.class_counts
        return 1 if n1 <= n0 else 0

    @property
    def majority_label(self):
        return 1 - self.minority_label

    @property
    def row_count_per_class(self):
        """(majority count, minority count)."""
        n0, n1 = self.class_counts
        return (max(n0, n1), min(n0, n1))

    def with_rows(self, rows, labels):
        """New dataset sharing this schema."""
        return Dataset(self.schema, rows, labels)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.rows[idx], self.labels[idx])

    def fingerprint(self):
        """Byte-exact content identity, used by determinism checks."""
        return self.rows.tobytes() + b"|" + self.labels.tobytes()


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for a (train, val, test) split."""

    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ConfigError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("fractions do not sum to 1")


@dataclass(frozen=True)
class GeneratorConfig:
    """Configuration of the synthetic testbed generator."""

    n_normal: int = 7859
    n_failure: int = 194
    noise_scale: float = 1.0
    overlap: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.n_failure < 2 or self.n_normal < self.n_failure:
            raise ConfigError("need n_normal >= n_failure >= 2")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap must lie in [0, 1]")

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(**doc)


def load_csv(path, schema, include_categorical=False):
    """Load and clean a telemetry CSV.

    Rows with any missing/NaN value in a non-timestamp column are dropped
    (the drop count is logged). Categorical-id columns are integer-encoded;
    timestamp columns are dropped from the features. By default the encoded
    categorical columns are excluded as well, matching the end-to-end
    monitoring feature set; pass ``include_categorical=True`` to keep them.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        expected = list(schema.names) + [schema.label_name]
        if header != expected:
            raise DataError(
                f"header mismatch: expected {expected}, found {header}"
            )
        raw = [row for row in reader if row]

    kinds = schema.feature_kinds
    n_cols = len(schema.names)
    kept_raw = []
    n_dropped = 0
    for row in raw:
        if len(row) != n_cols + 1:
            n_dropped += 1
            continue
        ok = True
        for j, kind in enumerate(kinds):
            cell = row[j].strip()
            if kind == KIND_TIMESTAMP:
                continue
            if kind == KIND_CATEGORICAL:
                if cell == "":
                    ok = False
                    break
                continue
            try:
                v = float(cell)
            except ValueError:
                ok = False
                break
            if math.isnan(v) or math.isinf(v):
                ok = False
                break
        if ok:
            try:
                lv = float(row[n_cols].strip())
            except ValueError:
                ok = False
            else:
                ok = not (math.isnan(lv) or math.isinf(lv))
        if ok:
            kept_raw.append(row)
        else:
            n_dropped += 1
    log.info("load_csv: dropped %d of %d rows during cleaning", n_dropped, len(raw))
    if not kept_raw:
        raise DataError("no rows survived cleaning")

    label_vals = [float(r[n_cols]) for r in kept_raw]
    bad = sorted({v for v in label_vals if v not in (0.0, 1.0)})
    if bad:
        raise DataError(f"non-binary label value(s): {bad}")
    labels = np.array([int(v) for v in label_vals], dtype=np.int64)

    keep_idx = []
    for j, kind in enumerate(kinds):
        if kind == KIND_TIMESTAMP:
            continue
        if kind == KIND_CATEGORICAL and not include_categorical:
            continue
        keep_idx.append(j)
    if not keep_idx:
        raise DataError("no feature columns retained")

    columns = []
    for j in keep_idx:
        if kinds[j] == KIND_CATEGORICAL:
            values = [r[j].strip() for r in kept_raw]
            codes = {v: i for i, v in enumerate(sorted(set(values)))}
            columns.append(np.array([codes[v] for v in values], dtype=np.float64))
        else:
            columns.append(np.array([float(r[j]) for r in kept_raw], dtype=np.float64))
    rows = np.column_stack(columns)

    out_schema = ColumnSchema(
        names=tuple(schema.names[j] for j in keep_idx),
        label_name=schema.label_name,
        feature_kinds=tuple(kinds[j] for j in keep_idx),
    )
    if int(labels.sum()) == 0:
        raise DataError("zero minority (failure) rows after cleaning")
    return Dataset(out_schema, rows, labels)


def write_csv(d, path):
    """Serialize a dataset: header row, floats at 9 significant digits,
    label column last, LF line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(d.schema.names) + [d.schema.label_name])
        for i in range(d.n):
            cells = [format(v, ".9g") for v in d.rows[i]]
            cells.append(str(int(d.labels[i])))
            writer.writerow(cells)


def _allocate_counts(n, fracs, ensure_min_one):
    """Largest-remainder allocation of n items over three fractions."""
    exact = [f * n for f in fracs]
    base = [int(math.floor(e)) for e in exact]
    rem = n - sum(base)
    order = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    if ensure_min_one and n >= 3:
        for i in range(3):
            if base[i] == 0:
                j = max(range(3), key=lambda k: (base[k], -k))
                base[j] -= 1
                base[i] += 1
    return base


def stratified_split(d, spec):
    """Deterministic (train, val, test) split.

    Stratified mode allocates per class with largest-remainder rounding and
    guarantees each part at least one row per class (each class must have at
    least 3 rows). Parts are disjoint and exhaustive.
    """
    rng = np.random.default_rng(spec.seed)
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    parts = [[], [], []]
    if spec.stratified:
        for c in (0, 1):
            idx = np.flatnonzero(d.labels == c)
            if idx.size < 3:
                raise DataError(
                    f"class {c} has {idx.size} rows, fewer than the 3 split parts"
                )
            perm = rng.permutation(idx)
            counts = _allocate_counts(idx.size, fracs, ensure_min_one=True)
            start = 0
            for p in range(3):
                parts[p].append(perm[start:start + counts[p]])
                start += counts[p]
        part_idx = [np.sort(np.concatenate(p)) for p in parts]
    else:
        perm = rng.permutation(d.n)
        counts = _allocate_counts(d.n, fracs, ensure_min_one=False)
        start = 0
        part_idx = []
        for p in range(3):
            part_idx.append(np.sort(perm[start:start + counts[p]]))
            start += counts[p]
    return tuple(d.subset(idx) for idx in part_idx)


# Synthetic testbed feature layout: (name, mean, std) in plausible units.
# BER/OSNR of the same end are negatively correlated; OA powers carry no
# class signal and act as distractor dimensions.
_FEATURES = (
    ("ber_tx", 2.0e-6, 4.0e-7),
    ("osnr_tx", 30.0, 0.8),
    ("ber_rx", 1.2e-5, 3.0e-6),
    ("osnr_rx", 26.0, 1.2),
    ("oa1_in", -8.5, 0.6),
    ("oa1_out", 2.2, 0.6),
    ("oa2_in", -9.0, 0.6),
    ("oa2_out", 2.4, 0.6),
    ("oa3_in", -9.5, 0.6),
    ("oa3_out", 2.6, 0.6),
    ("oa4_in", -10.0, 0.6),
    ("oa4_out", 2.8, 0.6),
)
_IDX_BER_TX, _IDX_OSNR_TX, _IDX_BER_RX, _IDX_OSNR_RX = 0, 1, 2, 3
_BER_OSNR_CORR = 0.6
_TRUNCATION_Z = 3.0
# Failures come in two severities, mirroring hard versus drifting faults:
# "severe" rows sit deep in the degraded-osnr_rx tail, "mild" rows straddle
# the edge of the normal population with a tighter spread. Every mean shift
# scales by (1-overlap)**gamma in noise-scaled std units, so shifts are
# monotone in overlap for any fixed seed, and at overlap 0 both severity
# groups clear the truncated normal support on osnr_rx entirely (axis
# separability). OA powers sag mildly under failures (attenuation
# propagating down the amplifier chain), spreading part of the signal over
# many weak features.
_SEVERE_FRACTION = 0.5
_SEVERE_OSNR_SHIFT = 7.5
_SEVERE_GAMMA = 1.8
_MILD_OSNR_SHIFT = 5.4
_MILD_GAMMA = 2.0
_MILD_SPREAD = 0.5
_BER_RX_SHIFT = 4.0
_BER_GAMMA = 2.0
_OA_SHIFT = 1.0
_OA_SHIFT_GAMMA = 1.2


def synthetic_schema():
    return ColumnSchema(
        names=tuple(name for name, _, _ in _FEATURES),
        label_name="failure",
        feature_kinds=tuple(KIND_CONTINUOUS for _ in _FEATURES),
    )


def generate_synthetic(cfg):
    """Sample an imbalanced telemetry dataset: a truncated-Gaussian normal
    population plus a two-severity failure population. Deterministic per
    config; the overlap knob only moves the failure-class means, so for a
    fixed seed the class separation on ``osnr_rx`` is monotone
    non-increasing in overlap.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_normal + cfg.n_failure
    k = len(_FEATURES)
    z = rng.standard_normal((n, k))
    # Negative BER/OSNR coupling per end, then bounded support.
    rho = _BER_OSNR_CORR
    mix = math.sqrt(1.0 - rho * rho)
    z[:, _IDX_BER_TX] = -rho * z[:, _IDX_OSNR_TX] + mix * z[:, _IDX_BER_TX]
    z[:, _IDX_BER_RX] = -rho * z[:, _IDX_OSNR_RX] + mix * z[:, _IDX_BER_RX]
    np.clip(z, -_TRUNCATION_Z, _TRUNCATION_Z, out=z)

    n_severe = int(round(_SEVERE_FRACTION * cfg.n_failure))
    severe = slice(cfg.n_normal, cfg.n_normal + n_severe)
    mild = slice(cfg.n_normal + n_severe, n)
    fail = slice(cfg.n_normal, n)
    z[mild, _IDX_OSNR_RX] *= _MILD_SPREAD

    mus = np.array([m for _, m, _ in _FEATURES])
    sigmas = np.array([s for _, _, s in _FEATURES])
    rows = mus + cfg.noise_scale * sigmas * z

    def shift(base_sigmas, gamma):
        return base_sigmas * (1.0 - cfg.overlap) ** gamma * cfg.noise_scale

    sig_osnr = sigmas[_IDX_OSNR_RX]
    rows[severe, _IDX_OSNR_RX] -= shift(_SEVERE_OSNR_SHIFT, _SEVERE_GAMMA) * sig_osnr
    rows[mild, _IDX_OSNR_RX] -= shift(_MILD_OSNR_SHIFT, _MILD_GAMMA) * sig_osnr
    rows[fail, _IDX_BER_RX] += shift(_BER_RX_SHIFT, _BER_GAMMA) * sigmas[_IDX_BER_RX]
    sag = shift(_OA_SHIFT, _OA_SHIFT_GAMMA)
    for j in range(4, k):
        rows[fail, j] -= sag * sigmas[j]

    labels = np.zeros(n, dtype=np.int64)
    labels[fail] = 1
    return Dataset(synthetic_schema(), rows, labels)
