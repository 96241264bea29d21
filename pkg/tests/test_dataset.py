import numpy as np
import pytest

from imbench import forest
from imbench.dataset import (ColumnSchema, Dataset, GeneratorConfig,
                             SplitSpec, generate_synthetic, load_csv,
                             stratified_split, synthetic_schema, write_csv)
from imbench.errors import ConfigError, DataError

from conftest import make_dataset


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


MIXED_SCHEMA = ColumnSchema(
    names=("ts", "device", "ber", "osnr"),
    label_name="failure",
    feature_kinds=("timestamp", "categorical-id", "continuous", "continuous"),
)


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            ColumnSchema(names=("a", "a"), label_name="y",
                         feature_kinds=("continuous", "continuous"))

    def test_label_among_features_rejected(self):
        with pytest.raises(ConfigError):
            ColumnSchema(names=("a", "y"), label_name="y",
                         feature_kinds=("continuous", "continuous"))

    def test_needs_continuous_feature(self):
        with pytest.raises(ConfigError):
            ColumnSchema(names=("a",), label_name="y",
                         feature_kinds=("categorical-id",))


class TestDatasetInvariants:
    def test_rejects_nan(self, toy_schema):
        with pytest.raises(DataError):
            Dataset(toy_schema, [[0.0, np.nan]], [1])

    def test_rejects_non_binary_labels(self, toy_schema):
        with pytest.raises(DataError, match="non-binary"):
            Dataset(toy_schema, [[0.0, 1.0], [1.0, 2.0]], [0, 2])

    def test_counts_and_minority(self):
        d = make_dataset([[0.0], [1.0], [2.0]], [0, 0, 1], names=("x",))
        assert d.class_counts == (2, 1)
        assert d.row_count_per_class == (2, 1)
        assert d.minority_label == 1

    def test_rows_immutable(self, small_imbalanced):
        with pytest.raises(ValueError):
            small_imbalanced.rows[0, 0] = 5.0


class TestLoadCsv:
    def test_nan_rows_dropped(self, tmp_path, caplog):
        lines = ["ts,device,ber,osnr,failure"]
        for i in range(10):
            ber = "NaN" if i == 3 else f"{1e-6 * (i + 1):.9g}"
            osnr = "" if i == 7 else f"{20.0 + i}"
            lines.append(f"t{i},dev{i % 2},{ber},{osnr},{int(i < 5)}")
        path = _write(tmp_path, "data.csv", "\n".join(lines) + "\n")
        with caplog.at_level("INFO"):
            d = load_csv(path, MIXED_SCHEMA)
        assert d.n == 8
        assert "dropped 2" in caplog.text
        # timestamp and categorical dropped by default
        assert d.schema.names == ("ber", "osnr")

    def test_categorical_encoding_with_flag(self, tmp_path):
        text = ("ts,device,ber,osnr,failure\n"
                "t0,beta,1e-6,20,0\n"
                "t1,alpha,2e-6,21,0\n"
                "t2,beta,3e-6,22,1\n")
        d = load_csv(_write(tmp_path, "d.csv", text), MIXED_SCHEMA,
                     include_categorical=True)
        assert d.schema.names == ("device", "ber", "osnr")
        # sorted unique encoding: alpha -> 0, beta -> 1
        assert d.rows[:, 0].tolist() == [1.0, 0.0, 1.0]

    def test_non_binary_label_rejected(self, tmp_path):
        text = "ts,device,ber,osnr,failure\nt0,a,1e-6,20,2\nt1,a,2e-6,21,0\n"
        with pytest.raises(DataError, match="non-binary"):
            load_csv(_write(tmp_path, "d.csv", text), MIXED_SCHEMA)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "absent.csv", MIXED_SCHEMA)

    def test_header_mismatch(self, tmp_path):
        path = _write(tmp_path, "d.csv", "a,b,c\n1,2,0\n")
        with pytest.raises(DataError, match="header mismatch"):
            load_csv(path, MIXED_SCHEMA)

    def test_zero_minority_after_cleaning(self, tmp_path):
        text = ("ts,device,ber,osnr,failure\n"
                "t0,a,1e-6,20,0\n"
                "t1,a,NaN,21,1\n"
                "t2,a,2e-6,22,0\n")
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, "d.csv", text), MIXED_SCHEMA)


class TestCsvRoundTrip:
    def test_write_load_fixed_point(self, tmp_path):
        d = generate_synthetic(GeneratorConfig(n_normal=40, n_failure=8,
                                               seed=3))
        p1 = tmp_path / "one.csv"
        p2 = tmp_path / "two.csv"
        write_csv(d, p1)
        d2 = load_csv(p1, synthetic_schema())
        write_csv(d2, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert d2.n == d.n

    def test_generator_serialization_byte_identical(self, tmp_path):
        cfg = GeneratorConfig(n_normal=50, n_failure=9, seed=123)
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        write_csv(generate_synthetic(cfg), p1)
        write_csv(generate_synthetic(cfg), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestSplit:
    def test_exact_proportional_split(self, small_imbalanced):
        spec = SplitSpec(train_frac=0.6, val_frac=0.2, test_frac=0.2, seed=4)
        tr, va, te = stratified_split(small_imbalanced, spec)
        assert tr.class_counts == (60, 6)
        assert va.class_counts == (20, 2)
        assert te.class_counts == (20, 2)

    def test_partition_disjoint_exhaustive(self, small_imbalanced):
        tr, va, te = stratified_split(small_imbalanced, SplitSpec(seed=9))
        n = small_imbalanced.n
        fingerprints = set()
        for part in (tr, va, te):
            for row in part.rows:
                fingerprints.add(row.tobytes())
        assert tr.n + va.n + te.n == n
        all_fp = {small_imbalanced.rows[i].tobytes() for i in range(n)}
        assert fingerprints == all_fp

    def test_deterministic(self, small_imbalanced):
        a = stratified_split(small_imbalanced, SplitSpec(seed=5))
        b = stratified_split(small_imbalanced, SplitSpec(seed=5))
        for pa, pb in zip(a, b):
            assert pa.fingerprint() == pb.fingerprint()

    def test_bad_fractions(self):
        with pytest.raises(ConfigError, match="do not sum to 1"):
            SplitSpec(train_frac=0.5, val_frac=0.5, test_frac=0.1)

    def test_class_smaller_than_parts(self):
        d = make_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 0, 1],
                         names=("x",))
        with pytest.raises(DataError):
            stratified_split(d, SplitSpec(seed=0))

    def test_each_part_gets_each_class(self):
        d = make_dataset([[float(i)] for i in range(103)],
                         [1, 1, 1] + [0] * 100, names=("x",))
        tr, va, te = stratified_split(d, SplitSpec(seed=2))
        for part in (tr, va, te):
            assert part.class_counts[1] >= 1


class TestGenerator:
    def test_exact_counts(self):
        d = generate_synthetic(GeneratorConfig(n_normal=7859, n_failure=194,
                                               overlap=0.3, seed=1))
        assert d.class_counts == (7859, 194)

    def test_defaults_mirror_cleaned_corpus_counts(self):
        cfg = GeneratorConfig()
        assert (cfg.n_normal, cfg.n_failure) == (7859, 194)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(n_normal=5, n_failure=6)
        with pytest.raises(ConfigError):
            GeneratorConfig(overlap=1.5)

    def test_zero_overlap_axis_separable(self):
        d = generate_synthetic(GeneratorConfig(n_normal=2000, n_failure=60,
                                               overlap=0.0, seed=8))
        osnr = d.rows[:, list(d.schema.names).index("osnr_rx")]
        assert osnr[d.labels == 1].max() < osnr[d.labels == 0].min()

    def test_separation_monotone_in_overlap(self):
        seps = []
        for overlap in (0.0, 0.25, 0.5, 0.75, 1.0):
            d = generate_synthetic(GeneratorConfig(
                n_normal=500, n_failure=60, overlap=overlap, seed=21))
            col = list(d.schema.names).index("osnr_rx")
            x0 = d.rows[d.labels == 0, col]
            x1 = d.rows[d.labels == 1, col]
            pooled = np.sqrt((x0.var(ddof=1) + x1.var(ddof=1)) / 2.0)
            seps.append((x0.mean() - x1.mean()) / pooled)
        assert all(a >= b for a, b in zip(seps, seps[1:]))

    def test_full_overlap_defeats_classifier(self):
        # equal class-conditional means: expected minority F1 stays low
        d = generate_synthetic(GeneratorConfig(n_normal=800, n_failure=40,
                                               overlap=1.0, seed=3))
        f1s = []
        for seed in range(20):
            tr, va, te = stratified_split(d, SplitSpec(seed=seed))
            model = forest.fit(tr, forest.FitConfig(n_trees=30, seed=seed))
            pred = forest.predict(model, te.rows)
            tp = int(((pred == 1) & (te.labels == 1)).sum())
            fp = int(((pred == 1) & (te.labels == 0)).sum())
            fn = int(((pred == 0) & (te.labels == 1)).sum())
            f1s.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
        assert np.mean(f1s) < 0.5
