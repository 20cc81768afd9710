import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unrest.evaluation import (
    EvalError,
    LabeledScore,
    ManifestEntry,
    UndefinedAurocError,
    auroc,
    confusion_at_threshold,
    read_manifest,
    roc_points,
    write_manifest,
)


def pairwise_auroc(samples):
    """O(n^2) oracle: P(pos > neg) + 0.5 P(tie) over all pairs."""
    pos = [s.score for s in samples if s.label == "anomaly"]
    neg = [s.score for s in samples if s.label == "normal"]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def make_samples(scores, labels):
    return [
        LabeledScore(score=float(s), label=l, id=str(i))
        for i, (s, l) in enumerate(zip(scores, labels))
    ]


class TestAuroc:
    def test_perfect_separation(self):
        samples = make_samples([1, 1, 0, 0], ["anomaly", "anomaly", "normal", "normal"])
        assert auroc(samples) == 1.0

    def test_all_ties_is_half(self):
        samples = make_samples([3, 3, 3, 3], ["anomaly", "normal", "anomaly", "normal"])
        assert auroc(samples) == 0.5

    @given(st.integers(0, 2**32 - 1), st.integers(2, 100))
    @settings(max_examples=100, deadline=None)
    def test_matches_pairwise_oracle(self, seed, n):
        rng = np.random.Generator(np.random.Philox(seed))
        scores = rng.integers(0, 10, size=n).astype(float)  # integer scores force ties
        labels = ["anomaly" if v else "normal" for v in rng.integers(0, 2, size=n)]
        if "anomaly" not in labels:
            labels[0] = "anomaly"
        if "normal" not in labels:
            labels[1] = "normal"
        samples = make_samples(scores, labels)
        assert auroc(samples) == pytest.approx(pairwise_auroc(samples), abs=1e-12)

    def test_label_swap_complements(self):
        rng = np.random.Generator(np.random.Philox(300))
        scores = rng.random(40)
        labels = ["anomaly" if v else "normal" for v in rng.integers(0, 2, size=40)]
        labels[0], labels[1] = "anomaly", "normal"
        samples = make_samples(scores, labels)
        swapped = make_samples(
            scores, ["normal" if l == "anomaly" else "anomaly" for l in labels]
        )
        assert auroc(samples) + auroc(swapped) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.Generator(np.random.Philox(301))
        scores = rng.random(30) * 5
        labels = ["anomaly"] * 10 + ["normal"] * 20
        a = auroc(make_samples(scores, labels))
        b = auroc(make_samples(np.exp(scores), labels))
        assert a == pytest.approx(b, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedAurocError):
            auroc(make_samples([1, 2], ["normal", "normal"]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            LabeledScore(score=float("nan"), label="normal")


class TestConfusion:
    def test_threshold_above_max(self):
        samples = make_samples([1, 2, 3], ["anomaly", "normal", "anomaly"])
        c = confusion_at_threshold(samples, 10.0)
        assert c == {"TP": 0, "FP": 0, "TN": 1, "FN": 2}

    def test_threshold_below_min(self):
        samples = make_samples([1, 2, 3], ["anomaly", "normal", "anomaly"])
        c = confusion_at_threshold(samples, 0.0)
        assert c == {"TP": 2, "FP": 1, "TN": 0, "FN": 0}

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50)
    def test_counts_partition(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        n = int(rng.integers(1, 60))
        samples = make_samples(
            rng.random(n), ["anomaly" if v else "normal" for v in rng.integers(0, 2, size=n)]
        )
        c = confusion_at_threshold(samples, 0.5)
        assert sum(c.values()) == n

    def test_strictly_greater_semantics(self):
        samples = make_samples([1.0], ["anomaly"])
        assert confusion_at_threshold(samples, 1.0)["TP"] == 0


class TestRocPoints:
    def test_endpoints(self):
        samples = make_samples([3, 2, 1], ["anomaly", "normal", "normal"])
        fpr, tpr = roc_points(samples)
        assert fpr[0] == 0 and tpr[0] == 0
        assert fpr[-1] == 1 and tpr[-1] == 1


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = [
            ManifestEntry(path=str(tmp_path / "a.ifg"), split="train", label="normal"),
            ManifestEntry(path=str(tmp_path / "b.ifg"), split="test", label="anomaly"),
        ]
        path = tmp_path / "manifest.tsv"
        write_manifest(entries, path)
        assert read_manifest(path) == entries

    def test_relative_paths_resolved(self, tmp_path):
        (tmp_path / "manifest.tsv").write_text("x.ifg\ttrain\tnormal\n")
        entries = read_manifest(tmp_path / "manifest.tsv")
        assert entries[0].path == str(tmp_path / "x.ifg")

    def test_bad_split_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.ifg\tvalidation\tnormal\n")
        with pytest.raises(EvalError):
            read_manifest(tmp_path / "m.tsv")

    def test_bad_label_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.ifg\ttrain\tweird\n")
        with pytest.raises(EvalError):
            read_manifest(tmp_path / "m.tsv")

    def test_wrong_field_count_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.ifg\ttrain\n")
        with pytest.raises(EvalError):
            read_manifest(tmp_path / "m.tsv")

    def test_empty_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("\n# only a comment\n")
        with pytest.raises(EvalError):
            read_manifest(tmp_path / "m.tsv")
