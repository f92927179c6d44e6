import csv
import json

import numpy as np
import pytest

from kgamc.evaluation import (
    accuracy_by_snr,
    cluster_metrics,
    confusion_matrix,
    evaluate,
    export_report,
)


class TestAccuracy:
    def test_all_correct(self):
        y = np.array([0, 1, 2, 1])
        snr = np.array([0, 0, 10, 10])
        per, overall = accuracy_by_snr(y, y, snr)
        assert overall == 1.0
        assert per == {0: 1.0, 10: 1.0}

    def test_alternating_half(self):
        labels = np.zeros(10, dtype=int)
        preds = np.tile([0, 1], 5)
        per, overall = accuracy_by_snr(preds, labels, np.zeros(10, dtype=int))
        assert overall == 0.5

    def test_random_guess_near_chance(self):
        rng = np.random.default_rng(0)
        n = 10_000
        labels = rng.integers(0, 10, size=n)
        preds = rng.integers(0, 10, size=n)
        _, overall = accuracy_by_snr(preds, labels, np.zeros(n, dtype=int))
        assert abs(overall - 0.1) < 0.02

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy_by_snr(np.array([]), np.array([]), np.array([]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy_by_snr(np.zeros(3), np.zeros(3), np.zeros(2))


class TestConfusion:
    def test_perfect_is_diagonal(self):
        y = np.array([0, 1, 2, 2])
        c = confusion_matrix(y, y, 3)
        assert np.array_equal(c, np.diag([1, 1, 2]))

    def test_single_off_diagonal(self):
        c = confusion_matrix(np.array([5]), np.array([2]), 6)
        assert c[2, 5] == 1 and c.sum() == 1

    def test_row_sums_are_class_counts(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 4, size=200)
        preds = rng.integers(0, 4, size=200)
        c = confusion_matrix(preds, labels, 4)
        for k in range(4):
            assert c[k].sum() == int((labels == k).sum())
        assert c.sum() == 200

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            confusion_matrix(np.array([3]), np.array([0]), 3)


class TestClusterMetrics:
    def test_orthogonal_tight_classes(self):
        feats = np.array(
            [[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1]],
            dtype=float,
        )
        labels = np.array([0, 0, 1, 1, 2, 2])
        intra, inter, sil = cluster_metrics(feats, labels)
        assert intra == pytest.approx(1.0)
        assert inter == pytest.approx(0.0)
        assert sil == pytest.approx(1.0)

    def test_globally_identical_features(self):
        feats = np.ones((6, 4))
        labels = np.array([0, 0, 0, 1, 1, 1])
        intra, inter, sil = cluster_metrics(feats, labels)
        assert intra == pytest.approx(1.0)
        assert inter == pytest.approx(1.0)

    def test_random_features_near_zero(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(400, 128))
        labels = rng.integers(0, 4, size=400)
        intra, inter, _ = cluster_metrics(feats, labels)
        assert abs(intra) < 0.05 and abs(inter) < 0.05

    def test_matches_pairwise_brute_force(self):
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(30, 8))
        labels = rng.integers(0, 3, size=30)
        intra, inter, sil = cluster_metrics(feats, labels)
        u = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        cos = u @ u.T
        same = labels[:, None] == labels[None, :]
        off = ~np.eye(30, dtype=bool)
        assert intra == pytest.approx(cos[same & off].mean(), abs=1e-12)
        assert inter == pytest.approx(cos[~same].mean(), abs=1e-12)
        # silhouette brute force
        svals = []
        for i in range(30):
            d = 1 - cos[i]
            a = d[(labels == labels[i]) & (np.arange(30) != i)].mean()
            b = min(d[labels == c].mean() for c in np.unique(labels) if c != labels[i])
            svals.append((b - a) / max(a, b))
        assert sil == pytest.approx(np.mean(svals), abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(60, 16))
        labels = rng.integers(0, 3, size=60)
        q, _ = np.linalg.qr(rng.normal(size=(16, 16)))
        a = cluster_metrics(feats, labels)
        b = cluster_metrics(feats @ q, labels)
        assert np.allclose(a, b, atol=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            cluster_metrics(np.ones((4, 3)), np.zeros(4, dtype=int))


class TestEvaluateExport:
    def make_report(self, seed=0, n=60):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 3, size=n)
        preds = labels.copy()
        flip = rng.random(n) < 0.3
        preds[flip] = rng.integers(0, 3, size=int(flip.sum()))
        snrs = rng.choice([-10, 0, 10], size=n)
        feats = rng.normal(size=(n, 8))
        return preds, labels, snrs, feats

    def test_trace_equals_pooled_accuracy(self):
        preds, labels, snrs, feats = self.make_report()
        rep = evaluate(preds, labels, snrs, feats, ["A", "B", "C"])
        from_trace = rep.confusion_pooled.trace() / rep.confusion_pooled.sum()
        assert abs(from_trace - rep.overall_accuracy) < 1e-12

    def test_confusion_entries_sum_to_frames(self):
        preds, labels, snrs, feats = self.make_report(1)
        rep = evaluate(preds, labels, snrs, feats, ["A", "B", "C"])
        assert rep.confusion_pooled.sum() == len(preds)

    def test_export_files(self, tmp_path):
        preds, labels, snrs, feats = self.make_report(2)
        rep = evaluate(preds, labels, snrs, feats, ["A", "B", "C"])
        written = export_report(rep, feats, labels, snrs, tmp_path)
        names = {p.name for p in written}
        assert names == {
            "accuracy_by_snr.csv",
            "confusion_pooled.csv",
            "confusion_0.csv",
            "cluster_metrics.json",
            "features.csv",
        }
        with open(tmp_path / "accuracy_by_snr.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["snr_db", "accuracy"]
        assert rows[-1][0] == "overall"
        assert float(rows[-1][1]) == pytest.approx(rep.overall_accuracy, abs=1e-6)

        with open(tmp_path / "features.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == len(feats) + 1
        assert rows[0][:2] == ["label", "snr_db"]

        with open(tmp_path / "cluster_metrics.json") as fh:
            blob = json.load(fh)
        assert blob["intra_class_cos"] == pytest.approx(rep.intra_class_cos)

    def test_confusion_csv_round_trips(self, tmp_path):
        preds, labels, snrs, feats = self.make_report(3)
        rep = evaluate(preds, labels, snrs, feats, ["A", "B", "C"])
        export_report(rep, feats, labels, snrs, tmp_path)
        with open(tmp_path / "confusion_pooled.csv") as fh:
            rows = list(csv.reader(fh))
        parsed = np.array([[int(v) for v in row[1:]] for row in rows[1:]])
        assert np.array_equal(parsed, rep.confusion_pooled)

    def test_empty_report_refused(self, tmp_path):
        preds, labels, snrs, feats = self.make_report(4)
        rep = evaluate(preds, labels, snrs, feats, ["A", "B", "C"])
        rep.n_frames = 0
        with pytest.raises(ValueError):
            export_report(rep, feats, labels, snrs, tmp_path)
