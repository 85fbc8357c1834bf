import numpy as np
import pytest
from sklearn.metrics import f1_score, recall_score

from taxopretrain.evaluation import (
    METHODS,
    AggregateReport,
    RunReport,
    accuracy,
    f_measure,
    f_measure_details,
    per_class_f_measure,
    read_report_csv,
    repeated_evaluation,
    write_report_csv,
)
from taxopretrain.pipeline import TrainConfig
from taxopretrain.seeding import TAG_REPETITION, child_seed
from taxopretrain.synthetic import blob_dataset

QUICK = TrainConfig(epochs=1, hidden_dim=4, batch_size=8, seed=17)


def make_report(method="baseline", rep=0, seed=0, acc=50.0, f=None, per_class=(50.0, 50.0)):
    per_class = np.array(per_class, dtype=np.float64)
    f = acc if f is None else f
    return RunReport(
        method=method,
        repetition=rep,
        seed=seed,
        accuracy=acc,
        f_measure=f,
        f_measure_macro=float(per_class.mean()),
        per_class_f=per_class,
        per_class_defined=tuple([True] * len(per_class)),
    )


def test_accuracy_hand_cases():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 100.0
    assert abs(accuracy([0, 1, 2], [0, 1, 1]) - 200.0 / 3.0) < 1e-12
    assert accuracy([1, 1], [0, 0]) == 0.0


def test_accuracy_validation():
    with pytest.raises(ValueError, match="equal-length"):
        accuracy([0, 1], [0])
    with pytest.raises(ValueError, match="empty"):
        accuracy([], [])
    with pytest.raises(ValueError, match="1-d"):
        accuracy([[0], [1]], [[0], [1]])


def test_f_measure_perfect():
    preds = targets = [0, 1, 2, 0]
    assert f_measure(preds, targets, 3) == 100.0
    assert f_measure(preds, targets, 3, "macro") == 100.0
    assert np.all(per_class_f_measure(preds, targets, 3) == 100.0)


def test_f_measure_degenerate_predictor():
    # predict class 0 always on a balanced binary task:
    # class 0 has P=1/2, R=1 -> F=2/3; class 1 has no predictions -> F=0
    per_class = per_class_f_measure([0, 0], [0, 1], 2)
    assert abs(per_class[0] - 200.0 / 3.0) < 1e-12
    assert per_class[1] == 0.0
    assert abs(f_measure([0, 0], [0, 1], 2) - 100.0 / 3.0) < 1e-12
    assert abs(f_measure([0, 0], [0, 1], 2, "macro") - 100.0 / 3.0) < 1e-12


def test_f_measure_empty_class_scores_zero_but_is_flagged():
    f, support, predicted = f_measure_details([0, 1], [0, 1], 3)
    assert f.tolist() == [100.0, 100.0, 0.0]
    assert support.tolist() == [1, 1, 0]
    assert predicted.tolist() == [1, 1, 0]
    # weighted average ignores the empty class (support 0), macro does not
    assert f_measure([0, 1], [0, 1], 3) == 100.0
    assert abs(f_measure([0, 1], [0, 1], 3, "macro") - 200.0 / 3.0) < 1e-12


def test_f_measure_validation():
    with pytest.raises(ValueError, match="outside"):
        f_measure([0, 3], [0, 1], 3)
    with pytest.raises(ValueError, match="outside"):
        f_measure([0, -1], [0, 1], 3)
    with pytest.raises(ValueError, match="unknown averaging"):
        f_measure([0, 1], [0, 1], 2, "micro")


def test_f_measure_13_class_structure():
    rng = np.random.default_rng(13)
    targets = rng.integers(0, 13, size=400)
    preds = rng.integers(0, 13, size=400)
    f, support, _ = f_measure_details(preds, targets, 13)
    assert f.shape == (13,)
    assert np.all((f >= 0.0) & (f <= 100.0))
    weighted = f_measure(preds, targets, 13)
    assert abs(weighted - np.sum(f * support) / np.sum(support)) < 1e-12


@pytest.mark.parametrize("num_classes", [2, 5, 9])
def test_metrics_match_sklearn(num_classes):
    rng = np.random.default_rng(num_classes)
    labels = list(range(num_classes))
    for _ in range(25):
        n = int(rng.integers(5, 60))
        targets = rng.integers(0, num_classes, size=n)
        preds = rng.integers(0, num_classes, size=n)
        ref_per_class = 100.0 * f1_score(
            targets, preds, labels=labels, average=None, zero_division=0
        )
        assert np.allclose(
            per_class_f_measure(preds, targets, num_classes), ref_per_class, atol=1e-10
        )
        for mode in ("weighted", "macro"):
            ref = 100.0 * f1_score(
                targets, preds, labels=labels, average=mode, zero_division=0
            )
            assert abs(f_measure(preds, targets, num_classes, mode) - ref) < 1e-10


def test_accuracy_equals_weighted_recall():
    rng = np.random.default_rng(99)
    for _ in range(25):
        n = int(rng.integers(4, 50))
        targets = rng.integers(0, 6, size=n)
        preds = rng.integers(0, 6, size=n)
        ref = 100.0 * recall_score(
            targets, preds, labels=list(range(6)), average="weighted", zero_division=0
        )
        assert abs(accuracy(preds, targets) - ref) < 1e-10


def test_aggregate_report_stats():
    reports = [
        make_report(rep=0, seed=1, acc=40.0, per_class=(40.0, 40.0)),
        make_report(rep=1, seed=2, acc=60.0, per_class=(80.0, 40.0)),
    ]
    agg = AggregateReport.from_reports(reports)
    assert agg.repetitions == 2
    assert agg.accuracy_mean == 50.0
    assert agg.accuracy_std == 10.0  # population std, not sample
    assert agg.per_class_mean.tolist() == [60.0, 40.0]


def test_aggregate_report_single_and_constant_runs_have_zero_std():
    agg = AggregateReport.from_reports([make_report(acc=73.25)])
    assert agg.accuracy_mean == 73.25 and agg.accuracy_std == 0.0
    agg = AggregateReport.from_reports([make_report(acc=73.25), make_report(rep=1, acc=73.25)])
    assert agg.accuracy_std == 0.0


def test_aggregate_report_rejects_mixed_or_empty():
    with pytest.raises(ValueError, match="mixed"):
        AggregateReport.from_reports([make_report("baseline"), make_report("taxo")])
    with pytest.raises(ValueError, match="no reports"):
        AggregateReport.from_reports([])


def test_repeated_evaluation_seeds_and_order():
    ds = blob_dataset(seed=3, num_classes=2, samples_per_class=10)
    calls = []
    agg = repeated_evaluation(
        ds, "baseline", QUICK, repetitions=3,
        on_repetition=lambda rep, model, report: calls.append((rep, model, report)),
    )
    assert agg.repetitions == 3
    assert [r.repetition for r in agg.reports] == [0, 1, 2]
    expected = [child_seed(QUICK.seed, TAG_REPETITION, r) for r in range(3)]
    assert [r.seed for r in agg.reports] == expected
    assert len(set(expected)) == 3  # repetitions really differ
    assert [rep for rep, _, _ in calls] == [0, 1, 2]
    assert all(model.num_classes == 2 for _, model, _ in calls)
    assert all(report is agg.reports[rep] for rep, _, report in calls)


def test_repeated_evaluation_parallel_matches_serial():
    ds = blob_dataset(seed=3, num_classes=2, samples_per_class=10)
    serial = repeated_evaluation(ds, "baseline", QUICK, repetitions=2)
    parallel = repeated_evaluation(ds, "baseline", QUICK, repetitions=2, parallel=2)
    assert [r.seed for r in serial.reports] == [r.seed for r in parallel.reports]
    for a, b in zip(serial.reports, parallel.reports):
        assert a.accuracy == b.accuracy
        assert a.f_measure == b.f_measure
        assert np.array_equal(a.per_class_f, b.per_class_f)


def test_repeated_evaluation_validation():
    ds = blob_dataset(seed=3, num_classes=2, samples_per_class=10)
    with pytest.raises(ValueError, match="unknown method"):
        repeated_evaluation(ds, "boosting", QUICK)
    with pytest.raises(ValueError, match="repetitions"):
        repeated_evaluation(ds, "baseline", QUICK, repetitions=0)
    with pytest.raises(ValueError, match="ClassHierarchy"):
        repeated_evaluation(ds, "hierarchy", QUICK, repetitions=1)
    assert "hierarchy" in METHODS


def test_report_csv_round_trip(tmp_path):
    reports = [
        make_report(rep=0, seed=11, acc=100.0 / 3.0, per_class=(100.0 / 7.0, 55.5)),
        make_report(rep=1, seed=12, acc=200.0 / 3.0, per_class=(65.123456789, 44.4)),
    ]
    agg = AggregateReport.from_reports(reports)
    path = tmp_path / "report.csv"
    write_report_csv(path, agg)
    back = read_report_csv(path)
    assert back.repetitions == 2
    for orig, re_read in zip(agg.reports, back.reports):
        assert re_read.method == orig.method
        assert re_read.repetition == orig.repetition
        assert re_read.seed == orig.seed
        assert re_read.accuracy == orig.accuracy  # repr floats: exact round trip
        assert re_read.f_measure == orig.f_measure
        assert np.array_equal(re_read.per_class_f, orig.per_class_f)
    assert back.accuracy_mean == agg.accuracy_mean
    assert back.accuracy_std == agg.accuracy_std


def test_report_csv_layout(tmp_path):
    agg = AggregateReport.from_reports(
        [make_report(acc=40.0), make_report(rep=1, acc=60.0)]
    )
    path = tmp_path / "report.csv"
    write_report_csv(path, agg)
    lines = path.read_text().splitlines()
    assert lines[0] == "method,rep,seed,accuracy,f_measure,f_measure_macro,f_class_0,f_class_1"
    assert len(lines) == 4  # header + 2 repetitions + aggregate
    last = lines[-1].split(",")
    assert last[1] == "aggregate"
    assert last[3] == "50.000000±10.000000"


def test_report_csv_read_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("foo,bar\n1,2\n")
    with pytest.raises(ValueError, match="not a report CSV"):
        read_report_csv(path)
    path.write_text(
        "method,rep,seed,accuracy,f_measure,f_measure_macro,f_class_0\n"
        "baseline,aggregate,,50.0±0.0,50.0±0.0,50.0±0.0,50.0\n"
    )
    with pytest.raises(ValueError, match="no reports"):
        read_report_csv(path)
