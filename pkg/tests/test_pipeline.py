import math

import numpy as np
import pytest

from taxopretrain import pipeline
from taxopretrain.data import Dataset, TimeSeriesSample, class_weights, split
from taxopretrain.pipeline import (
    ClassHierarchy,
    DivergenceError,
    EntropyRanking,
    TaxoConfig,
    TaxoTrace,
    TrainConfig,
    baseline_ranking,
    class_entropy,
    confusion_matrix,
    load_hierarchy,
    predict_classes,
    rank_classes,
    run_baseline,
    run_hierarchy_pretrain,
    run_shuffle_pretrain,
    run_taxo,
    taxo_pretrain,
    train_model,
)
from taxopretrain.rnn import init_params
from taxopretrain.synthetic import blob_dataset, ramp_dataset, separable_dataset

QUICK = TrainConfig(epochs=2, hidden_dim=4, learning_rate=5e-4, batch_size=8, seed=3)


def zeroed_model(dim, hidden, classes, kind="gru"):
    model = init_params(0, dim, hidden, classes, kind)
    for name, arr in model.parameters().items():
        model.set_parameter(name, np.zeros_like(arr))
    return model


def dataset_from_labels(labels, num_classes, dim=1):
    samples = tuple(
        TimeSeriesSample(f"s{i}", int(c), np.full((3, dim), float(i)))
        for i, c in enumerate(labels)
    )
    names = tuple(f"k{c}" for c in range(num_classes))
    return Dataset(samples, num_classes, dim, names)


def params_equal(a, b):
    pa, pb = a.parameters(), b.parameters()
    return pa.keys() == pb.keys() and all(np.array_equal(pa[k], pb[k]) for k in pa)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"learning_rate": -1e-3},
        {"batch_size": 0},
        {"eval_batch_size": 0},
        {"hidden_dim": 0},
        {"cell_kind": "rnn"},
        {"selection_metric": "loss"},
        {"seed": -1},
    ],
)
def test_train_config_validation(kwargs):
    base = dict(epochs=1, hidden_dim=4)
    base.update(kwargs)
    with pytest.raises(ValueError):
        TrainConfig(**base)


def test_taxo_config_validation():
    with pytest.raises(ValueError, match="depth"):
        TaxoConfig(depth=0)
    with pytest.raises(ValueError, match="level_epochs"):
        TaxoConfig(level_epochs=0)
    assert TaxoConfig().depth == 3


def test_train_model_best_matches_history():
    ds = blob_dataset(seed=11, num_classes=3, samples_per_class=8)
    config = TrainConfig(epochs=4, hidden_dim=4, learning_rate=0.01, batch_size=8, seed=1)
    initial = init_params(0, ds.dim, 4, 3)
    model, history = train_model(ds, ds, config, initial)
    assert [rec.epoch for rec in history] == [1, 2, 3, 4]
    best = max(rec.valid_score for rec in history)
    score = pipeline._validation_score(model, ds, config)
    assert score == best


def test_train_model_deterministic_and_initial_untouched():
    ds = blob_dataset(seed=4, num_classes=2, samples_per_class=6)
    initial = init_params(5, ds.dim, 4, 2)
    frozen = {k: v.copy() for k, v in initial.parameters().items()}
    a, hist_a = train_model(ds, ds, QUICK, initial)
    b, hist_b = train_model(ds, ds, QUICK, initial)
    assert params_equal(a, b)
    assert hist_a == hist_b
    assert all(np.array_equal(frozen[k], v) for k, v in initial.parameters().items())


def test_train_model_zero_lr_keeps_initial_and_earliest_epoch():
    # constant validation score across epochs: the tie must keep epoch 1,
    # whose weights (lr 0) are exactly the initial weights
    ds = blob_dataset(seed=4, num_classes=2, samples_per_class=6)
    config = TrainConfig(epochs=3, hidden_dim=4, learning_rate=0.0, batch_size=8, seed=1)
    initial = init_params(5, ds.dim, 4, 2)
    model, history = train_model(ds, ds, config, initial)
    assert params_equal(model, initial)
    assert len({rec.valid_score for rec in history}) == 1


def test_train_model_f_measure_selection():
    ds = blob_dataset(seed=4, num_classes=2, samples_per_class=6)
    config = TrainConfig(
        epochs=2, hidden_dim=4, learning_rate=0.01, batch_size=8, seed=1,
        selection_metric="f_measure",
    )
    _, history = train_model(ds, ds, config, init_params(5, ds.dim, 4, 2))
    assert all(0.0 <= rec.valid_score <= 100.0 for rec in history)


def test_train_model_class_weights_equal_expanded_sample_weights():
    ds = blob_dataset(seed=9, num_classes=3, samples_per_class=5)
    cw = class_weights(ds.labels(), 3)
    initial = init_params(2, ds.dim, 4, 3)
    via_class, _ = train_model(ds, ds, QUICK, initial, class_weights=cw)
    via_sample, _ = train_model(ds, ds, QUICK, initial, sample_weights=cw[ds.labels()])
    assert params_equal(via_class, via_sample)


def test_train_model_validation():
    ds = blob_dataset(seed=1, num_classes=3, samples_per_class=4)
    other = blob_dataset(seed=1, num_classes=2, samples_per_class=4)
    model3 = init_params(0, ds.dim, 4, 3)
    with pytest.raises(ValueError, match="disagree"):
        train_model(ds, other, QUICK, model3)
    with pytest.raises(ValueError, match="does not fit"):
        train_model(other, other, QUICK, model3)
    with pytest.raises(ValueError, match="class_weights"):
        train_model(ds, ds, QUICK, model3, class_weights=np.ones(2))
    with pytest.raises(ValueError, match="sample_weights"):
        train_model(ds, ds, QUICK, model3, sample_weights=np.ones(3))
    empty = Dataset((), 3, ds.dim, ds.class_names)
    with pytest.raises(ValueError, match="nonempty"):
        train_model(ds, empty, QUICK, model3)


def test_train_model_divergence_guard(monkeypatch):
    ds = blob_dataset(seed=1, num_classes=2, samples_per_class=4)
    real = pipeline.model_backward

    def poisoned(*args, **kwargs):
        grads, _, probs = real(*args, **kwargs)
        return grads, float("nan"), probs

    monkeypatch.setattr(pipeline, "model_backward", poisoned)
    with pytest.raises(DivergenceError, match="epoch 1"):
        train_model(ds, ds, QUICK, init_params(0, ds.dim, 4, 2))


def test_predict_classes_tie_takes_lowest_index():
    ds = blob_dataset(seed=2, num_classes=3, samples_per_class=4)
    preds = predict_classes(zeroed_model(ds.dim, 4, 3), ds)
    assert np.all(preds == 0)  # uniform probabilities on a zeroed model


def test_predict_classes_chunking_is_invisible():
    ds = blob_dataset(seed=2, num_classes=3, samples_per_class=4)
    model = init_params(1, ds.dim, 4, 3)
    assert np.array_equal(
        predict_classes(model, ds, batch_size=5), predict_classes(model, ds, batch_size=256)
    )


def test_confusion_matrix_hand_case(monkeypatch):
    valid = dataset_from_labels([0, 0, 1, 1, 2], num_classes=3)
    preds = np.array([0, 1, 1, 1, 0])
    monkeypatch.setattr(pipeline, "predict_classes", lambda *a, **k: preds)
    matrix = confusion_matrix(zeroed_model(1, 4, 3), valid)
    assert matrix.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 0]]
    assert np.array_equal(matrix.sum(axis=1), [2, 2, 1])


def test_confusion_matrix_class_count_mismatch():
    valid = dataset_from_labels([0, 1], num_classes=2)
    with pytest.raises(ValueError, match="classes"):
        confusion_matrix(zeroed_model(1, 4, 3), valid)


def test_class_entropy_hand_values():
    matrix = np.array([[5, 0, 0], [3, 3, 0], [6, 3, 1]])
    ent = class_entropy(matrix)
    assert ent[0] == 0.0
    assert abs(ent[1] - math.log(2.0)) < 1e-15
    expected = -(0.6 * math.log(0.6) + 0.3 * math.log(0.3) + 0.1 * math.log(0.1))
    assert abs(ent[2] - expected) < 1e-15
    assert abs(ent[2] - 0.8979) < 5e-5


def test_class_entropy_row_scale_invariance():
    a = class_entropy(np.array([[2, 2], [1, 3]]))
    b = class_entropy(np.array([[9, 9], [25, 75]]))
    assert np.allclose(a, b, atol=1e-15)


def test_class_entropy_zero_row_warns():
    with pytest.warns(UserWarning, match=r"classes \[1\]"):
        ent = class_entropy(np.array([[4, 0], [0, 0]]))
    assert ent.tolist() == [0.0, 0.0]


def test_class_entropy_rejects_non_square():
    with pytest.raises(ValueError, match="square"):
        class_entropy(np.ones((2, 3)))


def test_rank_classes():
    ranking = rank_classes([0.1, 0.9, 0.5])
    assert ranking.ranking == (1, 2, 0)
    assert np.array_equal(ranking.entropies, [0.1, 0.9, 0.5])
    assert rank_classes([0.5, 0.5, 0.1]).ranking == (0, 1, 2)  # ties: ascending index
    assert rank_classes([0.0, 0.0]).ranking == (0, 1)


def test_rank_classes_scale_invariant():
    rng = np.random.default_rng(0)
    for _ in range(20):
        ent = rng.random(6)
        assert rank_classes(ent).ranking == rank_classes(ent / math.log(2.0)).ranking


def test_taxo_pretrain_level_structure():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=6)
    trace = TaxoTrace()
    model = taxo_pretrain(ds, ds, (2, 0, 3, 1), TaxoConfig(depth=3), QUICK, trace)
    assert model.num_classes == 4
    assert [lvl.level for lvl in trace.levels] == [1, 2, 3]
    for lvl in trace.levels:
        assert lvl.initial.num_classes == lvl.level + 1
        assert lvl.mapping.level == lvl.level
        assert lvl.mapping.ranking == (2, 0, 3, 1)
        assert len(lvl.history) == QUICK.epochs
    # each level continues from the previous level's recurrent unit,
    # with attention and head freshly drawn
    for prev, nxt in zip(trace.levels, trace.levels[1:]):
        for name, arr in prev.trained.cell.weights.items():
            assert np.array_equal(arr, nxt.initial.cell.weights[name])
        assert not np.array_equal(
            prev.trained.attention.proj_weight, nxt.initial.attention.proj_weight
        )


def test_taxo_pretrain_zero_lr_levels_keep_initials():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=6)
    config = TrainConfig(epochs=2, hidden_dim=4, learning_rate=0.0, batch_size=8, seed=3)
    trace = TaxoTrace()
    taxo_pretrain(ds, ds, (0, 1, 2, 3), TaxoConfig(depth=3), config, trace)
    for lvl in trace.levels:
        assert params_equal(lvl.initial, lvl.trained)


def test_taxo_pretrain_depth_validation():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=6)
    with pytest.raises(ValueError, match="depth"):
        taxo_pretrain(ds, ds, (0, 1, 2, 3), TaxoConfig(depth=4), QUICK)


def test_taxo_pretrain_level_epochs_override():
    ds = blob_dataset(seed=7, num_classes=3, samples_per_class=6)
    trace = TaxoTrace()
    taxo_pretrain(ds, ds, (0, 1, 2), TaxoConfig(depth=2, level_epochs=1), QUICK, trace)
    assert all(len(lvl.history) == 1 for lvl in trace.levels)


def test_run_taxo_trace_and_report():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=10)
    trace = TaxoTrace()
    model, report = run_taxo(ds, QUICK, TaxoConfig(depth=3), trace)
    assert model.num_classes == 4
    assert report.method == "taxo"
    assert isinstance(report.ranking_used, EntropyRanking)
    assert sorted(report.ranking_used.ranking) == [0, 1, 2, 3]
    assert len(report.per_class_f) == 4
    assert len(report.epoch_history) == QUICK.epochs
    assert trace.baseline is not None and trace.final_initial is not None
    assert len(trace.levels) == 3
    # final task starts from level depth's recurrent unit, untouched
    for name, arr in trace.levels[-1].trained.cell.weights.items():
        assert np.array_equal(arr, trace.final_initial.cell.weights[name])
    assert trace.final_initial.num_classes == 4


def test_run_taxo_two_classes_depth_one():
    ds = blob_dataset(seed=5, num_classes=2, samples_per_class=10)
    trace = TaxoTrace()
    model, report = run_taxo(ds, QUICK, TaxoConfig(depth=1), trace)
    assert model.num_classes == 2
    assert len(trace.levels) == 1
    assert trace.levels[0].initial.num_classes == 2
    with pytest.raises(ValueError, match="depth"):
        run_taxo(ds, QUICK)  # default depth 3 cannot fit 2 classes


def test_run_taxo_weighted_method_name():
    ds = blob_dataset(seed=5, num_classes=2, samples_per_class=10)
    _, report = run_taxo(ds, QUICK, TaxoConfig(depth=1, weighted_loss=True))
    assert report.method == "taxo-weighted"
    _, report2 = run_taxo(
        ds, QUICK, TaxoConfig(depth=1, weighted_loss=True, weights_from_original=True)
    )
    assert report2.method == "taxo-weighted"


def test_run_baseline_is_the_taxo_step1_model():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=10)
    model, report = run_baseline(ds, QUICK)
    trace = TaxoTrace()
    run_taxo(ds, QUICK, TaxoConfig(depth=3), trace)
    assert params_equal(model, trace.baseline)
    assert report.method == "baseline"


def test_baseline_ranking_on_separable_task():
    ds = separable_dataset(seed=0)
    config = TrainConfig(epochs=50, hidden_dim=16, learning_rate=0.02, batch_size=32, seed=0)
    ranking, confusion = baseline_ranking(ds, config)
    # a solved task confuses nothing: zero entropies, index-order ranking
    assert np.array_equal(confusion, np.diag(np.diag(confusion)))
    assert confusion.sum() == 16  # validation share of 80 samples
    assert np.all(ranking.entropies == 0.0)
    assert ranking.ranking == (0, 1)


def test_shuffle_pretraining_solves_order_task():
    ds = ramp_dataset(seed=0)
    config = TrainConfig(epochs=40, hidden_dim=16, learning_rate=0.02, batch_size=32, seed=0)
    _, report = run_shuffle_pretrain(ds, config)
    assert report.method == "shuffle"
    assert report.accuracy >= 95.0


def test_class_hierarchy_validation():
    identity = {"a": "a", "b": "b", "c": "c"}
    ClassHierarchy(({"a": "x", "b": "x", "c": "y"}, identity))
    with pytest.raises(ValueError, match="at least one level"):
        ClassHierarchy(())
    with pytest.raises(ValueError, match="cover"):
        ClassHierarchy(({"a": "x", "b": "y"}, identity))
    with pytest.raises(ValueError, match="at least 2 groups"):
        ClassHierarchy(({"a": "x", "b": "x", "c": "x"}, identity))
    with pytest.raises(ValueError, match="refine"):
        ClassHierarchy((
            {"a": "x", "b": "x", "c": "y"},
            {"a": "p", "b": "q", "c": "q"},  # q spans x and y
            identity,
        ))
    with pytest.raises(ValueError, match="itself"):
        # singleton groups refine fine, but the names are not the leaves
        ClassHierarchy(({"a": "x", "b": "x", "c": "y"}, {"a": "q", "b": "r", "c": "c"}))


def test_load_hierarchy(fixtures_dir, tmp_path):
    hierarchy = load_hierarchy(fixtures_dir / "hierarchy_4class.json")
    assert len(hierarchy.levels) == 2
    assert hierarchy.leaves == ("class0", "class1", "class2", "class3")
    with pytest.raises(ValueError, match="refine"):
        load_hierarchy(fixtures_dir / "hierarchy_bad.json")
    bad = tmp_path / "h.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ValueError, match="'levels'"):
        load_hierarchy(bad)
    bad.write_text('{"levels": [{"a": 3}]}')
    with pytest.raises(ValueError, match="group names"):
        load_hierarchy(bad)


def test_run_hierarchy_pretrain_head_sequence(fixtures_dir, monkeypatch):
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=10)
    hierarchy = load_hierarchy(fixtures_dir / "hierarchy_4class.json")
    seen = []
    real = pipeline.train_model

    def recording(train, valid, config, initial, **kwargs):
        seen.append(initial.num_classes)
        return real(train, valid, config, initial, **kwargs)

    monkeypatch.setattr(pipeline, "train_model", recording)
    model, report = run_hierarchy_pretrain(ds, hierarchy, QUICK)
    assert seen == [2, 4, 4]  # coarse 2-group level, identity level, final task
    assert model.num_classes == 4
    assert report.method == "hierarchy"


def test_run_hierarchy_pretrain_single_identity_level():
    ds = blob_dataset(seed=7, num_classes=4, samples_per_class=10)
    identity = {name: name for name in ds.class_names}
    model, _ = run_hierarchy_pretrain(ds, ClassHierarchy((identity,)), QUICK)
    assert model.num_classes == 4


def test_run_hierarchy_pretrain_class_mismatch():
    ds = blob_dataset(seed=7, num_classes=3, samples_per_class=10)
    wrong = ClassHierarchy(({"a": "a", "b": "b"},))
    with pytest.raises(ValueError, match="do not match"):
        run_hierarchy_pretrain(ds, wrong, QUICK)
