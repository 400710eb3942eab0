import numpy as np
import pytest

from dialectid.corpus import LabeledCorpus
from dialectid.mfcc import FeatureMatrix, MfccConfig
from dialectid.models import build_ann
from dialectid.nn.core import Tensor
from dialectid.train_eval import (
    EarlyStopping,
    Metrics,
    TrainConfig,
    compute_metrics,
    evaluate,
    train,
)
from corpora import blob_corpus


class ScriptedModel:
    """Implements the training protocol; validation losses follow a script.

    Validation items must all carry label 0; the forward pass in inference
    mode returns probabilities whose cross-entropy equals the next scripted
    value. snapshot/restore record the epoch they captured, which lets tests
    observe which epoch's parameters were restored.
    """

    def __init__(self, schedule, n_classes=2):
        self.schedule = list(schedule)
        self.n_classes = n_classes
        self.grad_clip_norm = None
        self.marker = Tensor(np.zeros(1))
        self.val_evals = 0
        self.restored_value = None

    def parameters(self):
        return [self.marker]

    def reseed_dropout(self, seed):
        pass

    def forward(self, x, train=False):
        n = len(x)
        if train:
            return np.full((n, self.n_classes), 1.0 / self.n_classes)
        loss = self.schedule[self.val_evals]
        self.val_evals += 1
        p = float(np.exp(-loss))
        probs = np.full((n, self.n_classes), (1.0 - p) / (self.n_classes - 1))
        probs[:, 0] = p
        return probs

    def backward(self, dlogits):
        self.marker.grad = np.zeros(1)

    def snapshot(self):
        return [np.array([float(self.val_evals)])]

    def restore(self, snap):
        self.restored_value = float(snap[0][0])


class TestEarlyStopping:
    def test_improvements_keep_it_running(self):
        stopper = EarlyStopping(patience=3)
        for epoch, loss in enumerate([5.0, 4.0, 3.0, 2.0, 1.0], start=1):
            assert stopper.observe(epoch, loss) is False
            assert stopper.improved
        assert stopper.best_epoch == 5

    def test_stops_after_patience_consecutive_non_improvements(self):
        stopper = EarlyStopping(patience=3)
        outcomes = [stopper.observe(e, loss) for e, loss in
                    enumerate([3.0, 2.0, 5.0, 5.0, 5.0], start=1)]
        assert outcomes == [False, False, False, False, True]
        assert stopper.best_epoch == 2
        assert stopper.best_loss == 2.0

    def test_improvement_resets_the_counter(self):
        stopper = EarlyStopping(patience=2)
        losses = [3.0, 4.0, 2.5, 4.0, 4.0]
        outcomes = [stopper.observe(e, l) for e, l in enumerate(losses, start=1)]
        assert outcomes == [False, False, False, False, True]
        assert stopper.best_epoch == 3

    def test_plateau_is_not_improvement(self):
        stopper = EarlyStopping(patience=2)
        assert stopper.observe(1, 3.0) is False
        assert stopper.observe(2, 3.0) is False  # equal: no improvement
        assert stopper.observe(3, 3.0) is True
        assert stopper.best_epoch == 1

    def test_sub_tolerance_drop_is_not_improvement(self):
        stopper = EarlyStopping(patience=1, tolerance=1e-9)
        assert stopper.observe(1, 1.0) is False
        assert stopper.observe(2, 1.0 - 1e-12) is True


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-4
        assert cfg.batch_size == 32
        assert cfg.max_epochs == 200
        assert cfg.patience == 10

    def test_patience_must_be_below_max_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=10, patience=10)
        TrainConfig(max_epochs=10, patience=9)

    def test_positive_fields(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)


class TestScriptedTraining:
    def run(self, schedule, patience, max_epochs=200):
        model = ScriptedModel(schedule)
        train_set = blob_corpus(4, seed=0, shape=(1, 1))
        val_set = blob_corpus(1, seed=1, shape=(1, 1), n_classes=1)
        config = TrainConfig(patience=patience, max_epochs=max_epochs)
        _, history = train(model, train_set, val_set, config)
        return model, history

    def test_stops_exactly_at_best_plus_patience(self):
        schedule = [5.0, 4.0, 3.0, 2.0, 1.0] + [1.5] * 30
        model, history = self.run(schedule, patience=10)
        assert history.best_epoch == 5
        assert history.stopped_epoch == 15
        assert history.best_loss == pytest.approx(1.0, abs=1e-9)
        assert len(history.val_loss) == 15

    def test_restores_best_epoch_parameters(self):
        schedule = [3.0, 2.0] + [5.0] * 10
        model, history = self.run(schedule, patience=2)
        assert history.best_epoch == 2
        assert history.stopped_epoch == 4
        assert model.restored_value == 2.0

    def test_monotone_improvement_runs_to_max_epochs(self):
        schedule = [10.0 - 0.5 * k for k in range(12)]
        model, history = self.run(schedule, patience=4, max_epochs=12)
        assert history.stopped_epoch == 12
        assert history.best_epoch == 12
        assert model.restored_value == 12.0

    def test_plateau_from_start(self):
        schedule = [2.0] * 10
        model, history = self.run(schedule, patience=3)
        assert history.best_epoch == 1
        assert history.stopped_epoch == 4
        assert model.restored_value == 1.0

    def test_monitored_name(self):
        model, history = self.run([1.0] + [2.0] * 5, patience=2)
        assert history.monitored == "val_loss"


class TestRealTraining:
    CONFIG = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=40,
                         patience=5)

    def test_learns_separable_blobs(self):
        train_set = blob_corpus(12, seed=0)
        model = build_ann((2, 2), n_classes=2, seed=0)
        model, history = train(model, train_set, None, self.CONFIG)
        assert history.monitored == "train_loss"
        assert history.val_loss == []
        metrics = evaluate(model, train_set)
        assert metrics.accuracy >= 0.9
        assert history.train_loss[-1] < history.train_loss[0]

    def test_history_bookkeeping(self):
        train_set = blob_corpus(10, seed=2)
        val_set = blob_corpus(4, seed=3)
        model = build_ann((2, 2), n_classes=2, seed=1)
        model, history = train(model, train_set, val_set, self.CONFIG)
        assert len(history.train_loss) == history.stopped_epoch
        assert len(history.val_loss) == history.stopped_epoch
        assert len(history.train_accuracy) == history.stopped_epoch
        assert history.stopped_epoch - history.best_epoch <= self.CONFIG.patience
        assert history.stopped_epoch <= self.CONFIG.max_epochs
        assert history.best_loss == min(history.val_loss)

    def test_restored_parameters_reproduce_best_val_loss(self):
        from dialectid.train_eval import _loss_and_accuracy
        train_set = blob_corpus(10, seed=4, spread=0.8)
        val_set = blob_corpus(4, seed=5, spread=0.8)
        model = build_ann((2, 2), n_classes=2, seed=2)
        model, history = train(model, train_set, val_set, self.CONFIG)
        x_val, y_val = val_set.as_arrays()
        loss, _ = _loss_and_accuracy(model, x_val, y_val)
        assert loss == pytest.approx(history.best_loss, abs=1e-9)

    def test_partial_final_batch_is_trained(self):
        # 5 items with batch 32: a single short batch must still work
        train_set = blob_corpus(5, seed=6, n_classes=1)
        model = build_ann((2, 2), n_classes=2, seed=0)
        config = TrainConfig(learning_rate=1e-3, batch_size=32, max_epochs=3,
                             patience=2)
        _, history = train(model, train_set, None, config)
        assert len(history.train_loss) == history.stopped_epoch >= 1

    def test_deterministic_for_fixed_seed(self):
        def run():
            train_set = blob_corpus(8, seed=7)
            model = build_ann((2, 2), n_classes=2, seed=3)
            model, history = train(model, train_set, None, self.CONFIG)
            return history.train_loss, [p.values.copy() for p in model.parameters()]

        loss_a, params_a = run()
        loss_b, params_b = run()
        assert loss_a == loss_b
        for pa, pb in zip(params_a, params_b):
            np.testing.assert_array_equal(pa, pb)

    def test_shuffle_seed_changes_trajectory(self):
        train_set = blob_corpus(8, seed=8)
        runs = []
        for seed in (0, 1):
            model = build_ann((2, 2), n_classes=2, seed=3)
            cfg = TrainConfig(learning_rate=1e-3, batch_size=4, max_epochs=5,
                              patience=2, seed=seed)
            _, history = train(model, train_set, None, cfg)
            runs.append(history.train_loss)
        assert runs[0] != runs[1]


class TestMetrics:
    def test_hand_computed_three_class_fixture(self):
        y_true = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 2])
        y_pred = np.array([0, 0, 1, 2, 1, 1, 0, 2, 2, 1])
        m = compute_metrics(y_true, y_pred, 3)
        np.testing.assert_array_equal(m.confusion, [[2, 1, 1],
                                                    [1, 2, 0],
                                                    [0, 1, 2]])
        assert m.accuracy == pytest.approx(0.6)
        np.testing.assert_allclose(m.precision, [2 / 3, 2 / 4, 2 / 3])
        np.testing.assert_allclose(m.recall, [2 / 4, 2 / 3, 2 / 3])
        np.testing.assert_allclose(m.f1, [4 / 7, 4 / 7, 2 / 3])

    def test_confusion_rows_are_actual(self):
        m = compute_metrics(np.array([0, 0, 0]), np.array([1, 1, 2]), 3)
        np.testing.assert_array_equal(m.confusion, [[0, 2, 1],
                                                    [0, 0, 0],
                                                    [0, 0, 0]])

    def test_absent_class_scores_zero(self):
        m = compute_metrics(np.array([0, 0]), np.array([0, 0]), 3)
        assert m.precision[1] == 0.0
        assert m.recall[1] == 0.0
        assert m.f1[1] == 0.0

    def test_never_predicted_class_has_zero_precision_f1(self):
        m = compute_metrics(np.array([0, 1]), np.array([0, 0]), 2)
        assert m.precision[1] == 0.0
        assert m.f1[1] == 0.0
        assert m.recall[1] == 0.0

    def test_micro_recall_equals_accuracy(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            n = int(rng.integers(1, 60))
            y_true = rng.integers(0, 6, n)
            y_pred = rng.integers(0, 6, n)
            m = compute_metrics(y_true, y_pred, 6)
            assert m.micro_recall == pytest.approx(m.accuracy, abs=1e-15)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(np.array([0, 1]), np.array([0]), 2)


class UniformModel:
    n_classes = 6

    def forward(self, x, train=False):
        return np.full((len(x), 6), 1.0 / 6.0)


class TestEvaluate:
    def test_probability_ties_resolve_to_lowest_index(self):
        corpus = blob_corpus(3, seed=0, n_classes=6)
        metrics = evaluate(UniformModel(), corpus)
        # every prediction lands on class 0
        assert metrics.confusion[:, 0].sum() == len(corpus)
        assert metrics.accuracy == pytest.approx(3 / 18)

    def test_perfect_model_on_blobs(self):
        train_set = blob_corpus(12, seed=1)
        model = build_ann((2, 2), n_classes=2, seed=0)
        model, _ = train(model, train_set, None,
                         TrainConfig(learning_rate=1e-3, batch_size=8,
                                     max_epochs=40, patience=5))
        held_out = blob_corpus(10, seed=99)
        metrics = evaluate(model, held_out)
        assert metrics.accuracy >= 0.9
        assert metrics.confusion.sum() == len(held_out)
