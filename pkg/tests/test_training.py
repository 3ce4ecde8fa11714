import numpy as np
import pytest

from stlmine.autodiff import Parameter
from stlmine.data import Dataset, Trace, gen_step_threshold
from stlmine.formula import parse_formula
from stlmine.network import build_fixed_length, build_from_formula
from stlmine.training import TrainConfig, adam_step, evaluate_mcr, fit


class TestAdam:
    def test_first_step_magnitude(self):
        p = Parameter(1.0)
        p.grad = 1.0
        adam_step([p], lr=0.003)
        # bias-corrected first step is lr * g / (|g| + eps-term)
        assert abs((1.0 - p.value) - 0.003) < 1e-5

    def test_zero_gradient_leaves_value(self):
        p = Parameter(0.7)
        for _ in range(10):
            p.grad = 0.0
            adam_step([p], lr=0.01)
        assert p.value == 0.7

    def test_identical_histories_identical_updates(self):
        a, b = Parameter(0.5), Parameter(0.5)
        rng = np.random.default_rng(0)
        for _ in range(20):
            g = float(rng.uniform(-1, 1))
            a.grad = g
            b.grad = g
            adam_step([a], lr=0.01)
            adam_step([b], lr=0.01)
        assert a.value == b.value

    def test_non_finite_gradient_skipped_and_counted(self):
        p = Parameter(0.5)
        p.grad = np.nan
        skipped = adam_step([p], lr=0.01)
        assert skipped == 1
        assert p.value == 0.5 and p.step == 0


class TestEvaluateMcr:
    def _ds(self, labels):
        traces = [
            Trace(f"t{i}", np.full((3, 1), v), l)
            for i, (v, l) in enumerate(labels)
        ]
        return Dataset(traces, ["f0"], "binary")

    def test_quarter_wrong(self):
        # predictions via x0 >= 0: [+,+,-,-] vs labels [+,-,-,-]
        ds = self._ds([(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, -1.0)])
        assert evaluate_mcr(parse_formula("x0 >= 0"), ds) == 0.25

    def test_perfect_separation(self):
        ds = gen_step_threshold(20, 5, seed=0)
        assert evaluate_mcr(parse_formula("G (x0 >= 0)"), ds) == 0.0

    def test_constant_true_on_balanced(self):
        ds = self._ds([(1.0, 1.0), (2.0, -1.0), (3.0, 1.0), (4.0, -1.0)])
        assert evaluate_mcr(parse_formula("x0 >= -100"), ds) == 0.5

    def test_zero_robustness_classifies_positive(self):
        ds = self._ds([(0.5, 1.0)])
        assert evaluate_mcr(parse_formula("x0 >= 0.5"), ds) == 0.0

    def test_label_flip_complements_mcr(self):
        ds = gen_step_threshold(30, 6, seed=1)
        f = parse_formula("G (x0 >= 0)")
        flipped = Dataset(
            [Trace(tr.id, tr.values.copy(), -tr.label) for tr in ds.traces],
            ["f0"],
            "binary",
        )
        assert evaluate_mcr(f, ds) + evaluate_mcr(f, flipped) == 1.0

    def test_continuous_labels_thresholded(self):
        traces = [Trace("a", np.full((2, 1), 1.0), 3.7), Trace("b", np.full((2, 1), -1.0), -0.2)]
        ds = Dataset(traces, ["f0"], "continuous")
        assert evaluate_mcr(parse_formula("x0 >= 0"), ds) == 0.0

    def test_model_input(self):
        ds = gen_step_threshold(10, 4, seed=2)
        m = build_from_formula(parse_formula("G (x0 >= 0)"), 1)
        assert evaluate_mcr(m, ds) == 0.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            evaluate_mcr(parse_formula("x0 >= 0"), Dataset([], ["f0"], "binary"))


class TestFit:
    def test_separable_reaches_zero(self):
        ds = gen_step_threshold(60, 10, seed=3)
        model = build_fixed_length(2, 1, rng=np.random.default_rng(3))
        rep = fit(model, ds, TrainConfig(seed=3, max_epochs=1200))
        assert rep.test_mcr == 0.0
        assert rep.formula_length <= 2
        assert rep.head == "tanh"
        assert len(rep.loss) == rep.epochs

    def test_seeded_determinism(self):
        ds = gen_step_threshold(40, 8, seed=4)
        reports = []
        for _ in range(2):
            model = build_fixed_length(2, 1, rng=np.random.default_rng(5))
            reports.append(fit(model, ds, TrainConfig(seed=5, max_epochs=300)))
        a, b = reports
        assert a.formula == b.formula
        assert a.loss == b.loss
        assert (a.train_mcr, a.test_mcr) == (b.train_mcr, b.test_mcr)

    def test_early_stopping_truncates_full_run(self):
        ds = gen_step_threshold(40, 8, seed=6)
        mk = lambda: build_fixed_length(2, 1, rng=np.random.default_rng(6))
        full = fit(mk(), ds, TrainConfig(seed=6, early_stop=False, max_epochs=400))
        stopped = fit(mk(), ds, TrainConfig(seed=6, early_stop=True, patience=25, max_epochs=400))
        assert stopped.epochs <= full.epochs
        assert stopped.loss == full.loss[: stopped.epochs]
        assert min(stopped.loss) == min(full.loss[: stopped.epochs])

    def test_plateau_schedule_counts_reductions(self):
        ds = gen_step_threshold(40, 8, seed=7)
        model = build_fixed_length(2, 1, rng=np.random.default_rng(7))
        cfg = TrainConfig(seed=7, plateau_mode=True, patience=5, max_epochs=400, lr=0.001)
        rep = fit(model, ds, cfg)
        assert 0 <= rep.lr_reductions <= cfg.plateau_reductions

    def test_continuous_labels_use_identity_head(self):
        base = gen_step_threshold(40, 8, seed=8)
        from stlmine.data import label_continuous

        ds = label_continuous(base, parse_formula("G (x0 >= 0)"))
        model = build_fixed_length(2, 1, rng=np.random.default_rng(8))
        rep = fit(model, ds, TrainConfig(seed=8, max_epochs=200))
        assert rep.head == "identity"

    def test_normalization_round_trip_classification(self):
        # The denormalized (raw-unit) formula classifies raw traces exactly
        # like the trained model classifies normalized traces.
        from stlmine.network import forward_batch, normalize_batch
        from stlmine.semantics import last_step_robustness

        ds = gen_step_threshold(40, 8, seed=9)
        model = build_fixed_length(2, 1, rng=np.random.default_rng(9))
        rep = fit(model, ds, TrainConfig(seed=9, max_epochs=400))
        X = np.stack([tr.values for tr in ds.traces])
        raw_sign = last_step_robustness(rep.formula_object, X) >= 0
        outs, _, _ = forward_batch(model, normalize_batch(model, X))
        np.testing.assert_array_equal(raw_sign, outs >= 0)

    def test_reverse_flag_trains_on_reversed(self):
        # A dataset separable only by the value at the original first step:
        # with reversal the final step is the informative one.
        rng = np.random.default_rng(10)
        traces = []
        for i in range(40):
            pos = i < 20
            v = rng.uniform(-0.1, 0.1, size=(6, 1))
            v[0, 0] = 1.0 if pos else -1.0
            traces.append(Trace(f"t{i}", v, 1.0 if pos else -1.0))
        ds = Dataset(traces, ["f0"], "binary")
        model = build_fixed_length(2, 1, rng=np.random.default_rng(10))
        rep = fit(model, ds, TrainConfig(seed=10, reverse_traces=True, max_epochs=800))
        assert rep.test_mcr <= 0.1

    def test_compare_unquantized_reports_pair(self):
        ds = gen_step_threshold(40, 8, seed=11)
        model = build_fixed_length(2, 1, rng=np.random.default_rng(11))
        rep = fit(model, ds, TrainConfig(seed=11, max_epochs=300, compare_unquantized=True))
        assert rep.test_mcr_unquantized is not None
        assert 0.0 <= rep.test_mcr_unquantized <= 1.0

    def test_minibatch_mode_runs(self):
        ds = gen_step_threshold(24, 6, seed=12)
        model = build_fixed_length(2, 1, rng=np.random.default_rng(12))
        rep = fit(model, ds, TrainConfig(seed=12, max_epochs=50, batch_size=8, early_stop=False))
        assert rep.epochs == 50

    def test_empty_dataset_rejected(self):
        model = build_fixed_length(2, 1)
        with pytest.raises(ValueError):
            fit(model, Dataset([], ["f0"], "binary"), TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(split=1.0)
