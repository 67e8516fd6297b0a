import numpy as np
import pytest

from deconfound import (
    ForecasterSpec,
    ManifestMismatchError,
    RecurrentForecaster,
    RidgeForecaster,
    ValidationError,
    evaluate_forecaster,
)
from deconfound.autodiff import gradient_check
from deconfound.forecasters import _forecaster_init, forecaster_loss_and_grads
from deconfound.windows import WindowSet


def make_window_set(n=60, seq_len=8, c=3, pred_len=4, seed=0, targets=None, manifest=None):
    rng = np.random.default_rng(seed)
    inputs = rng.normal(size=(n, seq_len * c))
    if targets is None:
        targets = rng.normal(size=(n, pred_len))
    manifest = manifest or tuple(f"ch:{i}" for i in range(c))
    return WindowSet(
        inputs=inputs,
        targets=targets,
        manifest=manifest,
        seq_len=seq_len,
        pred_len=pred_len,
        stride=1,
        starts=np.arange(n),
    )


class TestRidge:
    def test_zero_targets_give_zero_weights(self):
        ws = make_window_set(targets=np.zeros((60, 4)))
        model = RidgeForecaster(ridge_lambda=1.0).fit(ws)
        assert np.allclose(model.coef_, 0.0, atol=1e-14)

    def test_exact_linear_recovery(self):
        rng = np.random.default_rng(1)
        ws = make_window_set(n=120, seq_len=6, c=2, pred_len=3, seed=1)
        w_star = rng.normal(size=(ws.inputs.shape[1] + 1, 3))
        g = np.hstack([ws.inputs, np.ones((len(ws), 1))])
        ws.targets = g @ w_star
        model = RidgeForecaster(ridge_lambda=1e-10).fit(ws)
        assert np.abs(model.coef_ - w_star).max() < 1e-6

    def test_weight_norm_shrinks_monotonically(self):
        ws = make_window_set()
        norms = [
            float(np.linalg.norm(RidgeForecaster(ridge_lambda=lam).fit(ws).coef_))
            for lam in (1.0, 1e3, 1e6)
        ]
        assert norms[0] > norms[1] > norms[2]

    def test_normal_equation_residual_small(self):
        for seed in range(5):
            ws = make_window_set(seed=seed)
            model = RidgeForecaster(ridge_lambda=0.5).fit(ws)
            g = np.hstack([ws.inputs, np.ones((len(ws), 1))])
            rhs = g.T @ ws.targets
            scale = max(1.0, float(np.abs(rhs).max()))
            assert model.normal_eq_residual_ < 1e-8 * scale

    def test_singular_at_lambda_zero_instructs(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(40, 3)) * 1e8
        inputs = np.hstack([base, base[:, :1]])  # duplicated huge column
        ws = make_window_set(n=40, seq_len=1, c=4, pred_len=2)
        ws.inputs = inputs
        with pytest.raises(ValidationError, match="ridge_lambda > 0"):
            RidgeForecaster(ridge_lambda=0.0).fit(ws)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            RidgeForecaster(ridge_lambda=-1.0).fit(make_window_set())

    def test_manifest_mismatch_on_predict(self):
        ws = make_window_set()
        other = make_window_set(manifest=("a", "b", "c"))
        model = RidgeForecaster().fit(ws)
        with pytest.raises(ManifestMismatchError):
            model.predict(other)


class TestRecurrent:
    def test_constant_target_is_learned(self):
        targets = np.full((80, 3), 0.7)
        train = make_window_set(n=80, seq_len=6, c=2, pred_len=3, seed=2, targets=targets[:80])
        val = make_window_set(n=30, seq_len=6, c=2, pred_len=3, seed=3, targets=np.full((30, 3), 0.7))
        model = RecurrentForecaster(
            hidden_dim=8, epochs=400, lr=1e-2, batch_size=20, patience=50, train_thinning=1, seed=0
        ).fit(train, val)
        assert min(model.val_loss_history_) < 1e-3

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        windows = rng.normal(size=(2, 5, 3))
        targets = rng.normal(size=(2, 4))
        weights = _forecaster_init(3, 3, 4, seed=1)

        def loss_and_grads(params):
            return forecaster_loss_and_grads(params, windows, targets)

        assert gradient_check(loss_and_grads, weights, h=1e-5) < 1e-4

    def test_seed_determinism(self):
        train = make_window_set(n=50, seed=5)
        val = make_window_set(n=20, seed=6)
        hist = []
        for _ in range(2):
            model = RecurrentForecaster(hidden_dim=6, epochs=8, seed=9, train_thinning=1).fit(
                train, val
            )
            hist.append(model.val_loss_history_)
        assert hist[0] == hist[1]

    def test_manifest_mismatch_between_train_and_val(self):
        train = make_window_set()
        val = make_window_set(manifest=("a", "b", "c"))
        with pytest.raises(ManifestMismatchError):
            RecurrentForecaster(epochs=1).fit(train, val)

    def test_manifest_mismatch_on_predict(self):
        train = make_window_set(n=30)
        val = make_window_set(n=10, seed=8)
        model = RecurrentForecaster(hidden_dim=4, epochs=2, seed=0).fit(train, val)
        other = make_window_set(manifest=("a", "b", "c"))
        with pytest.raises(ManifestMismatchError):
            model.predict(other)

    def test_unfitted_predict_rejected(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            RecurrentForecaster().predict(make_window_set())


class _ConstantModel:
    def __init__(self, predictions):
        self.predictions = predictions

    def predict(self, ws):
        return self.predictions


class TestEvaluate:
    def test_perfect_predictions(self):
        ws = make_window_set()
        out = evaluate_forecaster(_ConstantModel(ws.targets.copy()), ws)
        assert out == {"mse": 0.0, "mae": 0.0}

    def test_off_by_one(self):
        ws = make_window_set()
        out = evaluate_forecaster(_ConstantModel(ws.targets + 1.0), ws)
        assert out["mse"] == pytest.approx(1.0, abs=1e-12)
        assert out["mae"] == pytest.approx(1.0, abs=1e-12)

    def test_half_off_by_two(self):
        ws = make_window_set(n=40)
        pred = ws.targets.copy()
        pred[:20] += 2.0
        out = evaluate_forecaster(_ConstantModel(pred), ws)
        assert out["mse"] == pytest.approx(2.0, abs=1e-12)
        assert out["mae"] == pytest.approx(1.0, abs=1e-12)


class TestForecasterSpec:
    def test_ridge_defaults(self):
        model = ForecasterSpec(kind="ridge").make()
        assert isinstance(model, RidgeForecaster)
        assert model.ridge_lambda == 1.0

    def test_recurrent_defaults(self):
        model = ForecasterSpec(kind="recurrent").make(seed=7)
        assert isinstance(model, RecurrentForecaster)
        assert model.hidden_dim == 32
        assert model.lr == 1e-3
        assert model.epochs == 100
        assert model.patience == 10
        assert model.seed == 7

    def test_kind_field_exclusivity(self):
        with pytest.raises(ValidationError):
            ForecasterSpec(kind="ridge", hidden_dim=8)
        with pytest.raises(ValidationError):
            ForecasterSpec(kind="recurrent", ridge_lambda=0.5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError):
            ForecasterSpec(kind="transformer")

    def test_dict_round_trip(self):
        spec = ForecasterSpec(kind="recurrent", hidden_dim=16, epochs=5)
        assert ForecasterSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            ForecasterSpec.from_dict({"kind": "ridge", "window": 3})

    def test_sklearn_get_params(self):
        model = RidgeForecaster(ridge_lambda=2.0)
        assert model.get_params() == {"ridge_lambda": 2.0}
        model.set_params(ridge_lambda=3.0)
        assert model.ridge_lambda == 3.0
