"""Desk-scale forecasters for the with/without-confounder protocol.

Both estimators record the channel manifest of the windows they were fitted
on and refuse to predict on a different layout, so the two settings can never
be cross-evaluated by accident.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from .errors import (
    ManifestMismatchError,
    NumericsError,
    TrainingDivergedError,
    ValidationError,
)
from .metrics import mae, mse
from .optim import AdamState, EarlyStopping, adam_step
from .windows import WindowSet

_LAMBDA_FLOOR = 1e-10

RIDGE_DEFAULTS = {"ridge_lambda": 1.0}
RECURRENT_DEFAULTS = {
    "hidden_dim": 32,
    "epochs": 100,
    "lr": 1e-3,
    "batch_size": 512,
    "patience": 10,
    "train_thinning": 4,
}


def _check_manifest(fitted: tuple[str, ...], ws: WindowSet):
    if ws.manifest != fitted:
        raise ManifestMismatchError(
            f"forecaster was fitted on channels {fitted} but the window set "
            f"carries {ws.manifest}; the with/without settings must not be mixed"
        )


class RidgeForecaster(BaseEstimator):
    """Closed-form ridge over flattened windows, one output per horizon step.

    Solves (G'G + lambda*I) W = G'Y with a bias column appended to G.
    lambda = 0 falls back to a tiny floor; a system that is singular even
    then raises with the advice to use a positive lambda.
    """

    def __init__(self, ridge_lambda: float = 1.0):
        self.ridge_lambda = ridge_lambda

    def fit(self, train: WindowSet, val: WindowSet | None = None) -> "RidgeForecaster":
        if self.ridge_lambda < 0:
            raise ValidationError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        if len(train) < 1:
            raise ValidationError("ridge fit needs at least one window")
        g = np.hstack([train.inputs, np.ones((len(train), 1))])
        lam = self.ridge_lambda if self.ridge_lambda > 0 else _LAMBDA_FLOOR
        gram = g.T @ g + lam * np.eye(g.shape[1])
        rhs = g.T @ train.targets
        try:
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            w = None
        scale = max(1.0, float(np.abs(rhs).max()))
        if w is not None:
            residual = float(np.abs(gram @ w - rhs).max())
        if w is None or not np.isfinite(w).all() or residual > 1e-8 * scale:
            if self.ridge_lambda == 0:
                raise ValidationError(
                    "normal equations are singular at ridge_lambda=0; use ridge_lambda > 0"
                )
            raise NumericsError(
                f"ridge solve failed the normal-equation residual check "
                f"({residual:.3e} > 1e-8 * {scale:.3e})"
            )
        self.coef_ = w
        self.normal_eq_residual_ = residual
        self.manifest_ = train.manifest
        return self

    def predict(self, ws: WindowSet) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise NotFittedError("this RidgeForecaster instance is not fitted yet")
        _check_manifest(self.manifest_, ws)
        g = np.hstack([ws.inputs, np.ones((len(ws), 1))])
        return g @ self.coef_


def _forecaster_init(c: int, hidden_dim: int, pred_len: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(fan_in)

    return {
        "W_x": uniform(c, (c, hidden_dim)),
        "W_h": uniform(hidden_dim, (hidden_dim, hidden_dim)),
        "b": np.zeros((1, hidden_dim)),
        "W_o": uniform(hidden_dim, (hidden_dim, pred_len)),
        "b_o": np.zeros((1, pred_len)),
    }


_FC_WEIGHTS = ("W_x", "W_h", "b", "W_o", "b_o")


def forecaster_loss_and_grads(
    weights: dict[str, np.ndarray], windows: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Squared-error loss over a window batch and its gradients.

    ``windows`` has shape (batch, seq_len, channels). Used both by training
    and by the finite-difference oracle checks.
    """
    tape = ad.Tape()
    pids = {n: tape.leaf(w) for n, w in weights.items()}
    batch, seq_len, _ = windows.shape
    h = tape.leaf(np.zeros((batch, weights["W_h"].shape[0])))
    for t in range(seq_len):
        xt = tape.leaf(windows[:, t, :])
        pre = ad.add_bias(ad.matmul(xt, pids["W_x"]) + ad.matmul(h, pids["W_h"]), pids["b"])
        h = ad.tanh(pre)
    out = ad.add_bias(ad.matmul(h, pids["W_o"]), pids["b_o"])
    diff = out - tape.leaf(targets)
    loss = (diff * diff).mean()
    grads = ad.backward(tape, loss, [pids[n] for n in _FC_WEIGHTS])
    return float(loss.value), dict(zip(_FC_WEIGHTS, grads))


def _forecaster_predict(weights: dict[str, np.ndarray], windows: np.ndarray) -> np.ndarray:
    h = np.zeros((len(windows), weights["W_h"].shape[0]))
    for t in range(windows.shape[1]):
        h = ad.tanh_values(windows[:, t, :] @ weights["W_x"] + h @ weights["W_h"] + weights["b"])
    return h @ weights["W_o"] + weights["b_o"]


class RecurrentForecaster(BaseEstimator):
    """Small recurrent net: one step per window row, linear read-out to the
    horizon, squared-error training with early stopping on validation loss.

    Consecutive windows overlap in all but one row, so training visits every
    ``train_thinning``-th window; evaluation always uses every window.
    """

    def __init__(
        self,
        hidden_dim: int = 32,
        epochs: int = 100,
        lr: float = 1e-3,
        batch_size: int = 512,
        patience: int = 10,
        train_thinning: int = 4,
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.patience = patience
        self.train_thinning = train_thinning
        self.seed = seed

    def fit(self, train: WindowSet, val: WindowSet) -> "RecurrentForecaster":
        if train.manifest != val.manifest:
            raise ManifestMismatchError(
                f"train windows carry {train.manifest} but validation windows "
                f"carry {val.manifest}"
            )
        for name in ("hidden_dim", "epochs", "batch_size", "train_thinning"):
            if not getattr(self, name) >= 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        c = train.n_channels
        tr_in = train.inputs.reshape(len(train), train.seq_len, c)[:: self.train_thinning]
        tr_out = train.targets[:: self.train_thinning]
        va_in = val.inputs.reshape(len(val), val.seq_len, c)
        weights = _forecaster_init(c, self.hidden_dim, train.pred_len, self.seed)
        state = AdamState(lr=self.lr)
        stopper = EarlyStopping(patience=self.patience)
        best = {n: w.copy() for n, w in weights.items()}
        self.val_loss_history_ = []
        last_finite = -1
        try:
            for epoch in range(self.epochs):
                for s in range(0, len(tr_in), self.batch_size):
                    _, grads = forecaster_loss_and_grads(
                        weights, tr_in[s : s + self.batch_size], tr_out[s : s + self.batch_size]
                    )
                    weights = adam_step(weights, grads, state)
                val_loss = float(np.mean((_forecaster_predict(weights, va_in) - val.targets) ** 2))
                if not np.isfinite(val_loss):
                    raise NumericsError("validation loss is not finite")
                last_finite = epoch
                self.val_loss_history_.append(val_loss)
                if stopper.update(epoch, val_loss):
                    best = {n: w.copy() for n, w in weights.items()}
                if stopper.should_stop:
                    break
        except NumericsError as exc:
            raise TrainingDivergedError(
                f"training diverged ({exc}); last finite epoch: {last_finite}"
            ) from exc
        self.weights_ = best
        self.best_epoch_ = stopper.best_epoch
        self.manifest_ = train.manifest
        return self

    def predict(self, ws: WindowSet) -> np.ndarray:
        if not hasattr(self, "weights_"):
            raise NotFittedError("this RecurrentForecaster instance is not fitted yet")
        _check_manifest(self.manifest_, ws)
        windows = ws.inputs.reshape(len(ws), ws.seq_len, ws.n_channels)
        return _forecaster_predict(self.weights_, windows)


def evaluate_forecaster(model, test: WindowSet) -> dict[str, float]:
    """MSE and MAE averaged over all windows and horizon steps.

    The model's stored channel manifest must match the window set's; a
    mismatch raises instead of silently zero-filling.
    """
    pred = model.predict(test)
    return {"mse": mse(pred, test.targets), "mae": mae(pred, test.targets)}


@dataclass(frozen=True)
class ForecasterSpec:
    """Declarative forecaster choice for configs and the grid runner."""

    kind: str
    ridge_lambda: float | None = None
    hidden_dim: int | None = None
    epochs: int | None = None
    lr: float | None = None
    batch_size: int | None = None
    patience: int | None = None
    train_thinning: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("ridge", "recurrent"):
            raise ValidationError(f"forecaster kind must be 'ridge' or 'recurrent', got {self.kind!r}")
        recurrent_fields = ("hidden_dim", "epochs", "lr", "batch_size", "patience", "train_thinning")
        if self.kind == "ridge":
            bad = [f for f in recurrent_fields if getattr(self, f) is not None]
            if bad:
                raise ValidationError(f"ridge spec must not set recurrent field(s) {bad}")
        else:
            if self.ridge_lambda is not None:
                raise ValidationError("recurrent spec must not set ridge_lambda")

    def make(self, seed: int = 0):
        """Instantiate the estimator, filling unset fields with defaults."""
        if self.kind == "ridge":
            lam = RIDGE_DEFAULTS["ridge_lambda"] if self.ridge_lambda is None else self.ridge_lambda
            return RidgeForecaster(ridge_lambda=lam)
        kwargs = {
            name: default if getattr(self, name) is None else getattr(self, name)
            for name, default in RECURRENT_DEFAULTS.items()
        }
        return RecurrentForecaster(seed=self.seed if self.seed is not None else seed, **kwargs)

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "ForecasterSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown forecaster spec field(s): {sorted(unknown)}")
        return cls(**data)
