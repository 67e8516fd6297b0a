"""Recurrent factor model that infers a latent confounder sequence.

The latent value for row t is produced from history only:

    h[0]   = L @ W_init                       (learned start state)
    h[t+1] = tanh(u[t] @ W_u + L @ W_L + h[t] @ W_h + b_h)
    zhat[t] = h[t+1] @ W_z + b_z

where ``u[t] = [zhat[t-1], x[t-1], a[t-1]]`` and ``u[0]`` is all zeros, so the
first latent value depends on the trainable context ``L`` alone. One linear
head per treatment column reads ``[x[t], zhat[t]]`` and predicts ``a[t,j]``;
heads share no parameters (head j owns column j of ``head_w`` plus its bias),
which is what makes the treatments conditionally independent given the
latent value and the covariates.

Inputs are z-scored with training-split statistics; the latent sequence is
emitted in model units. Training is truncated backpropagation through time
over consecutive windows, with the recurrent state carried (detached) across
window boundaries within an epoch.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from ._validation import as_float_array
from .errors import NumericsError, TrainingDivergedError, ValidationError
from .optim import AdamState, EarlyStopping, adam_step
from .panel import Panel

WEIGHT_NAMES = ("L", "W_init", "W_u", "W_L", "W_h", "b_h", "W_z", "b_z", "head_w", "head_b")

_FMT = "{:.17g}"


@dataclass
class FactorModelParams:
    """Trained weights plus the input scaler and dimensions."""

    weights: dict[str, np.ndarray]
    k: int
    hidden_dim: int
    z_dim: int
    x_mean: np.ndarray
    x_std: np.ndarray
    a_mean: np.ndarray
    a_std: np.ndarray

    def copy(self) -> "FactorModelParams":
        return FactorModelParams(
            weights={n: w.copy() for n, w in self.weights.items()},
            k=self.k,
            hidden_dim=self.hidden_dim,
            z_dim=self.z_dim,
            x_mean=self.x_mean.copy(),
            x_std=self.x_std.copy(),
            a_mean=self.a_mean.copy(),
            a_std=self.a_std.copy(),
        )


@dataclass
class TrainingLog:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_r2: list[np.ndarray] = field(default_factory=list)

    def append(self, epoch: int, train_loss: float, val_loss: float, val_r2: np.ndarray):
        self.epoch.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_r2.append(val_r2)

    def to_csv(self, path: str | Path) -> None:
        k = len(self.val_r2[0]) if self.val_r2 else 0
        header = ["epoch", "train_loss", "val_loss"] + [f"r2_{j}" for j in range(1, k + 1)]
        lines = [",".join(header)]
        for i in range(len(self.epoch)):
            row = [str(self.epoch[i]), _FMT.format(self.train_loss[i]), _FMT.format(self.val_loss[i])]
            row += [_FMT.format(v) for v in self.val_r2[i]]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _init_weights(k: int, hidden_dim: int, z_dim: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    u_in = z_dim + 2 * k

    def uniform(fan_in, shape):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(fan_in)

    return {
        "L": rng.normal(0.0, 0.1, size=(1, hidden_dim)),
        "W_init": uniform(hidden_dim, (hidden_dim, hidden_dim)),
        "W_u": uniform(u_in, (u_in, hidden_dim)),
        "W_L": uniform(hidden_dim, (hidden_dim, hidden_dim)),
        "W_h": uniform(hidden_dim, (hidden_dim, hidden_dim)),
        "b_h": np.zeros((1, hidden_dim)),
        "W_z": uniform(hidden_dim, (hidden_dim, z_dim)),
        "b_z": np.zeros((1, z_dim)),
        "head_w": uniform(k + z_dim, (k + z_dim, k)),
        "head_b": np.zeros((1, k)),
    }


def _normalize(panel: Panel, params: FactorModelParams) -> tuple[np.ndarray, np.ndarray]:
    if panel.n_covariates != params.k or panel.n_treatments != params.k:
        raise ValidationError(
            f"panel has {panel.n_covariates} covariates / {panel.n_treatments} treatments, "
            f"model expects k={params.k}"
        )
    x = (panel.x - params.x_mean) / params.x_std
    a = (panel.a - params.a_mean) / params.a_std
    return x, a


class _Carry:
    """Recurrent state passed between BPTT windows (values only, no graph)."""

    __slots__ = ("h", "z", "xa")

    def __init__(self, h, z, xa):
        self.h = h
        self.z = z
        self.xa = xa


def _window_loss(
    tape: ad.Tape,
    pids: dict[str, ad.Tensor],
    x_rows: np.ndarray,
    a_rows: np.ndarray,
    carry: _Carry | None,
    z_dim: int,
    k: int,
) -> tuple[ad.Tensor, _Carry, np.ndarray]:
    """Forward one window on the tape; returns (loss, new carry, zhat rows)."""
    n = len(x_rows)
    lterm = ad.matmul(pids["L"], pids["W_L"])
    if carry is None:
        h = ad.matmul(pids["L"], pids["W_init"])
        z_prev = None
        xa_prev = None
    else:
        h = tape.leaf(carry.h)
        z_prev = tape.leaf(carry.z)
        xa_prev = carry.xa
    z_out = np.empty((n, z_dim))
    acc = None
    for t in range(n):
        if z_prev is None:
            u = tape.leaf(np.zeros((1, z_dim + 2 * k)))
        else:
            u = ad.concat([z_prev, tape.leaf(xa_prev)], axis=1)
        pre = ad.matmul(u, pids["W_u"]) + lterm + (ad.matmul(h, pids["W_h"]) + pids["b_h"])
        h = ad.tanh(pre)
        z_t = ad.matmul(h, pids["W_z"]) + pids["b_z"]
        z_out[t] = z_t.value[0]
        head_in = ad.concat([tape.leaf(x_rows[t][None, :]), z_t], axis=1)
        pred = ad.matmul(head_in, pids["head_w"]) + pids["head_b"]
        diff = pred - tape.leaf(a_rows[t][None, :])
        sq = (diff * diff).sum()
        acc = sq if acc is None else acc + sq
        z_prev = z_t
        xa_prev = np.concatenate([x_rows[t], a_rows[t]])[None, :]
    loss = acc * (1.0 / n)
    new_carry = _Carry(h.value.copy(), z_prev.value.copy(), xa_prev)
    return loss, new_carry, z_out


def sequence_loss_and_grads(
    weights: dict[str, np.ndarray], x_norm: np.ndarray, a_norm: np.ndarray, z_dim: int = 1
) -> tuple[float, dict[str, np.ndarray]]:
    """Full-sequence treatment-prediction loss and its gradients, from a cold
    start. Deterministic in its inputs; used by the gradient-oracle checks."""
    k = x_norm.shape[1]
    tape = ad.Tape()
    pids = {n: tape.leaf(w) for n, w in weights.items()}
    loss, _, _ = _window_loss(tape, pids, x_norm, a_norm, None, z_dim, k)
    grads = ad.backward(tape, loss, [pids[n] for n in WEIGHT_NAMES])
    return float(loss.value), dict(zip(WEIGHT_NAMES, grads))


def _infer_normalized(weights: dict[str, np.ndarray], x: np.ndarray, a: np.ndarray, z_dim: int) -> np.ndarray:
    """Forward-only latent inference on pre-normalized inputs (numpy path)."""
    t_len, k = x.shape
    h = weights["L"] @ weights["W_init"]
    lterm = weights["L"] @ weights["W_L"]
    z_prev = np.zeros((1, z_dim))
    out = np.empty((t_len, z_dim))
    for t in range(t_len):
        if t == 0:
            u = np.zeros((1, z_dim + 2 * k))
        else:
            u = np.concatenate([z_prev[0], x[t - 1], a[t - 1]])[None, :]
        h = ad.tanh_values(u @ weights["W_u"] + lterm + h @ weights["W_h"] + weights["b_h"])
        z_prev = h @ weights["W_z"] + weights["b_z"]
        out[t] = z_prev[0]
    return out


def infer_z_sequence(params: FactorModelParams, panel: Panel) -> np.ndarray:
    """Latent sequence for a panel: row t uses observations up to row t-1 only.

    Never mutates ``params``; deterministic given params and panel.
    """
    x, a = _normalize(panel, params)
    return _infer_normalized(params.weights, x, a, params.z_dim)


def head_outputs(params: FactorModelParams, x_t: np.ndarray, z_t: np.ndarray) -> np.ndarray:
    """Per-treatment head predictions for one step, in model (z-scored) units.

    Head j reads only (x_t, z_t) and its own parameters: column j of
    ``head_w`` plus ``head_b[0, j]``.
    """
    x_t = as_float_array(x_t, "x_t", ndim=1)
    z_t = as_float_array(z_t, "z_t", ndim=1)
    if len(x_t) != params.k or len(z_t) != params.z_dim:
        raise ValidationError(
            f"expected x_t of length {params.k} and z_t of length {params.z_dim}, "
            f"got {len(x_t)} and {len(z_t)}"
        )
    head_in = np.concatenate([x_t, z_t])[None, :]
    return (head_in @ params.weights["head_w"] + params.weights["head_b"])[0]


def _per_column_r2(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    ss_res = ((truth - pred) ** 2).sum(axis=0)
    ss_tot = ((truth - truth.mean(axis=0)) ** 2).sum(axis=0)
    out = np.full(truth.shape[1], np.nan)
    # a constant column leaves rounding dust in ss_tot, so compare to scale
    ok = truth.std(axis=0) > 1e-12 * np.maximum(1.0, np.abs(truth.mean(axis=0)))
    out[ok] = 1.0 - ss_res[ok] / ss_tot[ok]
    return out


class FactorModel(BaseEstimator):
    """Learns the latent confounder by multitask treatment prediction.

    Parameters
    ----------
    hidden_dim : recurrent state size.
    z_dim : emitted confounder dimension.
    epochs : maximum training epochs.
    lr : Adam learning rate.
    window_len : truncation length for backpropagation through time.
    patience : early-stopping patience on validation loss.
    seed : initialization seed.

    After ``fit`` the best-validation parameters are kept in ``params_`` and
    the per-epoch history in ``log_``. ``transform`` emits the latent
    sequence for any compatible panel.
    """

    def __init__(
        self,
        hidden_dim: int = 16,
        z_dim: int = 1,
        epochs: int = 100,
        lr: float = 1e-3,
        window_len: int = 32,
        patience: int = 10,
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.z_dim = z_dim
        self.epochs = epochs
        self.lr = lr
        self.window_len = window_len
        self.patience = patience
        self.seed = seed

    def _validate(self, train: Panel):
        if not self.hidden_dim >= self.z_dim >= 1:
            raise ValidationError(
                f"need hidden_dim >= z_dim >= 1, got {self.hidden_dim} and {self.z_dim}"
            )
        if not self.window_len >= 2:
            raise ValidationError(f"window_len must be >= 2, got {self.window_len}")
        if not len(train) > self.window_len:
            raise ValidationError(
                f"training panel length {len(train)} must exceed window_len {self.window_len}"
            )
        if train.n_covariates != train.n_treatments:
            raise ValidationError("factor model expects matching covariate/treatment counts")

    def fit(self, train: Panel, val: Panel) -> "FactorModel":
        """Train on the train panel, early-stop on the validation panel.

        Validation metrics are computed with the recurrent state warmed over
        the training rows (the two panels are consecutive in time), matching
        how the latent sequence is consumed downstream.
        """
        self._validate(train)
        k = train.n_treatments
        x_std = np.where(train.x.std(axis=0) < 1e-12, 1.0, train.x.std(axis=0))
        a_std = np.where(train.a.std(axis=0) < 1e-12, 1.0, train.a.std(axis=0))
        params = FactorModelParams(
            weights=_init_weights(k, self.hidden_dim, self.z_dim, self.seed),
            k=k,
            hidden_dim=self.hidden_dim,
            z_dim=self.z_dim,
            x_mean=train.x.mean(axis=0),
            x_std=x_std,
            a_mean=train.a.mean(axis=0),
            a_std=a_std,
        )
        x_tr, a_tr = _normalize(train, params)
        x_va, a_va = _normalize(val, params)
        x_all = np.vstack([x_tr, x_va])
        a_all = np.vstack([a_tr, a_va])
        n_tr = len(x_tr)

        state = AdamState(lr=self.lr)
        stopper = EarlyStopping(patience=self.patience)
        log = TrainingLog()
        best = params.copy()
        last_finite = -1
        try:
            for epoch in range(self.epochs):
                carry = None
                total = 0.0
                n_windows = 0
                for s in range(0, n_tr, self.window_len):
                    xw = x_tr[s : s + self.window_len]
                    aw = a_tr[s : s + self.window_len]
                    tape = ad.Tape()
                    pids = {n: tape.leaf(params.weights[n]) for n in WEIGHT_NAMES}
                    loss, carry, _ = _window_loss(tape, pids, xw, aw, carry, self.z_dim, k)
                    grads = ad.backward(tape, loss, [pids[n] for n in WEIGHT_NAMES])
                    params.weights = adam_step(
                        params.weights, dict(zip(WEIGHT_NAMES, grads)), state
                    )
                    total += float(loss.value)
                    n_windows += 1
                z_all = _infer_normalized(params.weights, x_all, a_all, self.z_dim)
                z_va = z_all[n_tr:]
                pred_va = (
                    np.hstack([x_va, z_va]) @ params.weights["head_w"] + params.weights["head_b"]
                )
                val_loss = float(((pred_va - a_va) ** 2).sum(axis=1).mean())
                if not np.isfinite(val_loss):
                    raise NumericsError("validation loss is not finite")
                last_finite = epoch
                r2 = _per_column_r2(pred_va, a_va)
                log.append(epoch, total / n_windows, val_loss, r2)
                if stopper.update(epoch, val_loss):
                    best = params.copy()
                if stopper.should_stop:
                    break
        except NumericsError as exc:
            raise TrainingDivergedError(
                f"training diverged ({exc}); last finite epoch: {last_finite}"
            ) from exc

        self.params_ = best
        self.log_ = log
        self.best_epoch_ = stopper.best_epoch
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this FactorModel instance is not fitted yet")

    def transform(self, panel: Panel) -> np.ndarray:
        """Latent confounder sequence for ``panel`` (T, z_dim); causal in t."""
        self._check_fitted()
        return infer_z_sequence(self.params_, panel)

    def predict_treatments(self, panel: Panel) -> np.ndarray:
        """Head predictions for every row, in raw treatment units."""
        self._check_fitted()
        x, _ = _normalize(panel, self.params_)
        z = self.transform(panel)
        pred = np.hstack([x, z]) @ self.params_.weights["head_w"] + self.params_.weights["head_b"]
        return pred * self.params_.a_std + self.params_.a_mean

    def treatment_r2(self, panel: Panel) -> np.ndarray:
        """Per-treatment R^2 over the panel's rows; NaN marks a zero-variance
        column (undefined rather than clamped)."""
        self._check_fitted()
        return _per_column_r2(self.predict_treatments(panel), panel.a)

    def score(self, panel: Panel) -> float:
        """Mean per-treatment R^2 (ignoring undefined columns)."""
        r2 = self.treatment_r2(panel)
        finite = r2[np.isfinite(r2)]
        if len(finite) == 0:
            return float("nan")
        return float(finite.mean())


def save_params(params: FactorModelParams, path: str | Path) -> None:
    """Serialize params to one JSON document: config echo plus named arrays."""
    doc = {
        "config": {"k": params.k, "hidden_dim": params.hidden_dim, "z_dim": params.z_dim},
        "scaler": {
            "x_mean": params.x_mean.tolist(),
            "x_std": params.x_std.tolist(),
            "a_mean": params.a_mean.tolist(),
            "a_std": params.a_std.tolist(),
        },
        "weights": {
            name: {"shape": list(w.shape), "data": w.ravel().tolist()}
            for name, w in params.weights.items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> FactorModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        weights = {
            name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
            for name, spec in doc["weights"].items()
        }
        if set(weights) != set(WEIGHT_NAMES):
            raise ValidationError(
                f"params file has weights {sorted(weights)}, expected {sorted(WEIGHT_NAMES)}"
            )
        return FactorModelParams(
            weights=weights,
            k=int(doc["config"]["k"]),
            hidden_dim=int(doc["config"]["hidden_dim"]),
            z_dim=int(doc["config"]["z_dim"]),
            x_mean=np.asarray(doc["scaler"]["x_mean"], dtype=np.float64),
            x_std=np.asarray(doc["scaler"]["x_std"], dtype=np.float64),
            a_mean=np.asarray(doc["scaler"]["a_mean"], dtype=np.float64),
            a_std=np.asarray(doc["scaler"]["a_std"], dtype=np.float64),
        )
    except KeyError as exc:
        raise ValidationError(f"params file {path} is missing field {exc}") from None
