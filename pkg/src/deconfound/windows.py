"""Sliding-window construction for the multi-horizon forecasting harness.

Windows never cross a split boundary because they are always built from one
split segment at a time. Inputs are flattened (time, channel) row-major;
the channel manifest names every channel's role so that models fitted on one
channel layout can never be evaluated on another.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array
from .errors import ManifestMismatchError, ValidationError
from .panel import Panel


@dataclass(frozen=True)
class WindowSpec:
    seq_len: int = 96
    pred_len: int = 12
    stride: int = 1

    def __post_init__(self):
        for name in ("seq_len", "pred_len", "stride"):
            if not getattr(self, name) >= 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")


def channel_matrix(panel: Panel, with_confounder: bool) -> tuple[np.ndarray, tuple[str, ...]]:
    """Stack panel channels column-wise and name each column's role."""
    cols = [panel.x, panel.a]
    manifest = [f"x:{j}" for j in range(1, panel.n_covariates + 1)]
    manifest += [f"a:{j}" for j in range(1, panel.n_treatments + 1)]
    if with_confounder:
        if panel.conf is None:
            raise ValidationError("panel has no confounder channels; augment it first")
        cols.append(panel.conf)
        manifest += [f"conf:{panel.conf_kind}:{j}" for j in range(1, panel.conf.shape[1] + 1)]
    return np.hstack(cols), tuple(manifest)


class ChannelNormalizer:
    """Per-channel z-scoring with training-split statistics.

    Also normalizes the target so that reported errors are scale-free; both
    forecasting settings use the identical transform. Channels with (near)
    zero spread are left unscaled instead of dividing by zero.
    """

    def __init__(self):
        self.manifest_: tuple[str, ...] | None = None

    def fit(self, matrix: np.ndarray, y: np.ndarray, manifest: tuple[str, ...]) -> "ChannelNormalizer":
        matrix = as_float_array(matrix, "matrix", ndim=2)
        y = as_float_array(y, "y", ndim=1)
        self.mean_ = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        self.std_ = np.where(std < 1e-12, 1.0, std)
        self.y_mean_ = float(y.mean())
        y_std = float(y.std())
        self.y_std_ = 1.0 if y_std < 1e-12 else y_std
        self.manifest_ = manifest
        return self

    def transform(self, matrix: np.ndarray, y: np.ndarray, manifest: tuple[str, ...]):
        if self.manifest_ is None:
            raise ValidationError("normalizer is not fitted")
        if manifest != self.manifest_:
            raise ManifestMismatchError(
                f"normalizer fitted on {self.manifest_}, asked to transform {manifest}"
            )
        return (matrix - self.mean_) / self.std_, (y - self.y_mean_) / self.y_std_


@dataclass
class WindowSet:
    """Supervised (input window, horizon target) pairs from one split segment."""

    inputs: np.ndarray
    targets: np.ndarray
    manifest: tuple[str, ...]
    seq_len: int
    pred_len: int
    stride: int
    starts: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def n_channels(self) -> int:
        return len(self.manifest)


def build_windows(
    panel: Panel,
    spec: WindowSpec,
    with_confounder: bool,
    normalizer: ChannelNormalizer | None = None,
    segment: str = "segment",
) -> WindowSet:
    """Build all windows of one split segment.

    With ``with_confounder`` the confounder channels join the inputs; the
    targets are always the outcome over the horizon. The number of windows is
    ``(T - seq_len - pred_len) // stride + 1``; the last window's target ends
    exactly at the segment's final row when the stride divides evenly.
    """
    matrix, manifest = channel_matrix(panel, with_confounder)
    y = panel.y
    if normalizer is not None:
        matrix, y = normalizer.transform(matrix, y, manifest)
    t_seg = len(panel)
    needed = spec.seq_len + spec.pred_len
    if t_seg < needed:
        raise ValidationError(
            f"{segment} has {t_seg} rows but seq_len + pred_len requires "
            f"at least {needed}"
        )
    n = (t_seg - needed) // spec.stride + 1
    starts = np.arange(n) * spec.stride
    c = matrix.shape[1]
    inp_view = np.lib.stride_tricks.sliding_window_view(matrix, spec.seq_len, axis=0)
    inputs = inp_view[starts].transpose(0, 2, 1).reshape(n, spec.seq_len * c)
    tgt_view = np.lib.stride_tricks.sliding_window_view(y, spec.pred_len, axis=0)
    targets = tgt_view[starts + spec.seq_len].copy()
    return WindowSet(
        inputs=np.ascontiguousarray(inputs),
        targets=np.ascontiguousarray(targets),
        manifest=manifest,
        seq_len=spec.seq_len,
        pred_len=spec.pred_len,
        stride=spec.stride,
        starts=starts,
    )
