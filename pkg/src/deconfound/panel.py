"""Time-aligned panel container, contiguous splitting, and panel CSV I/O.

A panel holds covariates ``x`` (historical values), treatments ``a`` (current
values), the outcome ``y``, and, for simulated data only, the hidden
confounder ``z_true``. ``y[t]`` is the outcome realized from step ``t-1`` of
the generating recursion, so every row is complete on its own.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._validation import as_float_array, check_finite
from .errors import ValidationError

_FLOAT_FMT = "{:.17g}"


@dataclass
class Panel:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    z_true: np.ndarray | None = None
    conf: np.ndarray | None = None
    conf_kind: str | None = None

    def __post_init__(self):
        self.x = check_finite(as_float_array(self.x, "x", ndim=2), "x")
        self.a = check_finite(as_float_array(self.a, "a", ndim=2), "a")
        self.y = check_finite(as_float_array(self.y, "y", ndim=1), "y")
        t = len(self.y)
        if len(self.x) != t or len(self.a) != t:
            raise ValidationError(
                f"panel arrays disagree on length: x={len(self.x)}, a={len(self.a)}, y={t}"
            )
        if self.z_true is not None:
            self.z_true = check_finite(as_float_array(self.z_true, "z_true", ndim=1), "z_true")
            if len(self.z_true) != t:
                raise ValidationError(f"z_true length {len(self.z_true)} != panel length {t}")
        if self.conf is not None:
            conf = as_float_array(self.conf, "conf")
            if conf.ndim == 1:
                conf = conf[:, None]
            self.conf = check_finite(conf, "conf")
            if len(self.conf) != t:
                raise ValidationError(f"conf length {len(self.conf)} != panel length {t}")
            if self.conf_kind not in ("learned", "oracle"):
                raise ValidationError("conf_kind must be 'learned' or 'oracle' when conf is set")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    @property
    def n_treatments(self) -> int:
        return self.a.shape[1]

    def slice(self, start: int, stop: int) -> "Panel":
        """Contiguous sub-panel over rows [start, stop); arrays are copied."""
        return Panel(
            x=self.x[start:stop].copy(),
            a=self.a[start:stop].copy(),
            y=self.y[start:stop].copy(),
            z_true=None if self.z_true is None else self.z_true[start:stop].copy(),
            conf=None if self.conf is None else self.conf[start:stop].copy(),
            conf_kind=self.conf_kind,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous, time-ordered train/val/test fractions."""

    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {total}")


def split(panel: Panel, spec: SplitSpec) -> tuple[Panel, Panel, Panel]:
    """Split into contiguous train/val/test sub-panels.

    Train and val lengths are floored; the remainder goes to test, so the
    three slices always partition the panel exactly.
    """
    t = len(panel)
    n_train = int(t * spec.train_frac)
    n_val = int(t * spec.val_frac)
    n_test = t - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValidationError(
            f"panel of length {t} too short for fractions "
            f"({spec.train_frac}, {spec.val_frac}, {spec.test_frac})"
        )
    return (
        panel.slice(0, n_train),
        panel.slice(n_train, n_train + n_val),
        panel.slice(n_train + n_val, t),
    )


def augment_panel(panel: Panel, z_hat: np.ndarray, kind: str = "learned") -> Panel:
    """Attach confounder channels as extra covariate-like inputs.

    The original columns are untouched; ``drop_confounder`` restores the
    panel exactly. ``kind='oracle'`` marks channels taken from ``z_true``.
    """
    z_hat = as_float_array(z_hat, "z_hat")
    if z_hat.ndim == 1:
        z_hat = z_hat[:, None]
    if len(z_hat) != len(panel):
        raise ValidationError(f"z_hat length {len(z_hat)} != panel length {len(panel)}")
    if panel.conf is not None:
        raise ValidationError("panel already carries confounder channels")
    return replace(panel, conf=z_hat.copy(), conf_kind=kind)


def drop_confounder(panel: Panel) -> Panel:
    return replace(panel, conf=None, conf_kind=None)


def _header(k_x: int, k_a: int, with_z: bool) -> list[str]:
    cols = ["t"]
    cols += [f"x_{j}" for j in range(1, k_x + 1)]
    cols += [f"a_{j}" for j in range(1, k_a + 1)]
    cols.append("y")
    if with_z:
        cols.append("z")
    return cols


def write_panel_csv(panel: Panel, path: str | Path) -> None:
    """Write ``t, x_1.., a_1.., y[, z]`` with 17-significant-digit floats."""
    path = Path(path)
    with_z = panel.z_true is not None
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(panel.n_covariates, panel.n_treatments, with_z))
        for t in range(len(panel)):
            row = [str(t)]
            row += [_FLOAT_FMT.format(v) for v in panel.x[t]]
            row += [_FLOAT_FMT.format(v) for v in panel.a[t]]
            row.append(_FLOAT_FMT.format(panel.y[t]))
            if with_z:
                row.append(_FLOAT_FMT.format(panel.z_true[t]))
            writer.writerow(row)


def read_panel_csv(path: str | Path) -> Panel:
    """Read a panel written by :func:`write_panel_csv`; strict about cells."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        k_x = sum(1 for c in header if c.startswith("x_"))
        k_a = sum(1 for c in header if c.startswith("a_"))
        with_z = "z" in header
        expected = _header(k_x, k_a, with_z)
        if header != expected:
            raise ValidationError(f"{path} has unexpected header {header}, expected {expected}")
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise ValidationError(f"{path} row {i}: expected {len(header)} cells, got {len(row)}")
            parsed = []
            for name, cell in zip(header, row):
                if cell.strip() == "":
                    raise ValidationError(f"{path} row {i}: empty cell in column '{name}'")
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path} row {i}: non-numeric cell '{cell}' in column '{name}'"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValidationError(f"{path} contains a header but no rows")
    data = np.asarray(rows, dtype=np.float64)
    x = data[:, 1 : 1 + k_x]
    a = data[:, 1 + k_x : 1 + k_x + k_a]
    y = data[:, 1 + k_x + k_a]
    z = data[:, -1] if with_z else None
    return Panel(x=x, a=a, y=y, z_true=z)
