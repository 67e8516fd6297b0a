"""Synthetic confounded panels from a linear structural causal model.

Generator recursion, run for t = p .. p+T-1 after a zeroed warm-up:

    Z[t]   = (1/p) * sum_{i=1..p} (lambda_i * mean(A[t-i]) + beta_i * Z[t-i]) + eps_t
    A[t,j] = gamma_a * Z[t] + (1 - gamma_a) * X[t,j]
    X[t+1] = A[t] + eta_{t+1}
    Y[t+1] = gamma_y * Z[t] + (1 - gamma_y) * mean_j X[t+1,j]

with eta_t ~ N(0, sigma_eta^2), eps_t ~ N(0, sigma_eps^2) drawn i.i.d. per
step, and lambda_i ~ N(0, lambda_scale^2), beta_i ~ N(1 - i/p, (1/p)^2) drawn
once per panel. The treatment vector entering the Z recursion is reduced to
its arithmetic mean (see :func:`mean_reduce`). The first p steps are warm-up
and are not emitted.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import as_float_array, check_nonempty
from .errors import SimulationError, ValidationError
from .panel import Panel

_Z_STABILITY_LIMIT = 1e6


@dataclass(frozen=True)
class SimulationConfig:
    T: int = 5000
    k: int = 5
    p: int = 5
    gamma_a: float = 0.5
    gamma_y: float = 0.5
    sigma_eta: float = 0.001
    sigma_eps: float = 0.001
    lambda_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValidationError(f"p must be >= 1, got {self.p}")
        if not self.T > self.p:
            raise ValidationError(f"T must exceed p, got T={self.T}, p={self.p}")
        if not self.k >= 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        for name in ("gamma_a", "gamma_y"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("sigma_eta", "sigma_eps", "lambda_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown simulation config field(s): {sorted(unknown)}")
        return cls(**data)


def mean_reduce(v: np.ndarray) -> float:
    """Arithmetic mean, used to reduce the treatment vector to the scalar
    entering the confounder recursion; for k=1 this is the identity."""
    v = as_float_array(v, "v", ndim=1)
    check_nonempty(v, "v")
    return float(v.mean())


class _Draws(NamedTuple):
    lam: np.ndarray
    beta: np.ndarray


def _draw_lag_coefficients(rng: np.random.Generator, p: int, lambda_scale: float) -> _Draws:
    lam = rng.normal(0.0, lambda_scale, size=p)
    beta = rng.normal(1.0 - np.arange(1, p + 1) / p, 1.0 / p)
    return _Draws(lam, beta)


def simulate(config: SimulationConfig) -> Panel:
    """Generate one confounded panel of length ``config.T``.

    The recursion runs one internal step past the emitted range so the final
    row's outcome is computed from its own equation. Identical configs
    (including seed) produce bit-identical panels.
    """
    T, k, p = config.T, config.k, config.p
    rng = np.random.default_rng(config.seed)
    lam, beta = _draw_lag_coefficients(rng, p, config.lambda_scale)
    # lag i=1..p pairs with rows t-1..t-p, so reverse once here
    lam_rev = lam[::-1].copy()
    beta_rev = beta[::-1].copy()

    n = p + T + 1
    x = np.zeros((n, k))
    a = np.zeros((n, k))
    z = np.zeros(n)
    y = np.zeros(n)
    a_mean = np.zeros(n)

    x[:p] = rng.normal(0.0, config.sigma_eta, size=(p, k))
    x[p] = a[p - 1] + rng.normal(0.0, config.sigma_eta, size=k)
    y[p] = config.gamma_y * z[p - 1] + (1.0 - config.gamma_y) * x[p].mean()

    ga, gy = config.gamma_a, config.gamma_y
    for t in range(p, p + T):
        zt = (lam_rev @ a_mean[t - p : t] + beta_rev @ z[t - p : t]) / p + rng.normal(
            0.0, config.sigma_eps
        )
        if not np.isfinite(zt) or abs(zt) > _Z_STABILITY_LIMIT:
            raise SimulationError(
                f"confounder recursion left its stable range at step {t - p} "
                f"(Z={float(zt):.6g}); try a smaller p or a different seed"
            )
        z[t] = zt
        a[t] = ga * zt + (1.0 - ga) * x[t]
        a_mean[t] = a[t].mean()
        x[t + 1] = a[t] + rng.normal(0.0, config.sigma_eta, size=k)
        y[t + 1] = gy * zt + (1.0 - gy) * x[t + 1].mean()

    sl = slice(p, p + T)
    return Panel(x=x[sl].copy(), a=a[sl].copy(), y=y[sl].copy(), z_true=z[sl].copy())


@dataclass(frozen=True)
class OverlapFlag:
    column: int
    bin_index: int
    residual_ratio: float


@dataclass
class OverlapReport:
    """Advisory positivity proxy; never fatal.

    For each treatment column, covariate values are binned and the treatment
    is regressed on the covariate within each populated bin. A residual
    spread far below the column's overall spread means the treatment is
    (near-)deterministic given the covariate there, i.e. conditional support
    is degenerate.
    """

    bins: int
    threshold: float
    flags: list[OverlapFlag]
    n_bins_checked: int
    n_bins_skipped: int

    @property
    def flagged(self) -> bool:
        return len(self.flags) > 0


def overlap_diagnostic(
    panel: Panel, bins: int = 10, threshold: float = 0.05, min_bin_count: int = 5
) -> OverlapReport:
    if len(panel) == 0:
        raise ValidationError("panel must be non-empty")
    if panel.n_covariates != panel.n_treatments:
        raise ValidationError("overlap diagnostic expects matching covariate/treatment columns")
    flags: list[OverlapFlag] = []
    checked = skipped = 0
    for j in range(panel.n_treatments):
        xj = panel.x[:, j]
        aj = panel.a[:, j]
        overall = float(aj.std())
        edges = np.linspace(xj.min(), xj.max(), bins + 1)
        which = np.clip(np.digitize(xj, edges[1:-1]), 0, bins - 1)
        for b in range(bins):
            mask = which == b
            count = int(mask.sum())
            if count == 0:
                continue  # no covariate mass: skipped, never flagged
            if count < min_bin_count:
                skipped += 1
                continue
            checked += 1
            xb, ab = xj[mask], aj[mask]
            coeffs = np.polyfit(xb, ab, 1) if xb.std() > 0 else np.array([0.0, ab.mean()])
            resid = ab - np.polyval(coeffs, xb)
            ratio = float(resid.std() / overall) if overall > 0 else 0.0
            if ratio < threshold:
                flags.append(OverlapFlag(column=j, bin_index=b, residual_ratio=ratio))
    return OverlapReport(
        bins=bins,
        threshold=threshold,
        flags=flags,
        n_bins_checked=checked,
        n_bins_skipped=skipped,
    )
