"""Forecast-error metrics, confounder alignment, and the with/without summary."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array, check_lengths_match, check_nonempty
from .errors import ValidationError


def _flat_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = as_float_array(pred, "pred").ravel()
    t = as_float_array(truth, "truth").ravel()
    check_nonempty(p, "pred")
    check_lengths_match(p, t, "pred", "truth")
    return p, t


def mse(pred, truth) -> float:
    """Mean squared deviation."""
    p, t = _flat_pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def mae(pred, truth) -> float:
    """Mean absolute deviation."""
    p, t = _flat_pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def r2_score(pred, truth) -> float:
    """1 - SS_res/SS_tot; negative for predictors worse than the mean.

    Returns NaN as the undefined marker when the truth has zero variance.
    """
    p, t = _flat_pair(pred, truth)
    # a constant truth vector leaves rounding dust in ss_tot; compare to scale
    if t.std() <= 1e-12 * max(1.0, abs(float(t.mean()))):
        return float("nan")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


@dataclass
class AlignmentReport:
    """Affine fit of a learned series onto a reference series.

    A latent sequence is identified at best up to an affine map, so quality
    is judged by |pearson_r| after fitting ``z_hat ~ a * z_true + b``.
    ``sign_flipped`` notes anti-correlated alignment (still alignment).
    """

    a: float
    b: float
    pearson_r: float
    r2_affine: float
    sign_flipped: bool
    z_true_aligned: np.ndarray = field(repr=False)


def affine_align(z_hat, z_true) -> AlignmentReport:
    zh = as_float_array(z_hat, "z_hat").ravel()
    zt = as_float_array(z_true, "z_true").ravel()
    check_lengths_match(zh, zt, "z_hat", "z_true")
    if len(zh) < 3:
        raise ValidationError(f"affine alignment needs length >= 3, got {len(zh)}")
    var_t = float(zt.var())
    if var_t == 0.0:
        raise ValidationError("z_true has zero variance; alignment undefined")
    cov = float(np.mean((zt - zt.mean()) * (zh - zh.mean())))
    a = cov / var_t
    b = float(zh.mean() - a * zt.mean())
    sd_h = float(zh.std())
    r = cov / (np.sqrt(var_t) * sd_h) if sd_h > 0 else 0.0
    return AlignmentReport(
        a=a,
        b=b,
        pearson_r=float(r),
        r2_affine=float(r * r),
        sign_flipped=bool(r < 0),
        z_true_aligned=a * zt + b,
    )


@dataclass(frozen=True)
class ImprovementRow:
    """Per (pred_len, forecaster) contrast of the two settings over seeds."""

    pred_len: int
    forecaster: str
    n_seeds: int
    mse_without: float
    mse_with: float
    mse_delta_mean: float
    mse_delta_min: float
    mse_delta_max: float
    mse_improvement_pct: float
    mae_without: float
    mae_with: float
    mae_delta_mean: float
    mae_delta_min: float
    mae_delta_max: float
    mae_improvement_pct: float


def improvement_summary(grid_rows: list[dict]) -> list[ImprovementRow]:
    """Contrast 'with' vs 'without' rows of a metrics grid.

    Each input row needs keys pred_len, setting, forecaster, seed, mse, mae.
    Deltas are (without - with) per seed, aggregated as mean and min/max;
    negative values (confounder made things worse) are reported as-is.
    Raises when a (pred_len, forecaster, seed) pair lacks its counterpart.
    """
    by_key: dict[tuple, dict] = {}
    cells = set()
    for row in grid_rows:
        setting = row["setting"]
        if setting not in ("with", "without"):
            continue
        key = (int(row["pred_len"]), str(row["forecaster"]), int(row["seed"]), setting)
        by_key[key] = row
        cells.add((key[0], key[1], key[2]))
    out = []
    for pred_len, forecaster in sorted({(c[0], c[1]) for c in cells}):
        seeds = sorted(c[2] for c in cells if c[:2] == (pred_len, forecaster))
        mse_wo, mse_wi, mae_wo, mae_wi = [], [], [], []
        for seed in seeds:
            for setting in ("without", "with"):
                if (pred_len, forecaster, seed, setting) not in by_key:
                    raise ValidationError(
                        f"missing counterpart row: pred_len={pred_len}, "
                        f"forecaster={forecaster}, seed={seed}, setting={setting}"
                    )
            mse_wo.append(float(by_key[(pred_len, forecaster, seed, "without")]["mse"]))
            mse_wi.append(float(by_key[(pred_len, forecaster, seed, "with")]["mse"]))
            mae_wo.append(float(by_key[(pred_len, forecaster, seed, "without")]["mae"]))
            mae_wi.append(float(by_key[(pred_len, forecaster, seed, "with")]["mae"]))
        mse_deltas = np.array(mse_wo) - np.array(mse_wi)
        mae_deltas = np.array(mae_wo) - np.array(mae_wi)
        m_wo, m_wi = float(np.mean(mse_wo)), float(np.mean(mse_wi))
        a_wo, a_wi = float(np.mean(mae_wo)), float(np.mean(mae_wi))
        out.append(
            ImprovementRow(
                pred_len=pred_len,
                forecaster=forecaster,
                n_seeds=len(seeds),
                mse_without=m_wo,
                mse_with=m_wi,
                mse_delta_mean=float(mse_deltas.mean()),
                mse_delta_min=float(mse_deltas.min()),
                mse_delta_max=float(mse_deltas.max()),
                mse_improvement_pct=round(100.0 * (m_wo - m_wi) / m_wo, 1),
                mae_without=a_wo,
                mae_with=a_wi,
                mae_delta_mean=float(mae_deltas.mean()),
                mae_delta_min=float(mae_deltas.min()),
                mae_delta_max=float(mae_deltas.max()),
                mae_improvement_pct=round(100.0 * (a_wo - a_wi) / a_wo, 1),
            )
        )
    return out
