"""End-to-end run driver: source -> split -> factor model -> latent sequence
-> augmented panels -> forecaster grid -> reports.

Every artifact is a pure function of the run config (seeds included), so
re-running a finished configuration reproduces the output directory byte for
byte. A ``_INCOMPLETE`` marker file exists while a run is in flight and is
removed on success, so interrupted runs are recognizable.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StageError, ValidationError
from .factor_model import FactorModel, save_params
from .forecasters import ForecasterSpec, evaluate_forecaster
from .ingest import DatasetManifest, load_csv
from .metrics import affine_align, improvement_summary
from .panel import Panel, SplitSpec, augment_panel, split, write_panel_csv
from .simulate import SimulationConfig, simulate
from .windows import ChannelNormalizer, WindowSpec, build_windows, channel_matrix

_FMT = "{:.17g}"
INCOMPLETE_MARKER = "_INCOMPLETE"

STAGES = ("simulate", "train-factor", "infer-z", "forecast", "report")

_SETTING_ORDER = {"without": 0, "with": 1, "oracle": 2}


@dataclass
class RunConfig:
    """Mirror of the run-config JSON document."""

    source: SimulationConfig | DatasetManifest
    factor_model: dict = field(default_factory=dict)
    seq_len: int = 96
    pred_lens: tuple[int, ...] = (12, 24, 36, 48)
    stride: int = 1
    forecasters: tuple[ForecasterSpec, ...] = (
        ForecasterSpec(kind="ridge"),
        ForecasterSpec(kind="recurrent"),
    )
    split: SplitSpec = field(default_factory=SplitSpec)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    include_oracle: bool = True
    output_dir: str = "out"

    def __post_init__(self):
        self.pred_lens = tuple(int(p) for p in self.pred_lens)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.forecasters = tuple(self.forecasters)
        if not self.pred_lens:
            raise ValidationError("at least one pred_len is required")
        if not self.forecasters:
            raise ValidationError("at least one forecaster is required")
        if not self.seeds:
            raise ValidationError("seeds must not be empty")

    def to_dict(self) -> dict:
        if isinstance(self.source, SimulationConfig):
            source = {"type": "simulate", "simulation": self.source.to_dict()}
        else:
            source = {"type": "csv", "manifest": self.source.to_dict()}
        return {
            "source": source,
            "factor_model": dict(self.factor_model),
            "windows": {
                "seq_len": self.seq_len,
                "pred_lens": list(self.pred_lens),
                "stride": self.stride,
            },
            "forecasters": [f.to_dict() for f in self.forecasters],
            "split": {
                "train_frac": self.split.train_frac,
                "val_frac": self.split.val_frac,
                "test_frac": self.split.test_frac,
            },
            "seeds": list(self.seeds),
            "include_oracle": self.include_oracle,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {
            "source",
            "factor_model",
            "windows",
            "forecasters",
            "split",
            "seeds",
            "include_oracle",
            "output_dir",
        }
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown run config field(s): {sorted(unknown)}")
        if "source" not in data:
            raise ValidationError("run config needs a 'source' section")
        src = data["source"]
        src_type = src.get("type")
        if src_type == "simulate":
            source = SimulationConfig.from_dict(src.get("simulation", {}))
        elif src_type == "csv":
            source = DatasetManifest.from_dict(src.get("manifest", {}))
        else:
            raise ValidationError(f"source type must be 'simulate' or 'csv', got {src_type!r}")
        windows = data.get("windows", {})
        unknown_w = set(windows) - {"seq_len", "pred_lens", "stride"}
        if unknown_w:
            raise ValidationError(f"unknown windows field(s): {sorted(unknown_w)}")
        kwargs = {
            "source": source,
            "factor_model": data.get("factor_model", {}),
            "seq_len": windows.get("seq_len", 96),
            "pred_lens": tuple(windows.get("pred_lens", (12, 24, 36, 48))),
            "stride": windows.get("stride", 1),
            "split": SplitSpec(**data.get("split", {})),
            "include_oracle": data.get("include_oracle", True),
            "output_dir": data.get("output_dir", "out"),
        }
        if "forecasters" in data:
            kwargs["forecasters"] = tuple(ForecasterSpec.from_dict(f) for f in data["forecasters"])
        if "seeds" in data:
            kwargs["seeds"] = tuple(data["seeds"])
        return cls(**kwargs)


def derived_seed(base: int, role: str) -> int:
    """Independent per-role integer seed derived from one run seed."""
    roles = {"simulate": 0, "factor": 1, "forecaster": 2}
    ss = np.random.SeedSequence(entropy=base, spawn_key=(roles[role],))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _stage(name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc

        return inner

    return wrap


@_stage("simulate")
def _get_panel(config: RunConfig, seed: int) -> Panel:
    if isinstance(config.source, SimulationConfig):
        sim = dataclasses.replace(config.source, seed=derived_seed(seed, "simulate"))
        return simulate(sim)
    return load_csv(config.source)


@_stage("train-factor")
def _train_factor(config: RunConfig, panel: Panel, seed: int) -> FactorModel:
    train_p, val_p, _ = split(panel, config.split)
    fm = FactorModel(**config.factor_model, seed=derived_seed(seed, "factor"))
    return fm.fit(train_p, val_p)


def _write_z_hat(z_hat: np.ndarray, path: Path):
    header = ["t"] + [f"z_{j}" for j in range(1, z_hat.shape[1] + 1)]
    lines = [",".join(header)]
    for t in range(len(z_hat)):
        lines.append(",".join([str(t)] + [_FMT.format(v) for v in z_hat[t]]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@_stage("forecast")
def _forecast_cells(
    config: RunConfig, panels: dict[str, Panel], seed: int
) -> list[dict]:
    rows = []
    for pred_len in config.pred_lens:
        spec = WindowSpec(seq_len=config.seq_len, pred_len=pred_len, stride=config.stride)
        for setting, (panel, use_conf) in panels.items():
            train_p, val_p, test_p = split(panel, config.split)
            norm = ChannelNormalizer()
            matrix, manifest = channel_matrix(train_p, use_conf)
            norm.fit(matrix, train_p.y, manifest)
            ws_train = build_windows(train_p, spec, use_conf, norm, segment="train split")
            ws_val = build_windows(val_p, spec, use_conf, norm, segment="val split")
            ws_test = build_windows(test_p, spec, use_conf, norm, segment="test split")
            for fspec in config.forecasters:
                model = fspec.make(seed=derived_seed(seed, "forecaster"))
                if fspec.kind == "recurrent":
                    model.fit(ws_train, ws_val)
                else:
                    model.fit(ws_train)
                result = evaluate_forecaster(model, ws_test)
                rows.append(
                    {
                        "pred_len": pred_len,
                        "setting": setting,
                        "forecaster": fspec.kind,
                        "seed": seed,
                        "mse": result["mse"],
                        "mae": result["mae"],
                    }
                )
    return rows


def _write_metrics_csv(rows: list[dict], path: Path):
    rows = sorted(
        rows,
        key=lambda r: (r["pred_len"], _SETTING_ORDER[r["setting"]], r["forecaster"], r["seed"]),
    )
    lines = ["pred_len,setting,forecaster,seed,mse,mae"]
    for r in rows:
        lines.append(
            f"{r['pred_len']},{r['setting']},{r['forecaster']},{r['seed']},"
            f"{_FMT.format(r['mse'])},{_FMT.format(r['mae'])}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@_stage("report")
def _write_reports(config: RunConfig, rows: list[dict], alignments: dict[int, dict], out: Path):
    summary = improvement_summary(rows)
    doc = [dataclasses.asdict(r) for r in summary]
    (out / "improvement.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for seed, payload in alignments.items():
        series = payload.pop("_series")
        (out / f"alignment_seed{seed}.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        lines = ["t,z_true,z_hat,z_true_aligned"]
        for t, zt, zh, za in series:
            lines.append(f"{t},{_FMT.format(zt)},{_FMT.format(zh)},{_FMT.format(za)}")
        (out / f"alignment_series_seed{seed}.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )


def run_pipeline(config: RunConfig, upto: str = "report") -> Path:
    """Run the pipeline through stage ``upto`` (default: everything).

    Returns the output directory. Outputs are deterministic in the config;
    any stage failure aborts with the stage name and leaves the
    ``_INCOMPLETE`` marker in place.
    """
    if upto not in STAGES:
        raise ValidationError(f"unknown stage {upto!r}, expected one of {STAGES}")
    level = STAGES.index(upto)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE_MARKER
    marker.write_text("run in progress or aborted\n", encoding="utf-8")
    (out / "run_config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    synthetic = isinstance(config.source, SimulationConfig)
    all_rows: list[dict] = []
    alignments: dict[int, dict] = {}
    for seed in config.seeds:
        panel = _get_panel(config, seed)
        if synthetic:
            write_panel_csv(panel, out / f"panel_seed{seed}.csv")
        elif seed == config.seeds[0]:
            write_panel_csv(panel, out / "panel.csv")
        if level < 1:
            continue

        fm = _train_factor(config, panel, seed)
        save_params(fm.params_, out / f"factor_params_seed{seed}.json")
        fm.log_.to_csv(out / f"training_log_seed{seed}.csv")
        if level < 2:
            continue

        try:
            z_hat = fm.transform(panel)
        except Exception as exc:
            raise StageError("infer-z", exc) from exc
        _write_z_hat(z_hat, out / f"z_hat_seed{seed}.csv")
        if level < 3:
            continue

        panels = {"without": (panel, False), "with": (augment_panel(panel, z_hat, "learned"), True)}
        if synthetic and config.include_oracle:
            panels["oracle"] = (augment_panel(panel, panel.z_true, "oracle"), True)
        all_rows.extend(_forecast_cells(config, panels, seed))

        if level >= 4 and synthetic:
            _, _, test_p = split(panel, config.split)
            n_test = len(test_p)
            z_test = z_hat[len(panel) - n_test :, 0]
            report = affine_align(z_test, test_p.z_true)
            t0 = len(panel) - n_test
            alignments[seed] = {
                "seed": seed,
                "a": report.a,
                "b": report.b,
                "pearson_r": report.pearson_r,
                "r2_affine": report.r2_affine,
                "sign_flipped": report.sign_flipped,
                "_series": [
                    (t0 + i, float(test_p.z_true[i]), float(z_test[i]), float(report.z_true_aligned[i]))
                    for i in range(n_test)
                ],
            }

    if level >= 3:
        _write_metrics_csv(all_rows, out / "metrics.csv")
    if level >= 4:
        _write_reports(config, all_rows, alignments, out)
    marker.unlink()
    return out


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)
