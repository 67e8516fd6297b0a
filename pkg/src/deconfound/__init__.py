"""Deconfounded time-series forecasting toolkit.

Simulates confounded panels from a linear structural causal model, learns
the latent confounder with a recurrent multitask factor model, and measures
how injecting the learned sequence as an extra input channel changes
multi-horizon forecast error.
"""

from .errors import (
    ManifestMismatchError,
    NumericsError,
    ShapeMismatchError,
    SimulationError,
    StageError,
    TrainingDivergedError,
    ValidationError,
)
from .factor_model import (
    FactorModel,
    FactorModelParams,
    TrainingLog,
    head_outputs,
    infer_z_sequence,
    load_params,
    save_params,
)
from .forecasters import (
    ForecasterSpec,
    RecurrentForecaster,
    RidgeForecaster,
    evaluate_forecaster,
)
from .ingest import DatasetManifest, load_csv
from .metrics import (
    AlignmentReport,
    ImprovementRow,
    affine_align,
    improvement_summary,
    mae,
    mse,
    r2_score,
)
from .panel import (
    Panel,
    SplitSpec,
    augment_panel,
    drop_confounder,
    read_panel_csv,
    split,
    write_panel_csv,
)
from .pipeline import RunConfig, load_run_config, run_pipeline
from .simulate import OverlapReport, SimulationConfig, mean_reduce, overlap_diagnostic, simulate
from .windows import ChannelNormalizer, WindowSet, WindowSpec, build_windows, channel_matrix

__version__ = "0.1.0"

__all__ = [
    "AlignmentReport",
    "ChannelNormalizer",
    "DatasetManifest",
    "FactorModel",
    "FactorModelParams",
    "ForecasterSpec",
    "ImprovementRow",
    "ManifestMismatchError",
    "NumericsError",
    "OverlapReport",
    "Panel",
    "RecurrentForecaster",
    "RidgeForecaster",
    "RunConfig",
    "ShapeMismatchError",
    "SimulationConfig",
    "SimulationError",
    "SplitSpec",
    "StageError",
    "TrainingDivergedError",
    "TrainingLog",
    "ValidationError",
    "WindowSet",
    "WindowSpec",
    "affine_align",
    "augment_panel",
    "build_windows",
    "channel_matrix",
    "drop_confounder",
    "evaluate_forecaster",
    "head_outputs",
    "improvement_summary",
    "infer_z_sequence",
    "load_csv",
    "load_params",
    "load_run_config",
    "mae",
    "mean_reduce",
    "mse",
    "overlap_diagnostic",
    "r2_score",
    "read_panel_csv",
    "run_pipeline",
    "save_params",
    "simulate",
    "split",
    "write_panel_csv",
]
