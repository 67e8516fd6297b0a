"""Manifest-driven CSV ingestion for real-world panels.

The manifest names which file columns play the covariate, treatment, and
target roles. Cells must all be numeric; missing values fail fast rather
than being imputed, because silent imputation would contaminate any causal
reading of the results.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .panel import Panel


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    target: str
    covariates: tuple[str, ...]
    treatments: tuple[str, ...]
    time_column: str = "t"
    frequency: str = ""  # informational only

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "treatments", tuple(self.treatments))
        if not self.covariates or not self.treatments:
            raise ValidationError("manifest needs at least one covariate and one treatment column")
        if self.target in set(self.covariates) | set(self.treatments):
            raise ValidationError(
                f"target column '{self.target}' must not appear among covariates or treatments"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["covariates"] = list(self.covariates)
        d["treatments"] = list(self.treatments)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown manifest field(s): {sorted(unknown)}")
        return cls(**data)


def load_csv(manifest: DatasetManifest) -> Panel:
    """Load a real-data panel; the result has no ground-truth confounder.

    Rows keep file order. Errors name the offending column, and the 0-based
    data row for bad cells.
    """
    path = Path(manifest.path)
    if not path.exists():
        raise ValidationError(f"dataset file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        needed = [manifest.time_column, *manifest.covariates, *manifest.treatments, manifest.target]
        index = {}
        for name in needed:
            if name not in header:
                raise ValidationError(f"column {name} not found in {path}")
            index[name] = header.index(name)
        numeric_cols = [*manifest.covariates, *manifest.treatments, manifest.target]
        x_rows, a_rows, y_rows = [], [], []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise ValidationError(f"{path} row {i}: expected {len(header)} cells, got {len(row)}")
            values = {}
            for name in numeric_cols:
                cell = row[index[name]].strip()
                if cell == "":
                    raise ValidationError(f"{path} row {i}: missing value in column '{name}'")
                try:
                    values[name] = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{path} row {i}: non-numeric cell '{cell}' in column '{name}'"
                    ) from None
            x_rows.append([values[c] for c in manifest.covariates])
            a_rows.append([values[c] for c in manifest.treatments])
            y_rows.append(values[manifest.target])
    if not x_rows:
        raise ValidationError(f"{path} contains a header but no rows")
    return Panel(
        x=np.asarray(x_rows, dtype=np.float64),
        a=np.asarray(a_rows, dtype=np.float64),
        y=np.asarray(y_rows, dtype=np.float64),
    )
