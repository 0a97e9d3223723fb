import logging
from typing import List, Sequence

import numpy as np
import pandas as pd

from gwr_calibration.misc.exceptions import MissingColumnError
from gwr_calibration.models.geo import Position
from gwr_calibration.models.gwr import LocalModel
from gwr_calibration.models.kernel import KernelSpec

META_COLUMNS = ["target_id", "family", "hour", "x", "y", "kernel", "bandwidth", "condition",
                "weight_mass", "rows", "standardized"]


class ModelIO:
    """
    One delimited table per model set: metadata columns followed by one column per coefficient,
    intercept first. Values are written with 12 significant digits.
    """

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("ModelIO")
        self.logger.setLevel(log_level)

    @staticmethod
    def to_frame(models: Sequence[LocalModel]) -> pd.DataFrame:
        labels = list(models[0].labels) if models else ["intercept"]
        rows = []
        for model in sorted(models, key=lambda m: (m.target_id, -1 if m.hour is None else m.hour)):
            row = {
                "target_id": model.target_id,
                "family": model.family,
                "hour": "" if model.hour is None else model.hour,
                "x": model.target.x if model.target is not None else np.nan,
                "y": model.target.y if model.target is not None else np.nan,
                "kernel": model.kernel.kind if model.kernel is not None else "",
                "bandwidth": model.kernel.bandwidth if model.kernel is not None else np.nan,
                "condition": model.condition,
                "weight_mass": model.weight_mass,
                "rows": model.rows,
                "standardized": str(model.standardized).lower(),
            }
            row.update(model.coefficients())
            rows.append(row)
        return pd.DataFrame(rows, columns=META_COLUMNS + labels)

    def write_models(self, models: Sequence[LocalModel], path: str) -> str:
        self.to_frame(models).to_csv(path, index=False, float_format="%.12g", na_rep="", lineterminator="\n")
        self.logger.info("Wrote {} models to {}".format(len(models), path))
        return path

    def read_models(self, path: str) -> List[LocalModel]:
        """
        Raises:
            MissingColumnError: If a metadata column is absent.
        """
        frame = pd.read_csv(path, dtype={"target_id": str, "family": str, "kernel": str},
                            keep_default_na=False, na_values={"x": [""], "y": [""], "bandwidth": [""],
                                                              "condition": [""], "weight_mass": [""]})
        for column in META_COLUMNS:
            if column not in frame.columns:
                raise MissingColumnError(column, path)
        labels = tuple(c for c in frame.columns if c not in META_COLUMNS)

        models = []
        for _, row in frame.iterrows():
            kernel = KernelSpec(row["kernel"], float(row["bandwidth"])) if row["kernel"] else None
            target = Position(float(row["x"]), float(row["y"])) if np.isfinite(row["x"]) else None
            models.append(LocalModel(
                target_id=row["target_id"],
                target=target,
                beta=np.array([float(row[label]) for label in labels]),
                labels=labels,
                family=row["family"],
                kernel=kernel,
                condition=float(row["condition"]),
                weight_mass=float(row["weight_mass"]),
                rows=int(row["rows"]),
                hour=None if row["hour"] == "" else int(row["hour"]),
                standardized=str(row["standardized"]).lower() == "true",
            ))
        return models
