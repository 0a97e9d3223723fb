import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from gwr_calibration.misc.exceptions import ConfigError
from gwr_calibration.models.geo import BoundingBox, Position
from gwr_calibration.models.gwr import DesignSlice, GwrEstimator
from gwr_calibration.models.kernel import KernelSpec
from gwr_calibration.processing.preprocess import Panel


@dataclass(frozen=True)
class GridSpec:
    """
    Regular grid of evaluation nodes at cell centers.

    Attributes:
        bbox: Area covered, in projected meters.
        cell_size: Cell edge in meters.
        coefficients: Coefficient labels to keep, all of them when empty.
        hour: Target hour of day of gtwr surfaces.
    """

    bbox: BoundingBox
    cell_size: float
    coefficients: Tuple[str, ...] = ()
    hour: int = 12

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ConfigError("Grid cell size must be > 0, got {}".format(self.cell_size))
        if not 0 <= self.hour < 24:
            raise ConfigError("Grid hour must lie in [0, 24), got {}".format(self.hour))

    @staticmethod
    def _centers(low: float, high: float, cell: float) -> np.ndarray:
        count = max(1, int(math.ceil((high - low) / cell - 1e-9)))
        return low + (np.arange(count) + 0.5) * cell

    def x_nodes(self) -> np.ndarray:
        return self._centers(self.bbox.min_x, self.bbox.max_x, self.cell_size)

    def y_nodes(self) -> np.ndarray:
        return self._centers(self.bbox.min_y, self.bbox.max_y, self.cell_size)

    @staticmethod
    def node_id(iy: int, ix: int) -> str:
        return "node_{:04d}_{:04d}".format(iy, ix)

    def nodes(self) -> Dict[str, Position]:
        """Node id to position, row-major from the south-west corner."""
        return {
            self.node_id(iy, ix): Position(float(x), float(y))
            for iy, y in enumerate(self.y_nodes())
            for ix, x in enumerate(self.x_nodes())
        }


@dataclass(eq=False)
class CoefficientSurface:
    """
    One (ny, nx) array per coefficient, NaN at nodes whose fit failed.
    """

    x: np.ndarray
    y: np.ndarray
    model_kind: str
    kernel: KernelSpec
    layers: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def labels(self) -> List[str]:
        return list(self.layers)

    @property
    def no_data_fraction(self) -> float:
        if not self.layers:
            return 1.0
        first = next(iter(self.layers.values()))
        return float(np.isnan(first).mean())

    def to_frame(self, label: str) -> pd.DataFrame:
        """x, y, value rows in row-major order."""
        xx, yy = np.meshgrid(self.x, self.y)
        return pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "value": self.layers[label].ravel()})


class CoefficientGridEvaluator:
    """
    Evaluates coefficient fields on a grid through the same estimation path as calibration.
    """

    def __init__(self, estimator: GwrEstimator, log_level: int = logging.INFO):
        self.logger = logging.getLogger("CoefficientGridEvaluator")
        self.logger.setLevel(log_level)
        self.estimator = estimator

    def coefficient_surface(self, panel: Panel, grid: GridSpec, model_kind: str = "sgwr",
                            fit_sites: Optional[Sequence[str]] = None, days=None,
                            covariates: Optional[Sequence[str]] = None) -> CoefficientSurface:
        """
        Fits a local model at every grid node and records its coefficients.

        sgwr surfaces are in raw units, de-standardized with the network-median statistics since
        grid nodes carry no sensor.

        Args:
            panel: The hourly Panel.
            grid: Node layout and coefficient selection.
            model_kind: gwr or sgwr.
            fit_sites: Sites whose rows enter the fit, the collocated sensors by default.
            days: Fitting days, all days by default.
            covariates: Covariate subset, the panel covariates by default.

        Returns:
            The CoefficientSurface. Singular nodes are no-data.

        Raises:
            ConfigError: Unknown model kind or coefficient label.
        """
        targets = grid.nodes()
        hour = grid.hour if self.estimator.kernel_spec.kind == "gtwr" else None
        hours = None if hour is None else [hour]
        if model_kind == "gwr":
            fit = self.estimator.fit_gwr(panel, targets, fit_sites, days, covariates, hours)
        elif model_kind == "sgwr":
            fit = self.estimator.fit_sgwr(panel, targets, fit_sites, days,
                                          {node: None for node in targets}, covariates, hours)
        else:
            raise ConfigError("Coefficient surfaces support gwr and sgwr, got {}".format(model_kind))

        x, y = grid.x_nodes(), grid.y_nodes()
        labels = ("intercept",) + DesignSlice.model_covariates(panel, covariates)
        if grid.coefficients:
            unknown = sorted(set(grid.coefficients) - set(labels))
            if unknown:
                raise ConfigError("Unknown coefficients {}".format(", ".join(unknown)))
            labels = tuple(label for label in labels if label in grid.coefficients)

        surface = CoefficientSurface(x, y, model_kind, self.estimator.kernel_spec,
                                     {label: np.full((len(y), len(x)), np.nan) for label in labels})
        failed = {f.target_id for f in fit.failures if f.hour == hour}
        for iy in range(len(y)):
            for ix in range(len(x)):
                node = grid.node_id(iy, ix)
                if node in failed:
                    continue
                coefficients = fit.model(node, hour).coefficients()
                for label in labels:
                    surface.layers[label][iy, ix] = coefficients[label]

        self.logger.info("{} surface: {} x {} nodes, no-data fraction {:.3f}".format(
            model_kind, len(x), len(y), surface.no_data_fraction))
        return surface
