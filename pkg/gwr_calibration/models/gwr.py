import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from gwr_calibration.misc.exceptions import (
    DataError,
    DegenerateVariableError,
    InsufficientDataError,
    InvalidInputError,
    SingularFitError,
)
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.models.geo import Position
from gwr_calibration.models.kernel import Kernel, KernelSpec
from gwr_calibration.processing.preprocess import REFERENCE, Panel, SiteRole

INTERCEPT = GwrCalibrationVariables.intercept_label


@dataclass(frozen=True, eq=False)
class DesignSlice:
    """
    Complete-case rows of a regression.

    Attributes:
        y: Response (reference concentration in ug/m3), NaN only when built without a response.
        X: Design matrix whose first column is the intercept.
        site_codes: For each row, the index of its site in site_ids.
        site_ids: Distinct sites, sorted.
        hours: UTC hour stamp of each row.
        covariates: Column names of X after the intercept.
    """

    y: np.ndarray
    X: np.ndarray
    site_codes: np.ndarray
    site_ids: Tuple[str, ...]
    hours: pd.DatetimeIndex
    covariates: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def labels(self) -> Tuple[str, ...]:
        return (INTERCEPT,) + tuple(self.covariates)

    @property
    def hour_of_day(self) -> np.ndarray:
        return np.asarray(self.hours.hour, dtype=float)

    @property
    def row_sites(self) -> np.ndarray:
        return np.asarray(self.site_ids, dtype=object)[self.site_codes]

    def site_positions(self, panel: Panel) -> List[Position]:
        return [panel.position(site_id) for site_id in self.site_ids]

    @staticmethod
    def from_arrays(X, y, row_sites: Optional[Sequence[str]] = None,
                    hours: Optional[pd.DatetimeIndex] = None,
                    covariates: Optional[Sequence[str]] = None) -> "DesignSlice":
        """
        Builds a slice from a covariate matrix without intercept column.

        Raises:
            InvalidInputError: On shape mismatches or missing values.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        if y.shape != (n,):
            raise InvalidInputError("Response has shape {}, expected ({},)".format(y.shape, n))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("Design rows must be complete")
        if covariates is None:
            covariates = tuple("x{}".format(i + 1) for i in range(p))
        if len(covariates) != p:
            raise InvalidInputError("{} covariate names for {} columns".format(len(covariates), p))
        if row_sites is None:
            row_sites = ["site"] * n
        codes, uniques = pd.factorize(pd.Index(row_sites, dtype=object), sort=True)
        if hours is None:
            hours = pd.DatetimeIndex(["1970-01-01"] * n).tz_localize("UTC")
        return DesignSlice(
            y=y,
            X=np.column_stack([np.ones(n), X]),
            site_codes=np.asarray(codes, dtype=int),
            site_ids=tuple(uniques),
            hours=pd.DatetimeIndex(hours),
            covariates=tuple(covariates),
        )

    @staticmethod
    def from_frame(frame: pd.DataFrame, covariates: Sequence[str],
                   require_response: bool = True) -> "DesignSlice":
        """
        Builds a slice from Panel rows indexed by (site, hour). Incomplete rows are excluded.
        """
        covariates = tuple(covariates)
        missing = [c for c in covariates if c not in frame.columns]
        if missing:
            raise DataError("Covariates absent from the panel: {}".format(", ".join(missing)))

        mask = frame[list(covariates)].notna().all(axis=1)
        if require_response:
            mask &= frame[REFERENCE].notna()
        frame = frame[mask]

        codes, uniques = pd.factorize(frame.index.get_level_values("site"), sort=True)
        n = len(frame)
        return DesignSlice(
            y=frame[REFERENCE].to_numpy(dtype=float),
            X=np.column_stack([np.ones(n), frame[list(covariates)].to_numpy(dtype=float)]),
            site_codes=np.asarray(codes, dtype=int),
            site_ids=tuple(uniques),
            hours=pd.DatetimeIndex(frame.index.get_level_values("hour")),
            covariates=covariates,
        )

    @staticmethod
    def from_panel(panel: Panel, site_ids, days=None, covariates: Optional[Sequence[str]] = None,
                   require_response: bool = True) -> "DesignSlice":
        return DesignSlice.from_frame(
            panel.rows(site_ids, days), DesignSlice.model_covariates(panel, covariates), require_response
        )

    @staticmethod
    def model_covariates(panel: Panel, covariates: Optional[Sequence[str]] = None) -> Tuple[str, ...]:
        """The covariate selection in canonical order, the panel covariates by default."""
        if not covariates:
            return tuple(panel.covariates)
        return GwrCalibrationVariables.ordered_covariates(covariates)


@dataclass(frozen=True, eq=False)
class LocalModel:
    """
    Coefficients of one linear calibration, in ug/m3 per covariate unit unless standardized.

    Attributes:
        target_id: Site or grid node the model was estimated for.
        target: Position of the target, None for pointwise baselines without one.
        beta: Coefficients ordered as labels.
        labels: "intercept" followed by the covariates in canonical order.
        family: c, nc, gwr or sgwr.
        kernel: Kernel of a geographically weighted model.
        condition: Condition estimate of the equilibrated normal matrix.
        weight_mass: Sum of the (max-normalized) row weights.
        rows: Number of rows in the fit.
        hour: Target hour of day of a gtwr model.
        standardized: Coefficients apply to standardized covariates.
    """

    target_id: str
    target: Optional[Position]
    beta: np.ndarray
    labels: Tuple[str, ...]
    family: str = "gwr"
    kernel: Optional[KernelSpec] = None
    condition: float = float("nan")
    weight_mass: float = float("nan")
    rows: int = 0
    hour: Optional[int] = None
    standardized: bool = False

    @property
    def covariates(self) -> Tuple[str, ...]:
        return tuple(self.labels[1:])

    def coefficients(self) -> Dict[str, float]:
        return {label: float(value) for label, value in zip(self.labels, self.beta)}

    def predict(self, covariate_values: np.ndarray) -> np.ndarray:
        """Predictions for a matrix of covariates ordered as self.covariates."""
        values = np.atleast_2d(np.asarray(covariate_values, dtype=float))
        return self.beta[0] + values @ self.beta[1:]


@dataclass(frozen=True, eq=False)
class FitFailure:
    target_id: str
    hour: Optional[int]
    message: str
    condition: float = float("nan")


@dataclass(frozen=True, eq=False)
class Standardizer:
    """
    Per (site, variable) mean and standard deviation (ddof 0) of the fitting sample.

    means and stds are indexed by site with one column per covariate.
    """

    means: pd.DataFrame
    stds: pd.DataFrame

    @property
    def sites(self) -> List[str]:
        return list(self.means.index)

    def covers(self, site_id: str) -> bool:
        return site_id in self.means.index

    def site_stats(self, site_id: str, covariates: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Raises:
            DataError: If the site or one of the covariates has no statistics.
        """
        missing = [c for c in covariates if c not in self.means.columns]
        if not self.covers(site_id) or missing:
            raise DataError("No standardization statistics for site {} ({})".format(
                site_id, ", ".join(missing) or "all variables"))
        return (self.means.loc[site_id, list(covariates)].to_numpy(dtype=float),
                self.stds.loc[site_id, list(covariates)].to_numpy(dtype=float))

    def network_median(self, covariates: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """Median over sites of mu and sigma, the convention used at sensor-free targets."""
        if self.means.empty:
            raise DataError("No standardization statistics available")
        return (self.means[list(covariates)].median().to_numpy(dtype=float),
                self.stds[list(covariates)].median().to_numpy(dtype=float))


@dataclass(eq=False)
class GwrFit:
    """Models and failed targets of one fitting run."""

    family: str
    kernel: Optional[KernelSpec]
    models: List[LocalModel] = field(default_factory=list)
    failures: List[FitFailure] = field(default_factory=list)
    standardizer: Optional[Standardizer] = None

    def target_ids(self) -> List[str]:
        return sorted({m.target_id for m in self.models})

    def models_for(self, target_id: str) -> List[LocalModel]:
        return [m for m in self.models if m.target_id == target_id]

    def model(self, target_id: str, hour: Optional[int] = None) -> LocalModel:
        models = self.models_for(target_id)
        if not models:
            raise DataError("No fitted model for target {}".format(target_id))
        return GwrEstimator.select_model(models, hour)


class GwrEstimator:
    """
    Weighted least squares with repeated measurements, solved through a Cholesky factorization
    of the equilibrated normal matrix, plus the GWR and SGWR fitting procedures built on it.
    """

    def __init__(self, kernel_spec: KernelSpec = KernelSpec(), jitter: bool = False,
                 condition_limit: float = GwrCalibrationVariables.condition_limit,
                 n_jobs: int = 1, log_level: int = logging.INFO):
        self.logger = logging.getLogger("GwrEstimator")
        self.logger.setLevel(log_level)
        self.log_level = log_level
        self.kernel_spec = kernel_spec
        self.kernel = Kernel(kernel_spec, log_level)
        self.jitter = jitter
        self.condition_limit = condition_limit
        self.n_jobs = n_jobs

    def with_kernel(self, kernel_spec: KernelSpec) -> "GwrEstimator":
        return GwrEstimator(kernel_spec, self.jitter, self.condition_limit, self.n_jobs, self.log_level)

    def fit_wls(self, design: DesignSlice, weights, target_id: str = "",
                target: Optional[Position] = None, hour: Optional[int] = None,
                family: str = "gwr") -> LocalModel:
        """
        Solves (X'WX) beta = X'Wy.

        Args:
            design: The rows to fit.
            weights: One strictly positive weight per row.
            target_id: Name recorded in the model and in errors.
            target: Target position recorded in the model.
            hour: Target hour of a gtwr model.
            family: Model family recorded in the model.

        Returns:
            The fitted LocalModel.

        Raises:
            InvalidInputError: Weights of the wrong shape or not strictly positive.
            InsufficientDataError: Fewer rows than columns.
            SingularFitError: The condition estimate exceeds the limit or the factorization fails.
        """
        weights = np.asarray(weights, dtype=float)
        n, p = design.X.shape
        if weights.shape != (n,):
            raise InvalidInputError("Got {} weights for {} rows".format(weights.size, n))
        if not np.all(np.isfinite(weights) & (weights > 0)):
            raise InvalidInputError("Weights must be finite and strictly positive")
        if n < p:
            raise InsufficientDataError(
                "{} rows for {} coefficients at target {}".format(n, p, target_id or "-")
            )

        weighted = design.X * weights[:, None]
        normal = design.X.T @ weighted
        rhs = weighted.T @ design.y
        if self.jitter:
            normal = normal + GwrCalibrationVariables.jitter_scale * np.trace(normal) / p * np.eye(p)

        scale = np.sqrt(np.diag(normal))
        if not np.all(scale > 0):
            raise SingularFitError(float("inf"), target_id or None)
        equilibrated = normal / np.outer(scale, scale)
        condition = float(np.linalg.cond(equilibrated))
        if not np.isfinite(condition) or condition > self.condition_limit:
            raise SingularFitError(condition, target_id or None)

        try:
            factor = cho_factor(equilibrated, lower=True, check_finite=False)
        except LinAlgError:
            raise SingularFitError(condition, target_id or None)
        beta = cho_solve(factor, rhs / scale, check_finite=False) / scale
        if not np.all(np.isfinite(beta)):
            raise SingularFitError(condition, target_id or None)

        return LocalModel(
            target_id=target_id,
            target=target,
            beta=beta,
            labels=design.labels,
            family=family,
            kernel=self.kernel_spec if family in ("gwr", "sgwr") else None,
            condition=condition,
            weight_mass=float(weights.sum()),
            rows=n,
            hour=hour,
        )

    @staticmethod
    def objective(design: DesignSlice, weights, beta) -> float:
        """The weighted criterion sum_j w_j (y_j - x_j beta)^2."""
        residual = design.y - design.X @ np.asarray(beta, dtype=float)
        return float(np.sum(np.asarray(weights, dtype=float) * residual ** 2))

    def fit_at(self, design: DesignSlice, positions: Sequence[Position], target_id: str,
               target: Position, hour: Optional[int] = None, family: str = "gwr") -> LocalModel:
        """Fits the local model at one target (and target hour for gtwr)."""
        weights = self.kernel.row_weights(
            target, positions, design.site_codes,
            design.hour_of_day if self.kernel_spec.kind == "gtwr" else None,
            hour, normalize=True,
        )
        return self.fit_wls(design, weights, target_id, target, hour, family)

    def _try_fit(self, design: DesignSlice, positions: Sequence[Position], target_id: str,
                 target: Position, hour: Optional[int], family: str):
        try:
            model = self.fit_at(design, positions, target_id, target, hour, family)
            self.logger.debug("Fitted {} at {} (hour {}): condition {:.3e}".format(
                family, target_id, hour, model.condition))
            return model
        except SingularFitError as e:
            self.logger.warning(str(e))
            return FitFailure(target_id, hour, str(e), e.condition)

    def fit_targets(self, design: DesignSlice, positions: Sequence[Position],
                    targets: Mapping[str, Position], family: str = "gwr",
                    hours: Optional[Sequence[int]] = None) -> GwrFit:
        """
        Fits every target on the same rows. gtwr fits one model per target and hour of day, for
        the given hours or all 24. Singular targets are collected as failures.
        """
        if len(design) == 0:
            raise InsufficientDataError("No complete fitting rows")
        if self.kernel_spec.kind != "gtwr":
            hours = [None]
        elif hours is None:
            hours = list(range(24))
        else:
            hours = sorted(set(int(h) for h in hours))
            if not hours or not all(0 <= h < 24 for h in hours):
                raise InvalidInputError("Target hours must lie in [0, 24), got {}".format(hours))
        tasks = [(target_id, targets[target_id], hour) for target_id in sorted(targets) for hour in hours]

        if self.n_jobs != 1 and len(tasks) > 1:
            results = Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self._try_fit)(design, positions, target_id, target, hour, family)
                for target_id, target, hour in tasks
            )
        else:
            results = [self._try_fit(design, positions, target_id, target, hour, family)
                       for target_id, target, hour in tasks]

        fit = GwrFit(family, self.kernel_spec)
        for result in results:
            if isinstance(result, FitFailure):
                fit.failures.append(result)
            else:
                fit.models.append(result)
        self.logger.info("{}: {} models fitted, {} failed (kernel {}, B={:g} m)".format(
            family, len(fit.models), len(fit.failures), self.kernel_spec.kind, self.kernel_spec.bandwidth))
        return fit

    @staticmethod
    def default_fit_sites(panel: Panel) -> List[str]:
        return panel.site_ids(SiteRole.COLLOCATED_SENSOR)

    def fit_gwr(self, panel: Panel, targets: Mapping[str, Position],
                fit_sites: Optional[Sequence[str]] = None, days=None,
                covariates: Optional[Sequence[str]] = None,
                hours: Optional[Sequence[int]] = None) -> GwrFit:
        """
        Fits one GWR model per target from the reference-bearing rows of the fit sites.

        Args:
            panel: The hourly Panel.
            targets: Target id to position.
            fit_sites: Sites whose rows enter the fit, the collocated sensors by default.
            days: Optional day restriction of the fitting rows.
            covariates: Covariate subset, the panel covariates by default.
            hours: Hours of day of gtwr models, all 24 by default.

        Returns:
            The GwrFit with models and failed targets.
        """
        fit_sites = list(fit_sites) if fit_sites is not None else self.default_fit_sites(panel)
        design = DesignSlice.from_panel(panel, fit_sites, days, covariates)
        return self.fit_targets(design, design.site_positions(panel), targets, "gwr", hours)

    def standardize(self, panel: Panel, days=None, sites: Optional[Sequence[str]] = None,
                    covariates: Optional[Sequence[str]] = None) -> Tuple[Panel, Standardizer]:
        """
        Standardizes each sensor variable with the mean and standard deviation of that site over
        the fitting days. The response is left in ug/m3.

        Args:
            panel: The hourly Panel.
            days: Days of the fitting sample, all days by default.
            sites: Sensor sites to standardize, every sensor by default.
            covariates: Variables to standardize, the panel covariates by default.

        Returns:
            A Panel whose rows at the given sites are standardized (on every day) and the
            Standardizer. Sites without rows in the fitting sample are left out of the panel.

        Raises:
            DegenerateVariableError: A variable is constant at a site over the fitting sample.
        """
        covariates = list(covariates or panel.covariates)
        sites = list(sites) if sites is not None else panel.sensor_ids()

        grouped = panel.rows(sites, days)[covariates].groupby(level="site")
        means = grouped.mean()
        stds = grouped.std(ddof=0)
        for site_id in means.index:
            for variable in covariates:
                mu, sigma = means.at[site_id, variable], stds.at[site_id, variable]
                if not np.isfinite(sigma) or sigma <= 1e-12 * max(1.0, abs(mu)):
                    raise DegenerateVariableError(site_id, variable)

        absent = sorted(set(sites) - set(means.index))
        if absent:
            self.logger.warning("No fitting rows to standardize sites {}".format(", ".join(absent)))

        frame = panel.frame.copy()
        site_level = frame.index.get_level_values("site")
        mask = np.asarray(site_level.isin(means.index))
        present = site_level[mask]
        frame.loc[mask, covariates] = (
            (frame.loc[mask, covariates].to_numpy(dtype=float) - means.reindex(present).to_numpy())
            / stds.reindex(present).to_numpy()
        )
        frame = frame[~np.asarray(site_level.isin(absent))]
        return panel.with_frame(frame), Standardizer(means, stds)

    @staticmethod
    def destandardize(model: LocalModel, standardizer: Standardizer,
                      site_id: Optional[str] = None) -> LocalModel:
        """
        Converts standardized-space coefficients to raw units:
        beta_i = b_i / sigma_i and beta_0 = b_0 - sum_i b_i mu_i / sigma_i.

        The statistics come from site_id, or are the network medians when site_id is None.
        """
        if site_id is None:
            mu, sigma = standardizer.network_median(model.covariates)
        else:
            mu, sigma = standardizer.site_stats(site_id, model.covariates)
        slopes = model.beta[1:] / sigma
        intercept = model.beta[0] - np.sum(model.beta[1:] * mu / sigma)
        return replace(model, beta=np.concatenate([[intercept], slopes]), standardized=False)

    def fit_sgwr(self, panel: Panel, targets: Mapping[str, Position],
                 fit_sites: Optional[Sequence[str]] = None, days=None,
                 target_sites: Optional[Mapping[str, Optional[str]]] = None,
                 covariates: Optional[Sequence[str]] = None,
                 hours: Optional[Sequence[int]] = None) -> GwrFit:
        """
        Standardizes, fits GWR in standardized space and de-standardizes every target model.

        Args:
            panel: The hourly Panel.
            targets: Target id to position.
            fit_sites: Sites whose rows enter the fit, the collocated sensors by default.
            days: Days of the fitting sample (also the sample of the statistics).
            target_sites: Target id to the sensor whose statistics de-standardize its model.
                By default a target that is a sensor site uses its own statistics and any other
                target the network medians.
            covariates: Covariate subset, the panel covariates by default.
            hours: Hours of day of gtwr models, all 24 by default.
        """
        fit_sites = list(fit_sites) if fit_sites is not None else self.default_fit_sites(panel)
        if target_sites is None:
            sensors = set(panel.sensor_ids())
            target_sites = {t: (t if t in sensors else None) for t in targets}
        stat_sites = sorted(set(fit_sites) | {s for s in target_sites.values() if s})

        standardized, standardizer = self.standardize(panel, days, stat_sites, covariates)
        design = DesignSlice.from_panel(standardized, fit_sites, days, covariates)
        fit = self.fit_targets(design, design.site_positions(panel), targets, "sgwr", hours)
        fit.models = [self.destandardize(m, standardizer, target_sites.get(m.target_id))
                      for m in fit.models]
        fit.standardizer = standardizer
        return fit

    @staticmethod
    def select_model(models: Sequence[LocalModel], hour: Optional[int] = None) -> LocalModel:
        """Picks the model of a given hour of day among the gtwr models of one target."""
        if len(models) == 1 and models[0].hour is None:
            return models[0]
        for model in models:
            if model.hour == hour:
                return model
        raise DataError("No model for hour {}".format(hour))

    @staticmethod
    def correct(model: LocalModel, sample: Mapping[str, float]) -> float:
        """
        beta_0 + sum_i beta_i x_i. Negative values are returned as they are.

        Raises:
            DataError: A covariate of the model is missing from the sample.
        """
        values = []
        for covariate in model.covariates:
            value = sample.get(covariate)
            if value is None or not np.isfinite(value):
                raise DataError("Sample lacks covariate {}".format(covariate))
            values.append(float(value))
        return float(model.beta[0] + np.dot(model.beta[1:], values))

    @staticmethod
    def correct_frame(models: Union[LocalModel, Sequence[LocalModel]], rows: pd.DataFrame) -> pd.Series:
        """
        Corrects every row of a Panel-like frame indexed by (site, hour). gtwr models are chosen
        by the hour of day of each row.

        Raises:
            DataError: Missing covariate columns or values, or no model for an hour.
        """
        models = [models] if isinstance(models, LocalModel) else list(models)
        if not models:
            raise DataError("No model to correct with")
        covariates = list(models[0].covariates)
        missing = [c for c in covariates if c not in rows.columns]
        if missing:
            raise DataError("Rows lack covariates {}".format(", ".join(missing)))
        values = rows[covariates].to_numpy(dtype=float)
        if not np.all(np.isfinite(values)):
            raise DataError("Rows to correct must be complete")

        if len(models) == 1 and models[0].hour is None:
            prediction = models[0].predict(values) if len(rows) else np.zeros(0)
        else:
            prediction = np.full(len(rows), np.nan)
            hour_of_day = np.asarray(pd.DatetimeIndex(rows.index.get_level_values("hour")).hour)
            for hour in np.unique(hour_of_day):
                selected = hour_of_day == hour
                model = GwrEstimator.select_model(models, int(hour))
                prediction[selected] = model.predict(values[selected])
        return pd.Series(prediction, index=rows.index, name="prediction")
