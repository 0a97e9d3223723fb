import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from gwr_calibration.misc.exceptions import (
    ConfigError,
    DataError,
    GwrCalibrationError,
    InsufficientDataError,
    NumericalError,
)
from gwr_calibration.models.baseline import BaselineFitter, PairingPlan
from gwr_calibration.models.geo import Position
from gwr_calibration.models.gwr import DesignSlice, GwrEstimator, LocalModel, Standardizer
from gwr_calibration.models.kernel import KernelSpec
from gwr_calibration.processing.preprocess import REFERENCE, Panel, SiteRole

SAMPLES = ("S0", "S1", "S2")
TARGET_FRACTIONS = {"S0": 12.8, "S1": 61.1, "S2": 26.1}
FAMILIES = ("c", "nc", "gwr", "sgwr")
PREDICTION_COLUMNS = ["site", "hour", "prediction", "reference"]


@dataclass(frozen=True)
class SplitSpec:
    """
    Study period and day assignment rule.

    Attributes:
        start: First day of the period.
        end: Last day of the period (inclusive).
        s0_stride: One day in s0_stride goes to S0.
        s0_days, s1_days, s2_days: Explicit calendar overrides. Listed days take the listed
            sample and the remaining days follow the rule.
    """

    start: date
    end: date
    s0_stride: int = 8
    s0_days: Tuple[date, ...] = ()
    s1_days: Tuple[date, ...] = ()
    s2_days: Tuple[date, ...] = ()

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError("Split period ends ({}) before it starts ({})".format(self.end, self.start))
        if self.s0_stride < 1:
            raise ConfigError("s0_stride must be >= 1")

    @staticmethod
    def for_panel(panel: Panel, **overrides) -> "SplitSpec":
        days = panel.days
        if not days:
            raise InsufficientDataError("Empty panel, no period to split")
        return SplitSpec(start=overrides.pop("start", None) or days[0],
                         end=overrides.pop("end", None) or days[-1], **overrides)


@dataclass(frozen=True)
class DaySplit:
    s0: Tuple[date, ...]
    s1: Tuple[date, ...]
    s2: Tuple[date, ...]

    def sample(self, name: str) -> Tuple[date, ...]:
        return {"S0": self.s0, "S1": self.s1, "S2": self.s2}[name]

    @property
    def days(self) -> List[date]:
        return sorted(self.s0 + self.s1 + self.s2)

    def fractions(self) -> Dict[str, float]:
        total = len(self.days)
        return {name: 100.0 * len(self.sample(name)) / total for name in SAMPLES}

    def to_frame(self) -> pd.DataFrame:
        achieved = self.fractions()
        return pd.DataFrame({
            "sample": list(SAMPLES),
            "days": [len(self.sample(name)) for name in SAMPLES],
            "achieved_pct": [achieved[name] for name in SAMPLES],
            "target_pct": [TARGET_FRACTIONS[name] for name in SAMPLES],
        })


@dataclass(frozen=True, eq=False)
class Fold:
    """Training rows and test rows of one held-out site."""

    held_out: str
    target: Position
    design: DesignSlice
    positions: List[Position]
    test_rows: pd.DataFrame
    excluded: Tuple[str, ...]


@dataclass(frozen=True)
class FoldResult:
    site: str
    rows: int
    rmse: float
    ev: float
    status: str = "ok"
    message: str = ""


@dataclass(eq=False)
class CvResult:
    """Leave-one-site-out result of one model kind."""

    model_kind: str
    kernel: KernelSpec
    folds: List[FoldResult]
    predictions: pd.DataFrame

    @property
    def cv_rmse(self) -> float:
        """Mean of the held-out RMSE of the folds that did not fail."""
        values = [f.rmse for f in self.folds if f.status == "ok"]
        return float(np.mean(values)) if values else float("nan")

    @property
    def failed(self) -> List[FoldResult]:
        return [f for f in self.folds if f.status != "ok"]

    def folds_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"model": self.model_kind, "site": f.site, "rows": f.rows, "rmse": f.rmse, "ev": f.ev,
              "status": f.status, "message": f.message} for f in self.folds],
            columns=["model", "site", "rows", "rmse", "ev", "status", "message"],
        )


@dataclass(eq=False)
class BandwidthSearch:
    best: float
    curve: pd.DataFrame


@dataclass(eq=False)
class DeployedCorrection:
    predictions: pd.DataFrame
    negatives: pd.DataFrame


@dataclass(eq=False)
class EvalReport:
    """Everything cmd_validate writes. Each number can be recomputed from the stored predictions."""

    split: DaySplit
    kernel: KernelSpec
    pairing: PairingPlan
    scores: pd.DataFrame
    predictions: pd.DataFrame
    cv: Dict[str, CvResult] = field(default_factory=dict)
    hourly: Dict[str, pd.DataFrame] = field(default_factory=dict)
    hourly_skipped: Dict[str, int] = field(default_factory=dict)
    residuals: Optional[pd.DataFrame] = None
    deployed: Optional[DeployedCorrection] = None
    bandwidth: Optional[BandwidthSearch] = None

    def family_summary(self) -> pd.DataFrame:
        ok = self.scores[self.scores["status"] == "ok"]
        summary = ok.groupby("family", sort=True)[["rmse", "ev"]].mean().reset_index()
        cv = pd.DataFrame(
            [{"family": kind, "cv_rmse": result.cv_rmse} for kind, result in sorted(self.cv.items())],
            columns=["family", "cv_rmse"],
        )
        return summary.merge(cv, on="family", how="outer").sort_values("family").reset_index(drop=True)


class Validator:
    """
    Sample splitting, scores, leave-one-site-out cross-validation and bandwidth selection.
    """

    def __init__(self, estimator: GwrEstimator, baseline: Optional[BaselineFitter] = None,
                 n_jobs: int = 1, log_level: int = logging.INFO):
        self.logger = logging.getLogger("Validator")
        self.logger.setLevel(log_level)
        self.estimator = estimator
        self.baseline = baseline or BaselineFitter(estimator.condition_limit, estimator.jitter, log_level)
        self.n_jobs = n_jobs

    @staticmethod
    def split_days(spec: SplitSpec) -> DaySplit:
        """
        Deterministic split of the period into S0, S1 and S2.

        With d the day index from the start: d % stride == 0 goes to S0, else d % 3 in {0, 1} goes
        to S1 and the rest to S2. Days listed in the overrides take their listed sample.

        Raises:
            ConfigError: An override day is outside the period or listed twice.
        """
        n_days = (spec.end - spec.start).days + 1
        days = [spec.start + timedelta(days=d) for d in range(n_days)]
        assigned = {}
        for d, day in enumerate(days):
            if d % spec.s0_stride == 0:
                assigned[day] = "S0"
            elif d % 3 in (0, 1):
                assigned[day] = "S1"
            else:
                assigned[day] = "S2"

        overrides = {}
        for name, listed in (("S0", spec.s0_days), ("S1", spec.s1_days), ("S2", spec.s2_days)):
            for day in listed:
                if day not in assigned:
                    raise ConfigError("Override day {} is outside the split period".format(day))
                if day in overrides:
                    raise ConfigError("Day {} is listed in two samples".format(day))
                overrides[day] = name
        assigned.update(overrides)

        return DaySplit(*(tuple(day for day in days if assigned[day] == name) for name in SAMPLES))

    @staticmethod
    def _aligned(pred, ref) -> Tuple[np.ndarray, np.ndarray]:
        if isinstance(pred, pd.Series) and isinstance(ref, pd.Series):
            pred, ref = pred.align(ref, join="inner")
        pred = np.asarray(pred, dtype=float)
        ref = np.asarray(ref, dtype=float)
        if pred.shape != ref.shape:
            raise DataError("Predictions and references are not aligned")
        keep = np.isfinite(pred) & np.isfinite(ref)
        if not keep.any():
            raise InsufficientDataError("Empty overlap between predictions and references")
        return pred[keep], ref[keep]

    @staticmethod
    def rmse(pred, ref) -> float:
        """Root mean squared error over the overlap."""
        pred, ref = Validator._aligned(pred, ref)
        return float(np.sqrt(np.mean((ref - pred) ** 2)))

    @staticmethod
    def explained_variance(pred, ref) -> float:
        """
        100 * (1 - SSE / SST) over the overlap. Negative when worse than the reference mean.

        Raises:
            DataError: The reference is constant over the overlap.
        """
        pred, ref = Validator._aligned(pred, ref)
        total = np.sum((ref - ref.mean()) ** 2)
        if not total > 0:
            raise DataError("Reference has zero variance over the overlap")
        return float(100.0 * (1.0 - np.sum((ref - pred) ** 2) / total))

    @staticmethod
    def negative_count(values) -> int:
        return int(np.sum(np.asarray(values, dtype=float) < 0))

    def _score(self, site: str, prediction: pd.Series, reference: pd.Series) -> FoldResult:
        try:
            return FoldResult(site, int(prediction.notna().sum()), self.rmse(prediction, reference),
                              self.explained_variance(prediction, reference))
        except DataError as e:
            self.logger.warning("Cannot score {}: {}".format(site, e))
            return FoldResult(site, 0, float("nan"), float("nan"), "failed", str(e))

    @staticmethod
    def _prediction_frame(site_id: str, prediction: pd.Series, rows: pd.DataFrame) -> pd.DataFrame:
        return pd.DataFrame({
            "site": site_id,
            "hour": rows.index.get_level_values("hour"),
            "prediction": prediction.to_numpy(),
            "reference": rows[REFERENCE].to_numpy(dtype=float),
        }, columns=PREDICTION_COLUMNS)

    def _fit_sites(self, panel: Panel, fit_sites: Optional[Sequence[str]]) -> List[str]:
        sites = sorted(fit_sites) if fit_sites is not None else GwrEstimator.default_fit_sites(panel)
        if len(sites) < 2:
            raise InsufficientDataError("Cross-validation needs at least 2 collocated sites")
        return sites

    def prepare_folds(self, panel: Panel, model_kind: str, train_days, test_days,
                      fit_sites: Optional[Sequence[str]] = None,
                      covariates: Optional[Sequence[str]] = None
                      ) -> Tuple[List[Fold], List[FoldResult], Optional[Standardizer]]:
        """
        Builds the training and test rows of every held-out site. The kernel plays no part, so a
        bandwidth search prepares its folds once.

        Every site sharing the held-out site's reference station leaves the training set, and the
        fold sees a panel view in which their reference values are erased.
        """
        if model_kind not in ("gwr", "sgwr"):
            raise ConfigError("Cross-validation supports gwr and sgwr, got {}".format(model_kind))
        sites = self._fit_sites(panel, fit_sites)

        standardizer = None
        training_panel = panel
        if model_kind == "sgwr":
            training_panel, standardizer = self.estimator.standardize(panel, train_days, sites, covariates)

        folds, failures = [], []
        for held_out in sites:
            station = panel.sites[held_out].paired_reference
            group = tuple(s for s in sites if panel.sites[s].paired_reference == station)
            train_sites = [s for s in sites if s not in group]
            fold_panel = training_panel.without_reference(group)
            design = DesignSlice.from_panel(fold_panel, train_sites, train_days, covariates)

            test_rows = panel.rows([held_out], test_days)
            test_rows = test_rows[test_rows[REFERENCE].notna()]
            if len(design) == 0 or test_rows.empty:
                message = "no training rows" if len(design) == 0 else "no test rows"
                self.logger.warning("Fold {} skipped: {}".format(held_out, message))
                failures.append(FoldResult(held_out, 0, float("nan"), float("nan"), "failed", message))
                continue
            folds.append(Fold(held_out, panel.position(held_out), design,
                              design.site_positions(panel), test_rows, group))
        return folds, failures, standardizer

    def _run_fold(self, estimator: GwrEstimator, fold: Fold, model_kind: str,
                  standardizer: Optional[Standardizer]) -> Tuple[FoldResult, Optional[pd.DataFrame]]:
        try:
            fit = estimator.fit_targets(fold.design, fold.positions, {fold.held_out: fold.target}, model_kind)
            if fit.failures:
                raise NumericalError(fit.failures[0].message)
            models: List[LocalModel] = fit.models
            if standardizer is not None:
                models = [estimator.destandardize(m, standardizer, fold.held_out) for m in models]
            prediction = estimator.correct_frame(models, fold.test_rows)
        except GwrCalibrationError as e:
            self.logger.warning("Fold {} failed: {}".format(fold.held_out, e))
            return FoldResult(fold.held_out, 0, float("nan"), float("nan"), "failed", str(e)), None

        result = self._score(fold.held_out, prediction, fold.test_rows[REFERENCE])
        return result, self._prediction_frame(fold.held_out, prediction, fold.test_rows)

    def run_folds(self, folds: Sequence[Fold], failures: Sequence[FoldResult], model_kind: str,
                  standardizer: Optional[Standardizer], estimator: Optional[GwrEstimator] = None,
                  n_jobs: Optional[int] = None) -> CvResult:
        estimator = estimator or self.estimator
        n_jobs = self.n_jobs if n_jobs is None else n_jobs
        if n_jobs != 1 and len(folds) > 1:
            outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
                delayed(self._run_fold)(estimator, fold, model_kind, standardizer) for fold in folds
            )
        else:
            outcomes = [self._run_fold(estimator, fold, model_kind, standardizer) for fold in folds]

        results = sorted([o[0] for o in outcomes] + list(failures), key=lambda r: r.site)
        frames = [o[1] for o in outcomes if o[1] is not None]
        predictions = (pd.concat(frames, ignore_index=True) if frames
                       else pd.DataFrame(columns=PREDICTION_COLUMNS))
        return CvResult(model_kind, estimator.kernel_spec, results, predictions)

    def loocv(self, panel: Panel, model_kind: str = "sgwr", split: Optional[DaySplit] = None,
              train_days=None, test_days=None, fit_sites: Optional[Sequence[str]] = None,
              covariates: Optional[Sequence[str]] = None) -> CvResult:
        """
        Leave-one-site-out cross-validation: for each collocated site, fit on the training days of
        the other sites, correct the held-out sensor over the test days and score it against its
        station. Failed folds are reported and left out of the CV RMSE.

        Args:
            panel: The hourly Panel.
            model_kind: gwr or sgwr.
            split: The day split; S1 trains and S2 tests unless days are given explicitly.
            train_days: Training days, overrides split.
            test_days: Test days, overrides split.
            fit_sites: Sites taking part, the collocated sensors by default.
            covariates: Covariate subset, the panel covariates by default.
        """
        if split is None and (train_days is None or test_days is None):
            split = self.split_days(SplitSpec.for_panel(panel))
        train_days = split.s1 if train_days is None else train_days
        test_days = split.s2 if test_days is None else test_days

        folds, failures, standardizer = self.prepare_folds(
            panel, model_kind, train_days, test_days, fit_sites, covariates
        )
        result = self.run_folds(folds, failures, model_kind, standardizer)
        self.logger.info("LOOCV {} (B={:g} m): CV RMSE {:.4f} over {} folds, {} failed".format(
            model_kind, self.estimator.kernel_spec.bandwidth, result.cv_rmse,
            len(result.folds) - len(result.failed), len(result.failed)))
        return result

    @staticmethod
    def default_candidates(minimum: float = 200.0, maximum: float = 5000.0, step: float = 20.0) -> List[float]:
        if not (step > 0 and maximum >= minimum > 0):
            raise ConfigError("Invalid bandwidth candidate grid {}..{} step {}".format(minimum, maximum, step))
        count = int(round((maximum - minimum) / step)) + 1
        return [float(minimum + i * step) for i in range(count)]

    def bandwidth_search(self, panel: Panel, candidates: Iterable[float], model_kind: str = "sgwr",
                         split: Optional[DaySplit] = None, fit_sites: Optional[Sequence[str]] = None,
                         covariates: Optional[Sequence[str]] = None) -> BandwidthSearch:
        """
        Scores every candidate bandwidth by LOOCV within the learning sample S1 and keeps the
        smallest bandwidth with the lowest CV RMSE.

        Raises:
            ConfigError: No candidates.
            NumericalError: Every candidate failed in every fold.
        """
        candidates = sorted(set(float(b) for b in candidates))
        if not candidates:
            raise ConfigError("No bandwidth candidates")
        split = split or self.split_days(SplitSpec.for_panel(panel))
        folds, failures, standardizer = self.prepare_folds(
            panel, model_kind, split.s1, split.s1, fit_sites, covariates
        )

        def score(bandwidth: float) -> CvResult:
            estimator = self.estimator.with_kernel(self.estimator.kernel_spec.with_bandwidth(bandwidth))
            estimator.logger.setLevel(max(self.logger.level, logging.WARNING))
            return self.run_folds(folds, failures, model_kind, standardizer, estimator, n_jobs=1)

        if self.n_jobs != 1 and len(candidates) > 1:
            results = Parallel(n_jobs=self.n_jobs, prefer="threads")(delayed(score)(b) for b in candidates)
        else:
            results = [score(b) for b in candidates]

        curve = pd.DataFrame({
            "bandwidth": candidates,
            "cv_rmse": [r.cv_rmse for r in results],
            "failed_folds": [len(r.failed) for r in results],
        })
        scores = curve["cv_rmse"].to_numpy(dtype=float)
        if len(candidates) == 1:
            best = candidates[0]
        elif np.all(np.isnan(scores)):
            raise NumericalError("Every bandwidth candidate failed")
        else:
            best = candidates[int(np.nanargmin(scores))]
        self.logger.info("Bandwidth search over {} candidates: B* = {:g} m".format(len(candidates), best))
        return BandwidthSearch(best, curve)

    @staticmethod
    def rmse_by_hour(predictions: pd.DataFrame, sites: Optional[Sequence[str]] = None
                     ) -> Tuple[pd.DataFrame, int]:
        """
        RMSE across sites at each timestamp, for timestamps where every site has an error.

        Returns:
            A tidy frame (hour, hour_of_day, rmse, sites) and the number of skipped timestamps.
        """
        columns = ["hour", "hour_of_day", "rmse", "sites"]
        if predictions.empty:
            return pd.DataFrame(columns=columns), 0
        errors = predictions.assign(error=predictions["reference"] - predictions["prediction"])
        wide = errors.pivot(index="hour", columns="site", values="error")
        if sites is not None:
            wide = wide.reindex(columns=sorted(sites))
        complete = wide.notna().all(axis=1)
        kept = wide[complete]
        tidy = pd.DataFrame({
            "hour": kept.index,
            "hour_of_day": pd.DatetimeIndex(kept.index).hour,
            "rmse": np.sqrt(np.mean(kept.to_numpy(dtype=float) ** 2, axis=1)),
            "sites": kept.shape[1],
        }, columns=columns)
        return tidy.reset_index(drop=True), int((~complete).sum())

    @staticmethod
    def summary_by_hour(hourly: pd.DataFrame) -> pd.DataFrame:
        """Count, min, quartiles, max and mean of RMSE(t) for each hour of day."""
        grouped = hourly.groupby("hour_of_day", sort=True)["rmse"]
        return grouped.agg(
            count="count",
            min="min",
            q1=lambda s: s.quantile(0.25),
            median="median",
            q3=lambda s: s.quantile(0.75),
            max="max",
            mean="mean",
        ).reset_index()

    @staticmethod
    def cv_residuals(result: CvResult, panel: Panel) -> pd.DataFrame:
        """Signed held-out errors (reference minus prediction) tagged with the site typology."""
        frame = result.predictions
        return pd.DataFrame({
            "model": result.model_kind,
            "site": frame["site"],
            "typology": [panel.sites[s].typology.value for s in frame["site"]],
            "hour": frame["hour"],
            "residual": frame["reference"] - frame["prediction"],
        }, columns=["model", "site", "typology", "hour", "residual"])

    def score_s2(self, panel: Panel, families: Sequence[str], split: DaySplit, plan: PairingPlan,
                 fit_sites: Optional[Sequence[str]] = None,
                 covariates: Optional[Sequence[str]] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """
        Test-sample scores of every collocated sensor for each model family. Pointwise baselines
        learn on S0, geographically weighted models on S1 of all collocated sites, all are scored
        on S2.

        Returns:
            The score table (family, sensor, rows, rmse, ev, negatives, status, message) and the
            long prediction table.
        """
        unknown = sorted(set(families) - set(FAMILIES))
        if unknown:
            raise ConfigError("Unknown model families {}".format(", ".join(unknown)))
        sites = sorted(fit_sites) if fit_sites is not None else GwrEstimator.default_fit_sites(panel)
        targets = {s: panel.position(s) for s in sites}

        models: Dict[str, Dict[str, List[LocalModel]]] = {}
        errors: Dict[str, Dict[str, str]] = {}
        for family in families:
            models[family], errors[family] = {}, {}
            if family in ("gwr", "sgwr"):
                fitter = self.estimator.fit_gwr if family == "gwr" else self.estimator.fit_sgwr
                try:
                    fit = fitter(panel, targets, sites, split.s1, covariates=covariates)
                except GwrCalibrationError as e:
                    self.logger.warning("{} failed: {}".format(family, e))
                    errors[family] = {s: str(e) for s in sites}
                    continue
                for site in sites:
                    site_models = fit.models_for(site)
                    if site_models and not any(f.target_id == site for f in fit.failures):
                        models[family][site] = site_models
                    else:
                        errors[family][site] = "singular fit"
                continue
            for site in sites:
                try:
                    if family == "c":
                        model = self.baseline.fit_collocated(panel, site, split.s0, covariates=covariates)
                    else:
                        model = self.baseline.fit_noncollocated(panel, site, plan, split.s0, covariates)
                    models[family][site] = [model]
                except GwrCalibrationError as e:
                    self.logger.warning("{} model of {} failed: {}".format(family, site, e))
                    errors[family][site] = str(e)

        score_rows, frames = [], []
        for family in families:
            for site in sites:
                test_rows = panel.rows([site], split.s2)
                test_rows = test_rows[test_rows[REFERENCE].notna()]
                if site in errors[family] or site not in models[family]:
                    score_rows.append({"family": family, "sensor": site, "rows": 0, "rmse": np.nan,
                                       "ev": np.nan, "negatives": 0, "status": "failed",
                                       "message": errors[family].get(site, "")})
                    continue
                prediction = self.estimator.correct_frame(models[family][site], test_rows)
                result = self._score(site, prediction, test_rows[REFERENCE])
                score_rows.append({"family": family, "sensor": site, "rows": result.rows, "rmse": result.rmse,
                                   "ev": result.ev, "negatives": self.negative_count(prediction),
                                   "status": result.status, "message": result.message})
                frames.append(self._prediction_frame(site, prediction, test_rows).assign(family=family))

        scores = pd.DataFrame(score_rows, columns=["family", "sensor", "rows", "rmse", "ev",
                                                   "negatives", "status", "message"])
        predictions = (pd.concat(frames, ignore_index=True) if frames
                       else pd.DataFrame(columns=PREDICTION_COLUMNS + ["family"]))
        return scores, predictions[["family"] + PREDICTION_COLUMNS]

    def correct_deployed(self, panel: Panel, model_kind: str, split: DaySplit,
                         fit_sites: Optional[Sequence[str]] = None,
                         covariates: Optional[Sequence[str]] = None) -> DeployedCorrection:
        """
        Corrects every deployed sensor over S2 with a model fitted on S1 at its position. sgwr
        standardizes each deployed sensor with its own S1 statistics.
        """
        deployed = panel.site_ids(SiteRole.DEPLOYED_SENSOR)
        frames, negatives = [], []
        if deployed:
            targets = {s: panel.position(s) for s in deployed}
            if model_kind == "sgwr":
                fit = self.estimator.fit_sgwr(panel, targets, fit_sites, split.s1, covariates=covariates)
            elif model_kind == "gwr":
                fit = self.estimator.fit_gwr(panel, targets, fit_sites, split.s1, covariates)
            else:
                raise ConfigError("Deployed sensors are corrected with gwr or sgwr, got {}".format(model_kind))
            for site in deployed:
                site_models = fit.models_for(site)
                rows = panel.rows([site], split.s2)
                if not site_models or rows.empty:
                    self.logger.warning("Deployed sensor {} not corrected".format(site))
                    continue
                prediction = self.estimator.correct_frame(site_models, rows)
                frames.append(pd.DataFrame({
                    "site": site, "hour": rows.index.get_level_values("hour"),
                    "prediction": prediction.to_numpy(),
                }))
                negatives.append({"site": site, "rows": len(rows),
                                  "negatives": self.negative_count(prediction)})

        predictions = (pd.concat(frames, ignore_index=True) if frames
                       else pd.DataFrame(columns=["site", "hour", "prediction"]))
        return DeployedCorrection(predictions, pd.DataFrame(negatives, columns=["site", "rows", "negatives"]))

    def evaluate(self, panel: Panel, families: Sequence[str], split: DaySplit, plan: PairingPlan,
                 fit_sites: Optional[Sequence[str]] = None, covariates: Optional[Sequence[str]] = None,
                 candidates: Optional[Sequence[float]] = None) -> EvalReport:
        """
        S2 scores, LOOCV of the geographically weighted families with their hourly RMSE, deployed
        sensor corrections and, when candidates are given, a bandwidth search run first whose
        optimum is then used for everything else. The validator keeps its own estimator.
        """
        bandwidth = None
        runner = self
        kinds = [f for f in families if f in ("gwr", "sgwr")]
        if candidates:
            bandwidth = self.bandwidth_search(panel, candidates, kinds[-1] if kinds else "sgwr",
                                              split, fit_sites, covariates)
            tuned = self.estimator.with_kernel(self.estimator.kernel_spec.with_bandwidth(bandwidth.best))
            runner = Validator(tuned, self.baseline, self.n_jobs, self.logger.level)

        scores, predictions = runner.score_s2(panel, families, split, plan, fit_sites, covariates)
        report = EvalReport(split, runner.estimator.kernel_spec, plan, scores, predictions, bandwidth=bandwidth)

        residuals = []
        for kind in kinds:
            result = runner.loocv(panel, kind, split, fit_sites=fit_sites, covariates=covariates)
            report.cv[kind] = result
            report.hourly[kind], report.hourly_skipped[kind] = runner.rmse_by_hour(result.predictions)
            if report.hourly_skipped[kind]:
                self.logger.info("{}: {} timestamps without a complete site vector".format(
                    kind, report.hourly_skipped[kind]))
            residuals.append(runner.cv_residuals(result, panel))
        if residuals:
            report.residuals = pd.concat(residuals, ignore_index=True)
            report.deployed = runner.correct_deployed(panel, kinds[-1], split, fit_sites, covariates)
        return report
