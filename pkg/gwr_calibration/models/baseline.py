import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from gwr_calibration.misc.exceptions import (
    ConfigError,
    DataError,
    DegenerateVariableError,
    InsufficientDataError,
    UnknownSiteError,
)
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.models.geo import Geo
from gwr_calibration.models.gwr import DesignSlice, GwrEstimator, LocalModel
from gwr_calibration.processing.preprocess import REFERENCE, Panel, SiteRole


class Provenance(str, Enum):
    COLLOCATED = "collocated"
    MATCHED_TYPOLOGY = "matched-typology"
    USER_SPECIFIED = "user-specified"
    NEAREST = "nearest"


@dataclass(frozen=True)
class Pairing:
    sensor: str
    station: str
    provenance: Provenance
    distance_m: float


@dataclass
class PairingPlan:
    """The reference station supplying the response of each sensor's non-collocated model."""

    pairings: Dict[str, Pairing] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairings)

    def __contains__(self, sensor: str) -> bool:
        return sensor in self.pairings

    def station_for(self, sensor: str) -> str:
        if sensor not in self.pairings:
            raise DataError("Sensor {} has no paired reference station".format(sensor))
        return self.pairings[sensor].station

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"sensor": p.sensor, "station": p.station, "provenance": p.provenance.value,
             "distance_m": p.distance_m}
            for _, p in sorted(self.pairings.items())
        ]
        return pd.DataFrame(rows, columns=["sensor", "station", "provenance", "distance_m"])

    @staticmethod
    def collocated(panel: Panel) -> "PairingPlan":
        """Pairs every collocated sensor with the station it shares a site with."""
        plan = PairingPlan()
        for site in panel.sites.values():
            if site.role == SiteRole.COLLOCATED_SENSOR:
                station = panel.sites.get(site.paired_reference)
                distance = Geo.distance(site.position, station.position) if station else float("nan")
                plan.pairings[site.id] = Pairing(site.id, site.paired_reference, Provenance.COLLOCATED, distance)
        return plan


class BaselineFitter:
    """
    Kernel-free pointwise models: the collocated regression of a sensor on its own station, and
    the non-collocated regression of a sensor on a station at a different but similar site.
    """

    def __init__(self, condition_limit: float = GwrCalibrationVariables.condition_limit,
                 jitter: bool = False, log_level: int = logging.INFO):
        self.logger = logging.getLogger("BaselineFitter")
        self.logger.setLevel(log_level)
        self.estimator = GwrEstimator(jitter=jitter, condition_limit=condition_limit, log_level=log_level)

    def fit_collocated(self, panel: Panel, site_id: str, days=None, standardized: bool = False,
                       covariates: Optional[Sequence[str]] = None) -> LocalModel:
        """
        Ordinary least squares on the rows of one collocated sensor against its own station.

        Args:
            panel: The hourly Panel.
            site_id: A collocated sensor.
            days: Days of the fitting sample.
            standardized: Standardize the covariates with the site's own statistics first. The
                coefficients then describe standardized inputs (as in coefficient tables) and the
                model is flagged as standardized.
            covariates: Covariate subset, the panel covariates by default.

        Raises:
            UnknownSiteError: The site is not in the panel.
            DataError: The site does not host a reference station.
            InsufficientDataError: No rows with a reference value.
            SingularFitError: Rank-deficient design.
        """
        site = panel.sites.get(site_id)
        if site is None:
            raise UnknownSiteError([site_id])
        if site.role != SiteRole.COLLOCATED_SENSOR:
            raise DataError("Site {} does not host a reference station".format(site_id))

        design = DesignSlice.from_panel(panel, [site_id], days, covariates)
        if len(design) == 0:
            raise InsufficientDataError("No reference-bearing rows at {}".format(site_id))
        if standardized:
            design = self._standardize_design(design, site_id)

        model = self.estimator.fit_wls(design, np.ones(len(design)), site_id, site.position, family="c")
        self.logger.debug("Collocated model at {}: {}".format(site_id, model.coefficients()))
        return replace(model, standardized=standardized)

    @staticmethod
    def _standardize_design(design: DesignSlice, site_id: str) -> DesignSlice:
        covariate_values = design.X[:, 1:]
        mu = covariate_values.mean(axis=0)
        sigma = covariate_values.std(axis=0)
        for variable, m, s in zip(design.covariates, mu, sigma):
            if s <= 1e-12 * max(1.0, abs(m)):
                raise DegenerateVariableError(site_id, variable)
        return replace(design, X=np.column_stack([design.X[:, 0], (covariate_values - mu) / sigma]))

    def fit_noncollocated(self, panel: Panel, sensor_id: str, plan: PairingPlan, days=None,
                          covariates: Optional[Sequence[str]] = None) -> LocalModel:
        """
        Ordinary least squares of the paired station's concentrations on the sensor's
        covariates over the hours both have.

        Raises:
            UnknownSiteError: The sensor or its station is not in the panel.
            InsufficientDataError: No overlapping hours.
            SingularFitError: Rank-deficient design.
        """
        if sensor_id not in panel.sites:
            raise UnknownSiteError([sensor_id])
        station = plan.station_for(sensor_id)
        reference = panel.reference_series(station)

        covariates = list(covariates or panel.covariates)
        rows = panel.rows([sensor_id], days)[covariates].copy()
        rows[REFERENCE] = reference.reindex(rows.index.get_level_values("hour")).to_numpy()
        design = DesignSlice.from_frame(rows, covariates)
        if len(design) == 0:
            raise InsufficientDataError(
                "Sensor {} and station {} share no hours".format(sensor_id, station)
            )
        model = self.estimator.fit_wls(
            design, np.ones(len(design)), sensor_id, panel.position(sensor_id), family="nc"
        )
        self.logger.debug("Non-collocated model {} <- {}: {} rows".format(sensor_id, station, model.rows))
        return model

    def default_pairing(self, panel: Panel, sensors: Optional[Sequence[str]] = None,
                        overrides: Optional[Mapping[str, str]] = None) -> PairingPlan:
        """
        Pairs every sensor with the nearest reference station of the same typology that is not
        its own host. Without such a station the nearest non-cohosted station is used.

        Args:
            panel: The hourly Panel with its site registry.
            sensors: Sensors to pair, every sensor by default.
            overrides: Sensor to station pairs taken as they are.

        Raises:
            ConfigError: An override names an unknown sensor or a site that is not a station.
        """
        overrides = dict(overrides or {})
        unknown = sorted(set(overrides) - set(panel.sites))
        if unknown:
            raise ConfigError("Pairing names unknown sensors {}".format(", ".join(unknown)))
        stations = [s for s in panel.sites.values() if s.role == SiteRole.REFERENCE]
        plan = PairingPlan()

        for sensor_id in sorted(sensors if sensors is not None else panel.sensor_ids()):
            site = panel.sites.get(sensor_id)
            if site is None:
                raise ConfigError("Pairing names unknown sensor {}".format(sensor_id))

            if sensor_id in overrides:
                station = panel.sites.get(overrides[sensor_id])
                if station is None or station.role != SiteRole.REFERENCE:
                    raise ConfigError("Pairing of {} names {}, which is not a reference station".format(
                        sensor_id, overrides[sensor_id]))
                plan.pairings[sensor_id] = Pairing(
                    sensor_id, station.id, Provenance.USER_SPECIFIED,
                    Geo.distance(site.position, station.position),
                )
                continue

            candidates = [s for s in stations if s.id != site.paired_reference]
            if not candidates:
                self.logger.warning("No reference station available to pair {}".format(sensor_id))
                continue
            matched = [s for s in candidates if s.typology == site.typology]
            pool, provenance = (matched, Provenance.MATCHED_TYPOLOGY) if matched else (candidates, Provenance.NEAREST)
            station = min(pool, key=lambda s: (Geo.distance(site.position, s.position), s.id))
            plan.pairings[sensor_id] = Pairing(
                sensor_id, station.id, provenance, Geo.distance(site.position, station.position)
            )

        self.logger.info("Pairing plan: {}".format(
            ", ".join("{}->{} ({})".format(p.sensor, p.station, p.provenance.value)
                      for p in plan.pairings.values())))
        return plan
