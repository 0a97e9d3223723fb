import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from gwr_calibration.misc.exceptions import ConfigError, UnknownSiteError
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.models.geo import Position

REFERENCE = GwrCalibrationVariables.reference_channel


class SiteRole(str, Enum):
    REFERENCE = "reference"
    COLLOCATED_SENSOR = "collocated_sensor"
    DEPLOYED_SENSOR = "deployed_sensor"


class Typology(str, Enum):
    URBAN_TRAFFIC = "urban_traffic"
    URBAN_INDUSTRY = "urban_industry"
    URBAN_BACKGROUND = "urban_background"
    SUBURBAN_TRAFFIC = "suburban_traffic"
    SUBURBAN_BACKGROUND = "suburban_background"


@dataclass(frozen=True)
class SiteRecord:
    """
    A measurement location.

    Attributes:
        id: Site identifier. Sensor sites use the (renamed) sensor id, reference sites the station id.
        position: Projected position in meters.
        role: reference, collocated_sensor or deployed_sensor.
        typology: Location class of the site.
        paired_reference: Station id cohosting a collocated sensor. Empty for the other roles.
    """

    id: str
    position: Position
    role: SiteRole
    typology: Typology
    paired_reference: Optional[str] = None

    def __post_init__(self):
        if self.role == SiteRole.COLLOCATED_SENSOR and not self.paired_reference:
            raise ConfigError("Collocated sensor {} has no paired reference station".format(self.id))

    @property
    def is_sensor(self) -> bool:
        return self.role != SiteRole.REFERENCE


class Panel:
    """
    Hourly, site-indexed observation table.

    The frame is indexed by (site, hour) with one column per model covariate plus the reference
    concentration column. Sensor rows always carry every covariate; the reference column is
    filled at reference sites and at collocated sensors.

    A collocated sensor row holds a copy of its paired station's reference value for the same
    hour, the response its models are fitted against. Deployed sensor rows and hours the station
    did not report keep NaN there, and station rows keep NaN covariates.
    """

    def __init__(self, sites: Sequence[SiteRecord], frame: pd.DataFrame, covariates: Sequence[str],
                 dropped: Optional[Mapping[str, int]] = None):
        self.sites: Dict[str, SiteRecord] = {s.id: s for s in sorted(sites, key=lambda s: s.id)}
        self.covariates = GwrCalibrationVariables.ordered_covariates(covariates)
        columns = list(self.covariates) + [REFERENCE]
        frame = frame.reindex(columns=columns)
        self.frame = frame.sort_index()
        self.dropped = dict(dropped or {})

    def __repr__(self):
        return "Panel(sites={}, hours={}, rows={})".format(len(self.sites), len(self.hours), len(self.frame))

    @property
    def hours(self) -> pd.DatetimeIndex:
        if self.frame.empty:
            return pd.DatetimeIndex([], tz="UTC")
        return pd.DatetimeIndex(self.frame.index.get_level_values("hour").unique()).sort_values()

    @property
    def days(self) -> List:
        return sorted(set(self.hours.date))

    def site_ids(self, role: Optional[SiteRole] = None) -> List[str]:
        return [s.id for s in self.sites.values() if role is None or s.role == role]

    def sensor_ids(self) -> List[str]:
        return [s.id for s in self.sites.values() if s.is_sensor]

    def position(self, site_id: str) -> Position:
        return self.sites[site_id].position

    def counts(self) -> pd.Series:
        """Number of stored hours n_j per site."""
        if self.frame.empty:
            return pd.Series(dtype=int)
        return self.frame.groupby(level="site").size()

    def rows(self, site_ids: Iterable[str], days: Optional[Iterable] = None) -> pd.DataFrame:
        """Rows of the given sites, optionally restricted to a set of UTC days."""
        wanted = set(site_ids)
        frame = self.frame
        mask = frame.index.get_level_values("site").isin(wanted)
        if days is not None:
            day_set = set(days)
            hour_days = pd.DatetimeIndex(frame.index.get_level_values("hour")).date
            mask &= pd.Index(hour_days).isin(list(day_set))
        return frame[mask]

    def reference_series(self, station_id: str) -> pd.Series:
        """Reference concentrations of a station indexed by hour."""
        if station_id not in self.sites:
            raise UnknownSiteError([station_id])
        rows = self.rows([station_id])[REFERENCE].dropna()
        return rows.droplevel("site")

    def with_frame(self, frame: pd.DataFrame) -> "Panel":
        return Panel(list(self.sites.values()), frame, self.covariates, self.dropped)

    def restrict_days(self, days: Iterable) -> "Panel":
        return self.with_frame(self.rows(self.sites.keys(), days))

    def without_reference(self, site_ids: Iterable[str]) -> "Panel":
        """Copy whose reference values at the given sites are replaced by NaN."""
        frame = self.frame.copy()
        mask = frame.index.get_level_values("site").isin(set(site_ids))
        frame.loc[mask, REFERENCE] = np.nan
        return self.with_frame(frame)


class Aggregator:
    """
    Minute → quarter-hour → hour aggregation with the representativeness thresholds:
    a quarter needs at least 12 of its 15 minutes, an hour at least 3 of its 4 quarters.
    """

    min_minutes_per_quarter = 12
    min_quarters_per_hour = 3

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("Aggregator")
        self.logger.setLevel(log_level)

    def minutes_to_quarters(self, records: pd.DataFrame) -> pd.DataFrame:
        """
        Averages minute records into quarter-hours aligned on :00/:15/:30/:45.

        Args:
            records: Long records with device_id, timestamp, channel and value columns.

        Returns:
            A frame with device_id, channel, quarter, value and minutes columns. Quarters with
            fewer than 12 distinct minutes are absent.
        """
        columns = ["device_id", "channel", "quarter", "value", "minutes"]
        if records.empty:
            return pd.DataFrame(columns=columns)

        minutes = (
            records.assign(timestamp=records["timestamp"].dt.floor("min"))
            .groupby(["device_id", "channel", "timestamp"], sort=True)["value"].mean()
            .reset_index()
        )
        minutes["quarter"] = minutes["timestamp"].dt.floor("15min")
        grouped = minutes.groupby(["device_id", "channel", "quarter"], sort=True)["value"]
        quarters = grouped.agg(value="mean", minutes="count").reset_index()

        kept = quarters[quarters["minutes"] >= self.min_minutes_per_quarter]
        self.logger.info(
            "Quarter-hours: {} kept, {} below {} minutes".format(
                len(kept), len(quarters) - len(kept), self.min_minutes_per_quarter
            )
        )
        return kept[columns].reset_index(drop=True)

    def quarters_to_hours(self, quarters: pd.DataFrame) -> pd.DataFrame:
        """
        Averages quarter means into hours aligned on :00 UTC.

        The hourly value is the unweighted mean of the available quarter means.

        Returns:
            A frame with device_id, channel, hour, value and quarters columns. Hours with
            fewer than 3 quarters are absent.
        """
        columns = ["device_id", "channel", "hour", "value", "quarters"]
        if quarters.empty:
            return pd.DataFrame(columns=columns)

        frame = quarters.assign(hour=pd.to_datetime(quarters["quarter"]).dt.floor("h"))
        grouped = frame.groupby(["device_id", "channel", "hour"], sort=True)["value"]
        hours = grouped.agg(value="mean", quarters="count").reset_index()

        kept = hours[hours["quarters"] >= self.min_quarters_per_hour]
        self.logger.info(
            "Hours: {} kept, {} below {} quarters".format(
                len(kept), len(hours) - len(kept), self.min_quarters_per_hour
            )
        )
        return kept[columns].reset_index(drop=True)

    def aggregate(self, records: pd.DataFrame) -> pd.DataFrame:
        return self.quarters_to_hours(self.minutes_to_quarters(records))


class PanelBuilder:
    """
    Assembles the aligned hourly Panel from hourly channel means and the site registry.
    """

    def __init__(self, covariates: Sequence[str] = GwrCalibrationVariables.covariate_order,
                 log_level: int = logging.INFO):
        self.logger = logging.getLogger("PanelBuilder")
        self.logger.setLevel(log_level)
        self.covariates = GwrCalibrationVariables.ordered_covariates(covariates)

    def build_panel(self, hourly: pd.DataFrame, sites: Sequence[SiteRecord]) -> Panel:
        """
        Builds the Panel. A sensor cell is kept only when every model covariate is present.

        Args:
            hourly: Hourly means with device_id, channel, hour and value columns.
            sites: The site registry.

        Returns:
            The Panel, with the per-site count of dropped incomplete cells in Panel.dropped.

        Raises:
            UnknownSiteError: If a device in hourly is not in the registry.
        """
        registry = {s.id: s for s in sites}
        devices = set(hourly["device_id"].unique()) if not hourly.empty else set()
        unknown = devices - set(registry)
        if unknown:
            raise UnknownSiteError(unknown)

        index = pd.MultiIndex.from_arrays(
            [pd.Index([], dtype=object), pd.DatetimeIndex([], tz="UTC")], names=["site", "hour"]
        )
        empty = pd.DataFrame(index=index, columns=list(self.covariates) + [REFERENCE], dtype=float)
        if hourly.empty:
            return Panel(sites, empty, self.covariates)

        wide = hourly.pivot_table(
            index=["device_id", "hour"], columns="channel", values="value", aggfunc="mean"
        )
        wide.index = wide.index.set_names(["site", "hour"])
        for column in list(self.covariates) + [REFERENCE]:
            if column not in wide.columns:
                wide[column] = np.nan

        site_level = wide.index.get_level_values("site")
        is_sensor = site_level.map(lambda sid: registry[sid].is_sensor).to_numpy(dtype=bool)

        sensor = wide[is_sensor]
        complete = sensor[list(self.covariates)].notna().all(axis=1)
        dropped = (~complete).groupby(level="site").sum().astype(int)
        dropped = {k: int(v) for k, v in dropped.items() if v > 0}
        for site_id, count in sorted(dropped.items()):
            self.logger.info("Site {}: {} incomplete hours dropped".format(site_id, count))
        sensor = sensor[complete][list(self.covariates)].copy()
        sensor[REFERENCE] = np.nan

        stations = wide[~is_sensor][[REFERENCE]].dropna()
        station_frame = stations.reindex(columns=list(self.covariates) + [REFERENCE])

        for site in sites:
            if site.role != SiteRole.COLLOCATED_SENSOR or site.id not in sensor.index.get_level_values("site"):
                continue
            if site.paired_reference not in registry:
                raise UnknownSiteError([site.paired_reference])
            ref = stations.xs(site.paired_reference, level="site")[REFERENCE] \
                if site.paired_reference in stations.index.get_level_values("site") else pd.Series(dtype=float)
            site_rows = sensor.index.get_level_values("site") == site.id
            hours = sensor.index.get_level_values("hour")[site_rows]
            sensor.loc[site_rows, REFERENCE] = ref.reindex(hours).to_numpy()

        frame = pd.concat([sensor, station_frame]).sort_index()
        panel = Panel(sites, frame, self.covariates, dropped)
        self.logger.info("Built {}".format(panel))
        return panel
