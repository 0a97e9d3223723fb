import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from gwr_calibration.misc.exceptions import (
    ConfigError,
    InvalidInputError,
    MissingColumnError,
    RenameError,
)
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.models.geo import BoundingBox, Geo, LonLat, Position
from gwr_calibration.processing.preprocess import SiteRecord, SiteRole, Typology

RECORD_COLUMNS = ["device_id", "timestamp", "channel", "value", "flag"]


@dataclass(frozen=True)
class IngestSchema:
    """
    Column mapping of a raw file.

    Attributes:
        layout: "wide" (one row per device and minute, one column per channel) or
            "long" (device, minute, channel, value, flag).
        columns: Logical name to file column. Logical names are device, timestamp, flag and,
            for the long layout, channel and value; for the wide layout each channel name
            (NO2_nA, NO_nA, CO_nA, RH_pct, T_C, P_mbar, REF_NO2) maps to its column.
        delimiter: "auto", "," or ";".
    """

    layout: str = "wide"
    columns: Mapping[str, str] = field(default_factory=dict)
    delimiter: str = "auto"

    def __post_init__(self):
        if self.layout not in ("wide", "long"):
            raise ConfigError("Unknown ingest layout '{}'".format(self.layout))
        if self.delimiter not in ("auto", ",", ";"):
            raise ConfigError("Unsupported delimiter '{}'".format(self.delimiter))
        unknown = set(self.columns) - {"device", "timestamp", "flag", "channel", "value"} \
            - set(GwrCalibrationVariables.all_channels)
        if unknown:
            raise ConfigError("Unknown logical columns: {}".format(", ".join(sorted(unknown))))

    def column(self, logical: str) -> str:
        return self.columns.get(logical, logical)

    def channel_columns(self) -> Dict[str, str]:
        """Channel name to file column for the wide layout."""
        return {c: self.columns[c] for c in GwrCalibrationVariables.all_channels if c in self.columns}


@dataclass
class LoadReport:
    path: str
    rows_read: int = 0
    rows_skipped: int = 0
    records: int = 0


class RenameMap:
    """
    Bijective association old device id → new device id.
    """

    def __init__(self, mapping: Mapping[str, str]):
        self.mapping = dict(mapping)
        targets = list(self.mapping.values())
        duplicates = sorted({t for t in targets if targets.count(t) > 1})
        if duplicates:
            raise ConfigError("Rename map is not bijective, repeated targets: {}".format(", ".join(duplicates)))

    def __len__(self):
        return len(self.mapping)

    def __contains__(self, device_id: str) -> bool:
        return device_id in self.mapping

    def missing(self, device_ids: Iterable[str]) -> List[str]:
        return sorted(set(device_ids) - set(self.mapping))

    @staticmethod
    def identity(device_ids: Iterable[str]) -> "RenameMap":
        return RenameMap({d: d for d in device_ids})

    @staticmethod
    def antwerp() -> "RenameMap":
        """Device names of the Antwerp SensEURCity deployment and their readable aliases."""
        return RenameMap({
            "4065DA": "ASE_A01", "4065EA": "ASE_A02", "4043B1": "ASE_A03", "4049A6": "ASE_A04",
            "4067BD": "ASE_A05", "4043AE": "ASE_A06", "4067B3": "ASE_A07", "40642B": "ASE_A08",
            "4047D7": "ASE_A09", "40499C": "ASE_A13", "4043A7": "ASE_A14", "40499F": "ASE_A16",
            "406246": "ASE_A21", "4047CD": "ASE_A22", "4065E0": "ASE_A23", "402B00": "ASE_A24",
            "4065D3": "ASE_A25", "4067BA": "ASE_A26", "4065D0": "ASE_A27", "402723": "ASE_A28",
            "408168": "ASE_A29", "4047E7": "ASE_A30", "406424": "ASE_A31", "408165": "ASE_A32",
            "408175": "ASE_A33", "4047DD": "ASE_A34", "408178": "ASE_A35", "4067B0": "ASE_A36",
            "4065DD": "ASE_A37", "4065E3": "ASE_A38", "406249": "ASE_A39", "40623F": "ASE_A40",
            "4047E0": "ASE_A41", "40641B": "ASE_A42",
        })


class Ingestor:
    """
    Loads raw minute records, removes flagged values, renames devices and converts the
    reference concentrations to µg/m3.
    """

    def __init__(self, schema: IngestSchema, log_level: int = logging.INFO):
        self.logger = logging.getLogger("Ingestor")
        self.logger.setLevel(log_level)
        self.schema = schema

    @staticmethod
    def empty_records() -> pd.DataFrame:
        return pd.DataFrame({
            "device_id": pd.Series(dtype=object),
            "timestamp": pd.Series(dtype="datetime64[ns, UTC]"),
            "channel": pd.Series(dtype=object),
            "value": pd.Series(dtype=float),
            "flag": pd.Series(dtype=int),
        })

    @staticmethod
    def detect_delimiter(header_line: str) -> str:
        """Picks ';' when the header holds more semicolons than commas, else ','."""
        return ";" if header_line.count(";") > header_line.count(",") else ","

    def load_raw(self, path: str) -> Tuple[pd.DataFrame, LoadReport]:
        """
        Reads one delimited file into long records sorted by device then timestamp.

        Args:
            path: The file to read.

        Returns:
            The records and a LoadReport with read and skipped row counts.

        Raises:
            MissingColumnError: If a mandatory column is absent from the header.
        """
        report = LoadReport(path=str(path))
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline()
        if not header.strip():
            self.logger.info("{}: empty file".format(path))
            return self.empty_records(), report

        delimiter = self.schema.delimiter
        if delimiter == "auto":
            delimiter = self.detect_delimiter(header)
        raw = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, skipinitialspace=True)
        raw.columns = [c.strip() for c in raw.columns]
        report.rows_read = len(raw)

        mandatory = ["device", "timestamp"]
        if self.schema.layout == "long":
            mandatory += ["channel", "value"]
        for logical in mandatory:
            if self.schema.column(logical) not in raw.columns:
                raise MissingColumnError(self.schema.column(logical), str(path))

        if self.schema.layout == "long":
            records, bad = self._parse_long(raw)
        else:
            records, bad = self._parse_wide(raw, str(path))

        report.rows_skipped = int(bad)
        records = records.sort_values(["device_id", "timestamp", "channel"], kind="mergesort")
        records = records.reset_index(drop=True)
        report.records = len(records)
        self.logger.info(
            "{}: {} rows read, {} skipped, {} records".format(
                path, report.rows_read, report.rows_skipped, report.records
            )
        )
        return records, report

    def _parse_common(self, raw: pd.DataFrame) -> Tuple[pd.Series, pd.Series, pd.Series, np.ndarray]:
        device = raw[self.schema.column("device")].str.strip()
        timestamp = pd.to_datetime(raw[self.schema.column("timestamp")], utc=True, errors="coerce")
        timestamp = timestamp.dt.floor("min")
        flag_column = self.schema.column("flag")
        if flag_column in raw.columns:
            flag_text = raw[flag_column].str.strip().replace("", "0")
            flag = pd.to_numeric(flag_text, errors="coerce")
        else:
            flag = pd.Series(0, index=raw.index, dtype=float)
        ok = (device != "").to_numpy() & timestamp.notna().to_numpy() & flag.notna().to_numpy()
        return device, timestamp, flag.fillna(0).astype(int), ok

    def _parse_long(self, raw: pd.DataFrame) -> Tuple[pd.DataFrame, int]:
        device, timestamp, flag, ok = self._parse_common(raw)
        channel = raw[self.schema.column("channel")].str.strip()
        value = pd.to_numeric(raw[self.schema.column("value")].str.strip(), errors="coerce")
        ok &= channel.isin(GwrCalibrationVariables.all_channels).to_numpy() & np.isfinite(value.to_numpy())
        records = pd.DataFrame({
            "device_id": device[ok].to_numpy(),
            "timestamp": timestamp[ok].to_numpy(),
            "channel": channel[ok].to_numpy(),
            "value": value[ok].to_numpy(dtype=float),
            "flag": flag[ok].to_numpy(dtype=int),
        })
        records["timestamp"] = pd.to_datetime(records["timestamp"], utc=True)
        return records, int((~ok).sum())

    def _parse_wide(self, raw: pd.DataFrame, path: str) -> Tuple[pd.DataFrame, int]:
        channels = self.schema.channel_columns()
        if not channels:
            channels = {c: c for c in GwrCalibrationVariables.all_channels if c in raw.columns}
        for channel, column in channels.items():
            if column not in raw.columns:
                raise MissingColumnError(column, path)
        if not channels:
            raise MissingColumnError("any channel column", path)

        device, timestamp, flag, ok = self._parse_common(raw)
        values = {}
        for channel, column in channels.items():
            text = raw[column].str.strip()
            numeric = pd.to_numeric(text, errors="coerce")
            malformed = (text != "") & ~np.isfinite(numeric)
            ok &= ~malformed.to_numpy()
            values[channel] = numeric

        wide = pd.DataFrame(values)
        wide["device_id"] = device
        wide["timestamp"] = timestamp
        wide["flag"] = flag
        wide = wide[ok]
        records = wide.melt(
            id_vars=["device_id", "timestamp", "flag"], value_vars=list(channels),
            var_name="channel", value_name="value"
        ).dropna(subset=["value"])
        return records[RECORD_COLUMNS].reset_index(drop=True), int((~ok).sum())

    def apply_flags(self, records: pd.DataFrame, bad_flags: Iterable[int]) -> Tuple[pd.DataFrame, Dict[str, int]]:
        """
        Removes records whose quality flag is in bad_flags.

        Returns:
            The surviving records and the number of removed records per device.
        """
        bad = set(int(b) for b in bad_flags)
        if not bad or records.empty:
            return records, {}
        flagged = records["flag"].isin(bad)
        removed = records[flagged].groupby("device_id").size()
        removed = {k: int(v) for k, v in removed.items()}
        for device_id, count in sorted(removed.items()):
            self.logger.info("Device {}: {} flagged records removed".format(device_id, count))
        return records[~flagged].reset_index(drop=True), removed

    def rename(self, records: pd.DataFrame, rename_map: RenameMap,
               whitelist: Iterable[str] = ()) -> pd.DataFrame:
        """
        Replaces device ids through rename_map. Whitelisted reference stations keep their id.

        Raises:
            RenameError: Naming every id that is neither mapped nor whitelisted.
        """
        if records.empty:
            return records
        allowed = set(whitelist)
        devices = set(records["device_id"].unique())
        unknown = [d for d in rename_map.missing(devices) if d not in allowed]
        if unknown:
            raise RenameError(unknown)
        mapping = dict(rename_map.mapping)
        renamed = records.copy()
        renamed["device_id"] = renamed["device_id"].map(lambda d: mapping.get(d, d))
        return renamed

    @staticmethod
    def ppb_to_ugm3(value, pressure, temperature, molar_mass: float = GwrCalibrationVariables.no2_molar_mass):
        """
        Converts a mixing ratio in ppb to a mass concentration in µg/m3 with the ideal gas law:
        value * P * M / (1000 * R * T).

        Args:
            value: Concentration in ppb (scalar or array).
            pressure: Pressure in Pa.
            temperature: Temperature in K.
            molar_mass: Molar mass in g/mol, NO2 by default.

        Raises:
            InvalidInputError: If a pressure or temperature is not strictly positive.
        """
        p = np.asarray(pressure, dtype=float)
        t = np.asarray(temperature, dtype=float)
        if np.any(~(p > 0)) or np.any(~(t > 0)):
            raise InvalidInputError("Pressure and temperature must be > 0")
        result = np.asarray(value, dtype=float) * p * molar_mass / (1000.0 * GwrCalibrationVariables.gas_constant * t)
        return float(result) if np.ndim(result) == 0 else result

    def convert_reference(self, records: pd.DataFrame, unit: str = "ppb",
                          standard_pressure_pa: float = GwrCalibrationVariables.standard_pressure_pa,
                          standard_temperature_k: float = GwrCalibrationVariables.standard_temperature_k) -> pd.DataFrame:
        """
        Converts REF_NO2 records to µg/m3 in place of their ppb values.

        P and T come from the same device and minute when those channels exist (mbar and °C),
        otherwise from the standard atmosphere.
        """
        if unit == "ugm3" or records.empty:
            return records
        if unit != "ppb":
            raise ConfigError("Unknown reference unit '{}'".format(unit))

        ref_channel = GwrCalibrationVariables.reference_channel
        is_ref = records["channel"] == ref_channel
        if not is_ref.any():
            return records

        keys = ["device_id", "timestamp"]
        ambient = records[records["channel"].isin(
            [GwrCalibrationVariables.pressure_channel, GwrCalibrationVariables.temperature_channel]
        )].pivot_table(index=keys, columns="channel", values="value", aggfunc="mean")
        ref = records[is_ref].join(ambient, on=keys) if not ambient.empty else records[is_ref].copy()

        pressure = ref.get(GwrCalibrationVariables.pressure_channel, pd.Series(np.nan, index=ref.index))
        temperature = ref.get(GwrCalibrationVariables.temperature_channel, pd.Series(np.nan, index=ref.index))
        pressure_pa = (pressure * 100.0).fillna(standard_pressure_pa)
        temperature_k = (temperature + 273.15).fillna(standard_temperature_k)

        converted = records.copy()
        converted.loc[is_ref, "value"] = self.ppb_to_ugm3(
            ref["value"].to_numpy(), pressure_pa.to_numpy(), temperature_k.to_numpy()
        )
        self.logger.info("Converted {} reference records from ppb".format(int(is_ref.sum())))
        return converted

    @staticmethod
    def _coordinate(row: dict, column: str) -> float:
        try:
            value = float(row[column])
        except ValueError:
            value = float("nan")
        if not np.isfinite(value):
            raise InvalidInputError("Site {}: invalid {} '{}'".format(row["id"], column, row[column]))
        return value

    def load_site_registry(self, path: str, origin: Optional[LonLat] = None,
                           bbox: Optional[BoundingBox] = None) -> List[SiteRecord]:
        """
        Reads the site registry: id, role, typology, paired_reference and either x/y (meters)
        or lon/lat (degrees, projected through origin).

        Raises:
            MissingColumnError: If neither coordinate pair is present.
            InvalidInputError: If a coordinate is not a finite number or a position falls outside bbox.
        """
        with open(path, "r", encoding="utf-8") as f:
            delimiter = self.detect_delimiter(f.readline())
        table = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
        table.columns = [c.strip() for c in table.columns]
        for column in ("id", "role", "typology"):
            if column not in table.columns:
                raise MissingColumnError(column, str(path))
        planar = {"x", "y"} <= set(table.columns)
        if not planar and not {"lon", "lat"} <= set(table.columns):
            raise MissingColumnError("x/y or lon/lat", str(path))
        if not planar and origin is None:
            raise ConfigError("A projection origin is required for lon/lat site registries")

        sites = []
        for row in table.itertuples(index=False):
            row = row._asdict()
            if planar:
                position = Position(self._coordinate(row, "x"), self._coordinate(row, "y"))
                if bbox is not None and not bbox.contains(position):
                    raise InvalidInputError("Site {} lies outside the study area".format(row["id"]))
            else:
                position = Geo.project(self._coordinate(row, "lon"), self._coordinate(row, "lat"), origin, bbox)
            try:
                role = SiteRole(row["role"].strip())
                typology = Typology(row["typology"].strip())
            except ValueError as e:
                raise ConfigError("Site {}: {}".format(row["id"], e))
            paired = row.get("paired_reference", "").strip() or None
            sites.append(SiteRecord(row["id"].strip(), position, role, typology, paired))
        self.logger.info("Loaded {} sites from {}".format(len(sites), path))
        return sites
