import logging
import os
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Tuple

from PySide6.QtCore import QSettings

from gwr_calibration.misc.exceptions import ConfigError, GwrCalibrationError
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.misc.logger_setup import LoggerSetup
from gwr_calibration.models.geo import BoundingBox, LonLat
from gwr_calibration.models.kernel import KernelSpec
from gwr_calibration.processing.ingest import IngestSchema, RenameMap
from gwr_calibration.synthetic.synthetic_network import SynthSpec

FREE_FORM_SECTIONS = ("columns", "rename", "pairing")

DEFAULT_SETTINGS = {
    "pipeline/output_dir": "output",
    "pipeline/log_level": "INFO",
    "pipeline/jobs": 1,
    "ingest/layout": "wide",
    "ingest/delimiter": "auto",
    "ingest/bad_flags": "",
    "ingest/reference_unit": "ugm3",
    "ingest/standard_pressure_pa": GwrCalibrationVariables.standard_pressure_pa,
    "ingest/standard_temperature_k": GwrCalibrationVariables.standard_temperature_k,
    "ingest/reference_stations": "",
    "ingest/sites": "",
    "ingest/rename_preset": "none",
    "projection/origin_lon": "",
    "projection/origin_lat": "",
    "projection/bbox_min_x": "",
    "projection/bbox_min_y": "",
    "projection/bbox_max_x": "",
    "projection/bbox_max_y": "",
    "model/covariates": ",".join(GwrCalibrationVariables.covariate_order),
    "model/families": "c,nc,gwr,sgwr",
    "model/fit_sites": "",
    "model/jitter": False,
    "model/condition_limit": GwrCalibrationVariables.condition_limit,
    "kernel/kind": "gaussian",
    "kernel/bandwidth": 1460.0,
    "kernel/circular_hours": False,
    "kernel/candidates_min": 200.0,
    "kernel/candidates_max": 5000.0,
    "kernel/candidates_step": 20.0,
    "split/start": "",
    "split/end": "",
    "split/s0_stride": 8,
    "split/s0_days": "",
    "split/s1_days": "",
    "split/s2_days": "",
    "grid/min_x": "",
    "grid/min_y": "",
    "grid/max_x": "",
    "grid/max_y": "",
    "grid/cell_size": 500.0,
    "grid/format": "delimited-grid",
    "grid/coefficients": "",
    "grid/model": "sgwr",
    "grid/hour": 12,
    "synth/sites": 9,
    "synth/deployed": 0,
    "synth/hours": 1000,
    "synth/noise": 5.0,
    "synth/field": "constant",
    "synth/length_scale": 1500.0,
    "synth/amplitude": 0.5,
    "synth/gain_spread": 0.0,
    "synth/offset_spread": 0.0,
    "synth/site_spread": 0.3,
    "synth/heteroscedastic": False,
    "synth/box": "-5000,-5000,5000,5000",
    "synth/seed": 0,
}


@dataclass(frozen=True)
class PipelineConfig:
    """
    The validated pipeline configuration shared by every subcommand.
    """

    config_path: str
    output_dir: str
    log_level: int
    jobs: int
    schema: IngestSchema
    bad_flags: Tuple[int, ...]
    reference_unit: str
    standard_pressure_pa: float
    standard_temperature_k: float
    reference_stations: Tuple[str, ...]
    sites_path: Optional[str]
    rename: RenameMap
    origin: Optional[LonLat]
    bbox: Optional[BoundingBox]
    covariates: Tuple[str, ...]
    families: Tuple[str, ...]
    fit_sites: Optional[Tuple[str, ...]]
    jitter: bool
    condition_limit: float
    kernel: KernelSpec
    candidates: Tuple[float, float, float]
    split_start: Optional[date]
    split_end: Optional[date]
    s0_stride: int
    s0_days: Tuple[date, ...]
    s1_days: Tuple[date, ...]
    s2_days: Tuple[date, ...]
    pairing: Dict[str, str] = field(default_factory=dict)
    grid_bbox: Optional[BoundingBox] = None
    grid_cell_size: float = 500.0
    grid_format: str = "delimited-grid"
    grid_coefficients: Tuple[str, ...] = ()
    grid_model: str = "sgwr"
    grid_hour: int = 12
    synth: SynthSpec = SynthSpec()
    synth_seed: int = 0


class PipelineSettings:
    """
    Reads and validates the INI pipeline configuration.
    """

    def __init__(self, config_path: str, log_level: int = logging.INFO) -> None:
        """
        Initializes the settings reader.

        Args:
            config_path: The INI file to read.
            log_level: The log level to set for the reader.

        Raises:
            ConfigError: If the file is missing, unreadable or malformed.
        """
        self.logger = logging.getLogger("PipelineSettings")
        self.logger.setLevel(log_level)
        self.config_path = os.path.abspath(config_path)

        if not os.path.isfile(self.config_path):
            raise ConfigError("Config file not found: {}".format(config_path))
        self.settings = QSettings(self.config_path, QSettings.IniFormat)
        if self.settings.status() != QSettings.NoError:
            raise ConfigError("Cannot parse config file {}".format(config_path))

    def keys(self) -> List[str]:
        return sorted(self.settings.allKeys())

    def check_keys(self) -> None:
        """
        Rejects keys that are neither known nor in a free-form section.

        Raises:
            ConfigError: Naming every unknown key.
        """
        unknown = [
            key for key in self.keys()
            if key not in DEFAULT_SETTINGS and key.split("/", 1)[0] not in FREE_FORM_SECTIONS
        ]
        if unknown:
            raise ConfigError("Unknown config keys: {}".format(", ".join(unknown)))

    def read_setting(self, setting_name: str):
        """
        Reads a setting, falling back on its default.

        Comma-separated values come back from QSettings as lists and are joined again.
        "true" and "false" become booleans.

        Returns:
            The value of the setting as a string or a boolean, or the default.
        """
        value = self.settings.value(setting_name)
        if value is None:
            value = DEFAULT_SETTINGS.get(setting_name, "")
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v).strip() for v in value)
        if isinstance(value, str):
            value = value.strip()
            if value.lower() == "true":
                value = True
            elif value.lower() == "false":
                value = False
        self.logger.debug("Read setting: {} = {}".format(setting_name, value))
        return value

    def read_section(self, section: str) -> Dict[str, str]:
        """Every key of a free-form section, as strings."""
        self.settings.beginGroup(section)
        try:
            keys = list(self.settings.childKeys())
        finally:
            self.settings.endGroup()
        return {key: str(self.read_setting("{}/{}".format(section, key))) for key in sorted(keys)}

    def _text(self, key: str) -> str:
        value = self.read_setting(key)
        return str(value).lower() if isinstance(value, bool) else str(value)

    def _float(self, key: str, required: bool = True) -> Optional[float]:
        text = self._text(key)
        if text == "":
            if required:
                raise ConfigError("{} is required".format(key))
            return None
        try:
            return float(text)
        except ValueError:
            raise ConfigError("{} must be a number, got '{}'".format(key, text))

    def _int(self, key: str) -> int:
        text = self._text(key)
        try:
            return int(text)
        except ValueError:
            raise ConfigError("{} must be an integer, got '{}'".format(key, text))

    def _bool(self, key: str) -> bool:
        value = self.read_setting(key)
        if isinstance(value, bool):
            return value
        raise ConfigError("{} must be true or false, got '{}'".format(key, value))

    def _list(self, key: str) -> Tuple[str, ...]:
        return tuple(item.strip() for item in self._text(key).split(",") if item.strip())

    def _dates(self, key: str) -> Tuple[date, ...]:
        try:
            return tuple(date.fromisoformat(item) for item in self._list(key))
        except ValueError as e:
            raise ConfigError("{}: {}".format(key, e))

    def _date(self, key: str) -> Optional[date]:
        dates = self._dates(key)
        return dates[0] if dates else None

    def _path(self, key: str) -> Optional[str]:
        text = self._text(key)
        if not text:
            return None
        return os.path.normpath(os.path.join(os.path.dirname(self.config_path), text))

    def _bbox(self, prefix: str, suffixes=("min_x", "min_y", "max_x", "max_y")) -> Optional[BoundingBox]:
        values = [self._float("{}{}".format(prefix, s), required=False) for s in suffixes]
        if all(v is None for v in values):
            return None
        if any(v is None for v in values):
            raise ConfigError("{} needs all four bounds".format(prefix.rstrip("/_")))
        return BoundingBox(*values)

    def load(self) -> PipelineConfig:
        """
        Validates the whole file into a PipelineConfig before any stage runs.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        self.check_keys()
        try:
            return self._load()
        except ConfigError:
            raise
        except GwrCalibrationError as e:
            raise ConfigError(str(e))

    def _load(self) -> PipelineConfig:
        covariates = self._list("model/covariates")
        unknown = sorted(set(covariates) - set(GwrCalibrationVariables.covariate_order))
        if unknown:
            raise ConfigError("Unknown model covariates: {}".format(", ".join(unknown)))
        if GwrCalibrationVariables.pollutant_channel not in covariates:
            raise ConfigError("The model covariates must include {}".format(GwrCalibrationVariables.pollutant_channel))
        covariates = GwrCalibrationVariables.ordered_covariates(covariates)

        families = self._list("model/families")
        bad_families = sorted(set(families) - {"c", "nc", "gwr", "sgwr"})
        if bad_families or not families:
            raise ConfigError("Invalid model families: {}".format(", ".join(bad_families) or "none"))

        delimiter = {"comma": ",", "semicolon": ";"}.get(self._text("ingest/delimiter"), self._text("ingest/delimiter"))
        schema = IngestSchema(self._text("ingest/layout"), self.read_section("columns"), delimiter)
        try:
            bad_flags = tuple(int(f) for f in self._list("ingest/bad_flags"))
        except ValueError:
            raise ConfigError("ingest/bad_flags must be a list of integers")

        preset = self._text("ingest/rename_preset")
        if preset not in ("none", "antwerp"):
            raise ConfigError("Unknown rename preset '{}'".format(preset))
        rename_section = self.read_section("rename")
        if rename_section:
            rename = RenameMap(rename_section)
        elif preset == "antwerp":
            rename = RenameMap.antwerp()
        else:
            rename = RenameMap({})

        unit = self._text("ingest/reference_unit")
        if unit not in ("ppb", "ugm3"):
            raise ConfigError("Unknown reference unit '{}'".format(unit))

        origin_lon = self._float("projection/origin_lon", required=False)
        origin_lat = self._float("projection/origin_lat", required=False)
        origin = LonLat(origin_lon, origin_lat) if origin_lon is not None and origin_lat is not None else None

        kernel = KernelSpec(self._text("kernel/kind"), self._float("kernel/bandwidth"),
                            circular_hours=self._bool("kernel/circular_hours"))

        if self._text("grid/model") not in ("gwr", "sgwr"):
            raise ConfigError("grid/model must be gwr or sgwr")
        grid_format = self._text("grid/format")
        if grid_format not in ("delimited-grid", "geojson-points"):
            raise ConfigError("Unknown grid format '{}'".format(grid_format))

        box = [float(v) for v in self._list("synth/box")]
        if len(box) != 4:
            raise ConfigError("synth/box needs min_x,min_y,max_x,max_y")
        synth = SynthSpec(
            sites=self._int("synth/sites"),
            deployed=self._int("synth/deployed"),
            hours=self._int("synth/hours"),
            noise=self._float("synth/noise"),
            field=self._text("synth/field"),
            length_scale=self._float("synth/length_scale"),
            amplitude=self._float("synth/amplitude"),
            gain_spread=self._float("synth/gain_spread"),
            offset_spread=self._float("synth/offset_spread"),
            site_spread=self._float("synth/site_spread"),
            heteroscedastic=self._bool("synth/heteroscedastic"),
            box=BoundingBox(*box),
        )

        jobs = self._int("pipeline/jobs")
        if jobs == 0:
            raise ConfigError("pipeline/jobs must be a positive count or -1")

        config = PipelineConfig(
            config_path=self.config_path,
            output_dir=self._path("pipeline/output_dir") or os.getcwd(),
            log_level=LoggerSetup.parse_level(self._text("pipeline/log_level")),
            jobs=jobs,
            schema=schema,
            bad_flags=bad_flags,
            reference_unit=unit,
            standard_pressure_pa=self._float("ingest/standard_pressure_pa"),
            standard_temperature_k=self._float("ingest/standard_temperature_k"),
            reference_stations=self._list("ingest/reference_stations"),
            sites_path=self._path("ingest/sites"),
            rename=rename,
            origin=origin,
            bbox=self._bbox("projection/bbox_"),
            covariates=covariates,
            families=families,
            fit_sites=self._list("model/fit_sites") or None,
            jitter=self._bool("model/jitter"),
            condition_limit=self._float("model/condition_limit"),
            kernel=kernel,
            candidates=(self._float("kernel/candidates_min"), self._float("kernel/candidates_max"),
                        self._float("kernel/candidates_step")),
            split_start=self._date("split/start"),
            split_end=self._date("split/end"),
            s0_stride=self._int("split/s0_stride"),
            s0_days=self._dates("split/s0_days"),
            s1_days=self._dates("split/s1_days"),
            s2_days=self._dates("split/s2_days"),
            pairing=self.read_section("pairing"),
            grid_bbox=self._bbox("grid/"),
            grid_cell_size=self._float("grid/cell_size"),
            grid_format=grid_format,
            grid_coefficients=self._list("grid/coefficients"),
            grid_model=self._text("grid/model"),
            grid_hour=self._int("grid/hour"),
            synth=synth,
            synth_seed=self._int("synth/seed"),
        )
        self.logger.info("Loaded config {}".format(self.config_path))
        return config
