from pathlib import Path

from platformdirs import user_log_dir


class GwrCalibrationVariables:
    """
    This class contains constants and default paths used in the gwr-calibration application.

    Attributes:
    - gwr_calibration_version: A string representing the version of the application.
    - app_name: The application name used for per-user directories.
    - log_dir: A string representing the default per-user log directory.
    - log_file_name: The name of the log file written by every subcommand.
    - earth_radius_m: Mean Earth radius used by the local planar projection.
    - gas_constant: Universal gas constant in J/(mol K).
    - no2_molar_mass: Molar mass of NO2 in g/mol.
    - standard_pressure_pa / standard_temperature_k: Fallback atmosphere for ppb conversion.
    - sensor_channels: Sensor channels carried by a panel cell.
    - covariate_order: Canonical covariate order of every model (intercept excluded).
    """

    gwr_calibration_version = "0.1.0"
    app_name = "gwr-calibration"

    log_dir: str = user_log_dir(app_name)
    log_file_name: str = "gwr-calibration.log"

    earth_radius_m: float = 6371000.0
    gas_constant: float = 8.314
    no2_molar_mass: float = 46.0055
    standard_pressure_pa: float = 101325.0
    standard_temperature_k: float = 293.15

    reference_channel: str = "REF_NO2"
    pressure_channel: str = "P_mbar"
    temperature_channel: str = "T_C"
    sensor_channels: tuple = ("NO2_nA", "NO_nA", "CO_nA", "RH_pct", "T_C", "P_mbar")
    all_channels: tuple = sensor_channels + (reference_channel,)

    covariate_order: tuple = ("NO_nA", "CO_nA", "RH_pct", "T_C", "NO2_nA")
    pollutant_channel: str = "NO2_nA"
    intercept_label: str = "intercept"

    condition_limit: float = 1e12
    jitter_scale: float = 1e-8

    @staticmethod
    def default_log_file_path() -> str:
        """Returns the per-user log file used until a subcommand knows its output directory."""
        return str(Path(GwrCalibrationVariables.log_dir) / GwrCalibrationVariables.log_file_name)

    @staticmethod
    def ordered_covariates(covariates) -> tuple:
        """
        Orders a covariate selection along the canonical column order.

        Args:
            covariates: Any iterable of covariate channel names.

        Returns:
            The selection as a tuple in canonical order.
        """
        selected = set(covariates)
        return tuple(c for c in GwrCalibrationVariables.covariate_order if c in selected)
