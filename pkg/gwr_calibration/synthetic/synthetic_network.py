import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import qr, solve_triangular

from gwr_calibration.misc.exceptions import ConfigError, NumericalError
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.models.geo import BoundingBox, Position
from gwr_calibration.processing.preprocess import REFERENCE, Panel, SiteRecord, SiteRole, Typology

FIELDS = ("constant", "linear", "bump", "random")
RANDOM_FEATURES = 200

# intercept, NO_nA, CO_nA, RH_pct, T_C, NO2_nA
DEFAULT_BETA = (10.0, 0.2, 0.01, -0.1, 0.3, 0.5)

# level, diurnal amplitude, peak hour, day-to-day scale
CHANNEL_PROFILES = {
    "NO_nA": (30.0, 15.0, 8.0, 8.0),
    "CO_nA": (300.0, 60.0, 19.0, 40.0),
    "RH_pct": (60.0, 15.0, 5.0, 6.0),
    "T_C": (20.0, 5.0, 15.0, 2.0),
    "NO2_nA": (50.0, 20.0, 18.0, 10.0),
}
AMPERAGE_CHANNELS = ("NO_nA", "CO_nA", "NO2_nA")


@dataclass(frozen=True)
class SynthSpec:
    """
    Synthetic sensor network settings.

    Attributes:
        sites: Number q of collocated sensor/station pairs.
        deployed: Number K of sensors without a station.
        hours: Number of hourly time steps, starting at midnight UTC on start.
        noise: Standard deviation of the response noise in ug/m3.
        field: Spatial shape of the coefficients: constant, linear, bump or random.
        length_scale: Width in meters of the bump field, correlation length of the random field.
        amplitude: Relative amplitude of the spatial variation of every coefficient.
        gain_spread: Sensor gains on amperage channels are drawn in 1 +/- gain_spread.
        offset_spread: Sensor offsets on amperage channels, in units of the channel scale.
        site_spread: Site-specific variation of the latent signals, in units of the channel scale.
        heteroscedastic: Scale the noise with a diurnal profile between 0.5 and 1.5 times noise.
        box: Area where sites are placed.
        beta: Coefficients at the reference level of the field, intercept first.
        covariates: Covariates of the response model.
        start: First day.
    """

    sites: int = 9
    deployed: int = 0
    hours: int = 1000
    noise: float = 5.0
    field: str = "constant"
    length_scale: float = 1500.0
    amplitude: float = 0.5
    gain_spread: float = 0.0
    offset_spread: float = 0.0
    site_spread: float = 0.3
    heteroscedastic: bool = False
    box: BoundingBox = BoundingBox(-5000.0, -5000.0, 5000.0, 5000.0)
    beta: Tuple[float, ...] = DEFAULT_BETA
    covariates: Tuple[str, ...] = GwrCalibrationVariables.covariate_order
    start: str = "2020-06-15"

    def __post_init__(self):
        if self.sites < 1:
            raise ConfigError("A synthetic network needs at least one site")
        if self.deployed < 0 or self.hours < 1:
            raise ConfigError("deployed must be >= 0 and hours >= 1")
        if not self.noise >= 0:
            raise ConfigError("Noise must be >= 0, got {}".format(self.noise))
        if self.field not in FIELDS:
            raise ConfigError("Unknown coefficient field '{}'".format(self.field))
        if not self.length_scale > 0:
            raise ConfigError("length_scale must be > 0")
        if not 0 <= self.gain_spread < 1:
            raise ConfigError("gain_spread must lie in [0, 1)")
        if self.offset_spread < 0 or self.site_spread < 0:
            raise ConfigError("Spreads must be >= 0")
        if tuple(self.covariates) != GwrCalibrationVariables.ordered_covariates(self.covariates):
            raise ConfigError("Covariates must follow the canonical order")
        if len(self.beta) != len(self.covariates) + 1:
            raise ConfigError("beta needs {} values".format(len(self.covariates) + 1))


@dataclass(frozen=True, eq=False)
class RandomField:
    """
    Stationary Gaussian random field with zero mean, unit variance and squared exponential
    correlation exp(-d^2 / (2 length_scale^2)), as a sum of random cosine features.

    Attributes:
        frequencies: (M, 2) angular frequencies in rad/m.
        phases: (M,) phases in [0, 2 pi).
    """

    frequencies: np.ndarray
    phases: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, length_scale: float,
             features: int = RANDOM_FEATURES) -> "RandomField":
        return cls(rng.standard_normal((features, 2)) / length_scale,
                   rng.uniform(0.0, 2 * np.pi, features))

    def value(self, position: Position) -> float:
        angles = self.frequencies @ np.array([position.x, position.y]) + self.phases
        return float(np.sqrt(2.0 / len(self.phases)) * np.cos(angles).sum())


@dataclass(eq=False)
class SyntheticNetwork:
    """
    A generated Panel with its ground truth.

    Attributes:
        panel: The Panel, with sensor covariates as observed (after gain and offset).
        truth: Per sensor site: position, true coefficients on the latent signals, and the
            gain and offset of each amperage channel.
        response: Per (site, hour) the clean and the noisy response of every sensor site.
        spec: The generating SynthSpec.
        seed: The generating seed.
        latent: Latent signals per covariate, one row per sensor site.
        random_field: The drawn coefficient field of a random field network.
    """

    panel: Panel
    truth: pd.DataFrame
    response: pd.DataFrame
    spec: SynthSpec
    seed: int
    latent: Dict[str, np.ndarray] = field(default_factory=dict)
    random_field: Optional[RandomField] = None

    def true_beta(self, site_id: str) -> np.ndarray:
        labels = [GwrCalibrationVariables.intercept_label] + list(self.spec.covariates)
        return self.truth.loc[site_id, labels].to_numpy(dtype=float)


class SyntheticNetworkGenerator:
    """
    Seeded generator of sensor networks following the linear response model, and an
    orthogonalization-based least squares oracle to check estimators against.
    """

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("SyntheticNetworkGenerator")
        self.logger.setLevel(log_level)

    @staticmethod
    def field_shape(spec: SynthSpec, position: Position, random_field: Optional[RandomField] = None) -> float:
        """
        Spatial factor of the coefficient field, 0 at the reference level.

        Raises:
            ConfigError: A random field is asked for without its drawn features.
        """
        box = spec.box
        if spec.field == "constant":
            return 0.0
        if spec.field == "random":
            if random_field is None:
                raise ConfigError("The random field needs its drawn features")
            return random_field.value(position)
        cx, cy = (box.min_x + box.max_x) / 2.0, (box.min_y + box.max_y) / 2.0
        if spec.field == "linear":
            return (position.x - cx) / ((box.max_x - box.min_x) / 2.0)
        d2 = (position.x - cx) ** 2 + (position.y - cy) ** 2
        return float(np.exp(-0.5 * d2 / spec.length_scale ** 2))

    @staticmethod
    def beta_at(spec: SynthSpec, position: Position, random_field: Optional[RandomField] = None) -> np.ndarray:
        """True coefficients on the latent signals at a position."""
        factor = 1.0 + spec.amplitude * SyntheticNetworkGenerator.field_shape(spec, position, random_field)
        return np.asarray(spec.beta, dtype=float) * factor

    def generate(self, spec: SynthSpec, seed: int = 0) -> SyntheticNetwork:
        """
        Draws a network: site positions, diurnal latent signals shared across sites plus a
        site-specific part, responses Y = beta(s) . [1, U] + noise, and sensor observations
        distorted by per-sensor gain and offset on the amperage channels.

        Collocated sensors SEN_xx share their position with station REF_xx; deployed sensors are
        DEP_xx. The same seed always yields the same network.
        """
        rng = np.random.default_rng(seed)
        typologies = list(Typology)
        covariates = list(spec.covariates)
        box = spec.box
        margin_x, margin_y = 0.1 * (box.max_x - box.min_x), 0.1 * (box.max_y - box.min_y)

        sensors = ["SEN_{:02d}".format(i + 1) for i in range(spec.sites)]
        deployed = ["DEP_{:02d}".format(i + 1) for i in range(spec.deployed)]
        stations = ["REF_{:02d}".format(i + 1) for i in range(spec.sites)]
        sensor_sites = sensors + deployed

        xs = rng.uniform(box.min_x + margin_x, box.max_x - margin_x, len(sensor_sites))
        ys = rng.uniform(box.min_y + margin_y, box.max_y - margin_y, len(sensor_sites))
        positions = {s: Position(float(x), float(y)) for s, x, y in zip(sensor_sites, xs, ys)}

        records = []
        for i, site_id in enumerate(sensors):
            typology = typologies[i % len(typologies)]
            records.append(SiteRecord(stations[i], positions[site_id], SiteRole.REFERENCE, typology))
            records.append(SiteRecord(site_id, positions[site_id], SiteRole.COLLOCATED_SENSOR, typology,
                                      stations[i]))
        for i, site_id in enumerate(deployed):
            records.append(SiteRecord(site_id, positions[site_id], SiteRole.DEPLOYED_SENSOR,
                                      typologies[i % len(typologies)]))

        hours = pd.date_range(spec.start, periods=spec.hours, freq="h", tz="UTC")
        hour_of_day = np.asarray(hours.hour, dtype=float)

        latent = {}
        for channel in GwrCalibrationVariables.covariate_order:
            level, amplitude, peak, scale = CHANNEL_PROFILES[channel]
            common = level + amplitude * np.cos(2 * np.pi * (hour_of_day - peak) / 24.0) \
                + scale * rng.standard_normal(spec.hours)
            site_part = spec.site_spread * scale * rng.standard_normal((len(sensor_sites), spec.hours))
            latent[channel] = common[None, :] + site_part

        gains = 1.0 + spec.gain_spread * rng.uniform(-1.0, 1.0, (len(sensor_sites), len(AMPERAGE_CHANNELS)))
        offsets = spec.offset_spread * rng.standard_normal((len(sensor_sites), len(AMPERAGE_CHANNELS)))
        offsets *= np.array([CHANNEL_PROFILES[c][3] for c in AMPERAGE_CHANNELS])[None, :]

        sigma = np.full(spec.hours, spec.noise)
        if spec.heteroscedastic:
            sigma = spec.noise * (1.0 + 0.5 * np.sin(2 * np.pi * hour_of_day / 24.0))
        noise = sigma[None, :] * rng.standard_normal((len(sensor_sites), spec.hours))
        random_field = RandomField.draw(rng, spec.length_scale) if spec.field == "random" else None

        frames, responses, truth_rows = [], [], []
        for k, site_id in enumerate(sensor_sites):
            beta = self.beta_at(spec, positions[site_id], random_field)
            latent_values = np.column_stack([latent[c][k] for c in covariates])
            clean = beta[0] + latent_values @ beta[1:]
            noisy = clean + noise[k]

            observed = {}
            for channel in covariates:
                values = latent[channel][k]
                if channel in AMPERAGE_CHANNELS:
                    j = AMPERAGE_CHANNELS.index(channel)
                    values = gains[k, j] * values + offsets[k, j]
                observed[channel] = values
            index = pd.MultiIndex.from_arrays([[site_id] * spec.hours, hours], names=["site", "hour"])
            frame = pd.DataFrame(observed, index=index)
            frame[REFERENCE] = noisy if site_id in sensors else np.nan
            frames.append(frame)

            if site_id in sensors:
                station = stations[sensors.index(site_id)]
                station_index = pd.MultiIndex.from_arrays([[station] * spec.hours, hours], names=["site", "hour"])
                frames.append(pd.DataFrame({REFERENCE: noisy}, index=station_index))

            responses.append(pd.DataFrame({"site": site_id, "hour": hours, "clean": clean, "noisy": noisy}))
            row = {"site": site_id, "x": positions[site_id].x, "y": positions[site_id].y}
            row.update(zip([GwrCalibrationVariables.intercept_label] + covariates, beta))
            for j, channel in enumerate(AMPERAGE_CHANNELS):
                row["gain_" + channel] = gains[k, j]
                row["offset_" + channel] = offsets[k, j]
            truth_rows.append(row)

        panel = Panel(records, pd.concat(frames), covariates)
        self.logger.info("Generated {} (field {}, noise {:g}, seed {})".format(panel, spec.field, spec.noise, seed))
        return SyntheticNetwork(
            panel=panel,
            truth=pd.DataFrame(truth_rows).set_index("site"),
            response=pd.concat(responses, ignore_index=True),
            spec=spec,
            seed=seed,
            latent={c: latent[c] for c in covariates},
            random_field=random_field,
        )

    @staticmethod
    def oracle_ols(design: np.ndarray, response: np.ndarray) -> np.ndarray:
        """
        Ordinary least squares through an economic QR factorization of the design matrix.

        Args:
            design: (n, p) matrix, intercept column included if wanted.
            response: (n,) vector.

        Raises:
            NumericalError: The design is rank deficient.
        """
        design = np.asarray(design, dtype=float)
        response = np.asarray(response, dtype=float)
        q, r = qr(design, mode="economic")
        diagonal = np.abs(np.diag(r))
        tolerance = max(design.shape) * np.finfo(float).eps * (diagonal.max() if diagonal.size else 0.0)
        if design.shape[0] < design.shape[1] or np.any(diagonal <= tolerance):
            raise NumericalError("Rank-deficient design in the least squares oracle")
        return solve_triangular(r, q.T @ response)
