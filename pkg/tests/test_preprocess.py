import numpy as np
import pandas as pd
import pytest

from gwr_calibration.misc.exceptions import ConfigError, UnknownSiteError
from gwr_calibration.models.geo import Position
from gwr_calibration.processing.preprocess import (
    REFERENCE,
    Aggregator,
    Panel,
    PanelBuilder,
    SiteRecord,
    SiteRole,
    Typology,
)

START = pd.Timestamp("2020-06-15 08:00", tz="UTC")


def minute_records(device_minutes, channel="NO2_nA", value=1.0):
    """Long records for {device: [minute offsets from START]}."""
    rows = [
        (device, START + pd.Timedelta(minutes=m), channel, value, 0)
        for device, minutes in device_minutes.items() for m in minutes
    ]
    frame = pd.DataFrame(rows, columns=["device_id", "timestamp", "channel", "value", "flag"])
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
    return frame


def hourly_frame(rows):
    frame = pd.DataFrame(rows, columns=["device_id", "channel", "hour", "value"])
    frame["hour"] = pd.to_datetime(frame["hour"], utc=True)
    return frame


REGISTRY = [
    SiteRecord("R1", Position(0, 0), SiteRole.REFERENCE, Typology.URBAN_TRAFFIC),
    SiteRecord("S1", Position(0, 0), SiteRole.COLLOCATED_SENSOR, Typology.URBAN_TRAFFIC, "R1"),
    SiteRecord("D1", Position(100, 0), SiteRole.DEPLOYED_SENSOR, Typology.URBAN_BACKGROUND),
]


class TestMinutesToQuarters:
    def test_every_minute_mask_of_one_quarter(self):
        masks = range(2 ** 15)
        devices = {"m{:05d}".format(mask): [m for m in range(15) if mask >> m & 1] for mask in masks}
        quarters = Aggregator().minutes_to_quarters(minute_records(devices))
        kept = set(quarters["device_id"])
        expected = {"m{:05d}".format(mask) for mask in masks if bin(mask).count("1") >= 12}
        assert kept == expected
        assert (quarters["minutes"] >= 12).all()

    def test_quarter_mean(self):
        records = minute_records({"d": range(15)})
        records["value"] = np.arange(15, dtype=float)
        quarters = Aggregator().minutes_to_quarters(records)
        assert quarters["value"].tolist() == [7.0]
        assert quarters["quarter"].iloc[0] == START

    def test_quarters_are_aligned(self):
        records = minute_records({"d": range(7, 37)})
        quarters = Aggregator().minutes_to_quarters(records)
        assert list(quarters["quarter"]) == [START + pd.Timedelta(minutes=15)]

    def test_duplicate_minutes_count_once(self):
        records = minute_records({"d": list(range(11)) * 3})
        assert Aggregator().minutes_to_quarters(records).empty

    def test_empty(self):
        assert Aggregator().minutes_to_quarters(minute_records({})).empty


class TestQuartersToHours:
    def test_every_quarter_mask_of_one_hour(self):
        rows = []
        for mask in range(16):
            for q in range(4):
                if mask >> q & 1:
                    rows.append(("m{:02d}".format(mask), "NO2_nA", START + pd.Timedelta(minutes=15 * q), 1.0, 15))
        quarters = pd.DataFrame(rows, columns=["device_id", "channel", "quarter", "value", "minutes"])
        hours = Aggregator().quarters_to_hours(quarters)
        expected = {"m{:02d}".format(mask) for mask in range(16) if bin(mask).count("1") >= 3}
        assert set(hours["device_id"]) == expected

    def test_unweighted_mean_of_quarters(self):
        quarters = pd.DataFrame({
            "device_id": ["d"] * 3,
            "channel": ["NO2_nA"] * 3,
            "quarter": [START, START + pd.Timedelta(minutes=15), START + pd.Timedelta(minutes=30)],
            "value": [1.0, 2.0, 6.0],
            "minutes": [15, 12, 13],
        })
        hours = Aggregator().quarters_to_hours(quarters)
        assert hours["value"].tolist() == [3.0]
        assert hours["quarters"].tolist() == [3]

    def test_aggregate_one_clean_day(self):
        records = minute_records({"d": range(24 * 60)})
        hours = Aggregator().aggregate(records)
        assert len(hours) == 24
        assert (hours["quarters"] == 4).all()

    def test_eleven_minute_quarters_drop_the_hour(self):
        minutes = [q * 15 + m for q in range(4) for m in range(15 if q < 2 else 11)]
        hours = Aggregator().aggregate(minute_records({"d": minutes}))
        assert hours.empty


class TestAggregationProperties:
    @pytest.mark.parametrize("seed", range(10))
    def test_constant_series_keeps_its_value(self, seed):
        rng = np.random.default_rng(seed)
        minutes = sorted(rng.choice(240, size=int(rng.integers(150, 240)), replace=False).tolist())
        aggregator = Aggregator()
        records = minute_records({"d": minutes}, value=42.5)
        quarters = aggregator.minutes_to_quarters(records)
        hours = aggregator.quarters_to_hours(quarters)
        assert np.allclose(quarters["value"], 42.5)
        assert np.allclose(hours["value"], 42.5)

    @pytest.mark.parametrize("seed", range(10))
    def test_more_minutes_never_lose_quarters_or_hours(self, seed):
        rng = np.random.default_rng(seed)
        subset = rng.choice(240, size=150, replace=False)
        superset = np.union1d(subset, rng.choice(240, size=40, replace=False))
        aggregator = Aggregator()
        small_quarters = aggregator.minutes_to_quarters(minute_records({"d": subset.tolist()}))
        large_quarters = aggregator.minutes_to_quarters(minute_records({"d": superset.tolist()}))
        assert set(small_quarters["quarter"]) <= set(large_quarters["quarter"])
        small_hours = aggregator.quarters_to_hours(small_quarters)
        large_hours = aggregator.quarters_to_hours(large_quarters)
        assert set(small_hours["hour"]) <= set(large_hours["hour"])


class TestPanelBuilder:
    def test_collocated_sensor_receives_station_reference(self):
        hour = "2020-06-15T08:00:00Z"
        hourly = hourly_frame([
            ("R1", REFERENCE, hour, 30.0),
            ("S1", "NO2_nA", hour, 12.0),
            ("D1", "NO2_nA", hour, 14.0),
        ])
        panel = PanelBuilder(["NO2_nA"]).build_panel(hourly, REGISTRY)
        assert panel.frame.loc[("S1", pd.Timestamp(hour)), REFERENCE] == 30.0
        assert np.isnan(panel.frame.loc[("D1", pd.Timestamp(hour)), REFERENCE])
        assert np.isnan(panel.frame.loc[("R1", pd.Timestamp(hour)), "NO2_nA"])

    def test_incomplete_sensor_cells_are_dropped(self):
        hourly = hourly_frame([
            ("S1", "NO2_nA", "2020-06-15T08:00:00Z", 12.0),
            ("S1", "NO_nA", "2020-06-15T08:00:00Z", 3.0),
            ("S1", "NO2_nA", "2020-06-15T09:00:00Z", 11.0),
        ])
        panel = PanelBuilder(["NO_nA", "NO2_nA"]).build_panel(hourly, REGISTRY)
        assert len(panel.rows(["S1"])) == 1
        assert panel.dropped == {"S1": 1}

    def test_unknown_device(self):
        hourly = hourly_frame([("X9", "NO2_nA", "2020-06-15T08:00:00Z", 1.0)])
        with pytest.raises(UnknownSiteError) as error:
            PanelBuilder(["NO2_nA"]).build_panel(hourly, REGISTRY)
        assert error.value.site_ids == ["X9"]

    def test_empty_input(self):
        panel = PanelBuilder(["NO2_nA"]).build_panel(hourly_frame([]), REGISTRY)
        assert panel.frame.empty
        assert list(panel.sites) == ["D1", "R1", "S1"]

    def test_collocated_sensor_needs_station(self):
        with pytest.raises(ConfigError):
            SiteRecord("S2", Position(0, 0), SiteRole.COLLOCATED_SENSOR, Typology.URBAN_TRAFFIC)


class TestPanel:
    def test_days_and_hours(self, tiny_panel):
        assert len(tiny_panel.hours) == 48
        assert [str(d) for d in tiny_panel.days] == ["2021-03-01", "2021-03-02"]

    def test_rows_by_day(self, tiny_panel):
        rows = tiny_panel.rows(["SEN_A", "SEN_B"], tiny_panel.days[:1])
        assert len(rows) == 48

    def test_counts(self, tiny_panel):
        assert tiny_panel.counts()["SEN_A"] == 48

    def test_reference_series(self, tiny_panel):
        series = tiny_panel.reference_series("REF_A")
        np.testing.assert_array_equal(series.to_numpy(), tiny_panel.rows(["SEN_A"])[REFERENCE].to_numpy())

    def test_without_reference(self, tiny_panel):
        view = tiny_panel.without_reference(["SEN_A", "REF_A"])
        assert view.rows(["SEN_A"])[REFERENCE].isna().all()
        assert view.rows(["SEN_B"])[REFERENCE].notna().all()
        assert tiny_panel.rows(["SEN_A"])[REFERENCE].notna().all()

    def test_restrict_days(self, tiny_panel):
        assert tiny_panel.restrict_days(tiny_panel.days[1:]).days == tiny_panel.days[1:]

    def test_roles(self, tiny_panel):
        assert tiny_panel.site_ids(SiteRole.REFERENCE) == ["REF_A", "REF_B"]
        assert tiny_panel.sensor_ids() == ["DEP_A", "SEN_A", "SEN_B"]

    def test_covariates_follow_canonical_order(self, tiny_panel):
        panel = Panel(list(tiny_panel.sites.values()), tiny_panel.frame, ["NO2_nA", "NO_nA"])
        assert panel.covariates == ("NO_nA", "NO2_nA")
