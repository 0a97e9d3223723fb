import logging
import os
from typing import Tuple

import pandas as pd

from gwr_calibration.misc.exceptions import MissingColumnError
from gwr_calibration.processing.ingest import IngestSchema, Ingestor
from gwr_calibration.processing.preprocess import REFERENCE, Panel

HOUR_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def format_hours(hours) -> pd.Series:
    """UTC hour stamps as ISO text with a Z suffix."""
    return pd.Series(pd.DatetimeIndex(hours).strftime(HOUR_FORMAT))


class PanelIO:
    """
    Delimited-text form of a Panel: panel.csv (site, hour, covariates, REF_NO2) and the site
    registry sites.csv. Floats are written with 17 significant digits so a read gives back the
    same values.
    """

    panel_file_name = "panel.csv"
    sites_file_name = "sites.csv"

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("PanelIO")
        self.logger.setLevel(log_level)
        self.log_level = log_level

    def write_panel(self, panel: Panel, out_dir: str) -> Tuple[str, str]:
        panel_path = os.path.join(out_dir, self.panel_file_name)
        sites_path = os.path.join(out_dir, self.sites_file_name)

        frame = panel.frame.reset_index()
        frame["hour"] = format_hours(frame["hour"]).to_numpy()
        frame.to_csv(panel_path, index=False, float_format="%.17g", na_rep="", lineterminator="\n")

        sites = pd.DataFrame([
            {"id": s.id, "x": s.position.x, "y": s.position.y, "role": s.role.value,
             "typology": s.typology.value, "paired_reference": s.paired_reference or "",
             "dropped_cells": panel.dropped.get(s.id, 0)}
            for s in panel.sites.values()
        ], columns=["id", "x", "y", "role", "typology", "paired_reference", "dropped_cells"])
        sites.to_csv(sites_path, index=False, float_format="%.17g", lineterminator="\n")

        self.logger.info("Wrote {} to {}".format(panel, out_dir))
        return panel_path, sites_path

    def read_panel(self, panel_path: str, sites_path: str) -> Panel:
        """
        Raises:
            MissingColumnError: If site, hour or the reference column is absent.
        """
        sites = Ingestor(IngestSchema(), self.log_level).load_site_registry(sites_path)
        frame = pd.read_csv(panel_path, dtype={"site": str}, float_precision="round_trip")
        for column in ("site", "hour", REFERENCE):
            if column not in frame.columns:
                raise MissingColumnError(column, panel_path)
        frame["hour"] = pd.to_datetime(frame["hour"], utc=True)
        covariates = [c for c in frame.columns if c not in ("site", "hour", REFERENCE)]
        frame = frame.set_index(["site", "hour"])

        registry = pd.read_csv(sites_path, dtype=str, keep_default_na=False)
        dropped = {}
        if "dropped_cells" in registry.columns:
            dropped = {r["id"]: int(r["dropped_cells"]) for _, r in registry.iterrows()
                       if r["dropped_cells"] not in ("", "0")}
        panel = Panel(sites, frame, covariates, dropped)
        self.logger.info("Read {} from {}".format(panel, panel_path))
        return panel
