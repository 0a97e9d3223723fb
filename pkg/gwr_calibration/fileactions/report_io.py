import logging
import os
from typing import Dict, List

import pandas as pd

from gwr_calibration.fileactions.panel_io import format_hours
from gwr_calibration.validation.evaluation import EvalReport, Validator


class ReportIO:
    """
    Writes an EvalReport as delimited tables plus a human-readable report.txt.
    """

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("ReportIO")
        self.logger.setLevel(log_level)

    @staticmethod
    def _with_text_hours(frame: pd.DataFrame) -> pd.DataFrame:
        if "hour" not in frame.columns or frame.empty:
            return frame
        return frame.assign(hour=format_hours(frame["hour"]).to_numpy())

    @staticmethod
    def tables(report: EvalReport) -> Dict[str, pd.DataFrame]:
        """Every table of the report keyed by file name."""
        tables = {
            "scores.csv": report.scores,
            "summary.csv": report.family_summary(),
            "predictions.csv": report.predictions,
            "split.csv": report.split.to_frame(),
            "pairing.csv": report.pairing.to_frame(),
        }
        if report.cv:
            tables["cv_folds.csv"] = pd.concat([r.folds_frame() for _, r in sorted(report.cv.items())],
                                               ignore_index=True)
            tables["hourly_rmse.csv"] = pd.concat(
                [frame.assign(model=kind)[["model", "hour", "hour_of_day", "rmse", "sites"]]
                 for kind, frame in sorted(report.hourly.items())], ignore_index=True)
            tables["hourly_summary.csv"] = pd.concat(
                [Validator.summary_by_hour(frame).assign(model=kind) for kind, frame in sorted(report.hourly.items())],
                ignore_index=True)
        if report.residuals is not None:
            tables["cv_residuals.csv"] = report.residuals
        if report.deployed is not None:
            tables["deployed_predictions.csv"] = report.deployed.predictions
            tables["deployed_negatives.csv"] = report.deployed.negatives
        if report.bandwidth is not None:
            tables["bandwidth_curve.csv"] = report.bandwidth.curve
        return tables

    @staticmethod
    def render_text(report: EvalReport) -> str:
        kernel = report.kernel
        lines = [
            "Kernel: {} B={:g} m circular_hours={}".format(kernel.kind, kernel.bandwidth, kernel.circular_hours),
            "",
            "Split (achieved vs target %)",
            report.split.to_frame().to_string(index=False, float_format=lambda v: "{:.1f}".format(v)),
            "",
            "Pairing",
            report.pairing.to_frame().to_string(index=False, float_format=lambda v: "{:.0f}".format(v)),
            "",
            "S2 scores per sensor",
            report.scores.drop(columns=["message"]).to_string(index=False, float_format=lambda v: "{:.2f}".format(v)),
            "",
            "Family averages",
            report.family_summary().to_string(index=False, float_format=lambda v: "{:.2f}".format(v)),
        ]
        for kind, result in sorted(report.cv.items()):
            lines += [
                "",
                "LOOCV {}: CV RMSE {:.2f} ({} failed folds, {} hours without a complete site vector)".format(
                    kind, result.cv_rmse, len(result.failed), report.hourly_skipped.get(kind, 0)),
                result.folds_frame().drop(columns=["model"]).to_string(
                    index=False, float_format=lambda v: "{:.2f}".format(v)),
            ]
        if report.deployed is not None and not report.deployed.negatives.empty:
            lines += ["", "Deployed sensors, negative corrected values",
                      report.deployed.negatives.to_string(index=False)]
        if report.bandwidth is not None:
            lines += ["", "Bandwidth search: B* = {:g} m".format(report.bandwidth.best)]
        return "\n".join(lines) + "\n"

    def write_report(self, report: EvalReport, out_dir: str) -> List[str]:
        paths = []
        for name, frame in self.tables(report).items():
            path = os.path.join(out_dir, name)
            self._with_text_hours(frame).to_csv(path, index=False, float_format="%.10g", na_rep="",
                                                lineterminator="\n")
            paths.append(path)
        text_path = os.path.join(out_dir, "report.txt")
        with open(text_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.render_text(report))
        paths.append(text_path)
        self.logger.info("Wrote {} report files to {}".format(len(paths), out_dir))
        return paths
