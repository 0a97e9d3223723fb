import argparse
import dataclasses
import logging
import os
import sys
from typing import List, Optional, Sequence

import pandas as pd

from gwr_calibration.fileactions.file_folder_checks import FileFolderChecks
from gwr_calibration.fileactions.layer_export import FORMATS, LayerExport
from gwr_calibration.fileactions.model_io import ModelIO
from gwr_calibration.fileactions.panel_io import PanelIO
from gwr_calibration.fileactions.pipeline_settings import PipelineConfig, PipelineSettings
from gwr_calibration.fileactions.report_io import ReportIO
from gwr_calibration.maps.coefficient_grid import CoefficientGridEvaluator, GridSpec
from gwr_calibration.misc.exceptions import ConfigError, DataError, GwrCalibrationError, NumericalError
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables
from gwr_calibration.misc.logger_setup import LoggerSetup
from gwr_calibration.models.baseline import BaselineFitter
from gwr_calibration.models.gwr import GwrEstimator
from gwr_calibration.processing.ingest import Ingestor, RenameMap
from gwr_calibration.processing.preprocess import Aggregator, Panel, PanelBuilder, SiteRole
from gwr_calibration.synthetic.synthetic_network import SyntheticNetworkGenerator
from gwr_calibration.validation.evaluation import SplitSpec, Validator

logger = LoggerSetup.get_logger("main")

MODEL_CHOICES = ("c", "nc", "gwr", "sgwr", "all")


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors are configuration errors, so they exit with code 1."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="gwr-calibration",
        description="Calibrate low-cost NO2 sensor networks with geographically weighted regression.",
    )
    parser.add_argument("-v", "--version", action="version",
                        version="gwr-calibration {}".format(GwrCalibrationVariables.gwr_calibration_version))

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI pipeline configuration")
    common.add_argument("--out", help="Output folder, overrides pipeline/output_dir")
    common.add_argument("--jobs", type=int, help="Parallel workers, -1 for every core")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--panel", help="panel.csv, read from the output folder by default")
    model.add_argument("--sites", help="sites.csv, read from the output folder by default")
    model.add_argument("--kernel", choices=("gaussian", "gtwr"), help="Kernel kind")
    model.add_argument("--bandwidth", type=float, help="Kernel bandwidth in meters")
    model.add_argument("--model", choices=MODEL_CHOICES, help="Model family, all for every family")

    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    ingest = subparsers.add_parser("ingest", parents=[common], help="Raw records to an hourly panel")
    ingest.add_argument("raw", nargs="+", help="Raw delimited files")
    subparsers.add_parser("fit", parents=[common, model], help="Fit the calibration models")
    validate = subparsers.add_parser("validate", parents=[common, model], help="Split, score and cross-validate")
    validate.add_argument("--bandwidth-search", action="store_true",
                          help="Select the bandwidth by cross-validation first")
    grid = subparsers.add_parser("grid", parents=[common, model], help="Coefficient maps")
    grid.add_argument("--format", choices=FORMATS, help="Layer format, overrides grid/format")
    subparsers.add_parser("synth", parents=[common], help="Write a synthetic network")
    return parser


def apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    """Command line flags take precedence over the config file."""
    changes = {}
    if args.out:
        changes["output_dir"] = os.path.abspath(args.out)
    if args.jobs is not None:
        if args.jobs == 0:
            raise ConfigError("--jobs must be a positive count or -1")
        changes["jobs"] = args.jobs
    if args.log_level:
        changes["log_level"] = LoggerSetup.parse_level(args.log_level)
    kernel = config.kernel
    if getattr(args, "kernel", None):
        kernel = dataclasses.replace(kernel, kind=args.kernel)
    if getattr(args, "bandwidth", None) is not None:
        kernel = kernel.with_bandwidth(args.bandwidth)
    changes["kernel"] = kernel
    model = getattr(args, "model", None)
    if model:
        changes["families"] = ("c", "nc", "gwr", "sgwr") if model == "all" else (model,)
        if model in ("gwr", "sgwr"):
            changes["grid_model"] = model
    if getattr(args, "format", None):
        changes["grid_format"] = args.format
    return dataclasses.replace(config, **changes)


def read_panel(config: PipelineConfig, args: argparse.Namespace) -> Panel:
    """
    Reads the panel and checks that every configured covariate is in it.

    Raises:
        ConfigError: A model covariate is absent from the panel.
    """
    panel_path = args.panel or os.path.join(config.output_dir, PanelIO.panel_file_name)
    sites_path = args.sites or os.path.join(config.output_dir, PanelIO.sites_file_name)
    FileFolderChecks.check_input_files([panel_path, sites_path])
    panel = PanelIO(config.log_level).read_panel(panel_path, sites_path)
    missing = [c for c in config.covariates if c not in panel.covariates]
    if missing:
        raise ConfigError("Model covariates absent from the panel: {}".format(", ".join(missing)))
    return panel


def make_estimator(config: PipelineConfig) -> GwrEstimator:
    return GwrEstimator(config.kernel, config.jitter, config.condition_limit, config.jobs, config.log_level)


def cmd_ingest(config: PipelineConfig, raw_paths: Sequence[str]) -> List[str]:
    """
    Raw minute records to panel.csv and sites.csv, logging what each step keeps.
    """
    raw_paths = FileFolderChecks.check_input_files(raw_paths)
    if config.sites_path is None:
        raise ConfigError("ingest/sites is required to build a panel")
    FileFolderChecks.check_input_files([config.sites_path])

    ingestor = Ingestor(config.schema, config.log_level)
    sites = ingestor.load_site_registry(config.sites_path, config.origin, config.bbox)

    loaded = [ingestor.load_raw(path) for path in raw_paths]
    frames = [records for records, _ in loaded if not records.empty]
    records = pd.concat(frames, ignore_index=True) if frames else Ingestor.empty_records()
    read = sum(report.rows_read for _, report in loaded)
    skipped = sum(report.rows_skipped for _, report in loaded)
    logger.info("Read {} rows from {} files, {} malformed rows skipped".format(read, len(raw_paths), skipped))

    records, removed = ingestor.apply_flags(records, config.bad_flags)
    logger.info("{} flagged records removed".format(sum(removed.values())))

    rename = config.rename
    if len(rename) == 0 and not records.empty:
        rename = RenameMap.identity(records["device_id"].unique())
    records = ingestor.rename(records, rename, config.reference_stations)
    records = ingestor.convert_reference(records, config.reference_unit,
                                         config.standard_pressure_pa, config.standard_temperature_k)

    hourly = Aggregator(config.log_level).aggregate(records)
    panel = PanelBuilder(config.covariates, config.log_level).build_panel(hourly, sites)
    logger.info("{} incomplete sensor hours dropped".format(sum(panel.dropped.values())))
    return list(PanelIO(config.log_level).write_panel(panel, config.output_dir))


def cmd_fit(config: PipelineConfig, panel: Panel) -> List[str]:
    """
    Fits each configured family on every panel day and writes models_<family>.csv, plus
    fit_failures.csv listing the targets that could not be fitted. The collocated family also
    writes models_c_standardized.csv, its coefficients on standardized covariates.
    """
    estimator = make_estimator(config)
    baseline = BaselineFitter(config.condition_limit, config.jitter, config.log_level)
    model_io = ModelIO(config.log_level)
    failures, paths = [], []

    targets = {s: panel.position(s) for s in panel.sensor_ids()}
    for family in config.families:
        models, standardized = [], []
        if family == "c":
            for site in panel.site_ids(SiteRole.COLLOCATED_SENSOR):
                try:
                    models.append(baseline.fit_collocated(panel, site, covariates=config.covariates))
                    standardized.append(baseline.fit_collocated(panel, site, standardized=True,
                                                                covariates=config.covariates))
                except (DataError, NumericalError) as e:
                    failures.append({"family": family, "target_id": site, "hour": "", "message": str(e)})
        elif family == "nc":
            plan = baseline.default_pairing(panel, overrides=config.pairing)
            for site in sorted(plan.pairings):
                try:
                    models.append(baseline.fit_noncollocated(panel, site, plan, covariates=config.covariates))
                except (DataError, NumericalError) as e:
                    failures.append({"family": family, "target_id": site, "hour": "", "message": str(e)})
        else:
            if family == "gwr":
                fit = estimator.fit_gwr(panel, targets, config.fit_sites, covariates=config.covariates)
            else:
                fit = estimator.fit_sgwr(panel, targets, config.fit_sites, covariates=config.covariates)
            models = fit.models
            failures += [{"family": family, "target_id": f.target_id,
                          "hour": "" if f.hour is None else f.hour, "message": f.message}
                         for f in fit.failures]
        for failure in failures:
            if failure["family"] == family:
                logger.warning("{} fit failed at {}: {}".format(family, failure["target_id"], failure["message"]))
        paths.append(model_io.write_models(models, os.path.join(config.output_dir, "models_{}.csv".format(family))))
        if standardized:
            paths.append(model_io.write_models(
                standardized, os.path.join(config.output_dir, "models_c_standardized.csv")))

    failure_path = os.path.join(config.output_dir, "fit_failures.csv")
    pd.DataFrame(failures, columns=["family", "target_id", "hour", "message"]).to_csv(
        failure_path, index=False, lineterminator="\n")
    paths.append(failure_path)
    return paths


def cmd_validate(config: PipelineConfig, panel: Panel, bandwidth_search: bool = False) -> List[str]:
    """
    Day split, S2 scores, LOOCV with hourly RMSE, deployed sensor corrections and, on request,
    the bandwidth search.
    """
    estimator = make_estimator(config)
    validator = Validator(estimator, n_jobs=config.jobs, log_level=config.log_level)
    split = validator.split_days(SplitSpec.for_panel(
        panel, start=config.split_start, end=config.split_end, s0_stride=config.s0_stride,
        s0_days=config.s0_days, s1_days=config.s1_days, s2_days=config.s2_days,
    ))
    plan = validator.baseline.default_pairing(panel, overrides=config.pairing)
    candidates = Validator.default_candidates(*config.candidates) if bandwidth_search else None
    report = validator.evaluate(panel, config.families, split, plan, config.fit_sites,
                                config.covariates, candidates)
    return ReportIO(config.log_level).write_report(report, config.output_dir)


def cmd_grid(config: PipelineConfig, panel: Panel) -> List[str]:
    """Coefficient surfaces on the configured grid, exported as map layers."""
    if config.grid_bbox is None:
        raise ConfigError("grid/min_x, grid/min_y, grid/max_x and grid/max_y are required")
    grid = GridSpec(config.grid_bbox, config.grid_cell_size, config.grid_coefficients, config.grid_hour)
    evaluator = CoefficientGridEvaluator(make_estimator(config), config.log_level)
    surface = evaluator.coefficient_surface(panel, grid, config.grid_model, config.fit_sites,
                                            covariates=config.covariates)
    return LayerExport(config.log_level).export_layers(surface, config.output_dir, config.grid_format, config.origin)


def cmd_synth(config: PipelineConfig) -> List[str]:
    """A synthetic network written as panel.csv, sites.csv and its truth.csv."""
    network = SyntheticNetworkGenerator(config.log_level).generate(config.synth, config.synth_seed)
    paths = list(PanelIO(config.log_level).write_panel(network.panel, config.output_dir))
    truth_path = os.path.join(config.output_dir, "truth.csv")
    network.truth.reset_index().to_csv(truth_path, index=False, float_format="%.17g", lineterminator="\n")
    paths.append(truth_path)
    return paths


def run(args: argparse.Namespace) -> List[str]:
    config = PipelineSettings(args.config, LoggerSetup.parse_level(args.log_level)).load()
    config = apply_overrides(config, args)
    output_dir = FileFolderChecks.ensure_folder_creation(config.output_dir)
    config = dataclasses.replace(config, output_dir=output_dir)
    LoggerSetup.setup_logging(os.path.join(output_dir, GwrCalibrationVariables.log_file_name), config.log_level)
    logger.info("gwr-calibration {} {}".format(GwrCalibrationVariables.gwr_calibration_version, args.command))

    if args.command == "ingest":
        paths = cmd_ingest(config, args.raw)
    elif args.command == "synth":
        paths = cmd_synth(config)
    else:
        panel = read_panel(config, args)
        if args.command == "fit":
            paths = cmd_fit(config, panel)
        elif args.command == "validate":
            paths = cmd_validate(config, panel, args.bandwidth_search)
        else:
            paths = cmd_grid(config, panel)

    FileFolderChecks.set_file_permission(paths)
    for path in paths:
        logger.info("Wrote {}".format(path))
    return paths


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the gwr-calibration command.

    Returns:
        0 on success, 1 on configuration errors, 2 on data errors and 3 on numerical failures.
    """
    LoggerSetup.setup_logging(GwrCalibrationVariables.default_log_file_path(), logging.WARNING)
    try:
        args = build_parser().parse_args(argv)
        run(args)
    except GwrCalibrationError as e:
        logger.error(str(e))
        print("gwr-calibration: {}".format(e), file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
