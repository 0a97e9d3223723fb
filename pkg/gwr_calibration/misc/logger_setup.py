import logging
import os
import sys


class LoggerSetup:
    """
    Installs the file and console handlers shared by every subcommand.
    """

    handler_tag = "gwr_calibration_handler"

    @staticmethod
    def setup_logging(log_file_path: str, log_level: int) -> None:
        """
        Sets up the logging handlers for both file and stream.

        Handlers installed by an earlier call are replaced, so a second subcommand run in the
        same process logs into its own output directory.

        Args:
            log_file_path (str): The path to the log file. Its folder is created if missing.
            log_level (int): The logging level.
        """
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, LoggerSetup.handler_tag, False):
                root.removeHandler(handler)
                handler.close()

        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%H:%M:%S"
        )

        handlers = [logging.StreamHandler(sys.stderr)]
        failed_path = ""
        if log_file_path:
            try:
                os.makedirs(os.path.dirname(os.path.abspath(log_file_path)), exist_ok=True)
                handlers.append(logging.FileHandler(log_file_path))
            except OSError:
                failed_path = log_file_path

        for handler in handlers:
            setattr(handler, LoggerSetup.handler_tag, True)
            handler.setLevel(log_level)
            handler.setFormatter(formatter)
            root.addHandler(handler)

        root.setLevel(log_level)
        if failed_path:
            root.warning("Cannot write log file {}, logging to stderr only".format(failed_path))

    @staticmethod
    def get_logger(logger_name: str) -> logging.Logger:
        """
        Gets a logger with the specified name.

        Args:
            logger_name (str): The name of the logger.

        Returns:
            logging.Logger: The logger with the specified name.
        """
        return logging.getLogger(logger_name)

    @staticmethod
    def parse_level(level_name: str, default: int = logging.INFO) -> int:
        """
        Converts a level name from the config or the command line into a logging level.

        Args:
            level_name (str): DEBUG, INFO, WARNING, ERROR or CRITICAL, any case.
            default (int): Returned for empty or unknown names.

        Returns:
            int: The logging level.
        """
        return {
            "DEBUG": logging.DEBUG,
            "INFO": logging.INFO,
            "WARNING": logging.WARNING,
            "ERROR": logging.ERROR,
            "CRITICAL": logging.CRITICAL,
        }.get(str(level_name or "").strip().upper(), default)
