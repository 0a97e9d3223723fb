import logging
import os
from typing import Iterable, List

from gwr_calibration.misc.exceptions import ConfigError, DataError


class FileFolderChecks:
    @staticmethod
    def ensure_folder_creation(folder: str) -> str:
        """
        Ensures that an output folder exists.

        Args:
            folder: The folder to create if missing.

        Returns:
            The absolute folder path.

        Raises:
            ConfigError: If the folder cannot be created or a file is in the way.
        """
        folder = os.path.abspath(folder)
        try:
            os.makedirs(folder, exist_ok=True)
        except FileExistsError:
            raise ConfigError("Output path exists and is not a folder: {}".format(folder))
        except PermissionError:
            logging.error("Permission denied to create folder {}".format(folder))
            raise ConfigError("Permission denied to create folder {}".format(folder))
        except OSError as e:
            logging.error("Error creating folder {}: {}".format(folder, e))
            raise ConfigError("Cannot create folder {}: {}".format(folder, e))
        return folder

    @staticmethod
    def check_input_files(paths: Iterable[str]) -> List[str]:
        """
        Checks that every input file exists and is a regular file.

        Raises:
            DataError: Naming the first missing input.
        """
        checked = []
        for path in paths:
            if os.path.isdir(path):
                raise DataError("Input path is a directory: {}".format(path))
            if not os.path.isfile(path):
                raise DataError("Input file not found: {}".format(path))
            checked.append(os.path.abspath(path))
        return checked

    @staticmethod
    def set_file_permission(paths: Iterable[str]) -> None:
        """
        Sets the permissions of written output files.
        """
        for path in paths:
            try:
                os.chmod(path, 0o644)
            except PermissionError:
                logging.error("Permission denied to set file permissions on {}".format(path))
            except OSError as e:
                logging.error("Error setting file permissions on {}: {}".format(path, e))
