"""Logger module for the higgsbal package."""

import logging
import os
import sys
from datetime import datetime

LOGGER_NAME = "higgsbal"
FORMATTER = "%(name)s | %(levelname)s | %(asctime)s | %(message)s"


class Logger(logging.Logger):
    """Handles logging to stdout and, optionally, to a file in the given directory.

    Arguments:
        level (str): The logging level (DEBUG, INFO, WARNING, ERROR).
        to_stdout (bool): Whether to log to stdout.
        log_dir (str | None): Directory for the log file, no file logging when None.
    """

    def __init__(self, level: str = "INFO", to_stdout: bool = True, log_dir: str | None = None):
        super().__init__(LOGGER_NAME)
        self.setLevel(level.upper())
        formatter = logging.Formatter(FORMATTER)

        if to_stdout:
            self.stdout_handler = logging.StreamHandler(sys.stdout)
            self.stdout_handler.setFormatter(formatter)
            self.addHandler(self.stdout_handler)

        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
            self.file_handler = logging.FileHandler(
                filename=self.log_file(log_dir), mode="a", encoding="utf-8"
            )
            self.file_handler.setFormatter(formatter)
            self.addHandler(self.file_handler)

    @staticmethod
    def log_file(log_dir: str) -> str:
        """Returns the path to the log file of the current day.

        Arguments:
            log_dir (str): Directory for the log file.

        Returns:
            str: Path to the log file.
        """
        today = datetime.now().strftime("%Y-%m-%d")
        return os.path.join(log_dir, f"{LOGGER_NAME}_{today}.log")
