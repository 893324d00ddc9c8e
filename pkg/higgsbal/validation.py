"""Validation of run configurations and output locations."""

import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Any

MAX_FILENAME_LENGTH = 255
RANGE_PATTERN = re.compile(r"^\s*(-?\d+)\s*:\s*(-?\d+)\s*$")


class ConfigValidationError(ValueError):
    """Exception raised when a configuration or an output path is rejected."""


def validate_filename(filename: str) -> bool:
    """Validate that an output file name is a plain name inside the output directory.

    Arguments:
        filename (str): The file name to validate.

    Returns:
        bool: True if the file name is safe.

    Raises:
        ConfigValidationError: If the file name is empty, too long or escapes the directory.
    """
    if not filename:
        raise ConfigValidationError("Filename cannot be empty")

    if len(filename) > MAX_FILENAME_LENGTH:
        raise ConfigValidationError(f"Filename is too long (max {MAX_FILENAME_LENGTH} characters)")

    if "\0" in filename:
        raise ConfigValidationError("Filename contains null bytes")

    if ".." in filename:
        raise ConfigValidationError("Filename contains path traversal pattern '..'")

    if "/" in filename or "\\" in filename:
        raise ConfigValidationError("Filename cannot contain directory separators")

    for char in (";", "|", "&", "$", "`", "\n", "\r", "<", ">"):
        if char in filename:
            raise ConfigValidationError(f"Filename contains forbidden character: '{char}'")

    return True


def safe_path_join(base_dir: str | Path, filename: str) -> Path:
    """Join an output directory with a validated file name.

    Arguments:
        base_dir (str | Path): The output directory.
        filename (str): File name inside the directory.

    Returns:
        Path: Absolute path within the output directory.

    Raises:
        ConfigValidationError: If the name is unsafe or the result escapes the directory.
    """
    if not str(base_dir):
        raise ConfigValidationError("Base directory cannot be empty")
    validate_filename(filename)

    base = Path(base_dir).resolve()
    target = (base / filename).resolve()
    try:
        target.relative_to(base)
    except ValueError as e:
        raise ConfigValidationError(f"Path '{filename}' escapes the output directory") from e
    return target


def parse_level_range(value: str) -> list[int]:
    """Parses an inclusive level range "A:B".

    Arguments:
        value (str): The range.

    Returns:
        list[int]: A, A+1, ..., B.

    Raises:
        ConfigValidationError: If the range is malformed or empty.
    """
    match = RANGE_PATTERN.match(value)
    if not match:
        raise ConfigValidationError(f"Level range must look like A:B, got '{value}'")
    start, stop = int(match.group(1)), int(match.group(2))
    if stop < start:
        raise ConfigValidationError(f"Level range {value} is empty")
    return list(range(start, stop + 1))


def parse_orders(value: str) -> tuple[int, int]:
    """Parses quadrature orders "NPOLAR:NAZ"."""
    match = RANGE_PATTERN.match(value)
    if not match:
        raise ConfigValidationError(f"Quadrature orders must look like NPOLAR:NAZ, got '{value}'")
    return int(match.group(1)), int(match.group(2))


def parse_rational(value: str | int | float) -> Fraction:
    """Parses a positive rational written as "p/q", an integer or a decimal.

    Raises:
        ConfigValidationError: If the value is not a positive rational.
    """
    try:
        result = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigValidationError(f"'{value}' is not a rational number") from e
    if result <= 0:
        raise ConfigValidationError(f"Rational parameter must be positive, got {value}")
    return result


def key_position(text: str, location: tuple[Any, ...]) -> tuple[int, int]:
    """Best-effort line and column of the innermost key of a location in JSON text.

    Keys are searched in order so that nested locations resolve below their parents.

    Arguments:
        text (str): The JSON document.
        location (tuple[Any, ...]): Keys and list positions down to the offending value.

    Returns:
        tuple[int, int]: One-based line and column, (1, 1) when no key is found.
    """
    offset = 0
    found = 0
    for part in location:
        if not isinstance(part, str):
            continue
        position = text.find(f'"{part}"', offset)
        if position < 0:
            break
        offset = found = position
    line = text.count("\n", 0, found) + 1
    column = found - (text.rfind("\n", 0, found) + 1) + 1
    return line, column


def read_json(path: str | Path) -> tuple[dict[str, Any], str]:
    """Reads a JSON object from a file.

    Arguments:
        path (str | Path): The file.

    Returns:
        tuple[dict[str, Any], str]: The parsed object and the raw text.

    Raises:
        ConfigValidationError: If the file is missing, malformed or not an object; the
            message points at the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigValidationError(f"{path}: config file does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"{path.name}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigValidationError(f"{path.name}:1:1: top level must be a JSON object")
    return data, text
