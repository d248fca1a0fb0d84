from __future__ import annotations

from collections.abc import Iterable
import logging
from pathlib import Path

logger = logging.getLogger("eigenmax")

LOG_FORMAT = "%(asctime)s %(levelname)s %(message)s"
FLOAT_DIGITS = 17

THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def configure_logging(log_file: Path | None, level: int = logging.INFO) -> None:
    if log_file is None:
        logger.addHandler(logging.NullHandler())
        return
    log_file.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[logging.FileHandler(log_file, "a", "utf-8")],
        force=True,
    )
    logger.setLevel(level)


def format_float(value: float) -> str:
    """Render a float so that reading it back gives the same double."""
    return format(float(value), f".{FLOAT_DIGITS}g")


def format_row(values: Iterable[object]) -> list[str]:
    out: list[str] = []
    for value in values:
        if isinstance(value, bool) or value is None:
            out.append("" if value is None else str(value).lower())
        elif isinstance(value, float):
            out.append(format_float(value))
        else:
            out.append(str(value))
    return out
