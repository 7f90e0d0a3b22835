"""
Artifact writers: RFC-4180 CSV with 17 significant digits, JSON with a
stable key order, and the canonical configuration hash.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .constants import CSV_SIGNIFICANT_DIGITS

logger = logging.getLogger(__name__)


def _plain(obj: Any) -> Any:
    """numpy scalars and arrays to plain Python for json"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form"""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def format_number(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{CSV_SIGNIFICANT_DIGITS}g")
    if value is None:
        return ""
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write rows with '.' decimals and CRLF line endings"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_plain)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def dumps(payload: Any) -> str:
    """Pretty JSON for stdout, same key order as the files"""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_plain)
