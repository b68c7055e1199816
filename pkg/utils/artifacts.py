"""
Result artifacts: CSV tables with a config-hash header, JSON summaries and
Markdown renderings.
"""

import hashlib
import json
import math
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from config import APP_VERSION
from utils.logger import get_logger

logger = get_logger(__name__)

HASH_PREFIX = "# config_hash="
FLOAT_FORMAT = "%.12g"


def config_hash(config: Dict[str, Any]) -> str:
    """
    Stable short hash of a configuration mapping.

    Args:
        config: JSON-serializable mapping

    Returns:
        First 16 hex digits of the SHA-256 of its canonical JSON form
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def write_csv(out_dir: str, name: str, rows: Sequence[Dict[str, Any]], fields: Sequence[str],
              cfg_hash: str) -> str:
    """
    Write rows as CSV preceded by a ``# config_hash=...`` comment line.

    Args:
        out_dir: Output directory
        name: File stem
        rows: Row dictionaries
        fields: Column order
        cfg_hash: Config hash to embed

    Returns:
        Path of the written file

    Raises:
        Exception: If the file cannot be written
    """
    path = os.path.join(out_dir, f"{name}.csv")
    try:
        os.makedirs(out_dir, exist_ok=True)
        frame = pd.DataFrame(list(rows), columns=list(fields))
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(f"{HASH_PREFIX}{cfg_hash}\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        logger.error("Failed to write %s: %s", path, str(e))
        raise Exception(f"Failed to write artifact: {e}")
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def read_hash_header(path: str) -> Optional[str]:
    """
    The config hash of a leading ``# config_hash=...`` line, or None.

    Only that first line is treated as a comment; ``#`` anywhere else in a
    CSV file is data.
    """
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().rstrip("\r\n")
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


def read_csv_artifact(path: str) -> Tuple[Optional[str], pd.DataFrame]:
    """
    Read a CSV artifact.

    Returns:
        (embedded config hash or None, table)
    """
    cfg_hash = read_hash_header(path)
    frame = pd.read_csv(path, skiprows=0 if cfg_hash is None else 1, keep_default_na=False)
    return cfg_hash, frame


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def write_json(out_dir: str, name: str, payload: Dict[str, Any], cfg_hash: str, seeds: Sequence[int]) -> str:
    """
    Write a machine-readable summary carrying config hash, seeds, version and creation time.

    Returns:
        Path of the written file
    """
    path = os.path.join(out_dir, f"{name}.json")
    document = {
        'config_hash': cfg_hash,
        'seeds': list(seeds),
        'version': APP_VERSION,
        'created_at': datetime.now().isoformat(),
        **_jsonable(payload),
    }
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=False)
            f.write("\n")
    except OSError as e:
        logger.error("Failed to write %s: %s", path, str(e))
        raise Exception(f"Failed to write artifact: {e}")
    return path


def _cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.4g}"
    return str(value)


def markdown_table(rows: Sequence[Dict[str, Any]], fields: Sequence[str]) -> str:
    """Render rows as a GitHub-flavoured Markdown table."""
    lines = ["| " + " | ".join(fields) + " |", "|" + "|".join("---" for _ in fields) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(_cell(row.get(f, "")) for f in fields) + " |")
    return "\n".join(lines)


def write_markdown(out_dir: str, name: str, title: str, sections: Sequence[Tuple[str, str]],
                   cfg_hash: str) -> str:
    """
    Write a Markdown report.

    Args:
        out_dir: Output directory
        name: File stem
        title: Document title
        sections: (heading, body) pairs
        cfg_hash: Config hash to embed

    Returns:
        Path of the written file
    """
    path = os.path.join(out_dir, f"{name}.md")
    parts = [f"# {title}", "", f"config_hash: `{cfg_hash}`", ""]
    for heading, body in sections:
        parts.extend([f"## {heading}", "", body, ""])
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
    return path


def list_artifacts(out_dir: str) -> List[Dict[str, Any]]:
    """
    List CSV artifacts in a directory, sorted by name.

    Returns:
        Dictionaries with name, path and size
    """
    if not os.path.isdir(out_dir):
        logger.warning("Output directory not found: %s", out_dir)
        return []
    artifacts = []
    for file in sorted(os.listdir(out_dir)):
        if file.endswith(".csv"):
            file_path = os.path.join(out_dir, file)
            artifacts.append({'name': os.path.splitext(file)[0], 'path': file_path,
                              'size_bytes': os.path.getsize(file_path)})
    return artifacts
