"""
Output files of an experiment run.

Every run writes into one output directory:
- CSV tables (header row, shortest round-trip floats, empty cells for
  non-finite values)
- JSON summaries (sorted keys, two-space indent, non-finite values as null)
- Plot data, two whitespace-separated columns x y
- ``manifest.json`` with the config snapshot, tool version, per-stage wall
  clock and a sha256 inventory of every other file

Only the manifest carries wall-clock data, so all other files are
byte-identical across repeated runs with the same configuration.
"""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .utils import file_digest, format_float, sanitize_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def format_csv(rows: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    """CSV text for rows of dicts; columns default to the keys of the first row."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def format_json(data: Mapping[str, Any]) -> str:
    return json.dumps(sanitize_json(dict(data)), sort_keys=True, indent=2, allow_nan=False) + "\n"


def format_plot_data(x: Iterable[float], y: Iterable[float]) -> str:
    """Two-column text; pairs with a non-finite coordinate are dropped."""
    lines = []
    for xi, yi in zip(x, y):
        fx, fy = format_float(xi), format_float(yi)
        if fx and fy:
            lines.append(f"{fx} {fy}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class RunManifest:
    """
    Provenance record of one run.

    ``files`` maps each output file name to its sha256 digest and byte size.
    """

    subcommand: str
    version: str
    config: Dict[str, Any]
    stages: Dict[str, float] = field(default_factory=dict)
    files: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class OutputDirectory:
    """
    Collects rendered output files and writes them in one step.

    Files are staged in memory so a failing pipeline leaves no partial
    results behind.
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._staged: Dict[str, str] = {}

    @property
    def staged(self) -> List[str]:
        return sorted(self._staged)

    def add_text(self, name: str, text: str) -> None:
        if name == MANIFEST_NAME:
            raise ValueError(f"{MANIFEST_NAME} is reserved for the run manifest")
        self._staged[name] = text

    def add_csv(self, name: str, rows: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]] = None) -> None:
        self.add_text(name, format_csv(rows, columns))

    def add_json(self, name: str, data: Mapping[str, Any]) -> None:
        self.add_text(name, format_json(data))

    def add_plot_data(self, name: str, x: Iterable[float], y: Iterable[float]) -> None:
        self.add_text(name, format_plot_data(x, y))

    def commit(self) -> Dict[str, Dict[str, Any]]:
        """Write every staged file; returns the digest inventory."""
        self.path.mkdir(parents=True, exist_ok=True)
        inventory = {}
        for name in self.staged:
            target = self.path / name
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8", newline="") as f:
                f.write(self._staged[name])
            inventory[name] = {"sha256": file_digest(target), "bytes": target.stat().st_size}
            logger.debug(f"Wrote {target}")
        return inventory


def write_manifest(path: PathLike, manifest: RunManifest) -> Path:
    target = Path(path) / MANIFEST_NAME
    target.write_text(format_json(manifest.to_dict()), encoding="utf-8")
    return target


def verify_manifest(path: PathLike) -> List[str]:
    """
    Recompute the digests listed in a manifest.

    Args:
        path: Output directory or the manifest file itself

    Returns:
        List of problems; empty when every file exists and matches
    """
    path = Path(path)
    manifest_path = path if path.name == MANIFEST_NAME else path / MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    problems = []
    for name, entry in sorted(manifest.get("files", {}).items()):
        target = manifest_path.parent / name
        if not target.exists():
            problems.append(f"missing: {name}")
        elif file_digest(target) != entry.get("sha256"):
            problems.append(f"digest mismatch: {name}")
    return problems
