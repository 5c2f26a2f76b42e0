import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from core.models import CSV_HEADER, StabilityRecord
from utils.config import settings

logger = logging.getLogger(__name__)


class RunManager:
    """
    Owns a run's output directory: the stability CSV, suite tables and the JSON manifest.

    Nothing written here carries timestamps, so reruns with the same config
    and seed reproduce every file byte for byte.
    """

    def __init__(self, out_dir: Optional[str] = None):
        """Create the output directory if needed."""
        self.out_dir = Path(out_dir or settings.OUTPUT_DIR)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def run_id(config: Dict[str, Any]) -> str:
        """Stable identifier derived from the canonical config JSON."""
        blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_records(self, records: Iterable[StabilityRecord], name: str = "sweep.csv") -> Path:
        """
        Write stability rows under the fixed 10-column header.

        Args:
            records: Rows in their final (k, noise) order
            name: File name inside the run directory

        Returns:
            Path: The written file
        """
        target = self.path(name)
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for record in records:
                writer.writerow(record.csv_row())
        logger.info(f"Wrote {target}")
        return target

    def write_table(self, rows: Sequence[Dict[str, Any]], name: str) -> Path:
        """Write a list of flat dicts as CSV; columns follow the first row."""
        target = self.path(name)
        columns: List[str] = list(rows[0].keys()) if rows else []
        with open(target, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _format(value) for key, value in row.items()})
        logger.info(f"Wrote {target}")
        return target

    def open_text(self, name: str):
        return open(self.path(name), "w", newline="")

    def write_manifest(self, manifest: Dict[str, Any], name: str = "manifest.json") -> Path:
        target = self.path(name)
        target.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        logger.info(f"Wrote {target}")
        return target


def _format(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.10e}"
    if isinstance(value, complex):
        return f"{value.real:.10e}{value.imag:+.10e}j"
    return value


def _json_default(value: Any) -> Any:
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return str(value)


# Create a singleton instance
_run_managers: Dict[str, RunManager] = {}


def get_run_manager(out_dir: Optional[str] = None) -> RunManager:
    """
    Get or create the RunManager for an output directory.

    Returns:
        RunManager: The run manager instance
    """
    key = str(out_dir or settings.OUTPUT_DIR)
    if key not in _run_managers:
        _run_managers[key] = RunManager(key)
    return _run_managers[key]
