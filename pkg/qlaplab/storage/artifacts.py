"""JSON reports and CSV tables written under a file lock."""
import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np
import scipy
import sympy
from filelock import FileLock

from ..base import complex_to_dict

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def versions() -> Dict[str, str]:
    from .. import __version__
    return {
        "qlaplab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
    }


def report_envelope(
    command: str,
    geometry: str,
    grid: Any,
    seed: int,
    config: str,
) -> Dict[str, Any]:
    """Fields every JSON report carries; ``timestamp`` is the only volatile one."""
    return {
        "command": command,
        "geometry": geometry,
        "grid": grid,
        "seed": seed,
        "config": config,
        "versions": versions(),
        "schema_version": SCHEMA_VERSION,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (complex, np.complexfloating)):
        return complex_to_dict(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()] if np.iscomplexobj(obj) else obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class ArtifactStore:
    """Writes JSON reports and CSV tables into one output directory.

    Each write holds a ``FileLock`` next to the target file so concurrent
    runs sharing a directory never interleave partial files.
    """

    def __init__(self, output_dir: str, formats: Sequence[str] = ("csv", "json")):
        self.path = Path(output_dir)
        self.formats = tuple(formats)
        self._written = []
        self._locks = set()

    @property
    def written(self):
        """Paths written so far, in order."""
        return list(self._written)

    def initialize(self) -> None:
        self.path.mkdir(parents=True, exist_ok=True)

    def cleanup(self) -> None:
        """Remove the lock files this store created; other runs keep theirs."""
        for lock in sorted(self._locks):
            try:
                Path(lock).unlink()
            except OSError:
                pass
        self._locks.clear()

    def _lock(self, target: Path) -> FileLock:
        path = str(target) + ".lock"
        self._locks.add(path)
        return FileLock(path)

    def _target(self, name: str, suffix: str) -> Path:
        if not self.path.exists():
            self.initialize()
        return self.path / f"{name}.{suffix}"

    def write_report(self, name: str, report: Mapping[str, Any]) -> Optional[str]:
        """Write ``report`` as sorted-key JSON; returns the path or None if JSON is off."""
        if "json" not in self.formats:
            return None
        target = self._target(name, "json")
        text = json.dumps(report, sort_keys=True, indent=2, default=_jsonable)
        with self._lock(target):
            with open(target, "w", encoding="utf-8") as f:
                f.write(text + "\n")
        self._written.append(str(target))
        logger.info(f"Wrote report {target}")
        return str(target)

    def write_table(
        self,
        name: str,
        columns: Mapping[str, Sequence[Any]],
        order: Optional[Sequence[str]] = None,
    ) -> Optional[str]:
        """Write columns as CSV; complex columns become re_<name>, im_<name>."""
        if "csv" not in self.formats:
            return None
        order = list(order or columns.keys())
        header = []
        data = []
        for key in order:
            col = np.asarray(columns[key])
            if np.iscomplexobj(col):
                header += [f"re_{key}", f"im_{key}"]
                data += [col.real, col.imag]
            else:
                header.append(key)
                data.append(col)
        lengths = {len(c) for c in data}
        if len(lengths) > 1:
            raise ValueError(f"Columns of table '{name}' differ in length: {sorted(lengths)}")

        target = self._target(name, "csv")
        with self._lock(target):
            with open(target, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in zip(*data):
                    writer.writerow([_cell(v) for v in row])
        self._written.append(str(target))
        logger.info(f"Wrote table {target}")
        return str(target)

    def read_report(self, name: str) -> Dict[str, Any]:
        with open(self.path / f"{name}.json", "r", encoding="utf-8") as f:
            return json.load(f)
