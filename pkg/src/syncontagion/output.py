"""CSV and run-manifest writers shared by the CLI subcommands."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import RNG_ALGORITHM, __version__


def _cell(v):
    # Python's float repr is the shortest string that round-trips.
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def emit_csv(columns: Sequence[str], records: Iterable[Sequence], path, comments: Sequence[str] = ()) -> Path:
    """Write ``# comment`` lines, a header row, then one row per record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([_cell(v) for v in rec])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Inverse of emit_csv: skips comment lines, returns (header, rows)."""
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tool_version: str = __version__
    rng_algorithm: str = RNG_ALGORITHM

    def write(self, path) -> Path:
        """Write atomically: temp file in the same directory, then rename."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return path
