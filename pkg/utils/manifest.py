"""
QSDA: Run Manifests
Records what produced a set of data files: command, resolved parameters,
seed, version, UTC timestamps and a sha256 digest per file.
"""

import hashlib
import sys
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import VERSION
from utils.profile_io import write_json


def file_digest(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def manifest_path(data_path) -> Path:
    """<stem>.manifest.json next to the data file."""
    data_path = Path(data_path)
    return data_path.with_name(f"{data_path.stem}.manifest.json")


@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int | None = None
    version: str = VERSION
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str | None = None
    digests: dict = field(default_factory=dict)

    def record(self, *paths) -> None:
        """Add the digest of each emitted file, keyed by file name."""
        for path in paths:
            self.digests[Path(path).name] = file_digest(path)

    def finish(self, path) -> Path:
        self.finished = datetime.now(timezone.utc).isoformat()
        return write_json(self, path)
