"""Run manifests: checksums and provenance for every artifact a command writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_checksum(path) -> str:
    with open(path, "rb") as fh:
        return sha256_hex(fh.read())


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    master_seed: int
    files: dict[str, str] = field(default_factory=dict)
    duration_seconds: float = 0.0

    def add_file(self, path) -> None:
        path = Path(path)
        self.files[path.name] = file_checksum(path)

    def write(self, path) -> None:
        """Atomic write: the manifest appears last and fully formed."""
        path = Path(path)
        payload = {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "files": dict(sorted(self.files.items())),
            "duration_seconds": self.duration_seconds,
        }
        data = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
