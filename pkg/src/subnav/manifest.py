"""Run manifests: what produced an output, from which inputs, with what seed.

A manifest sits next to every file an invocation writes.  It contains no
timestamps, so identical inputs and flags yield byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

ARTIFACT_VERSION = "0.1.0"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    version: str = ARTIFACT_VERSION

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "version": self.version,
        }

    def write_alongside(self, output_path: str | Path) -> Path:
        target = Path(str(output_path) + ".manifest.json")
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.as_dict(), f, indent=1, sort_keys=True)
            f.write("\n")
        return target
