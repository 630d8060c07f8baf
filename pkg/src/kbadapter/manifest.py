"""Run manifests: a provenance record written next to every CLI output.

A manifest captures the resolved command, configuration, seeds, input file
checksums, and output paths. Wall-clock time is deliberately absent so that
identical runs produce byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

FORMAT_VERSION = 1


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_sha256(path: str | Path) -> str:
    """Digest of a directory: file names and contents, in sorted order."""
    root = Path(path)
    digest = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        digest.update(str(p.relative_to(root)).encode("utf-8"))
        digest.update(b"\x00")
        digest.update(bytes.fromhex(file_sha256(p)))
    return digest.hexdigest()


def checksum(path: str | Path) -> str:
    p = Path(path)
    return tree_sha256(p) if p.is_dir() else file_sha256(p)


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seed: int = 0
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def add_input(self, label: str, path: str | Path) -> None:
        self.inputs[label] = checksum(path)

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(self.outputs),
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def read_manifest(path: str | Path) -> RunManifest:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return RunManifest(
        command=raw["command"],
        config=raw.get("config", {}),
        seed=raw.get("seed", 0),
        inputs=dict(raw.get("inputs", {})),
        outputs=list(raw.get("outputs", [])),
        format_version=raw.get("format_version", FORMAT_VERSION),
    )
