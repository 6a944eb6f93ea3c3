"""Run manifests: reproducibility records written next to every artifact.

A manifest names the command, the resolved configuration (hashed), all
seeds, the content hashes of every input file, and the manifests that
produced those inputs, so any stage can be re-run bit-identically from its
manifest (timestamps excluded).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

TOOLKIT_VERSION = "0.1.0"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    return Path(str(artifact) + ".manifest.json")


@dataclass
class RunManifest:
    command: str
    config: dict
    config_sha256: str
    seeds: dict
    inputs: dict[str, str]              # path -> sha256
    parents: dict[str, str] = field(default_factory=dict)  # path -> config hash
    toolkit_version: str = TOOLKIT_VERSION
    created_utc: str = ""

    def stable_digest(self) -> str:
        """Hash of everything except the timestamp."""
        d = asdict(self)
        d.pop("created_utc")
        return hashlib.sha256(
            json.dumps(d, sort_keys=True).encode("utf-8")
        ).hexdigest()


def write_manifest(
    artifact: str | Path,
    command: str,
    config: dict,
    seeds: dict,
    inputs: list[str | Path],
) -> RunManifest:
    input_hashes = {}
    parents = {}
    for p in inputs:
        p = Path(p)
        if p.is_file():
            input_hashes[str(p)] = file_sha256(p)
        elif p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file() and not f.name.endswith(".manifest.json"):
                    input_hashes[str(f)] = file_sha256(f)
        mp = manifest_path(p)
        if mp.exists():
            parent = json.loads(mp.read_text())
            parents[str(p)] = parent.get("config_sha256", "")
    manifest = RunManifest(
        command=command,
        config=config,
        config_sha256=config_hash(config),
        seeds=seeds,
        inputs=input_hashes,
        parents=parents,
        created_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    manifest_path(artifact).write_text(json.dumps(asdict(manifest), indent=2))
    return manifest
