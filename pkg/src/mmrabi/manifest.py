"""Run manifest: resolved config, versions, provenance, outcomes and output digests."""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def engine_versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "matplotlib"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


@dataclass
class RunManifest:
    scenario: str
    config: dict
    versions: dict = field(default_factory=engine_versions)
    overrides: list = field(default_factory=list)
    wall_time: float = 0.0
    convergence: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    status: str = "ok"
    error: str = ""

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = sha256_file(path)

    def verify(self, directory) -> list:
        """Names of listed outputs whose digest no longer matches (or that are missing)."""
        bad = []
        for name, digest in self.outputs.items():
            p = Path(directory) / name
            if not p.exists() or sha256_file(p) != digest:
                bad.append(name)
        return bad

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(self.to_json(), encoding="utf-8", newline="\n")
        return path

    @classmethod
    def read(cls, directory) -> "RunManifest":
        return cls.from_json((Path(directory) / MANIFEST_NAME).read_text(encoding="utf-8"))
