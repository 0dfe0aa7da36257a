"""Run manifest: everything needed to reproduce a run byte-for-byte.

The manifest records the config snapshot, artifact digests, chosen
hyperparameters, calibration models, dropped features, and versions.
Wall-clock timing goes to the sidecar ``run.log`` instead, so manifests
from identical runs stay byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os

from . import MANIFEST_FORMAT_VERSION, __version__

MANIFEST_NAME = "manifest.json"
RUN_LOG_NAME = "run.log"


def file_sha256(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    def __init__(self, out_dir: str, data: dict):
        self.out_dir = out_dir
        self.data = data

    @classmethod
    def load_or_create(cls, out_dir: str, config_snapshot: dict) -> "Manifest":
        path = os.path.join(out_dir, MANIFEST_NAME)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            if data.get("format_version") != MANIFEST_FORMAT_VERSION:
                raise ValueError(
                    f"manifest format version {data.get('format_version')!r} "
                    f"not supported (expected {MANIFEST_FORMAT_VERSION})"
                )
            data["config"] = config_snapshot
        else:
            data = {
                "format_version": MANIFEST_FORMAT_VERSION,
                "versions": {"itemdiff": __version__},
                "config": config_snapshot,
                "artifacts": {},
                "split": {},
                "calibration": {},
                "models": {},
                "dropped_features": {},
                "flags": [],
            }
        return cls(out_dir, data)

    def record_artifact(self, relpath: str) -> str:
        digest = file_sha256(os.path.join(self.out_dir, relpath))
        self.data["artifacts"][relpath] = digest
        return digest

    def set_section(self, name: str, value) -> None:
        self.data[name] = value

    def update_section(self, name: str, updates: dict) -> None:
        self.data.setdefault(name, {}).update(updates)

    def add_flag(self, flag: str) -> None:
        flags = self.data.setdefault("flags", [])
        if flag not in flags:
            flags.append(flag)
            flags.sort()

    def save(self) -> None:
        path = os.path.join(self.out_dir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, sort_keys=True, indent=2)
            fh.write("\n")


def append_run_log(out_dir: str, message: str) -> None:
    """Timing/progress sidecar; excluded from determinism guarantees."""
    with open(os.path.join(out_dir, RUN_LOG_NAME), "a", encoding="utf-8") as fh:
        fh.write(message.rstrip("\n") + "\n")
