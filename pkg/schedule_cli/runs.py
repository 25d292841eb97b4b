"""Run directories and manifests."""

import hashlib
import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, Optional

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.yml"


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunDirectory:
    """
    Output folder of one command: ``<root>/<UTC timestamp>-<config hash>``
    unless an explicit path is given.
    """

    def __init__(self, root: Path, config_hash: str, explicit: Optional[Path] = None):
        if explicit is not None:
            self.path = Path(explicit)
        else:
            stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
            self.path = Path(root) / f"{stamp}-{config_hash}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.started = time.perf_counter()
        self.outputs = []

    def file(self, name: str) -> Path:
        path = self.path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return path

    def write_config(self, text: str) -> Path:
        path = self.file(CONFIG_NAME)
        path.write_text(text, encoding="utf-8")
        return path

    def write_manifest(self, command: str, inputs: Iterable, seeds: Dict[str, int], extra: Optional[dict] = None) -> Path:
        manifest = {
            "command": command,
            "config_hash": self.config_hash,
            "inputs": {str(p): file_sha256(p) for p in inputs},
            "seeds": seeds,
            "outputs": sorted(set(self.outputs)),
            "wall_time_s": round(time.perf_counter() - self.started, 3),
        }
        if extra:
            manifest.update(extra)
        path = self.path / MANIFEST_NAME
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("wrote %s", path)
        return path
