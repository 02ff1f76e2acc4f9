"""CSV, JSON and manifest writers for run directories."""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd
from packaging.version import Version

from zrpfluct.config import ExperimentConfig
from zrpfluct.constants import (
    ARTIFACT_SCHEMA_VERSION,
    CSV_FLOAT_FORMAT,
    ArtifactKind,
)
from zrpfluct.errors import ValidationError

_logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as stream:
        for block in iter(lambda: stream.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _plain(value: Any) -> Any:
    """Convert numpy values for ``json.dumps``."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dumps(record: Any) -> str:
    """Return deterministic JSON text ending with a newline."""
    return json.dumps(_plain(record), indent=2, sort_keys=True) + "\n"


@dataclass
class ArtifactEntry:
    path: str
    kind: ArtifactKind
    rows: int
    sha256: str


@dataclass
class ArtifactWriter:
    """Write the artifacts of one run and list them in ``manifest.json``.

    Every CSV starts with ``#`` header lines holding the resolved
    configuration and its hash.
    """

    directory: Path
    config: ExperimentConfig
    entries: List[ArtifactEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config_hash = self.config.content_hash()

    def _header(self) -> str:
        lines = [f"# schema = {ARTIFACT_SCHEMA_VERSION}"]
        for key, value in self.config.as_flat().items():
            lines.append(f"# config {key} = {json.dumps(value, sort_keys=True)}")
        lines.append(f"# config_sha256 = {self.config_hash}")
        return "\n".join(lines) + "\n"

    def _register(self, name: str, kind: ArtifactKind, rows: int) -> Path:
        path = self.directory / name
        self.entries.append(
            ArtifactEntry(path=name, kind=kind, rows=rows, sha256=file_sha256(path))
        )
        _logger.info("Wrote %s (%d rows)", path, rows)
        return path

    def write_csv(
        self,
        name: str,
        kind: ArtifactKind,
        columns: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> Path:
        """Write rows as CSV with 17 significant digits and LF endings."""
        frame = pd.DataFrame(list(rows), columns=list(columns))
        path = self.directory / name
        with open(path, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(self._header())
            frame.to_csv(stream, index=False, float_format=CSV_FLOAT_FORMAT)
        return self._register(name, kind, len(frame))

    def write_json(self, name: str, kind: ArtifactKind, record: Any) -> Path:
        path = self.directory / name
        with open(path, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(dumps(record))
        return self._register(name, kind, 1)

    def finalize(self) -> Path:
        """Write the manifest listing every artifact with its checksum."""
        manifest = {
            "schema": ARTIFACT_SCHEMA_VERSION,
            "config_sha256": self.config_hash,
            "config": self.config.as_flat(),
            "artifacts": [entry.__dict__ for entry in self.entries],
        }
        path = self.directory / MANIFEST
        with open(path, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(dumps(manifest))
        return path


def read_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
    """Load a run manifest, refusing unknown schema major versions."""
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise ValidationError(f"no {MANIFEST} in {directory}")
    with open(path, encoding="utf-8") as stream:
        manifest = json.load(stream)
    found = Version(str(manifest.get("schema", "0")))
    if found.major != Version(ARTIFACT_SCHEMA_VERSION).major:
        raise ValidationError(
            f"schema mismatch: {directory} has schema {found}, "
            f"expected {ARTIFACT_SCHEMA_VERSION}"
        )
    return manifest


def read_csv(directory: Union[str, Path], name: str) -> pd.DataFrame:
    """Read an artifact CSV, skipping its header lines."""
    return pd.read_csv(os.path.join(directory, name), comment="#")


def artifacts_of_kind(manifest: Dict[str, Any], kind: str) -> List[str]:
    return [a["path"] for a in manifest["artifacts"] if a["kind"] == kind]
