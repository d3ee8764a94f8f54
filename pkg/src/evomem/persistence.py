"""Single-file snapshots of a :class:`MemoryBundle`.

Layout (JSON, two-space indent, key order fixed by the writers)::

    {
      "format_version": 1,
      "episode_counter": <int>,
      "sections": {
        "working_memory": {...},
        "trajectory_kg": {"nodes": [...], "edges": [...], "records": [...]},
        "spatial_kg": {"facts": [...]},
        "semantic_memory": {"experiences": [...], "guidelines": [...], ...}
      },
      "integrity_digest": "sha256:<hex of the canonical JSON of everything above>"
    }

``utility_score`` inside guidelines is written for readers and recomputed on
load; the stored value is never trusted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .episodic import SpatialKG, TrajectoryKG
from .errors import DigestMismatch, InvariantViolation, IoFailure, SnapshotError, VersionUnsupported
from .evolution import MemoryBundle
from .semantic import SemanticStore
from .working_memory import WorkingMemory

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SECTIONS = ("working_memory", "trajectory_kg", "spatial_kg", "semantic_memory")


@dataclass(frozen=True)
class MemorySnapshot:
    format_version: int
    episode_counter: int
    sections: dict[str, Any]
    integrity_digest: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "episode_counter": self.episode_counter,
            "sections": self.sections,
            "integrity_digest": self.integrity_digest,
        }


def _canonical(body: dict[str, Any]) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def compute_digest(format_version: int, episode_counter: int, sections: dict[str, Any]) -> str:
    body = {"format_version": format_version, "episode_counter": episode_counter, "sections": sections}
    return "sha256:" + hashlib.sha256(_canonical(body)).hexdigest()


def bundle_to_dict(mb: MemoryBundle) -> dict[str, Any]:
    with mb.lock:
        sections = {
            "working_memory": mb.wm.to_dict(),
            "trajectory_kg": mb.tkg.to_dict(),
            "spatial_kg": mb.skg.to_dict(),
            "semantic_memory": mb.sem.to_dict(),
        }
        # round-trip through JSON so the digest sees exactly what gets written
        sections = json.loads(json.dumps(sections, ensure_ascii=False))
        digest = compute_digest(FORMAT_VERSION, mb.episode_counter, sections)
        return MemorySnapshot(FORMAT_VERSION, mb.episode_counter, sections, digest).to_dict()


def dumps(mb: MemoryBundle) -> str:
    return json.dumps(bundle_to_dict(mb), indent=2, ensure_ascii=False) + "\n"


def bundle_from_dict(doc: dict[str, Any]) -> MemoryBundle:
    """Validate version, digest and invariants, then rebuild the bundle."""
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"snapshot format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        counter = doc["episode_counter"]
        sections = doc["sections"]
        stored = doc["integrity_digest"]
    except KeyError as exc:
        raise InvariantViolation(f"snapshot is missing {exc.args[0]!r}") from None
    expected = compute_digest(version, counter, sections)
    if stored != expected:
        raise DigestMismatch(f"integrity digest {stored} does not match content ({expected})")
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise InvariantViolation(f"snapshot lacks sections {missing}")
    if not isinstance(counter, int) or counter < 0:
        raise InvariantViolation(f"episode_counter must be a non-negative integer, got {counter!r}")
    try:
        mb = MemoryBundle(
            wm=WorkingMemory.from_dict(sections["working_memory"]),
            tkg=TrajectoryKG.from_dict(sections["trajectory_kg"]),
            skg=SpatialKG.from_dict(sections["spatial_kg"]),
            sem=SemanticStore.from_dict(sections["semantic_memory"]),
            episode_counter=counter,
        )
        mb.tkg.check_invariants()
        mb.skg.check_invariants()
        mb.sem.check_invariants()
    except (ValueError, LookupError, TypeError, AttributeError) as exc:
        raise InvariantViolation(f"snapshot content violates an invariant: {exc}") from exc
    return mb


def loads(text: str) -> MemoryBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot is not valid JSON: {exc}") from exc
    return bundle_from_dict(doc)


def save_snapshot(mb: MemoryBundle, path: str | Path) -> MemorySnapshot:
    """Write atomically (temp file then rename) and return the snapshot header."""
    doc = bundle_to_dict(mb)
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=".snapshot-", dir=path.parent or ".")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot to {path}: {exc}") from exc
    log.info("saved snapshot %s (episode_counter=%d)", path, mb.episode_counter)
    return MemorySnapshot(doc["format_version"], doc["episode_counter"], doc["sections"], doc["integrity_digest"])


def load_snapshot(path: str | Path) -> MemoryBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {path}: {exc}") from exc
    return loads(text)


def reseal(doc: dict[str, Any]) -> dict[str, Any]:
    """Recompute the digest of an edited snapshot document (for fixtures and migrations by hand)."""
    out = dict(doc)
    out["integrity_digest"] = compute_digest(doc["format_version"], doc["episode_counter"], doc["sections"])
    return out
