from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, TextIO

MANIFEST_NAME = "manifest.json"
DRAW_GROUPS = ("mu", "theta", "gamma", "tau_eta", "tau_theta", "tau_gamma")
DRAW_HEADER = ("iteration", "index", "value")


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def code_identifier() -> str:
    """SHA-1 over the package sources, in sorted path order."""
    package_root = Path(__file__).resolve().parent
    digest = hashlib.sha1()
    for path in sorted(package_root.rglob("*.py")):
        digest.update(path.relative_to(package_root).as_posix().encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


def manifest_path(run_dir: Path | str) -> Path:
    return Path(run_dir) / MANIFEST_NAME


def save_manifest(run_dir: Path | str, payload: dict[str, Any]) -> dict[str, Any]:
    target = manifest_path(run_dir)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(payload)
    timestamp = _now_iso()
    payload.setdefault("created_at", timestamp)
    payload["updated_at"] = timestamp
    target.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return payload


def fetch_manifest(run_dir: Path | str) -> dict[str, Any] | None:
    target = manifest_path(run_dir)
    if not target.exists():
        return None
    try:
        return json.loads(target.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None


def update_manifest(run_dir: Path | str, **fields: Any) -> dict[str, Any]:
    existing = fetch_manifest(run_dir) or {}
    existing.update(fields)
    return save_manifest(run_dir, existing)


class DrawWriter:
    """Append-only ``iteration,index,value`` CSV per parameter group."""

    def __init__(self, run_dir: Path | str) -> None:
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._handles: dict[str, TextIO] = {}
        self._writers: dict[str, Any] = {}
        for group in DRAW_GROUPS:
            handle = (self.run_dir / f"{group}.csv").open("w", encoding="utf-8", newline="")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(DRAW_HEADER)
            self._handles[group] = handle
            self._writers[group] = writer

    def write(self, iteration: int, values: dict[str, Any]) -> None:
        for group in DRAW_GROUPS:
            raw = values[group]
            items = [raw] if isinstance(raw, float) else list(raw)
            writer = self._writers[group]
            for index, value in enumerate(items):
                writer.writerow((iteration, index, repr(float(value))))
            self._handles[group].flush()

    def close(self) -> None:
        for handle in self._handles.values():
            if not handle.closed:
                handle.close()

    def __enter__(self) -> "DrawWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


__all__ = [
    "DRAW_GROUPS",
    "DrawWriter",
    "code_identifier",
    "fetch_manifest",
    "manifest_path",
    "save_manifest",
    "update_manifest",
]
