"""Deterministic run outputs: CSV emission, config hashing, manifests.

Every result file is written with locale-independent formatting, LF line
endings, and 17-significant-digit reals so float64 values round-trip
bit-exactly. Manifests record a checksum per output; reruns with the same
config hash and seed must reproduce the checksums byte for byte. Wall
clock and creation time live in dedicated manifest fields and never touch
the output files.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import SchemaViolation

MANIFEST_SCHEMA = 1


def format_cell(value, kind: str) -> str:
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int,)):
            raise SchemaViolation(f"expected int, got {value!r}")
        return str(value)
    if kind == "float":
        v = float(value)
        return f"{v:.17g}"
    if kind == "str":
        s = str(value)
        if any(c in s for c in ",\n\r"):
            raise SchemaViolation(f"string cell {s!r} needs quoting, which is unsupported")
        return s
    if kind == "bool":
        if not isinstance(value, (bool,)):
            raise SchemaViolation(f"expected bool, got {value!r}")
        return "true" if value else "false"
    raise SchemaViolation(f"unknown column kind {kind!r}")


def emit_csv(rows, schema, path) -> Path:
    """Write rows under a (name, kind) column schema; returns the path.

    kinds: int, float, str, bool. An empty row set produces a header-only
    file.
    """
    schema = list(schema)
    names = [c[0] for c in schema]
    kinds = [c[1] for c in schema]
    path = Path(path)
    lines = [",".join(names)]
    for row in rows:
        row = list(row)
        if len(row) != len(schema):
            raise SchemaViolation(
                f"row has {len(row)} cells, schema has {len(schema)} columns"
            )
        lines.append(",".join(format_cell(v, k) for v, k in zip(row, kinds)))
    data = ("\n".join(lines) + "\n").encode("ascii")
    _atomic_write_bytes(path, data)
    return path


def parse_csv(path) -> tuple[list, list]:
    """Read back an emitted file as (header, rows of strings)."""
    text = Path(path).read_text(encoding="ascii")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header = lines[0].split(",") if lines else []
    return header, [ln.split(",") for ln in lines[1:]]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    schema: int
    experiment: str
    config_hash: str
    code_version: str
    seed: int
    outputs: dict
    wall_clock_seconds: float = 0.0
    created_unix: float = field(default_factory=time.time)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def write_manifest(manifest: RunManifest, out_dir) -> Path:
    path = Path(out_dir) / "manifest.json"
    _atomic_write_bytes(path, manifest.to_json().encode("utf-8"))
    return path


def collect_checksums(paths) -> dict:
    return {Path(p).name: sha256_file(p) for p in paths}


def _atomic_write_bytes(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
