"""Deterministic artifact writers and the run manifest.

All writers format floats with repr (shortest round-trip), sort JSON keys,
and never embed timestamps, so identical inputs produce byte-identical
files.  Every file written through ArtifactWriter lands in the manifest
with its SHA-256 content hash.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .fields import WaveField


def _fmt(value) -> str:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    if isinstance(value, (np.bool_, bool)):
        return "1" if value else "0"
    return str(value)


@dataclass
class ArtifactWriter:
    out_dir: str
    scenario: str
    seed: int
    entries: list[dict] = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.out_dir, exist_ok=True)

    def _register(self, name: str, data: bytes):
        path = os.path.join(self.out_dir, name)
        with open(path, "wb") as fh:
            fh.write(data)
        self.entries.append(
            {"path": name, "sha256": hashlib.sha256(data).hexdigest()}
        )

    def write_text(self, name: str, text: str):
        self._register(name, text.encode("utf-8"))

    def write_json(self, name: str, payload: dict):
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        self._register(name, text.encode("utf-8"))

    def write_csv(self, name: str, header: list[str], rows):
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(cell) for cell in row))
        self._register(name, ("\n".join(lines) + "\n").encode("utf-8"))

    def write_pgm_mask(self, name: str, mask: np.ndarray):
        """Plain PBM-style text grid: 1 marks non-resonant cells."""
        lines = [f"P1", f"# ballistic mask", f"{mask.shape[1]} {mask.shape[0]}"]
        for row in mask:
            lines.append(" ".join("1" if cell else "0" for cell in row))
        self._register(name, ("\n".join(lines) + "\n").encode("utf-8"))

    def write_packet(self, name: str, field_: WaveField):
        """Binary packet: text header, '---' separator, raw complex128 rows."""
        header = (
            "ballistic-packet 1\n"
            f"box {_fmt(field_.box[0])} {_fmt(field_.box[1])}\n"
            f"resolution {field_.resolution[0]} {field_.resolution[1]}\n"
            "endian little\n"
            f"time {_fmt(field_.time)}\n"
            "---\n"
        )
        values = np.ascontiguousarray(field_.values, dtype="<c16")
        self._register(name, header.encode("utf-8") + values.tobytes())

    def finish(self) -> str:
        manifest = {
            "schema": "ballistic-manifest/1",
            "scenario": self.scenario,
            "seed": self.seed,
            "artifacts": sorted(self.entries, key=lambda e: e["path"]),
        }
        text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "wb") as fh:
            fh.write(text.encode("utf-8"))
        return path


def read_packet(path: str) -> WaveField:
    with open(path, "rb") as fh:
        blob = fh.read()
    head, _, body = blob.partition(b"---\n")
    meta: dict[str, list[str]] = {}
    for line in head.decode("utf-8").splitlines():
        parts = line.split()
        if parts:
            meta[parts[0]] = parts[1:]
    if meta.get("endian") != ["little"]:
        raise ValueError("unsupported endianness marker")
    n1, n2 = (int(v) for v in meta["resolution"])
    box = tuple(float(v) for v in meta["box"])
    values = np.frombuffer(body, dtype="<c16").reshape(n1, n2).copy()
    return WaveField(values, box, time=float(meta["time"][0]))
