"""
On-disk formats.

Arrays (raw PDP datasets, feature datasets) use a small versioned binary
container: b"WPOS", uint32 version, uint32 ndim, ndim x uint64 shape, then
little-endian float64 values in C order. Checkpoints use b"WPNN" followed by
a table of named arrays. Everything else is JSON or headered CSV.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

ARRAY_MAGIC = b"WPOS"
CHECKPOINT_MAGIC = b"WPNN"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _pack_array(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype="<f8", order="C")
    header = struct.pack("<II", FORMAT_VERSION, array.ndim) + struct.pack(f"<{array.ndim}Q", *array.shape)
    return header + array.tobytes()


def _unpack_array(data: bytes, offset: int, source: str):
    try:
        version, ndim = struct.unpack_from("<II", data, offset)
        offset += 8
        shape = struct.unpack_from(f"<{ndim}Q", data, offset)
        offset += 8 * ndim
    except struct.error as exc:
        raise ValueError(f"{source}: truncated header") from exc
    if version != FORMAT_VERSION:
        raise ValueError(f"{source}: unsupported format version {version}")
    count = int(np.prod(shape)) if shape else 1
    end = offset + 8 * count
    if end > len(data):
        raise ValueError(f"{source}: truncated payload")
    array = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
    return array.astype(float), end


def write_array(path: PathLike, array) -> Path:
    path = _prepare(path)
    path.write_bytes(ARRAY_MAGIC + _pack_array(np.asarray(array)))
    return path


def read_array(path: PathLike) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != ARRAY_MAGIC:
        raise ValueError(f"{path}: not a wpos array file")
    array, end = _unpack_array(data, 4, str(path))
    if end != len(data):
        raise ValueError(f"{path}: trailing bytes after payload")
    return array


def write_checkpoint(path: PathLike, state: Mapping[str, np.ndarray]) -> Path:
    """Named weight arrays in insertion order."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(state))]
    for name, value in state.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
        parts.append(_pack_array(np.asarray(value)))
    path = _prepare(path)
    path.write_bytes(b"".join(parts))
    return path


def read_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a wpos checkpoint")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + length].decode("utf-8")
        offset += length
        state[name], offset = _unpack_array(data, offset, str(path))
    return state


def write_json(path: PathLike, payload: Any) -> Path:
    path = _prepare(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def write_jsonl(path: PathLike, rows: Iterable[Mapping[str, Any]]) -> Path:
    path = _prepare(path)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(path: PathLike, rows: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]] = None) -> Path:
    """Headered CSV; floats are written with repr so reruns compare byte-for-byte."""
    if columns is None:
        if not rows:
            raise ValueError(f"{path}: no rows and no columns to write")
        columns = list(rows[0].keys())
    path = _prepare(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key, "")) for key in columns})
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def export_pdp_csv(path: PathLike, pdp: np.ndarray, zones: np.ndarray) -> Path:
    """One row per (record, sensor): record, sensor, zone, bin_0..bin_{N_b-1}."""
    pdp = np.asarray(pdp, dtype=float)
    n_records, n_sensors, n_bins = pdp.shape
    columns = ["record", "sensor", "zone"] + [f"bin_{n}" for n in range(n_bins)]
    rows = []
    for record in range(n_records):
        for sensor in range(n_sensors):
            row = {"record": record, "sensor": sensor, "zone": int(zones[record])}
            row.update({f"bin_{n}": value for n, value in enumerate(pdp[record, sensor])})
            rows.append(row)
    return write_csv(path, rows, columns)


class Manifest:
    """Index of every output file with the seeds that produced it."""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.entries: List[Dict[str, Any]] = []

    def add(self, path: PathLike, kind: str, **meta: Any) -> None:
        relative = Path(path).resolve().relative_to(self.root.resolve()).as_posix()
        self.entries = [entry for entry in self.entries if entry["path"] != relative]
        self.entries.append({"path": relative, "kind": kind, **meta})

    def paths(self) -> List[str]:
        return [entry["path"] for entry in self.entries]

    def find(self, kind: str, **meta: Any) -> List[Dict[str, Any]]:
        return [
            entry
            for entry in self.entries
            if entry["kind"] == kind and all(entry.get(key) == value for key, value in meta.items())
        ]

    def write(self, name: str = "manifest.json") -> Path:
        entries = sorted(self.entries, key=lambda entry: entry["path"])
        return write_json(self.root / name, {"schema_version": FORMAT_VERSION, "files": entries})

    @classmethod
    def load(cls, root: PathLike, name: str = "manifest.json") -> "Manifest":
        manifest = cls(root)
        path = manifest.root / name
        if path.exists():
            manifest.entries = list(read_json(path).get("files", []))
        return manifest
