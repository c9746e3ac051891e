"""EMB1: the bit-exact embedding interchange format.

A JSON manifest lists the encoder id, vector dimensionality and one row per
(clip, transform) key; each row points into a binary file of little-endian
32-bit floats (row-major, one dim-length record per row) by byte offset.
Per-file sha256 checksums are optional but written by default.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import Emb1FormatError, MissingKeysError
from .transforms import TransformSpec

FORMAT_NAME = "EMB1"
DATA_FILE = "embeddings.bin"
MANIFEST_FILE = "manifest.json"


def _sort_key(item):
    (clip_id, spec), _ = item
    return (clip_id, spec.category, -np.inf if spec.magnitude is None else spec.magnitude)


def write_embeddings(out_dir, encoder_id: str,
                     rows: dict[tuple[str, TransformSpec], np.ndarray],
                     metadata: dict | None = None, checksums: bool = True) -> Path:
    """Write a manifest plus one binary data file; returns the manifest path."""
    if not rows:
        raise ValueError("no embedding rows to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(rows.items(), key=_sort_key)
    dim = int(np.asarray(ordered[0][1]).ravel().shape[0])

    data_path = out_dir / DATA_FILE
    manifest_rows = []
    with data_path.open("wb") as fh:
        offset = 0
        for (clip_id, spec), vector in ordered:
            vec = np.asarray(vector, dtype=np.float32).ravel()
            if vec.shape[0] != dim:
                raise Emb1FormatError(
                    f"row ({clip_id}, {spec.label()}): dim {vec.shape[0]} != {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise Emb1FormatError(f"row ({clip_id}, {spec.label()}): non-finite values")
            fh.write(vec.astype("<f4").tobytes())
            manifest_rows.append({
                "clip_id": clip_id,
                "category": spec.category,
                "magnitude": spec.magnitude,
                "file": DATA_FILE,
                "offset": offset,
            })
            offset += 4 * dim

    manifest = {
        "format": FORMAT_NAME,
        "encoder_id": encoder_id,
        "dim": dim,
        "metadata": metadata or {},
        "rows": manifest_rows,
    }
    if checksums:
        manifest["checksums"] = {
            DATA_FILE: hashlib.sha256(data_path.read_bytes()).hexdigest()
        }
    manifest_path = out_dir / MANIFEST_FILE
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest_path


def load_embeddings(manifest_path, expected_keys=None):
    """Load an EMB1 manifest into a {(clip_id, TransformSpec): vector} map.

    When `expected_keys` is given, every key must be covered or the load
    fails listing what is missing.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise Emb1FormatError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != FORMAT_NAME:
        raise Emb1FormatError(f"manifest format is not {FORMAT_NAME}")
    dim = int(manifest["dim"])
    encoder_id = manifest["encoder_id"]
    base = manifest_path.parent

    blobs: dict[str, bytes] = {}
    for name, expected in (manifest.get("checksums") or {}).items():
        blob = (base / name).read_bytes()
        actual = hashlib.sha256(blob).hexdigest()
        if actual != expected:
            raise Emb1FormatError(f"checksum mismatch for {name}")
        blobs[name] = blob

    result: dict[tuple[str, TransformSpec], np.ndarray] = {}
    for row in manifest["rows"]:
        spec = TransformSpec(row["category"], row["magnitude"])
        key = (row["clip_id"], spec)
        name = row["file"]
        if name not in blobs:
            blobs[name] = (base / name).read_bytes()
        blob = blobs[name]
        offset = int(row["offset"])
        end = offset + 4 * dim
        if end > len(blob):
            raise Emb1FormatError(
                f"row ({key[0]}, {spec.label()}): data file {name} too short"
            )
        vector = np.frombuffer(blob[offset:end], dtype="<f4").astype(np.float32)
        result[key] = vector

    if expected_keys is not None:
        missing = [k for k in expected_keys if k not in result]
        if missing:
            raise MissingKeysError(
                f"({k[0]}, {k[1].label()})" for k in sorted(
                    missing, key=lambda k: (k[0], k[1].category, k[1].magnitude or 0.0)
                )
            )
    return result, dim, encoder_id
