"""Named-tensor checkpoints: a little-endian f32 blob plus a JSON index."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    index, offset, chunks = [], 0, []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    path.write_bytes(b"".join(chunks))
    doc = {"tensors": index, "meta": meta or {}}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    blob = path.read_bytes()
    doc = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    out = {}
    for entry in doc["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(blob):
            raise ValueError(f"checkpoint truncated at tensor {entry['name']!r}")
        out[entry["name"]] = np.frombuffer(blob[start:end], dtype="<f4").reshape(shape).copy()
    return out, doc.get("meta", {})
