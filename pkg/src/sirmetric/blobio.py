"""Directory archive format shared by checkpoints and dataset exports:
a text manifest (key=value lines, then tensor name/shape/offset lines) next
to one flat little-endian float64 blob.

Manifest layout:

    format=sir-metric/1
    <meta key>=<value>            # free-form strings, no '=' in keys
    tensor.<name>=<d0>,<d1>,...:<byte offset>

Tensor bytes live in ``data.blob`` at the stated offsets, C-order '<f8'.
"""
from __future__ import annotations

import os

import numpy as np

FORMAT_TAG = "sir-metric/1"
MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "data.blob"


class ArchiveError(ValueError):
    """Malformed or missing archive contents."""


def write_archive(dir_path, meta: dict, tensors: dict) -> None:
    """Write manifest + blob; creates the directory if needed.  Tensor
    values are converted to float64; meta values are stringified."""
    os.makedirs(dir_path, exist_ok=True)
    lines = [f"format={FORMAT_TAG}"]
    for key, value in meta.items():
        key = str(key)
        if "=" in key or key.startswith("tensor.") or key == "format":
            raise ArchiveError(f"illegal meta key: {key!r}")
        value = str(value)
        if "\n" in value:
            raise ArchiveError(f"meta value for {key!r} contains a newline")
        lines.append(f"{key}={value}")
    offset = 0
    chunks = []
    for name in sorted(tensors):
        array = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f8"))
        shape = ",".join(str(d) for d in array.shape)
        lines.append(f"tensor.{name}={shape}:{offset}")
        raw = array.tobytes()
        chunks.append(raw)
        offset += len(raw)
    with open(os.path.join(dir_path, MANIFEST_NAME), "w") as handle:
        handle.write("\n".join(lines) + "\n")
    with open(os.path.join(dir_path, BLOB_NAME), "wb") as handle:
        for raw in chunks:
            handle.write(raw)


def read_archive(dir_path):
    """Read manifest + blob back into (meta dict, tensor dict)."""
    manifest_path = os.path.join(dir_path, MANIFEST_NAME)
    blob_path = os.path.join(dir_path, BLOB_NAME)
    if not os.path.isfile(manifest_path):
        raise ArchiveError(f"no manifest at {manifest_path}")
    meta = {}
    entries = []
    with open(manifest_path) as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines or lines[0] != f"format={FORMAT_TAG}":
        raise ArchiveError(f"missing or unsupported format tag in {manifest_path}")
    for line in lines[1:]:
        if "=" not in line:
            raise ArchiveError(f"malformed manifest line: {line!r}")
        key, value = line.split("=", 1)
        if key.startswith("tensor."):
            name = key[len("tensor."):]
            try:
                shape_part, offset_part = value.rsplit(":", 1)
                shape = tuple(int(d) for d in shape_part.split(",") if d != "")
                offset = int(offset_part)
            except ValueError:
                raise ArchiveError(f"malformed tensor entry: {line!r}") from None
            entries.append((name, shape, offset))
        else:
            meta[key] = value
    with open(blob_path, "rb") as handle:
        blob = handle.read()
    tensors = {}
    for name, shape, offset in entries:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise ArchiveError(f"tensor {name!r} overruns the blob "
                               f"({end} > {len(blob)} bytes)")
        tensors[name] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
    return meta, tensors
