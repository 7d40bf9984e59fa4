"""Binary dump of a ProblemInstance.

Layout: 8-byte magic, uint32 LE format version, uint32 LE header length, UTF-8 JSON header, then the
arrays back to back. Arrays are little-endian row-major; complex arrays are interleaved re/im pairs.
The header lists every array as {"name", "shape", "dtype", "offset"} with offsets relative to the
first byte after the header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import INSTANCE_FORMAT_VERSION, INSTANCE_MAGIC
from .models import InstanceFormatError, ProblemInstance

ARRAY_NAMES = ("F", "x_true", "d_true", "y", "z")
_PREAMBLE = struct.Struct("<8sII")


def _wire_dtype(array: np.ndarray) -> str:
    return "<c16" if np.iscomplexobj(array) else "<f8"


def dump_instance(instance: ProblemInstance, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blobs = []
    descriptors = []
    offset = 0
    for name in ARRAY_NAMES:
        array = np.asarray(getattr(instance, name))
        dtype = _wire_dtype(array)
        blob = np.ascontiguousarray(array, dtype=dtype).tobytes(order="C")
        descriptors.append({"name": name, "shape": list(array.shape), "dtype": dtype, "offset": offset})
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps(
        {
            "seed": instance.seed,
            "rho": instance.rho,
            "field": instance.field,
            "params": instance.params,
            "arrays": descriptors,
        },
        sort_keys=True,
    ).encode("utf-8")
    with path.open("wb") as handle:
        handle.write(_PREAMBLE.pack(INSTANCE_MAGIC, INSTANCE_FORMAT_VERSION, len(header)))
        handle.write(header)
        for blob in blobs:
            handle.write(blob)
    return path


def load_instance(path: Path) -> ProblemInstance:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InstanceFormatError(f"Cannot read instance file {path}: {exc}") from exc
    if len(data) < _PREAMBLE.size:
        raise InstanceFormatError(f"{path}: file too short for an instance dump")

    magic, version, header_length = _PREAMBLE.unpack_from(data)
    if magic != INSTANCE_MAGIC:
        raise InstanceFormatError(f"{path}: not an instance dump (bad magic bytes)")
    if version != INSTANCE_FORMAT_VERSION:
        raise InstanceFormatError(f"{path}: unsupported format version {version}")

    body_start = _PREAMBLE.size + header_length
    try:
        header = json.loads(data[_PREAMBLE.size:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"{path}: corrupt header ({exc})") from exc

    arrays = {}
    for descriptor in header.get("arrays", []):
        dtype = np.dtype(descriptor["dtype"])
        shape = tuple(descriptor["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = body_start + int(descriptor["offset"])
        end = start + count * dtype.itemsize
        if end > len(data):
            raise InstanceFormatError(f"{path}: array {descriptor['name']} truncated")
        arrays[descriptor["name"]] = np.frombuffer(data, dtype=dtype, count=count, offset=start).reshape(shape).copy()

    missing = [name for name in ARRAY_NAMES if name not in arrays]
    if missing:
        raise InstanceFormatError(f"{path}: missing arrays {', '.join(missing)}")

    return ProblemInstance(
        F=arrays["F"],
        x_true=arrays["x_true"],
        d_true=arrays["d_true"],
        y=arrays["y"],
        z=arrays["z"],
        rho=float(header["rho"]),
        field=header["field"],
        seed=int(header["seed"]),
        params=header.get("params", {}),
    )
