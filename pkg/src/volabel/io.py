"""Bit-exact volume file format (VLV), raw ingestion and CSV writers.

A VLV file is a fixed 60-byte little-endian header followed by the raw
voxel payload in z-major C order:

    bytes 0..3    magic "VLV1"
    bytes 4..7    u32 dtype code (1=u8, 2=u16, 4=u32, 8=u64, 32=f32)
    bytes 8..31   three u64 dims (Dz, Dy, Dx)
    bytes 32..55  three f64 voxel sizes in nm (sz, sy, sx)
    bytes 56..59  u32 role code (0 semantic, 1 instance, 2 binary, 3 probability)

f32 payloads are only valid for the probability role; an integer payload
with the probability role round-trips as a probability-quantized label
volume. Readers validate the header against the actual file size before
allocating anything.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .decode import ProbabilityVolume
from .instances import InstanceReport
from .metrics import MetricsReport
from .scale import FragmentationReport
from .volume import LabeledVolume

MAGIC = b"VLV1"
HEADER = struct.Struct("<4sI3Q3dI")
assert HEADER.size == 60

DTYPE_CODES = {
    1: np.dtype("<u1"),
    2: np.dtype("<u2"),
    4: np.dtype("<u4"),
    8: np.dtype("<u8"),
    32: np.dtype("<f4"),
}
_CODE_OF_DTYPE = {np.dtype(d).str.lstrip("<=|"): c for c, d in DTYPE_CODES.items()}

ROLE_CODES = {"semantic": 0, "instance": 1, "binary": 2, "probability_quantized": 3}
_ROLE_OF_CODE = {v: k for k, v in ROLE_CODES.items()}
PROBABILITY_ROLE_CODE = 3


class VlvFormatError(ValueError):
    """Malformed or inconsistent VLV file."""


def _dtype_code(dtype: np.dtype) -> int:
    key = np.dtype(dtype).str.lstrip("<=|")
    code = _CODE_OF_DTYPE.get(key)
    if code is None or np.dtype(dtype).str.startswith(">"):
        raise VlvFormatError(f"unsupported dtype {dtype}")
    return code


def write_vlv(volume, path) -> None:
    """Write a LabeledVolume or ProbabilityVolume; exact inverse of read_vlv."""
    if isinstance(volume, ProbabilityVolume):
        role_code = PROBABILITY_ROLE_CODE
        data = np.ascontiguousarray(volume.data, dtype="<f4")
    elif isinstance(volume, LabeledVolume):
        role_code = ROLE_CODES[volume.role]
        data = np.ascontiguousarray(volume.data.astype(volume.data.dtype.newbyteorder("<")))
    else:
        raise TypeError(f"cannot write object of type {type(volume).__name__}")
    header = HEADER.pack(
        MAGIC,
        _dtype_code(data.dtype),
        *(int(d) for d in data.shape),
        *(float(s) for s in volume.voxel_size_nm),
        role_code,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_vlv(path):
    """Read a VLV file back into the volume type it was written from."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
        if len(raw) < HEADER.size:
            raise VlvFormatError(f"file too short for header: {len(raw)} bytes")
        magic, dtype_code, dz, dy, dx, sz, sy, sx, role_code = HEADER.unpack(raw)
        if magic != MAGIC:
            raise VlvFormatError(f"bad magic {magic!r}")
        dtype = DTYPE_CODES.get(dtype_code)
        if dtype is None:
            raise VlvFormatError(f"unknown dtype code {dtype_code}")
        if role_code not in _ROLE_OF_CODE:
            raise VlvFormatError(f"unknown role code {role_code}")
        if min(dz, dy, dx) < 1:
            raise VlvFormatError(f"non-positive dims ({dz}, {dy}, {dx})")
        n = dz * dy * dx  # Python ints: no overflow
        expected = n * dtype.itemsize
        payload_available = size - HEADER.size
        if expected != payload_available:
            raise VlvFormatError(
                f"payload mismatch: header declares {expected} bytes, file has "
                f"{payload_available}")
        if dtype.kind == "f" and role_code != PROBABILITY_ROLE_CODE:
            raise VlvFormatError("f32 payload is only valid for the probability role")
        data = np.frombuffer(fh.read(expected), dtype=dtype).reshape(dz, dy, dx)
    voxel_size = (sz, sy, sx)
    if dtype.kind == "f":
        return ProbabilityVolume(data.copy(), voxel_size)
    return LabeledVolume(data.copy(), voxel_size, _ROLE_OF_CODE[role_code])


def import_raw(path, dims, dtype, voxel_size_nm, role: str = "semantic"):
    """Interpret a raw little-endian z-major file as a volume."""
    dims = tuple(int(d) for d in dims)
    dtype = _normalize_dtype(dtype)
    n = 1
    for d in dims:
        n *= d
    expected = n * dtype.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise VlvFormatError(
            f"raw file is {actual} bytes but dims {dims} with dtype "
            f"{dtype.name} require {expected}")
    data = np.fromfile(path, dtype=dtype).reshape(dims)
    if dtype.kind == "f":
        if role != "probability":
            raise VlvFormatError("f32 raw data must be imported with role='probability'")
        return ProbabilityVolume(data, voxel_size_nm)
    return LabeledVolume(data, voxel_size_nm, role)


_DTYPE_ALIASES = {
    "u8": "<u1", "u16": "<u2", "u32": "<u4", "u64": "<u8", "f32": "<f4",
}


def _normalize_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str) and dtype in _DTYPE_ALIASES:
        dtype = _DTYPE_ALIASES[dtype]
    dtype = np.dtype(dtype).newbyteorder("<")
    _dtype_code(dtype)
    return dtype


def export_csv(report, path) -> None:
    """Write a report as deterministic UTF-8 CSV with LF line endings.

    Schemas: instance reports ``id,voxels,class,size_class`` (ascending id,
    class blank when unknown); metrics ``class,dice,iou`` (rows in report
    order, then an ``average`` row); fragmentation ``instance_id,fragments``
    (ascending id).
    """
    if isinstance(report, InstanceReport):
        lines = ["id,voxels,class,size_class"]
        for i in sorted(report.sizes):
            cls = "" if report.classes is None else str(report.classes[i])
            lines.append(f"{i},{report.sizes[i]},{cls},{report.size_class[i]}")
    elif isinstance(report, MetricsReport):
        lines = ["class,dice,iou"]
        for c, s in report.per_class.items():
            lines.append(f"{c},{s.dice!r},{s.iou!r}")
        lines.append(f"average,{report.average.dice!r},{report.average.iou!r}")
    elif isinstance(report, FragmentationReport):
        lines = ["instance_id,fragments"]
        for i in sorted(report.per_instance_fragments):
            lines.append(f"{i},{report.per_instance_fragments[i]}")
    else:
        raise TypeError(f"cannot export object of type {type(report).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
