"""Binary tensor file format and embedding-pool / projection serialization.

Layout (little-endian): 16-byte magic, u32 version, u32 rank (1..3), u32
dims[rank], then a float32 payload of prod(dims) values. Computation is
float64 internally; files carry float32. Pools pair a rank-2 tensor file
with a JSON sidecar holding ids and the modality tag.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .correspondence import ProjectionParams
from .errors import TensorFormatError, ValidationError

MAGIC = b"AVLOC-TENSOR-FMT"
VERSION = 1
MAX_RANK = 3
MAX_ELEMENTS = 1 << 31  # guards against corrupt dim headers


def save_tensor(path, array) -> None:
    """Write a rank 1..3 float array to the binary tensor format."""
    arr = np.asarray(array, dtype=np.float64)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValidationError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValidationError("refusing to write non-finite tensor")
    payload = arr.astype("<f4").tobytes(order="C")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + payload)


def load_tensor(path) -> np.ndarray:
    """Read a tensor file back as float64; errors carry a distinct code."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFormatError("io", f"cannot read {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 8:
        raise TensorFormatError("truncated", f"{path}: shorter than any valid header")
    if blob[: len(MAGIC)] != MAGIC:
        raise TensorFormatError("magic", f"{path}: bad magic")
    version, rank = struct.unpack_from("<II", blob, len(MAGIC))
    if version != VERSION:
        raise TensorFormatError("version", f"{path}: unsupported version {version}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError("rank", f"{path}: rank {rank} out of range")
    dims_off = len(MAGIC) + 8
    if len(blob) < dims_off + 4 * rank:
        raise TensorFormatError("truncated", f"{path}: header cut short")
    dims = struct.unpack_from(f"<{rank}I", blob, dims_off)
    count = 1
    for d in dims:
        if d < 1:
            raise TensorFormatError("dims", f"{path}: zero dimension in {dims}")
        count *= d
    if count > MAX_ELEMENTS:
        raise TensorFormatError("dims", f"{path}: dim overflow {dims}")
    payload_off = dims_off + 4 * rank
    expected = payload_off + 4 * count
    if len(blob) < expected:
        raise TensorFormatError("truncated", f"{path}: payload cut short")
    if len(blob) > expected:
        raise TensorFormatError("length", f"{path}: header/payload length mismatch")
    flat = np.frombuffer(blob, dtype="<f4", offset=payload_off, count=count)
    return flat.astype(np.float64).reshape(dims)


def save_pool(prefix, ids, vectors, modality: str) -> tuple[Path, Path]:
    """Write an (n, d) embedding pool: prefix.avt plus prefix.json sidecar."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(list(ids)):
        raise ValidationError(f"pool shape {vectors.shape} does not match {len(list(ids))} ids")
    prefix = Path(prefix)
    tensor_path = prefix.with_suffix(".avt")
    sidecar_path = prefix.with_suffix(".json")
    save_tensor(tensor_path, vectors)
    sidecar = {
        "ids": list(ids),
        "modality": modality,
        "dim": int(vectors.shape[1]),
        "count": int(vectors.shape[0]),
    }
    sidecar_path.write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    return tensor_path, sidecar_path


def load_pool(prefix) -> tuple[list, np.ndarray, str]:
    """Read back (ids, vectors, modality) of a stored embedding pool."""
    prefix = Path(prefix)
    tensor_path = prefix if prefix.suffix == ".avt" else prefix.with_suffix(".avt")
    sidecar_path = tensor_path.with_suffix(".json")
    vectors = load_tensor(tensor_path)
    if vectors.ndim != 2:
        raise TensorFormatError("rank", f"{tensor_path}: pool tensor must be rank 2")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except OSError as exc:
        raise TensorFormatError("io", f"missing sidecar {sidecar_path}") from exc
    except json.JSONDecodeError as exc:
        raise TensorFormatError("sidecar", f"bad sidecar {sidecar_path}: {exc}") from exc
    ids = sidecar.get("ids")
    if not isinstance(ids, list) or len(ids) != vectors.shape[0]:
        raise TensorFormatError("sidecar", f"{sidecar_path}: ids do not match tensor rows")
    return ids, vectors, str(sidecar.get("modality", "unspecified"))


def save_projection(prefix, params: ProjectionParams) -> None:
    """Write projection parameters as two tensor files: .weight.avt / .bias.avt."""
    prefix = Path(prefix)
    save_tensor(prefix.parent / (prefix.name + ".weight.avt"), params.weight)
    save_tensor(prefix.parent / (prefix.name + ".bias.avt"), params.bias)


def load_projection(prefix) -> ProjectionParams:
    prefix = Path(prefix)
    weight = load_tensor(prefix.parent / (prefix.name + ".weight.avt"))
    bias = load_tensor(prefix.parent / (prefix.name + ".bias.avt"))
    return ProjectionParams(weight=weight, bias=bias)
