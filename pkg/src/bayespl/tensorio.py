"""Binary tensor container ("BPLT") and JSON scene manifests.

Wire layout, fixed little-endian regardless of host:

    magic   4 bytes  b"BPLT"
    version 1 byte   0x01
    dtype   1 byte   F32=0x01, U8=0x02, I32=0x03
    rank    1 byte   1..4
    extents rank x 8-byte unsigned little-endian
    payload little-endian row-major elements

Total file size is exactly 7 + 8*rank + itemsize*prod(shape). Writes are
atomic (temp file in the target directory, then rename) so readers never
observe partial files.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BPLT"
VERSION = 1
MAX_RANK = 4

_DTYPE_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("uint8"): 2,
    np.dtype("<i4"): 3,
}
_CODE_DTYPES = {
    1: np.dtype("<f4"),
    2: np.dtype("uint8"),
    3: np.dtype("<i4"),
}

SEMANTIC = "semantic"
INSTANCE = "instance"
GROUNDING = "grounding"
KINDS = (SEMANTIC, INSTANCE, GROUNDING)

SIMPLEX_TOL = 1e-5


class TensorFormatError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFormatError):
    pass


class UnsupportedVersionError(TensorFormatError):
    pass


class UnknownDtypeError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class ManifestError(ValueError):
    """Base class for malformed scene manifests."""


class MissingFieldError(ManifestError):
    pass


class ShapeMismatchError(ManifestError):
    def __init__(self, path, expected, got):
        super().__init__(f"{path}: expected shape {tuple(expected)}, got {tuple(got)}")
        self.path = str(path)
        self.expected = tuple(expected)
        self.got = tuple(got)


class SimplexViolationError(ManifestError):
    def __init__(self, path, row, row_sum):
        super().__init__(f"{path}: row {row} sums to {row_sum:.6g}, expected 1 within {SIMPLEX_TOL:g}")
        self.path = str(path)
        self.row = int(row)
        self.row_sum = float(row_sum)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialize an array to the container byte string."""
    arr = np.asarray(array)
    if arr.dtype == np.float32 or arr.dtype == np.dtype(">f4"):
        arr = arr.astype("<f4")
    elif arr.dtype == np.uint8 or arr.dtype == np.bool_:
        arr = arr.astype("uint8")
    elif arr.dtype.kind == "i":
        arr = arr.astype("<i4")
    elif arr.dtype.kind == "f":
        arr = arr.astype("<f4")
    else:
        raise UnknownDtypeError(f"dtype {arr.dtype} has no container code (use f32, u8, or i32)")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise TensorFormatError(f"rank {arr.ndim} out of range 1..{MAX_RANK}")
    code = _DTYPE_CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes()


def write_tensor(array: np.ndarray, path) -> None:
    """Write an array to `path` in the container format, atomically."""
    _atomic_write_bytes(Path(path), tensor_bytes(array))


def read_tensor(path) -> np.ndarray:
    """Read a container file back into a numpy array (native byte order)."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 7:
        raise TruncatedPayloadError(f"{path}: file shorter than the 7-byte fixed header")
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: magic field is {data[:4]!r}, expected {MAGIC!r}")
    version, code, rank = data[4], data[5], data[6]
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: version field is {version}, expected {VERSION}")
    if code not in _CODE_DTYPES:
        raise UnknownDtypeError(f"{path}: dtype code field is {code}, expected one of {sorted(_CODE_DTYPES)}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"{path}: rank field is {rank}, expected 1..{MAX_RANK}")
    header_len = 7 + 8 * rank
    if len(data) < header_len:
        raise TruncatedPayloadError(f"{path}: extents field truncated ({len(data)} bytes, header needs {header_len})")
    shape = struct.unpack_from(f"<{rank}Q", data, 7)
    dtype = _CODE_DTYPES[code]
    count = 1
    for extent in shape:
        count *= extent
    expected = header_len + dtype.itemsize * count
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload field holds {len(data) - header_len} bytes, declared extents need {expected - header_len}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=header_len).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


@dataclass(frozen=True)
class SceneManifest:
    """Parsed scene manifest with paths resolved against its directory."""

    scene_id: str
    kind: str
    seed_path: Path | None
    pass_paths: tuple[Path, ...]
    num_points: int
    num_classes: int | None
    metadata: dict = field(default_factory=dict)

    @property
    def num_passes(self) -> int:
        return len(self.pass_paths)

    def load_seed(self) -> np.ndarray | None:
        return read_tensor(self.seed_path) if self.seed_path is not None else None

    def load_passes(self) -> list[np.ndarray]:
        return [read_tensor(p) for p in self.pass_paths]


def _check_simplex_rows(arr: np.ndarray, path) -> None:
    rows = arr.reshape(-1, arr.shape[-1]).astype(np.float64)
    if rows.size and rows.min() < -SIMPLEX_TOL:
        bad = int(np.argmin(rows.min(axis=1)))
        raise ManifestError(f"{path}: row {bad} has a negative score ({rows[bad].min():.6g})")
    sums = rows.sum(axis=1)
    off = np.abs(sums - 1.0) > SIMPLEX_TOL
    if off.any():
        bad = int(np.argmax(off))
        raise SimplexViolationError(path, bad, sums[bad])


def load_manifest(path, check_tensors: bool = True) -> SceneManifest:
    """Load and validate a scene manifest.

    Fields are exactly: scene_id, kind, seed, passes, num_points,
    num_classes, metadata. Tensor paths are relative to the manifest's
    directory. With check_tensors, every referenced tensor is read and
    its shape (and simplex rows, for semantic and grounding kinds)
    validated.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    fields = ("scene_id", "kind", "seed", "passes", "num_points", "num_classes", "metadata")
    for key in fields:
        if key not in raw:
            raise MissingFieldError(f"{path}: missing field {key!r}")
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ManifestError(f"{path}: unknown fields {', '.join(unknown)}")
    kind = raw["kind"]
    if kind not in KINDS:
        raise ManifestError(f"{path}: kind {kind!r} not one of {KINDS}")
    if not isinstance(raw["passes"], list) or not raw["passes"]:
        raise ManifestError(f"{path}: passes must be a non-empty list")
    base = path.parent
    seed_path = base / raw["seed"] if raw["seed"] is not None else None
    pass_paths = tuple(base / p for p in raw["passes"])
    num_points = int(raw["num_points"])
    num_classes = None if raw["num_classes"] is None else int(raw["num_classes"])
    manifest = SceneManifest(
        scene_id=str(raw["scene_id"]),
        kind=kind,
        seed_path=seed_path,
        pass_paths=pass_paths,
        num_points=num_points,
        num_classes=num_classes,
        metadata=dict(raw["metadata"] or {}),
    )
    if check_tensors:
        _validate_manifest_tensors(manifest)
    return manifest


def _validate_manifest_tensors(manifest: SceneManifest) -> None:
    if manifest.kind == SEMANTIC:
        if manifest.num_classes is None:
            raise ManifestError(f"{manifest.scene_id}: semantic manifests require num_classes")
        expected = (manifest.num_points, manifest.num_classes)
        for p in manifest.pass_paths:
            arr = read_tensor(p)
            if arr.shape != expected:
                raise ShapeMismatchError(p, expected, arr.shape)
            _check_simplex_rows(arr, p)
        if manifest.seed_path is not None:
            arr = read_tensor(manifest.seed_path)
            if arr.shape != expected:
                raise ShapeMismatchError(manifest.seed_path, expected, arr.shape)
            _check_simplex_rows(arr, manifest.seed_path)
    elif manifest.kind == INSTANCE:
        if manifest.seed_path is not None:
            seed = read_tensor(manifest.seed_path)
            if seed.ndim != 2 or seed.shape[1] != manifest.num_points:
                raise ShapeMismatchError(manifest.seed_path, ("M", manifest.num_points), seed.shape)
            _check_unit_range(seed, manifest.seed_path)
        for p in manifest.pass_paths:
            arr = read_tensor(p)
            if arr.ndim != 2 or arr.shape[1] != manifest.num_points:
                raise ShapeMismatchError(p, ("M_k", manifest.num_points), arr.shape)
            _check_unit_range(arr, p)
    else:
        # Grounding: one score row per utterance, one column per candidate.
        # num_points carries the utterance count U; per-pass candidate
        # counts vary and are cross-checked against the instance matching
        # at solve time.
        for p in manifest.pass_paths:
            arr = read_tensor(p)
            if arr.ndim != 2 or arr.shape[0] != manifest.num_points:
                raise ShapeMismatchError(p, (manifest.num_points, "M_k"), arr.shape)
            _check_simplex_rows(arr, p)
        if manifest.seed_path is not None:
            arr = read_tensor(manifest.seed_path)
            if arr.ndim != 2 or arr.shape[0] != manifest.num_points:
                raise ShapeMismatchError(manifest.seed_path, (manifest.num_points, "M"), arr.shape)
            _check_simplex_rows(arr, manifest.seed_path)


def _check_unit_range(arr: np.ndarray, path) -> None:
    lo = float(arr.min()) if arr.size else 0.0
    hi = float(arr.max()) if arr.size else 0.0
    if lo < -SIMPLEX_TOL or hi > 1.0 + SIMPLEX_TOL:
        raise ManifestError(f"{path}: values outside [0, 1] (min {lo:.6g}, max {hi:.6g})")


def write_manifest(
    path,
    scene_id: str,
    kind: str,
    seed: str | None,
    passes: list[str],
    num_points: int,
    num_classes: int | None,
    metadata: dict | None = None,
) -> None:
    """Write a scene manifest JSON; tensor paths must be relative to it."""
    if kind not in KINDS:
        raise ManifestError(f"kind {kind!r} not one of {KINDS}")
    doc = {
        "scene_id": scene_id,
        "kind": kind,
        "seed": seed,
        "passes": list(passes),
        "num_points": int(num_points),
        "num_classes": None if num_classes is None else int(num_classes),
        "metadata": dict(metadata or {}),
    }
    write_json(path, doc)


def write_json(path, doc) -> None:
    """Deterministic, atomic JSON write (sorted keys, trailing newline)."""
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    _atomic_write_bytes(Path(path), text.encode("utf-8"))
