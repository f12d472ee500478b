"""Weight bundles: one trained fold's parameters, architecture, and scaler.

Little-endian binary with a JSON metadata block, sorted named float32 arrays,
and a trailing CRC32; save -> load -> save reproduces the bytes exactly.  Each
bundle embeds the robust-scaler parameters it was trained behind, so a bundle
is sufficient to classify raw trials on its own.  See FORMATS.md.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChecksumError, DomainError, FormatError, VersionError
from .features import RobustScalerParams
from .model import ArchConfig, SequenceClassifier, build

WEIGHTS_MAGIC = b"CSWB"
WEIGHTS_VERSION = 1
_SCALER_KEYS = ("scaler/median", "scaler/iqr", "scaler/degenerate")


@dataclass
class ModelWeights:
    arrays: dict[str, np.ndarray]  # float32, keyed by layer/parameter path
    arch: ArchConfig
    fold_id: int
    seed: int
    scaler: RobustScalerParams | None = None
    version: int = WEIGHTS_VERSION


def weights_from_model(
    model: SequenceClassifier,
    fold_id: int,
    seed: int,
    scaler: RobustScalerParams | None = None,
) -> ModelWeights:
    arrays = {k: np.ascontiguousarray(v, dtype="<f4") for k, v in model.params.items()}
    return ModelWeights(arrays=arrays, arch=model.arch, fold_id=fold_id, seed=seed, scaler=scaler)


def model_from_weights(w: ModelWeights) -> SequenceClassifier:
    """Rebuild the network and load the stored parameters (cast to float64)."""
    model = build(w.arch, seed=w.seed)
    model.set_params({k: v.astype(np.float64) for k, v in w.arrays.items()})
    return model


def save_weights(w: ModelWeights, path: str | Path) -> None:
    """Write a bundle via write-then-rename so readers never see a partial file."""
    for key in _SCALER_KEYS:
        if key in w.arrays:
            raise DomainError(f"array name {key} is reserved for the embedded scaler")
    meta = {
        "format_version": WEIGHTS_VERSION,
        "arch": w.arch.to_dict(),
        "fold_id": w.fold_id,
        "seed": w.seed,
        "has_scaler": w.scaler is not None,
    }
    arrays = dict(w.arrays)
    if w.scaler is not None:
        arrays["scaler/median"] = w.scaler.median.astype("<f4")
        arrays["scaler/iqr"] = w.scaler.iqr.astype("<f4")
        arrays["scaler/degenerate"] = w.scaler.degenerate.astype("<f4")

    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<B", WEIGHTS_VERSION)
    meta_raw = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out += struct.pack("<I", len(meta_raw)) + meta_raw
    out += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        out += arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(out))
    tmp.replace(path)


def load_weights(path: str | Path) -> ModelWeights:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short")
    body, stored = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != stored:
        raise ChecksumError(f"{path}: checksum mismatch; bundle is corrupted or truncated")
    if body[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a weight bundle (bad magic)")
    (version,) = struct.unpack_from("<B", body, 4)
    if version != WEIGHTS_VERSION:
        raise VersionError(f"{path}: weight bundle version {version} not supported")
    offset = 5
    (meta_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    try:
        meta = json.loads(body[offset : offset + meta_len].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad metadata block: {exc}") from exc
    offset += meta_len
    (n_arrays,) = struct.unpack_from("<I", body, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", body, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", body, offset) if ndim else ()
        offset += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        arrays[name] = arr
    if offset != len(body):
        raise FormatError(f"{path}: {len(body) - offset} unexpected trailing bytes")

    scaler = None
    if meta.get("has_scaler"):
        try:
            scaler = RobustScalerParams(
                median=arrays.pop("scaler/median").astype(np.float64),
                iqr=arrays.pop("scaler/iqr").astype(np.float64),
                degenerate=arrays.pop("scaler/degenerate") != 0.0,
            )
        except KeyError as exc:
            raise FormatError(f"{path}: metadata promises a scaler but arrays are missing") from exc
    try:
        arch = ArchConfig.from_dict(meta["arch"])
        return ModelWeights(
            arrays=arrays,
            arch=arch,
            fold_id=int(meta["fold_id"]),
            seed=int(meta["seed"]),
            scaler=scaler,
            version=version,
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: incomplete metadata block: {exc}") from exc
