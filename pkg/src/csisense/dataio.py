"""On-disk formats: trial files, feature CSVs, prediction CSVs, manifests.

Binary layouts are little-endian and carry a trailing CRC32 over every
preceding byte, so any single corrupted byte is detected.  FORMATS.md at the
repository root documents each layout field by field.  All writers go through
write-then-rename, so an interrupted run never leaves a partial file behind.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import CsiPacket, Trial
from .errors import ChecksumError, DomainError, FormatError, VersionError
from .features import FeatureFrame, RobustScalerParams, SplitSpec
from .postprocess import PredictionTrace

TRIAL_MAGIC = b"CSTR"
TRIAL_VERSION = 1
_FLAG_LABELED = 0x01


def _atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: str | Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _record_dtype(dims: tuple[int, int, int]) -> np.dtype:
    n_tx, n_rx, n_sc = dims
    return np.dtype(
        [
            ("timestamp", "<f8"),
            ("noise", "<f4"),
            ("agc", "<f4"),
            ("rssi", "<f4", (n_rx,)),
            ("csi", "<f4", (2 * n_tx * n_rx * n_sc,)),
            ("label", "u1"),
        ]
    )


def record_stride(dims: tuple[int, int, int]) -> int:
    """Bytes per packet record; 1469 for the default (2, 3, 30) dims."""
    return _record_dtype(dims).itemsize


def write_trial(trial: Trial, path: str | Path, labeled: bool = True) -> None:
    """Serialize a trial.  ``labeled=False`` marks the stored labels invalid
    (they are written as zero) for inference-only inputs."""
    dims = tuple(int(d) for d in trial.dims)
    pair_raw = trial.pair_id.encode("utf-8")
    trial_raw = trial.trial_id.encode("utf-8")
    flags = _FLAG_LABELED if labeled else 0
    head = bytearray()
    head += TRIAL_MAGIC
    head += struct.pack("<BBBBH", TRIAL_VERSION, flags, dims[0], dims[1], dims[2])
    head += struct.pack("<H", len(pair_raw)) + pair_raw
    head += struct.pack("<H", len(trial_raw)) + trial_raw
    head += struct.pack("<I", len(trial.packets))

    records = np.empty(len(trial.packets), dtype=_record_dtype(dims))
    for i, p in enumerate(trial.packets):
        records[i]["timestamp"] = p.timestamp
        records[i]["noise"] = p.noise
        records[i]["agc"] = p.agc
        records[i]["rssi"] = np.asarray(p.rssi, dtype=np.float32)
        csi = np.asarray(p.csi, dtype=np.complex128).ravel(order="C")
        inter = np.empty(2 * csi.size, dtype=np.float32)
        inter[0::2] = csi.real
        inter[1::2] = csi.imag
        records[i]["csi"] = inter
        records[i]["label"] = p.label if labeled else 0

    body = bytes(head) + records.tobytes()
    _atomic_write_bytes(path, body + struct.pack("<I", zlib.crc32(body)))


def _check_and_strip_crc(raw: bytes, path: str | Path) -> bytes:
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short to carry a checksum")
    body, stored = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != stored:
        raise ChecksumError(f"{path}: checksum mismatch; file is corrupted or truncated")
    return body


def _parse_trial_header(body: bytes, path: str | Path):
    if body[:4] != TRIAL_MAGIC:
        raise FormatError(f"{path}: not a trial file (bad magic)")
    if len(body) < 10:
        raise FormatError(f"{path}: truncated header")
    version, flags, n_tx, n_rx, n_sc = struct.unpack_from("<BBBBH", body, 4)
    if version != TRIAL_VERSION:
        raise VersionError(f"{path}: trial format version {version} not supported")
    offset = 10
    (pair_len,) = struct.unpack_from("<H", body, offset)
    offset += 2
    pair_id = body[offset : offset + pair_len].decode("utf-8")
    offset += pair_len
    (trial_len,) = struct.unpack_from("<H", body, offset)
    offset += 2
    trial_id = body[offset : offset + trial_len].decode("utf-8")
    offset += trial_len
    (count,) = struct.unpack_from("<I", body, offset)
    offset += 4
    return flags, (n_tx, n_rx, n_sc), pair_id, trial_id, count, offset


def read_trial(path: str | Path) -> Trial:
    """Parse and checksum-verify a trial file."""
    raw = Path(path).read_bytes()
    body = _check_and_strip_crc(raw, path)
    flags, dims, pair_id, trial_id, count, offset = _parse_trial_header(body, path)
    dtype = _record_dtype(dims)
    expected = offset + count * dtype.itemsize
    if len(body) != expected:
        raise FormatError(f"{path}: expected {expected} data bytes, found {len(body)}")
    records = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
    n_tx, n_rx, n_sc = dims
    packets = []
    for rec in records:
        inter = rec["csi"].astype(np.float64)
        csi = (inter[0::2] + 1j * inter[1::2]).reshape(n_tx, n_rx, n_sc)
        packets.append(
            CsiPacket(
                timestamp=float(rec["timestamp"]),
                noise=float(rec["noise"]),
                agc=float(rec["agc"]),
                rssi=rec["rssi"].astype(np.float64),
                csi=csi,
                label=int(rec["label"]),
            )
        )
    return Trial(packets=tuple(packets), pair_id=pair_id, trial_id=trial_id, dims=dims)


def trial_is_labeled(path: str | Path) -> bool:
    """Header-only query: does the file declare valid per-packet labels?"""
    with open(path, "rb") as fh:
        head = fh.read(10)
    if head[:4] != TRIAL_MAGIC or len(head) < 6:
        raise FormatError(f"{path}: not a trial file (bad magic)")
    return bool(head[5] & _FLAG_LABELED)


def _csi_column_names(dims: tuple[int, int, int], kind: str) -> list[str]:
    n_tx, n_rx, n_sc = dims
    return [
        f"{kind}_tx{t}_rx{r}_sc{s:02d}"
        for t in range(n_tx)
        for r in range(n_rx)
        for s in range(n_sc)
    ]


def feature_column_names(dims: tuple[int, int, int] = (2, 3, 30)) -> list[str]:
    """Column names matching the feature-row layout for the given dims."""
    n_rx = dims[1]
    rssi = [f"rssi_{chr(ord('a') + i)}" if i < 26 else f"rssi_{i}" for i in range(n_rx)]
    return (
        ["time_diff", "noise", "agc"]
        + rssi
        + _csi_column_names(dims, "mag")
        + _csi_column_names(dims, "phase")
    )


def export_feature_csv(frame: FeatureFrame, path: str | Path, dims: tuple[int, int, int] = (2, 3, 30)) -> None:
    """One row per packet, 9-significant-digit decimals, label as last column."""
    t, f = frame.matrix.shape
    names = feature_column_names(dims)
    if len(names) != f:
        names = [f"f{i:03d}" for i in range(f)]  # dims do not describe this width
    lines = [",".join(names + ["label"])]
    for row, label in zip(frame.matrix, frame.labels):
        lines.append(",".join(f"{v:.9g}" for v in row) + f",{int(label)}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def import_feature_csv(path: str | Path, scaler_applied: bool = True) -> FeatureFrame:
    """Parse a feature CSV back into a frame.

    The file does not record whether the scaler ran; pipeline CSVs are always
    scaled, so that is the default.  Zero data rows or a row whose column
    count disagrees with the header is a format error.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if len(lines) < 2:
        raise FormatError(f"{path}: feature CSV has zero data rows")
    n_cols = len(lines[0].split(","))
    rows = []
    labels = []
    for ln_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise FormatError(f"{path}: line {ln_no} has {len(parts)} columns, header has {n_cols}")
        try:
            rows.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
        except ValueError as exc:
            raise FormatError(f"{path}: line {ln_no} is not numeric: {exc}") from exc
    return FeatureFrame(
        matrix=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        scaler_applied=scaler_applied,
    )


def write_predictions(trace: PredictionTrace, path: str | Path) -> None:
    """Columns: packet_index, one per fold, ensembled, smoothed, true.
    The true column is left empty when no ground truth exists."""
    folds, t = trace.per_fold.shape
    header = (
        ["packet_index"]
        + [f"fold_{k}" for k in range(folds)]
        + ["ensembled", "smoothed", "true"]
    )
    lines = [",".join(header)]
    for i in range(t):
        true_cell = "" if trace.true_labels is None else str(int(trace.true_labels[i]))
        cells = (
            [str(i)]
            + [str(int(trace.per_fold[k, i])) for k in range(folds)]
            + [str(int(trace.ensembled[i])), str(int(trace.smoothed[i])), true_cell]
        )
        lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_predictions(path: str | Path) -> PredictionTrace:
    """Inverse of :func:`write_predictions`; trial id comes from the filename."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
    if len(lines) < 2:
        raise FormatError(f"{path}: prediction CSV has zero data rows")
    header = lines[0].split(",")
    fold_cols = [h for h in header if h.startswith("fold_")]
    expected = ["packet_index"] + fold_cols + ["ensembled", "smoothed", "true"]
    if header != expected or not fold_cols:
        raise FormatError(f"{path}: unexpected prediction CSV header")
    folds = len(fold_cols)
    t = len(lines) - 1
    per_fold = np.zeros((folds, t), dtype=np.int64)
    ensembled = np.zeros(t, dtype=np.int64)
    smoothed = np.zeros(t, dtype=np.int64)
    true_cells: list[str] = []
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(f"{path}: line {i + 2} has {len(parts)} columns, header has {len(header)}")
        for k in range(folds):
            per_fold[k, i] = int(parts[1 + k])
        ensembled[i] = int(parts[1 + folds])
        smoothed[i] = int(parts[2 + folds])
        true_cells.append(parts[3 + folds])
    if all(c == "" for c in true_cells):
        true_labels = None
    elif any(c == "" for c in true_cells):
        raise FormatError(f"{path}: true column is only partially filled")
    else:
        true_labels = np.asarray([int(c) for c in true_cells], dtype=np.int64)
    return PredictionTrace(
        trial_id=Path(path).stem,
        per_fold=per_fold,
        ensembled=ensembled,
        smoothed=smoothed,
        true_labels=true_labels,
    )


@dataclass
class ManifestEntry:
    path: str  # relative to the manifest's directory
    pair_id: str
    trial_id: str
    class_name: str
    length: int


@dataclass
class Manifest:
    """Index of one generated dataset: trial files plus provenance."""

    dims: tuple[int, int, int]
    seed: int
    profiles_sha256: str
    entries: list[ManifestEntry] = field(default_factory=list)
    version: int = 1

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "dims": list(self.dims),
            "seed": self.seed,
            "profiles_sha256": self.profiles_sha256,
            "trials": [
                {
                    "path": e.path,
                    "pair_id": e.pair_id,
                    "trial_id": e.trial_id,
                    "class_name": e.class_name,
                    "length": e.length,
                }
                for e in self.entries
            ],
        }


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    _atomic_write_text(path, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a manifest; every referenced trial file must exist."""
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if d.get("version") != 1:
        raise VersionError(f"{path}: unsupported manifest version {d.get('version')!r}")
    entries = [
        ManifestEntry(
            path=e["path"],
            pair_id=e["pair_id"],
            trial_id=e["trial_id"],
            class_name=e["class_name"],
            length=int(e["length"]),
        )
        for e in d.get("trials", [])
    ]
    for e in entries:
        if not (path.parent / e.path).exists():
            raise FormatError(f"{path}: referenced trial file missing: {e.path}")
    dims = tuple(int(v) for v in d["dims"])
    if len(dims) != 3:
        raise FormatError(f"{path}: dims must have three entries")
    return Manifest(
        dims=dims,  # type: ignore[arg-type]
        seed=int(d["seed"]),
        profiles_sha256=str(d["profiles_sha256"]),
        entries=entries,
    )


def save_scaler(params: RobustScalerParams, path: str | Path) -> None:
    _atomic_write_text(path, json.dumps(params.to_dict(), sort_keys=True) + "\n")


def load_scaler(path: str | Path) -> RobustScalerParams:
    try:
        return RobustScalerParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, DomainError) as exc:
        raise FormatError(f"{path}: bad scaler params file: {exc}") from exc


def save_split(spec: SplitSpec, path: str | Path) -> None:
    _atomic_write_text(path, json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")


def load_split(path: str | Path) -> SplitSpec:
    try:
        return SplitSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, DomainError) as exc:
        raise FormatError(f"{path}: bad split spec file: {exc}") from exc
