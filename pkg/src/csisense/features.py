"""Packet features, trial length normalization, scaling, and dataset splits.

Each packet becomes one row of F = 6 + 2 * n_tx * n_rx * n_sc features:

    [time_diff, noise, agc, rssi_a, rssi_b, rssi_c,
     |csi| flattened row-major over (tx, rx, subcarrier),
     principal-value phases in (-pi, pi], same order]

so the default (2, 3, 30) dims give 366 columns.  Trials are first padded or
clipped to a common length at their steady-state end, then scaled column-wise
by a robust (median / interquartile-range) scaler fitted on training rows only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import STEADY_STATE, CsiPacket, Trial
from .errors import DomainError
from .rng import CounterRng


@dataclass
class FeatureFrame:
    """One trial as a (T, F) float matrix plus per-row labels."""

    matrix: np.ndarray
    labels: np.ndarray
    scaler_applied: bool = False


@dataclass
class RobustScalerParams:
    median: np.ndarray
    iqr: np.ndarray
    degenerate: np.ndarray  # columns whose IQR was 0; divisor 1 is used there

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "median": self.median.tolist(),
            "iqr": self.iqr.tolist(),
            "degenerate": [bool(v) for v in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobustScalerParams":
        if d.get("version") != 1:
            raise DomainError(f"unsupported scaler params version {d.get('version')!r}")
        return cls(
            median=np.asarray(d["median"], dtype=np.float64),
            iqr=np.asarray(d["iqr"], dtype=np.float64),
            degenerate=np.asarray(d["degenerate"], dtype=bool),
        )


@dataclass
class SplitSpec:
    """Trial-id lists for the 60:20:20 split plus fold membership over train+val."""

    train: list[str]
    val: list[str]
    test: list[str]
    folds: list[list[str]] = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "seed": self.seed,
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "folds": [list(f) for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        if d.get("version") != 1:
            raise DomainError(f"unsupported split spec version {d.get('version')!r}")
        return cls(
            train=list(d["train"]),
            val=list(d["val"]),
            test=list(d["test"]),
            folds=[list(f) for f in d.get("folds", [])],
            seed=int(d.get("seed", 0)),
        )


def _steady_run(labels: list[int], from_end: bool) -> int:
    run = 0
    seq = reversed(labels) if from_end else labels
    for lab in seq:
        if lab != STEADY_STATE:
            break
        run += 1
    return run


def _median_interarrival(packets) -> float:
    if len(packets) < 2:
        return 0.0
    times = np.asarray([p.timestamp for p in packets])
    return float(np.median(np.diff(times)))


def _replica(edge: CsiPacket, timestamp: float) -> CsiPacket:
    return CsiPacket(
        timestamp=timestamp,
        noise=edge.noise,
        agc=edge.agc,
        rssi=edge.rssi,
        csi=edge.csi,
        label=STEADY_STATE,
    )


def _rebase(packets: list[CsiPacket]) -> list[CsiPacket]:
    t0 = packets[0].timestamp
    if t0 == 0.0:
        return packets
    return [
        CsiPacket(p.timestamp - t0, p.noise, p.agc, p.rssi, p.csi, p.label)
        for p in packets
    ]


def normalize_length(trial: Trial, target_len: int = 1560) -> Trial:
    """Pad or clip a trial to ``target_len`` packets at its steady-state end.

    The steady end is the one whose edge packet carries the steady-state
    label (trials with the dwell at the tail, e.g. approaching, pad/clip at
    the tail).  Padding replicates the steady-edge packet with timestamps
    extrapolated at the trial's median inter-arrival and the steady-state
    label; clipping removes packets from the outermost steady edge first and
    only touches non-steady packets once no edge steady run remains (with a
    warning).  Timestamps are re-based to start at 0 whenever the packet list
    changes; a trial already at the target length is returned unchanged.
    """
    if target_len < 1:
        raise DomainError(f"target_len must be at least 1, got {target_len}")
    if not trial.packets:
        raise DomainError("cannot normalize an empty trial")
    n = len(trial.packets)
    if n == target_len:
        return trial

    labels = [p.label for p in trial.packets]
    if labels[0] == STEADY_STATE:
        steady_end = "begin"
    elif labels[-1] == STEADY_STATE:
        steady_end = "end"
    else:
        steady_end = "begin"
        warnings.warn(
            f"trial {trial.trial_id}: no steady-state packets at either end; "
            "padding/clipping at the leading run"
        )

    packets = list(trial.packets)
    if n < target_len:
        pad = target_len - n
        dt = _median_interarrival(packets)
        if steady_end == "begin":
            edge = packets[0]
            prefix = [_replica(edge, edge.timestamp - dt * (pad - i)) for i in range(pad)]
            packets = prefix + packets
        else:
            edge = packets[-1]
            packets = packets + [_replica(edge, edge.timestamp + dt * (i + 1)) for i in range(pad)]
    else:
        drop = n - target_len
        front_run = _steady_run(labels, from_end=False)
        back_run = _steady_run(labels, from_end=True)
        if front_run == n:  # all-steady trial: treat the declared end as the only run
            front_run, back_run = (n, 0) if steady_end == "begin" else (0, n)
        primary, secondary = (front_run, back_run) if steady_end == "begin" else (back_run, front_run)
        take_primary = min(drop, primary)
        take_secondary = min(drop - take_primary, secondary)
        remainder = drop - take_primary - take_secondary
        if remainder > 0:
            warnings.warn(
                f"trial {trial.trial_id}: clipping {remainder} non-steady packets; "
                "steady runs were shorter than the excess length"
            )
        # any unavoidable non-steady removal happens at the steady end
        if steady_end == "begin":
            front, back = take_primary + remainder, take_secondary
        else:
            front, back = take_secondary, take_primary + remainder
        packets = packets[front : n - back]

    packets = _rebase(packets)
    return Trial(packets=tuple(packets), pair_id=trial.pair_id, trial_id=trial.trial_id, dims=trial.dims)


def packet_time_diffs(trial: Trial) -> np.ndarray:
    """Per-packet inter-arrival seconds; the first entry is 0."""
    times = np.asarray([p.timestamp for p in trial.packets], dtype=np.float64)
    if times.size == 0:
        raise DomainError("trial contains no packets")
    diffs = np.empty_like(times)
    diffs[0] = 0.0
    np.subtract(times[1:], times[:-1], out=diffs[1:])
    return diffs


def _principal_phase(csi: np.ndarray) -> np.ndarray:
    phase = np.angle(csi)
    # np.angle returns -pi for values like -1-0j; fold onto (-pi, pi]
    return np.where(phase == -np.pi, np.pi, phase)


def packet_to_features(packet: CsiPacket, time_diff: float) -> np.ndarray:
    """One packet's feature row; length 6 + 2 * csi.size."""
    csi = np.asarray(packet.csi)
    return np.concatenate(
        [
            np.asarray([time_diff, packet.noise, packet.agc], dtype=np.float64),
            np.asarray(packet.rssi, dtype=np.float64),
            np.abs(csi).ravel(order="C"),
            _principal_phase(csi).ravel(order="C"),
        ]
    )


def trial_features(trial: Trial) -> FeatureFrame:
    """Stack all packet rows of a trial into an unscaled FeatureFrame."""
    diffs = packet_time_diffs(trial)
    rows = [packet_to_features(p, d) for p, d in zip(trial.packets, diffs)]
    labels = np.asarray([p.label for p in trial.packets], dtype=np.int64)
    return FeatureFrame(matrix=np.asarray(rows, dtype=np.float64), labels=labels, scaler_applied=False)


def robust_fit(matrix: np.ndarray) -> RobustScalerParams:
    """Column-wise median and interquartile range (25th to 75th percentile,
    linear-interpolation quantiles).  Zero-IQR columns are flagged degenerate
    and later divided by 1 instead."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise DomainError("robust_fit needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(matrix)):
        raise DomainError("robust_fit input contains non-finite values")
    median = np.median(matrix, axis=0)
    q1 = np.percentile(matrix, 25.0, axis=0)
    q3 = np.percentile(matrix, 75.0, axis=0)
    iqr = q3 - q1
    degenerate = iqr == 0.0
    return RobustScalerParams(median=median, iqr=iqr, degenerate=degenerate)


def robust_transform(frame: FeatureFrame, params: RobustScalerParams) -> FeatureFrame:
    """(x - median) / IQR per column, divisor 1 on degenerate columns."""
    matrix = np.asarray(frame.matrix, dtype=np.float64)
    if matrix.shape[1] != params.median.size:
        raise DomainError(
            f"frame has {matrix.shape[1]} columns but scaler was fitted on {params.median.size}"
        )
    divisor = np.where(params.degenerate, 1.0, params.iqr)
    scaled = (matrix - params.median) / divisor
    if not np.all(np.isfinite(scaled)):
        raise DomainError("scaled features contain non-finite values")
    return FeatureFrame(matrix=scaled, labels=frame.labels.copy(), scaler_applied=True)


def one_hot(labels: np.ndarray, num_classes: int = 13) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DomainError("label out of range for one-hot encoding")
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


def _grouped(trial_ids: list[str], classes: list[str] | None) -> dict[str, list[str]]:
    if classes is None:
        return {"": sorted(trial_ids)}
    if len(classes) != len(trial_ids):
        raise DomainError("classes list must parallel trial_ids")
    groups: dict[str, list[str]] = {}
    for tid, cls in sorted(zip(trial_ids, classes)):
        groups.setdefault(cls, []).append(tid)
    return {k: groups[k] for k in sorted(groups)}


def split_dataset(trial_ids: list[str], seed: int, classes: list[str] | None = None) -> SplitSpec:
    """Deterministic 60:20:20 train/val/test split, stratified per class when
    a parallel ``classes`` list is given.  Within each class the shuffled ids
    are dealt test, then val, then train, with the two holdout sizes rounded
    from 20% of the class count."""
    if len(set(trial_ids)) != len(trial_ids):
        raise DomainError("trial ids must be unique")
    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    for cls, ids in _grouped(trial_ids, classes).items():
        rng = CounterRng(seed, "split", cls)
        shuffled = rng.shuffle(ids)
        n = len(shuffled)
        n_test = int(round(n * 0.2))
        n_val = int(round(n * 0.2))
        test.extend(shuffled[:n_test])
        val.extend(shuffled[n_test : n_test + n_val])
        train.extend(shuffled[n_test + n_val :])
    return SplitSpec(train=sorted(train), val=sorted(val), test=sorted(test), seed=seed)


def kfold_assign(
    trial_ids: list[str], k: int, seed: int, classes: list[str] | None = None
) -> list[list[str]]:
    """Partition ids into ``k`` folds, stratified per class when given,
    deterministic under the seed.  Folds are near-equal in size."""
    if k < 2:
        raise DomainError(f"fold count must be at least 2, got {k}")
    if len(trial_ids) < k:
        raise DomainError(f"cannot build {k} folds from {len(trial_ids)} trials")
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for cls, ids in _grouped(trial_ids, classes).items():
        rng = CounterRng(seed, "folds", cls)
        shuffled = rng.shuffle(ids)
        for i, tid in enumerate(shuffled):
            folds[(offset + i) % k].append(tid)
        offset += len(shuffled)  # keeps fold sizes balanced across classes
    return [sorted(f) for f in folds]
