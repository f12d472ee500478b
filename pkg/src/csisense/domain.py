"""Core vocabulary: interaction labels, CSI packets, trials.

A trial is one recording of a two-person interaction seen by a MIMO-OFDM
receiver: a sequence of packets, each carrying a complex channel matrix of
shape (n_tx, n_rx, n_subcarriers) plus the receiver's side readings (RSSI per
receive antenna, AGC, noise floor) and a timestamp in seconds relative to the
trial start.  Every packet is labeled with the interaction happening when it
was captured; the steady-state label marks the no-movement dwell that each
recording contains at one end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Class codes are fixed: steady-state is 0, the interactions follow in this order.
LABELS: tuple[str, ...] = (
    "steady-state",
    "approaching",
    "departing",
    "handshaking",
    "high-five",
    "hugging",
    "kicking-left",
    "kicking-right",
    "pointing-left",
    "pointing-right",
    "punching-left",
    "punching-right",
    "pushing",
)

STEADY_STATE = 0
NUM_CLASSES = len(LABELS)

_NAME_TO_INDEX = {name: i for i, name in enumerate(LABELS)}


def label_to_index(name: str) -> int:
    try:
        return _NAME_TO_INDEX[name]
    except KeyError:
        raise DomainError(f"unknown interaction label {name!r}") from None


def index_to_label(index: int) -> str:
    if not 0 <= int(index) < NUM_CLASSES:
        raise DomainError(f"interaction label index {index} out of range 0..{NUM_CLASSES - 1}")
    return LABELS[int(index)]


@dataclass(frozen=True)
class CsiPacket:
    """One received packet.  Arrays are treated as immutable after construction.

    timestamp  seconds relative to trial start
    noise      receiver noise floor, dB
    agc        automatic gain control setting, dB
    rssi       per-receive-antenna signal strength, dB, length n_rx
    csi        complex channel matrix, shape (n_tx, n_rx, n_subcarriers)
    label      interaction class code, 0..12
    """

    timestamp: float
    noise: float
    agc: float
    rssi: np.ndarray
    csi: np.ndarray
    label: int


@dataclass(frozen=True)
class Trial:
    packets: tuple[CsiPacket, ...]
    pair_id: str
    trial_id: str
    dims: tuple[int, int, int]


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_trial(trial: Trial) -> ValidationReport:
    """Check a trial against its declared dims and the packet invariants.

    Violations name the offending packet index; an empty trial is itself a
    violation.  The report never raises, so callers can batch-validate.
    """
    violations: list[str] = []
    n_tx, n_rx, n_sc = trial.dims
    if min(trial.dims) < 1:
        violations.append(f"dims {trial.dims} must all be at least 1")
    if not trial.packets:
        violations.append("trial contains no packets")
    prev_t = None
    for i, p in enumerate(trial.packets):
        if tuple(p.csi.shape) != (n_tx, n_rx, n_sc):
            violations.append(f"csi shape {tuple(p.csi.shape)} does not match dims {trial.dims} at index {i}")
        if len(p.rssi) != n_rx:
            violations.append(f"rssi length {len(p.rssi)} does not match n_rx {n_rx} at index {i}")
        if not 0 <= int(p.label) < NUM_CLASSES:
            violations.append(f"label {p.label} out of range at index {i}")
        if prev_t is not None and p.timestamp < prev_t:
            violations.append(f"non-monotone timestamp at index {i}")
        prev_t = p.timestamp
    return ValidationReport(ok=not violations, violations=violations)
