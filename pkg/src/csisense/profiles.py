"""Synthetic class profiles: interaction envelopes as data, not code.

Every class is described by a small parameter set in an ini file (see
configs/profiles.ini): segment durations, an envelope shape applied to the
multipath rays while the interaction happens, modulation depths for the
line-of-sight and scattered rays, a carrier-phase drift, and a left/right
asymmetry weighting across the receive antennas that distinguishes the
left/right class variants.  The generator interprets these parameters; it has
no per-class code.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import LABELS, label_to_index
from .errors import DomainError

# steady dwell and interaction seconds per class; the recordings always hold
# the dwell at the start except approaching, which ends in it
CLASS_TIMING: dict[str, tuple[float, float]] = {
    "steady-state": (2.0, 3.0),
    "approaching": (2.0, 3.5),
    "departing": (2.0, 3.5),
    "handshaking": (2.0, 4.0),
    "high-five": (2.0, 4.0),
    "hugging": (2.0, 3.0),
    "kicking-left": (2.0, 3.0),
    "kicking-right": (2.0, 3.0),
    "pointing-left": (2.0, 4.5),
    "pointing-right": (2.0, 4.5),
    "punching-left": (2.0, 3.0),
    "punching-right": (2.0, 3.0),
    "pushing": (2.0, 4.0),
}

ENVELOPE_SHAPES = ("flat", "ramp", "bump", "double_bump", "oscillation")


@dataclass(frozen=True)
class SyntheticClassProfile:
    """Envelope parameters for one interaction class.

    duration / steady_duration are seconds; depth_* are signed modulation
    fractions; phase_drift is carrier-phase radians accumulated across the
    segment; center/width/cycles shape the envelope on normalized segment
    time; asymmetry in [-1, 1] weights the scattered rays across the receive
    array (negative = left-heavy).
    """

    label: int
    duration: float
    steady_position: str
    steady_duration: float
    shape: str
    depth_los: float = 0.0
    depth_scatter: float = 0.0
    phase_drift: float = 0.0
    center: float = 0.5
    width: float = 0.15
    cycles: float = 2.0
    asymmetry: float = 0.0

    def __post_init__(self):
        name = LABELS[self.label]
        expected = CLASS_TIMING[name]
        if abs(self.steady_duration - expected[0]) > 1e-9 or abs(self.duration - expected[1]) > 1e-9:
            raise DomainError(
                f"profile {name}: segment durations ({self.steady_duration}, {self.duration}) "
                f"must match the class timing table {expected}"
            )
        if self.steady_position not in ("begin", "end"):
            raise DomainError(f"profile {name}: steady_position must be 'begin' or 'end'")
        if (self.steady_position == "end") != (name == "approaching"):
            raise DomainError(
                f"profile {name}: only approaching trials end in the steady dwell"
            )
        if self.shape not in ENVELOPE_SHAPES:
            raise DomainError(f"profile {name}: unknown envelope shape {self.shape!r}")
        if not -1.0 <= self.asymmetry <= 1.0:
            raise DomainError(f"profile {name}: asymmetry must lie in [-1, 1]")
        if self.width <= 0:
            raise DomainError(f"profile {name}: width must be positive")


def amp_envelope(profile: SyntheticClassProfile, u: float) -> float:
    """Amplitude envelope at normalized segment time u in [0, 1]."""
    if profile.shape == "flat":
        return 0.0
    if profile.shape == "ramp":
        return u
    if profile.shape == "bump":
        return float(np.exp(-((u - profile.center) ** 2) / (2.0 * profile.width**2)))
    if profile.shape == "double_bump":
        w = profile.width / 2.0
        lo = profile.center - profile.width
        hi = profile.center + profile.width
        return float(
            np.exp(-((u - lo) ** 2) / (2.0 * w**2)) + np.exp(-((u - hi) ** 2) / (2.0 * w**2))
        )
    if profile.shape == "oscillation":
        window = np.sin(np.pi * u) ** 2  # smooth rise and fall at the segment edges
        return float(np.sin(2.0 * np.pi * profile.cycles * u) * window)
    raise DomainError(f"unknown envelope shape {profile.shape!r}")


def phase_envelope(profile: SyntheticClassProfile, u: float) -> float:
    """Phase-drift envelope; monotone for ramps (sustained motion), otherwise
    follows the amplitude envelope (phase wobbles with the gesture)."""
    if profile.shape == "ramp":
        return u
    return amp_envelope(profile, u)


@dataclass(frozen=True)
class SimMeta:
    """Generator-wide knobs stored in the profile file's [meta] section."""

    packet_rate: float = 260.0
    jitter: float = 0.08
    csi_noise: float = 0.01
    version: int = 1

    def __post_init__(self):
        if self.packet_rate <= 0:
            raise DomainError("packet_rate must be positive")
        if not 0.0 <= self.jitter < 1.0:
            raise DomainError("jitter must lie in [0, 1)")
        if self.csi_noise < 0:
            raise DomainError("csi_noise must be non-negative")


_PROFILE_FLOAT_KEYS = (
    "duration", "steady_duration", "depth_los", "depth_scatter",
    "phase_drift", "center", "width", "cycles", "asymmetry",
)


def load_profiles(path: str | Path) -> tuple[list[SyntheticClassProfile], SimMeta]:
    """Parse a profile ini file: a [meta] section plus one section per class.

    Unknown sections, unknown keys, or a missing required key are schema
    errors; profiles come back in class-code order.
    """
    path = Path(path)
    if not path.exists():
        raise DomainError(f"profile file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise DomainError(f"{path}: cannot parse profile file: {exc}") from exc
    if "meta" not in parser:
        raise DomainError(f"{path}: profile file has no [meta] section")
    meta_sec = parser["meta"]
    try:
        if int(meta_sec.get("version", "1")) != 1:
            raise DomainError(f"{path}: unsupported profile file version")
        meta = SimMeta(
            packet_rate=float(meta_sec.get("packet_rate", "260.0")),
            jitter=float(meta_sec.get("jitter", "0.08")),
            csi_noise=float(meta_sec.get("csi_noise", "0.01")),
        )
    except ValueError as exc:
        raise DomainError(f"{path}: bad [meta] value: {exc}") from exc

    profiles = []
    for section in parser.sections():
        if section == "meta":
            continue
        label = label_to_index(section)  # unknown class names raise here
        sec = parser[section]
        kwargs: dict = {"label": label}
        for key in sec:
            if key == "steady_position":
                kwargs[key] = sec[key]
            elif key in _PROFILE_FLOAT_KEYS:
                try:
                    kwargs[key] = float(sec[key])
                except ValueError as exc:
                    raise DomainError(f"{path}: [{section}] {key} is not a number") from exc
            elif key == "shape":
                kwargs[key] = sec[key]
            else:
                raise DomainError(f"{path}: [{section}] has unknown key {key!r}")
        for required in ("duration", "steady_duration", "steady_position", "shape"):
            if required not in kwargs:
                raise DomainError(f"{path}: [{section}] is missing required key {required!r}")
        profiles.append(SyntheticClassProfile(**kwargs))
    if not profiles:
        raise DomainError(f"{path}: profile file defines no classes")
    profiles.sort(key=lambda p: p.label)
    return profiles, meta


def save_profiles(profiles: list[SyntheticClassProfile], meta: SimMeta, path: str | Path) -> None:
    """Write profiles back out in the ini schema (used to derive subsets)."""
    parser = configparser.ConfigParser()
    parser["meta"] = {
        "version": str(meta.version),
        "packet_rate": repr(meta.packet_rate),
        "jitter": repr(meta.jitter),
        "csi_noise": repr(meta.csi_noise),
    }
    for p in sorted(profiles, key=lambda p: p.label):
        parser[LABELS[p.label]] = {
            "duration": repr(p.duration),
            "steady_position": p.steady_position,
            "steady_duration": repr(p.steady_duration),
            "shape": p.shape,
            "depth_los": repr(p.depth_los),
            "depth_scatter": repr(p.depth_scatter),
            "phase_drift": repr(p.phase_drift),
            "center": repr(p.center),
            "width": repr(p.width),
            "cycles": repr(p.cycles),
            "asymmetry": repr(p.asymmetry),
        }
    buf = io.StringIO()
    parser.write(buf)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
