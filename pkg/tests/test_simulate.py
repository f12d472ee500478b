"""Profile parsing, envelope shapes, and the trial generator."""

import numpy as np
import pytest

from csisense.channel import PropagationConfig
from csisense.dataio import write_trial
from csisense.domain import LABELS, STEADY_STATE, label_to_index, validate_trial
from csisense.errors import DomainError
from csisense.profiles import (
    CLASS_TIMING,
    SimMeta,
    SyntheticClassProfile,
    amp_envelope,
    load_profiles,
    phase_envelope,
    save_profiles,
)
from csisense.rng import CounterRng
from csisense.simulate import (
    EnvelopeScale,
    build_geometry,
    pair_envelope_scale,
    synth_dataset,
    synth_trial,
    trial_seed,
)

PUSHING = SyntheticClassProfile(
    label=label_to_index("pushing"),
    duration=4.0,
    steady_position="begin",
    steady_duration=2.0,
    shape="bump",
    depth_los=0.65,
    depth_scatter=0.55,
    phase_drift=9.0,
)

APPROACHING = SyntheticClassProfile(
    label=label_to_index("approaching"),
    duration=3.5,
    steady_position="end",
    steady_duration=2.0,
    shape="ramp",
    depth_los=0.9,
    depth_scatter=0.35,
    phase_drift=-28.0,
)


# ---------------------------------------------------------------- profiles

def test_shipped_profile_file():
    profiles, meta = load_profiles("configs/profiles.ini")
    assert len(profiles) == len(LABELS)
    assert [p.label for p in profiles] == list(range(len(LABELS)))
    assert (meta.packet_rate, meta.jitter, meta.csi_noise) == (260.0, 0.08, 0.01)
    for p in profiles:
        steady, active = CLASS_TIMING[LABELS[p.label]]
        assert p.steady_duration == steady and p.duration == active


def test_shipped_three_class_file():
    profiles, meta = load_profiles("configs/profiles-3class.ini")
    assert [LABELS[p.label] for p in profiles] == ["steady-state", "approaching", "pushing"]
    assert meta.packet_rate == 26.0


def test_load_profiles_missing_file(tmp_path):
    with pytest.raises(DomainError, match="profile file not found"):
        load_profiles(tmp_path / "nope.ini")


def test_load_profiles_schema_errors(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text("[pushing]\nduration = 4.0\n")
    with pytest.raises(DomainError, match="no \\[meta\\] section"):
        load_profiles(path)

    path.write_text("[meta]\n[moonwalking]\nduration = 4.0\n")
    with pytest.raises(DomainError):
        load_profiles(path)  # unknown class name

    path.write_text(
        "[meta]\n[pushing]\nduration = 4.0\nsteady_duration = 2.0\n"
        "steady_position = begin\nshape = bump\nglow = 3\n"
    )
    with pytest.raises(DomainError, match="unknown key"):
        load_profiles(path)

    path.write_text("[meta]\n[pushing]\nduration = 4.0\nsteady_duration = 2.0\n")
    with pytest.raises(DomainError, match="missing required key"):
        load_profiles(path)

    path.write_text("[meta]\n")
    with pytest.raises(DomainError, match="defines no classes"):
        load_profiles(path)


def test_profiles_round_trip(tmp_path):
    profiles, meta = load_profiles("configs/profiles.ini")
    path = tmp_path / "copy.ini"
    save_profiles(profiles, meta, path)
    back, back_meta = load_profiles(path)
    assert back == profiles
    assert back_meta == meta


def test_profile_timing_table_is_enforced():
    with pytest.raises(DomainError, match="timing table"):
        SyntheticClassProfile(
            label=label_to_index("pushing"),
            duration=5.0,
            steady_position="begin",
            steady_duration=2.0,
            shape="bump",
        )
    with pytest.raises(DomainError, match="steady dwell"):
        SyntheticClassProfile(
            label=label_to_index("pushing"),
            duration=4.0,
            steady_position="end",
            steady_duration=2.0,
            shape="bump",
        )
    with pytest.raises(DomainError, match="steady dwell"):
        SyntheticClassProfile(
            label=label_to_index("approaching"),
            duration=3.5,
            steady_position="begin",
            steady_duration=2.0,
            shape="ramp",
        )
    with pytest.raises(DomainError, match="shape"):
        SyntheticClassProfile(
            label=label_to_index("pushing"),
            duration=4.0,
            steady_position="begin",
            steady_duration=2.0,
            shape="spiral",
        )


def test_sim_meta_validation():
    with pytest.raises(DomainError):
        SimMeta(packet_rate=0.0)
    with pytest.raises(DomainError):
        SimMeta(jitter=1.0)
    with pytest.raises(DomainError):
        SimMeta(csi_noise=-0.1)


# --------------------------------------------------------------- envelopes

def test_envelope_shapes():
    assert amp_envelope(PUSHING, 0.5) == pytest.approx(1.0)  # bump peak at center
    assert amp_envelope(PUSHING, 0.35) == amp_envelope(PUSHING, 0.65)
    assert amp_envelope(APPROACHING, 0.25) == 0.25  # ramp is linear
    flat = SyntheticClassProfile(
        label=label_to_index("steady-state"),
        duration=3.0,
        steady_position="begin",
        steady_duration=2.0,
        shape="flat",
    )
    assert amp_envelope(flat, 0.7) == 0.0

    osc = SyntheticClassProfile(
        label=label_to_index("handshaking"),
        duration=4.0,
        steady_position="begin",
        steady_duration=2.0,
        shape="oscillation",
        cycles=7.0,
    )
    assert amp_envelope(osc, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert amp_envelope(osc, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert abs(amp_envelope(osc, 0.39)) > 0.1

    dbl = SyntheticClassProfile(
        label=label_to_index("punching-left"),
        duration=3.0,
        steady_position="begin",
        steady_duration=2.0,
        shape="double_bump",
        center=0.5,
        width=0.2,
    )
    assert amp_envelope(dbl, 0.3) == pytest.approx(amp_envelope(dbl, 0.7))
    assert amp_envelope(dbl, 0.3) > amp_envelope(dbl, 0.5)


def test_phase_envelope_is_monotone_only_for_ramp():
    assert phase_envelope(APPROACHING, 0.8) == 0.8
    assert phase_envelope(PUSHING, 0.5) == amp_envelope(PUSHING, 0.5)


# ---------------------------------------------------------------- geometry

def test_build_geometry_layout_and_determinism():
    config = PropagationConfig()
    a = build_geometry(config, CounterRng(5, "geometry"))
    b = build_geometry(config, CounterRng(5, "geometry"))
    c = build_geometry(config, CounterRng(6, "geometry"))
    assert len(a.links) == 2 and len(a.links[0]) == 3
    link = a.links[0][0]
    assert link.amplitudes[0] == 1.0 and link.sensitivities[0] == 1.0
    assert link.amplitudes.shape == (5,)
    assert (link.delays[1:] > link.delays[0]).all()
    assert (link.amplitudes[1:] >= 0.01).all()
    for t in range(2):
        for r in range(3):
            assert np.array_equal(a.links[t][r].delays, b.links[t][r].delays)
    assert not np.array_equal(a.links[0][0].delays, c.links[0][0].delays)


def test_pair_envelope_scale():
    rng = CounterRng(0, "pair-envelope", 0)
    assert pair_envelope_scale(0.0, rng) == EnvelopeScale()
    big = pair_envelope_scale(5.0, CounterRng(1, "pair-envelope", 3))
    assert big.depth >= 0.2 and big.drift >= 0.2 and big.width >= 0.3
    with pytest.raises(DomainError):
        pair_envelope_scale(-0.1, rng)


# ------------------------------------------------------------------ trials

def test_synth_trial_segments_and_labels():
    trial = synth_trial(PUSHING, packet_rate=5.0, jitter=0.0, seed=1)
    assert len(trial.packets) == 10 + 20
    labels = [p.label for p in trial.packets]
    assert labels[:10] == [STEADY_STATE] * 10
    assert labels[10:] == [PUSHING.label] * 20
    validate_trial(trial)


def test_synth_trial_approaching_ends_steady():
    trial = synth_trial(APPROACHING, packet_rate=4.0, jitter=0.0, seed=1)
    assert len(trial.packets) == 14 + 8
    labels = [p.label for p in trial.packets]
    assert labels[:14] == [APPROACHING.label] * 14
    assert labels[14:] == [STEADY_STATE] * 8


def test_synth_trial_is_byte_deterministic(tmp_path):
    a = synth_trial(PUSHING, packet_rate=10.0, seed=42, pair_id="pair03")
    b = synth_trial(PUSHING, packet_rate=10.0, seed=42, pair_id="pair03")
    pa, pb = tmp_path / "a.trial", tmp_path / "b.trial"
    write_trial(a, pa)
    write_trial(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = synth_trial(PUSHING, packet_rate=10.0, seed=43, pair_id="pair03")
    write_trial(c, pb)
    assert pa.read_bytes() != pb.read_bytes()


def test_synth_trial_timestamp_jitter_bounds():
    trial = synth_trial(PUSHING, packet_rate=10.0, jitter=0.25, seed=7)
    t = np.array([p.timestamp for p in trial.packets])
    diffs = np.diff(t)
    assert t[0] == 0.0
    assert (diffs >= 0.1 * 0.75 - 1e-12).all() and (diffs <= 0.1 * 1.25 + 1e-12).all()
    exact = synth_trial(PUSHING, packet_rate=10.0, jitter=0.0, seed=7)
    te = np.array([p.timestamp for p in exact.packets])
    assert np.allclose(np.diff(te), 0.1, atol=1e-12)


def test_synth_trial_receiver_side_values():
    trial = synth_trial(PUSHING, packet_rate=5.0, seed=3)
    for p in trial.packets:
        assert (p.rssi == np.round(p.rssi)).all()
        assert (p.rssi >= 0).all() and (p.rssi <= 99).all()
        assert 0.0 <= p.agc <= 60.0
        assert -94.0 < p.noise < -90.0


def test_synth_trial_steady_packets_are_identical_without_noise():
    trial = synth_trial(PUSHING, packet_rate=5.0, jitter=0.0, seed=2, csi_noise=0.0)
    steady = [p.csi for p in trial.packets[:10]]
    for h in steady[1:]:
        assert np.array_equal(h, steady[0])
    mid_active = trial.packets[20].csi  # envelope peak differs from the dwell
    assert not np.array_equal(mid_active, steady[0])


def test_synth_trial_validation():
    with pytest.raises(DomainError):
        synth_trial(PUSHING, packet_rate=0.0)
    with pytest.raises(DomainError):
        synth_trial(PUSHING, jitter=1.0)
    with pytest.raises(DomainError):
        synth_trial(PUSHING, csi_noise=-1.0)
    geo = build_geometry(PropagationConfig(dims=(1, 1, 8)), CounterRng(0, "geometry"))
    with pytest.raises(DomainError, match="dims"):
        synth_trial(PUSHING, PropagationConfig(), geometry=geo)


# ----------------------------------------------------------------- dataset

def test_synth_dataset_counts_and_ordering():
    profiles = [APPROACHING, PUSHING]
    meta = SimMeta(packet_rate=5.0, jitter=0.0, csi_noise=0.0)
    trials = synth_dataset(profiles, pairs=2, trials_per_class=2, seed=1, meta=meta)
    assert len(trials) == 2 * 2 * 2
    ids = [t.trial_id for t in trials]
    assert ids == [
        "pair00-approaching-00",
        "pair00-approaching-01",
        "pair00-pushing-00",
        "pair00-pushing-01",
        "pair01-approaching-00",
        "pair01-approaching-01",
        "pair01-pushing-00",
        "pair01-pushing-01",
    ]
    assert trials[0].pair_id == "pair00" and trials[-1].pair_id == "pair01"


def test_synth_dataset_shares_geometry_across_pairs():
    # with no pair variation, no jitter, and no noise the channel response is
    # a pure function of the shared geometry, so pairs produce identical CSI
    meta = SimMeta(packet_rate=5.0, jitter=0.0, csi_noise=0.0)
    trials = synth_dataset([PUSHING], pairs=2, trials_per_class=1, seed=4, meta=meta)
    a, b = trials
    for pa, pb in zip(a.packets, b.packets):
        assert np.array_equal(pa.csi, pb.csi)
        assert np.array_equal(pa.rssi, pb.rssi)
        assert pa.label == pb.label


def test_synth_dataset_trial_seeds_are_distinct():
    seen = {
        trial_seed(0, p, c, k)
        for p in range(3)
        for c in range(13)
        for k in range(5)
    }
    assert len(seen) == 3 * 13 * 5


def test_synth_dataset_validation():
    with pytest.raises(DomainError):
        synth_dataset([PUSHING], pairs=0, trials_per_class=1)
    with pytest.raises(DomainError):
        synth_dataset([PUSHING], pairs=1, trials_per_class=1, pair_variation=-1.0)
