"""Time-stretch and pitch-shift: schedules, scaled grids, bank splitting,
and the full modification pipeline."""
import numpy as np
import pytest

from quasivoc.arma import cascade_response, sample_harmonics
from quasivoc.modify import (ModificationError, ScaleSchedule, load_schedule,
                             modified_amplitudes, modified_phases, modify,
                             scaled_freqs, scaled_times)
from quasivoc.qhm import F0Track, harmonic_grid
from quasivoc.signals import make_grid
from quasivoc.synth import excitation_phase, synthesize_arma

FS = 24000


def _identity_schedule(track):
    return ScaleSchedule.constant(len(track.values), 1.0, 1.0, track.voiced)


# --- schedules -------------------------------------------------------------

def test_schedule_validation():
    with pytest.raises(ModificationError):
        ScaleSchedule(np.array([1.0, -1.0]), np.ones(2), np.ones(2, bool))
    with pytest.raises(ModificationError):
        ScaleSchedule(np.ones(2), np.array([1.0, 0.0]), np.ones(2, bool))
    with pytest.raises(ModificationError):
        ScaleSchedule(np.ones(3), np.ones(2), np.ones(2, bool))


def test_schedule_from_breakpoints():
    grid = make_grid(0.02, 0.005, 0.010)
    sched = ScaleSchedule.from_breakpoints([0.0, 0.02], [1.0, 2.0], [1.0, 1.0],
                                           grid, np.ones(len(grid), bool))
    np.testing.assert_allclose(sched.betas, [1.0, 1.25, 1.5, 1.75, 2.0])
    np.testing.assert_allclose(sched.rhos, 1.0)


def test_load_schedule(tmp_path):
    grid = make_grid(0.01, 0.005, 0.010)
    path = tmp_path / "sched.txt"
    path.write_text("# comment\n0.0 1.0 1.0\n0.01 2.0 1.5\n")
    sched = load_schedule(path, grid, np.ones(len(grid), bool))
    np.testing.assert_allclose(sched.betas, [1.0, 1.5, 2.0])
    np.testing.assert_allclose(sched.rhos, [1.0, 1.25, 1.5])
    bad = tmp_path / "bad.txt"
    bad.write_text("0.0 1.0\n")
    with pytest.raises(ModificationError):
        load_schedule(bad, grid, np.ones(len(grid), bool))
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    with pytest.raises(ModificationError):
        load_schedule(empty, grid, np.ones(len(grid), bool))


# --- scaled times and frequencies ------------------------------------------

def test_scaled_times_identity_and_double():
    grid = make_grid(0.02, 0.005, 0.010)
    np.testing.assert_allclose(scaled_times(grid, np.ones(len(grid))),
                               grid.centers, atol=1e-15)
    np.testing.assert_allclose(scaled_times(grid, np.full(len(grid), 2.0)),
                               0.01 * np.arange(len(grid)), atol=1e-15)


def test_scaled_times_prefix_sum_oracle():
    grid = make_grid(0.01, 0.005, 0.010)
    out = scaled_times(grid, np.array([1.0, 2.0, 1.0]))
    np.testing.assert_allclose(out, [0.0, 0.01, 0.015], atol=1e-15)
    with pytest.raises(ModificationError):
        scaled_times(grid, np.array([1.0, 0.0, 1.0]))


def test_scaled_freqs():
    f = np.array([[100.0, 200.0], [150.0, 300.0]])
    vuv = np.array([True, True])
    v, uv = scaled_freqs(f, np.array([1.0, 1.0]), vuv, FS)
    np.testing.assert_array_equal(v, f)
    np.testing.assert_array_equal(uv, f)
    v, uv = scaled_freqs(f, np.full(2, np.sqrt(2)), vuv, FS)
    np.testing.assert_allclose(v, np.sqrt(2) * f)
    np.testing.assert_array_equal(uv, f)


# --- bank amplitudes and phases --------------------------------------------

def test_modified_amplitudes_identity_matches_synthesis(vowel_data):
    _, _, cascade, track = vowel_data
    sched = _identity_schedule(track)
    freqs, counts = harmonic_grid(track, FS)
    v, uv = scaled_freqs(freqs, sched.rhos, sched.vuv, FS)
    amps_v, amps_uv, flags = modified_amplitudes(cascade, sched, v, uv, counts)
    assert np.all(flags == 0)
    np.testing.assert_array_equal(amps_uv, 0.0)  # all frames voiced
    for l in (0, 50, 100):
        env = sample_harmonics(cascade.frames[l], freqs[l], FS)
        np.testing.assert_allclose(amps_v[l, :counts[l]],
                                   env.magnitudes[:counts[l]], rtol=1e-12)


def test_modified_amplitudes_unvoiced_masking(vowel_data):
    _, _, cascade, track = vowel_data
    vuv = track.voiced.copy()
    vuv[:10] = False
    sched = ScaleSchedule.constant(len(vuv), 1.0, 1.0, vuv)
    freqs, counts = harmonic_grid(track, FS)
    v, uv = scaled_freqs(freqs, sched.rhos, sched.vuv, FS)
    amps_v, amps_uv, _ = modified_amplitudes(cascade, sched, v, uv, counts)
    np.testing.assert_array_equal(amps_v[:10], 0.0)
    assert amps_uv[:10].max() > 0
    # mask partition: one bank is all-zero at every frame
    for l in range(len(vuv)):
        assert amps_v[l].max() == 0.0 or amps_uv[l].max() == 0.0


def test_modified_amplitudes_flat_envelope_power():
    """Doubling pitch halves K; the gain normalization keeps the power sum."""
    from quasivoc.arma import ArmaCascade, CascadeFrame
    grid = make_grid(0.01, 0.005, 0.010)
    L = len(grid)
    frames = [CascadeFrame(1.0, []) for _ in range(L)]
    cascade = ArmaCascade(grid, frames, (0, 0, 1), FS)
    track = F0Track(grid, np.full(L, 200.0))
    sched = ScaleSchedule.constant(L, 1.0, 2.0, track.voiced)
    freqs, counts = harmonic_grid(track, FS)
    v, uv = scaled_freqs(freqs, sched.rhos, sched.vuv, FS)
    amps_v, _, _ = modified_amplitudes(cascade, sched, v, uv, counts)
    p_orig = np.sum(2 * np.ones(counts[0]) ** 2)
    p_mod = np.sum(2 * amps_v[0] ** 2)
    assert abs(p_mod - p_orig) / p_orig < 0.01
    live = amps_v[0][amps_v[0] > 0]
    np.testing.assert_allclose(live, np.sqrt(counts[0] / live.size), rtol=1e-12)


def test_modified_amplitudes_all_aliased_flagged():
    from quasivoc.arma import ArmaCascade, CascadeFrame
    grid = make_grid(0.005, 0.005, 0.010)
    frames = [CascadeFrame(1.0, []) for _ in range(2)]
    cascade = ArmaCascade(grid, frames, (0, 0, 1), FS)
    sched = ScaleSchedule.constant(2, 1.0, 1.0, np.ones(2, bool))
    v = np.full((2, 3), 13000.0)  # everything beyond Nyquist
    uv = np.full((2, 3), 100.0)
    amps_v, _, flags = modified_amplitudes(cascade, sched, v, uv,
                                           np.full(2, 3, dtype=np.int64))
    assert np.all(flags == 1)
    np.testing.assert_array_equal(amps_v, 0.0)


def test_modified_phases_identity(vowel_data):
    _, _, cascade, track = vowel_data
    from quasivoc.arma import ArmaCascade, CascadeFrame
    grid = cascade.grid
    L = len(grid)
    ident = ArmaCascade(grid, [CascadeFrame(1.0, []) for _ in range(L)],
                        (0, 0, 1), FS)
    sched = _identity_schedule(track)
    freqs, _ = harmonic_grid(track, FS)
    out = modified_phases(ident, sched, freqs)
    np.testing.assert_allclose(out, excitation_phase(freqs, grid), atol=1e-12)


def test_modified_phases_beta_doubles_increments():
    from quasivoc.arma import ArmaCascade, CascadeFrame
    grid = make_grid(0.02, 0.005, 0.010)
    L = len(grid)
    ident = ArmaCascade(grid, [CascadeFrame(1.0, []) for _ in range(L)],
                        (0, 0, 1), FS)
    sched = ScaleSchedule.constant(L, 2.0, 1.0, np.ones(L, bool))
    f = np.full((L, 1), 100.0)
    out = modified_phases(ident, sched, f)
    base = excitation_phase(f, grid)
    np.testing.assert_allclose(np.diff(out, axis=0), 2 * np.diff(base, axis=0),
                               atol=1e-12)


def test_modified_phases_composition_oracle(vowel_data):
    _, _, cascade, track = vowel_data
    L = cascade.n_frames
    rng = np.random.default_rng(19)
    betas = rng.uniform(0.5, 2.0, L)
    sched = ScaleSchedule(betas, np.full(L, 1.3), track.voiced)
    freqs, _ = harmonic_grid(track, FS)
    f = 1.3 * freqs
    out = modified_phases(cascade, sched, f)
    dt = np.diff(cascade.grid.centers)
    phi = np.zeros_like(f)
    for l in range(1, L):
        phi[l] = phi[l - 1] + np.pi * (f[l - 1] + f[l]) * betas[l] * dt[l - 1]
    for l in (0, 77, L - 1):
        safe = np.minimum(f[l], FS / 2 - 50.0)
        d = sample_harmonics(cascade.frames[l], safe, FS).phase_delays
        err = np.angle(np.exp(1j * (out[l] - phi[l] - d)))
        np.testing.assert_allclose(err, 0.0, atol=1e-8)


# --- full pipeline ---------------------------------------------------------

def test_modify_identity_reproduces_synthesis(vowel_data):
    _, _, cascade, track = vowel_data
    plain = synthesize_arma(cascade, track)
    out = modify(cascade, track, _identity_schedule(track))
    assert len(out) == len(plain)
    np.testing.assert_allclose(out.samples, plain.samples, atol=1e-9)


def test_modify_beta_doubles_duration(vowel_data):
    _, _, cascade, track = vowel_data
    sched = ScaleSchedule.constant(cascade.n_frames, 2.0, 1.0, track.voiced)
    plain = synthesize_arma(cascade, track)
    out = modify(cascade, track, sched)
    assert abs(out.duration - 2 * plain.duration) <= cascade.grid.frame_shift


def test_modify_rho_doubles_pitch(vowel_data):
    from quasivoc.qhm import detect_f0
    _, _, cascade, track = vowel_data
    sched = ScaleSchedule.constant(cascade.n_frames, 1.0, 2.0, track.voiced)
    out = modify(cascade, track, sched)
    grid = make_grid(out.duration - 1.0 / FS, 0.005, 0.010)
    got = detect_f0(out, grid)
    voiced = got.values[got.voiced][3:-3]
    assert voiced.size > 0
    assert np.all(np.abs(voiced - 300.0) / 300.0 <= 0.02)


def test_modify_leaves_cascade_untouched(vowel_data):
    _, _, cascade, track = vowel_data
    w = np.linspace(0.01, 3.0, 50)
    before = cascade_response(cascade.frames[0], w).copy()
    modify(cascade, track,
           ScaleSchedule.constant(cascade.n_frames, 1.7, 1.4, track.voiced))
    after = cascade_response(cascade.frames[0], w)
    np.testing.assert_array_equal(before, after)


def test_modify_grid_mismatch(vowel_data):
    from quasivoc.signals import SignalError
    _, _, cascade, track = vowel_data
    sched = ScaleSchedule.constant(3, 1.0, 1.0, np.ones(3, bool))
    with pytest.raises(SignalError):
        modify(cascade, track, sched)
