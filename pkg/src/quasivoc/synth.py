"""Oscillator-bank synthesis from framewise parameters.

Framewise unwrapped phases are cubic-interpolated and amplitudes
linear-interpolated to audio rate, then components are summed as
2*A_k(t)*cos(phi_k(t)) in ascending k (deterministic, bit-reproducible).
"""
from __future__ import annotations

import numpy as np

from .arma import ArmaCascade, sample_harmonics
from .qhm import F0Track, HarmonicSet, harmonic_grid
from .signals import FrameGrid, SignalBuffer, SignalError, cubic_interp, linear_interp

NYQUIST_GUARD = 50.0


def excitation_phase(frame_freqs: np.ndarray, grid: FrameGrid) -> np.ndarray:
    """Trapezoid-accumulated phase from framewise component frequencies.

    phi[l] = pi * sum_i (f[i-1] + f[i]) * (t_i - t_{i-1}), phi[0] = 0.
    frame_freqs is (frames, K); the result has the same shape.
    """
    f = np.atleast_2d(np.asarray(frame_freqs, dtype=np.float64))
    if not np.all(np.isfinite(f)):
        raise SignalError("frequencies must be finite")
    dt = np.diff(grid.centers)
    inc = np.pi * (f[:-1] + f[1:]) * dt[:, None]
    phi = np.zeros_like(f)
    np.cumsum(inc, axis=0, out=phi[1:])
    return phi


def compensated_phase(excitation: np.ndarray, compensations: np.ndarray) -> np.ndarray:
    """Excitation phase plus the running sum of per-frame compensations."""
    comp = np.atleast_2d(np.asarray(compensations, dtype=np.float64))
    if np.any(np.abs(comp) > np.pi + 1e-12):
        raise SignalError("phase compensations must lie in [-pi, pi]")
    return np.atleast_2d(excitation) + np.cumsum(comp, axis=0)


def delayed_phase(excitation: np.ndarray, cascade: ArmaCascade,
                  frame_freqs: np.ndarray) -> np.ndarray:
    """Excitation phase plus the cascade's summed per-section phase delay.

    Per-section principal angles can flip branch (jump by 2*pi) between
    frames when a pole angle sits near +-pi, so the delay track is
    unwrapped along the frame axis per component before it is added;
    the result is a continuous phase track safe to interpolate.
    """
    f = np.atleast_2d(np.asarray(frame_freqs, dtype=np.float64))
    exc = np.atleast_2d(excitation)
    delays = np.empty_like(exc)
    for l in range(exc.shape[0]):
        env = sample_harmonics(cascade.frames[l], f[l], cascade.sample_rate)
        delays[l] = env.phase_delays
    if delays.shape[0] > 1:
        delays = np.unwrap(delays, axis=0)
    return exc + delays


def mute_aliasing(amplitudes: np.ndarray, frame_freqs: np.ndarray,
                  sample_rate: int, guard: float = NYQUIST_GUARD) -> np.ndarray:
    """Zero the amplitude of components that cross Nyquist - guard."""
    amps = np.array(amplitudes, dtype=np.float64, copy=True)
    amps[np.asarray(frame_freqs) > sample_rate / 2 - guard] = 0.0
    return amps


def render(amplitudes: np.ndarray, phases: np.ndarray, grid: FrameGrid,
           sample_rate: int) -> SignalBuffer:
    """Additive rendering of framewise tracks over [t_0, t_L].

    amplitudes and phases are (frames, K); phases must be unwrapped.
    Components are summed in ascending k; the conjugate-symmetric pair is
    folded into 2*A*cos(phi) and the DC term is omitted.
    """
    amps = np.atleast_2d(np.asarray(amplitudes, dtype=np.float64))
    phis = np.atleast_2d(np.asarray(phases, dtype=np.float64))
    if amps.shape != phis.shape or amps.shape[0] != len(grid):
        raise SignalError("track shapes inconsistent with the grid")
    L, K = amps.shape
    if L == 0:
        return SignalBuffer(np.zeros(0), sample_rate)
    t0, t_end = grid.centers[0], grid.centers[-1]
    n = int(round((t_end - t0) * sample_rate)) + 1
    tt = t0 + np.arange(n) / sample_rate
    out = np.zeros(n)
    if L == 1:
        for k in range(K):
            out += 2 * amps[0, k] * np.cos(phis[0, k])
        return SignalBuffer(out, sample_rate)
    for k in range(K):
        phi = cubic_interp(grid.centers, phis[:, k], tt)
        a = linear_interp(grid.centers, amps[:, k], tt)
        out += 2 * a * np.cos(phi)
    return SignalBuffer(out, sample_rate)


def synthesize_qhm(hset: HarmonicSet, sample_rate: int | None = None) -> SignalBuffer:
    """Resynthesis from a harmonic set via compensated excitation phase."""
    fs = sample_rate or hset.sample_rate
    if hset.n_frames == 0:
        return SignalBuffer(np.zeros(0), fs)
    exc = excitation_phase(hset.frequencies, hset.grid)
    phases = compensated_phase(exc, hset.compensations)
    amps = mute_aliasing(hset.amplitudes, hset.frequencies, fs)
    return render(amps, phases, hset.grid, fs)


def synthesize_arma(cascade: ArmaCascade, f0_track: F0Track,
                    sample_rate: int | None = None, guard: float = NYQUIST_GUARD,
                    unvoiced_f0: float = 100.0,
                    max_components: int | None = None) -> SignalBuffer:
    """Resynthesis from an envelope cascade and an f0 track.

    Component frequencies are the harmonic grid of the track (dense
    synthetic grid on unvoiced frames); amplitudes come from the
    envelope magnitude, phases from excitation plus phase delay.
    """
    fs = sample_rate or cascade.sample_rate
    if cascade.n_frames == 0:
        return SignalBuffer(np.zeros(0), fs)
    if cascade.n_frames != len(f0_track.values):
        raise SignalError("cascade and f0 track must share the frame grid")
    freqs, counts = harmonic_grid(f0_track, fs, guard, unvoiced_f0, max_components)
    L, K = freqs.shape
    amps = np.zeros((L, K))
    for l in range(L):
        env = sample_harmonics(cascade.frames[l], freqs[l], fs)
        amps[l] = env.magnitudes
        amps[l, counts[l]:] = 0.0
    exc = excitation_phase(freqs, cascade.grid)
    phases = delayed_phase(exc, cascade, freqs)
    amps = mute_aliasing(amps, freqs, fs, guard)
    return render(amps, phases, cascade.grid, fs)
