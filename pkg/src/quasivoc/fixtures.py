"""Deterministic test-signal generators with ground-truth sidecars.

Every generator returns (SignalBuffer, sidecar dict); the sidecar holds
the exact generator parameters so tests can score reconstructions
against known truth.
"""
from __future__ import annotations

import numpy as np

from .arma import ArmaCascade, ArmaSection, CascadeFrame
from .signals import SignalBuffer, SignalError, make_grid


def tone(freq: float, duration: float, sample_rate: int,
         amplitude: float = 0.5, phase: float = 0.0):
    """Single cosine."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    x = amplitude * np.cos(2 * np.pi * freq * t + phase)
    sidecar = {"kind": "tone", "freq": freq, "amplitude": amplitude,
               "phase": phase, "duration": duration, "sample_rate": sample_rate}
    return SignalBuffer(x, sample_rate), sidecar


def multisine(f0: float, n_harmonics: int, duration: float, sample_rate: int,
              amplitudes=None, phases=None, seed: int = 0):
    """Harmonic stack at k*f0 with given or seeded amplitudes/phases."""
    rng = np.random.default_rng(seed)
    if amplitudes is None:
        amplitudes = 0.3 / np.arange(1, n_harmonics + 1)
    if phases is None:
        phases = rng.uniform(-np.pi, np.pi, n_harmonics)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    x = np.zeros_like(t)
    for k in range(n_harmonics):
        x += amplitudes[k] * np.cos(2 * np.pi * (k + 1) * f0 * t + phases[k])
    sidecar = {"kind": "multisine", "f0": f0, "n_harmonics": n_harmonics,
               "amplitudes": amplitudes.tolist(), "phases": phases.tolist(),
               "duration": duration, "sample_rate": sample_rate}
    return SignalBuffer(x, sample_rate), sidecar


def chirp(f_start: float, f_end: float, duration: float, sample_rate: int,
          n_harmonics: int = 1, amplitude: float = 0.4):
    """Linear chirp of the fundamental; harmonics scale proportionally."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    f0 = f_start + (f_end - f_start) * t / duration
    phase0 = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros_like(t)
    for k in range(1, n_harmonics + 1):
        x += (amplitude / k) * np.cos(k * phase0)
    sidecar = {"kind": "chirp", "f_start": f_start, "f_end": f_end,
               "n_harmonics": n_harmonics, "amplitude": amplitude,
               "duration": duration, "sample_rate": sample_rate}
    return SignalBuffer(x, sample_rate), sidecar


def am_tone(freq: float, mod_freq: float, mod_depth: float, duration: float,
            sample_rate: int, amplitude: float = 0.4):
    """Amplitude-modulated cosine: A*(1 + depth*cos(2*pi*fm*t))*cos(...)."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    env = 1.0 + mod_depth * np.cos(2 * np.pi * mod_freq * t)
    x = amplitude * env * np.cos(2 * np.pi * freq * t)
    sidecar = {"kind": "am", "freq": freq, "mod_freq": mod_freq,
               "mod_depth": mod_depth, "amplitude": amplitude,
               "duration": duration, "sample_rate": sample_rate}
    return SignalBuffer(x, sample_rate), sidecar


def vowel_cascade(sample_rate: int, n_frames: int, frame_shift: float,
                  half_window: float, gain: float = 0.05,
                  orders=(16, 16, 2)) -> ArmaCascade:
    """Time-invariant vowel-like envelope: resonant poles plus mild zeros.

    Two sections, each a pair of resonances, giving a smooth formant-ish
    magnitude with nontrivial phase delay.
    """
    p, q, r = orders
    p_sec, q_sec = p // r, q // r

    def resonant_ar(freqs_hz, radii):
        poly = np.array([1.0])
        for f, rad in zip(freqs_hz, radii):
            w = 2 * np.pi * f / sample_rate
            poly = np.convolve(poly, [1.0, -2 * rad * np.cos(w), rad ** 2])
        out = np.zeros(p_sec)
        out[:poly.size - 1] = poly[1:]
        return out

    sec1 = ArmaSection(resonant_ar([500, 1500], [0.92, 0.90]), np.zeros(q_sec))
    ma2 = np.zeros(q_sec)
    ma2[0] = 0.3
    sec2 = ArmaSection(resonant_ar([2500, 3500], [0.88, 0.85]), ma2)
    frames = [CascadeFrame(gain, [sec1, sec2]) for _ in range(n_frames)]
    grid = make_grid((n_frames - 1) * frame_shift, frame_shift, half_window)
    return ArmaCascade(grid, frames, orders, sample_rate)


def vowel(f0: float, duration: float, sample_rate: int, frame_shift: float = 0.005,
          half_window: float = 0.010, peak: float = 0.5):
    """Synthetic vowel: a known envelope cascade driven by a flat f0 track.

    Generated through the harmonic synthesis pipeline, so the sidecar's
    cascade is the exact generator of the waveform. The gain is chosen so
    the waveform peak equals `peak` (synthesis is linear in the gain).
    """
    from .qhm import F0Track
    from .synth import synthesize_arma
    n_frames = int(np.floor(duration / frame_shift)) + 1
    cascade = vowel_cascade(sample_rate, n_frames, frame_shift, half_window, 1.0)
    track = F0Track(cascade.grid, np.full(n_frames, f0))
    buf = synthesize_arma(cascade, track, sample_rate)
    scale = peak / np.abs(buf.samples).max()
    gain = scale
    cascade = vowel_cascade(sample_rate, n_frames, frame_shift, half_window, gain)
    buf = SignalBuffer(buf.samples * scale, sample_rate)
    sidecar = {"kind": "vowel", "f0": f0, "duration": duration,
               "sample_rate": sample_rate, "frame_shift": frame_shift,
               "half_window": half_window, "gain": gain, "peak": peak,
               "orders": list(cascade.orders)}
    return buf, sidecar, cascade, track


def noise(duration: float, sample_rate: int, amplitude: float = 0.1,
          seed: int = 0):
    """Seeded white Gaussian noise."""
    rng = np.random.default_rng(seed)
    x = amplitude * rng.standard_normal(int(round(duration * sample_rate)))
    sidecar = {"kind": "noise", "amplitude": amplitude, "seed": seed,
               "duration": duration, "sample_rate": sample_rate}
    return SignalBuffer(x, sample_rate), sidecar


def generate(kind: str, **params):
    """Dispatch by fixture kind; returns (buffer, sidecar)."""
    if kind == "tone":
        return tone(**params)
    if kind == "multisine":
        return multisine(**params)
    if kind == "chirp":
        return chirp(**params)
    if kind == "am":
        return am_tone(**params)
    if kind == "vowel":
        buf, sidecar, _, _ = vowel(**params)
        return buf, sidecar
    if kind == "noise":
        return noise(**params)
    raise SignalError(f"unknown fixture kind: {kind}")
