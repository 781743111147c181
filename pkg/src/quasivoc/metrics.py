"""Objective evaluation: V/UV rate, log-f0 RMSE, MCD, SNR, RTF."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict

import numpy as np
from scipy.fft import dct, rfft

from .qhm import F0Track
from .signals import FrameGrid, SignalBuffer, SignalError, grid_window

LOG_FLOOR = 1e-10
SNR_CAP_DB = 120.0
N_MEL_FILTERS = 40
N_CEPSTRA = 24


class MetricError(Exception):
    """Raised for incompatible metric inputs."""


@dataclass
class MetricReport:
    vuv_rate: float | None = None
    f0_rmse: float | None = None
    mcd: float | None = None
    snr: float | None = None
    rtf_analysis: float | None = None
    rtf_synthesis: float | None = None
    rtf_overall: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_table(self) -> str:
        rows = [("V/UV rate [%]", self.vuv_rate), ("f0 RMSE [log-Hz]", self.f0_rmse),
                ("MCD [dB]", self.mcd), ("SNR [dB]", self.snr),
                ("RTF analysis", self.rtf_analysis),
                ("RTF synthesis", self.rtf_synthesis),
                ("RTF overall", self.rtf_overall)]
        width = max(len(name) for name, _ in rows)
        lines = []
        for name, value in rows:
            shown = "-" if value is None else f"{value:.6g}"
            lines.append(f"{name:<{width}}  {shown}")
        return "\n".join(lines)


def vuv_rate(gen: F0Track, ref: F0Track) -> float:
    """Percent of frames whose voiced flags disagree."""
    if len(gen.values) != len(ref.values):
        raise MetricError("track lengths differ")
    if len(gen.values) == 0:
        raise MetricError("empty tracks")
    return 100.0 * float(np.mean(gen.voiced != ref.voiced))


def f0_rmse(gen: F0Track, ref: F0Track, rhos=None) -> float | None:
    """RMSE of log f0 over frames voiced in both tracks; None if no overlap.

    rhos rescales the reference per frame (pitch-modification evaluation);
    identity when omitted.
    """
    if len(gen.values) != len(ref.values):
        raise MetricError("track lengths differ")
    rho = np.ones(len(ref.values)) if rhos is None else np.asarray(rhos, dtype=np.float64)
    both = gen.voiced & ref.voiced
    if not np.any(both):
        return None
    d = np.log(gen.values[both]) - np.log(rho[both] * ref.values[both])
    return float(np.sqrt(np.mean(d ** 2)))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters from 0 Hz to Nyquist, (filters, bins)."""
    nyq = sample_rate / 2.0
    mel_pts = np.linspace(0.0, _hz_to_mel(nyq), n_filters + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bins = np.linspace(0.0, nyq, n_fft // 2 + 1)
    fb = np.zeros((n_filters, bins.size))
    for i in range(n_filters):
        lo, mid, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (bins - lo) / max(mid - lo, 1e-12)
        down = (hi - bins) / max(hi - mid, 1e-12)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_cepstrum(buffer: SignalBuffer, grid: FrameGrid,
                 n_coeffs: int = N_CEPSTRA,
                 n_filters: int = N_MEL_FILTERS) -> np.ndarray:
    """Per-frame mel-cepstral coefficients d = 1..n_coeffs.

    Windowed DFT magnitude -> triangular mel energies -> log (floored)
    -> DCT-II; the 0th (energy) coefficient is dropped.
    """
    fs = buffer.sample_rate
    window = grid_window(grid, fs)
    n_win = window.size
    half = (n_win - 1) // 2
    n_fft = 1
    while n_fft < n_win:
        n_fft *= 2
    fb = mel_filterbank(n_filters, n_fft, fs)
    x = buffer.samples
    out = np.zeros((len(grid), n_coeffs))
    for l, tc in enumerate(grid.centers):
        c = int(round(tc * fs))
        lo, hi = c - half, c + half + 1
        frame = np.zeros(n_win)
        s_lo, s_hi = max(0, lo), min(len(x), hi)
        if s_hi > s_lo:
            frame[s_lo - lo:s_hi - lo] = x[s_lo:s_hi]
        mag = np.abs(rfft(frame * window, n=n_fft))
        energies = np.maximum(fb @ mag, LOG_FLOOR)
        ceps = dct(np.log(energies), type=2, norm="ortho")
        out[l] = ceps[1:n_coeffs + 1]
    return out


def mcd(gen_coeffs: np.ndarray, ref_coeffs: np.ndarray) -> float:
    """Mel-cepstral distortion in dB, averaged over index-paired frames."""
    g = np.atleast_2d(np.asarray(gen_coeffs, dtype=np.float64))
    r = np.atleast_2d(np.asarray(ref_coeffs, dtype=np.float64))
    if g.shape != r.shape:
        raise MetricError("coefficient shapes differ")
    per_frame = (10.0 * np.sqrt(2.0) / np.log(10.0)) * np.sqrt(np.sum((g - r) ** 2, axis=1))
    return float(np.mean(per_frame))


def snr(gen: SignalBuffer, ref: SignalBuffer) -> float:
    """Reconstruction SNR in dB, capped at 120 dB for identical signals."""
    if len(gen) != len(ref):
        raise MetricError("signal lengths differ")
    ref_energy = float(np.sum(ref.samples ** 2))
    if ref_energy == 0:
        raise MetricError("zero reference signal")
    err = float(np.sum((ref.samples - gen.samples) ** 2))
    if err == 0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(ref_energy / err), SNR_CAP_DB)


def rtf(work, audio_duration: float, runs: int = 5, warmup: int = 1) -> float:
    """Median wall-clock/audio-duration ratio of a pipeline stage.

    work is a zero-argument callable; one warmup call precedes timing.
    """
    if audio_duration <= 0:
        raise MetricError("audio duration must be positive")
    for _ in range(warmup):
        work()
    times = []
    for _ in range(max(runs, 1)):
        t0 = time.perf_counter()
        work()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) / audio_duration
