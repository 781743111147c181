"""Core signal types, framing, windows, interpolation, WAV I/O.

Everything here is a pure function over immutable inputs; all sample
amplitudes are float64 internally.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.io import wavfile


class SignalError(Exception):
    """Raised for invalid signals or unsupported audio files."""


@dataclass
class SignalBuffer:
    """Mono waveform with its sample rate.

    samples are dimensionless amplitudes, nominally in [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise SignalError("SignalBuffer requires a 1-D sample array")
        if self.sample_rate <= 0:
            raise SignalError("sample_rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise SignalError("samples must be finite")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class FrameGrid:
    """Equally spaced frame centers with a shared analysis window.

    centers are in seconds, strictly increasing, spaced by frame_shift.
    half_window is half the window span in seconds; window_kind is one of
    'hann', 'hamming', 'gauss'. gauss_sigma is in samples.
    """

    centers: np.ndarray
    frame_shift: float
    half_window: float
    window_kind: str = "hann"
    gauss_sigma: float = 0.0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.frame_shift <= 0 or self.half_window <= 0:
            raise SignalError("frame_shift and half_window must be positive")
        if len(self.centers) > 1:
            steps = np.diff(self.centers)
            if np.any(steps <= 0):
                raise SignalError("frame centers must be strictly increasing")

    def __len__(self) -> int:
        return len(self.centers)

    def window_samples(self, sample_rate: int) -> int:
        """Odd window length in samples covering [-half_window, half_window]."""
        half = int(round(self.half_window * sample_rate))
        n = 2 * half + 1
        if n < 3:
            raise SignalError("window degenerate: fewer than 3 samples")
        return n


def make_grid(duration: float, frame_shift: float, half_window: float,
              window_kind: str = "hann", gauss_sigma: float = 0.0) -> FrameGrid:
    """Frame centers covering [0, duration] at frame_shift spacing."""
    n = int(np.floor(duration / frame_shift)) + 1
    centers = np.arange(n) * frame_shift
    return FrameGrid(centers, frame_shift, half_window, window_kind, gauss_sigma)


@dataclass
class Spectrogram:
    """Real-valued time-frequency matrix indexed by (frame, bin)."""

    values: np.ndarray
    bin_frequencies: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.bin_frequencies = np.asarray(self.bin_frequencies, dtype=np.float64)
        if self.values.ndim != 2:
            raise SignalError("Spectrogram values must be 2-D")
        if self.values.shape[1] != len(self.bin_frequencies):
            raise SignalError("bin count mismatch")


def read_wav(path) -> SignalBuffer:
    """Read a RIFF/WAVE file into a mono float64 buffer scaled to [-1, 1].

    Multichannel input is averaged to mono. PCM-16, PCM-32 and IEEE
    float-32/64 are accepted.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise SignalError(f"cannot read WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise SignalError(f"zero-length audio: {path}")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise SignalError(f"unsupported WAV sample format: {data.dtype}")
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    return SignalBuffer(np.asarray(samples, dtype=np.float64), int(rate))


def write_wav(buffer: SignalBuffer, path, fmt: str = "float32") -> int:
    """Write a buffer to disk; returns the number of hard-clipped samples.

    fmt 'float32' (default) is lossless for in-range data; 'pcm16'
    quantizes. Out-of-range samples are clipped to [-1, 1] with a warning.
    """
    x = buffer.samples
    n_clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
    if n_clipped:
        warnings.warn(f"write_wav: hard-clipped {n_clipped} out-of-range samples")
        x = np.clip(x, -1.0, 1.0)
    if fmt == "float32":
        wavfile.write(path, buffer.sample_rate, x.astype(np.float32))
    elif fmt == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, buffer.sample_rate, q)
    else:
        raise SignalError(f"unsupported output format: {fmt}")
    return n_clipped


def make_window(kind: str, length: int, gauss_sigma: float = 0.0) -> np.ndarray:
    """Symmetric analysis window of the given sample length.

    kind is 'hann', 'hamming', or 'gauss' (gauss_sigma in samples).
    """
    if length < 3:
        raise SignalError("window length must be >= 3")
    n = np.arange(length, dtype=np.float64)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / (length - 1))
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / (length - 1))
    if kind == "gauss":
        if gauss_sigma <= 0:
            raise SignalError("gauss window requires sigma > 0")
        c = (length - 1) / 2.0
        return np.exp(-0.5 * ((n - c) / gauss_sigma) ** 2)
    raise SignalError(f"unknown window kind: {kind}")


def grid_window(grid: FrameGrid, sample_rate: int) -> np.ndarray:
    """The grid's analysis window realized at the given sample rate."""
    n = grid.window_samples(sample_rate)
    return make_window(grid.window_kind, n, grid.gauss_sigma)


def linear_interp(knot_times, knot_values, query_times) -> np.ndarray:
    """Piecewise-linear interpolation, exact at knots, endpoint hold outside."""
    t = np.asarray(knot_times, dtype=np.float64)
    v = np.asarray(knot_values, dtype=np.float64)
    if t.size < 1:
        raise SignalError("linear_interp requires at least 1 knot")
    q = np.asarray(query_times, dtype=np.float64)
    if t.size == 1:
        return np.full(q.shape, v[0])
    return np.interp(q, t, v)


def cubic_interp(knot_times, knot_values, query_times) -> np.ndarray:
    """Monotone-preserving piecewise-cubic Hermite interpolation.

    Exact at knots, C1 between them, reproduces affine data exactly, and
    never overshoots monotone runs (no spurious frequency wobble when
    applied to unwrapped phase). Queries outside the knot span hold the
    endpoint values.
    """
    t = np.asarray(knot_times, dtype=np.float64)
    v = np.asarray(knot_values, dtype=np.float64)
    if t.size < 2:
        raise SignalError("cubic_interp requires at least 2 knots")
    q = np.clip(np.asarray(query_times, dtype=np.float64), t[0], t[-1])
    return PchipInterpolator(t, v)(q)


def pseudo_stft(frame_freqs: np.ndarray, sigma: float,
                bin_frequencies: np.ndarray) -> Spectrogram:
    """Gaussian-bump spectrogram of unit-amplitude components.

    frame_freqs is (frames, components) in Hz; each component contributes
    a Gaussian bump at +-2*pi*f with width set by sigma (seconds). The
    bin axis is in rad/s.
    """
    if sigma <= 0:
        raise SignalError("sigma must be positive")
    f = np.asarray(frame_freqs, dtype=np.float64)
    if f.ndim == 1:
        f = f[None, :]
    omega = np.asarray(bin_frequencies, dtype=np.float64)
    # components at +-f: (frames, 2K) stacked
    both = np.concatenate([f, -f], axis=1)
    d = omega[None, None, :] - 2 * np.pi * both[:, :, None]
    values = np.exp(-0.5 * (sigma * d) ** 2).sum(axis=1)
    return Spectrogram(values, omega)
