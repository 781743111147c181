"""Framewise quasi-harmonic analysis.

Least-squares estimation of complex amplitudes and slopes per component,
frequency correction from the complex slope, adaptive refinement with a
nonstationary phase basis, and an autocorrelation fallback pitch detector.

The real-signal convention halves the unknowns: components are solved for
k = 1..K with the conjugate pair at -f implied, i.e. the model is
x(t) = sum_k 2*Re[(a_k + t*b_k) * exp(i*2*pi*f_k*t)].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import cho_factor, cho_solve

from .signals import FrameGrid, SignalBuffer, SignalError, grid_window, linear_interp

AMPLITUDE_FLOOR = 1e-7
COND_THRESHOLD = 1e10
RIDGE_SCALE = 1e-8


class AnalysisError(Exception):
    """Raised when a frame cannot be analyzed."""


@dataclass
class QhmFrameParams:
    """LS solution of one frame: complex amplitudes, slopes, frequencies."""

    a: np.ndarray          # complex amplitude per component
    b: np.ndarray          # complex slope per component (1/s)
    f_hat: np.ndarray      # seed frequency per component (Hz)
    frame_index: int = 0
    ill_conditioned: bool = False

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.f_hat = np.asarray(self.f_hat, dtype=np.float64)


@dataclass
class HarmonicSet:
    """Per-frame component frequencies, amplitudes, phases, compensations.

    All arrays are (frames, K). Phases are the wrapped framewise values in
    (-pi, pi]; compensations lie in [-pi, pi] and accumulate over frames
    during synthesis.
    """

    grid: FrameGrid
    frequencies: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    compensations: np.ndarray
    sample_rate: int
    flags: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frequencies = np.atleast_2d(np.asarray(self.frequencies, dtype=np.float64))
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=np.float64))
        self.phases = np.atleast_2d(np.asarray(self.phases, dtype=np.float64))
        self.compensations = np.atleast_2d(np.asarray(self.compensations, dtype=np.float64))
        if self.flags is None:
            self.flags = np.zeros(self.frequencies.shape[0], dtype=np.int64)
        if np.any(self.amplitudes < 0):
            raise AnalysisError("amplitudes must be nonnegative")

    @property
    def n_frames(self) -> int:
        return self.frequencies.shape[0]

    @property
    def n_components(self) -> int:
        return self.frequencies.shape[1]


@dataclass
class F0Track:
    """Per-frame fundamental frequency; 0 means unvoiced."""

    grid: FrameGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise AnalysisError("f0 values must be nonnegative")

    @property
    def voiced(self) -> np.ndarray:
        return self.values > 0


def _design_matrix(t: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Real design matrix for the conjugate-pair LS system.

    Columns per component: [2cos, -2sin, 2t cos, -2t sin] so that the
    unknown vector is [Re a, Im a, Re b, Im b] stacked per component.
    """
    ang = 2 * np.pi * np.outer(t, freqs)
    c, s = np.cos(ang), np.sin(ang)
    k = freqs.size
    cols = np.empty((t.size, 4 * k))
    cols[:, 0::4] = 2 * c
    cols[:, 1::4] = -2 * s
    cols[:, 2::4] = 2 * t[:, None] * c
    cols[:, 3::4] = -2 * t[:, None] * s
    return cols


class _LsSolver:
    """Cached normal-equation solver for a fixed (freqs, window) design.

    Frames sharing the same component frequencies reuse one Cholesky
    factorization, which dominates analysis speed for steady pitch.
    """

    def __init__(self, t: np.ndarray, freqs: np.ndarray, window: np.ndarray,
                 basis: np.ndarray | None = None):
        E = _design_matrix(t, freqs) if basis is None else basis
        self.Ew = E * window[:, None]
        G = self.Ew.T @ self.Ew
        diag = np.abs(np.diag(G))
        scale = np.sqrt(np.maximum(np.outer(diag, diag), 1e-300))
        self.ill_conditioned = bool(np.linalg.cond(G / scale) > COND_THRESHOLD)
        if self.ill_conditioned:
            G = G + RIDGE_SCALE * np.trace(G) * np.eye(G.shape[0])
        self.factor = cho_factor(G)
        self.window = window

    def solve(self, frame: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, self.Ew.T @ (self.window * frame))


def qhm_ls_fit(frame_samples: np.ndarray, f_hats: np.ndarray, window: np.ndarray,
               sample_rate: int, frame_index: int = 0,
               solver: _LsSolver | None = None) -> QhmFrameParams:
    """Windowed least-squares fit of complex amplitude and slope per component.

    frame_samples must be centered on the frame (odd length, local time
    axis symmetric around 0). Requires at least 4K samples for a stable
    solution.
    """
    x = np.asarray(frame_samples, dtype=np.float64)
    f = np.asarray(f_hats, dtype=np.float64)
    k = f.size
    if x.size < 4 * k:
        raise AnalysisError(
            f"frame {frame_index}: window of {x.size} samples is below 4K={4 * k}")
    if np.any(np.abs(f) >= sample_rate / 2):
        raise AnalysisError(f"frame {frame_index}: component frequency at or above Nyquist")
    half = (x.size - 1) / 2.0
    t = (np.arange(x.size) - half) / sample_rate
    if solver is None:
        solver = _LsSolver(t, f, np.asarray(window, dtype=np.float64))
    theta = solver.solve(x)
    a = theta[0::4] + 1j * theta[1::4]
    b = theta[2::4] + 1j * theta[3::4]
    return QhmFrameParams(a, b, f, frame_index, solver.ill_conditioned)


def frequency_correction(params: QhmFrameParams) -> np.ndarray:
    """Per-component frequency offset from the complex slope.

    eta = (aR*bI - aI*bR) / (2*pi*|a|^2); components with |a| at or below
    the amplitude floor get eta = 0 (correction undefined).
    """
    a, b = params.a, params.b
    mag2 = np.abs(a) ** 2
    eta = np.zeros_like(mag2)
    ok = np.abs(a) > AMPLITUDE_FLOOR
    eta[ok] = (a.real[ok] * b.imag[ok] - a.imag[ok] * b.real[ok]) / (2 * np.pi * mag2[ok])
    return eta


def framewise_amp_phase(params: QhmFrameParams) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude and wrapped phase of each component at the frame center.

    Zero-amplitude components get phase 0 by convention.
    """
    amp = np.abs(params.a)
    phase = np.where(amp > 0, np.angle(params.a), 0.0)
    return amp, phase


def integrate_phase(inst_freq: np.ndarray, sample_rate: int,
                    phase0: float = 0.0) -> np.ndarray:
    """Cumulative-trapezoid phase from an instantaneous frequency track."""
    f = np.asarray(inst_freq, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise AnalysisError("instantaneous frequency must be finite")
    return phase0 + cumulative_trapezoid(2 * np.pi * f, dx=1.0 / sample_rate, initial=0.0)


def smooth_phase(phase_l: float, target_next: float, inst_freq: np.ndarray,
                 t_span: tuple[float, float], sample_rate: int,
                 prev_span: float | None = None) -> np.ndarray:
    """Phase over one frame matching the next frame's unwrapped target.

    Integrates the frequency track from t_l to t_{l+1} and adds a
    half-sine correction sized so the endpoint lands exactly on
    target_next + 2*pi*M, M absorbing whole turns. prev_span switches the
    sine argument to the previous frame's interval (the alternative index
    reading); the endpoint property holds either way.
    """
    t_l, t_next = t_span
    span = t_next - t_l
    if span <= 0:
        raise AnalysisError("frame bounds must be increasing")
    phi = integrate_phase(inst_freq, sample_rate, phase0=phase_l)
    err = phi[-1] - target_next
    m = np.round(err / (2 * np.pi))
    residual = (target_next + 2 * np.pi * m) - phi[-1]
    z = np.pi * residual / (2 * span)
    sine_span = span if prev_span is None else prev_span
    # analytic integral of z*sin(pi*(u - t_l)/sine_span) from t_l to t
    tt = t_l + np.arange(phi.size) / sample_rate
    corr = z * (sine_span / np.pi) * (1.0 - np.cos(np.pi * (tt - t_l) / sine_span))
    if prev_span is not None:
        # rescale so the endpoint property survives the alternative interval
        end = z * (sine_span / np.pi) * (1.0 - np.cos(np.pi * span / sine_span))
        if abs(end) > 1e-300:
            corr *= residual / end
    return phi + corr


def detect_f0(buffer: SignalBuffer, grid: FrameGrid,
              f0_range: tuple[float, float] = (50.0, 500.0),
              voicing_threshold: float = 0.45) -> F0Track:
    """Normalized-autocorrelation pitch detector with a voicing threshold.

    Per frame, the strongest normalized ACF peak inside the lag range
    gives f0; peaks below the threshold mark the frame unvoiced (0).
    """
    if len(buffer) == 0:
        raise AnalysisError("empty buffer")
    fs = buffer.sample_rate
    fmin, fmax = f0_range
    if not (0 < fmin < fmax < fs / 2):
        raise AnalysisError("f0_range must satisfy 0 < min < max < Nyquist")
    lag_min = max(2, int(np.floor(fs / fmax)))
    lag_max = int(np.ceil(fs / fmin))
    seg_len = 2 * lag_max
    x = buffer.samples
    values = np.zeros(len(grid))
    for l, tc in enumerate(grid.centers):
        c = int(round(tc * fs))
        lo, hi = c - seg_len // 2, c + seg_len // 2
        seg = x[max(0, lo):min(len(x), hi)]
        if seg.size < 2 * lag_min + 2:
            continue
        seg = seg - seg.mean()
        e0 = np.dot(seg, seg)
        if e0 <= 0:
            continue
        n = seg.size
        acf = np.correlate(seg, seg, mode="full")[n - 1:]
        # normalize by the energy of the overlapping region
        cum = np.cumsum(seg * seg)
        tail = e0 - np.concatenate(([0.0], cum[:-1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            nacf = acf / np.sqrt(e0 * np.maximum(tail, 1e-300))
        top = min(lag_max, n - 2)
        if top <= lag_min:
            continue
        window = nacf[lag_min:top + 1]
        peak = int(np.argmax(window)) + lag_min
        if nacf[peak] < voicing_threshold:
            continue
        # parabolic refinement around the peak lag
        if lag_min < peak < top:
            y0, y1, y2 = nacf[peak - 1], nacf[peak], nacf[peak + 1]
            denom = y0 - 2 * y1 + y2
            delta = 0.5 * (y0 - y2) / denom if abs(denom) > 1e-30 else 0.0
            delta = float(np.clip(delta, -0.5, 0.5))
        else:
            delta = 0.0
        f0 = fs / (peak + delta)
        if fmin <= f0 <= fmax:
            values[l] = f0
    return F0Track(grid, values)


def refine_f0(hset: HarmonicSet, track: F0Track,
              amp_floor: float = 1e-7) -> F0Track:
    """Sharpen an f0 track using the corrected harmonic frequencies.

    On voiced frames the refined value is the amplitude-squared-weighted
    mean of f_k / k over significant components; the ACF detector is
    only accurate to a fraction of a lag, and its residual bias
    accumulates as linear phase drift over long signals. Unvoiced
    frames keep 0.
    """
    if hset.n_frames != len(track.values):
        raise AnalysisError("harmonic set and track must share the grid")
    k = np.arange(1, hset.n_components + 1)
    values = np.zeros(hset.n_frames)
    for l in range(hset.n_frames):
        if track.values[l] <= 0:
            continue
        amp = hset.amplitudes[l]
        f = hset.frequencies[l]
        use = (amp > amp_floor) & (f > 0)
        if not use.any():
            values[l] = track.values[l]
            continue
        w = amp[use] ** 2
        values[l] = float(np.sum(w * f[use] / k[use]) / np.sum(w))
    return F0Track(hset.grid, values)


def _clamp_correction(eta: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Limit corrections to half the component spacing.

    Keeps components from swapping order or drifting onto a neighbor,
    which happens on near-silent components whose slope is pure noise.
    """
    if freqs.size > 1:
        bound = 0.5 * float(np.min(np.abs(np.diff(np.sort(freqs)))))
        bound = max(bound, 1e-3)
    else:
        bound = 0.5 * max(float(freqs[0]), 1.0)
    return np.clip(eta, -bound, bound)


F0_QUANTUM = 0.01


def harmonic_frequencies(f0: float, sample_rate: int, guard: float = 50.0,
                         unvoiced_f0: float = 100.0,
                         max_components: int | None = None) -> np.ndarray:
    """Component frequency seeds k*f0 below Nyquist - guard.

    Unvoiced frames (f0 == 0) use a dense synthetic grid at unvoiced_f0
    spacing so noise-like segments are still covered by quasi-harmonics.
    Seeds are quantized to F0_QUANTUM so frames with near-identical pitch
    share one frequency set (and hence one cached LS factorization); the
    per-frame frequency correction absorbs far larger seed errors than
    the quantum.
    """
    base = f0 if f0 > 0 else unvoiced_f0
    base = max(round(base / F0_QUANTUM) * F0_QUANTUM, F0_QUANTUM)
    nyq = sample_rate / 2.0
    k = int(np.floor((nyq - guard) / base))
    if max_components is not None:
        k = min(k, max_components)
    k = max(k, 1)
    return base * np.arange(1, k + 1)


def harmonic_grid(f0_track: F0Track, sample_rate: int, guard: float = 50.0,
                  unvoiced_f0: float = 100.0,
                  max_components: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame component frequency grid with a fixed component count.

    Returns (freqs, counts): freqs is (frames, K) with K the maximum the
    K rule yields on any frame; counts[l] is the number of in-band
    components on frame l. Components beyond counts[l] are parked at the
    frame's last valid frequency and meant to carry zero amplitude.
    """
    per_frame = [harmonic_frequencies(f0, sample_rate, guard, unvoiced_f0, max_components)
                 for f0 in f0_track.values]
    K = max(f.size for f in per_frame)
    L = len(per_frame)
    freqs = np.zeros((L, K))
    counts = np.zeros(L, dtype=np.int64)
    for l, f in enumerate(per_frame):
        freqs[l, :f.size] = f
        freqs[l, f.size:] = f[-1]
        counts[l] = f.size
    return freqs, counts


def _wrap(phi):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(phi), 2 * np.pi)


def compensations_from_phases(grid: FrameGrid, freqs: np.ndarray,
                              phases: np.ndarray) -> np.ndarray:
    """Per-frame phase compensations reproducing the framewise phases.

    Chains wrapped corrections so that excitation phase plus the running
    compensation sum hits each measured phase modulo 2*pi; every
    compensation lies in [-pi, pi].
    """
    from .synth import excitation_phase
    exc = excitation_phase(freqs, grid)
    comp = np.zeros_like(phases)
    running = np.zeros(phases.shape[1])
    for l in range(phases.shape[0]):
        comp[l] = _wrap(phases[l] - exc[l] - running)
        running += comp[l]
    return comp


def analyze_qhm(buffer: SignalBuffer, grid: FrameGrid, f0_track: F0Track,
                guard: float = 50.0, unvoiced_f0: float = 100.0,
                max_components: int | None = None) -> HarmonicSet:
    """One QHM pass over all frames: LS fit plus frequency correction.

    The component count K is fixed across frames (the maximum the K rule
    yields on any frame); frames whose own rule yields fewer components
    carry the extras at zero amplitude.
    """
    fs = buffer.sample_rate
    window = grid_window(grid, fs)
    n_win = window.size
    half = (n_win - 1) // 2
    t = (np.arange(n_win) - half) / fs
    seed_freqs, counts = harmonic_grid(f0_track, fs, guard, unvoiced_f0, max_components)
    L, K = seed_freqs.shape
    freqs = np.zeros((L, K))
    amps = np.zeros((L, K))
    phases = np.zeros((L, K))
    flags = np.zeros(L, dtype=np.int64)
    x = buffer.samples
    solvers: dict[bytes, _LsSolver] = {}
    for l, tc in enumerate(grid.centers):
        k_l = counts[l]
        fseed = seed_freqs[l, :k_l]
        c = int(round(tc * fs))
        lo, hi = c - half, c + half + 1
        if lo >= 0 and hi <= len(x):
            key = fseed.tobytes()
            if key not in solvers:
                solvers[key] = _LsSolver(t, fseed, window)
            params = qhm_ls_fit(x[lo:hi], fseed, window, fs, l,
                                solver=solvers[key])
        else:
            # boundary frame: fit on the valid segment only (zero-padding
            # would bias amplitudes low), dropping components the shorter
            # segment cannot support
            src_lo, src_hi = max(0, lo), min(len(x), hi)
            n_valid = src_hi - src_lo
            if n_valid < 8:
                raise AnalysisError(f"frame {l}: no usable samples")
            k_l = min(k_l, n_valid // 4)
            fseed = fseed[:k_l]
            sl = slice(src_lo - lo, src_hi - lo)
            params = qhm_ls_fit(x[src_lo:src_hi], fseed, window[sl], fs, l,
                                solver=_LsSolver(t[sl], fseed, window[sl]))
            flags[l] |= 2
        eta = _clamp_correction(frequency_correction(params), fseed)
        amp, phase = framewise_amp_phase(params)
        freqs[l, :k_l] = np.clip(fseed + eta, 0.0, fs / 2 - 1e-6)
        freqs[l, k_l:] = seed_freqs[l, k_l:]
        amps[l, :k_l] = amp
        phases[l, :k_l] = phase
        flags[l] |= int(params.ill_conditioned)
    comp = compensations_from_phases(grid, freqs, phases)
    return HarmonicSet(grid, freqs, amps, phases, comp, fs, flags)


def _extract_frame(x: np.ndarray, center: int, n_win: int) -> np.ndarray:
    half = (n_win - 1) // 2
    lo, hi = center - half, center + half + 1
    frame = np.zeros(n_win)
    src_lo, src_hi = max(0, lo), min(len(x), hi)
    if src_hi > src_lo:
        frame[src_lo - lo:src_hi - lo] = x[src_lo:src_hi]
    return frame


def _instantaneous_tracks(hset: HarmonicSet, n_samples: int):
    """Audio-rate frequency and amplitude per component, linearly interpolated."""
    fs = hset.sample_rate
    tt = np.arange(n_samples) / fs
    tc = hset.grid.centers
    inst_f = np.empty((hset.n_components, n_samples))
    inst_a = np.empty((hset.n_components, n_samples))
    for k in range(hset.n_components):
        inst_f[k] = linear_interp(tc, hset.frequencies[:, k], tt)
        inst_a[k] = linear_interp(tc, hset.amplitudes[:, k], tt)
    return tt, inst_f, inst_a


def refine_adaptive(buffer: SignalBuffer, initial: HarmonicSet, mode: str = "aqhm",
                    max_iters: int = 3, rel_tol: float = 1e-4,
                    return_errors: bool = False):
    """Adaptive refinement of a QHM pass with a nonstationary phase basis.

    Each iteration interpolates the corrected frequencies to audio rate,
    integrates them into a per-component phase track, rebuilds the LS
    basis around that track (mode 'eaqhm' also applies the framewise
    amplitude ratio), re-solves every frame, and re-corrects frequencies.
    Iterations that do not reduce the resynthesis error against the
    original speech are rejected and refinement stops; accepted error is
    therefore monotone nonincreasing.
    """
    if mode not in ("aqhm", "eaqhm"):
        raise AnalysisError(f"unknown refinement mode: {mode}")
    if max_iters < 1:
        raise AnalysisError("max_iters must be >= 1")
    fs = buffer.sample_rate
    grid = initial.grid
    window = grid_window(grid, fs)
    n_win = window.size
    half = (n_win - 1) // 2
    t_local = (np.arange(n_win) - half) / fs
    x = buffer.samples
    centers_idx = [int(round(tc * fs)) for tc in grid.centers]

    def total_error(hset: HarmonicSet) -> float:
        # resynthesis error over the span with full window coverage; edge
        # frames are not refined (their windows run off the signal) and
        # would otherwise mask interior improvement
        from .synth import synthesize_qhm
        y = synthesize_qhm(hset, fs).samples
        n = min(y.size, x.size)
        lo, hi = min(half, n // 4), n - min(half, n // 4)
        return float(np.sum((x[lo:hi] - y[lo:hi]) ** 2))

    best = initial
    best_err = total_error(initial)
    history = [best_err]
    for _ in range(max_iters):
        candidate = _refine_once(buffer, best, mode, window, t_local, centers_idx)
        cand_err = total_error(candidate)
        if cand_err >= best_err:
            break
        improved = (best_err - cand_err) >= rel_tol * best_err
        best, best_err = candidate, cand_err
        history.append(cand_err)
        if not improved:
            break
    if return_errors:
        return best, history
    return best


def _refine_once(buffer: SignalBuffer, current: HarmonicSet, mode: str,
                 window: np.ndarray, t_local: np.ndarray,
                 centers_idx: list[int]) -> HarmonicSet:
    fs = buffer.sample_rate
    grid = current.grid
    n_win = window.size
    half = (n_win - 1) // 2
    n_samples = len(buffer)
    tt, inst_f, inst_a = _instantaneous_tracks(current, n_samples)
    K = current.n_components
    # global unwrapped phase track per component from frequency integration
    inst_phi = np.empty_like(inst_f)
    for k in range(K):
        inst_phi[k] = integrate_phase(inst_f[k], fs)
    L = len(grid)
    freqs = current.frequencies.copy()
    amps = current.amplitudes.copy()
    phases = current.phases.copy()
    flags = current.flags.copy()
    x = buffer.samples
    for l, c in enumerate(centers_idx):
        if c - half < 0 or c + half >= n_samples:
            # zero-padded edge windows make the adaptive basis degenerate
            continue
        idx = np.arange(c - half, c + half + 1)
        # nonstationary phase basis Phi_k(t) = phi_k(t_l + t) - phi_k(t_l)
        phi_c = inst_phi[:, np.clip(c, 0, n_samples - 1)]
        basis_phase = inst_phi[:, idx].T - phi_c[None, :]
        carrier = np.exp(1j * basis_phase)
        if mode == "eaqhm":
            a_c = inst_a[:, np.clip(c, 0, n_samples - 1)]
            significant = a_c > max(AMPLITUDE_FLOOR, 1e-4 * float(a_c.max(initial=0.0)))
            amp_ratio = np.ones((idx.size, K))
            if np.any(significant):
                ratio = inst_a[significant][:, idx].T / a_c[significant][None, :]
                amp_ratio[:, significant] = np.clip(ratio, 0.1, 10.0)
            carrier = carrier * amp_ratio
        E = np.empty((n_win, 4 * K))
        re, im = carrier.real, carrier.imag
        E[:, 0::4] = 2 * re
        E[:, 1::4] = -2 * im
        E[:, 2::4] = 2 * t_local[:, None] * re
        E[:, 3::4] = -2 * t_local[:, None] * im
        frame = _extract_frame(x, c, n_win)
        try:
            solver = _LsSolver(t_local, freqs[l], window, basis=E)
            theta = solver.solve(frame)
        except np.linalg.LinAlgError:
            flags[l] |= 2
            continue
        a = theta[0::4] + 1j * theta[1::4]
        b = theta[2::4] + 1j * theta[3::4]
        params = QhmFrameParams(a, b, freqs[l], l, solver.ill_conditioned)
        eta = frequency_correction(params)
        eta = _clamp_correction(eta, freqs[l])
        freqs[l] = np.clip(freqs[l] + eta, 0.0, fs / 2 - 1e-6)
        amps[l], phases[l] = framewise_amp_phase(params)
        flags[l] |= int(solver.ill_conditioned)
    comp = compensations_from_phases(grid, freqs, phases)
    return HarmonicSet(grid, freqs, amps, phases, comp, fs, flags)
