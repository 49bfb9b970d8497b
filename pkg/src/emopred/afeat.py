"""Acoustic emotion features: 16 low-level descriptors per frame, their
regression deltas, and 12 statistical functionals per contour, packed into a
fixed 384-dimensional utterance vector.

Per frame the descriptors are, in column order: zero-crossing rate, RMS
energy, F0 (autocorrelation, 0 on unvoiced frames), harmonics-to-noise ratio
in dB (0 on unvoiced frames), and MFCC 1..12 (Hann window, 26 triangular mel
filters spanning 0..sr/2, log floor 1e-10, DCT-II with coefficient 0
dropped). Functional order per contour: mean, stddev, skewness, kurtosis,
min, max, range, relative position of min, relative position of max, linear
regression offset, slope, and residual MSE.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

FRAME_MS = 25.0
HOP_MS = 10.0

MIN_SAMPLE_RATE = 16000
F0_MIN_HZ = 60.0
F0_MAX_HZ = 500.0
VOICING_PEAK_THRESHOLD = 0.3
VOICING_RMS_FLOOR = 1e-4
HNR_CLAMP_DB = 100.0
NUM_MEL_FILTERS = 26
NUM_MFCC = 12
LOG_FLOOR = 1e-10

LLD_NAMES = (
    "zcr", "rms", "f0", "hnr",
    "mfcc1", "mfcc2", "mfcc3", "mfcc4", "mfcc5", "mfcc6",
    "mfcc7", "mfcc8", "mfcc9", "mfcc10", "mfcc11", "mfcc12",
)
FUNCTIONAL_NAMES = (
    "mean", "stddev", "skewness", "kurtosis", "min", "max", "range",
    "relpos_min", "relpos_max", "linreg_offset", "linreg_slope", "linreg_mse",
)
NUM_LLD = len(LLD_NAMES)
NUM_FUNCTIONALS = len(FUNCTIONAL_NAMES)
FEATURE_DIM = NUM_LLD * 2 * NUM_FUNCTIONALS  # 384


@dataclass
class AudioClip:
    """Mono waveform with samples in [-1, 1] and sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def validate(self) -> None:
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(f"sample rate below {MIN_SAMPLE_RATE}")
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("samples must be a nonempty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")


def load_audio(path: str | Path) -> AudioClip:
    """Load a mono PCM WAV file (16-bit int or 32-bit float).

    Raises ValueError for multi-channel audio, for sample rates below
    16 kHz (no silent resampling), and for unsupported encodings.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"{path}: unreadable WAV file: {exc}") from exc
    if data.ndim != 1:
        raise ValueError(f"{path}: multi-channel unsupported")
    if rate < MIN_SAMPLE_RATE:
        raise ValueError(f"{path}: sample rate below {MIN_SAMPLE_RATE} ({rate})")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    elif data.dtype == np.float64:
        samples = data.copy()
    else:
        raise ValueError(f"{path}: unsupported sample encoding {data.dtype}")
    clip = AudioClip(samples=samples, sample_rate=int(rate))
    clip.validate()
    return clip


def frame_signal(clip: AudioClip, frame_ms: float = FRAME_MS,
                 hop_ms: float = HOP_MS) -> np.ndarray:
    """Slice a clip into overlapping frames, shape (frames, frame_len).

    Frame and hop lengths are ms converted to samples (rounded down). A
    signal shorter than one frame yields a single zero-padded frame.
    """
    if hop_ms <= 0 or frame_ms <= 0:
        raise ValueError("frame_ms and hop_ms must be positive")
    if hop_ms > frame_ms:
        raise ValueError("hop_ms must not exceed frame_ms")
    x = np.asarray(clip.samples, dtype=np.float64)
    frame_len = int(clip.sample_rate * frame_ms / 1000.0)
    hop = int(clip.sample_rate * hop_ms / 1000.0)
    if frame_len < 1 or hop < 1:
        raise ValueError("frame or hop shorter than one sample")
    n = len(x)
    if n < frame_len:
        padded = np.zeros(frame_len)
        padded[:n] = x
        return padded[None, :]
    count = (n - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def _mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz) / 700.0)


def _mel_inv(mels):
    return 700.0 * (10.0 ** (np.asarray(mels) / 2595.0) - 1.0)


def _mel_filterbank(sample_rate: int, n_fft: int) -> np.ndarray:
    """Triangular mel filters evaluated at the rFFT bin frequencies."""
    fmax = sample_rate / 2.0
    edges_hz = _mel_inv(np.linspace(_mel(0.0), _mel(fmax), NUM_MEL_FILTERS + 2))
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / n_fft)
    bank = np.zeros((NUM_MEL_FILTERS, n_bins))
    for m in range(NUM_MEL_FILTERS):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def _dct_matrix(n_input: int) -> np.ndarray:
    """DCT-II basis rows for coefficients 1..NUM_MFCC (coefficient 0 dropped)."""
    n = np.arange(n_input)
    k = np.arange(1, NUM_MFCC + 1)[:, None]
    return np.cos(np.pi * k * (n[None, :] + 0.5) / n_input)


def extract_lld(clip: AudioClip) -> np.ndarray:
    """Per-frame low-level descriptors, shape (frames, 16).

    F0 uses the normalized autocorrelation of the mean-removed frame:
    the peak lag is searched over [60, 500] Hz and refined by parabolic
    interpolation. A frame is voiced when the normalized peak is at
    least 0.3 and the frame RMS is at least 1e-4; unvoiced frames get
    F0 = HNR = 0. HNR is 10*log10(r / (1 - r)) at the integer peak lag,
    clamped to [-100, 100] dB.
    """
    clip.validate()
    frames = frame_signal(clip)
    n_frames, frame_len = frames.shape
    sr = clip.sample_rate

    zcr = np.sum(frames[:, :-1] * frames[:, 1:] < 0, axis=1) / frame_len
    rms = np.sqrt(np.mean(frames ** 2, axis=1))

    # Linear (zero-padded) autocorrelation of mean-removed frames via FFT.
    centered = frames - frames.mean(axis=1, keepdims=True)
    n_fft = 1
    while n_fft < 2 * frame_len:
        n_fft *= 2
    spectrum = np.fft.rfft(centered, n=n_fft)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), n=n_fft)[:, :frame_len]

    lag_min = int(np.floor(sr / F0_MAX_HZ))
    lag_max = min(int(np.ceil(sr / F0_MIN_HZ)), frame_len - 1)
    f0 = np.zeros(n_frames)
    hnr = np.zeros(n_frames)
    acf0 = acf[:, 0]
    for i in range(n_frames):
        if acf0[i] <= 0.0 or rms[i] < VOICING_RMS_FLOOR:
            continue
        window = acf[i, lag_min:lag_max + 1] / acf0[i]
        k = int(np.argmax(window))
        r = window[k]
        if r < VOICING_PEAK_THRESHOLD:
            continue
        lag = float(lag_min + k)
        if 0 < k < len(window) - 1:
            y_prev, y_peak, y_next = window[k - 1], window[k], window[k + 1]
            denom = y_prev - 2.0 * y_peak + y_next
            if denom != 0.0:
                lag += 0.5 * (y_prev - y_next) / denom
        f0[i] = sr / lag
        if r >= 1.0:
            hnr[i] = HNR_CLAMP_DB
        else:
            hnr[i] = float(np.clip(10.0 * np.log10(r / (1.0 - r)),
                                   -HNR_CLAMP_DB, HNR_CLAMP_DB))

    window = np.hanning(frame_len)
    power = np.abs(np.fft.rfft(frames * window, n=frame_len)) ** 2
    bank = _mel_filterbank(sr, frame_len)
    mel_energy = power @ bank.T
    log_mel = np.log(np.maximum(mel_energy, LOG_FLOOR))
    mfcc = log_mel @ _dct_matrix(NUM_MEL_FILTERS).T

    out = np.empty((n_frames, NUM_LLD))
    out[:, 0] = zcr
    out[:, 1] = rms
    out[:, 2] = f0
    out[:, 3] = hnr
    out[:, 4:] = mfcc
    return out


def delta(matrix: np.ndarray) -> np.ndarray:
    """Two-frame regression delta per column with edge replication.

    d_t = (1*(c[t+1] - c[t-1]) + 2*(c[t+2] - c[t-2])) / 10
    """
    m = np.asarray(matrix, dtype=np.float64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[:, None]
    if m.shape[0] < 1:
        raise ValueError("delta requires at least one frame")
    padded = np.vstack([m[:1], m[:1], m, m[-1:], m[-1:]])
    out = (1.0 * (padded[3:-1] - padded[1:-3])
           + 2.0 * (padded[4:] - padded[:-4])) / 10.0
    return out[:, 0] if squeeze else out


def functionals(contour: np.ndarray) -> np.ndarray:
    """The 12 statistical functionals of one contour.

    Uses population moments; skewness is m3/m2^1.5 and kurtosis is excess
    (m4/m2^2 - 3). Relative positions use the first occurrence divided by
    len-1 (0 for length-1 contours). Constant contours (including length
    1) take the exact degenerate values [c, 0, 0, 0, c, c, 0, 0, 0, c, 0, 0].
    """
    x = np.asarray(contour, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("contour must be a nonempty 1-D array")
    n = len(x)
    if np.all(x == x[0]):
        c = float(x[0])
        return np.array([c, 0.0, 0.0, 0.0, c, c, 0.0, 0.0, 0.0, c, 0.0, 0.0])

    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d ** 2))
    sd = float(np.sqrt(m2))
    skew = float(np.mean(d ** 3)) / (m2 * sd) if m2 > 0 else 0.0
    kurt = float(np.mean(d ** 4)) / (m2 * m2) - 3.0 if m2 > 0 else 0.0
    vmin = float(np.min(x))
    vmax = float(np.max(x))
    pos_min = float(np.argmin(x)) / (n - 1)
    pos_max = float(np.argmax(x)) / (n - 1)

    t = np.arange(n, dtype=np.float64)
    t_mean = (n - 1) / 2.0
    denom = float(np.sum((t - t_mean) ** 2))
    slope = float(np.sum((t - t_mean) * d)) / denom
    offset = mean - slope * t_mean
    residual = x - (offset + slope * t)
    mse = float(np.mean(residual ** 2))

    return np.array([mean, sd, skew, kurt, vmin, vmax, vmax - vmin,
                     pos_min, pos_max, offset, slope, mse])


def extract_features(clip: AudioClip) -> np.ndarray:
    """Full 384-dimensional emotion feature vector for one clip.

    Layout: for each of the 32 contours (the 16 descriptors followed by
    their 16 deltas), the 12 functionals in declared order.
    """
    lld = extract_lld(clip)
    contours = np.hstack([lld, delta(lld)])
    out = np.empty(FEATURE_DIM)
    for c in range(contours.shape[1]):
        out[c * NUM_FUNCTIONALS:(c + 1) * NUM_FUNCTIONALS] = functionals(
            contours[:, c])
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite value in extracted features")
    return out
