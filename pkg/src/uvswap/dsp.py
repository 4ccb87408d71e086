"""Waveform I/O, spectrograms, and the 39-dimensional MFCC front end.

WAV support is deliberately narrow: RIFF/WAVE, PCM16, mono, the TIMIT
convention. Everything else is rejected with a precise error. Sample
amplitudes are scaled to [-1, 1] by 1/32768 and round-trip losslessly.

The MFCC pipeline is the classic recipe: pre-emphasis 0.97, 25 ms Hamming
window with 10 ms hop, 26 triangular mel filters (linear in mel), log with
flooring, orthonormal DCT-II keeping 13 coefficients (C0 included), plus
delta and delta-delta by +-2-frame regression with edge replication.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import UvswapError

PCM_SCALE = 32768.0
DB_FLOOR = -120.0


class UnsupportedFormat(UvswapError):
    code = "unsupported_format"


class TruncatedFile(UvswapError):
    code = "truncated_file"


class SignalTooShort(UvswapError):
    code = "signal_too_short"


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # T x F, dB
    window_len: int
    hop: int
    sample_rate: int
    fft_size: int


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # T x D
    frame_hop: int
    frame_len: int
    meta: str = ""


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    frame_len: int = 400  # 25 ms at 16 kHz
    hop: int = 160  # 10 ms
    fft_size: int = 512
    n_filters: int = 26
    n_ceps: int = 13
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    delta_window: int = 2
    cmn: bool = False


# ---------------------------------------------------------------------------
# WAV I/O

def read_wav(data: bytes) -> Waveform:
    """Parse a RIFF/WAVE PCM16 mono file into a Waveform."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE file")
    declared = struct.unpack_from("<I", data, 4)[0]
    if declared + 8 > len(data):
        raise TruncatedFile(f"RIFF declares {declared + 8} bytes, file has {len(data)}")

    pos = 12
    fmt = None
    pcm = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        chunk_len = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + chunk_len]
        if len(body) < chunk_len:
            raise TruncatedFile(f"chunk {chunk_id!r} declares {chunk_len} bytes, "
                                f"{len(body)} available")
        if chunk_id == b"fmt ":
            if chunk_len < 16:
                raise UnsupportedFormat("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            pcm = body
        pos += 8 + chunk_len + (chunk_len & 1)  # chunks are word-aligned

    if fmt is None or pcm is None:
        raise UnsupportedFormat("missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"audio format {audio_format}, expected PCM (1)")
    if channels != 1:
        raise UnsupportedFormat(f"{channels} channels, expected mono")
    if bits != 16:
        raise UnsupportedFormat(f"{bits}-bit samples, expected 16")
    if len(pcm) % 2:
        raise TruncatedFile("odd PCM byte count")
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / PCM_SCALE
    return Waveform(samples, sample_rate)


def write_wav(wave: Waveform) -> bytes:
    """Render a Waveform as RIFF/WAVE PCM16 mono bytes."""
    ints = np.clip(np.round(wave.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    pcm = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, 1, 1, wave.sample_rate,
        wave.sample_rate * 2, 2, 16,
        b"data", len(pcm),
    )
    return header + pcm


def read_wav_file(path) -> Waveform:
    with open(path, "rb") as f:
        return read_wav(f.read())


def write_wav_file(path, wave: Waveform) -> None:
    with open(path, "wb") as f:
        f.write(write_wav(wave))


# ---------------------------------------------------------------------------
# Frames and spectrograms

def frame_count(n_samples: int, window_len: int, hop: int) -> int:
    return (n_samples - window_len) // hop + 1


def _frames(x: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    n = frame_count(len(x), window_len, hop)
    if n < 1:
        raise SignalTooShort(f"{len(x)} samples, need at least {window_len}")
    idx = np.arange(window_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def spectrogram(wave: Waveform, window_len: int = 400, hop: int = 160,
                fft_size: int = 512) -> Spectrogram:
    """Hamming-windowed STFT magnitude in dB, floored at -120 dB."""
    if window_len > fft_size:
        raise ValueError("window_len must not exceed fft_size")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    frames = _frames(wave.samples, window_len, hop) * np.hamming(window_len)
    mag = np.abs(np.fft.rfft(frames, n=fft_size, axis=1))
    db = 20.0 * np.log10(np.maximum(mag, 10.0 ** (DB_FLOOR / 20.0)))
    return Spectrogram(db, window_len, hop, wave.sample_rate, fft_size)


def spectrogram_to_text(spec: Spectrogram) -> str:
    """Plot-ready tabular dump: one frame per row, tab-separated dB values."""
    header = (f"# spectrogram frames={spec.magnitudes.shape[0]} "
              f"bins={spec.magnitudes.shape[1]} window={spec.window_len} "
              f"hop={spec.hop} fft={spec.fft_size} rate={spec.sample_rate}\n")
    rows = "\n".join("\t".join(f"{v:.2f}" for v in row) for row in spec.magnitudes)
    return header + rows + "\n"


# ---------------------------------------------------------------------------
# MFCC

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, linear in mel, spanning 0 .. sample_rate/2.

    Returns an (n_filters, fft_size//2 + 1) weight matrix. Adjacent
    triangles cross at weight 0.5 in the mel domain.
    """
    n_bins = fft_size // 2 + 1
    bin_mels = hz_to_mel(np.arange(n_bins) * sample_rate / fft_size)
    centers = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2)
    fb = np.zeros((n_filters, n_bins))
    for m in range(n_filters):
        lo, mid, hi = centers[m], centers[m + 1], centers[m + 2]
        up = (bin_mels - lo) / (mid - lo)
        down = (hi - bin_mels) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def dct_matrix(n_ceps: int, n_in: int) -> np.ndarray:
    """First n_ceps rows of the orthonormal DCT-II basis over n_in points."""
    n = np.arange(n_in)
    k = np.arange(n_ceps)[:, None]
    basis = np.sqrt(2.0 / n_in) * np.cos(np.pi * (n + 0.5) * k / n_in)
    basis[0] /= np.sqrt(2.0)
    return basis


def delta(features: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression deltas with edge replication.

    d[t] = sum_k k * (x[t+k] - x[t-k]) / (2 * sum_k k^2), k = 1..window.
    """
    t = features.shape[0]
    padded = np.concatenate([
        np.repeat(features[:1], window, axis=0),
        features,
        np.repeat(features[-1:], window, axis=0),
    ])
    denom = 2.0 * sum(k * k for k in range(1, window + 1))
    out = np.zeros_like(features, dtype=np.float64)
    for k in range(1, window + 1):
        out += k * (padded[window + k:window + k + t] - padded[window - k:window - k + t])
    return out / denom


def mfcc39(wave: Waveform, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """13 MFCCs (C0 included) with deltas and delta-deltas, T x 39."""
    if wave.sample_rate != cfg.sample_rate:
        raise UnsupportedFormat(
            f"sample rate {wave.sample_rate}, config expects {cfg.sample_rate}")
    x = wave.samples.astype(np.float64)
    if len(x) < cfg.frame_len:
        raise SignalTooShort(f"{len(x)} samples, need at least {cfg.frame_len}")
    # pre-emphasis with a replicated first sample, so constant signals
    # stay constant frame to frame
    x = np.concatenate([x[:1] * (1.0 - cfg.preemphasis),
                        x[1:] - cfg.preemphasis * x[:-1]])
    frames = _frames(x, cfg.frame_len, cfg.hop) * np.hamming(cfg.frame_len)
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2
    fbank = power @ mel_filterbank(cfg.n_filters, cfg.fft_size, cfg.sample_rate).T
    logfb = np.log(np.maximum(fbank, cfg.log_floor))
    ceps = logfb @ dct_matrix(cfg.n_ceps, cfg.n_filters).T
    if cfg.cmn:
        ceps = ceps - ceps.mean(axis=0)
    d1 = delta(ceps, cfg.delta_window)
    d2 = delta(d1, cfg.delta_window)
    feats = np.hstack([ceps, d1, d2])
    return FeatureMatrix(feats, cfg.hop, cfg.frame_len, meta="mfcc39")


# ---------------------------------------------------------------------------
# Feature archives: 4 little-endian uint32 (T, D, hop, frame_len), then
# T*D row-major float32 values.

def save_features(fm: FeatureMatrix) -> bytes:
    t, d = fm.frames.shape
    header = struct.pack("<4I", t, d, fm.frame_hop, fm.frame_len)
    return header + fm.frames.astype("<f4").tobytes()


def load_features(data: bytes) -> FeatureMatrix:
    if len(data) < 16:
        raise TruncatedFile("feature archive shorter than its header")
    t, d, hop, frame_len = struct.unpack_from("<4I", data, 0)
    body = data[16:]
    if len(body) != 4 * t * d:
        raise TruncatedFile(f"feature archive body has {len(body)} bytes, "
                            f"expected {4 * t * d}")
    frames = np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)
    return FeatureMatrix(frames, hop, frame_len, meta="archive")
