"""Audio ingestion and mel-spectrogram features.

All models consume fixed-size log-mel windows centered on an animation
frame. The mel parameterization below is recorded in checkpoint metadata
so trained networks are self-describing.
"""

from __future__ import annotations

import io
import math
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window, resample_poly

from .errors import AudioFormatError

SAMPLE_RATE = 16000
N_FFT = 512
HOP = 256
N_MELS = 64
FMIN = 55.0
FMAX = 7600.0
LOG_OFFSET = 1e-6
LOG_FLOOR = float(np.log(LOG_OFFSET))
HOP_SECONDS = HOP / SAMPLE_RATE
DEFAULT_WINDOW_FRAMES = 33

#: canonical feature parameters, embedded in checkpoints
MEL_PARAMS = {
    "sample_rate": SAMPLE_RATE,
    "n_fft": N_FFT,
    "hop": HOP,
    "n_mels": N_MELS,
    "fmin": FMIN,
    "fmax": FMAX,
    "log_offset": LOG_OFFSET,
}


@dataclass
class AudioClip:
    """Mono audio samples in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioFormatError("mono_required", "audio must be a 1-D mono signal")
        if self.samples.size == 0:
            raise AudioFormatError("empty_audio", "audio must be non-empty")
        if self.sample_rate <= 0:
            raise AudioFormatError("bad_sample_rate", f"sample rate must be > 0, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("non_finite", "audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class MelSpectrogram:
    """Log-mel magnitudes, shaped [mel_bins, time_frames]."""

    frames: np.ndarray
    hop_seconds: float
    mel_bins: int

    @property
    def time_frames(self) -> int:
        return self.frames.shape[1]


@dataclass
class MelWindow:
    """Fixed-size spectrogram slice centered on one animation frame."""

    data: np.ndarray
    center_anim_frame: int


def _parse_wav(reader: wave.Wave_read) -> AudioClip:
    if reader.getnchannels() != 1:
        raise AudioFormatError("mono_required", f"expected mono audio, got {reader.getnchannels()} channels")
    if reader.getsampwidth() != 2:
        raise AudioFormatError("pcm16_required", f"expected 16-bit PCM, got {8 * reader.getsampwidth()}-bit")
    if reader.getcomptype() != "NONE":
        raise AudioFormatError("pcm16_required", f"unsupported compression {reader.getcomptype()!r}")
    raw = reader.readframes(reader.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if samples.size == 0:
        raise AudioFormatError("empty_audio", "WAV contains no frames")
    return AudioClip(samples, reader.getframerate())


def load_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as reader:
            return _parse_wav(reader)
    except wave.Error as exc:
        raise AudioFormatError("bad_wav", f"not a readable WAV file: {exc}") from exc


def load_wav_bytes(data: bytes) -> AudioClip:
    """Parse a mono 16-bit PCM WAV from an in-memory byte string."""
    try:
        with wave.open(io.BytesIO(data), "rb") as reader:
            return _parse_wav(reader)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError("bad_wav", f"not a readable WAV payload: {exc}") from exc


def save_wav(path, clip: AudioClip) -> None:
    """Write 16-bit PCM mono; samples are clipped to full scale."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(clip.sample_rate)
        writer.writeframes(pcm.tobytes())


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase resample to ``target_rate``; identity when already there."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be > 0, got {target_rate}")
    if clip.sample_rate == target_rate:
        return AudioClip(clip.samples.copy(), target_rate)
    g = math.gcd(clip.sample_rate, target_rate)
    out = resample_poly(clip.samples, target_rate // g, clip.sample_rate // g)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate)


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = FMIN,
    fmax: float = FMAX,
) -> np.ndarray:
    """Triangular mel filters evaluated on FFT bin center frequencies.

    Uses the 2595*log10(1 + f/700) mel scale; returns [n_mels, n_fft//2 + 1].
    """
    mel_lo = hz_to_mel(fmin)
    mel_hi = hz_to_mel(fmax)
    edges = mel_to_hz(np.linspace(mel_lo, mel_hi, n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    bank = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


_WINDOW = get_window("hann", N_FFT, fftbins=True)
_FILTERBANK = mel_filterbank()


def melspectrogram(clip: AudioClip) -> MelSpectrogram:
    """Log-mel magnitude spectrogram at the canonical rate.

    Columns are centered at samples t*hop (zero padding at the clip edges,
    which is silence after log compression); the column count is
    ceil(n_samples / hop). Input at any other sample rate is rejected
    rather than implicitly resampled.
    """
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(
            f"melspectrogram expects {SAMPLE_RATE} Hz input, got {clip.sample_rate} Hz; resample first"
        )
    x = clip.samples
    n_frames = max(1, math.ceil(x.size / HOP))
    pad_left = N_FFT // 2
    pad_right = max(0, (n_frames - 1) * HOP + N_FFT - pad_left - x.size)
    padded = np.concatenate([np.zeros(pad_left), x, np.zeros(pad_right)])
    frames = np.lib.stride_tricks.sliding_window_view(padded, N_FFT)[:: HOP][:n_frames]
    mag = np.abs(np.fft.rfft(frames * _WINDOW, n=N_FFT, axis=1))
    mel = mag @ _FILTERBANK.T
    return MelSpectrogram(np.log(mel + LOG_OFFSET).T, HOP_SECONDS, N_MELS)


def window_for_frame(
    spec: MelSpectrogram,
    anim_frame: int,
    fps: float,
    window_frames: int = DEFAULT_WINDOW_FRAMES,
) -> MelWindow:
    """Slice a fixed-size window centered on one animation frame.

    The center column is round(anim_frame / fps / hop_seconds); columns
    outside the spectrogram are padded with the log floor (silence).
    """
    if anim_frame < 0:
        raise ValueError(f"anim_frame must be >= 0, got {anim_frame}")
    if window_frames < 1 or window_frames % 2 == 0:
        raise ValueError(f"window_frames must be odd and >= 1, got {window_frames}")
    center = int(round(anim_frame / fps / spec.hop_seconds))
    half = window_frames // 2
    data = np.full((spec.frames.shape[0], window_frames), LOG_FLOOR)
    lo = center - half
    hi = center + half + 1
    src_lo = max(lo, 0)
    src_hi = min(hi, spec.time_frames)
    if src_lo < src_hi:
        data[:, src_lo - lo : src_hi - lo] = spec.frames[:, src_lo:src_hi]
    return MelWindow(data, anim_frame)


def windows_for_clip(
    spec: MelSpectrogram, frame_count: int, fps: float, window_frames: int = DEFAULT_WINDOW_FRAMES
) -> np.ndarray:
    """Stack windows for every animation frame; shape [frames, mel, window]."""
    return np.stack(
        [window_for_frame(spec, f, fps, window_frames).data for f in range(frame_count)]
    )
