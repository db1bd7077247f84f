import math
import wave

import numpy as np
import pytest

from rigsync import audio
from rigsync.audio import (
    AudioClip,
    LOG_FLOOR,
    load_wav,
    load_wav_bytes,
    melspectrogram,
    resample,
    save_wav,
    window_for_frame,
    windows_for_clip,
)
from rigsync.errors import AudioFormatError


def sine_clip(freq, seconds=1.0, rate=16000, amp=0.8):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


# --- WAV I/O ---

def test_wav_round_trip(tmp_path, rng):
    clip = AudioClip(rng.uniform(-0.5, 0.5, size=4000), 16000)
    path = tmp_path / "x.wav"
    save_wav(path, clip)
    loaded = load_wav(path)
    assert loaded.sample_rate == 16000
    assert np.abs(loaded.samples - clip.samples).max() < 1.0 / 32768


def test_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(np.zeros(400, dtype="<i2").tobytes())
    with pytest.raises(AudioFormatError) as exc:
        load_wav(path)
    assert exc.value.reason == "mono_required"


def test_wav_rejects_8bit(tmp_path):
    path = tmp_path / "pcm8.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(16000)
        w.writeframes(bytes(200))
    with pytest.raises(AudioFormatError) as exc:
        load_wav(path)
    assert exc.value.reason == "pcm16_required"


def test_wav_bytes_rejects_garbage():
    with pytest.raises(AudioFormatError) as exc:
        load_wav_bytes(b"definitely not a wav")
    assert exc.value.reason == "bad_wav"


def test_audio_clip_validation():
    with pytest.raises(AudioFormatError):
        AudioClip(np.zeros((2, 100)), 16000)
    with pytest.raises(AudioFormatError):
        AudioClip(np.array([]), 16000)
    with pytest.raises(AudioFormatError):
        AudioClip(np.zeros(10), 0)


# --- resample ---

def test_resample_same_rate_identity(rng):
    clip = AudioClip(rng.uniform(-0.5, 0.5, 1000), 16000)
    out = resample(clip, 16000)
    assert out.sample_rate == 16000
    assert np.array_equal(out.samples, clip.samples)


def test_resample_silence_preserves_duration():
    out = resample(AudioClip(np.zeros(48000), 48000), 16000)
    assert out.samples.size == 16000
    assert np.all(out.samples == 0.0)


def test_resample_preserves_tone_frequency():
    # FFT-peak oracle: the dominant bin should still sit at 440 Hz
    clip = sine_clip(440.0, rate=48000)
    out = resample(clip, 16000)
    spectrum = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.argmax(spectrum) * 16000 / out.samples.size
    bin_hz = 16000 / out.samples.size
    assert abs(peak_hz - 440.0) <= bin_hz


def test_resample_rejects_bad_rate():
    with pytest.raises(ValueError):
        resample(sine_clip(100.0), 0)


# --- melspectrogram ---

def test_mel_silence_is_log_floor():
    spec = melspectrogram(AudioClip(np.zeros(16000), 16000))
    assert np.all(spec.frames == LOG_FLOOR)


def test_mel_frame_count_is_hop_ceiling():
    for n in (16000, 8000, 257, 255, 1):
        spec = melspectrogram(AudioClip(np.zeros(max(n, 1)), 16000))
        assert spec.frames.shape == (64, max(1, math.ceil(n / 256)))
    assert melspectrogram(AudioClip(np.zeros(16000), 16000)).time_frames == 63


def test_mel_rejects_wrong_rate():
    with pytest.raises(ValueError, match="resample"):
        melspectrogram(AudioClip(np.zeros(1000), 44100))


def test_mel_values_bounded_below():
    spec = melspectrogram(sine_clip(440.0))
    assert spec.frames.min() >= LOG_FLOOR


def analytic_mel_bin_for(freq_hz):
    """Recompute the filterbank arithmetic from scratch for the expected bin."""
    def to_mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = [to_hz(m) for m in np.linspace(to_mel(55.0), to_mel(7600.0), 66)]
    best_bin, best_weight = -1, -1.0
    for m in range(64):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        w = min((freq_hz - lo) / (center - lo), (hi - freq_hz) / (hi - center))
        if w > best_weight:
            best_bin, best_weight = m, w
    return best_bin


def test_mel_tone_argmax_matches_analytic_bin():
    spec = melspectrogram(sine_clip(440.0))
    expected = analytic_mel_bin_for(440.0)
    argmax = np.argmax(spec.frames, axis=0)
    # interior frames only; edge windows are padded with silence
    assert np.all(argmax[2:-2] == expected)


def test_mel_shift_covariance_one_hop():
    clip = sine_clip(440.0)
    spec = melspectrogram(clip)
    delayed = melspectrogram(AudioClip(np.concatenate([np.zeros(256), clip.samples]), 16000))
    assert delayed.time_frames == spec.time_frames + 1
    assert np.array_equal(delayed.frames[:, 1:], spec.frames)


# --- window_for_frame ---

def test_window_left_boundary_padded():
    spec = melspectrogram(sine_clip(300.0))
    win = window_for_frame(spec, 0, 24.0, 33)
    assert win.data.shape == (64, 33)
    assert np.all(win.data[:, :16] == LOG_FLOOR)
    assert np.array_equal(win.data[:, 16:], spec.frames[:, :17])


def test_window_constant_interior():
    spec = melspectrogram(AudioClip(np.zeros(32000), 16000))
    win = window_for_frame(spec, 24, 24.0, 33)
    assert np.all(win.data == LOG_FLOOR)


def test_window_center_index_formula():
    spec = melspectrogram(AudioClip(np.zeros(48000), 16000))  # 3 s -> 188 columns
    win = window_for_frame(spec, 48, 24.0, 33)
    center = round(48 / 24.0 / spec.hop_seconds)
    assert center == 125
    assert np.array_equal(win.data, spec.frames[:, 125 - 16 : 125 + 17])


def test_window_validation():
    spec = melspectrogram(AudioClip(np.zeros(16000), 16000))
    with pytest.raises(ValueError):
        window_for_frame(spec, -1, 24.0, 33)
    with pytest.raises(ValueError):
        window_for_frame(spec, 0, 24.0, 32)


def test_consecutive_windows_shift_bound():
    spec = melspectrogram(sine_clip(500.0, seconds=2.0))
    fps = 24.0
    max_shift = math.ceil(1.0 / (fps * spec.hop_seconds)) + 1
    prev = round(0 / fps / spec.hop_seconds)
    for f in range(1, 48):
        center = round(f / fps / spec.hop_seconds)
        assert 0 <= center - prev <= max_shift
        prev = center


def test_all_windows_share_shape():
    spec = melspectrogram(sine_clip(500.0, seconds=2.0))
    stack = windows_for_clip(spec, 48, 24.0, 33)
    assert stack.shape == (48, 64, 33)
