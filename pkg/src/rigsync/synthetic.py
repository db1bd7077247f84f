"""Seeded synthetic clips + audio used as a training/evaluation oracle.

Each controller tracks the short-time energy of one frequency band of the
clip's audio through a fixed smooth response curve; one designated
controller per emotion additionally carries a constant +0.5 offset. Keys
are extracted from the resulting dense curves, so every piece of the
pipeline has a known ground truth.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import audio as audio_mod
from .audio import AudioClip, save_wav
from .curves import ControllerCurve, RigAnimationClip, extract_keys, gaussian_smooth
from .data import (
    DEFAULT_EMOTION_NAMES,
    DatasetManifest,
    FaceConfiguration,
    ManifestEntry,
    save_clip,
    save_manifest,
)

DEFAULT_CONFIGURATIONS = [
    FaceConfiguration("mouth", ["jaw_open", "lip_corner_l", "lip_corner_r"]),
    FaceConfiguration("tongue", ["tongue_up", "tongue_fwd", "tongue_curl"]),
    FaceConfiguration("upper", ["brow_l", "brow_r", "lid_close"]),
]

#: frequency bands assigned to controllers by global index (Hz)
BANDS = [
    (120.0, 320.0),
    (320.0, 620.0),
    (620.0, 1050.0),
    (1050.0, 1600.0),
    (1600.0, 2300.0),
    (2300.0, 3200.0),
    (3200.0, 4300.0),
    (4300.0, 5500.0),
    (5500.0, 7000.0),
    (150.0, 900.0),
    (900.0, 2600.0),
    (2600.0, 6500.0),
]

EMOTION_OFFSET = 0.5
ENERGY_SCALE = 0.08  # band RMS that drives the response ~3/4 of the way up
ENERGY_WINDOW_SECONDS = 0.1
CURVE_SMOOTH_SIGMA = 1.5
KEY_TOLERANCE = 0.01


def controller_rest(index: int) -> float:
    return 0.05 + 0.03 * (index % len(BANDS))

def controller_gain(index: int) -> float:
    return 0.7 + 0.02 * (index % len(BANDS))


def designated_controller(emotion: int, controller_names: list[str]) -> str:
    """The controller carrying emotion ``emotion``'s constant offset."""
    return controller_names[emotion % len(controller_names)]


def all_controller_names(configurations: list[FaceConfiguration]) -> list[str]:
    names: list[str] = []
    for config in configurations:
        names.extend(config.controller_names)
    return names


def bandpass(samples: np.ndarray, sample_rate: int, lo: float, hi: float) -> np.ndarray:
    """Zero out spectral content outside [lo, hi] Hz."""
    spectrum = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(samples.size, 1.0 / sample_rate)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spectrum, n=samples.size)


def band_rms(
    samples: np.ndarray,
    sample_rate: int,
    band: tuple[float, float],
    frame_count: int,
    fps: float,
    window_seconds: float = ENERGY_WINDOW_SECONDS,
) -> np.ndarray:
    """Per-animation-frame RMS of the band-passed signal over a centered window."""
    y2 = bandpass(samples, sample_rate, *band) ** 2
    csum = np.concatenate([[0.0], np.cumsum(y2)])
    half = max(1, int(round(window_seconds * sample_rate / 2)))
    centers = np.round(np.arange(frame_count) / fps * sample_rate).astype(int)
    lo = np.clip(centers - half, 0, samples.size)
    hi = np.clip(centers + half, 1, samples.size)
    hi = np.maximum(hi, lo + 1)
    return np.sqrt((csum[hi] - csum[lo]) / (hi - lo))


def controller_dense(
    samples: np.ndarray,
    sample_rate: int,
    controller_index: int,
    frame_count: int,
    fps: float,
    emotion: int,
    controller_names: list[str],
    emotion_weight: float = 1.0,
) -> np.ndarray:
    """The oracle curve: smooth band-energy response plus any emotion offset."""
    energy = band_rms(samples, sample_rate, BANDS[controller_index % len(BANDS)], frame_count, fps)
    response = gaussian_smooth(np.tanh(energy / ENERGY_SCALE), CURVE_SMOOTH_SIGMA)
    dense = controller_rest(controller_index) + controller_gain(controller_index) * response
    if designated_controller(emotion, controller_names) == controller_names[controller_index]:
        dense = dense + EMOTION_OFFSET * emotion_weight
    return dense


def _add_burst(x: np.ndarray, rng: np.random.Generator, band: tuple[float, float],
               sample_rate: int) -> None:
    n = x.size
    length = int(rng.uniform(0.15, 0.5) * sample_rate)
    start = int(rng.integers(0, max(1, n - length)))
    amp = rng.uniform(0.3, 0.95)
    noise = bandpass(rng.standard_normal(length), sample_rate, *band)
    noise /= np.max(np.abs(noise)) + 1e-12
    x[start : start + length] += amp * noise * np.hanning(length)


def synthesize_audio(rng: np.random.Generator, duration: float, sample_rate: int) -> AudioClip:
    """Band-limited noise bursts under a slow amplitude envelope, 16-bit quantized."""
    n = int(round(duration * sample_rate))
    x = np.zeros(n)
    # most bands fire at least once per clip, plus extra bursts anywhere
    for band in BANDS:
        if rng.uniform() < 0.8:
            _add_burst(x, rng, band, sample_rate)
    for _ in range(int(rng.poisson(1.2 * duration))):
        _add_burst(x, rng, BANDS[int(rng.integers(0, len(BANDS)))], sample_rate)

    # slow multiplicative envelope over the whole clip
    control = rng.uniform(0.5, 1.0, size=9)
    x *= np.interp(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, control.size), control)

    np.clip(x, -0.98, 0.98, out=x)  # overlapping bursts can stack; clip rather than rescale
    # quantize first so curves are computed from exactly what lands on disk
    pcm = np.round(x * 32767.0)
    return AudioClip(pcm / 32768.0, sample_rate)


def generate_clip(
    seed: int,
    index: int,
    frames: int,
    fps: float,
    emotion: int,
    controller_names: list[str],
    sample_rate: int = audio_mod.SAMPLE_RATE,
) -> tuple[RigAnimationClip, AudioClip]:
    rng = np.random.default_rng([seed, index])
    wav = synthesize_audio(rng, frames / fps, sample_rate)
    controllers = []
    for j, name in enumerate(controller_names):
        dense = controller_dense(wav.samples, sample_rate, j, frames, fps, emotion, controller_names)
        keys = extract_keys(dense, KEY_TOLERANCE)
        controllers.append(ControllerCurve(name, dense=dense, keys=keys))
    clip = RigAnimationClip(
        name=f"clip_{index:03d}",
        fps=fps,
        frame_count=frames,
        emotion=emotion,
        controllers=controllers,
        audio_ref=f"clip_{index:03d}.wav",
    )
    return clip, wav


def generate_synthetic_dataset(
    out_dir,
    seed: int = 0,
    n_clips: int = 12,
    frames_per_clip: int = 180,
    configurations: list[FaceConfiguration] | None = None,
    n_emotions_used: int = 4,
    fps: float = 24.0,
    emotion_names: list[str] | None = None,
) -> Path:
    """Write clips, WAVs and a manifest; byte-identical for a given seed.

    Returns the manifest path. Clip emotions cycle through the first
    ``n_emotions_used`` labels while the condition keeps the full slot count.
    """
    emotion_names = list(emotion_names or DEFAULT_EMOTION_NAMES)
    configurations = configurations or DEFAULT_CONFIGURATIONS
    if not 1 <= n_emotions_used <= len(emotion_names):
        raise ValueError(f"n_emotions_used must be in [1, {len(emotion_names)}]")
    if n_clips < 1 or frames_per_clip < 2:
        raise ValueError("need n_clips >= 1 and frames_per_clip >= 2")
    names = all_controller_names(configurations)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for i in range(n_clips):
        emotion = i % n_emotions_used
        clip, wav = generate_clip(seed, i, frames_per_clip, fps, emotion, names)
        save_clip(out_dir / f"{clip.name}.json", clip)
        save_wav(out_dir / clip.audio_ref, wav)
        entries.append(ManifestEntry(f"{clip.name}.json", clip.audio_ref, emotion))

    manifest = DatasetManifest(entries, fps, emotion_names)
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest_path, manifest)
    return manifest_path
