"""Dataset ingestion: clip/manifest files, controller pruning,
normalization, and training-sample assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio as audio_mod
from .audio import AudioClip, MelWindow, melspectrogram, resample, window_for_frame
from .curves import ControllerCurve, Key, RigAnimationClip, extract_keys

DEFAULT_EMOTION_NAMES = ["neutral", "happy", "angry", "surprised", "sad", "afraid"]

#: tolerance for deriving key targets when a clip carries no animator keys,
#: in normalized controller units
KEY_FALLBACK_TOLERANCE = 0.01


@dataclass
class FaceConfiguration:
    """A named, ordered controller subset trained with its own network triple."""

    name: str
    controller_names: list[str]

    def __post_init__(self):
        if not self.controller_names:
            raise ValueError(f"configuration {self.name!r} has no controllers")
        if len(set(self.controller_names)) != len(self.controller_names):
            raise ValueError(f"configuration {self.name!r} repeats a controller")

    @property
    def size(self) -> int:
        return len(self.controller_names)


@dataclass
class ManifestEntry:
    clip: str
    audio: str
    emotion: int


@dataclass
class DatasetManifest:
    """Clip/audio pairs plus the emotion vocabulary (the condition size N)."""

    clips: list[ManifestEntry]
    fps: float
    emotion_names: list[str] = field(default_factory=lambda: list(DEFAULT_EMOTION_NAMES))

    def __post_init__(self):
        n = len(self.emotion_names)
        for entry in self.clips:
            if not 0 <= entry.emotion < n:
                raise ValueError(
                    f"manifest entry {entry.clip!r}: emotion {entry.emotion} outside [0, {n})"
                )

    @property
    def n_emotions(self) -> int:
        return len(self.emotion_names)

    def to_dict(self) -> dict:
        return {
            "clips": [{"clip": e.clip, "audio": e.audio, "emotion": e.emotion} for e in self.clips],
            "fps": self.fps,
            "emotion_names": list(self.emotion_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            clips=[ManifestEntry(e["clip"], e["audio"], int(e["emotion"])) for e in d["clips"]],
            fps=float(d["fps"]),
            emotion_names=list(d["emotion_names"]),
        )


def save_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def load_manifest(path) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads(Path(path).read_text()))


def save_clip(path, clip: RigAnimationClip) -> None:
    """Write the documented clip JSON (values and keys per controller)."""
    controllers = []
    for curve in clip.controllers:
        entry: dict = {"name": curve.name}
        if curve.dense is not None:
            entry["values"] = [float(v) for v in curve.dense]
        if curve.keys is not None:
            entry["keys"] = [
                {
                    "frame": k.frame,
                    "value": k.value,
                    "in_tangent": k.in_tangent,
                    "out_tangent": k.out_tangent,
                }
                for k in curve.keys
            ]
        controllers.append(entry)
    doc = {
        "name": clip.name,
        "fps": clip.fps,
        "frame_count": clip.frame_count,
        "emotion": clip.emotion,
        "controllers": controllers,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_clip(path, audio_ref: str = "") -> RigAnimationClip:
    doc = json.loads(Path(path).read_text())
    controllers = []
    for entry in doc["controllers"]:
        keys = None
        if "keys" in entry:
            keys = [
                Key(int(k["frame"]), float(k["value"]), float(k["in_tangent"]), float(k["out_tangent"]))
                for k in entry["keys"]
            ]
        dense = entry.get("values")
        controllers.append(ControllerCurve(entry["name"], dense=dense, keys=keys))
    return RigAnimationClip(
        name=doc["name"],
        fps=float(doc["fps"]),
        frame_count=int(doc["frame_count"]),
        emotion=int(doc["emotion"]),
        controllers=controllers,
        audio_ref=audio_ref,
    )


@dataclass
class LoadedDataset:
    manifest: DatasetManifest
    clips: list[RigAnimationClip]
    audio: dict[str, AudioClip]


def load_dataset(manifest_path) -> LoadedDataset:
    """Load every clip and its paired audio; paths are manifest-relative."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    clips: list[RigAnimationClip] = []
    audio: dict[str, AudioClip] = {}
    for entry in manifest.clips:
        ref = entry.audio
        clip = load_clip(base / entry.clip, audio_ref=ref)
        if clip.emotion != entry.emotion:
            raise ValueError(
                f"clip {entry.clip!r}: emotion {clip.emotion} disagrees with manifest {entry.emotion}"
            )
        clips.append(clip)
        if ref not in audio:
            audio[ref] = audio_mod.load_wav(base / ref)
    return LoadedDataset(manifest, clips, audio)


class NormalizationTable:
    """Per-controller [min, max] affine map onto [-1, 1]."""

    def __init__(self, ranges: dict[str, tuple[float, float]]):
        for name, (lo, hi) in ranges.items():
            if not hi > lo:
                raise ValueError(f"controller {name!r}: max {hi} must exceed min {lo}")
        self.ranges = {name: (float(lo), float(hi)) for name, (lo, hi) in ranges.items()}

    def normalize(self, name: str, v):
        lo, hi = self.ranges[name]
        return 2.0 * (np.asarray(v, dtype=np.float64) - lo) / (hi - lo) - 1.0

    def denormalize(self, name: str, v):
        lo, hi = self.ranges[name]
        return (np.asarray(v, dtype=np.float64) + 1.0) * (hi - lo) / 2.0 + lo

    def tangent_scale(self, name: str) -> float:
        """Slope multiplier induced by the value map (2 / range)."""
        lo, hi = self.ranges[name]
        return 2.0 / (hi - lo)

    def to_dict(self) -> dict:
        return {name: [lo, hi] for name, (lo, hi) in self.ranges.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationTable":
        return cls({name: (lo, hi) for name, (lo, hi) in d.items()})


def prune_controllers(clips: list[RigAnimationClip], config: FaceConfiguration) -> FaceConfiguration:
    """Drop controllers that are never keyed or never change value.

    Order is preserved; pruning everything is a fatal configuration error.
    """
    if not clips:
        raise ValueError("need at least one clip to prune against")
    retained = []
    for name in config.controller_names:
        keyed = False
        lo, hi = np.inf, -np.inf
        for clip in clips:
            curve = clip.controller(name)
            keyed = keyed or curve.has_keys()
            values = curve.values(clip.frame_count)
            lo = min(lo, float(values.min()))
            hi = max(hi, float(values.max()))
        if keyed and hi - lo > 1e-9:
            retained.append(name)
    if not retained:
        raise ValueError(f"configuration {config.name!r}: every controller was pruned")
    return FaceConfiguration(config.name, retained)


def fit_normalization(clips: list[RigAnimationClip], config: FaceConfiguration) -> NormalizationTable:
    """Min/max per retained controller over all clips."""
    ranges: dict[str, tuple[float, float]] = {}
    for name in config.controller_names:
        lo, hi = np.inf, -np.inf
        for clip in clips:
            values = clip.controller(name).values(clip.frame_count)
            lo = min(lo, float(values.min()))
            hi = max(hi, float(values.max()))
        if not hi > lo:
            raise RuntimeError(f"controller {name!r} is constant; it should have been pruned")
        ranges[name] = (lo, hi)
    return NormalizationTable(ranges)


@dataclass
class TrainingSample:
    """Network inputs/targets for one (clip, frame) pair.

    Tangent entries are meaningful only where ``key_flag`` is 1 and are 0
    elsewhere. All controller quantities are in normalized units.
    """

    mel_window: MelWindow
    controller_values: np.ndarray
    condition: np.ndarray
    key_flag: np.ndarray
    in_tangent: np.ndarray
    out_tangent: np.ndarray
    clip_name: str
    frame: int


def one_hot(label: int, n: int) -> np.ndarray:
    if not 0 <= label < n:
        raise ValueError(f"label {label} outside [0, {n})")
    v = np.zeros(n)
    v[label] = 1.0
    return v


def build_samples(
    clips: list[RigAnimationClip],
    audio: dict[str, AudioClip],
    config: FaceConfiguration,
    table: NormalizationTable,
    n_emotions: int,
    window_frames: int = audio_mod.DEFAULT_WINDOW_FRAMES,
) -> list[TrainingSample]:
    """One sample per (clip, frame) for the configuration's controllers.

    Key flags and tangents come from stored keys; clips without key metadata
    fall back to keys extracted from the normalized dense curve.
    """
    samples: list[TrainingSample] = []
    for clip in clips:
        if clip.audio_ref not in audio:
            raise ValueError(f"clip {clip.name!r}: no audio loaded for ref {clip.audio_ref!r}")
        wav = resample(audio[clip.audio_ref], audio_mod.SAMPLE_RATE)
        audio_frames = round(wav.duration * clip.fps)
        if abs(audio_frames - clip.frame_count) > 1:
            raise ValueError(
                f"clip {clip.name!r}: audio spans {audio_frames} frames, clip has {clip.frame_count}"
            )
        spec = melspectrogram(wav)
        cond = one_hot(clip.emotion, n_emotions)

        n = clip.frame_count
        c = config.size
        values = np.empty((n, c))
        flags = np.zeros((n, c))
        in_t = np.zeros((n, c))
        out_t = np.zeros((n, c))
        for i, name in enumerate(config.controller_names):
            curve = clip.controller(name)
            norm = table.normalize(name, curve.values(n))
            values[:, i] = norm
            scale = table.tangent_scale(name)
            if curve.keys is not None:
                keys = curve.keys
                tangent_scale = scale
            else:
                keys = extract_keys(norm, KEY_FALLBACK_TOLERANCE)
                tangent_scale = 1.0  # extracted from already-normalized values
            for k in keys:
                flags[k.frame, i] = 1.0
                in_t[k.frame, i] = k.in_tangent * tangent_scale
                out_t[k.frame, i] = k.out_tangent * tangent_scale

        for f in range(n):
            samples.append(
                TrainingSample(
                    mel_window=window_for_frame(spec, f, clip.fps, window_frames),
                    controller_values=values[f],
                    condition=cond,
                    key_flag=flags[f],
                    in_tangent=in_t[f],
                    out_tangent=out_t[f],
                    clip_name=clip.name,
                    frame=f,
                )
            )
    return samples
