"""End-to-end inference: audio in, keyed controller curves out.

Audio becomes mel windows; the audio regressor predicts a latent per
frame; the VAE decoder turns latents plus user emotion weights into dense
controller values; the key predictor supplies a key mask and tangents.
User settings (upper-face smoothing, key threshold, tangent filtering,
key rate) shape the final sparse curves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import audio as audio_mod
from .audio import AudioClip, melspectrogram, resample, windows_for_clip
from .checkpoints import file_fingerprint, load_model
from .curves import (
    ControllerCurve,
    Key,
    RigAnimationClip,
    gaussian_smooth,
    rate_filter,
)
from .data import NormalizationTable
from .errors import FingerprintMismatchError
from .networks import KeyPrediction

N_EMOTIONS = 6


def mix_emotions(weights, n: int = N_EMOTIONS) -> np.ndarray:
    """Clamp per-emotion weights into [0, 1]; no renormalization.

    Several non-zero weights mix emotions; the sum is deliberately
    unconstrained.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected {n} emotion weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("emotion weights must be finite")
    return np.clip(w, 0.0, 1.0)


@dataclass
class InferenceSettings:
    emotion_weights: np.ndarray = field(default_factory=lambda: np.zeros(N_EMOTIONS))
    key_threshold: float = 0.5
    smooth_upper: bool = False
    smooth_sigma: float = 2.0
    rate: int = 1
    tangent_filter_sigma: float = 0.0

    def __post_init__(self):
        self.emotion_weights = mix_emotions(self.emotion_weights, len(self.emotion_weights))
        if not 0.0 < self.key_threshold < 1.0:
            raise ValueError(f"key_threshold must be in (0, 1), got {self.key_threshold}")
        if self.rate not in (1, 2, 4):
            raise ValueError(f"rate must be 1, 2 or 4, got {self.rate}")
        if self.smooth_sigma < 0 or self.tangent_filter_sigma < 0:
            raise ValueError("filter sigmas must be >= 0")

    def echo(self) -> dict:
        return {
            "emotion_weights": [float(w) for w in self.emotion_weights],
            "key_threshold": self.key_threshold,
            "smooth_upper": self.smooth_upper,
            "smooth_sigma": self.smooth_sigma,
            "rate": self.rate,
            "tangent_filter_sigma": self.tangent_filter_sigma,
        }


def is_upper_face(config_name: str) -> bool:
    """Upper-face configurations opt into the smoothing setting by name."""
    return "upper" in config_name.lower()


def select_key_frames(probs: np.ndarray, threshold: float) -> list[int]:
    """Threshold then suppress weaker neighbors (radius 1; ties keep the earlier frame)."""
    marked = np.flatnonzero(probs >= threshold)
    order = sorted(marked.tolist(), key=lambda f: (-probs[f], f))
    accepted: set[int] = set()
    for f in order:
        if (f - 1) not in accepted and (f + 1) not in accepted:
            accepted.add(f)
    return sorted(accepted)


def decode_keys(
    probs: np.ndarray,
    in_tangents: np.ndarray,
    out_tangents: np.ndarray,
    values: np.ndarray,
    threshold: float,
) -> list[Key]:
    """Turn per-frame key probabilities, tangents and values into keys.

    Frames 0 and frame_count-1 are always keyed; when they were not marked
    by the mask, their slopes come from finite differences of the values.
    """
    frame_count = len(probs)
    if frame_count < 2:
        raise ValueError("need at least two frames")
    selected = select_key_frames(np.asarray(probs, dtype=np.float64), threshold)
    keys: dict[int, Key] = {
        f: Key(f, float(values[f]), float(in_tangents[f]), float(out_tangents[f])) for f in selected
    }
    if 0 not in keys:
        slope = float(values[1] - values[0])
        keys[0] = Key(0, float(values[0]), slope, slope)
    last = frame_count - 1
    if last not in keys:
        slope = float(values[last] - values[last - 1])
        keys[last] = Key(last, float(values[last]), slope, slope)
    return [keys[f] for f in sorted(keys)]


@dataclass
class ModelTriple:
    """One configuration's three trained networks plus shared metadata."""

    config_name: str
    cvae: torch.nn.Module
    audionet: torch.nn.Module
    keynet: torch.nn.Module
    meta: dict
    fingerprints: dict[str, str]
    dataset_fingerprints: dict[str, str]
    manifest_hashes: dict[str, str]

    @property
    def controllers(self) -> list[str]:
        return list(self.meta["controllers"])

    @property
    def table(self) -> NormalizationTable:
        return NormalizationTable.from_dict(self.meta["normalization"])


def load_triple(config_dir, verify: bool = True) -> ModelTriple:
    config_dir = Path(config_dir)
    models: dict[str, torch.nn.Module] = {}
    metas: dict[str, dict] = {}
    fingerprints: dict[str, str] = {}
    for kind in ("cvae", "audionet", "keynet"):
        path = config_dir / f"{kind}.pt"
        model, loaded_kind, meta = load_model(path)
        if loaded_kind != kind:
            raise FingerprintMismatchError(f"{path} holds a {loaded_kind!r} network, expected {kind!r}")
        models[kind] = model
        metas[kind] = meta
        fingerprints[kind] = file_fingerprint(path)
    triple = ModelTriple(
        config_name=metas["cvae"]["configuration"],
        cvae=models["cvae"],
        audionet=models["audionet"],
        keynet=models["keynet"],
        meta=metas["cvae"],
        fingerprints=fingerprints,
        dataset_fingerprints={k: metas[k]["dataset_fingerprint"] for k in metas},
        manifest_hashes={k: metas[k]["manifest_hash"] for k in metas},
    )
    if verify and len(set(triple.dataset_fingerprints.values())) != 1:
        raise FingerprintMismatchError(
            f"configuration {config_dir.name!r}: networks trained on different datasets"
        )
    return triple


def load_triples(ckpt_dir, verify: bool = True) -> dict[str, ModelTriple]:
    """Load every configuration subdirectory holding the three networks."""
    ckpt_dir = Path(ckpt_dir)
    triples: dict[str, ModelTriple] = {}
    for sub in sorted(ckpt_dir.iterdir()):
        if sub.is_dir() and (sub / "cvae.pt").exists():
            triple = load_triple(sub, verify=verify)
            triples[triple.config_name] = triple
    if not triples:
        raise FileNotFoundError(f"no checkpoint triples under {ckpt_dir}")
    if verify:
        verify_triples(triples)
    return triples


def verify_triples(triples: dict[str, ModelTriple]) -> None:
    """Refuse triples that mix dataset fingerprints, within or across configurations."""
    for triple in triples.values():
        if len(set(triple.dataset_fingerprints.values())) != 1:
            raise FingerprintMismatchError(
                f"configuration {triple.config_name!r}: networks trained on different datasets"
            )
    hashes = set()
    for triple in triples.values():
        hashes.update(triple.manifest_hashes.values())
    if len(hashes) != 1:
        raise FingerprintMismatchError("loaded configurations come from different datasets")


@dataclass
class InferenceResult:
    fps: float
    frame_count: int
    clips: dict[str, RigAnimationClip]
    dense: dict[str, dict[str, np.ndarray]]
    key_predictions: dict[str, KeyPrediction]
    settings: InferenceSettings
    fingerprints: dict[str, dict[str, str]]


def infer(
    audio: AudioClip,
    triples: dict[str, ModelTriple],
    settings: InferenceSettings,
) -> InferenceResult:
    """Run the full pipeline for every loaded configuration.

    Deterministic for fixed audio, settings and checkpoints: the decoder
    consumes the latent posterior mean and no sampling happens anywhere.
    """
    if not triples:
        raise ValueError("no model triples loaded")
    verify_triples(triples)
    first = next(iter(triples.values())).meta
    fps = float(first["fps"])
    window_frames = int(first["window_frames"])
    n_emotions = int(first["n_emotions"])
    if len(settings.emotion_weights) != n_emotions:
        raise ValueError(
            f"settings carry {len(settings.emotion_weights)} emotion weights, model expects {n_emotions}"
        )

    wav = resample(audio, audio_mod.SAMPLE_RATE)
    frame_count = int(round(wav.duration * fps))
    if frame_count < 2:
        raise ValueError("audio is too short: need at least two animation frames")
    spec = melspectrogram(wav)
    windows = torch.tensor(
        windows_for_clip(spec, frame_count, fps, window_frames), dtype=torch.float32
    )

    cond = torch.tensor(
        np.tile(settings.emotion_weights, (frame_count, 1)), dtype=torch.float32
    )

    clips: dict[str, RigAnimationClip] = {}
    dense_out: dict[str, dict[str, np.ndarray]] = {}
    predictions: dict[str, KeyPrediction] = {}
    fingerprints: dict[str, dict[str, str]] = {}
    for name, triple in triples.items():
        with torch.no_grad():
            z = triple.audionet(windows)
            x_hat = triple.cvae.decode(z, cond).numpy().astype(np.float64)
            probs_t, in_t_t, out_t_t = triple.keynet(windows)
        probs = probs_t.numpy().astype(np.float64)
        in_t = in_t_t.numpy().astype(np.float64)
        out_t = out_t_t.numpy().astype(np.float64)

        table = triple.table
        smooth_this = settings.smooth_upper and is_upper_face(name)
        controllers: list[ControllerCurve] = []
        dense_out[name] = {}
        for i, ctrl in enumerate(triple.controllers):
            dense = table.denormalize(ctrl, x_hat[:, i])
            if smooth_this:
                dense = gaussian_smooth(dense, settings.smooth_sigma)
            slope_scale = 1.0 / table.tangent_scale(ctrl)
            ctrl_in = in_t[:, i] * slope_scale
            ctrl_out = out_t[:, i] * slope_scale
            if settings.tangent_filter_sigma > 0:
                ctrl_in = gaussian_smooth(ctrl_in, settings.tangent_filter_sigma)
                ctrl_out = gaussian_smooth(ctrl_out, settings.tangent_filter_sigma)
            keys = decode_keys(probs[:, i], ctrl_in, ctrl_out, dense, settings.key_threshold)
            keys = rate_filter(keys, settings.rate)
            controllers.append(ControllerCurve(ctrl, dense=None, keys=keys))
            dense_out[name][ctrl] = dense
        predictions[name] = KeyPrediction(probs, in_t, out_t)
        clips[name] = RigAnimationClip(
            name=name,
            fps=fps,
            frame_count=frame_count,
            emotion=0,
            controllers=controllers,
            audio_ref="",
        )
        fingerprints[name] = dict(triple.fingerprints)

    return InferenceResult(
        fps=fps,
        frame_count=frame_count,
        clips=clips,
        dense=dense_out,
        key_predictions=predictions,
        settings=settings,
        fingerprints=fingerprints,
    )


def rigkeys_dict(result: InferenceResult) -> dict:
    """The documented keyed-animation output document."""
    configurations = []
    for name in sorted(result.clips):
        clip = result.clips[name]
        controllers = []
        for curve in clip.controllers:
            controllers.append(
                {
                    "name": curve.name,
                    "keys": [
                        {
                            "frame": k.frame,
                            "value": k.value,
                            "in_tangent": k.in_tangent,
                            "out_tangent": k.out_tangent,
                        }
                        for k in (curve.keys or [])
                    ],
                }
            )
        configurations.append({"name": name, "controllers": controllers})
    return {
        "fps": result.fps,
        "frame_count": result.frame_count,
        "configurations": configurations,
        "settings_echo": result.settings.echo(),
        "checkpoint_fingerprints": {name: dict(v) for name, v in sorted(result.fingerprints.items())},
    }


def write_rigkeys(path, result: InferenceResult) -> None:
    Path(path).write_text(json.dumps(rigkeys_dict(result), indent=2) + "\n")


def channels_text_from_rigkeys(doc: dict) -> str:
    """One channel per line: ``config/controller frame:value:in:out ...``."""
    lines = []
    for config in doc["configurations"]:
        for ctrl in config["controllers"]:
            keys = " ".join(
                f"{k['frame']}:{k['value']:.6g}:{k['in_tangent']:.6g}:{k['out_tangent']:.6g}"
                for k in ctrl["keys"]
            )
            lines.append(f"{config['name']}/{ctrl['name']} {keys}")
    return "\n".join(lines) + "\n"


def export_channels_text(result: InferenceResult) -> str:
    return channels_text_from_rigkeys(rigkeys_dict(result))
