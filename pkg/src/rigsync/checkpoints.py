"""Self-describing checkpoint files with dataset fingerprinting.

A checkpoint carries everything inference needs besides the audio: the
architecture, controller list, normalization table, mel parameters and a
fingerprint of the dataset the network was trained on. Triples loaded for
inference must agree on that fingerprint.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import torch

from .data import DatasetManifest, NormalizationTable
from .errors import CheckpointFormatError
from .networks import AudioNet, ConditionalVae, KeyNet

FORMAT_VERSION = 1
NET_KINDS = ("cvae", "audionet", "keynet")


def dataset_fingerprint(manifest: DatasetManifest, table: NormalizationTable) -> str:
    """Content hash of the manifest plus the fitted normalization table."""
    canon = json.dumps(
        {"manifest": manifest.to_dict(), "normalization": table.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(canon.encode()).hexdigest()


def manifest_hash(manifest: DatasetManifest) -> str:
    """Content hash of the manifest alone (shared across configurations)."""
    canon = json.dumps(manifest.to_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def file_fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_checkpoint(path, model: torch.nn.Module, kind: str, meta: dict) -> None:
    if kind not in NET_KINDS:
        raise ValueError(f"kind must be one of {NET_KINDS}, got {kind!r}")
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arch": model.arch,
        "meta": meta,
        "state_dict": model.state_dict(),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, str(path))


def load_checkpoint(path):
    """Read a checkpoint; returns (kind, arch, meta, state_dict)."""
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointFormatError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointFormatError(f"{path} is not a recognized checkpoint")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    return payload["kind"], payload["arch"], payload["meta"], payload["state_dict"]


def build_model(kind: str, arch: dict) -> torch.nn.Module:
    if kind == "cvae":
        return ConditionalVae(
            n_controllers=arch["n_controllers"],
            n_emotions=arch["n_emotions"],
            z_dim=arch["z_dim"],
            hidden=tuple(arch["hidden"]),
        )
    if kind == "audionet":
        return AudioNet(
            z_dim=arch["z_dim"],
            n_mels=arch["n_mels"],
            channels=tuple(arch["channels"]),
            gru_hidden=arch["gru_hidden"],
            dense_hidden=arch["dense_hidden"],
        )
    if kind == "keynet":
        return KeyNet(
            n_controllers=arch["n_controllers"],
            n_mels=arch["n_mels"],
            channels=tuple(arch["channels"]),
            gru_hidden=arch["gru_hidden"],
            dense_hidden=arch["dense_hidden"],
        )
    raise CheckpointFormatError(f"unknown network kind {kind!r}")


def load_model(path):
    """Rebuild the module from a checkpoint; returns (model, kind, meta)."""
    kind, arch, meta, state = load_checkpoint(path)
    model = build_model(kind, arch)
    model.load_state_dict(state)
    model.eval()
    return model, kind, meta
