"""Training orchestration.

Per face configuration: fit the conditional VAE, then the audio regressor
against the frozen VAE's posterior means; the key predictor has no
ordering dependency on either. Everything is seeded, and with the
determinism flag on, runs are single-threaded and bitwise repeatable.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import audio as audio_mod
from .checkpoints import dataset_fingerprint, manifest_hash, save_checkpoint
from .data import (
    FaceConfiguration,
    LoadedDataset,
    NormalizationTable,
    TrainingSample,
    build_samples,
    fit_normalization,
    prune_controllers,
)
from .errors import TrainingDivergedError
from .networks import (
    AudioNet,
    ConditionalVae,
    KeyNet,
    audionet_loss,
    compute_pos_weight,
    cvae_loss,
    keynet_loss,
)

NET_KINDS = ("cvae", "audionet", "keynet")


@dataclass
class TrainPlan:
    configurations: list[FaceConfiguration]
    epochs: dict[str, int] = field(default_factory=lambda: {"cvae": 200, "audionet": 100, "keynet": 100})
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    val_split: float = 0.1
    beta: float = 0.05
    tangent_weight: float = 1.0
    patience: int = 10
    min_delta: float = 1e-5
    deterministic: bool = True
    z_dim: int = 8
    window_frames: int = audio_mod.DEFAULT_WINDOW_FRAMES

    def __post_init__(self):
        if not 0 < self.val_split < 1:
            raise ValueError("val_split must be in (0, 1)")
        if isinstance(self.epochs, int):
            self.epochs = {kind: self.epochs for kind in NET_KINDS}
        if any(self.epochs.get(kind, 0) < 1 for kind in NET_KINDS):
            raise ValueError("epochs must be >= 1 for every network")
        if not self.configurations:
            raise ValueError("plan needs at least one configuration")

    def epochs_for(self, kind: str) -> int:
        return self.epochs[kind]

    def to_dict(self) -> dict:
        return {
            "configurations": [
                {"name": c.name, "controllers": list(c.controller_names)} for c in self.configurations
            ],
            "epochs": dict(self.epochs),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "val_split": self.val_split,
            "beta": self.beta,
            "tangent_weight": self.tangent_weight,
            "patience": self.patience,
            "min_delta": self.min_delta,
            "deterministic": self.deterministic,
            "z_dim": self.z_dim,
            "window_frames": self.window_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainPlan":
        kwargs = dict(d)
        kwargs["configurations"] = [
            FaceConfiguration(c["name"], list(c["controllers"])) for c in d["configurations"]
        ]
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "TrainPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


class EarlyStopper:
    """Stop after ``patience`` consecutive epochs without a >= min_delta improvement."""

    def __init__(self, patience: int = 10, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if self.best - val_loss >= self.min_delta:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def split_clips(clip_names: list[str], val_split: float, seed: int) -> tuple[list[str], list[str]]:
    """Whole-clip train/validation split, stable for a given seed."""
    if len(clip_names) < 2:
        raise ValueError("need at least two clips to split")
    order = np.random.default_rng(seed).permutation(len(clip_names))
    n_val = min(len(clip_names) - 1, max(1, round(val_split * len(clip_names))))
    val = {clip_names[i] for i in order[:n_val]}
    return [n for n in clip_names if n not in val], [n for n in clip_names if n in val]


@dataclass
class ConfigTensors:
    """Everything one configuration's three networks train on."""

    config: FaceConfiguration
    table: NormalizationTable
    fingerprint: str
    windows: dict[str, torch.Tensor]
    x: dict[str, torch.Tensor]
    cond: dict[str, torch.Tensor]
    key_flag: dict[str, torch.Tensor]
    in_tangent: dict[str, torch.Tensor]
    out_tangent: dict[str, torch.Tensor]
    pos_weight: torch.Tensor


def _stack(samples: list[TrainingSample]) -> dict[str, torch.Tensor]:
    return {
        "windows": torch.tensor(np.stack([s.mel_window.data for s in samples]), dtype=torch.float32),
        "x": torch.tensor(np.stack([s.controller_values for s in samples]), dtype=torch.float32),
        "cond": torch.tensor(np.stack([s.condition for s in samples]), dtype=torch.float32),
        "key_flag": torch.tensor(np.stack([s.key_flag for s in samples]), dtype=torch.float32),
        "in_tangent": torch.tensor(np.stack([s.in_tangent for s in samples]), dtype=torch.float32),
        "out_tangent": torch.tensor(np.stack([s.out_tangent for s in samples]), dtype=torch.float32),
    }


def prepare_config(
    dataset: LoadedDataset, config: FaceConfiguration, plan: TrainPlan,
    train_names: list[str], val_names: list[str],
) -> ConfigTensors:
    pruned = prune_controllers(dataset.clips, config)
    table = fit_normalization(dataset.clips, pruned)
    by_split: dict[str, dict[str, torch.Tensor]] = {}
    for split, names in (("train", train_names), ("val", val_names)):
        clips = [c for c in dataset.clips if c.name in set(names)]
        samples = build_samples(
            clips, dataset.audio, pruned, table, dataset.manifest.n_emotions, plan.window_frames
        )
        by_split[split] = _stack(samples)
    pos_weight = torch.tensor(
        compute_pos_weight(by_split["train"]["key_flag"].numpy()), dtype=torch.float32
    )
    return ConfigTensors(
        config=pruned,
        table=table,
        fingerprint=dataset_fingerprint(dataset.manifest, table),
        windows={s: by_split[s]["windows"] for s in by_split},
        x={s: by_split[s]["x"] for s in by_split},
        cond={s: by_split[s]["cond"] for s in by_split},
        key_flag={s: by_split[s]["key_flag"] for s in by_split},
        in_tangent={s: by_split[s]["in_tangent"] for s in by_split},
        out_tangent={s: by_split[s]["out_tangent"] for s in by_split},
        pos_weight=pos_weight,
    )


@dataclass
class NetReport:
    config: str
    net: str
    train_losses: list[float]
    val_losses: list[float]
    best_val: float
    wall_seconds: float
    checkpoint_path: str
    stopped_epoch: int


@dataclass
class TrainReport:
    entries: list[NetReport] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entries": [vars(e) for e in self.entries],
            "events": list(self.events),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _emit(report: TrainReport, log, event: str, config: str, net: str,
          epoch: int | None = None, loss: float | None = None) -> None:
    record = {"event": event, "config": config, "net": net}
    line = f"event={event} config={config} net={net}"
    if epoch is not None:
        record["epoch"] = epoch
        line += f" epoch={epoch}"
    if loss is not None:
        record["loss"] = loss
        line += f" loss={loss}"
    report.events.append(record)
    if log is not None:
        log(line)


def _train_network(
    model: torch.nn.Module,
    batch_loss,
    val_loss_fn,
    n_train: int,
    plan: TrainPlan,
    kind: str,
    config_name: str,
    report: TrainReport,
    log,
    seed: int,
) -> NetReport:
    optimizer = torch.optim.Adam(model.parameters(), lr=plan.learning_rate)
    stopper = EarlyStopper(plan.patience, plan.min_delta)
    gen = torch.Generator().manual_seed(seed)
    best_val = math.inf
    best_state = copy.deepcopy(model.state_dict())
    train_hist: list[float] = []
    val_hist: list[float] = []
    started = time.perf_counter()
    epoch = 0
    for epoch in range(1, plan.epochs_for(kind) + 1):
        model.train()
        perm = torch.randperm(n_train, generator=gen)
        total = 0.0
        for lo in range(0, n_train, plan.batch_size):
            idx = perm[lo : lo + plan.batch_size]
            loss = batch_loss(idx)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        train_loss = total / n_train
        model.eval()
        with torch.no_grad():
            val_loss = float(val_loss_fn())
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDivergedError(
                kind, epoch, f"{kind} training diverged at epoch {epoch} (non-finite loss)"
            )
        train_hist.append(train_loss)
        val_hist.append(val_loss)
        _emit(report, log, "epoch", config_name, kind, epoch=epoch, loss=val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
        if stopper.update(val_loss):
            break
    model.load_state_dict(best_state)
    model.eval()
    return NetReport(
        config=config_name,
        net=kind,
        train_losses=train_hist,
        val_losses=val_hist,
        best_val=best_val,
        wall_seconds=time.perf_counter() - started,
        checkpoint_path="",
        stopped_epoch=epoch,
    )


def _base_meta(plan: TrainPlan, dataset: LoadedDataset, tensors: ConfigTensors, net_seed: int) -> dict:
    return {
        "configuration": tensors.config.name,
        "controllers": list(tensors.config.controller_names),
        "normalization": tensors.table.to_dict(),
        "mel_params": dict(audio_mod.MEL_PARAMS),
        "z_dim": plan.z_dim,
        "n_emotions": dataset.manifest.n_emotions,
        "emotion_names": list(dataset.manifest.emotion_names),
        "window_frames": plan.window_frames,
        "fps": dataset.manifest.fps,
        "seed": plan.seed,
        "net_seed": net_seed,
        "dataset_fingerprint": tensors.fingerprint,
        "manifest_hash": manifest_hash(dataset.manifest),
    }


def train_configuration(
    plan: TrainPlan,
    dataset: LoadedDataset,
    config: FaceConfiguration,
    out_dir,
    report: TrainReport,
    train_names: list[str],
    val_names: list[str],
    log=print,
) -> dict[str, str]:
    """Train the three networks of one configuration; returns checkpoint paths.

    The audio regressor only starts after the VAE checkpoint is finalized;
    a diverged VAE aborts it with a causal error. The key predictor has no
    ordering dependency and is trained regardless.
    """
    out_dir = Path(out_dir) / config.name
    tensors = prepare_config(dataset, config, plan, train_names, val_names)
    cfg_index = [c.name for c in plan.configurations].index(config.name)
    seeds = {kind: plan.seed * 1000 + cfg_index * 10 + i for i, kind in enumerate(NET_KINDS)}
    n_train = tensors.x["train"].shape[0]
    paths: dict[str, str] = {}
    _emit(report, log, "config:start", config.name, "-")

    # --- conditional VAE ---
    _emit(report, log, "cvae:start", config.name, "cvae")
    torch.manual_seed(seeds["cvae"])
    cvae = ConditionalVae(tensors.config.size, dataset.manifest.n_emotions, plan.z_dim)
    cvae_error: TrainingDivergedError | None = None

    def cvae_batch(idx):
        x = tensors.x["train"][idx]
        c = tensors.cond["train"][idx]
        x_hat, mu, logvar = cvae(x, c, mode="sample")
        return cvae_loss(x, x_hat, mu, logvar, plan.beta)

    def cvae_val():
        x = tensors.x["val"]
        c = tensors.cond["val"]
        x_hat, mu, logvar = cvae(x, c, mode="mean")
        return cvae_loss(x, x_hat, mu, logvar, plan.beta)

    try:
        entry = _train_network(
            cvae, cvae_batch, cvae_val, n_train, plan, "cvae", config.name, report, log, seeds["cvae"]
        )
        path = out_dir / "cvae.pt"
        save_checkpoint(path, cvae, "cvae", _base_meta(plan, dataset, tensors, seeds["cvae"]))
        entry.checkpoint_path = str(path)
        report.entries.append(entry)
        paths["cvae"] = str(path)
        _emit(report, log, "cvae:finalized", config.name, "cvae", loss=entry.best_val)
    except TrainingDivergedError as exc:
        cvae_error = exc
        _emit(report, log, "cvae:diverged", config.name, "cvae", epoch=exc.epoch)

    # --- audio regressor (needs the finalized VAE) ---
    if cvae_error is None:
        _emit(report, log, "audionet:start", config.name, "audionet")
        with torch.no_grad():
            z_target = {
                split: cvae.encode(tensors.x[split], tensors.cond[split])[0].detach()
                for split in ("train", "val")
            }
        torch.manual_seed(seeds["audionet"])
        audionet = AudioNet(z_dim=plan.z_dim, n_mels=audio_mod.N_MELS)

        def audionet_batch(idx):
            return audionet_loss(audionet(tensors.windows["train"][idx]), z_target["train"][idx])

        def audionet_val():
            return audionet_loss(audionet(tensors.windows["val"]), z_target["val"])

        entry = _train_network(
            audionet, audionet_batch, audionet_val, n_train, plan, "audionet",
            config.name, report, log, seeds["audionet"],
        )
        path = out_dir / "audionet.pt"
        save_checkpoint(path, audionet, "audionet", _base_meta(plan, dataset, tensors, seeds["audionet"]))
        entry.checkpoint_path = str(path)
        report.entries.append(entry)
        paths["audionet"] = str(path)
        _emit(report, log, "audionet:finalized", config.name, "audionet", loss=entry.best_val)
    else:
        _emit(report, log, "audionet:aborted", config.name, "audionet")

    # --- key predictor (no ordering dependency) ---
    _emit(report, log, "keynet:start", config.name, "keynet")
    torch.manual_seed(seeds["keynet"])
    keynet = KeyNet(tensors.config.size, n_mels=audio_mod.N_MELS)

    def keynet_batch(idx):
        probs, in_t, out_t = keynet(tensors.windows["train"][idx])
        return keynet_loss(
            probs, in_t, out_t,
            tensors.key_flag["train"][idx],
            tensors.in_tangent["train"][idx],
            tensors.out_tangent["train"][idx],
            tensors.pos_weight, plan.tangent_weight,
        )

    def keynet_val():
        probs, in_t, out_t = keynet(tensors.windows["val"])
        return keynet_loss(
            probs, in_t, out_t,
            tensors.key_flag["val"],
            tensors.in_tangent["val"],
            tensors.out_tangent["val"],
            tensors.pos_weight, plan.tangent_weight,
        )

    entry = _train_network(
        keynet, keynet_batch, keynet_val, n_train, plan, "keynet", config.name, report, log, seeds["keynet"]
    )
    path = out_dir / "keynet.pt"
    save_checkpoint(path, keynet, "keynet", _base_meta(plan, dataset, tensors, seeds["keynet"]))
    entry.checkpoint_path = str(path)
    report.entries.append(entry)
    paths["keynet"] = str(path)
    _emit(report, log, "keynet:finalized", config.name, "keynet", loss=entry.best_val)

    if cvae_error is not None:
        raise TrainingDivergedError(
            "cvae", cvae_error.epoch,
            f"audionet for config {config.name!r} aborted: {cvae_error}",
        )
    return paths


def train_all(plan: TrainPlan, dataset: LoadedDataset, out_dir, log=print) -> TrainReport:
    """Run the full plan; emits checkpoints under out_dir/<config>/<net>.pt."""
    torch.use_deterministic_algorithms(plan.deterministic)
    if plan.deterministic:
        torch.set_num_threads(1)
    report = TrainReport()
    names = [c.name for c in dataset.clips]
    train_names, val_names = split_clips(names, plan.val_split, plan.seed)
    for config in plan.configurations:
        train_configuration(plan, dataset, config, out_dir, report, train_names, val_names, log=log)
    report.save(Path(out_dir) / "report.json")
    return report
