"""The three trainable networks and their losses.

A conditional VAE reconstructs controller vectors under an emotion
condition; an audio regressor maps mel windows to the VAE's latent space;
a key predictor maps the same windows to per-controller key probabilities
and tangent slopes for the window's center frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

BCE_EPS = 1e-7


@dataclass
class KeyPrediction:
    """Per-controller key probability and tangent slopes.

    Arrays are [controllers] for a single frame or [frames, controllers]
    when stacked over a clip.
    """

    key_probs: np.ndarray
    in_tangents: np.ndarray
    out_tangents: np.ndarray


class ConditionalVae(nn.Module):
    """Dense VAE over normalized controller vectors, conditioned on emotion weights.

    The condition is concatenated to both the encoder input and the decoder
    input; the decoder is the piece used at inference.
    """

    def __init__(self, n_controllers: int, n_emotions: int = 6, z_dim: int = 8,
                 hidden: tuple[int, int] = (128, 64)):
        super().__init__()
        self.n_controllers = n_controllers
        self.n_emotions = n_emotions
        self.z_dim = z_dim
        self.hidden = tuple(hidden)
        h1, h2 = hidden
        self.encoder = nn.Sequential(
            nn.Linear(n_controllers + n_emotions, h1), nn.Tanh(),
            nn.Linear(h1, h2), nn.Tanh(),
        )
        self.mu_head = nn.Linear(h2, z_dim)
        self.logvar_head = nn.Linear(h2, z_dim)
        self.decoder = nn.Sequential(
            nn.Linear(z_dim + n_emotions, h2), nn.Tanh(),
            nn.Linear(h2, h1), nn.Tanh(),
            nn.Linear(h1, n_controllers),
        )

    @property
    def arch(self) -> dict:
        return {
            "n_controllers": self.n_controllers,
            "n_emotions": self.n_emotions,
            "z_dim": self.z_dim,
            "hidden": list(self.hidden),
        }

    def encode(self, x: torch.Tensor, c: torch.Tensor):
        h = self.encoder(torch.cat([x, c], dim=-1))
        return self.mu_head(h), self.logvar_head(h)

    def decode(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return self.decoder(torch.cat([z, c], dim=-1))

    def forward(self, x: torch.Tensor, c: torch.Tensor, mode: str = "mean"):
        if x.shape[-1] != self.n_controllers:
            raise ValueError(f"expected {self.n_controllers} controller values, got {x.shape[-1]}")
        if c.shape[-1] != self.n_emotions:
            raise ValueError(f"expected {self.n_emotions} condition weights, got {c.shape[-1]}")
        mu, logvar = self.encode(x, c)
        if mode == "mean":
            z = mu
        elif mode == "sample":
            z = mu + torch.exp(0.5 * logvar) * torch.randn_like(mu)
        else:
            raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")
        return self.decode(z, c), mu, logvar


def cvae_loss(x: torch.Tensor, x_hat: torch.Tensor, mu: torch.Tensor,
              logvar: torch.Tensor, beta: float = 0.05) -> torch.Tensor:
    """Mean-squared reconstruction plus beta-weighted KL to a unit Gaussian.

    The KL term is 0.5*(mu^2 + exp(logvar) - 1 - logvar) per latent
    dimension, summed over dimensions and averaged over the batch; with
    beta=0 the loss is exactly the reconstruction MSE.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    recon = torch.mean((x_hat - x) ** 2)
    kl = 0.5 * (mu**2 + torch.exp(logvar) - 1.0 - logvar)
    kl = kl.sum(dim=-1).mean()
    return recon + beta * kl


class AudioFrontend(nn.Module):
    """Conv stack over a mel window, then a GRU over the time axis.

    The second and third conv layers stride 2 along time; all three stride
    2 along the mel axis. The GRU's final hidden state summarizes the window.
    """

    def __init__(self, n_mels: int = 64, channels: tuple[int, int, int] = (8, 16, 32),
                 gru_hidden: int = 64):
        super().__init__()
        c1, c2, c3 = channels
        self.n_mels = n_mels
        self.channels = tuple(channels)
        self.gru_hidden = gru_hidden
        self.conv = nn.Sequential(
            nn.Conv2d(1, c1, 3, stride=(2, 1), padding=1), nn.ELU(),
            nn.Conv2d(c1, c2, 3, stride=(2, 2), padding=1), nn.ELU(),
            nn.Conv2d(c2, c3, 3, stride=(2, 2), padding=1), nn.ELU(),
        )
        mel_out = math.ceil(math.ceil(math.ceil(n_mels / 2) / 2) / 2)
        self.gru = nn.GRU(input_size=c3 * mel_out, hidden_size=gru_hidden, batch_first=True)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        if w.ndim == 3:
            w = w.unsqueeze(1)
        h = self.conv(w)  # [B, C, mel', t']
        h = h.permute(0, 3, 1, 2).flatten(2)  # [B, t', C*mel']
        out, _ = self.gru(h)
        return out[:, -1]


class AudioNet(nn.Module):
    """Mel window -> latent vector of the paired VAE."""

    def __init__(self, z_dim: int = 8, n_mels: int = 64,
                 channels: tuple[int, int, int] = (8, 16, 32),
                 gru_hidden: int = 64, dense_hidden: int = 64):
        super().__init__()
        self.z_dim = z_dim
        self.dense_hidden = dense_hidden
        self.frontend = AudioFrontend(n_mels, channels, gru_hidden)
        self.head = nn.Sequential(
            nn.Linear(gru_hidden, dense_hidden), nn.ELU(),
            nn.Linear(dense_hidden, z_dim),
        )

    @property
    def arch(self) -> dict:
        return {
            "z_dim": self.z_dim,
            "n_mels": self.frontend.n_mels,
            "channels": list(self.frontend.channels),
            "gru_hidden": self.frontend.gru_hidden,
            "dense_hidden": self.dense_hidden,
        }

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        return self.head(self.frontend(w))


def audionet_loss(z_hat: torch.Tensor, z_target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over the latent dimensions."""
    if z_hat.shape != z_target.shape:
        raise ValueError(f"latent shape mismatch: {tuple(z_hat.shape)} vs {tuple(z_target.shape)}")
    return torch.mean((z_hat - z_target) ** 2)


class KeyNet(nn.Module):
    """Mel window -> per-controller key probability and in/out tangents.

    Same trunk shape as AudioNet with independent weights; the head emits
    3 values per controller for the window's center frame.
    """

    def __init__(self, n_controllers: int, n_mels: int = 64,
                 channels: tuple[int, int, int] = (8, 16, 32),
                 gru_hidden: int = 64, dense_hidden: int = 64):
        super().__init__()
        self.n_controllers = n_controllers
        self.dense_hidden = dense_hidden
        self.frontend = AudioFrontend(n_mels, channels, gru_hidden)
        self.head = nn.Sequential(
            nn.Linear(gru_hidden, dense_hidden), nn.ELU(),
            nn.Linear(dense_hidden, 3 * n_controllers),
        )

    @property
    def arch(self) -> dict:
        return {
            "n_controllers": self.n_controllers,
            "n_mels": self.frontend.n_mels,
            "channels": list(self.frontend.channels),
            "gru_hidden": self.frontend.gru_hidden,
            "dense_hidden": self.dense_hidden,
        }

    def forward(self, w: torch.Tensor):
        out = self.head(self.frontend(w)).view(-1, 3, self.n_controllers)
        probs = torch.sigmoid(out[:, 0])
        return probs, out[:, 1], out[:, 2]


def keynet_loss(
    probs: torch.Tensor,
    in_tangent: torch.Tensor,
    out_tangent: torch.Tensor,
    key_flag: torch.Tensor,
    in_target: torch.Tensor,
    out_target: torch.Tensor,
    pos_weight: torch.Tensor,
    tangent_weight: float = 1.0,
) -> torch.Tensor:
    """Class-weighted binary cross-entropy on key probabilities plus
    tangent MSE restricted to frames that actually carry a key.

    ``pos_weight`` is per controller (typically #neg/#pos over the training
    set). Probabilities are clamped to [eps, 1-eps] before the log.
    """
    p = probs.clamp(BCE_EPS, 1.0 - BCE_EPS)
    bce = -(pos_weight * key_flag * torch.log(p) + (1.0 - key_flag) * torch.log1p(-p))
    bce = bce.mean()
    n_keyed = key_flag.sum()
    tangent_sq = key_flag * ((in_tangent - in_target) ** 2 + (out_tangent - out_target) ** 2)
    tangent_mse = tangent_sq.sum() / (2.0 * n_keyed.clamp(min=1.0))
    return bce + tangent_weight * tangent_mse


def compute_pos_weight(key_flags: np.ndarray) -> np.ndarray:
    """Per-controller #neg/#pos over [samples, controllers]; 1.0 when degenerate."""
    flags = np.asarray(key_flags)
    pos = flags.sum(axis=0)
    neg = flags.shape[0] - pos
    return np.where((pos > 0) & (neg > 0), neg / np.maximum(pos, 1), 1.0)
