"""Analytic-vs-numeric gradient verification for the training losses."""

from __future__ import annotations

from typing import Callable

import torch


def gradient_check(
    model: torch.nn.Module,
    compute_loss: Callable[[], torch.Tensor],
    n_entries: int = 60,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central finite differences.

    ``compute_loss`` must evaluate the loss from the model's current
    parameters. The model should be small (a few thousand parameters) and
    in float64; ``n_entries`` parameter entries are sampled at random.
    """
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ValueError("model has no trainable parameters")

    model.zero_grad(set_to_none=True)
    loss = compute_loss()
    if not torch.isfinite(loss):
        raise ValueError(f"loss is non-finite: {loss.item()!r}")
    loss.backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    gen = torch.Generator().manual_seed(seed)
    picks = torch.randperm(total, generator=gen)[: min(n_entries, total)]

    worst = 0.0
    with torch.no_grad():
        for flat_index in picks.tolist():
            pi = 0
            while flat_index >= sizes[pi]:
                flat_index -= sizes[pi]
                pi += 1
            p = params[pi].view(-1)
            original = p[flat_index].item()

            p[flat_index] = original + step
            up = compute_loss().item()
            p[flat_index] = original - step
            down = compute_loss().item()
            p[flat_index] = original

            numeric = (up - down) / (2.0 * step)
            analytic = grads[pi].view(-1)[flat_index].item()
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
