"""Sparse/dense animation curves.

Keyframes carry in/out tangent slopes (value per frame); segments between
keys are cubic Hermite. This module owns evaluation, key extraction from
dense data, dense reconstruction from keys, and the post filters applied
to generated animation (Gaussian smoothing, key-rate snapping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Key",
    "ControllerCurve",
    "RigAnimationClip",
    "hermite_eval",
    "reconstruct_dense",
    "extract_keys",
    "finite_difference_slopes",
    "gaussian_smooth",
    "gaussian_kernel",
    "rate_filter",
]


@dataclass(frozen=True)
class Key:
    """One keyframe: integer frame, value, and incoming/outgoing slopes."""

    frame: int
    value: float
    in_tangent: float = 0.0
    out_tangent: float = 0.0

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"key frame must be >= 0, got {self.frame}")
        for name in ("value", "in_tangent", "out_tangent"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"key {name} must be finite, got {v!r}")


@dataclass
class ControllerCurve:
    """One rig controller's animation, as dense per-frame values, sparse keys, or both."""

    name: str
    dense: np.ndarray | None = None
    keys: list[Key] | None = None

    def __post_init__(self):
        if self.dense is None and self.keys is None:
            raise ValueError(f"curve {self.name!r} needs dense values or keys")
        if self.dense is not None:
            self.dense = np.asarray(self.dense, dtype=np.float64)
            if self.dense.ndim != 1:
                raise ValueError(f"curve {self.name!r}: dense values must be 1-D")
            if not np.all(np.isfinite(self.dense)):
                raise ValueError(f"curve {self.name!r}: non-finite dense values")
        if self.keys is not None:
            frames = [k.frame for k in self.keys]
            if any(b <= a for a, b in zip(frames, frames[1:])):
                raise ValueError(f"curve {self.name!r}: key frames must be strictly increasing")

    def values(self, frame_count: int) -> np.ndarray:
        """Dense values, reconstructing from keys when no baked values exist."""
        if self.dense is not None:
            if len(self.dense) != frame_count:
                raise ValueError(
                    f"curve {self.name!r}: dense length {len(self.dense)} != frame count {frame_count}"
                )
            return self.dense
        return reconstruct_dense(self.keys, frame_count)

    def has_keys(self) -> bool:
        return bool(self.keys)


@dataclass
class RigAnimationClip:
    """A named set of controller curves at a fixed frame rate with an emotion label."""

    name: str
    fps: float
    frame_count: int
    emotion: int
    controllers: list[ControllerCurve] = field(default_factory=list)
    audio_ref: str = ""

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError(f"clip {self.name!r}: frame_count must be >= 2")
        if self.fps <= 0:
            raise ValueError(f"clip {self.name!r}: fps must be > 0")
        if self.emotion < 0:
            raise ValueError(f"clip {self.name!r}: emotion label must be >= 0")
        for curve in self.controllers:
            if curve.dense is not None and len(curve.dense) != self.frame_count:
                raise ValueError(
                    f"clip {self.name!r}: curve {curve.name!r} has {len(curve.dense)} values, "
                    f"expected {self.frame_count}"
                )
            if curve.keys:
                if curve.keys[-1].frame >= self.frame_count:
                    raise ValueError(
                        f"clip {self.name!r}: curve {curve.name!r} keys a frame beyond frame_count"
                    )

    def controller(self, name: str) -> ControllerCurve:
        for curve in self.controllers:
            if curve.name == name:
                return curve
        raise KeyError(f"clip {self.name!r} has no controller {name!r}")

    @property
    def controller_names(self) -> list[str]:
        return [c.name for c in self.controllers]


def _hermite_basis(t):
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return h00, h10, h01, h11


def hermite_eval(k0: Key, k1: Key, frame: float) -> float:
    """Evaluate the cubic Hermite segment from ``k0`` to ``k1`` at ``frame``.

    The outgoing tangent of ``k0`` and the incoming tangent of ``k1`` govern
    the segment; slopes are scaled by segment length so tangents stay in
    value-per-frame units.
    """
    span = k1.frame - k0.frame
    if span <= 0:
        raise ValueError(f"invalid segment: k0.frame={k0.frame} must be < k1.frame={k1.frame}")
    if frame < k0.frame or frame > k1.frame:
        raise ValueError(f"frame {frame} outside segment [{k0.frame}, {k1.frame}]")
    t = (frame - k0.frame) / span
    h00, h10, h01, h11 = _hermite_basis(t)
    return float(
        h00 * k0.value
        + h10 * span * k0.out_tangent
        + h01 * k1.value
        + h11 * span * k1.in_tangent
    )


def reconstruct_dense(keys: list[Key] | None, frame_count: int) -> np.ndarray:
    """Bake keys into per-frame values.

    Frames before the first / after the last key hold that key's value; the
    result passes through every key value exactly.
    """
    if not keys:
        raise ValueError("need at least one key")
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    frames = [k.frame for k in keys]
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ValueError("key frames must be strictly increasing")
    if frames[0] < 0 or frames[-1] >= frame_count:
        raise ValueError(f"key frames must lie in [0, {frame_count})")

    out = np.empty(frame_count, dtype=np.float64)
    out[: keys[0].frame] = keys[0].value
    out[keys[-1].frame :] = keys[-1].value
    for k0, k1 in zip(keys, keys[1:]):
        span = k1.frame - k0.frame
        t = np.arange(span, dtype=np.float64) / span
        h00, h10, h01, h11 = _hermite_basis(t)
        out[k0.frame : k1.frame] = (
            h00 * k0.value
            + h10 * span * k0.out_tangent
            + h01 * k1.value
            + h11 * span * k1.in_tangent
        )
    return out


def finite_difference_slopes(dense: np.ndarray) -> np.ndarray:
    """Per-frame slopes: central differences inside, one-sided at the ends."""
    return np.gradient(np.asarray(dense, dtype=np.float64))


def extract_keys(dense, tolerance: float) -> list[Key]:
    """Fit keys to dense values by greedy refinement.

    Starts from keys at the first and last frame, then repeatedly keys the
    frame of maximum reconstruction error until every frame is within
    ``tolerance``. Slopes come from finite differences of the input, so the
    result is deterministic for a given input/tolerance.
    """
    d = np.asarray(dense, dtype=np.float64)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("need a 1-D sequence of at least two frames")
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite values in dense input")
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")

    slopes = finite_difference_slopes(d)
    n = d.size
    key_frames = [0, n - 1]
    while True:
        keys = [Key(f, float(d[f]), float(slopes[f]), float(slopes[f])) for f in key_frames]
        err = np.abs(reconstruct_dense(keys, n) - d)
        worst = int(np.argmax(err))
        if err[worst] <= tolerance:
            return keys
        # reconstruction is exact at keyed frames, so `worst` is always new
        idx = int(np.searchsorted(key_frames, worst))
        key_frames.insert(idx, worst)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized Gaussian taps truncated at radius ceil(3*sigma)."""
    if sigma <= 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (taps / sigma) ** 2)
    return w / w.sum()


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    # mirror about the edge samples without repeating them; valid for any offset
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    j = np.mod(idx, period)
    return np.where(j >= n, period - j, j)


def gaussian_smooth(dense, sigma: float) -> np.ndarray:
    """Gaussian-filter a dense curve with reflective boundaries.

    ``sigma`` is in frames; 0 is the identity. The kernel is a convex
    combination, so constants pass through exactly and the output never
    leaves the input's [min, max] range.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(dense, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dense input must be 1-D")
    if sigma == 0 or x.size <= 1:
        return x.copy()
    w = gaussian_kernel(sigma)
    radius = (len(w) - 1) // 2
    offsets = np.arange(-radius, radius + 1)
    gathered = x[_reflect_indices(np.arange(x.size)[:, None] + offsets[None, :], x.size)]
    return gathered @ w


def rate_filter(keys: list[Key], rate: int) -> list[Key]:
    """Snap keys onto a frame grid of stride ``rate`` (1, 2 or 4).

    First and last keys keep their original frames. Interior keys snap to
    the nearest grid frame (halves round up); when several keys land on one
    grid frame the earliest wins, the rest are dropped.
    """
    if rate not in (1, 2, 4):
        raise ValueError(f"rate must be 1, 2 or 4, got {rate}")
    if rate == 1 or len(keys) <= 2:
        return list(keys)
    first, last = keys[0], keys[-1]
    kept = [first]
    for k in keys[1:-1]:
        snapped = ((k.frame + rate // 2) // rate) * rate
        if snapped <= kept[-1].frame or snapped >= last.frame:
            continue
        kept.append(Key(snapped, k.value, k.in_tangent, k.out_tangent))
    kept.append(last)
    return kept
