"""Pydantic request/response models for the inference service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class AudioUploadResponse(BaseModel):
    audio_id: str


class InferSettings(BaseModel):
    key_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    smooth_upper: bool = False
    smooth_sigma: float = Field(default=2.0, ge=0.0)
    rate: int = 1
    tangent_filter_sigma: float = Field(default=0.0, ge=0.0)


class InferRequest(BaseModel):
    audio_id: str
    emotion_weights: list[float]
    settings: InferSettings = InferSettings()
    strict: bool = False


class ModelsResponse(BaseModel):
    configurations: dict[str, list[str]]
    emotion_names: list[str]
    fps: float
    n_emotions: int
    checkpoint_fingerprints: dict[str, dict[str, str]]
