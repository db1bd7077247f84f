"""The inference HTTP service.

Checkpoints load once, before serving, and are never mutated; audio
uploads are content-addressed; /infer responses are cached by
(audio id, settings) so identical requests return byte-identical bodies.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from .. import pipeline
from ..audio import AudioClip, load_wav_bytes
from ..errors import AudioFormatError, FingerprintMismatchError
from .schemas import AudioUploadResponse, InferRequest, ModelsResponse

MAX_PREVIEW_POINTS = 2000


@dataclass
class SessionState:
    triples: dict[str, pipeline.ModelTriple]
    max_seconds: float
    audio: dict[str, AudioClip] = field(default_factory=dict)
    responses: dict[tuple[str, str], bytes] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _preview(result: pipeline.InferenceResult) -> dict:
    stride = max(1, math.ceil(result.frame_count / MAX_PREVIEW_POINTS))
    frames = list(range(0, result.frame_count, stride))
    out: dict = {}
    for config in sorted(result.dense):
        out[config] = {}
        for ctrl in result.dense[config]:
            values = result.dense[config][ctrl]
            out[config][ctrl] = {
                "frames": frames,
                "values": [float(values[f]) for f in frames],
            }
    return out


def create_app(
    ckpt_dir=None,
    triples: dict[str, pipeline.ModelTriple] | None = None,
    allow_origin: str | None = None,
    max_seconds: float = 60.0,
) -> FastAPI:
    """Build the service; models load exclusively, before any request."""
    if triples is None:
        if ckpt_dir is None:
            raise ValueError("need ckpt_dir or preloaded triples")
        # defer fingerprint complaints to /infer so the mismatch surfaces as 409
        triples = pipeline.load_triples(ckpt_dir, verify=False)
    state = SessionState(triples=triples, max_seconds=max_seconds)
    meta = next(iter(triples.values())).meta

    app = FastAPI(title="rigsync inference service")
    app.state.session = state

    if allow_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[allow_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/models", response_model=ModelsResponse)
    def models() -> ModelsResponse:
        return ModelsResponse(
            configurations={name: t.controllers for name, t in sorted(state.triples.items())},
            emotion_names=list(meta["emotion_names"]),
            fps=float(meta["fps"]),
            n_emotions=int(meta["n_emotions"]),
            checkpoint_fingerprints={name: dict(t.fingerprints) for name, t in sorted(state.triples.items())},
        )

    @app.post("/audio", response_model=AudioUploadResponse)
    async def upload_audio(request: Request) -> AudioUploadResponse:
        body = await request.body()
        try:
            clip = load_wav_bytes(body)
        except AudioFormatError as exc:
            raise HTTPException(status_code=400, detail={"reason": exc.reason}) from exc
        if clip.duration > state.max_seconds:
            raise HTTPException(
                status_code=413,
                detail={"reason": "too_long", "max_seconds": state.max_seconds},
            )
        audio_id = hashlib.sha256(body).hexdigest()
        with state.lock:
            state.audio.setdefault(audio_id, clip)
        return AudioUploadResponse(audio_id=audio_id)

    @app.post("/infer")
    def run_infer(req: InferRequest) -> Response:
        clip = state.audio.get(req.audio_id)
        if clip is None:
            raise HTTPException(status_code=404, detail={"reason": "unknown_audio_id"})
        n_emotions = int(meta["n_emotions"])
        if len(req.emotion_weights) != n_emotions:
            raise HTTPException(
                status_code=400,
                detail={"reason": "weights_length", "expected": n_emotions},
            )
        if req.strict and any(not 0.0 <= w <= 1.0 for w in req.emotion_weights):
            raise HTTPException(status_code=422, detail={"reason": "weight_out_of_range"})
        try:
            settings = pipeline.InferenceSettings(
                emotion_weights=np.asarray(req.emotion_weights, dtype=np.float64),
                key_threshold=req.settings.key_threshold,
                smooth_upper=req.settings.smooth_upper,
                smooth_sigma=req.settings.smooth_sigma,
                rate=req.settings.rate,
                tangent_filter_sigma=req.settings.tangent_filter_sigma,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail={"reason": "invalid_settings", "message": str(exc)}) from exc

        cache_key = (req.audio_id, json.dumps(settings.echo(), sort_keys=True))
        cached = state.responses.get(cache_key)
        if cached is None:
            try:
                result = pipeline.infer(clip, state.triples, settings)
            except FingerprintMismatchError as exc:
                raise HTTPException(status_code=409, detail={"reason": "fingerprint_mismatch", "message": str(exc)}) from exc
            body_doc = pipeline.rigkeys_dict(result)
            body_doc["preview"] = _preview(result)
            cached = json.dumps(body_doc).encode()
            with state.lock:
                state.responses.setdefault(cache_key, cached)
        return Response(content=cached, media_type="application/json")

    return app
