"""Command-line entry points: a thin client over the core package.

Exit codes: 0 success, 2 validation/usage error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import audio as audio_mod
from . import pipeline, synthetic
from .data import DEFAULT_EMOTION_NAMES, DatasetManifest, ManifestEntry, load_clip, load_dataset, save_manifest
from .errors import AudioFormatError, CheckpointFormatError, FingerprintMismatchError
from .training import TrainPlan, train_all


def _parse_weights(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ValueError(f"weights must be comma-separated numbers, got {text!r}") from exc


def cmd_extract(args) -> int:
    scene_dir = Path(args.scene_json)
    if not scene_dir.is_dir():
        raise ValueError(f"{scene_dir} is not a directory")
    entries = []
    fps = None
    for clip_path in sorted(scene_dir.glob("*.json")):
        if clip_path.name == "manifest.json":
            continue
        wav_path = clip_path.with_suffix(".wav")
        if not wav_path.exists():
            raise ValueError(f"no paired audio for {clip_path.name} (expected {wav_path.name})")
        clip = load_clip(clip_path)
        if fps is None:
            fps = clip.fps
        elif fps != clip.fps:
            raise ValueError(f"{clip_path.name}: fps {clip.fps} disagrees with {fps}")
        entries.append(ManifestEntry(clip_path.name, wav_path.name, clip.emotion))
    if not entries:
        raise ValueError(f"no clip JSON files under {scene_dir}")
    emotion_names = args.emotions.split(",") if args.emotions else list(DEFAULT_EMOTION_NAMES)
    manifest = DatasetManifest(entries, fps, emotion_names)
    save_manifest(args.manifest, manifest)
    print(f"wrote {args.manifest} ({len(entries)} clips)")
    return 0


def cmd_synth(args) -> int:
    manifest_path = synthetic.generate_synthetic_dataset(
        args.out,
        seed=args.seed,
        n_clips=args.clips,
        frames_per_clip=args.frames,
        n_emotions_used=args.emotions_used,
        fps=args.fps,
    )
    print(f"wrote {manifest_path}")
    return 0


def cmd_train(args) -> int:
    plan = TrainPlan.load(args.plan)
    dataset = load_dataset(args.data)
    report = train_all(plan, dataset, args.out)
    n_ckpts = sum(1 for e in report.entries if e.checkpoint_path)
    print(f"trained {n_ckpts} networks; report at {Path(args.out) / 'report.json'}")
    return 0


def _settings_from_args(args) -> pipeline.InferenceSettings:
    weights = _parse_weights(args.weights)
    return pipeline.InferenceSettings(
        emotion_weights=pipeline.mix_emotions(weights, len(weights)),
        key_threshold=args.key_threshold,
        smooth_upper=args.smooth_upper,
        smooth_sigma=args.smooth_sigma,
        rate=args.rate,
        tangent_filter_sigma=args.tangent_sigma,
    )


def cmd_infer(args) -> int:
    triples = pipeline.load_triples(args.ckpts)
    wav = audio_mod.load_wav(args.audio)
    result = pipeline.infer(wav, triples, _settings_from_args(args))
    pipeline.write_rigkeys(args.out, result)
    print(f"wrote {args.out}")
    return 0


def cmd_export(args) -> int:
    doc = json.loads(Path(args.keys).read_text())
    Path(args.out).write_text(pipeline.channels_text_from_rigkeys(doc))
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        ckpt_dir=args.ckpts,
        allow_origin=args.allow_origin,
        max_seconds=args.max_seconds,
    )
    port = int(os.environ.get("PORT", args.port))
    uvicorn.run(app, host=args.host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rigsync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="build a dataset manifest from a directory of clip JSON + WAV pairs")
    p.add_argument("--scene-json", required=True, help="directory of clip .json files with matching .wav files")
    p.add_argument("--manifest", required=True, help="output manifest path")
    p.add_argument("--emotions", default=None, help="comma-separated emotion names (default: built-in six)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="generate the synthetic oracle dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=12)
    p.add_argument("--frames", type=int, default=180)
    p.add_argument("--emotions-used", type=int, default=4)
    p.add_argument("--fps", type=float, default=24.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train all configured network triples")
    p.add_argument("--plan", required=True, help="train plan JSON")
    p.add_argument("--data", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="generate keyed animation from an audio file")
    p.add_argument("--audio", required=True)
    p.add_argument("--ckpts", required=True)
    p.add_argument("--weights", required=True, help="comma-separated emotion weights, e.g. 0,0,1,0,0,0")
    p.add_argument("--out", required=True)
    p.add_argument("--key-threshold", type=float, default=0.5)
    p.add_argument("--smooth-upper", action="store_true")
    p.add_argument("--smooth-sigma", type=float, default=2.0)
    p.add_argument("--rate", type=int, default=1, choices=(1, 2, 4))
    p.add_argument("--tangent-sigma", type=float, default=0.0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("export", help="convert a keyed-animation JSON to channel-per-line text")
    p.add_argument("--keys", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpts", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--allow-origin", default=None, help="enable CORS for this origin")
    p.add_argument("--max-seconds", type=float, default=60.0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError,
            AudioFormatError, CheckpointFormatError, FingerprintMismatchError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
