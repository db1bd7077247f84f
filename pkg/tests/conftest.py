"""Shared fixtures: a small trained model set reused across test modules."""

import numpy as np
import pytest

from rigsync import synthetic
from rigsync.data import FaceConfiguration, load_dataset
from rigsync.training import TrainPlan, train_all

TINY_CONFIGS = [
    FaceConfiguration("mouth", ["jaw_open", "lip_corner_l"]),
    FaceConfiguration("upper", ["brow_l", "brow_r"]),
]


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A fast two-configuration training run with real checkpoints."""
    root = tmp_path_factory.mktemp("tiny_run")
    data_dir = root / "data"
    manifest = synthetic.generate_synthetic_dataset(
        data_dir,
        seed=11,
        n_clips=5,
        frames_per_clip=80,
        configurations=TINY_CONFIGS,
        n_emotions_used=2,
    )
    dataset = load_dataset(manifest)
    plan = TrainPlan(
        configurations=TINY_CONFIGS,
        epochs={"cvae": 10, "audionet": 4, "keynet": 4},
        batch_size=32,
        seed=5,
        val_split=0.2,
    )
    ckpt_dir = root / "ckpts"
    report = train_all(plan, dataset, ckpt_dir, log=None)
    return {
        "root": root,
        "data_dir": data_dir,
        "manifest": manifest,
        "dataset": dataset,
        "plan": plan,
        "ckpt_dir": ckpt_dir,
        "report": report,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
