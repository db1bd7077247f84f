"""rigsync: audio-driven facial rig keyframe animation.

Train on keyframed rig clips paired with audio, then generate sparse,
tangent-annotated keys on rig controllers from new audio, steered by
user-mixed emotion weights.
"""

__version__ = "0.1.0"

from .audio import AudioClip, MelSpectrogram, MelWindow
from .curves import ControllerCurve, Key, RigAnimationClip
from .data import DatasetManifest, FaceConfiguration, NormalizationTable
from .pipeline import InferenceResult, InferenceSettings

__all__ = [
    "AudioClip",
    "MelSpectrogram",
    "MelWindow",
    "ControllerCurve",
    "Key",
    "RigAnimationClip",
    "DatasetManifest",
    "FaceConfiguration",
    "NormalizationTable",
    "InferenceResult",
    "InferenceSettings",
    "__version__",
]
