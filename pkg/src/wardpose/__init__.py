"""Ward-video action recognition: pipelines, dataset tooling, and metrics."""

from .geometry import (
    CornerBox,
    Keypoint,
    KeypointSet,
    SubjectBox,
    bbox_from_keypoints,
    corners_to_xylw,
    iou,
    rescale_box,
    xylw_to_corners,
)
from .labels import LABELS, ActionLabel, label_from_code
from .clips import ClipManifest, read_clip, write_clip
from .protocol import ActionPrediction, RecognitionWindow
from .backend import RemoteBackend, SyntheticBackend, open_backend
from .pipeline import RunConfig, run_offline, run_online

__version__ = "0.1.0"

__all__ = [
    "ActionLabel",
    "ActionPrediction",
    "ClipManifest",
    "CornerBox",
    "Keypoint",
    "KeypointSet",
    "LABELS",
    "RecognitionWindow",
    "RemoteBackend",
    "RunConfig",
    "SubjectBox",
    "SyntheticBackend",
    "bbox_from_keypoints",
    "corners_to_xylw",
    "iou",
    "label_from_code",
    "open_backend",
    "read_clip",
    "rescale_box",
    "run_offline",
    "run_online",
    "write_clip",
    "xylw_to_corners",
]
