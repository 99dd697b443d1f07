"""Linear object detection in document images by multiple object tracking.

A horizontal and a vertical scan read the image one column (row) at a
time; dark spans are matched to per-object trackers, and the resulting
objects are merged into vector segments and overlapping instance masks.
"""

__version__ = "0.1.0"

from .engine import Axis, DetectionResult, EngineParams, LinearObject, detect, scan  # noqa: E402
from .extraction import ExtractionParams, Observation, extract_observations  # noqa: E402
from .image_io import GrayImage, LabelMasks, SynthSegment, SynthSpec, load_gray, render_synthetic  # noqa: E402
from .trackers import TrackerKind, TrackerParams, init_tracker  # noqa: E402

__all__ = [
    "Axis", "DetectionResult", "EngineParams", "LinearObject", "detect", "scan",
    "ExtractionParams", "Observation", "extract_observations",
    "GrayImage", "LabelMasks", "SynthSegment", "SynthSpec", "load_gray", "render_synthetic",
    "TrackerKind", "TrackerParams", "init_tracker",
]
