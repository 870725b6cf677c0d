"""Motion-prediction tracking core with camera-motion decoupling."""
from .boxes import Box, iou
from .config import TrackerConfig, load_config
from .geometry import (CorrespondenceSet, Homography, Point2, RansacConfig, RansacReport,
                       apply_homography, dlt_homography, project_box, ransac_homography)
from .kalman import Detection, KalmanModel, ObjectState, gated_update, init_state, predict, update
from .pipeline import FrameResult, SequenceRecord, TrackerSession, advance_reference, run_sequence, step
from .search_region import SearchRegion, adaptive_region

__version__ = "0.1.0"

__all__ = [
    "Box", "iou", "TrackerConfig", "load_config", "CorrespondenceSet", "Homography", "Point2",
    "RansacConfig", "RansacReport", "apply_homography", "dlt_homography", "project_box",
    "ransac_homography", "Detection", "KalmanModel", "ObjectState", "gated_update", "init_state",
    "predict", "update", "FrameResult", "SequenceRecord", "TrackerSession", "advance_reference",
    "run_sequence", "step", "SearchRegion", "adaptive_region",
]
