"""Measurement providers standing in for an appearance-based detector.

A provider answers one query per frame: given a search region in camera
coordinates it returns at most one detection. The detector is modelled as
seeing only the cropped region, so a target whose center falls outside the
(frame-clipped) region is missed.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .boxes import Box
from .kalman import Detection
from .search_region import SearchRegion


class MissingFrameError(LookupError):
    pass


@dataclass(frozen=True)
class DetectorQuery:
    frame_id: int
    region: SearchRegion


class MeasurementProvider(Protocol):
    def detect(self, query: DetectorQuery) -> Detection | None: ...


def in_region(x: float, y: float, region: SearchRegion,
              frame_size: tuple[float, float] | None = None) -> bool:
    x0, y0, x1, y1 = region.clipped(frame_size)
    return x0 <= x <= x1 and y0 <= y <= y1


class ReplaySource:
    """Detections replayed from a recorded stream.

    Several records may share a frame when they carry distinct object ids
    (e.g. a distractor next to the target). Among the records whose centers
    fall inside the region, the one closest to the region center is returned.
    """

    def __init__(self, records, n_frames: int | None = None,
                 frame_size: tuple[float, float] | None = None):
        by_frame: dict[int, list[Detection]] = defaultdict(list)
        last_frame: dict[int, int] = {}
        for rec in records:
            frame, det, obj = rec if len(rec) == 3 else (*rec, 0)
            frame = int(frame)
            if frame < 0:
                raise ValueError(f"negative frame id {frame}")
            if obj in last_frame and frame <= last_frame[obj]:
                raise ValueError(
                    f"frame ids for object {obj} not strictly increasing at frame {frame}")
            last_frame[obj] = frame
            by_frame[frame].append(det)
        self._by_frame = dict(by_frame)
        if n_frames is None:
            n_frames = max(self._by_frame, default=-1) + 1
        self.n_frames = n_frames
        self.frame_size = frame_size

    def __len__(self) -> int:
        return self.n_frames

    def records(self, frame_id: int) -> list[Detection]:
        return list(self._by_frame.get(frame_id, []))

    def detect(self, query: DetectorQuery) -> Detection | None:
        if not 0 <= query.frame_id < self.n_frames:
            raise MissingFrameError(f"frame {query.frame_id} not in replay (0..{self.n_frames - 1})")
        cx, cy = query.region.center.x, query.region.center.y
        best, best_d2 = None, np.inf
        for det in self._by_frame.get(query.frame_id, ()):
            if not in_region(det.x, det.y, query.region, self.frame_size):
                continue
            d2 = (det.x - cx) ** 2 + (det.y - cy) ** 2
            if d2 < best_d2:
                best, best_d2 = det, d2
        return best

    @classmethod
    def from_jsonl(cls, path, n_frames: int | None = None,
                   frame_size: tuple[float, float] | None = None) -> "ReplaySource":
        return cls(read_detections(path), n_frames=n_frames, frame_size=frame_size)


def detect(source: MeasurementProvider, q: DetectorQuery) -> Detection | None:
    return source.detect(q)


@dataclass(frozen=True)
class NoiseSpec:
    """Synthetic detector noise and confidence model.

    ``occlusion_policy`` is ``"absent"`` (no output while occluded) or
    ``"junk"`` (a displaced box with confidence from the low band).
    """

    sigma_pos: float = 2.0
    sigma_size: float = 1.0
    high_conf: tuple[float, float] = (0.8, 1.0)
    low_conf: tuple[float, float] = (0.05, 0.3)
    occlusion_policy: str = "absent"
    junk_offset: float = 20.0
    min_size: float = 1.0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_size < 0:
            raise ValueError("noise sigmas must be non-negative")
        for lo, hi in (self.high_conf, self.low_conf):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"confidence band ({lo}, {hi}) invalid")
        if self.occlusion_policy not in ("absent", "junk"):
            raise ValueError(f"unknown occlusion policy {self.occlusion_policy!r}")


def synthetic_detect(gt: Box, noise: NoiseSpec, occluded: bool,
                     rng: np.random.Generator) -> Detection | None:
    if occluded:
        if noise.occlusion_policy == "absent":
            return None
        dx, dy = rng.normal(0.0, noise.junk_offset, size=2)
        return Detection(gt.x + dx, gt.y + dy, gt.w, gt.h,
                         float(rng.uniform(*noise.low_conf)))
    dx, dy = rng.normal(0.0, noise.sigma_pos, size=2) if noise.sigma_pos > 0 else (0.0, 0.0)
    dw, dh = rng.normal(0.0, noise.sigma_size, size=2) if noise.sigma_size > 0 else (0.0, 0.0)
    return Detection(gt.x + dx, gt.y + dy,
                     max(gt.w + dw, noise.min_size), max(gt.h + dh, noise.min_size),
                     float(rng.uniform(*noise.high_conf)))


def detection_record(frame: int, det: Detection) -> dict:
    return {"frame": int(frame), "x": det.x, "y": det.y, "w": det.w, "h": det.h,
            "conf": det.confidence}


def write_detections(path, records) -> None:
    """Write ``(frame, Detection)`` pairs as JSON Lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame, det in records:
            fh.write(json.dumps(detection_record(frame, det)) + "\n")


def read_detections(path):
    """Read detection JSONL into ``(frame, Detection, object_id)`` triples."""
    out = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                det = Detection(float(rec["x"]), float(rec["y"]), float(rec["w"]),
                                float(rec["h"]), float(rec.get("conf", 1.0)))
                out.append((int(rec["frame"]), det, rec.get("id", 0)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad detection record ({exc})") from exc
    return out
