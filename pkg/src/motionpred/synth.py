"""Synthetic sequences with known camera motion, object motion and occlusions.

The background is a world plane; the camera at frame t maps it into the
image by a rotation about the image center plus a translation, so the true
reference-to-frame map is an exact homography. Frame 0's camera coincides
with the world frame.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Box
from .detector import NoiseSpec, ReplaySource, detection_record, read_detections, synthetic_detect
from .geometry import CorrespondenceSet, Homography, Point2, project_box, transform_points
from .kalman import Detection
from .pipeline import SequenceRecord, expected_ref_frame


class SpecError(ValueError):
    """Invalid scenario field; ``path`` is the dotted location of the problem."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


CAMERA_KINDS = ("none", "pan", "shake", "composite")
OBJECT_KINDS = ("static", "constant_velocity", "piecewise", "accelerating")


@dataclass(frozen=True)
class CameraSpec:
    kind: str = "none"
    pan: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    period: float = 20.0
    phase: float = 0.0
    rotation: float = 0.0  # peak shake rotation, radians

    def pose(self, t: float) -> tuple[float, float, float]:
        """Camera translation (world px) and roll angle at frame ``t``."""
        tx = ty = angle = 0.0
        if self.kind in ("pan", "composite"):
            tx += self.pan[0] * t
            ty += self.pan[1] * t
        if self.kind in ("shake", "composite"):
            arg = 2.0 * math.pi * t / self.period + self.phase
            tx += self.amplitude * math.sin(arg)
            ty += self.amplitude * math.sin(arg + math.pi / 3.0)
            angle = self.rotation * math.sin(arg)
        return tx, ty, angle


@dataclass(frozen=True)
class ObjectSpec:
    kind: str = "static"
    start: tuple[float, float] = (320.0, 240.0)
    size: tuple[float, float] = (40.0, 40.0)
    velocity: tuple[float, float] = (0.0, 0.0)
    acceleration: tuple[float, float] = (0.0, 0.0)
    # piecewise: [[first_frame, vx, vy], ...] sorted by first_frame
    segments: tuple[tuple[float, float, float], ...] = ()

    def position(self, t: int) -> tuple[float, float]:
        x0, y0 = self.start
        if self.kind == "static":
            return x0, y0
        if self.kind == "constant_velocity":
            return x0 + self.velocity[0] * t, y0 + self.velocity[1] * t
        if self.kind == "accelerating":
            vx, vy = self.velocity
            ax, ay = self.acceleration
            return x0 + vx * t + 0.5 * ax * t * t, y0 + vy * t + 0.5 * ay * t * t
        x, y = x0, y0
        for i, (first, vx, vy) in enumerate(self.segments):
            end = self.segments[i + 1][0] if i + 1 < len(self.segments) else math.inf
            lo, hi = max(first, 0), min(end, t)
            if hi > lo:
                x += vx * (hi - lo)
                y += vy * (hi - lo)
        return x, y


@dataclass(frozen=True)
class CorrespondenceSpec:
    count: int = 100
    noise: float = 0.0
    outlier_fraction: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    length: int = 100
    camera: CameraSpec = field(default_factory=CameraSpec)
    object: ObjectSpec = field(default_factory=ObjectSpec)
    occlusions: tuple[tuple[int, int], ...] = ()
    correspondence: CorrespondenceSpec = field(default_factory=CorrespondenceSpec)
    detection: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    ref_interval: int = 10
    frame_size: tuple[float, float] = (1280.0, 720.0)

    def __post_init__(self):
        validate(self)

    def occluded(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.occlusions)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return dataclasses.replace(self, seed=seed)


def validate(spec: ScenarioSpec) -> None:
    if not isinstance(spec.length, int) or spec.length < 1:
        raise SpecError("length", "must be a positive integer")
    if spec.ref_interval < 2:
        raise SpecError("ref_interval", "must be >= 2")
    if spec.camera.kind not in CAMERA_KINDS:
        raise SpecError("camera.kind", f"must be one of {CAMERA_KINDS}")
    if spec.camera.period <= 0:
        raise SpecError("camera.period", "must be > 0")
    if spec.object.kind not in OBJECT_KINDS:
        raise SpecError("object.kind", f"must be one of {OBJECT_KINDS}")
    if min(spec.object.size) <= 0:
        raise SpecError("object.size", "must be positive")
    firsts = [s[0] for s in spec.object.segments]
    if firsts != sorted(firsts):
        raise SpecError("object.segments", "must be sorted by first frame")
    for i, (a, b) in enumerate(spec.occlusions):
        if not 0 <= a < b <= spec.length:
            raise SpecError(f"occlusions[{i}]", f"window [{a}, {b}) not within [0, {spec.length})")
    c = spec.correspondence
    if c.count < 0:
        raise SpecError("correspondence.count", "must be >= 0")
    if c.noise < 0:
        raise SpecError("correspondence.noise", "must be >= 0")
    if not 0.0 <= c.outlier_fraction < 1.0:
        raise SpecError("correspondence.outlier_fraction", "must lie in [0, 1)")
    if min(spec.frame_size) <= 0:
        raise SpecError("frame_size", "must be positive")


def _pair(value, path):
    try:
        a, b = value
        return float(a), float(b)
    except (TypeError, ValueError):
        raise SpecError(path, f"expected a pair of numbers, got {value!r}") from None


def _build(cls, data, path, converters=None):
    if not isinstance(data, dict):
        raise SpecError(path or "<root>", f"expected an object, got {type(data).__name__}")
    converters = converters or {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in names:
            raise SpecError(sub, "unknown field")
        conv = converters.get(key)
        try:
            kwargs[key] = conv(value, sub) if conv else value
        except SpecError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecError(sub, str(exc)) from None
    try:
        return cls(**kwargs)
    except SpecError as exc:
        if path:
            raise SpecError(f"{path}.{exc.path}", str(exc).split(": ", 1)[-1]) from None
        raise
    except (TypeError, ValueError) as exc:
        raise SpecError(path or "<root>", str(exc)) from None


def _num(kind):
    def conv(value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecError(path, f"expected a number, got {value!r}")
        if kind is int and value != int(value):
            raise SpecError(path, f"expected an integer, got {value!r}")
        return kind(value)
    return conv


def spec_from_dict(data: dict) -> ScenarioSpec:
    """Parse a JSON-style mapping, reporting the dotted path of any bad field."""
    camera = lambda v, p: _build(CameraSpec, v, p, {  # noqa: E731
        "pan": _pair, "amplitude": _num(float), "period": _num(float),
        "phase": _num(float), "rotation": _num(float)})

    def segments(v, p):
        out = []
        for i, seg in enumerate(v):
            if len(seg) != 3:
                raise SpecError(f"{p}[{i}]", "expected [first_frame, vx, vy]")
            out.append(tuple(_num(float)(x, f"{p}[{i}]") for x in seg))
        return tuple(out)

    obj = lambda v, p: _build(ObjectSpec, v, p, {  # noqa: E731
        "start": _pair, "size": _pair, "velocity": _pair, "acceleration": _pair,
        "segments": segments})
    corr = lambda v, p: _build(CorrespondenceSpec, v, p, {  # noqa: E731
        "count": _num(int), "noise": _num(float), "outlier_fraction": _num(float)})
    det = lambda v, p: _build(NoiseSpec, v, p, {  # noqa: E731
        "sigma_pos": _num(float), "sigma_size": _num(float), "high_conf": _pair,
        "low_conf": _pair, "junk_offset": _num(float), "min_size": _num(float)})

    def occl(v, p):
        return tuple((int(_num(int)(a, f"{p}[{i}]")), int(_num(int)(b, f"{p}[{i}]")))
                     for i, (a, b) in enumerate(v))

    return _build(ScenarioSpec, data, "", {
        "length": _num(int), "camera": camera, "object": obj, "occlusions": occl,
        "correspondence": corr, "detection": det, "seed": _num(int),
        "ref_interval": _num(int), "frame_size": _pair})


def spec_to_dict(spec: ScenarioSpec) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(spec)))


def load_spec(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError("<root>", f"invalid JSON ({exc})") from None
    return spec_from_dict(data)


def camera_matrix(spec: ScenarioSpec, t: int) -> np.ndarray:
    """World-to-camera homography at frame ``t``."""
    tx, ty, angle = spec.camera.pose(t)
    cx, cy = spec.frame_size[0] / 2.0, spec.frame_size[1] / 2.0
    c, s = math.cos(angle), math.sin(angle)
    # p_cam = R(-angle) (p_world - cam - C) + C
    rot = np.array([[c, s], [-s, c]])
    offset = np.array([cx, cy]) - rot @ np.array([tx + cx, ty + cy])
    m = np.eye(3)
    m[:2, :2] = rot
    m[:2, 2] = offset
    return m


@dataclass(frozen=True)
class GroundTruth:
    frame: int
    box: Box
    vx: float
    vy: float

    def to_record(self) -> dict:
        return {"frame": self.frame, "x": self.box.x, "y": self.box.y, "w": self.box.w,
                "h": self.box.h, "vx": self.vx, "vy": self.vy}


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    frames: list[SequenceRecord]
    detections: list[tuple[int, Detection]]
    ground_truth: list[GroundTruth]

    def provider(self) -> ReplaySource:
        return ReplaySource(self.detections, n_frames=self.spec.length,
                            frame_size=self.spec.frame_size)

    def init_detection(self) -> Detection:
        b = self.ground_truth[0].box
        return Detection(b.x, b.y, b.w, b.h, 1.0)


def generate(spec: ScenarioSpec) -> Scenario:
    corr_ss, det_ss = np.random.SeedSequence(spec.seed).spawn(2)
    corr_rng = np.random.default_rng(corr_ss)
    det_rng = np.random.default_rng(det_ss)
    fw, fh = spec.frame_size
    cs = spec.correspondence
    w_obj, h_obj = spec.object.size

    cams = [camera_matrix(spec, t) for t in range(spec.length)]
    frames, detections, gts = [], [], []
    prev_center = None
    for t in range(spec.length):
        ref = expected_ref_frame(t, 0, spec.ref_interval)
        rel = cams[t] @ np.linalg.inv(cams[ref])
        true_h = Homography(rel)

        src = corr_rng.uniform((0.0, 0.0), (fw, fh), size=(cs.count, 2))
        dst = transform_points(true_h.m, src)
        if cs.noise > 0:
            dst = dst + corr_rng.normal(0.0, cs.noise, size=dst.shape)
        n_out = int(round(cs.outlier_fraction * cs.count))
        if n_out:
            idx = corr_rng.choice(cs.count, size=n_out, replace=False)
            dst[idx] = corr_rng.uniform((0.0, 0.0), (fw, fh), size=(n_out, 2))

        wx, wy = spec.object.position(t)
        c, bw, bh = project_box(Homography(cams[t]), Point2(wx, wy), w_obj, h_obj)
        box = Box(c.x, c.y, bw, bh)
        vx, vy = (0.0, 0.0) if prev_center is None else (c.x - prev_center[0], c.y - prev_center[1])
        prev_center = (c.x, c.y)
        gt = GroundTruth(t, box, vx, vy)

        det = synthetic_detect(box, spec.detection, spec.occluded(t), det_rng)
        if det is not None:
            detections.append((t, det))
        gts.append(gt)
        frames.append(SequenceRecord(t, ref, CorrespondenceSet(src, dst), gt=box,
                                     gt_velocity=(vx, vy), true_homography=true_h))
    return Scenario(spec, frames, detections, gts)


CORRESPONDENCE_FILE = "correspondences.jsonl"
DETECTION_FILE = "detections.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
MANIFEST_FILE = "manifest.json"


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_scenario(scenario: Scenario, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / CORRESPONDENCE_FILE, out / DETECTION_FILE, out / GROUND_TRUTH_FILE,
             out / MANIFEST_FILE]
    _write_jsonl(paths[0], ({"frame": f.frame_id, "ref_frame": f.ref_frame,
                             "pairs": f.pairs.to_rows()} for f in scenario.frames))
    _write_jsonl(paths[1], (detection_record(t, d) for t, d in scenario.detections))
    _write_jsonl(paths[2], (g.to_record() for g in scenario.ground_truth))
    manifest = {
        "frames": scenario.spec.length,
        "ref_interval": scenario.spec.ref_interval,
        "frame_size": list(scenario.spec.frame_size),
        "seed": scenario.spec.seed,
        "files": [p.name for p in paths[:3]],
        "spec": spec_to_dict(scenario.spec),
    }
    paths[3].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_ground_truth(path) -> list[GroundTruth]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out.append(GroundTruth(int(r["frame"]), Box(r["x"], r["y"], r["w"], r["h"]),
                                       float(r.get("vx", 0.0)), float(r.get("vy", 0.0))))
    return out


def read_sequence(directory, correspondences=None, detections=None, ground_truth=None):
    """Load a replay directory into ``(frames, provider, ground_truth or None)``."""
    d = Path(directory) if directory is not None else None
    corr_path = Path(correspondences) if correspondences else d / CORRESPONDENCE_FILE
    det_path = Path(detections) if detections else d / DETECTION_FILE
    gt_path = Path(ground_truth) if ground_truth else (d / GROUND_TRUTH_FILE if d else None)
    frame_size = None
    if d is not None and (d / MANIFEST_FILE).exists():
        frame_size = tuple(json.loads((d / MANIFEST_FILE).read_text())["frame_size"])

    for p in (corr_path, det_path):
        if not p.exists():
            raise FileNotFoundError(str(p))
    gts = read_ground_truth(gt_path) if gt_path is not None and gt_path.exists() else None
    gt_by_frame = {g.frame: g for g in gts} if gts else {}

    frames = []
    with open(corr_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            g = gt_by_frame.get(int(r["frame"]))
            frames.append(SequenceRecord(
                int(r["frame"]), int(r["ref_frame"]), CorrespondenceSet.from_rows(r["pairs"]),
                gt=g.box if g else None, gt_velocity=(g.vx, g.vy) if g else None))
    n_frames = frames[-1].frame_id + 1 if frames else 0
    provider = ReplaySource(read_detections(det_path), n_frames=n_frames, frame_size=frame_size)
    return frames, provider, gts
