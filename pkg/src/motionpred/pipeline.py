"""Per-frame tracking loop: decouple, predict, search region, project, detect, update.

The filter state lives in the coordinates of the current reference frame.
Every ``n`` frames the last frame of the slice becomes the new reference and
the state is transported into it. When no camera model is available for a
frame (no correspondences, or RANSAC rejects the fit) that frame is treated
as if reference and camera coordinates coincide.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import kalman
from .boxes import Box, iou
from .config import TrackerConfig
from .detector import DetectorQuery, MeasurementProvider
from .geometry import (CorrespondenceSet, GeometryError, Homography, Point2,
                       apply_homography, project_box, ransac_homography)
from .kalman import Detection, ObjectState
from .search_region import SearchRegion, adaptive_region, fixed_region


@dataclass(frozen=True)
class SequenceRecord:
    """One frame of input: correspondences to its reference frame plus optional truth."""

    frame_id: int
    ref_frame: int
    pairs: CorrespondenceSet
    gt: Box | None = None
    gt_velocity: tuple[float, float] | None = None
    true_homography: Homography | None = None


@dataclass(frozen=True)
class TrackerSession:
    ref_frame_id: int
    frame_id: int
    state: ObjectState
    current_homography: Homography | None
    decouple_active: bool
    last_output: Box


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    ref_frame: int
    status: str  # init | tracked | failure | skipped | reinit
    predicted_box_camera: Box | None = None
    predicted_velocity_ref: tuple[float, float] | None = None
    predicted_velocity_camera: tuple[float, float] | None = None
    search_region_camera: SearchRegion | None = None
    output_box_camera: Box | None = None
    updated: bool = False
    decoupled: bool = False
    error: str | None = None

    def to_record(self) -> dict:
        def box(b):
            return None if b is None else [b.x, b.y, b.w, b.h]

        def vec(v):
            return None if v is None else [float(v[0]), float(v[1])]

        reg = self.search_region_camera
        return {
            "frame": self.frame_id,
            "ref_frame": self.ref_frame,
            "status": self.status,
            "pred_box": box(self.predicted_box_camera),
            "pred_v_ref": vec(self.predicted_velocity_ref),
            "pred_v_cam": vec(self.predicted_velocity_camera),
            "region": None if reg is None else [reg.center.x, reg.center.y, reg.side],
            "box": box(self.output_box_camera),
            "updated": self.updated,
            "decoupled": self.decoupled,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FrameResult":
        def box(v):
            return None if v is None else Box(*map(float, v))

        def vec(v):
            return None if v is None else (float(v[0]), float(v[1]))

        reg = rec.get("region")
        return cls(
            frame_id=int(rec["frame"]),
            ref_frame=int(rec["ref_frame"]),
            status=rec["status"],
            predicted_box_camera=box(rec.get("pred_box")),
            predicted_velocity_ref=vec(rec.get("pred_v_ref")),
            predicted_velocity_camera=vec(rec.get("pred_v_cam")),
            search_region_camera=None if reg is None else SearchRegion(Point2(reg[0], reg[1]), reg[2]),
            output_box_camera=box(rec.get("box")),
            updated=bool(rec.get("updated", False)),
            decoupled=bool(rec.get("decoupled", False)),
            error=rec.get("error"),
        )


def write_results(path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record()) + "\n")


def read_results(path) -> list[FrameResult]:
    with open(path, encoding="utf-8") as fh:
        return [FrameResult.from_record(json.loads(line)) for line in fh if line.strip()]


def _state_box(state: ObjectState) -> Box:
    x, y, w, h = state.s[:4]
    return Box(float(x), float(y), float(w), float(h))


def _to_camera(h: Homography | None, box: Box) -> Box:
    if h is None:
        return box
    c, w, hh = project_box(h, Point2(box.x, box.y), box.w, box.h)
    return Box(c.x, c.y, w, hh)


def frame_rng(cfg: TrackerConfig, frame_id: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, frame_id])


def estimate_camera_motion(frame: SequenceRecord, cfg: TrackerConfig) -> Homography | None:
    """Reference-to-frame homography, or None when decoupling is off or falls back."""
    if not cfg.md:
        return None
    report = ransac_homography(frame.pairs, cfg.ransac, frame_rng(cfg, frame.frame_id))
    return report.homography


def start_session(frame: SequenceRecord, det: Detection, cfg: TrackerConfig,
                  h: Homography | None = None) -> TrackerSession:
    """Initialise a track from a camera-coordinate box at ``frame``.

    ``h`` maps the frame's reference into the frame; the box is pulled back
    through its inverse so the state is expressed in reference coordinates.
    """
    if h is not None:
        c, w, hh = project_box(h.inverse(), Point2(det.x, det.y), det.w, det.h)
        det_ref = Detection(c.x, c.y, w, hh, det.confidence)
    else:
        det_ref = det
    state = kalman.init_state(det_ref, cfg.initial_covariance)
    return TrackerSession(
        ref_frame_id=frame.ref_frame,
        frame_id=frame.frame_id,
        state=state,
        current_homography=h,
        decouple_active=h is not None,
        last_output=Box(det.x, det.y, det.w, det.h),
    )


def _predict(state: ObjectState, cfg: TrackerConfig) -> ObjectState:
    if cfg.mp:
        return kalman.predict(state, cfg.kalman_model)
    return kalman.with_velocity(state, (0.0, 0.0))


def _update(prior: ObjectState, det: Detection | None, cfg: TrackerConfig) -> tuple[ObjectState, bool]:
    if det is None or not det.confidence > cfg.theta_d:
        return prior, False
    if cfg.mp:
        return kalman.gated_update(prior, cfg.kalman_model, det, cfg.theta_d), True
    # without motion prediction the detection is taken as the new estimate
    s = np.array(prior.s)
    s[:4] = det.as_vector()
    return dataclasses.replace(prior, s=s), True


def _search_region(prior: ObjectState, cfg: TrackerConfig) -> SearchRegion:
    if cfg.asr:
        return adaptive_region(prior, cfg.theta_v)
    return fixed_region(prior, cfg.fixed_k)


def _region_to_camera(h: Homography | None, region: SearchRegion,
                      cfg: TrackerConfig) -> SearchRegion:
    if h is None:
        return region
    center = apply_homography(h, region.center)
    scale = h.local_scale(region.center)
    side = region.side * scale if abs(scale - 1.0) > cfg.scale_tolerance else region.side
    return SearchRegion(center, side)


def step(session: TrackerSession, frame: SequenceRecord, cfg: TrackerConfig,
         provider: MeasurementProvider) -> tuple[TrackerSession, FrameResult]:
    if frame.frame_id != session.frame_id + 1:
        raise ValueError(f"expected frame {session.frame_id + 1}, got {frame.frame_id}")
    if frame.ref_frame != session.ref_frame_id:
        raise ValueError(f"frame {frame.frame_id} references frame {frame.ref_frame}, "
                         f"session reference is {session.ref_frame_id}")

    h = estimate_camera_motion(frame, cfg)
    prior = _predict(session.state, cfg)
    region_ref = _search_region(prior, cfg)

    try:
        pred_cam = _to_camera(h, _state_box(prior))
        region_cam = _region_to_camera(h, region_ref, cfg)
    except GeometryError:
        h = None
        pred_cam = _state_box(prior)
        region_cam = region_ref

    det = provider.detect(DetectorQuery(frame.frame_id, region_cam))

    error = None
    try:
        det_ref = det
        if det is not None and h is not None:
            c, w, hh = project_box(h.inverse(), Point2(det.x, det.y), det.w, det.h)
            det_ref = Detection(c.x, c.y, w, hh, det.confidence)
        post, updated = _update(prior, det_ref, cfg)
        out_cam = _to_camera(h, _state_box(post))
    except (GeometryError, ArithmeticError, ValueError) as exc:
        post, updated, out_cam, error = prior, False, pred_cam, f"{type(exc).__name__}: {exc}"

    last = session.last_output
    result = FrameResult(
        frame_id=frame.frame_id,
        ref_frame=session.ref_frame_id,
        status="tracked",
        predicted_box_camera=pred_cam,
        predicted_velocity_ref=(float(prior.s[4]), float(prior.s[5])),
        predicted_velocity_camera=(pred_cam.x - last.x, pred_cam.y - last.y),
        search_region_camera=region_cam,
        output_box_camera=out_cam,
        updated=updated,
        decoupled=h is not None,
        error=error,
    )
    new_session = TrackerSession(
        ref_frame_id=session.ref_frame_id,
        frame_id=frame.frame_id,
        state=post,
        current_homography=h,
        decouple_active=h is not None,
        last_output=out_cam,
    )
    return new_session, result


def advance_reference(session: TrackerSession, cfg: TrackerConfig) -> TrackerSession:
    """Make the current frame the new reference and transport the state into it.

    Position and size go through the slice's last homography; velocity is
    carried by mapping the pair (pos, pos + v) and differencing. The velocity
    covariance block is inflated to account for the transport.
    """
    state = session.state
    h = session.current_homography
    s = np.array(state.s)
    if h is not None:
        x, y, w, hh, vx, vy = state.s
        c, nw, nh = project_box(h, Point2(x, y), w, hh)
        ahead = apply_homography(h, Point2(x + vx, y + vy))
        s[:] = [c.x, c.y, nw, nh, ahead.x - c.x, ahead.y - c.y]
    V = np.array(state.V)
    V[4:, 4:] *= cfg.handoff_velocity_inflation
    return TrackerSession(
        ref_frame_id=session.frame_id,
        frame_id=session.frame_id,
        state=ObjectState(s, V),
        current_homography=Homography.identity(),
        decouple_active=session.decouple_active,
        last_output=session.last_output,
    )


def expected_ref_frame(frame_id: int, first_frame: int, n: int) -> int:
    offset = frame_id - first_frame
    if offset <= 0:
        return frame_id
    return first_frame + ((offset - 1) // n) * n


def check_schedule(frames, n: int) -> None:
    first = frames[0].frame_id
    for i, fr in enumerate(frames):
        if fr.frame_id != first + i:
            raise ValueError(f"frame ids not consecutive at position {i}: {fr.frame_id}")
        want = expected_ref_frame(fr.frame_id, first, n)
        if fr.ref_frame != want:
            raise ValueError(f"frame {fr.frame_id} has ref_frame {fr.ref_frame}, "
                             f"expected {want} for n={n}")


def _box_result(frame: SequenceRecord, status: str, box: Box, decoupled: bool) -> FrameResult:
    return FrameResult(frame_id=frame.frame_id, ref_frame=frame.ref_frame, status=status,
                       output_box_camera=box, decoupled=decoupled)


def run_sequence(frames, init: Detection, cfg: TrackerConfig, provider: MeasurementProvider,
                 evaluation: bool = True) -> list[FrameResult]:
    """Track one target through ``frames``.

    In evaluation mode a frame whose output box has zero overlap with the
    ground truth is a failure: the next ``cfg.reinit_skip`` frames are
    skipped and the tracker restarts from ground truth on the frame after.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("empty sequence")
    check_schedule(frames, cfg.n)
    first = frames[0].frame_id

    session = start_session(frames[0], init, cfg)
    results = [_box_result(frames[0], "init", session.last_output, False)]
    skip_left = 0
    need_reinit = False

    for frame in frames[1:]:
        if skip_left > 0:
            skip_left -= 1
            results.append(FrameResult(frame.frame_id, frame.ref_frame, "skipped"))
            continue
        if need_reinit:
            if frame.gt is None:
                raise ValueError(f"frame {frame.frame_id}: reinit needs ground truth")
            h = estimate_camera_motion(frame, cfg)
            gt = frame.gt
            try:
                session = start_session(frame, Detection(gt.x, gt.y, gt.w, gt.h), cfg, h)
            except GeometryError:
                h = None
                session = start_session(frame, Detection(gt.x, gt.y, gt.w, gt.h), cfg)
            results.append(_box_result(frame, "reinit", gt, h is not None))
            need_reinit = False
        else:
            session, res = step(session, frame, cfg, provider)
            if evaluation and frame.gt is not None and iou(res.output_box_camera, frame.gt) == 0.0:
                res = dataclasses.replace(res, status="failure")
                skip_left = cfg.reinit_skip
                need_reinit = True
            results.append(res)
            if need_reinit:
                continue
        if (frame.frame_id - first) % cfg.n == 0:
            try:
                session = advance_reference(session, cfg)
            except GeometryError:
                session = advance_reference(
                    dataclasses.replace(session, current_homography=None), cfg)
    return results


def transport_velocity(h: Homography, pos, v) -> np.ndarray:
    """Difference of the images of ``pos`` and ``pos + v`` under ``h``."""
    a = apply_homography(h, Point2(float(pos[0]), float(pos[1])))
    b = apply_homography(h, Point2(float(pos[0] + v[0]), float(pos[1] + v[1])))
    return np.array([b.x - a.x, b.y - a.y])


def session_output_box(session: TrackerSession) -> Box:
    """Camera-coordinate box of the session state under its current homography."""
    return _to_camera(session.current_homography, _state_box(session.state))


__all__ = [
    "SequenceRecord", "TrackerSession", "FrameResult", "step", "advance_reference",
    "run_sequence", "start_session", "estimate_camera_motion", "write_results",
    "read_results", "check_schedule", "expected_ref_frame", "transport_velocity",
    "session_output_box",
]
