"""Position and velocity prediction errors against ground truth.

Each frame contributes the tracker's prediction for that frame (made before
the frame's detection is used) and the ground-truth center and velocity.
The zero-velocity baseline predicts the previous output position and a zero
velocity.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .config import TrackerConfig
from .pipeline import FrameResult, run_sequence

COSINE_EPS = 1e-6


class UndefinedMetricError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionLog:
    pred_pos: np.ndarray
    pred_vel: np.ndarray
    gt_pos: np.ndarray
    gt_vel: np.ndarray
    failure: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float).reshape(-1, 2)
                for a in (self.pred_pos, self.pred_vel, self.gt_pos, self.gt_vel)]
        fail = np.asarray(self.failure, dtype=bool).reshape(-1)
        if len({a.shape[0] for a in arrs} | {fail.shape[0]}) != 1:
            raise ValueError("prediction log columns have unequal lengths")
        for name, a in zip(("pred_pos", "pred_vel", "gt_pos", "gt_vel"), arrs):
            object.__setattr__(self, name, a)
        object.__setattr__(self, "failure", fail)

    def __len__(self) -> int:
        return self.failure.shape[0]

    def valid(self):
        keep = ~self.failure
        return self.pred_pos[keep], self.pred_vel[keep], self.gt_pos[keep], self.gt_vel[keep]


def _check(log: PredictionLog):
    pp, pv, gp, gv = log.valid()
    if pp.shape[0] == 0:
        raise UndefinedMetricError("no non-failure frames to evaluate")
    return pp, pv, gp, gv


def position_error(log: PredictionLog) -> float:
    pp, _, gp, _ = _check(log)
    return float(np.linalg.norm(pp - gp, axis=1).mean())


def position_rmse(log: PredictionLog) -> float:
    pp, _, gp, _ = _check(log)
    return float(math.sqrt((np.linalg.norm(pp - gp, axis=1) ** 2).mean()))


def velocity_errors(log: PredictionLog) -> tuple[float, float | None, float]:
    """Return (mean Euclidean error, mean cosine or None, mean magnitude error)."""
    _, pv, _, gv = _check(log)
    mse = float(np.linalg.norm(pv - gv, axis=1).mean())
    npv = np.linalg.norm(pv, axis=1)
    ngv = np.linalg.norm(gv, axis=1)
    mag = float(np.abs(npv - ngv).mean())
    ok = (npv > COSINE_EPS) & (ngv > COSINE_EPS)
    cosine = None
    if ok.any():
        cos = np.einsum("ij,ij->i", pv[ok], gv[ok]) / (npv[ok] * ngv[ok])
        cosine = float(np.clip(cos, -1.0, 1.0).mean())
    return mse, cosine, mag


def log_from_results(results, ground_truth) -> PredictionLog:
    """Pair tracked frames with ground truth.

    Only frames with a prediction (status ``tracked``) count; init, reinit,
    skipped and failure frames are marked as excluded.
    """
    gt_by_frame = {g.frame: g for g in ground_truth}
    pp, pv, gp, gv, fail = [], [], [], [], []
    for r in results:
        g = gt_by_frame.get(r.frame_id)
        if g is None:
            raise AlignmentError(f"no ground truth for frame {r.frame_id}")
        usable = r.status == "tracked" and r.predicted_box_camera is not None
        b = r.predicted_box_camera
        pp.append((b.x, b.y) if usable else (np.nan, np.nan))
        pv.append(r.predicted_velocity_camera if usable else (np.nan, np.nan))
        gp.append((g.box.x, g.box.y))
        gv.append((g.vx, g.vy))
        fail.append(not usable)
    if len(results) != len(gt_by_frame):
        raise AlignmentError(f"{len(results)} result frames vs {len(gt_by_frame)} ground-truth frames")
    return PredictionLog(np.array(pp).reshape(-1, 2), np.array(pv).reshape(-1, 2),
                         np.array(gp).reshape(-1, 2), np.array(gv).reshape(-1, 2), fail)


def zero_velocity_results(results) -> list[FrameResult]:
    """Re-score a run as the zero-velocity predictor over its own outputs."""
    out = []
    last = None
    for r in results:
        if r.status == "tracked" and last is not None:
            out.append(dataclasses.replace(r, predicted_box_camera=last,
                                           predicted_velocity_camera=(0.0, 0.0)))
        else:
            out.append(r)
        last = r.output_box_camera
    return out


@dataclass(frozen=True)
class MetricSet:
    pos_err: float
    pos_rmse: float
    vel_mse: float
    cosine: float | None
    mag: float
    frames: int
    failures: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def metric_set(results, ground_truth) -> MetricSet:
    log = log_from_results(results, ground_truth)
    mse, cos, mag = velocity_errors(log)
    return MetricSet(position_error(log), position_rmse(log), mse, cos, mag,
                     int((~log.failure).sum()),
                     sum(1 for r in results if r.status == "failure"))


def reduction_ratio(ours: float, baseline: float, eps: float = 1e-9) -> float:
    if baseline <= eps:
        return 1.0
    return ours / baseline


def baseline_config(cfg: TrackerConfig) -> TrackerConfig:
    return dataclasses.replace(cfg, md=False, mp=False, asr=False)


def compare_baseline(frames, ground_truth, cfg: TrackerConfig, provider, init) -> dict:
    """Run the zero-velocity baseline and the configured pipeline on the same input."""
    ours = run_sequence(frames, init, cfg, provider)
    base = run_sequence(frames, init, baseline_config(cfg), provider)
    m_ours = metric_set(ours, ground_truth)
    m_base = metric_set(base, ground_truth)
    return {
        "ours": m_ours.as_dict(),
        "baseline": m_base.as_dict(),
        "pos_ratio": reduction_ratio(m_ours.pos_err, m_base.pos_err),
        "results": {"ours": ours, "baseline": base},
    }


def aggregate(sets: list[MetricSet], weighted: bool = False) -> dict:
    """Combine per-sequence metrics; unweighted mean of sequence means by default."""
    if not sets:
        raise UndefinedMetricError("nothing to aggregate")
    w = np.array([s.frames for s in sets], dtype=float) if weighted else np.ones(len(sets))
    w = w / w.sum()
    out = {}
    for name in ("pos_err", "pos_rmse", "vel_mse", "mag"):
        out[name] = float(np.dot(w, [getattr(s, name) for s in sets]))
    cos = [(wi, s.cosine) for wi, s in zip(w, sets) if s.cosine is not None]
    out["cosine"] = (float(sum(wi * c for wi, c in cos) / sum(wi for wi, _ in cos))
                     if cos else None)
    out["frames"] = int(sum(s.frames for s in sets))
    out["failures"] = int(sum(s.failures for s in sets))
    return out


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def render_table(rows: list[tuple[str, dict]]) -> str:
    """Plain-text table with Pos Err., RMS, MSE Err., Cosine, Mag. columns."""
    head = f"{'Tracker':<24} {'Pos Err.':>9} {'Pos RMS':>9} {'MSE Err.':>9} {'Cosine':>8} {'Mag.':>8}"
    lines = [head, "-" * len(head)]
    for name, m in rows:
        lines.append(f"{name:<24} {_fmt(m['pos_err']):>9} {_fmt(m['pos_rmse']):>9} "
                     f"{_fmt(m['vel_mse']):>9} {_fmt(m['cosine']):>8} {_fmt(m['mag']):>8}")
    return "\n".join(lines) + "\n"


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
