"""Velocity- and size-adaptive square search region."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import expit

from .geometry import Point2
from .kalman import ObjectState


@dataclass(frozen=True)
class SearchRegion:
    center: Point2
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"search region side must be positive, got {self.side}")

    def contains(self, x: float, y: float) -> bool:
        half = self.side / 2.0
        return abs(x - self.center.x) <= half and abs(y - self.center.y) <= half

    def clipped(self, frame_size: tuple[float, float] | None):
        """Axis-aligned bounds (x0, y0, x1, y1) intersected with the frame."""
        half = self.side / 2.0
        x0, y0 = self.center.x - half, self.center.y - half
        x1, y1 = self.center.x + half, self.center.y + half
        if frame_size is not None:
            fw, fh = frame_size
            x0, y0 = max(x0, 0.0), max(y0, 0.0)
            x1, y1 = min(x1, float(fw)), min(y1, float(fh))
        return x0, y0, x1, y1


def base_side(w: float, h: float) -> float:
    p = 0.5 * (w + h)
    return math.sqrt((w + p) * (h + p))


def scale_factor(speed: float, theta_v: float) -> float:
    """k = 1 + 2 * logistic(speed - theta_v), in (1, 3)."""
    return 1.0 + 2.0 * float(expit(speed - theta_v))


def adaptive_region(state: ObjectState, theta_v: float) -> SearchRegion:
    x, y, w, h, vx, vy = state.s
    k = scale_factor(math.hypot(vx, vy), theta_v)
    return SearchRegion(Point2(float(x), float(y)), k * base_side(w, h))


def fixed_region(state: ObjectState, k: float = 2.0) -> SearchRegion:
    """Steady search region with a constant size ratio, ignoring velocity."""
    x, y, w, h = state.s[:4]
    return SearchRegion(Point2(float(x), float(y)), k * base_side(w, h))
