"""Planar homography estimation and application.

Camera motion between a reference frame and a later frame is modelled as a
3x3 projective map fitted to background correspondences with a normalised
DLT inside a RANSAC loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CANONICAL_EPS = 1e-12
DEFAULT_DET_EPS = 1e-10
W_EPS = 1e-12
COLLINEAR_TOL = 1e-6


class GeometryError(Exception):
    """Base class for geometric failures."""


class PointAtInfinityError(GeometryError):
    pass


class InsufficientDataError(GeometryError):
    pass


class DegenerateConfigurationError(GeometryError):
    pass


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def canonicalize(m: np.ndarray) -> np.ndarray:
    """Return the unique representative of the projective class of ``m``.

    h33 is scaled to 1 when it is usably nonzero, otherwise the matrix gets
    unit Frobenius norm with a positive first nonzero entry.
    """
    m = np.asarray(m, dtype=float)
    if abs(m[2, 2]) > CANONICAL_EPS:
        return m / m[2, 2]
    m = m / np.linalg.norm(m)
    flat = m.ravel()
    nz = np.flatnonzero(np.abs(flat) > CANONICAL_EPS)
    if nz.size and flat[nz[0]] < 0:
        m = -m
    return m


@dataclass(frozen=True)
class Homography:
    """Invertible projective map, stored in canonical form."""

    m: np.ndarray
    det_eps: float = field(default=DEFAULT_DET_EPS, compare=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography has non-finite entries")
        m = canonicalize(m)
        if abs(np.linalg.det(m)) <= self.det_eps:
            raise DegenerateConfigurationError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_similarity(cls, scale: float = 1.0, angle: float = 0.0,
                        tx: float = 0.0, ty: float = 0.0) -> "Homography":
        c, s = scale * math.cos(angle), scale * math.sin(angle)
        return cls(np.array([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m), det_eps=self.det_eps)

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m, det_eps=self.det_eps)

    def local_scale(self, p: Point2) -> float:
        """Isotropic scale factor of the map near ``p`` (sqrt of |det J|)."""
        m = self.m
        w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
        if abs(w) < W_EPS:
            raise PointAtInfinityError(f"({p.x}, {p.y}) maps to infinity")
        u = (m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]) / w
        v = (m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]) / w
        jac = np.array([
            [m[0, 0] - u * m[2, 0], m[0, 1] - u * m[2, 1]],
            [m[1, 0] - v * m[2, 0], m[1, 1] - v * m[2, 1]],
        ]) / w
        return math.sqrt(abs(np.linalg.det(jac)))


@dataclass(frozen=True)
class CorrespondenceSet:
    """Point pairs, ``src`` in the reference frame and ``dst`` in the later frame."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=float).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=float).reshape(-1, 2)
        if src.shape != dst.shape:
            raise ValueError(f"src/dst shape mismatch: {src.shape} vs {dst.shape}")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    @classmethod
    def empty(cls) -> "CorrespondenceSet":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)))

    @classmethod
    def from_rows(cls, rows) -> "CorrespondenceSet":
        """Build from ``[[sx, sy, dx, dy], ...]`` rows (the JSONL wire form)."""
        arr = np.asarray(rows, dtype=float).reshape(-1, 4)
        return cls(arr[:, :2], arr[:, 2:])

    def to_rows(self) -> list[list[float]]:
        return np.hstack([self.src, self.dst]).tolist()

    def __len__(self) -> int:
        return self.src.shape[0]


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 3.0
    iterations: int = 500
    min_inliers: int = 8
    max_outlier_ratio: float = 0.7
    confidence: float = 0.999
    batch_size: int = 32

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be > 0")
        if not 0.0 <= self.max_outlier_ratio <= 1.0:
            raise ValueError("max_outlier_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class RansacReport:
    homography: Homography | None
    inlier_count: int
    outlier_ratio: float
    mean_inlier_reprojection_error: float
    iterations_run: int
    inlier_mask: np.ndarray | None = None


def apply_homography(h: Homography, p: Point2) -> Point2:
    m = h.m
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    if abs(w) < W_EPS:
        raise PointAtInfinityError(f"({p.x}, {p.y}) maps to infinity")
    return Point2((m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]) / w,
                  (m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]) / w)


def transform_points(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorised projective transform of an (N, 2) array; infinity maps to NaN."""
    pts = np.asarray(pts, dtype=float)
    hom = pts @ m[:, :2].T + m[:, 2]
    w = hom[..., 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hom[..., :2] / w
    out[np.abs(w[..., 0]) < W_EPS] = np.nan
    return out


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity taking a batch of point sets to zero centroid, mean norm sqrt(2).

    ``pts`` has shape (B, N, 2); returns (B, 3, 3).
    """
    centroid = pts.mean(axis=1)
    dist = np.linalg.norm(pts - centroid[:, None, :], axis=2).mean(axis=1)
    scale = np.where(dist > 0, math.sqrt(2.0) / np.where(dist > 0, dist, 1.0), 1.0)
    t = np.zeros((pts.shape[0], 3, 3))
    t[:, 0, 0] = scale
    t[:, 1, 1] = scale
    t[:, 0, 2] = -scale * centroid[:, 0]
    t[:, 1, 2] = -scale * centroid[:, 1]
    t[:, 2, 2] = 1.0
    return t


def _dlt_batch(src: np.ndarray, dst: np.ndarray, rank_tol: float = 1e-9):
    """Normalised DLT over a batch of equally sized correspondence sets.

    Returns (matrices (B, 3, 3), ok (B,) bool) where ``ok`` is False for
    rank-deficient design matrices.
    """
    b, n, _ = src.shape
    t_src = _normalization(src)
    t_dst = _normalization(dst)
    ps = np.einsum("bij,bnj->bni", t_src[:, :2, :2], src) + t_src[:, None, :2, 2]
    pd = np.einsum("bij,bnj->bni", t_dst[:, :2, :2], dst) + t_dst[:, None, :2, 2]

    x, y = ps[..., 0], ps[..., 1]
    u, v = pd[..., 0], pd[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    rows_u = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=-1)
    rows_v = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=-1)
    a = np.empty((b, 2 * n, 9))
    a[:, 0::2] = rows_u
    a[:, 1::2] = rows_v
    if 2 * n < 9:
        a = np.concatenate([a, np.zeros((b, 9 - 2 * n, 9))], axis=1)

    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    # Eight constraints must be independent: the second smallest singular value
    # of the 9-column system carries the rank.
    ok = sv[:, 7] > rank_tol * sv[:, 0]
    hn = vt[:, -1, :].reshape(b, 3, 3)
    m = np.linalg.inv(t_dst) @ hn @ t_src
    return m, ok


def dlt_homography(pairs: CorrespondenceSet) -> Homography:
    """Least-squares homography from four or more correspondences."""
    n = len(pairs)
    if n < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {n}")
    m, ok = _dlt_batch(pairs.src[None], pairs.dst[None])
    if not ok[0] or not np.all(np.isfinite(m[0])):
        raise DegenerateConfigurationError("design matrix is rank deficient")
    return Homography(m[0])


def reprojection_errors(h: Homography | np.ndarray, pairs: CorrespondenceSet) -> np.ndarray:
    """Forward transfer error ||H src - dst|| per pair (inf for points at infinity)."""
    m = h.m if isinstance(h, Homography) else h
    err = np.linalg.norm(transform_points(m, pairs.src) - pairs.dst, axis=1)
    return np.where(np.isnan(err), np.inf, err)


def _triangle_area2(a, b, c):
    return np.abs((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                  - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))


def sample_is_degenerate(pts: np.ndarray, tol: float = COLLINEAR_TOL) -> np.ndarray:
    """Flag 4-point samples with any three points collinear.

    ``pts`` has shape (B, 4, 2). A triple counts as collinear when its doubled
    triangle area is below ``tol`` times the squared span of the sample.
    """
    span = np.ptp(pts, axis=1).max(axis=1)
    limit = tol * np.maximum(span, np.finfo(float).tiny) ** 2
    bad = np.zeros(pts.shape[0], dtype=bool)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        bad |= _triangle_area2(pts[:, i], pts[:, j], pts[:, k]) < limit
    return bad


def _required_iterations(inlier_frac: float, confidence: float) -> float:
    if inlier_frac <= 0:
        return math.inf
    p_good = inlier_frac ** 4
    if p_good >= 1.0:
        return 1.0
    return math.log(1.0 - confidence) / math.log(1.0 - p_good)


def ransac_homography(pairs: CorrespondenceSet, cfg: RansacConfig | None = None,
                      rng: np.random.Generator | None = None) -> RansacReport:
    """Robustly fit a homography; an absent model signals the decoupling fallback.

    Minimal samples are drawn and fitted in batches of ``cfg.batch_size``; the
    loop stops early once the adaptive iteration bound for ``cfg.confidence``
    is met, and never runs more than ``cfg.iterations`` samples.
    """
    cfg = cfg or RansacConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(pairs)
    if n < 4:
        return RansacReport(None, 0, 1.0, math.nan, 0)

    thr = cfg.inlier_threshold
    best_count = -1
    best_score = math.inf
    best_mask = None
    run = 0
    needed = float(cfg.iterations)
    while run < min(cfg.iterations, needed):
        b = int(min(cfg.batch_size, cfg.iterations - run))
        idx = np.argsort(rng.random((b, n)), axis=1)[:, :4]
        run += b
        src, dst = pairs.src[idx], pairs.dst[idx]
        good = ~sample_is_degenerate(src)
        if not good.any():
            continue
        ms, ok = _dlt_batch(src[good], dst[good])
        ms = ms[ok]
        if ms.shape[0] == 0:
            continue
        proj = np.einsum("bij,nj->bni", ms[:, :, :2], pairs.src) + ms[:, None, :, 2]
        w = proj[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.linalg.norm(proj[..., :2] / w[..., None] - pairs.dst, axis=2)
        err[~np.isfinite(err) | (np.abs(w) < W_EPS)] = np.inf
        inl = err < thr
        counts = inl.sum(axis=1)
        # ties on count are broken by the truncated squared error (MSAC-style)
        scores = np.where(inl, err ** 2, thr ** 2).sum(axis=1)
        for c, s, mask in zip(counts, scores, inl):
            if c > best_count or (c == best_count and s < best_score):
                best_count, best_score, best_mask = int(c), float(s), mask
        if best_count > 0:
            needed = _required_iterations(best_count / n, cfg.confidence)

    if best_mask is None or best_count < 4:
        return RansacReport(None, max(best_count, 0), 1.0 - max(best_count, 0) / n,
                            math.nan, run)

    mask = best_mask
    model = None
    # Refit on the consensus set; one re-selection pass lets the least-squares
    # model pick up inliers the minimal sample missed.
    for _ in range(2):
        try:
            cand = dlt_homography(CorrespondenceSet(pairs.src[mask], pairs.dst[mask]))
        except GeometryError:
            break
        new_mask = reprojection_errors(cand, pairs) < thr
        if new_mask.sum() < 4:
            break
        model, mask = cand, new_mask
    if model is None:
        return RansacReport(None, best_count, 1.0 - best_count / n, math.nan, run)

    count = int(mask.sum())
    ratio = 1.0 - count / n
    mean_err = float(reprojection_errors(model, pairs)[mask].mean())
    if count < cfg.min_inliers or ratio > cfg.max_outlier_ratio:
        return RansacReport(None, count, ratio, mean_err, run, mask)
    return RansacReport(model, count, ratio, mean_err, run, mask)


def project_box(h: Homography, center: Point2, w: float, h_box: float):
    """Map an axis-aligned box through ``h`` via its center and corners.

    Width is the mean length of the two projected horizontal edges, height the
    mean of the two projected vertical edges.
    """
    if w <= 0 or h_box <= 0:
        raise ValueError(f"box size must be positive, got ({w}, {h_box})")
    hw, hh = w / 2.0, h_box / 2.0
    cx, cy = center.x, center.y
    corners = np.array([[cx - hw, cy - hh], [cx + hw, cy - hh],
                        [cx + hw, cy + hh], [cx - hw, cy + hh]])
    pc = transform_points(h.m, corners)
    if not np.all(np.isfinite(pc)):
        raise PointAtInfinityError("box corner maps to infinity")
    new_center = apply_homography(h, center)
    top = np.linalg.norm(pc[1] - pc[0])
    bottom = np.linalg.norm(pc[2] - pc[3])
    left = np.linalg.norm(pc[3] - pc[0])
    right = np.linalg.norm(pc[2] - pc[1])
    new_w = 0.5 * (top + bottom)
    new_h = 0.5 * (left + right)
    if not (new_w > 0 and new_h > 0):
        raise PointAtInfinityError("projected box collapsed")
    return new_center, float(new_w), float(new_h)
