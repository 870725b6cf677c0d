"""Constant-velocity Kalman filter over (x, y, w, h, vx, vy)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

STATE_DIM = 6
OBS_DIM = 4


class SingularInnovationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Detection:
    """Measured box center/size in pixels plus detector confidence."""

    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h, self.confidence)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite detection {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"detection size must be positive, got ({self.w}, {self.h})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=float)


@dataclass(frozen=True)
class ObjectState:
    s: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float).reshape(STATE_DIM)
        V = np.array(self.V, dtype=float).reshape(STATE_DIM, STATE_DIM)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(V))):
            raise ValueError("state has non-finite entries")
        if s[2] <= 0 or s[3] <= 0:
            raise ValueError(f"state size must be positive, got ({s[2]}, {s[3]})")
        s.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "V", V)

    @property
    def position(self) -> np.ndarray:
        return self.s[:2]

    @property
    def size(self) -> np.ndarray:
        return self.s[2:4]

    @property
    def velocity(self) -> np.ndarray:
        return self.s[4:6]

    def check_invariants(self, rel_tol: float = 1e-9) -> None:
        """Raise AssertionError if V is not symmetric PSD to within ``rel_tol``."""
        scale = max(float(np.trace(self.V)), 1.0)
        asym = float(np.max(np.abs(self.V - self.V.T)))
        assert asym <= rel_tol * scale, f"covariance asymmetric by {asym}"
        eig = np.linalg.eigvalsh(0.5 * (self.V + self.V.T))
        assert eig.min() >= -rel_tol * scale, f"covariance not PSD (min eig {eig.min()})"


def constant_velocity_transition(dt: float = 1.0) -> np.ndarray:
    f = np.eye(STATE_DIM)
    f[0, 4] = dt
    f[1, 5] = dt
    return f


def observation_matrix() -> np.ndarray:
    return np.eye(OBS_DIM, STATE_DIM)


@dataclass(frozen=True)
class KalmanModel:
    """Linear-Gaussian model matrices.

    ``B`` is kept (as zeros) only so the predict step reads as ``F s + B u``
    with a zero control input.
    """

    F: np.ndarray = field(default_factory=constant_velocity_transition)
    Q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1.0, 1.0, 0.0625, 0.0625]))
    O: np.ndarray = field(default_factory=observation_matrix)
    R: np.ndarray = field(default_factory=lambda: np.diag([16.0, 16.0, 16.0, 16.0]))
    B: np.ndarray = field(default_factory=lambda: np.zeros((STATE_DIM, 1)))

    @classmethod
    def constant_velocity(cls, q_pos=1.0, q_size=1.0, q_vel=0.25,
                          r_pos=4.0, r_size=4.0, dt=1.0) -> "KalmanModel":
        """Build the model from noise standard deviations (px, px/frame)."""
        return cls(
            F=constant_velocity_transition(dt),
            Q=np.diag(np.square([q_pos, q_pos, q_size, q_size, q_vel, q_vel])),
            R=np.diag(np.square([r_pos, r_pos, r_size, r_size])),
        )


def predict(state: ObjectState, model: KalmanModel) -> ObjectState:
    u = np.zeros(model.B.shape[1])
    s = model.F @ state.s + model.B @ u
    V = model.F @ state.V @ model.F.T + model.Q
    return ObjectState(s, 0.5 * (V + V.T))


def update(state: ObjectState, model: KalmanModel, d: Detection) -> ObjectState:
    O, V = model.O, state.V
    innov_cov = O @ V @ O.T + model.R
    if not np.linalg.cond(innov_cov) < 1e15:
        raise SingularInnovationError("innovation covariance is singular")
    # K = V O^T S^-1, solved as S^T K^T = O V^T
    K = np.linalg.solve(innov_cov.T, O @ V.T).T
    s = state.s + K @ (d.as_vector() - O @ state.s)
    V_post = (np.eye(STATE_DIM) - K @ O) @ V
    return ObjectState(s, 0.5 * (V_post + V_post.T))


def gated_update(state: ObjectState, model: KalmanModel, d: Detection | None,
                 theta_d: float) -> ObjectState:
    """Update only when a detection is present and its confidence exceeds ``theta_d``."""
    if d is None or not d.confidence > theta_d:
        return state
    return update(state, model, d)


def init_state(d: Detection, initial_covariance) -> ObjectState:
    """Start a track at the detection with zero velocity.

    ``initial_covariance`` is either a 6x6 matrix or the 6 diagonal entries;
    a ``TrackerConfig`` is also accepted.
    """
    cov = getattr(initial_covariance, "initial_covariance", initial_covariance)
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    return ObjectState(np.array([d.x, d.y, d.w, d.h, 0.0, 0.0]), cov)


def with_velocity(state: ObjectState, velocity) -> ObjectState:
    s = np.array(state.s)
    s[4:6] = velocity
    return replace(state, s=s)
