"""State, detection and measurement spaces, plus the motion and camera models.

State layout (camera/ego frame, x right, y down, z forward)::

    [x, y, z, vx, vy, vz, w, h]

Measurement layout::

    [u_c, v_c, d, w, h]

with (u_c, v_c) the bounding-box center in pixels, ``d`` the distance from
the camera center in meters and (w, h) the box size in pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

STATE_DIM = 8
MEAS_DIM = 5

# Depth floor used by the array projection inside sigma-point propagation.
MIN_PROJECTION_DEPTH = 0.1


class ModelError(ValueError):
    """Invalid model input (non-finite state, degenerate box, ...)."""


class BehindCameraError(ModelError):
    """A point with non-positive depth cannot be projected."""


@dataclass(frozen=True)
class ObjectState:
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    w: float
    h: float

    def __post_init__(self):
        values = self.to_array()
        if not np.all(np.isfinite(values)):
            raise ModelError(f"non-finite state field in {values}")
        if self.w <= 0 or self.h <= 0:
            raise ModelError(f"box extent must be positive, got w={self.w}, h={self.h}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz, self.w, self.h], dtype=float)

    @classmethod
    def from_array(cls, a) -> "ObjectState":
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (STATE_DIM,):
            raise ModelError(f"state vector must have {STATE_DIM} entries, got {a.shape}")
        return cls(*(float(v) for v in a))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz])


@dataclass(frozen=True)
class Detection:
    """Raw detector output: a box in pixel corners plus an estimated distance."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    d: float
    score: float = 1.0
    class_label: str = "Car"

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max, self.d, self.score)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"non-finite detection field in {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ModelError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})")
        if self.d <= 0:
            raise ModelError(f"distance must be positive, got {self.d}")

    @property
    def box(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])


@dataclass(frozen=True)
class MeasurementVector:
    u_c: float
    v_c: float
    d: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.u_c, self.v_c, self.d, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"non-finite measurement field in {vals}")
        if self.d <= 0 or self.w <= 0 or self.h <= 0:
            raise ModelError(f"d, w, h must be positive, got d={self.d}, w={self.w}, h={self.h}")

    def to_array(self) -> np.ndarray:
        return np.array([self.u_c, self.v_c, self.d, self.w, self.h], dtype=float)

    @classmethod
    def from_array(cls, a) -> "MeasurementVector":
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (MEAS_DIM,):
            raise ModelError(f"measurement vector must have {MEAS_DIM} entries, got {a.shape}")
        return cls(*(float(v) for v in a))

    def corners(self) -> tuple[float, float, float, float]:
        return (self.u_c - self.w / 2, self.v_c - self.h / 2,
                self.u_c + self.w / 2, self.v_c + self.h / 2)

    def to_detection(self, score: float = 1.0, class_label: str = "Car") -> Detection:
        return Detection(*self.corners(), d=self.d, score=score, class_label=class_label)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics. Image size is only used to bound clutter and birth."""

    f_u: float = 721.5377
    f_v: float = 721.5377
    c_u: float = 609.5593
    c_v: float = 172.854
    frame_rate: float = 10.0
    image_width: float = 1242.0
    image_height: float = 375.0

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ModelError(f"focal lengths must be positive, got {self.f_u}, {self.f_v}")
        if not self.frame_rate > 0:
            raise ModelError(f"frame rate must be positive, got {self.frame_rate}")

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate


@dataclass(frozen=True)
class MeasurementRegion:
    """Axis-aligned box in measurement space over which clutter is uniform."""

    u: tuple[float, float] = (0.0, 1242.0)
    v: tuple[float, float] = (0.0, 375.0)
    d: tuple[float, float] = (0.0, 80.0)
    w: tuple[float, float] = (5.0, 400.0)
    h: tuple[float, float] = (5.0, 300.0)

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not hi > lo:
                raise ModelError(f"empty measurement region interval ({lo}, {hi})")

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [self.u, self.v, self.d, self.w, self.h]

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @classmethod
    def for_camera(cls, cam: CameraModel, max_distance: float = 80.0) -> "MeasurementRegion":
        return cls(u=(0.0, cam.image_width), v=(0.0, cam.image_height), d=(0.0, max_distance))


# --- motion -----------------------------------------------------------------

def cv_transition_array(x: np.ndarray, dt: float) -> np.ndarray:
    """Constant-velocity mean function on stacked state rows ``(..., 8)``."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 0:3] += dt * x[..., 3:6]
    return out


def cv_matrix(dt: float) -> np.ndarray:
    F = np.eye(STATE_DIM)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    return F


def cv_transition(state: ObjectState, dt: float) -> ObjectState:
    if not (math.isfinite(dt) and dt > 0):
        raise ModelError(f"dt must be positive and finite, got {dt}")
    return ObjectState.from_array(cv_transition_array(state.to_array(), dt))


def cv_process_noise(dt: float, accel_std=(1.0, 0.2, 1.0), extent_std=(2.0, 2.0)) -> np.ndarray:
    """Discretized white-noise-acceleration covariance plus a box-size random walk."""
    Q = np.zeros((STATE_DIM, STATE_DIM))
    for axis, sa in enumerate(accel_std):
        q = sa ** 2
        Q[axis, axis] = q * dt ** 3 / 3
        Q[axis, axis + 3] = Q[axis + 3, axis] = q * dt ** 2 / 2
        Q[axis + 3, axis + 3] = q * dt
    Q[6, 6] = extent_std[0] ** 2
    Q[7, 7] = extent_std[1] ** 2
    return Q


# --- camera -----------------------------------------------------------------

def project_array(x: np.ndarray, cam: CameraModel, min_depth: float = MIN_PROJECTION_DEPTH) -> np.ndarray:
    """Pinhole measurement function on stacked state rows ``(..., 8)`` -> ``(..., 5)``.

    Depth is floored at ``min_depth`` so that sigma points straying behind
    the camera still map to finite pixels.
    """
    x = np.asarray(x, dtype=float)
    z = np.maximum(x[..., 2], min_depth)
    out = np.empty(x.shape[:-1] + (MEAS_DIM,))
    out[..., 0] = cam.c_u + cam.f_u * x[..., 0] / z
    out[..., 1] = cam.c_v + cam.f_v * x[..., 1] / z
    out[..., 2] = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2)
    out[..., 3] = x[..., 6]
    out[..., 4] = x[..., 7]
    return out


def project_to_measurement(state: ObjectState, cam: CameraModel) -> MeasurementVector:
    if state.z <= 0:
        raise BehindCameraError(f"depth must be positive to project, got z={state.z}")
    return MeasurementVector.from_array(project_array(state.to_array(), cam, min_depth=0.0))


def backproject(z: MeasurementVector, cam: CameraModel) -> np.ndarray:
    """Ray-cast a measurement back to the 3D point at distance ``d`` along its pixel ray."""
    ray = np.array([(z.u_c - cam.c_u) / cam.f_u, (z.v_c - cam.c_v) / cam.f_v, 1.0])
    return z.d * ray / np.linalg.norm(ray)


def detection_to_measurement(det: Detection) -> MeasurementVector:
    w = det.x_max - det.x_min
    h = det.y_max - det.y_min
    if w <= 0 or h <= 0:
        raise ModelError("degenerate box")
    return MeasurementVector((det.x_min + det.x_max) / 2, (det.y_min + det.y_max) / 2, det.d, w, h)


def detections_to_array(dets) -> np.ndarray:
    if len(dets) == 0:
        return np.zeros((0, MEAS_DIM))
    return np.array([detection_to_measurement(d).to_array() for d in dets])


# --- parameters -------------------------------------------------------------

@dataclass
class ModelParams:
    """Scalar and matrix parameters of the standard point-object models.

    ``measure`` overrides the camera projection with any function mapping
    stacked states ``(k, 8)`` to stacked measurements ``(k, m)``; tests use
    it to plug in linear stubs. ``motion`` likewise overrides the CV model
    and receives ``(states, dt)``.
    """

    p_D: float = 0.9
    p_S: float = 0.99
    lambda_clutter: float = 5.0
    clutter_region: MeasurementRegion = field(default_factory=MeasurementRegion)
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    birth_intensity: Optional[object] = None  # GaussianMixtureIntensity
    dt: float = 0.1
    camera: CameraModel = field(default_factory=CameraModel)
    measure: Optional[Callable[[np.ndarray], np.ndarray]] = None
    motion: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if self.Q is None:
            self.Q = cv_process_noise(self.dt)
        if self.R is None:
            self.R = default_measurement_noise()
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.birth_intensity is None:
            from .gaussian import GaussianMixtureIntensity
            self.birth_intensity = default_birth_intensity(self.camera, n_dim=self.Q.shape[0]) \
                if self.Q.shape[0] == STATE_DIM else GaussianMixtureIntensity.empty(self.Q.shape[0])
        self.validate()

    def validate(self):
        for name in ("p_D", "p_S"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"{name} must lie in [0, 1], got {p}")
        if not self.lambda_clutter >= 0:
            raise ModelError(f"clutter rate must be non-negative, got {self.lambda_clutter}")
        if not self.dt > 0:
            raise ModelError(f"dt must be positive, got {self.dt}")
        for name in ("Q", "R"):
            M = getattr(self, name)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ModelError(f"{name} must be square, got shape {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12):
                raise ModelError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-9 * max(np.trace(M), 1e-300):
                raise ModelError(f"{name} must be positive semi-definite")

    @property
    def clutter_volume(self) -> float:
        return self.clutter_region.volume

    @property
    def clutter_intensity(self) -> float:
        """kappa(z) = lambda * c(z) with c uniform over the clutter region."""
        return self.lambda_clutter / self.clutter_volume

    def measurement_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.measure is not None:
            return self.measure
        cam = self.camera
        return lambda x: project_array(x, cam)

    def motion_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        dt = self.dt
        if self.motion is not None:
            motion = self.motion
            return lambda x: motion(x, dt)
        return lambda x: cv_transition_array(x, dt)


def default_measurement_noise(std=(4.0, 4.0, 1.0, 4.0, 4.0)) -> np.ndarray:
    return np.diag(np.square(np.asarray(std, dtype=float)))


def default_birth_intensity(cam: CameraModel, n_dim: int = STATE_DIM, total_rate: float = 0.05,
                            depths=(5.0, 7.0, 10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0),
                            n_columns: int = 6, height_below_camera: float = 0.9,
                            object_size=(1.8, 1.5), velocity_std=(2.0, 0.2, 5.0)):
    """Coarse grid of Gaussian components covering the camera frustum.

    Components sit on ``n_columns`` pixel columns times the given depths, at
    ``height_below_camera`` meters below the optical center (car centers on a
    flat road). Position spreads scale with depth so that sigma points of
    every component stay in front of the camera; expected box size follows
    the pinhole size of a car-sized object.
    """
    from .gaussian import GaussianDensity, GaussianMixtureIntensity

    if n_dim != STATE_DIM:
        raise ModelError("default birth intensity is defined for the 8-dim state only")
    col_width = cam.image_width / n_columns
    u_centers = (np.arange(n_columns) + 0.5) * col_width
    comps = []
    log_w = math.log(total_rate / (len(depths) * n_columns))
    for z in depths:
        for u in u_centers:
            mean = np.zeros(STATE_DIM)
            mean[0] = z * (u - cam.c_u) / cam.f_u
            mean[1] = height_below_camera
            mean[2] = z
            mean[6] = cam.f_u * object_size[0] / z
            mean[7] = cam.f_v * object_size[1] / z
            std = np.array([z * 0.5 * col_width / cam.f_u, 0.4, 0.2 * z,
                            *velocity_std, 0.25 * mean[6], 0.25 * mean[7]])
            comps.append((log_w, GaussianDensity(mean, np.diag(std ** 2))))
    return GaussianMixtureIntensity(comps)
