"""Odometry containers, cumulative cubic B-spline trajectories and resampling.

A :class:`ControlSpline` with ``n`` control poses spaced ``knot`` seconds apart
is valid on ``[0, (n - 3) * knot]``. Segment ``i`` covers
``[i * knot, (i + 1) * knot]`` and blends control poses ``i .. i + 3`` with the
cumulative basis::

    p(u) = p_i + sum_j b_j(u) (p_{i+j} - p_{i+j-1})
    R(u) = R_i prod_j Exp(b_j(u) Log(R_{i+j-1}^T R_{i+j}))

for ``j = 1, 2, 3`` and ``u`` in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidConfig, InvalidRotation, OutOfRange, OutOfSupport, TooShort
from .geometry import ROTATION_TOL, as_rotation, exp_so3

_SUPPORT_EPS = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_rotations(R: np.ndarray) -> None:
    if R.ndim != 3 or R.shape[1:] != (3, 3):
        raise InvalidRotation(f"expected (n, 3, 3) rotations, got {R.shape}")
    ortho = np.abs(np.einsum("nji,njk->nik", R, R) - np.eye(3)).max(initial=0.0)
    det = np.abs(np.linalg.det(R) - 1.0).max(initial=0.0) if len(R) else 0.0
    if ortho > ROTATION_TOL or det > ROTATION_TOL:
        raise InvalidRotation(
            f"rotation off SO(3): orthonormality error {ortho:.2e}, det error {det:.2e}"
        )


@dataclass(frozen=True, eq=False)
class TimedPose:
    timestamp: float
    rotation: np.ndarray
    translation: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "rotation", _frozen(as_rotation(self.rotation)))
        for name in ("translation", "velocity"):
            v = _frozen(getattr(self, name)).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not np.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered odometry samples stored column-wise.

    Arrays are read-only; operations return new trajectories.
    """

    timestamps: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        t = _frozen(self.timestamps).reshape(-1)
        R = _frozen(self.rotations)
        p = _frozen(self.translations)
        v = _frozen(self.velocities)
        n = len(t)
        if n < 2:
            raise TooShort(f"trajectory needs at least 2 samples, got {n}")
        if R.shape != (n, 3, 3) or p.shape != (n, 3) or v.shape != (n, 3):
            raise ValueError("inconsistent trajectory array shapes")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("trajectory contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        _check_rotations(R)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", p)
        object.__setattr__(self, "velocities", v)

    @classmethod
    def from_poses(cls, poses: Sequence[TimedPose]) -> "Trajectory":
        return cls(
            np.array([q.timestamp for q in poses]),
            np.array([q.rotation for q in poses]),
            np.array([q.translation for q in poses]),
            np.array([q.velocity for q in poses]),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, k: int) -> TimedPose:
        return TimedPose(
            self.timestamps[k], self.rotations[k], self.translations[k], self.velocities[k]
        )

    @property
    def t_start(self) -> float:
        return float(self.timestamps[0])

    @property
    def t_end(self) -> float:
        return float(self.timestamps[-1])

    def transformed(self, R, t) -> "Trajectory":
        """Express the trajectory in another frame: ``p' = R p + t``, ``R_k' = R R_k``."""
        R = as_rotation(R)
        t = np.asarray(t, dtype=float).reshape(3)
        return Trajectory(
            self.timestamps,
            np.einsum("ij,njk->nik", R, self.rotations),
            self.translations @ R.T + t,
            self.velocities @ R.T,
        )


@dataclass(frozen=True, eq=False)
class ControlSpline:
    rotations: np.ndarray
    translations: np.ndarray
    knot: float
    order: int = 3

    def __post_init__(self):
        R = _frozen(self.rotations)
        p = _frozen(self.translations)
        if self.order != 3:
            raise InvalidConfig("only third-order (cubic) splines are supported")
        if len(p) < 4 or R.shape != (len(p), 3, 3) or p.shape != (len(p), 3):
            raise InvalidConfig(f"need at least 4 control poses, got {len(p)}")
        if not self.knot > 0:
            raise InvalidConfig("knot interval must be positive")
        _check_rotations(R)
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", p)
        object.__setattr__(self, "knot", float(self.knot))
        rel = np.einsum("nji,njk->nik", R[:-1], R[1:])
        object.__setattr__(self, "_increments", _frozen(Rotation.from_matrix(rel).as_rotvec()))

    @property
    def num_control(self) -> int:
        return len(self.translations)

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, (self.num_control - 3) * self.knot


def generate_spline(
    num_control: int = 40,
    max_step: float = 0.5,
    knot: float = 1.0,
    seed=None,
    *,
    max_rotation_step: float = 0.5,
    origin=(0.0, 0.0, 0.0),
) -> ControlSpline:
    """Random-walk control poses.

    Each translation step has a uniformly random direction and a length drawn
    uniformly from ``[0, max_step]``; each orientation step is a rotation by at
    most ``max_rotation_step`` radians about a random axis. ``seed`` may be an
    int, a ``SeedSequence`` or a ``Generator``.
    """
    if num_control < 4:
        raise InvalidConfig(f"num_control must be >= 4 for a cubic spline, got {num_control}")
    if not max_step > 0 or not knot > 0 or not max_rotation_step >= 0:
        raise InvalidConfig("max_step and knot must be positive")
    rng = np.random.default_rng(seed)

    dirs = rng.standard_normal((num_control - 1, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    steps = dirs * rng.uniform(0.0, max_step, size=(num_control - 1, 1))
    p = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)]) + np.asarray(origin, dtype=float)

    axes = rng.standard_normal((num_control - 1, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_rotation_step, size=(num_control - 1, 1))
    R = np.empty((num_control, 3, 3))
    R[0] = Rotation.random(random_state=rng).as_matrix()
    for k, w in enumerate(axes * angles):
        R[k + 1] = R[k] @ exp_so3(w)
    # re-orthonormalize accumulated products
    R = Rotation.from_matrix(R).as_matrix()
    return ControlSpline(R, p, knot)


_B = np.array(
    [
        [5.0, 3.0, -3.0, 1.0],
        [1.0, 3.0, 3.0, -2.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
) / 6.0


def _basis(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative basis values and their d/du, each shaped ``(len(u), 3)``."""
    powers = np.stack([np.ones_like(u), u, u * u, u**3], axis=1)
    dpowers = np.stack([np.zeros_like(u), np.ones_like(u), 2 * u, 3 * u * u], axis=1)
    return powers @ _B.T, dpowers @ _B.T


def _evaluate(spline: ControlSpline, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = spline.support
    bad = (t < lo - _SUPPORT_EPS) | (t > hi + _SUPPORT_EPS) | ~np.isfinite(t)
    if np.any(bad):
        raise OutOfSupport(f"time {t[bad][0]!r} outside spline support [{lo}, {hi}]")
    s = np.clip(t, lo, hi) / spline.knot
    seg = np.minimum(np.floor(s).astype(int), spline.num_control - 4)
    u = s - seg
    b, db = _basis(u)

    P = spline.translations
    W = spline._increments
    dP = np.stack([P[seg + j] - P[seg + j - 1] for j in (1, 2, 3)], axis=1)
    pos = P[seg] + np.einsum("nj,njk->nk", b, dP)
    vel = np.einsum("nj,njk->nk", db, dP) / spline.knot

    rot = Rotation.from_matrix(spline.rotations[seg])
    for j in (1, 2, 3):
        rot = rot * Rotation.from_rotvec(b[:, j - 1 : j] * W[seg + j - 1])
    return rot.as_matrix(), pos, vel


def sample_pose(spline: ControlSpline, t: float) -> TimedPose:
    """Pose and analytic translational velocity at time ``t``."""
    R, p, v = _evaluate(spline, [t])
    return TimedPose(t, R[0], p[0], v[0])


def sample_trajectory(spline: ControlSpline, t0: float, dt: float, n: int) -> Trajectory:
    """``n`` poses at ``t0, t0 + dt, ...``."""
    if n < 2 or not dt > 0:
        raise InvalidConfig("need n >= 2 and dt > 0")
    times = t0 + dt * np.arange(n)
    R, p, v = _evaluate(spline, times)
    return Trajectory(times, R, p, v)


def sample_at(spline: ControlSpline, times) -> Trajectory:
    R, p, v = _evaluate(spline, times)
    return Trajectory(np.asarray(times, dtype=float), R, p, v)


def shift_trajectory(traj: Trajectory, delta: float) -> Trajectory:
    """Relabel every timestamp as ``timestamp - delta``; poses are untouched."""
    return Trajectory(traj.timestamps - delta, traj.rotations, traj.translations, traj.velocities)


def interpolate_many(traj: Trajectory, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`interpolate` returning ``(R, p, v)`` arrays."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    ts = traj.timestamps
    bad = (t < ts[0]) | (t > ts[-1]) | ~np.isfinite(t)
    if np.any(bad):
        raise OutOfRange(f"time {t[bad][0]!r} outside trajectory range [{ts[0]}, {ts[-1]}]")
    k = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
    u = (t - ts[k]) / (ts[k + 1] - ts[k])
    exact_hi = t == ts[k + 1]
    u = np.where(exact_hi, 1.0, u)

    p0, p1 = traj.translations[k], traj.translations[k + 1]
    v0, v1 = traj.velocities[k], traj.velocities[k + 1]
    p = p0 + u[:, None] * (p1 - p0)
    v = v0 + u[:, None] * (v1 - v0)
    R0 = traj.rotations[k]
    rel = Rotation.from_matrix(np.einsum("nji,njk->nik", R0, traj.rotations[k + 1]))
    R = R0 @ Rotation.from_rotvec(u[:, None] * rel.as_rotvec()).as_matrix()

    # hit samples exactly when the query equals a timestamp
    at0 = u == 0.0
    at1 = u == 1.0
    R[at0], p[at0], v[at0] = R0[at0], p0[at0], v0[at0]
    R[at1] = traj.rotations[k + 1][at1]
    p[at1], v[at1] = p1[at1], v1[at1]
    return R, p, v


def interpolate(traj: Trajectory, t: float) -> TimedPose:
    """Pose at ``t``: linear in translation and velocity, slerp in rotation.

    Raises:
        OutOfRange: if ``t`` lies outside ``[traj.t_start, traj.t_end]``.
    """
    R, p, v = interpolate_many(traj, [t])
    return TimedPose(t, R[0], p[0], v[0])


def finite_difference_velocities(traj: Trajectory) -> Trajectory:
    """Replace velocities by central differences (one-sided at both ends)."""
    if len(traj) < 3:
        raise TooShort(f"need at least 3 samples for finite differences, got {len(traj)}")
    v = np.gradient(traj.translations, traj.timestamps, axis=0, edge_order=1)
    return Trajectory(traj.timestamps, traj.rotations, traj.translations, v)
