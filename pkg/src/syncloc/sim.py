"""Synthetic two-robot scenarios: bearings with a clock offset and ground truth.

Clock model: each robot's spline is parameterized by its own local clock. A
bearing taken at observer time ``tau`` points at the observed robot's position
at *its* local time ``tau + offset``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoincidentRobots, InvalidConfig, OutOfSupport
from .geometry import random_rotation
from .trajectory import ControlSpline, Trajectory, _evaluate, generate_spline, sample_trajectory

UNIT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BearingObservation:
    timestamp: float
    direction: np.ndarray

    def __post_init__(self):
        b = np.array(self.direction, dtype=float).reshape(3)
        if not np.all(np.isfinite(b)) or abs(np.linalg.norm(b) - 1.0) > UNIT_TOL:
            raise ValueError(f"bearing direction must be unit norm, got |b|={np.linalg.norm(b)}")
        b.setflags(write=False)
        object.__setattr__(self, "direction", b)
        object.__setattr__(self, "timestamp", float(self.timestamp))


def bearing_arrays(bearings: Sequence[BearingObservation]) -> tuple[np.ndarray, np.ndarray]:
    t = np.array([b.timestamp for b in bearings], dtype=float)
    d = np.array([b.direction for b in bearings], dtype=float).reshape(-1, 3)
    return t, d


def synthesize_bearings(
    spline_a: ControlSpline,
    spline_b: ControlSpline,
    n: int,
    true_offset: float,
    sigma: float,
    seed=None,
    *,
    times=None,
    span: tuple[float, float] | None = None,
) -> list[BearingObservation]:
    """Noisy unit bearings from robot A to robot B, in A's body frame.

    Observer timestamps are ``times`` if given, else ``n`` uniform samples over
    ``span`` (default: the part of A's support where B's shifted clock is also
    supported). Noise is iid Gaussian per component, followed by
    renormalization.
    """
    if times is None:
        if span is None:
            a0, a1 = spline_a.support
            b0, b1 = spline_b.support
            span = (max(a0, b0 - true_offset), min(a1, b1 - true_offset))
        if n < 1 or span[1] < span[0]:
            raise InvalidConfig(f"cannot place {n} bearings on span {span}")
        times = np.linspace(span[0], span[1], n)
    times = np.asarray(times, dtype=float)
    if sigma < 0:
        raise InvalidConfig("sigma must be non-negative")

    Ra, pa, _ = _evaluate(spline_a, times)
    try:
        _, pb, _ = _evaluate(spline_b, times + true_offset)
    except OutOfSupport as exc:
        raise OutOfSupport(f"observed robot spline does not cover offset {true_offset}: {exc}")
    d = pb - pa
    dist = np.linalg.norm(d, axis=1)
    if np.any(dist < 1e-6):
        raise CoincidentRobots(f"robots within 1e-6 m at t={times[np.argmin(dist)]}")
    b = np.einsum("nji,nj->ni", Ra, d) / dist[:, None]
    if sigma > 0:
        rng = np.random.default_rng(seed)
        b = b + sigma * rng.standard_normal(b.shape)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
    return [BearingObservation(t, v) for t, v in zip(times, b)]


@dataclass(frozen=True)
class SimConfig:
    """Scenario generator settings.

    ``bearing_margin`` (s) trims both ends of the bearing window so shifted
    queries stay inside the odometry; it also bounds the admissible offset.
    ``separation`` (m) offsets the first control point of the observed robot
    in a random direction; 0 generates both robots identically.
    ``gauge_translation`` bounds the random L1/L2 translation per axis.
    """

    num_control: int = 40
    max_step: float = 0.5
    knot: float = 1.0
    max_rotation_step: float = 0.5
    odom_dt: float = 0.005
    odom_count: int = 4000
    bearing_count: int = 200
    bearing_margin: float = 1.5
    separation: float = 0.0
    gauge_translation: float = 5.0

    def validate(self) -> None:
        if self.num_control < 4:
            raise InvalidConfig("num_control must be >= 4")
        for name in ("max_step", "knot", "odom_dt"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.odom_count < 3 or self.bearing_count < 1:
            raise InvalidConfig("odom_count must be >= 3 and bearing_count >= 1")
        if min(self.bearing_margin, self.max_rotation_step, self.gauge_translation, self.separation) < 0:
            raise InvalidConfig("margins and step bounds must be non-negative")


@dataclass(frozen=True, eq=False)
class Scenario:
    """One simulated robot pair with everything needed to score an estimate.

    ``traj_a`` is expressed in frame L1, ``traj_b`` in frame L2; a point maps
    ``p_L1 = rotation @ p_L2 + translation``.
    """

    spline_a: ControlSpline
    spline_b: ControlSpline
    traj_a: Trajectory
    traj_b: Trajectory
    bearings: list
    rotation: np.ndarray
    translation: np.ndarray
    offset: float
    sigma: float

    def true_distances(self) -> np.ndarray:
        t, _ = bearing_arrays(self.bearings)
        _, pa, _ = _evaluate(self.spline_a, t)
        _, pb, _ = _evaluate(self.spline_b, t + self.offset)
        return np.linalg.norm(pb - pa, axis=1)


def simulate_pair(
    config: SimConfig = SimConfig(),
    offset: float = 0.0,
    sigma: float = 0.0,
    seed=0,
    *,
    gauge: bool = True,
) -> Scenario:
    """Generate two random splines, their odometry and the bearings between them.

    The splines and the L1/L2 gauge depend only on ``seed``; the bearing noise
    draws from an independent stream, so the same seed at different offsets or
    noise levels shares the trajectories.
    """
    config.validate()
    window = (config.odom_count - 1) * config.odom_dt
    if window > (config.num_control - 3) * config.knot:
        raise OutOfSupport(
            f"odometry window {window:.3f} s exceeds spline support "
            f"{(config.num_control - 3) * config.knot:.3f} s"
        )
    if abs(offset) > config.bearing_margin:
        raise OutOfSupport(
            f"offset {offset} s exceeds the bearing margin {config.bearing_margin} s"
        )
    k_lo = int(np.ceil(config.bearing_margin / config.odom_dt - 1e-9))
    k_hi = config.odom_count - 1 - k_lo
    if k_hi - k_lo + 1 < config.bearing_count:
        raise OutOfSupport("bearing margin leaves too few odometry samples for the bearings")

    ss_a, ss_b, ss_gauge, ss_noise = np.random.SeedSequence(seed).spawn(4)
    rng_b = np.random.default_rng(ss_b)
    direction = rng_b.standard_normal(3)
    direction /= np.linalg.norm(direction)
    kw = dict(max_rotation_step=config.max_rotation_step)
    spline_a = generate_spline(config.num_control, config.max_step, config.knot, ss_a, **kw)
    spline_b = generate_spline(
        config.num_control, config.max_step, config.knot, rng_b,
        origin=config.separation * direction, **kw,
    )

    rng_g = np.random.default_rng(ss_gauge)
    if gauge:
        R_true = random_rotation(rng_g)
        t_true = rng_g.uniform(-config.gauge_translation, config.gauge_translation, 3)
    else:
        R_true, t_true = np.eye(3), np.zeros(3)

    traj_a = sample_trajectory(spline_a, 0.0, config.odom_dt, config.odom_count)
    traj_b_world = sample_trajectory(spline_b, 0.0, config.odom_dt, config.odom_count)
    traj_b = traj_b_world.transformed(R_true.T, -R_true.T @ t_true)

    # bearings sit on odometry timestamps so the synchronized case needs no interpolation
    idx = np.unique(np.round(np.linspace(k_lo, k_hi, config.bearing_count)).astype(int))
    times = traj_a.timestamps[idx]
    bearings = synthesize_bearings(
        spline_a, spline_b, len(times), offset, sigma, ss_noise, times=times
    )
    return Scenario(spline_a, spline_b, traj_a, traj_b, bearings, R_true, t_true, offset, sigma)
