"""Relative pose and clock offset estimation between two robots.

Three estimators share one pipeline (align, assemble, relax, solve, decode):

* :func:`estimate_nto` -- single solve with the offset in the model.
* :func:`estimate_baseline` -- single solve assuming synchronized clocks.
* :func:`estimate_ito` -- repeated NTO solves, re-labelling the observed
  robot's timestamps by each estimate until the increment falls below
  ``epsilon``.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sdp
from .errors import DegenerateSolution, InconsistentLift, InvalidConfig
from .geometry import as_rotation, matrix_to_quat, project_to_rotation, unvec
from .problem import (
    OFFSET_LAYOUT,
    LiftedLayout,
    assemble,
    build_constraints,
    bundle,
    layout_for,
    lift,
    recover_marginalized,
)
from .sim import BearingObservation
from .trajectory import Trajectory, shift_trajectory

log = logging.getLogger(__name__)

LIFT_TOL = 0.05


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 100
    tightness_threshold: float = sdp.TIGHTNESS_THRESHOLD
    # drop the 21 constraints on r_s (ablation)
    offset_family: bool = True
    backend: sdp.Backend | None = None


@dataclass(frozen=True)
class ItoConfig:
    max_iterations: int = 10
    epsilon: float = 0.01
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if not self.epsilon > 0:
            raise InvalidConfig("epsilon must be positive")


@dataclass(frozen=True, eq=False)
class RelativeEstimate:
    """Decoded solution.

    ``rotation``/``translation`` map L2 coordinates into L1:
    ``p_L1 = rotation @ p_L2 + translation``. ``offset`` is the observed
    robot's clock minus the observer's.
    """

    rotation: np.ndarray
    translation: np.ndarray
    offset: float
    distances: np.ndarray
    cost: float
    rank_ratio: float
    tight: bool
    ratio_offset: float = 0.0
    lifted: np.ndarray | None = None
    solver_status: str = sdp.Status.OPTIMAL.value
    solver_iterations: int = 0
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rotation", as_rotation(self.rotation))

    @property
    def wall_time(self) -> float:
        return float(sum(self.timings.values()))


@dataclass(frozen=True, eq=False)
class ItoResult:
    total_offset: float
    offsets: list
    estimate: RelativeEstimate
    converged: bool
    iterations: int
    inconsistent_iterations: list = field(default_factory=list)
    wall_time: float = 0.0


def decode(z, layout: LiftedLayout = OFFSET_LAYOUT, lift_tol: float = LIFT_TOL):
    """Rotation, offset and homogenizing scale from a lifted vector.

    ``z`` is normalized so ``y = 1``; the rotation block is projected onto
    SO(3). The offset is read from the lifted entry and cross-checked
    against ``<r_s, r_p> / <r_p, r_p>``.

    Returns:
        ``(R, dtau, y)`` with ``y`` the scale before normalization.

    Raises:
        InconsistentLift: the two offset readouts differ by more than ``lift_tol``.
        DegenerateMatrix: the rotation block cannot be projected.
    """
    z = np.asarray(z, dtype=float)
    y = float(z[layout.y])
    zn = z / y
    rp = zn[layout.rp]
    R = project_to_rotation(unvec(rp))
    if not layout.with_offset:
        return R, 0.0, y
    dtau = float(zn[layout.dtau])
    ratio = float(zn[layout.rs] @ rp / (rp @ rp))
    if abs(dtau - ratio) > lift_tol:
        raise InconsistentLift(
            f"offset readouts disagree: lifted {dtau:.4f} s vs ratio {ratio:.4f} s",
            lifted=dtau,
            ratio=ratio,
        )
    return R, dtau, y


def _ratio_offset(z, layout: LiftedLayout) -> float:
    if not layout.with_offset:
        return 0.0
    zn = z / z[layout.y]
    rp = zn[layout.rp]
    return float(zn[layout.rs] @ rp / (rp @ rp))


def _estimate(bearings, traj_a, traj_b, config: SolverConfig, with_offset: bool, lift_tol: float | None):
    layout = layout_for(with_offset)
    timings = {}
    t0 = time.perf_counter()
    problem = assemble(bundle(bearings, traj_a, traj_b), with_offset=with_offset)
    constraints = build_constraints(with_offset, config.offset_family)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    backend = config.backend or sdp.solve
    sol = backend(
        sdp.SdpProblem.from_constraints(problem.Q0, constraints),
        gap_tol=config.gap_tol,
        feas_tol=config.feas_tol,
        max_iters=config.max_iters,
    )
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rank = sdp.tightness(sol)
    tight = rank <= config.tightness_threshold
    if not tight:
        warnings.warn(
            f"relaxation not certified tight (rank ratio {rank:.2e}); using best rank-1 estimate",
            RuntimeWarning,
            stacklevel=3,
        )
    z = sdp.extract_rank1(sol, layout.y)
    if abs(z[layout.y]) < 0.5:
        raise DegenerateSolution(f"homogenizing entry {z[layout.y]:.3f} too small")
    R, dtau, _ = decode(z, layout, np.inf if lift_tol is None else lift_tol)
    x_kept = lift(R, dtau, with_offset=with_offset)[: layout.kept]
    t, D = recover_marginalized(problem, x_kept)
    if np.any(D <= 0):
        warnings.warn(f"{int(np.sum(D <= 0))} recovered distances are not positive", RuntimeWarning, stacklevel=3)
    timings["decode"] = time.perf_counter() - t0
    return RelativeEstimate(
        rotation=R,
        translation=t,
        offset=dtau,
        distances=D,
        cost=float(sol.primal_objective),
        rank_ratio=rank,
        tight=tight,
        ratio_offset=_ratio_offset(z, layout),
        lifted=z,
        solver_status=sol.status.value,
        solver_iterations=sol.iterations,
        timings=timings,
    )


def estimate_nto(
    bearings: Sequence[BearingObservation],
    traj_a: Trajectory,
    traj_b: Trajectory,
    config: SolverConfig = SolverConfig(),
    *,
    lift_tol: float = LIFT_TOL,
) -> RelativeEstimate:
    """Joint pose and offset from a single relaxation solve."""
    return _estimate(bearings, traj_a, traj_b, config, True, lift_tol)


def estimate_baseline(
    bearings: Sequence[BearingObservation],
    traj_a: Trajectory,
    traj_b: Trajectory,
    config: SolverConfig = SolverConfig(),
) -> RelativeEstimate:
    """Pose only, treating the clocks as synchronized; ``offset`` is always 0."""
    return _estimate(bearings, traj_a, traj_b, config, False, None)


def estimate_ito(
    bearings: Sequence[BearingObservation],
    traj_a: Trajectory,
    traj_b: Trajectory,
    config: ItoConfig = ItoConfig(),
) -> ItoResult:
    """Coarse-to-fine offset recovery.

    Each round solves NTO on the current observed-robot odometry, adds the
    increment to the running total and relabels that odometry by the
    increment. Stops when ``|increment| < epsilon``. The readout consistency
    check is enforced only on the converging round; earlier rounds log a
    disagreement and continue with the lifted entry. A loop that runs
    out of rounds still returns, with ``converged`` False.
    """
    T = 0.0
    offsets = []
    inconsistent = []
    est = None
    converged = False
    wall = 0.0
    for i in range(config.max_iterations):
        est = estimate_nto(bearings, traj_a, traj_b, config.solver, lift_tol=np.inf)
        wall += est.wall_time
        step = est.offset
        if abs(step - est.ratio_offset) > LIFT_TOL:
            if abs(step) < config.epsilon:
                raise InconsistentLift(
                    f"final round offset readouts disagree: lifted {step:.4f} s "
                    f"vs ratio {est.ratio_offset:.4f} s",
                    lifted=step,
                    ratio=est.ratio_offset,
                )
            log.info("round %d: offset readouts disagree (%.4f vs %.4f)", i + 1, step, est.ratio_offset)
            inconsistent.append(i)
        offsets.append(step)
        T += step
        if abs(step) < config.epsilon:
            converged = True
            break
        traj_b = shift_trajectory(traj_b, step)
    final = RelativeEstimate(
        rotation=est.rotation,
        translation=est.translation,
        offset=T,
        distances=est.distances,
        cost=est.cost,
        rank_ratio=est.rank_ratio,
        tight=est.tight,
        ratio_offset=est.ratio_offset,
        lifted=est.lifted,
        solver_status=est.solver_status,
        solver_iterations=est.solver_iterations,
        timings=est.timings,
    )
    if not converged:
        log.warning("ITO did not converge in %d iterations (last step %.4f s)", config.max_iterations, offsets[-1])
    return ItoResult(T, offsets, final, converged, len(offsets), inconsistent, wall)


def estimate_report(result, method: str, truth: dict | None = None) -> dict:
    """JSON-ready summary of an estimate or an ITO result."""
    est = result.estimate if isinstance(result, ItoResult) else result
    report = {
        "method": method,
        "rotation_quaternion_wxyz": matrix_to_quat(est.rotation).tolist(),
        "rotation_matrix": est.rotation.tolist(),
        "translation": np.asarray(est.translation).tolist(),
        "offset": float(est.offset),
        "ratio_offset": float(est.ratio_offset),
        "cost": float(est.cost),
        "rank_ratio": float(est.rank_ratio),
        "tight": bool(est.tight),
        "solver_status": est.solver_status,
        "timings": {k: float(v) for k, v in est.timings.items()},
        "num_bearings": int(len(est.distances)),
        "min_distance": float(np.min(est.distances)),
    }
    if isinstance(result, ItoResult):
        report.update(
            total_offset=float(result.total_offset),
            iteration_offsets=[float(v) for v in result.offsets],
            iterations=result.iterations,
            converged=result.converged,
            inconsistent_iterations=list(result.inconsistent_iterations),
            wall_time=float(result.wall_time),
        )
    else:
        report["wall_time"] = est.wall_time
    if truth is not None:
        report["truth"] = truth
    return report
