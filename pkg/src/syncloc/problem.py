"""Least-squares data matrix, Schur marginalization and the quadratic constraint set.

Variable ordering (offset-aware problem)::

    x = [r_s (9), r_p (9), y, t (3), D_1 .. D_N]        full, length 22 + N
    x~ = [r_s, r_p, y]                                  kept, length 19
    z = [r_s, r_p, y, dtau]                             lifted, length 20

with ``r_p = vec(R)``, ``r_s = vec(dtau * R)`` and the residual of bearing k::

    e_k = g_k D_k + y t1_k - t - (t2_k^T (x) I3) r_p - (v2_k^T (x) I3) r_s

The no-offset variant drops ``r_s`` (and ``dtau``): ``x~ = [r_p, y]``,
``z = [r_p, y]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularMarginalization, TooFewMeasurements
from .geometry import vec
from .sim import BearingObservation, bearing_arrays
from .trajectory import Trajectory, interpolate_many

MIN_MEASUREMENTS = 12
COND_LIMIT = 1e12
BLOCK_TOL = 1e-10


@dataclass(frozen=True)
class LiftedLayout:
    """Index map of the kept and lifted variables."""

    rs: slice | None
    rp: slice
    y: int
    dtau: int | None
    dim: int

    @property
    def kept(self) -> int:
        """Length of the kept vector x~ (lifted vector minus dtau)."""
        return self.y + 1

    @property
    def with_offset(self) -> bool:
        return self.rs is not None


OFFSET_LAYOUT = LiftedLayout(rs=slice(0, 9), rp=slice(9, 18), y=18, dtau=19, dim=20)
BASELINE_LAYOUT = LiftedLayout(rs=None, rp=slice(0, 9), y=9, dtau=None, dim=10)


def layout_for(with_offset: bool) -> LiftedLayout:
    return OFFSET_LAYOUT if with_offset else BASELINE_LAYOUT


def lift(R, dtau: float = 0.0, *, with_offset: bool = True) -> np.ndarray:
    """Lifted vector of a feasible point with ``y = +1``."""
    r = vec(R)
    if not with_offset:
        return np.concatenate([r, [1.0]])
    return np.concatenate([dtau * r, r, [1.0, dtau]])


@dataclass(frozen=True, eq=False)
class MeasurementBundle:
    """Time-aligned per-bearing data in the observer's odometry frame.

    ``g[k]`` is the bearing rotated into L1; ``t1``, ``t2``, ``v2`` are the
    observer translation and the observed robot's translation and velocity at
    the bearing timestamp; ``W[k]`` the 3x3 residual weight.
    """

    timestamps: np.ndarray
    g: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    v2: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        n = len(self.g)
        for name in ("g", "t1", "t2", "v2"):
            a = getattr(self, name)
            if a.shape != (n, 3) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be a finite ({n}, 3) array")
        if self.W.shape != (n, 3, 3) or not np.all(np.isfinite(self.W)):
            raise ValueError("weights must be finite 3x3 matrices")
        if np.abs(self.W - self.W.transpose(0, 2, 1)).max(initial=0.0) > 1e-12:
            raise ValueError("weights must be symmetric")
        if n < MIN_MEASUREMENTS:
            raise TooFewMeasurements(f"need at least {MIN_MEASUREMENTS} bearings, got {n}")

    @property
    def N(self) -> int:
        return len(self.g)


def bundle(
    bearings: Sequence[BearingObservation],
    traj_a: Trajectory,
    traj_b: Trajectory,
    weights=None,
) -> MeasurementBundle:
    """Align each bearing with both odometry streams at the observer timestamp.

    Raises:
        OutOfRange: a bearing timestamp is outside either trajectory.
        TooFewMeasurements: fewer than 12 bearings.
    """
    t, b = bearing_arrays(bearings)
    if len(t) < MIN_MEASUREMENTS:
        raise TooFewMeasurements(f"need at least {MIN_MEASUREMENTS} bearings, got {len(t)}")
    Ra, t1, _ = interpolate_many(traj_a, t)
    _, t2, v2 = interpolate_many(traj_b, t)
    g = np.einsum("nij,nj->ni", Ra, b)
    if weights is None:
        W = np.broadcast_to(np.eye(3), (len(t), 3, 3)).copy()
    else:
        W = np.asarray(weights, dtype=float).reshape(len(t), 3, 3)
    return MeasurementBundle(t, g, t1, t2, v2, W)


def residual_rows(b: MeasurementBundle, with_offset: bool = True) -> np.ndarray:
    """Stacked per-bearing data matrices, shape ``(N, 3, dim x)``.

    ``rows[k] @ x`` is the residual ``e_k`` for the full variable ``x``.
    """
    N = b.N
    I3 = np.eye(3)
    # (t^T kron I3)[i, 3c + i] = t[c]
    kt = -np.einsum("nc,ij->nicj", b.t2, I3).reshape(N, 3, 9)
    blocks = [kt]
    if with_offset:
        kv = -np.einsum("nc,ij->nicj", b.v2, I3).reshape(N, 3, 9)
        blocks = [kv, kt]
    head = np.concatenate(blocks + [b.t1[:, :, None], np.broadcast_to(-I3, (N, 3, 3))], axis=2)
    dist = np.zeros((N, 3, N))
    dist[np.arange(N), :, np.arange(N)] = b.g
    return np.concatenate([head, dist], axis=2)


def _factor(C: np.ndarray):
    w = np.linalg.eigvalsh(C)
    if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise SingularMarginalization(f"eliminated block condition number {cond:.3e}")
    return cho_factor(C)


@dataclass(frozen=True, eq=False)
class StackedProblem:
    """Data matrix ``Q`` with its partition and the reduced/lifted costs."""

    Q: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Qbar: np.ndarray
    Q0: np.ndarray
    N: int
    layout: LiftedLayout = field(default=OFFSET_LAYOUT)

    @cached_property
    def _C_factor(self):
        return _factor(self.C)


def assemble(b: MeasurementBundle, with_offset: bool = True) -> StackedProblem:
    """Accumulate ``Q = sum A_k^T W_k A_k``, marginalize ``(t, D)`` and lift.

    Raises:
        SingularMarginalization: the ``(t, D)`` block is ill-conditioned, or
            the elimination removes all information on ``r_p`` or ``r_s``
            (a stationary or constant-velocity observed robot).
    """
    layout = layout_for(with_offset)
    rows = residual_rows(b, with_offset)
    WA = np.einsum("nij,njk->nik", b.W, rows)
    Q = np.einsum("nij,nik->jk", rows, WA)
    Q = 0.5 * (Q + Q.T)

    m = layout.kept
    A, B, C = Q[:m, :m], Q[:m, m:], Q[m:, m:]
    fac = _factor(C)
    Qbar = A - B @ cho_solve(fac, B.T)
    Qbar = 0.5 * (Qbar + Qbar.T)

    # a block wiped out by the elimination carries no information: the
    # observed robot is stationary (r_p) or moves at constant velocity (r_s)
    for name in ("rs", "rp"):
        blk = getattr(layout, name)
        if blk is None:
            continue
        before = np.linalg.norm(A[blk, blk])
        after = np.linalg.norm(Qbar[blk, blk])
        if before == 0.0 or after <= BLOCK_TOL * before:
            raise SingularMarginalization(
                f"reduced cost has no {name} information "
                "(observed robot motion does not excite the problem)"
            )

    Q0 = np.zeros((layout.dim, layout.dim))
    Q0[:m, :m] = Qbar
    problem = StackedProblem(Q, A, B, C, Qbar, Q0, b.N, layout)
    problem.__dict__["_C_factor"] = fac
    return problem


def recover_marginalized(problem: StackedProblem, x_kept) -> tuple[np.ndarray, np.ndarray]:
    """Back-substitute the eliminated variables: ``w = -C^{-1} B^T x~``.

    Returns the relative translation and the per-bearing distances.
    """
    x_kept = np.asarray(x_kept, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x_kept)):
        raise ValueError("x~ must be finite")
    w = -cho_solve(problem._C_factor, problem.B.T @ x_kept)
    return w[:3], w[3:]


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """``z^T matrix z = rhs``; the matrix is symmetrized on construction."""

    matrix: np.ndarray
    rhs: float
    label: str

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "rhs", float(self.rhs))

    def residual(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.matrix @ z - self.rhs)


_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


def scaled_rotation_constraints(start: int, scale: int, dim: int, tag: str) -> list[QuadraticConstraint]:
    """The 21 quadratic constraints making ``mat(z[start:start+9])`` equal ``n R``.

    ``n = z[scale]``; ``R`` in SO(3). Six column-orthonormality, six
    row-orthonormality and nine cross-product constraints, all with zero
    right-hand side.
    """

    def idx(row, col):
        return start + 3 * col + row

    out = []
    for i in range(3):
        for j in range(i, 3):
            M = np.zeros((dim, dim))
            for r in range(3):
                M[idx(r, i), idx(r, j)] += 1.0
            if i == j:
                M[scale, scale] -= 1.0
            out.append(QuadraticConstraint(M, 0.0, f"col_orth[{tag}]({i},{j})"))
    for i in range(3):
        for j in range(i, 3):
            M = np.zeros((dim, dim))
            for c in range(3):
                M[idx(i, c), idx(j, c)] += 1.0
            if i == j:
                M[scale, scale] -= 1.0
            out.append(QuadraticConstraint(M, 0.0, f"row_orth[{tag}]({i},{j})"))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for comp in range(3):
            # (c_i x c_j)[comp] = sum_{a,b} eps[comp, a, b] c_i[a] c_j[b]
            M = np.zeros((dim, dim))
            for a in range(3):
                for b in range(3):
                    M[idx(a, i), idx(b, j)] += _LEVI[comp, a, b]
            M[idx(comp, k), scale] -= 1.0
            out.append(QuadraticConstraint(M, 0.0, f"cross[{tag}]({i},{j},{k})[{comp}]"))
    return out


def build_constraints(with_offset: bool = True, offset_family: bool = True) -> list[QuadraticConstraint]:
    """Constraint set on the lifted vector.

    With offset (dim 20): 21 on ``r_p`` scaled by ``y``, 21 on ``r_s`` scaled
    by ``dtau`` (omitted when ``offset_family`` is False), ``y^2 = 1`` and nine
    links ``dtau * r_p - y * r_s = 0``; 52 in total. Without offset (dim 10):
    the 21 on ``r_p`` plus ``y^2 = 1``.
    """
    L = layout_for(with_offset)
    cons = scaled_rotation_constraints(L.rp.start, L.y, L.dim, "y")
    if with_offset and offset_family:
        cons += scaled_rotation_constraints(L.rs.start, L.dtau, L.dim, "dtau")
    H = np.zeros((L.dim, L.dim))
    H[L.y, L.y] = 1.0
    cons.append(QuadraticConstraint(H, 1.0, "homog"))
    if with_offset:
        for l in range(9):
            M = np.zeros((L.dim, L.dim))
            M[L.dtau, L.rp.start + l] = 1.0
            M[L.y, L.rs.start + l] = -1.0
            cons.append(QuadraticConstraint(M, 0.0, f"link[{l}]"))
    return cons


def constraint_residuals(constraints: Sequence[QuadraticConstraint], z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.array([c.residual(z) for c in constraints])
