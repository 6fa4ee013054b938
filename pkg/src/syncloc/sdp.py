"""Small dense semidefinite programs in standard form.

Primal::

    minimize <C, X>  subject to  <A_i, X> = b_i,  X PSD

Dual::

    maximize b^T y  subject to  C - sum_i y_i A_i = S,  S PSD

:func:`solve` is an infeasible-start primal-dual path-following method with the
HKM search direction and a Mehrotra predictor-corrector step. Linearly
dependent constraints are removed before iterating (after checking that their
right-hand sides agree); the returned ``Z`` still satisfies all of them.

Any callable with the signature of :func:`solve` that returns an
:class:`SdpSolution` can stand in for it (see :data:`Backend`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr

from .errors import Infeasible, ZeroSolution

STEP_FRACTION = 0.98
TIGHTNESS_THRESHOLD = 1e-5


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class SdpProblem:
    cost: np.ndarray
    matrices: Sequence[np.ndarray]
    rhs: Sequence[float]

    def __post_init__(self):
        C = np.asarray(self.cost, dtype=float)
        A = np.asarray(self.matrices, dtype=float)
        b = np.asarray(self.rhs, dtype=float).reshape(-1)
        n = C.shape[0]
        if C.shape != (n, n) or A.ndim != 3 or A.shape[1:] != (n, n):
            raise ValueError("cost and constraint matrices must be square of equal size")
        if len(A) < 1 or len(A) != len(b):
            raise ValueError("need at least one constraint and one rhs per matrix")
        tol = 1e-12 * max(1.0, np.abs(C).max())
        if np.abs(C - C.T).max() > tol or np.abs(A - A.transpose(0, 2, 1)).max() > 1e-12 * max(1.0, np.abs(A).max()):
            raise ValueError("cost and constraint matrices must be symmetric")
        object.__setattr__(self, "cost", 0.5 * (C + C.T))
        object.__setattr__(self, "matrices", 0.5 * (A + A.transpose(0, 2, 1)))
        object.__setattr__(self, "rhs", b)

    @classmethod
    def from_constraints(cls, cost, constraints) -> "SdpProblem":
        """Build from objects with ``matrix`` and ``rhs`` attributes."""
        return cls(cost, [c.matrix for c in constraints], [c.rhs for c in constraints])

    @property
    def dim(self) -> int:
        return self.cost.shape[0]

    def residuals(self, X) -> np.ndarray:
        return np.einsum("mij,ij->m", self.matrices, X) - self.rhs

    def dump(self, path) -> None:
        """Write the problem as plain text for cross-checking with other solvers.

        Layout: a header line ``n m``, the cost matrix (n rows), then for each
        constraint a line ``rhs`` followed by its n x n matrix. Rows are
        whitespace-separated, row-major.
        """
        n, m = self.dim, len(self.rhs)
        lines = [f"{n} {m}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.cost]
        for M, g in zip(self.matrices, self.rhs):
            lines.append(repr(float(g)))
            lines += [" ".join(repr(float(v)) for v in row) for row in M]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SdpProblem":
        tokens = Path(path).read_text().split()
        n, m = int(tokens[0]), int(tokens[1])
        vals = np.array(tokens[2:], dtype=float)
        C = vals[: n * n].reshape(n, n)
        rest = vals[n * n :].reshape(m, 1 + n * n)
        return cls(C, rest[:, 1:].reshape(m, n, n), rest[:, 0])


@dataclass(frozen=True, eq=False)
class SdpSolution:
    Z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    iterations: int
    eigenvalues: np.ndarray
    status: Status
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    multipliers: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


Backend = Callable[..., SdpSolution]


def _independent_rows(A: np.ndarray, b: np.ndarray, tol: float):
    """Indices of a maximal independent subset of the rows of ``A``.

    Returns ``(keep, inconsistency)`` where ``inconsistency`` is the largest
    mismatch between a dependent row's rhs and the rhs implied by the kept rows.
    """
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d[0], 1.0))) if d.size else 0
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(len(A)), keep)
    if drop.size == 0:
        return keep, 0.0
    coef, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
    mismatch = np.abs(coef.T @ b[keep] - b[drop]).max()
    return keep, float(mismatch)


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest ``a`` with ``L L^T + a D`` PSD, given the Cholesky factor ``L``."""
    Li = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(_sym(Li @ D @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _safe_step(M: np.ndarray, D: np.ndarray, a: float, tries: int = 30) -> float:
    """Shrink ``a`` until ``M + a D`` has a Cholesky factor (rounding guard)."""
    for _ in range(tries):
        try:
            np.linalg.cholesky(_sym(M + a * D))
            return a
        except np.linalg.LinAlgError:
            a *= 0.5
    return 0.0


def solve(
    problem: SdpProblem,
    gap_tol: float = 1e-8,
    feas_tol: float = 1e-8,
    max_iters: int = 100,
) -> SdpSolution:
    """Solve the SDP to a relative duality gap ``gap_tol``.

    ``feas_tol`` bounds the absolute equality residual ``|<A_i, Z> - b_i|`` of
    every original constraint.

    Raises:
        Infeasible: the constraints are inconsistent, or the iterates produce
            a certificate of primal infeasibility.
    """
    n = problem.dim
    A_all = problem.matrices
    b_all = problem.rhs
    flat_all = A_all.reshape(len(b_all), -1)

    keep, mismatch = _independent_rows(flat_all, b_all, 1e-10)
    if mismatch > feas_tol:
        raise Infeasible(f"linearly dependent constraints disagree by {mismatch:.3e}")

    # scale every kept constraint and the cost to unit Frobenius norm
    norms = np.linalg.norm(flat_all[keep], axis=1)
    A = A_all[keep] / norms[:, None, None]
    b = b_all[keep] / norms
    c_norm = np.linalg.norm(problem.cost)
    c_scale = c_norm if c_norm > 0 else 1.0
    C = problem.cost / c_scale
    m = len(b)
    Af = A.reshape(m, -1)

    def opA(X):
        return Af @ X.reshape(-1)

    def opAt(y):
        return (y @ Af).reshape(n, n)

    rho = n * max(1.0, np.max((1.0 + np.abs(b)) / 2.0))
    X = rho * np.eye(n)
    S = (1.0 + max(1.0, np.linalg.norm(C))) / np.sqrt(n) * np.eye(n)
    y = np.zeros(m)

    history = []
    status = Status.MAX_ITERATIONS
    it = 0
    for it in range(max_iters + 1):
        rp = b - opA(X)
        Rd = _sym(C - opAt(y) - S)
        pobj = float(np.sum(C * X))
        dobj = float(b @ y)
        mu = float(np.sum(X * S)) / n
        # gap measured on the caller's scale, as reported in the solution
        rel_gap = c_scale * abs(pobj - dobj) / (1.0 + c_scale * (abs(pobj) + abs(dobj)))
        orig_res = np.abs(problem.residuals(X)).max()
        dinf = np.linalg.norm(Rd) / (1.0 + np.linalg.norm(C))
        history.append(
            dict(
                iteration=it,
                primal_objective=pobj * c_scale,
                dual_objective=dobj * c_scale,
                complementarity=mu * n * c_scale,
                primal_residual=float(orig_res),
                dual_residual=float(dinf),
            )
        )
        if rel_gap <= gap_tol and orig_res <= feas_tol and dinf <= feas_tol:
            status = Status.OPTIMAL
            break
        if dobj > 1e8 * (1.0 + abs(pobj)):
            # Farkas ray: A^T y NSD with b^T y > 0 proves primal infeasibility
            ray = opAt(y) / dobj
            if np.linalg.eigvalsh(_sym(ray))[-1] <= 1e-6:
                raise Infeasible("dual ray certifies primal infeasibility", _pack(
                    problem, X, y, S, keep, norms, c_scale, pobj, dobj, it, Status.INFEASIBLE, history,
                ))
        if it == max_iters:
            break

        Lx = np.linalg.cholesky(X)
        Ls = np.linalg.cholesky(S)
        Sinv = np.linalg.inv(S)
        Sinv = _sym(Sinv)
        # Schur complement M_ij = <A_i, X A_j S^{-1}>
        G = (X @ A @ Sinv).reshape(m, -1)
        M = _sym(Af @ G.T)
        try:
            Mf = np.linalg.cholesky(M)
            solveM = lambda r: np.linalg.solve(Mf.T, np.linalg.solve(Mf, r))  # noqa: E731
        except np.linalg.LinAlgError:
            solveM = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731
        XRdS = X @ Rd @ Sinv

        def direction(Rc):
            dy = solveM(rp - opA(Rc) + opA(XRdS))
            dS = _sym(Rd - opAt(dy))
            dX = _sym(Rc - X @ dS @ Sinv)
            return dX, dy, dS

        dXa, dya, dSa = direction(-X)
        ap = min(1.0, _max_step(Lx, dXa))
        ad = min(1.0, _max_step(Ls, dSa))
        mu_aff = float(np.sum((X + ap * dXa) * (S + ad * dSa))) / n
        sigma = min(1.0, max(0.0, mu_aff / mu) ** 3)
        Rc = sigma * mu * Sinv - X - dXa @ dSa @ Sinv
        dX, dy, dS = direction(Rc)
        ap = _safe_step(X, dX, min(1.0, STEP_FRACTION * _max_step(Lx, dX)))
        ad = _safe_step(S, dS, min(1.0, STEP_FRACTION * _max_step(Ls, dS)))
        if ap == 0.0 and ad == 0.0:
            # no progress possible in floating point; keep the current iterate
            break
        X = _sym(X + ap * dX)
        y = y + ad * dy
        S = _sym(S + ad * dS)

    return _pack(problem, X, y, S, keep, norms, c_scale, pobj, dobj, it, status, history)


def _pack(problem, X, y, S, keep, norms, c_scale, pobj, dobj, it, status, history):
    Z = _sym(X)
    eig = np.linalg.eigvalsh(Z)[::-1]
    full_y = np.zeros(len(problem.rhs))
    full_y[keep] = y * c_scale / norms
    p = float(np.sum(problem.cost * Z))
    d = float(dobj * c_scale)
    return SdpSolution(
        Z=Z,
        primal_objective=p,
        dual_objective=d,
        gap=abs(p - d) / (1.0 + abs(p) + abs(d)),
        iterations=it,
        eigenvalues=eig,
        status=status,
        primal_residual=float(np.abs(problem.residuals(Z)).max()),
        dual_residual=history[-1]["dual_residual"] if history else np.nan,
        multipliers=full_y,
        history=history,
    )


def tightness(solution: SdpSolution) -> float:
    """Rank ratio ``lambda_2 / lambda_1`` of the solution matrix, in [0, 1]."""
    lam = np.clip(np.sort(np.asarray(solution.eigenvalues))[::-1], 0.0, None)
    if lam[0] <= 0:
        return 1.0
    return float(min(1.0, lam[1] / lam[0])) if len(lam) > 1 else 0.0


def extract_rank1(solution: SdpSolution, y_index: int | None = None) -> np.ndarray:
    """Scaled top eigenvector ``sqrt(lambda_1) u_1`` of ``Z``.

    The sign is chosen so that ``z[y_index]`` is positive (default: the
    second-to-last entry, the homogenizing variable of the offset layout).

    Raises:
        ZeroSolution: if ``lambda_1 < 1e-12``.
    """
    Z = np.asarray(solution.Z, dtype=float)
    w, V = np.linalg.eigh(_sym(Z))
    if w[-1] < 1e-12:
        raise ZeroSolution(f"largest eigenvalue {w[-1]:.3e} below 1e-12")
    z = np.sqrt(w[-1]) * V[:, -1]
    k = Z.shape[0] - 2 if y_index is None else y_index
    return -z if z[k] < 0 else z
