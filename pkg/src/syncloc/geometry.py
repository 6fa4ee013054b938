"""Rotation and vector helpers.

Conventions used throughout the package:

* ``vec(M)`` stacks the columns of ``M`` (column-major / Fortran order), so
  ``vec(R @ x) == kron(x, I3) @ vec(R)``.
* Rotations are plain ``(3, 3)`` float arrays; :func:`as_rotation` is the
  single validation point.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateMatrix, InvalidRotation

ROTATION_TOL = 1e-9

J3 = np.ones((3, 3))
j3 = np.ones(3)
I3 = np.eye(3)


def E(i: int, j: int, shape: tuple[int, int] = (3, 3)) -> np.ndarray:
    """Coordinate matrix with a single one at ``(i, j)`` (0-based)."""
    m = np.zeros(shape)
    m[i, j] = 1.0
    return m


def e(k: int, n: int = 3) -> np.ndarray:
    """``k``-th coordinate vector of length ``n`` (0-based)."""
    v = np.zeros(n)
    v[k] = 1.0
    return v


def vec(M: np.ndarray) -> np.ndarray:
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(r: np.ndarray) -> np.ndarray:
    return np.asarray(r, dtype=float).reshape(3, 3, order="F")


def as_rotation(M, tol: float = ROTATION_TOL) -> np.ndarray:
    """Return ``M`` as a float array after checking it lies on SO(3).

    Raises:
        InvalidRotation: if ``M`` is not 3x3, not orthonormal within ``tol``
            or has determinant other than +1.
    """
    R = np.asarray(M, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidRotation(f"expected a finite 3x3 matrix, got shape {R.shape}")
    err = np.max(np.abs(R.T @ R - I3))
    if err > tol:
        raise InvalidRotation(f"columns not orthonormal (max error {err:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise InvalidRotation(f"determinant {det:.12f} != +1")
    return R


def is_rotation(M, tol: float = ROTATION_TOL) -> bool:
    try:
        as_rotation(M, tol)
    except InvalidRotation:
        return False
    return True


def kron_row(x) -> np.ndarray:
    """3x9 matrix ``K`` with ``K @ vec(R) == R @ x`` for any 3x3 ``R``."""
    x = np.asarray(x, dtype=float).reshape(3)
    return np.kron(x[None, :], I3)


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def project_to_rotation(M) -> np.ndarray:
    """Nearest rotation to ``M`` in Frobenius norm.

    Uses the SVD ``M = U S V^T`` and flips the direction of the smallest
    singular value when ``det(U V^T) < 0``. The result is invariant to
    positive scaling of ``M``.

    Raises:
        DegenerateMatrix: if the smallest singular value is below 1e-12.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise DegenerateMatrix(f"expected a finite 3x3 matrix, got shape {M.shape}")
    U, s, Vt = np.linalg.svd(M)
    if s[-1] < 1e-12:
        raise DegenerateMatrix(f"smallest singular value {s[-1]:.3e} below 1e-12")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def geodesic_deg(Ra, Rb) -> float:
    """Angle of ``Ra^T Rb`` in degrees, in [0, 180]."""
    Ra = np.asarray(Ra, dtype=float)
    Rb = np.asarray(Rb, dtype=float)
    # arctan2 form is accurate near 0 and 180 where arccos of the trace is not
    D = Ra.T @ Rb
    w = np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    c = (np.trace(D) - 1.0) / 2.0
    s = np.linalg.norm(w) / 2.0
    return float(np.degrees(np.arctan2(s, c)))


def exp_so3(w) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def log_so3(R) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (QR of a Gaussian matrix, sign fixed)."""
    A = rng.standard_normal((3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q @ np.diag(np.sign(np.diag(R)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def quat_to_matrix(qw, qx, qy, qz) -> np.ndarray:
    """Scalar-first unit quaternion to rotation matrix."""
    return Rotation.from_quat([qx, qy, qz, qw]).as_matrix()


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to scalar-first quaternion ``(qw, qx, qy, qz)`` with qw >= 0."""
    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    return -q if w < 0 else q
