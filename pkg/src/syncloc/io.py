"""Plain-text trajectory, bearing and ground-truth files.

Trajectory CSV: header row then ``t,x,y,z,qw,qx,qy,qz[,vx,vy,vz]`` with a
scalar-first unit quaternion. Missing velocities are rebuilt by finite
differences. Bearing CSV: ``t,bx,by,bz``.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ParseError
from .geometry import matrix_to_quat
from .sim import BearingObservation
from .trajectory import Trajectory, finite_difference_velocities

log = logging.getLogger(__name__)

POSE_COLUMNS = ["t", "x", "y", "z", "qw", "qx", "qy", "qz"]
VELOCITY_COLUMNS = ["vx", "vy", "vz"]
BEARING_COLUMNS = ["t", "bx", "by", "bz"]
UNIT_WARN_TOL = 1e-6


def _fmt(v) -> str:
    return repr(float(v))


def _read_rows(path, expected: list[list[str]]):
    """Yield ``(line_number, floats)`` after validating the header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty file, header row required") from None
        if header not in expected:
            raise ParseError(path, 1, f"unexpected header {','.join(header)!r}")
        width = len(header)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(path, line, f"expected {width} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(path, line, f"non-numeric field ({exc})") from None
            if not all(np.isfinite(vals)):
                raise ParseError(path, line, "non-finite value")
            rows.append((line, vals))
    return header, rows


def write_trajectory(path, traj: Trajectory, velocities: bool = True) -> None:
    cols = POSE_COLUMNS + (VELOCITY_COLUMNS if velocities else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(len(traj)):
            row = [traj.timestamps[k], *traj.translations[k], *matrix_to_quat(traj.rotations[k])]
            if velocities:
                row += list(traj.velocities[k])
            w.writerow([_fmt(v) for v in row])


def load_trajectory(path) -> Trajectory:
    """Parse a trajectory CSV.

    Raises:
        ParseError: with the offending line for malformed rows, zero
            quaternions or non-increasing timestamps.
    """
    header, rows = _read_rows(path, [POSE_COLUMNS, POSE_COLUMNS + VELOCITY_COLUMNS])
    if len(rows) < 2:
        raise ParseError(path, 1 + len(rows), "trajectory needs at least 2 rows")
    data = np.array([r for _, r in rows])
    lines = [ln for ln, _ in rows]
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ParseError(path, lines[bad[0] + 1], "timestamps must be strictly increasing")
    q = data[:, 4:8]
    qn = np.linalg.norm(q, axis=1)
    if np.any(qn < 1e-12):
        raise ParseError(path, lines[int(np.argmin(qn))], "zero quaternion")
    R = Rotation.from_quat(q[:, [1, 2, 3, 0]] / qn[:, None]).as_matrix()
    if len(header) == len(POSE_COLUMNS):
        if len(rows) < 3:
            raise ParseError(path, lines[-1], "need 3 rows to derive velocities")
        traj = Trajectory(t, R, data[:, 1:4], np.zeros((len(t), 3)))
        return finite_difference_velocities(traj)
    return Trajectory(t, R, data[:, 1:4], data[:, 8:11])


def write_bearings(path, bearings) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BEARING_COLUMNS)
        for b in bearings:
            w.writerow([_fmt(b.timestamp), *(_fmt(v) for v in b.direction)])


def load_bearings(path) -> list[BearingObservation]:
    """Parse a bearing CSV, renormalizing each direction.

    Directions off unit length by more than 1e-6 are accepted with a logged
    warning.
    """
    _, rows = _read_rows(path, [BEARING_COLUMNS])
    out = []
    for line, (t, *b) in rows:
        b = np.array(b)
        norm = np.linalg.norm(b)
        if norm < 1e-12:
            raise ParseError(path, line, "zero bearing direction")
        if abs(norm - 1.0) > UNIT_WARN_TOL:
            log.warning("%s:%d: bearing norm %.8f renormalized", path, line, norm)
        out.append(BearingObservation(t, b / norm))
    return out


def write_truth(path, rotation, translation, offset: float, **extra) -> None:
    doc = {
        "rotation_matrix": np.asarray(rotation).tolist(),
        "rotation_quaternion_wxyz": matrix_to_quat(rotation).tolist(),
        "translation": np.asarray(translation).tolist(),
        "offset": float(offset),
        **extra,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_truth(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["rotation_matrix"] = np.array(doc["rotation_matrix"], dtype=float)
    doc["translation"] = np.array(doc["translation"], dtype=float)
    return doc
