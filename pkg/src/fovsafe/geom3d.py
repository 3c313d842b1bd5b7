"""Rotation and projection primitives shared by the barrier and dynamics code.

Vectors are plain numpy arrays of shape (3,).  Rotation matrices are (3, 3)
arrays whose columns are the body axes expressed in the world frame, so a
body-frame direction e maps to the world frame as R @ e.
"""
from __future__ import annotations

import math

import numpy as np

UNIT_TOL = 1e-9
ROTATION_TOL = 1e-9
COINCIDENT_TOL = 1e-9

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


class NonUnitVector(ValueError):
    """Raised when a direction argument is not normalized."""


class CoincidentPoints(ValueError):
    """Raised when two points coincide and no bearing between them exists."""


def hat(v):
    """Skew-symmetric matrix of v, so that hat(v) @ w == cross3(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a, b):
    """Cross product of two 3-vectors.

    np.cross pays dispatch overhead that dominates tight control loops; the
    component formula is an order of magnitude faster for scalar triples.
    """
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def vee(m):
    """Inverse of hat for a skew-symmetric matrix."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def projector(v):
    """Orthogonal projector I - v v^T onto the plane normal to unit vector v."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > UNIT_TOL:
        raise NonUnitVector(f"expected a unit vector, got norm {n:.3e}")
    return np.eye(3) - np.outer(v, v)


def normalize(v):
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < COINCIDENT_TOL:
        raise NonUnitVector("cannot normalize a near-zero vector")
    return v / n


def bearing_distance(p, q):
    """Unit bearing from p toward q and the separating distance.

    Raises CoincidentPoints when the two points are closer than 1e-9, where
    no bearing is defined.
    """
    diff = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    d = float(np.linalg.norm(diff))
    if d < COINCIDENT_TOL:
        raise CoincidentPoints("bearing undefined for coincident points")
    return diff / d, d


def so3_exp(omega):
    """Rodrigues rotation exp(hat(omega)), with a series branch near zero."""
    omega = np.asarray(omega, dtype=float)
    t2 = float(omega @ omega)
    t = math.sqrt(t2)
    w = hat(omega)
    if t < 1e-8:
        # sin(t)/t and (1 - cos t)/t^2 truncated well below double roundoff
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    return np.eye(3) + a * w + b * (w @ w)


def orthonormalize(rot):
    """One Newton step toward the polar factor; removes accumulated drift.

    For rot = Q (I + E) with small symmetric E this returns Q (I + O(E^2)),
    which is enough to hold the orthonormality defect near roundoff when
    applied once per integration step.
    """
    return rot @ (1.5 * np.eye(3) - 0.5 * (rot.T @ rot))


def rotation_defect(rot):
    """Frobenius orthonormality defect plus determinant defect of rot."""
    rot = np.asarray(rot, dtype=float)
    ortho = float(np.linalg.norm(rot.T @ rot - np.eye(3)))
    det = abs(float(np.linalg.det(rot)) - 1.0)
    return max(ortho, det)


def is_rotation(rot, tol=ROTATION_TOL):
    return rotation_defect(rot) <= tol


def rotation_to_quat(rot):
    """Unit quaternion (w, x, y, z) of a rotation matrix, scalar part >= 0."""
    m = np.asarray(rot, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def _frame(u, up):
    """Deterministic right-handed frame [u, n1, n2] with n1 normal to up."""
    n1 = np.cross(up, u)
    n = float(np.linalg.norm(n1))
    if n < 1e-9:
        # u parallel to up: fall back to a fixed secondary direction
        n1 = np.cross(E1, u)
        n = float(np.linalg.norm(n1))
        if n < 1e-9:
            n1 = np.cross(E2, u)
            n = float(np.linalg.norm(n1))
    n1 = n1 / n
    n2 = np.cross(u, n1)
    return np.column_stack([u, n1, n2])


def aim_rotation(direction, axis, up=E3):
    """Rotation mapping body direction `axis` onto world `direction`.

    The free roll degree of freedom is fixed deterministically: for axis E1
    and a non-vertical direction the result keeps the body y axis level.
    """
    u = normalize(direction)
    a = normalize(axis)
    return _frame(u, up) @ _frame(a, up).T
