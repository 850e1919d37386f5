"""The target sphere S^3 embedded in R^4.

Points and vectors are arrays with the four ambient components on axis 0.
"""

import numpy as np


def project(u, eps=1e-300):
    """Nearest point on the unit sphere."""
    return u / np.maximum(np.sqrt(np.sum(u * u, axis=0)), eps)


def tangential(u, v):
    """Orthogonal projection of ``v`` onto ``T_u S^3``."""
    return v - np.sum(u * v, axis=0) * u


def second_fundamental_form(u, X, Y):
    """``S(X, Y) = -<X, Y> u``; the sphere's shape operator is minus the identity."""
    return -np.sum(X * Y, axis=0) * u


def riemann(u, X, Y, Z):
    """Curvature ``R(X, Y) Z = <Y, Z> X - <X, Z> Y`` of the round sphere.

    ``u`` is accepted for symmetry with other target maps and is not needed
    since the curvature is constant.
    """
    return np.sum(Y * Z, axis=0) * X - np.sum(X * Z, axis=0) * Y


def quaternion_multiply(p, q):
    """Hamilton product of quaternions stored as ``(w, x, y, z)`` on axis 0."""
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.stack([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def global_frame(u):
    """Left-invariant orthonormal frame ``(u i, u j, u k)`` at ``u``.

    Returns an array of shape ``(3, 4, *u.shape[1:])``.  The map is smooth on all
    of S^3 and each vector is linear in ``u``, so
    ``|e_a(u) - e_a(u')| = |u - u'|``.
    """
    a, b, c, d = u
    return np.stack([
        np.stack([-b, a, d, -c]),
        np.stack([-c, -d, a, b]),
        np.stack([-d, c, -b, a]),
    ])
