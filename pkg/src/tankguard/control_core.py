"""Cartesian variable-impedance control for a planar point end-effector.

The RL action supplies a displacement ``dp`` and two stiffness values: ``k1``
along the motion direction and ``k2`` orthogonal to it. These functions map
that action to world-frame stiffness and damping and compute the resulting
commanded force. The arm Jacobian is the identity in this planar model.

Matrices are plain ``(2, 2)`` float arrays; vectors are ``(2,)`` arrays.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import njit

K_MIN = 300.0
K_MAX = 1000.0
MIN_MOTION = 1e-6  # below this |dp| the previous stiffness frame is kept

# Table-I constants with no effect in the planar model; kept for completeness.
K_Z = 750.0
K_ROT = (100.0, 100.0, 0.0)
K_COUPLING = 0.0


@njit
def motion_frame(dx, dy, prev_c, prev_s):
    """Unit direction (cos, sin) of the motion ``(dx, dy)``."""
    n = math.sqrt(dx * dx + dy * dy)
    if n < MIN_MOTION:
        return prev_c, prev_s
    return dx / n, dy / n


@njit
def stiffness_world(k1, k2, c, s):
    """Entries (kxx, kxy, kyy) of R diag(k1, k2) R^T with R = [[c, -s], [s, c]]."""
    kxx = k1 * c * c + k2 * s * s
    kxy = (k1 - k2) * c * s
    kyy = k1 * s * s + k2 * c * c
    return kxx, kxy, kyy


@njit
def damping_world(kxx, kxy, kyy, mass, zeta):
    """Damping 2*zeta*sqrt(mass*K) via the closed-form 2x2 SPD square root."""
    sdet = math.sqrt(kxx * kyy - kxy * kxy)
    t = math.sqrt(kxx + kyy + 2.0 * sdet)
    g = 2.0 * zeta * math.sqrt(mass) / t
    return g * (kxx + sdet), g * kxy, g * (kyy + sdet)


@njit
def spring_energy(kxx, kxy, kyy, dx, dy):
    return 0.5 * (kxx * dx * dx + 2.0 * kxy * dx * dy + kyy * dy * dy)


def _as_vec(x, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (2,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a finite 2-vector, got {x!r}")
    return v


def _as_spd(k, name="stiffness"):
    k = np.asarray(k, dtype=float)
    if k.shape != (2, 2) or not np.all(np.isfinite(k)):
        raise ValueError(f"{name} must be a finite 2x2 matrix")
    if abs(k[0, 1] - k[1, 0]) > 1e-9 * max(1.0, np.abs(k).max()):
        raise ValueError(f"{name} is not symmetric")
    if k[0, 0] <= 0 or k[0, 0] * k[1, 1] - k[0, 1] * k[1, 0] <= 0:
        raise ValueError(f"{name} is not positive definite")
    return k


def map_action_stiffness(k1, k2, dp, prev_frame=(1.0, 0.0)):
    """World-frame stiffness with ``k1`` along ``dp`` and ``k2`` across it.

    When ``|dp|`` is below 1 um the motion direction is undefined and
    ``prev_frame`` (a unit (cos, sin) pair, +x by default) is used instead.
    """
    dx, dy = _as_vec(dp, "dp")
    for name, k in (("k1", k1), ("k2", k2)):
        if not (math.isfinite(k) and K_MIN <= k <= K_MAX):
            raise ValueError(f"{name}={k} outside [{K_MIN}, {K_MAX}] N/m")
    c, s = motion_frame(dx, dy, float(prev_frame[0]), float(prev_frame[1]))
    kxx, kxy, kyy = stiffness_world(float(k1), float(k2), c, s)
    return np.array([[kxx, kxy], [kxy, kyy]])


def elastic_wrench(k, delta_p):
    """Spring force ``K @ delta_p`` pulling the end-effector toward equilibrium."""
    return np.asarray(k, dtype=float) @ _as_vec(delta_p, "delta_p")


def damping_from_stiffness(k, mass=1.0, zeta=1.0):
    """Damping matrix with the eigenvectors of ``k`` and eigenvalues 2*zeta*sqrt(mass*k_i)."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    k = _as_spd(k)
    dxx, dxy, dyy = damping_world(k[0, 0], 0.5 * (k[0, 1] + k[1, 0]), k[1, 1], float(mass), float(zeta))
    return np.array([[dxx, dxy], [dxy, dyy]])


def impedance_force(k, d, delta_p, vel, alpha=1.0):
    """Commanded force ``alpha * (K delta_p - D v)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    f = np.asarray(k, dtype=float) @ _as_vec(delta_p, "delta_p") - np.asarray(d, dtype=float) @ _as_vec(vel, "vel")
    return alpha * f
