"""Laplace fundamental-solution kernels in 3D and their cut-off variants.

``Phi(y) = 1 / (4 pi |y|)``. The public functions accept a single vector or a
stack of vectors with trailing dimension 3. The ``_nb_*`` helpers are the
scalar forms inlined into the compiled summation loops.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

INV_4PI = 1.0 / (4.0 * math.pi)


def _vec(y) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != 3:
        raise ValueError("kernel arguments must have trailing dimension 3")
    return y, np.linalg.norm(y, axis=-1)


def _check_width(w: float) -> float:
    w = float(w)
    if not w > 0.0:
        raise ValueError(f"smoothing width must be positive, got {w}")
    return w


def grad_phi(y) -> np.ndarray:
    """``-y / (4 pi |y|^3)``. Raises on ``|y| = 0``."""
    y, r = _vec(y)
    if np.any(r == 0.0):
        raise ValueError("singular evaluation")
    return -y * (INV_4PI / r**3)[..., None]


def hess_phi(y) -> np.ndarray:
    """Hessian of Phi: ``-I / (4 pi |y|^3) + 3 y y^T / (4 pi |y|^5)``."""
    y, r = _vec(y)
    if np.any(r == 0.0):
        raise ValueError("singular evaluation")
    r3 = (INV_4PI / r**3)[..., None, None]
    r5 = (3.0 * INV_4PI / r**5)[..., None, None]
    return -np.eye(3) * r3 + r5 * (y[..., :, None] * y[..., None, :])


def grad_phi_smoothed(y, w: float) -> np.ndarray:
    """``grad_phi`` with every evaluation strictly inside radius ``w`` set to zero."""
    w = _check_width(w)
    y, r = _vec(y)
    live = r >= w
    out = np.zeros_like(y)
    if y.ndim == 1:
        return grad_phi(y) if live else out
    out[live] = grad_phi(y[live])
    return out


def hess_phi_smoothed(y, w: float) -> np.ndarray:
    w = _check_width(w)
    y, r = _vec(y)
    live = r >= w
    out = np.zeros(y.shape + (3,))
    if y.ndim == 1:
        return hess_phi(y) if live else out
    out[live] = hess_phi(y[live])
    return out


# Scalar forms for compiled loops. ``d = x_query - x_source``; each returns the
# contribution of a single source and assumes the caller applied the cutoff.


@njit(inline="always", fastmath=False, cache=True)
def _nb_grad_dot(dx, dy, dz, r, vx, vy, vz):
    # grad_phi(d) . v
    return -(dx * vx + dy * vy + dz * vz) * INV_4PI / (r * r * r)


@njit(inline="always", fastmath=False, cache=True)
def _nb_neg_hess_dot(dx, dy, dz, r, vx, vy, vz):
    # -H(d) v = (v / r^3 - 3 d (d.v) / r^5) / (4 pi)
    inv_r2 = 1.0 / (r * r)
    k3 = INV_4PI * inv_r2 / r
    t = 3.0 * (dx * vx + dy * vy + dz * vz) * inv_r2
    return k3 * (vx - t * dx), k3 * (vy - t * dy), k3 * (vz - t * dz)
