"""The linear maps A, A^T and G over a point cloud.

``A`` evaluates the discretized winding-number field at the cloud points,
``A^T`` is its adjoint and ``G`` returns the negative field gradient at the
points. Each has a dense O(N^2) path, used as the reference, and a treecode
path backed by :mod:`wnnc.octree`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .geometry import CloudError, PointCloud
from .kernels import INV_4PI, _nb_grad_dot, _nb_neg_hess_dot
from .octree import KIND_A, KIND_AT, KIND_G, compute_representatives, traverse_many

# effectively disables the far-field approximation
C_EXACT = math.inf


@dataclass(frozen=True)
class OperatorBackend:
    """``mode`` is ``"dense"`` or ``"treecode"``.

    ``c`` (opening constant), ``depth`` (maximum tree depth) and ``order``
    (far-field expansion order, 0 or 1) only affect the treecode.
    """

    mode: str = "treecode"
    c: float = 2.0
    depth: int = 15
    order: int = 1

    def __post_init__(self):
        if self.mode not in ("dense", "treecode"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if not self.c > 0:
            raise ValueError("opening constant c must be positive")
        if self.depth < 1:
            raise ValueError("tree depth must be >= 1")
        if self.order not in (0, 1):
            raise ValueError("expansion order must be 0 or 1")


DENSE = OperatorBackend("dense")
TREECODE = OperatorBackend("treecode")


@njit(inline="always", cache=True)
def _two_sum(acc, comp, x):
    # Neumaier step: returns the new sum and the running compensation
    t = acc + x
    if abs(acc) >= abs(x):
        comp += (acc - t) + x
    else:
        comp += (x - t) + acc
    return t, comp


@njit(parallel=True, fastmath=False, cache=True)
def _dense(kind, queries, src, attr, w, out):
    nq = queries.shape[0]
    ns = src.shape[0]
    for i in prange(nq):
        qx, qy, qz = queries[i, 0], queries[i, 1], queries[i, 2]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for j in range(ns):
            dx = qx - src[j, 0]
            dy = qy - src[j, 1]
            dz = qz - src[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r < w:
                continue
            if kind == KIND_A:
                a0, c0 = _two_sum(a0, c0, _nb_grad_dot(dx, dy, dz, r, attr[j, 0], attr[j, 1], attr[j, 2]))
            elif kind == KIND_AT:
                f = attr[j, 0] * INV_4PI / (r * r * r)
                a0, c0 = _two_sum(a0, c0, f * dx)
                a1, c1 = _two_sum(a1, c1, f * dy)
                a2, c2 = _two_sum(a2, c2, f * dz)
            else:
                gx, gy, gz = _nb_neg_hess_dot(dx, dy, dz, r, attr[j, 0], attr[j, 1], attr[j, 2])
                a0, c0 = _two_sum(a0, c0, gx)
                a1, c1 = _two_sum(a1, c1, gy)
                a2, c2 = _two_sum(a2, c2, gz)
        out[i, 0] = a0 + c0
        out[i, 1] = a1 + c1
        out[i, 2] = a2 + c2


def _check(field, cloud: PointCloud, vector: bool) -> np.ndarray:
    arr = np.asarray(field, dtype=np.float64)
    n = len(cloud)
    want = (n, 3) if vector else (n,)
    if arr.shape != want:
        raise CloudError(f"field has shape {arr.shape}, expected {want}")
    return arr


def _check_width(w):
    if not w > 0:
        raise ValueError(f"smoothing width must be positive, got {w}")
    return float(w)


def _apply(kind, queries, attr, cloud, w, backend, visit=None):
    w = _check_width(w)
    if backend.mode == "dense":
        out = np.empty((len(queries), 3))
        _dense(kind, np.ascontiguousarray(queries), cloud.positions,
               np.ascontiguousarray(attr.reshape(len(cloud), -1)), w, out)
        return out[:, 0].copy() if kind == KIND_A else out
    tree = cloud.octree(backend.depth)
    reps = compute_representatives(tree, attr)
    name = {KIND_A: "A", KIND_AT: "AT", KIND_G: "G"}[kind]
    return traverse_many(queries, tree, reps, backend.c, w, name, order=backend.order, visit=visit)


def _self_order(cloud, backend):
    # visit queries in tree order so neighbouring queries share cache lines
    return cloud.octree(backend.depth).perm if backend.mode == "treecode" else None


def apply_A(mu, cloud: PointCloud, w: float, backend: OperatorBackend = TREECODE) -> np.ndarray:
    """``s_i = sum_j grad_phi(x_i - x_j) . mu_j`` with pairs closer than ``w`` dropped."""
    mu = _check(mu, cloud, vector=True)
    return _apply(KIND_A, cloud.positions, mu, cloud, w, backend, _self_order(cloud, backend))


def apply_AT(s, cloud: PointCloud, w: float, backend: OperatorBackend = TREECODE) -> np.ndarray:
    """``(A^T s)_j = sum_i s_i grad_phi(x_i - x_j)``."""
    s = _check(s, cloud, vector=False)
    return _apply(KIND_AT, cloud.positions, s, cloud, w, backend, _self_order(cloud, backend))


def apply_G(mu, cloud: PointCloud, w: float, backend: OperatorBackend = TREECODE) -> np.ndarray:
    """``G(mu)_i = -sum_j H(x_i - x_j) mu_j``, the negative field gradient at each point."""
    mu = _check(mu, cloud, vector=True)
    return _apply(KIND_G, cloud.positions, mu, cloud, w, backend, _self_order(cloud, backend))


def evaluate_field(queries, mu, cloud: PointCloud, w: float,
                   backend: OperatorBackend = TREECODE) -> np.ndarray:
    """Winding-number field ``F(y; mu)`` at arbitrary points (normalized frame)."""
    mu = _check(mu, cloud, vector=True)
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(q)):
        raise CloudError("invalid coordinate")
    return _apply(KIND_A, q, mu, cloud, w, backend)


def energy(mu, cloud: PointCloud, w: float, backend: OperatorBackend = TREECODE) -> float:
    """``||A mu - 1/2||^2``."""
    s = apply_A(mu, cloud, w, backend)
    return float(np.sum((s - 0.5) ** 2))
