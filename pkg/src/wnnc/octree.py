"""Octree over a normalized cloud and the treecode traversal.

The tree is stored as flat arrays in breadth-first order, so a parent always
precedes its children and the children of a node are contiguous. Points are
permuted so that every node owns a contiguous slice of ``perm``.

Representatives follow the usual treecode construction: a node's location is
the ``|nu|``-weighted mean of its member points and its attribute is the plain
sum of member attributes. Nodes whose total weight is zero fall back to the
unweighted centroid.

With ``order=1`` a far node also contributes the first-order Taylor term of
the kernel about its representative, using the moment
``M = sum_i nu_i (x_i - x_rep)^T``. With signed or vector attributes the
monopole alone leaves an O(h/d) error that this term removes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .kernels import INV_4PI, _nb_grad_dot, _nb_neg_hess_dot

# interaction kinds shared with the dense path
KIND_A = 0  # scalar out: sum grad_phi(x_q - x_j) . nu_j
KIND_AT = 1  # vector out: sum nu_j * grad_phi(x_j - x_q), scalar nu
KIND_G = 2  # vector out: -sum H(x_q - x_j) nu_j

KINDS = {"A": KIND_A, "AT": KIND_AT, "G": KIND_G}

STACK_SIZE = 8 * 64


@dataclass(eq=False)
class Octree:
    center: np.ndarray  # (M, 3)
    half_width: np.ndarray  # (M,)
    depth: np.ndarray  # (M,)
    child_start: np.ndarray  # (M,) first child id, -1 for leaves
    child_count: np.ndarray  # (M,)
    point_start: np.ndarray  # (M,) offset into perm
    point_count: np.ndarray  # (M,)
    perm: np.ndarray  # (N,) tree order -> input index
    sorted_positions: np.ndarray  # (N, 3) positions[perm]
    centroid: np.ndarray  # (M, 3) unweighted mean of member points
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.half_width)

    @property
    def n_points(self) -> int:
        return len(self.perm)

    def is_leaf(self, node: int) -> bool:
        return self.child_count[node] == 0

    def children(self, node: int) -> range:
        s = self.child_start[node]
        return range(s, s + self.child_count[node]) if s >= 0 else range(0)

    def members(self, node: int) -> np.ndarray:
        s = self.point_start[node]
        return self.perm[s : s + self.point_count[node]]

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.child_count == 0)


@dataclass(eq=False)
class Representatives:
    location: np.ndarray  # (M, 3)
    attribute: np.ndarray  # (M, k); k = 3 for vectors, 1 for scalars
    weight_total: np.ndarray  # (M,)
    moment: np.ndarray  # (M, k, 3) sum_i nu_i (x_i - location)^T
    sorted_attribute: np.ndarray  # (N, k) attributes in tree order


@njit(cache=True)
def _build(pos, max_depth, cap):
    n = pos.shape[0]
    center = np.zeros((cap, 3))
    half = np.zeros(cap)
    depth = np.zeros(cap, np.int64)
    cstart = np.full(cap, -1, np.int64)
    ccount = np.zeros(cap, np.int64)
    pstart = np.zeros(cap, np.int64)
    pcount = np.zeros(cap, np.int64)
    perm = np.arange(n)
    tmp = np.empty(n, np.int64)
    octs = np.empty(n, np.int64)

    half[0] = 1.0
    pcount[0] = n
    n_nodes = 1
    i = 0
    while i < n_nodes:
        s, m = pstart[i], pcount[i]
        if m > 1 and depth[i] < max_depth:
            cx, cy, cz = center[i, 0], center[i, 1], center[i, 2]
            counts = np.zeros(8, np.int64)
            for k in range(s, s + m):
                p = perm[k]
                o = 0
                if pos[p, 0] >= cx:
                    o |= 1
                if pos[p, 1] >= cy:
                    o |= 2
                if pos[p, 2] >= cz:
                    o |= 4
                octs[k] = o
                counts[o] += 1
            offs = np.zeros(8, np.int64)
            acc = 0
            for o in range(8):
                offs[o] = acc
                acc += counts[o]
            for k in range(s, s + m):
                o = octs[k]
                tmp[s + offs[o]] = perm[k]
                offs[o] += 1
            perm[s : s + m] = tmp[s : s + m]

            nonempty = 0
            for o in range(8):
                if counts[o] > 0:
                    nonempty += 1
            if n_nodes + nonempty > cap:
                return -1, center, half, depth, cstart, ccount, pstart, pcount, perm
            cstart[i] = n_nodes
            ccount[i] = nonempty
            h = 0.5 * half[i]
            acc = s
            for o in range(8):
                if counts[o] == 0:
                    continue
                c = n_nodes
                center[c, 0] = cx + (h if (o & 1) else -h)
                center[c, 1] = cy + (h if (o & 2) else -h)
                center[c, 2] = cz + (h if (o & 4) else -h)
                half[c] = h
                depth[c] = depth[i] + 1
                pstart[c] = acc
                pcount[c] = counts[o]
                acc += counts[o]
                n_nodes += 1
        i += 1
    return n_nodes, center, half, depth, cstart, ccount, pstart, pcount, perm


@njit(cache=True)
def _centroids(sorted_pos, pstart, pcount):
    m = pstart.shape[0]
    out = np.zeros((m, 3))
    for i in range(m):
        s, c = pstart[i], pcount[i]
        for k in range(s, s + c):
            out[i, 0] += sorted_pos[k, 0]
            out[i, 1] += sorted_pos[k, 1]
            out[i, 2] += sorted_pos[k, 2]
        out[i] /= c
    return out


def build_octree(cloud, max_depth: int = 15) -> Octree:
    """Split ``[-1, 1]^3`` into octants until a node holds one point or reaches ``max_depth``.

    Points on a splitting plane go to the upper octant.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    pos = np.ascontiguousarray(getattr(cloud, "positions", cloud), dtype=np.float64)
    if len(pos) == 0:
        raise ValueError("empty cloud")
    cap = 4 * len(pos) + 16
    while True:
        n_nodes, *arrays = _build(pos, max_depth, cap)
        if n_nodes >= 0:
            break
        cap *= 2
    *node_arrays, perm = arrays
    center, half, depth, cstart, ccount, pstart, pcount = (a[:n_nodes].copy() for a in node_arrays)
    sorted_pos = np.ascontiguousarray(pos[perm])
    return Octree(
        center=center,
        half_width=half,
        depth=depth,
        child_start=cstart,
        child_count=ccount,
        point_start=pstart,
        point_count=pcount,
        perm=perm,
        sorted_positions=sorted_pos,
        centroid=_centroids(sorted_pos, pstart, pcount),
        max_depth=max_depth,
    )


@njit(cache=True)
def _representatives(sorted_pos, sorted_attr, cstart, ccount, pstart, pcount, centroid):
    m = cstart.shape[0]
    k = sorted_attr.shape[1]
    loc_sum = np.zeros((m, 3))
    weight = np.zeros(m)
    attr = np.zeros((m, k))
    mom = np.zeros((m, k, 3))
    for i in range(m - 1, -1, -1):
        if ccount[i] == 0:
            for p in range(pstart[i], pstart[i] + pcount[i]):
                a2 = 0.0
                for j in range(k):
                    a = sorted_attr[p, j]
                    attr[i, j] += a
                    a2 += a * a
                    for l in range(3):
                        mom[i, j, l] += a * sorted_pos[p, l]
                wp = math.sqrt(a2)
                weight[i] += wp
                loc_sum[i, 0] += wp * sorted_pos[p, 0]
                loc_sum[i, 1] += wp * sorted_pos[p, 1]
                loc_sum[i, 2] += wp * sorted_pos[p, 2]
        else:
            for c in range(cstart[i], cstart[i] + ccount[i]):
                weight[i] += weight[c]
                for j in range(3):
                    loc_sum[i, j] += loc_sum[c, j]
                for j in range(k):
                    attr[i, j] += attr[c, j]
                    for l in range(3):
                        mom[i, j, l] += mom[c, j, l]
    loc = np.empty((m, 3))
    for i in range(m):
        if pcount[i] == 1:
            # exact, instead of (w x) / w
            for j in range(3):
                loc[i, j] = sorted_pos[pstart[i], j]
        elif weight[i] > 0.0:
            for j in range(3):
                loc[i, j] = loc_sum[i, j] / weight[i]
        else:
            loc[i] = centroid[i]
        # shift the raw moment to the representative location
        for j in range(k):
            for l in range(3):
                mom[i, j, l] -= attr[i, j] * loc[i, l]
    return loc, attr, weight, mom


def compute_representatives(tree: Octree, nu) -> Representatives:
    """Bottom-up pass computing every node's representative for attribute ``nu``.

    ``nu`` is ``(N, 3)`` for vector attributes or ``(N,)`` for scalar ones.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if nu.ndim == 1:
        nu = nu[:, None]
    if nu.shape[0] != tree.n_points:
        raise ValueError(f"attribute length {nu.shape[0]} does not match {tree.n_points} points")
    sorted_attr = np.ascontiguousarray(nu[tree.perm])
    loc, attr, weight, mom = _representatives(
        tree.sorted_positions,
        sorted_attr,
        tree.child_start,
        tree.child_count,
        tree.point_start,
        tree.point_count,
        tree.centroid,
    )
    return Representatives(loc, attr, weight, mom, sorted_attr)


@njit(inline="always", cache=True)
def _accumulate(kind, dx, dy, dz, r, attr, row, out3):
    if kind == KIND_A:
        out3[0] += _nb_grad_dot(dx, dy, dz, r, attr[row, 0], attr[row, 1], attr[row, 2])
    elif kind == KIND_AT:
        f = attr[row, 0] * INV_4PI / (r * r * r)
        out3[0] += f * dx
        out3[1] += f * dy
        out3[2] += f * dz
    else:
        gx, gy, gz = _nb_neg_hess_dot(dx, dy, dz, r, attr[row, 0], attr[row, 1], attr[row, 2])
        out3[0] += gx
        out3[1] += gy
        out3[2] += gz


@njit(inline="always", cache=True)
def _accumulate_moment(kind, dx, dy, dz, r, mom, b, out3):
    # first-order term of sum_i K(d - e_i) nu_i with e_i = x_i - x_rep
    inv_r2 = 1.0 / (r * r)
    k5 = INV_4PI * inv_r2 * inv_r2 / r
    if kind == KIND_AT:
        # + H(d) m, m = sum_i s_i e_i
        mx, my, mz = mom[b, 0, 0], mom[b, 0, 1], mom[b, 0, 2]
        t = 3.0 * (dx * mx + dy * my + dz * mz) * inv_r2
        out3[0] += k5 * r * r * (t * dx - mx)
        out3[1] += k5 * r * r * (t * dy - my)
        out3[2] += k5 * r * r * (t * dz - mz)
        return
    # M[a, l] = sum_i nu_ia e_il
    m00, m01, m02 = mom[b, 0, 0], mom[b, 0, 1], mom[b, 0, 2]
    m10, m11, m12 = mom[b, 1, 0], mom[b, 1, 1], mom[b, 1, 2]
    m20, m21, m22 = mom[b, 2, 0], mom[b, 2, 1], mom[b, 2, 2]
    if kind == KIND_A:
        # - sum_al H_al M_al, H = (3 d d^T / r^2 - I) / (4 pi r^3)
        dMd = (dx * (m00 * dx + m01 * dy + m02 * dz)
               + dy * (m10 * dx + m11 * dy + m12 * dz)
               + dz * (m20 * dx + m21 * dy + m22 * dz))
        tr = m00 + m11 + m22
        out3[0] -= k5 * (3.0 * dMd - tr * r * r)
        return
    # G: + sum_bc T_abc M_bc with T the third derivative of Phi
    mdx = m00 * dx + m01 * dy + m02 * dz  # (M d)
    mdy = m10 * dx + m11 * dy + m12 * dz
    mdz = m20 * dx + m21 * dy + m22 * dz
    mtx = m00 * dx + m10 * dy + m20 * dz  # (M^T d)
    mty = m01 * dx + m11 * dy + m21 * dz
    mtz = m02 * dx + m12 * dy + m22 * dz
    dMd = dx * mdx + dy * mdy + dz * mdz
    tr = m00 + m11 + m22
    f = -15.0 * dMd * inv_r2
    out3[0] += k5 * (f * dx + 3.0 * (mdx + mtx + dx * tr))
    out3[1] += k5 * (f * dy + 3.0 * (mdy + mty + dy * tr))
    out3[2] += k5 * (f * dz + 3.0 * (mdz + mtz + dz * tr))


@njit(cache=True)
def _walk(kind, order, qx, qy, qz, c, w, half, cstart, ccount, pstart, pcount,
          rep_loc, rep_attr, rep_mom, sorted_pos, sorted_attr, stack, out3):
    """Accumulate the treecode sum for one query into ``out3``; returns the number of kernel evaluations."""
    out3[0] = 0.0
    out3[1] = 0.0
    out3[2] = 0.0
    n_eval = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        b = stack[top]
        dx = qx - rep_loc[b, 0]
        dy = qy - rep_loc[b, 1]
        dz = qz - rep_loc[b, 2]
        r2 = dx * dx + dy * dy + dz * dz
        lim = c * 2.0 * half[b]
        if r2 > lim * lim:
            r = math.sqrt(r2)
            n_eval += 1
            if r >= w:
                _accumulate(kind, dx, dy, dz, r, rep_attr, b, out3)
                if order > 0:
                    _accumulate_moment(kind, dx, dy, dz, r, rep_mom, b, out3)
        elif ccount[b] > 0:
            s = cstart[b]
            for ch in range(s + ccount[b] - 1, s - 1, -1):
                stack[top] = ch
                top += 1
        else:
            for p in range(pstart[b], pstart[b] + pcount[b]):
                dx = qx - sorted_pos[p, 0]
                dy = qy - sorted_pos[p, 1]
                dz = qz - sorted_pos[p, 2]
                r = math.sqrt(dx * dx + dy * dy + dz * dz)
                n_eval += 1
                if r >= w:
                    _accumulate(kind, dx, dy, dz, r, sorted_attr, p, out3)
    return n_eval


@njit(parallel=True, cache=True)
def _walk_many(kind, order, queries, visit, c, w, half, cstart, ccount, pstart, pcount,
               rep_loc, rep_attr, rep_mom, sorted_pos, sorted_attr, out, n_eval):
    n = visit.shape[0]
    for t in prange(n):
        q = visit[t]
        stack = np.empty(STACK_SIZE, np.int64)
        acc = np.empty(3)
        n_eval[q] = _walk(kind, order, queries[q, 0], queries[q, 1], queries[q, 2], c, w, half,
                          cstart, ccount, pstart, pcount, rep_loc, rep_attr, rep_mom,
                          sorted_pos, sorted_attr, stack, acc)
        out[q, 0] = acc[0]
        out[q, 1] = acc[1]
        out[q, 2] = acc[2]


def traverse_many(queries, tree: Octree, reps: Representatives, c: float, w: float, kind: str,
                  order: int = 1, visit=None, return_counts: bool = False):
    """Treecode sums for a batch of query points.

    ``kind`` selects the accumulation rule: ``"A"`` (scalar, vector attribute),
    ``"AT"`` (vector, scalar attribute) or ``"G"`` (vector, vector attribute).
    ``order`` is the far-field expansion order (0: representative only, 1: plus
    the moment term). ``visit`` optionally fixes the processing order of the
    queries for locality; results do not depend on it.
    """
    k = KINDS[kind]
    expected = 1 if k == KIND_AT else 3
    if reps.attribute.shape[1] != expected:
        raise ValueError(f"kind {kind!r} needs a {'scalar' if expected == 1 else 'vector'} attribute")
    if order not in (0, 1):
        raise ValueError("expansion order must be 0 or 1")
    queries = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
    if visit is None:
        visit = np.arange(len(queries))
    out = np.empty((len(queries), 3))
    n_eval = np.empty(len(queries), np.int64)
    _walk_many(k, order, queries, visit, float(c), float(w), tree.half_width, tree.child_start,
               tree.child_count, tree.point_start, tree.point_count, reps.location,
               reps.attribute, reps.moment, tree.sorted_positions, reps.sorted_attribute,
               out, n_eval)
    result = out[:, 0].copy() if k == KIND_A else out
    return (result, n_eval) if return_counts else result


def traverse(query, tree: Octree, reps: Representatives, c: float, w: float, kind: str,
             order: int = 1, return_counts: bool = False):
    """Treecode sum for a single query point (see :func:`traverse_many`)."""
    res = traverse_many(np.asarray(query, dtype=np.float64)[None], tree, reps, c, w, kind,
                        order=order, return_counts=return_counts)
    if return_counts:
        return res[0][0], int(res[1][0])
    return res[0]
