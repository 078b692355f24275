"""Synthetic shapes with analytic normals, and the dense reference harness."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud
from .operators import DENSE, apply_A, apply_AT, apply_G

SHAPES = ("sphere", "torus", "box", "two-spheres")
SAMPLINGS = ("even", "random")

# candidates drawn per requested point by the even sampler
_OVERSAMPLE = 8
# Poisson-disk radius relative to sqrt(area / count); leaves a small surplus
_DISK_FACTOR = 0.72

_DEFAULT_PARAMS = {
    "sphere": {"radius": 1.0},
    "torus": {"major": 1.0, "minor": 0.3},
    "box": {"extents": (2.0, 1.0, 0.6)},
    "two-spheres": {"radius": 1.0, "separation": 3.0},
}


@dataclass(frozen=True)
class SyntheticShape:
    kind: str = "sphere"
    count: int = 1000
    noise: float = 0.0  # std dev as a fraction of the bounding-box diagonal
    seed: int = 0
    params: dict = field(default_factory=dict)
    # "even": Poisson-disk subset of i.i.d. candidates; "random": i.i.d. area-uniform
    sampling: str = "even"

    def __post_init__(self):
        if self.kind not in SHAPES:
            raise ValueError(f"unknown shape {self.kind!r}; choose from {', '.join(SHAPES)}")
        if self.count < 1:
            raise ValueError("sample count must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"unknown sampling {self.sampling!r}")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")

    def param(self, name):
        return self.params.get(name, _DEFAULT_PARAMS[self.kind][name])


def parse_shape(spec: str, seed: int = 0, noise: float = 0.0, sampling: str = "even") -> SyntheticShape:
    """``"sphere:20000"`` -> a 20000-point sphere. The count defaults to 10000."""
    kind, _, count = spec.partition(":")
    try:
        n = int(count) if count else 10000
    except ValueError:
        raise ValueError(f"bad sample count in shape {spec!r}") from None
    return SyntheticShape(kind, n, noise=noise, seed=seed, sampling=sampling)


def _unit(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere(rng, n, radius):
    nrm = _unit(rng.normal(size=(n, 3)))
    return radius * nrm, nrm


def _torus(rng, n, major, minor):
    # area element is minor * (major + minor cos(phi)); rejection-sample phi
    phi = np.empty(0)
    while len(phi) < n:
        cand = rng.uniform(0, 2 * np.pi, size=2 * n)
        keep = rng.uniform(0, major + minor, size=2 * n) < major + minor * np.cos(cand)
        phi = np.concatenate([phi, cand[keep]])
    phi = phi[:n]
    theta = rng.uniform(0, 2 * np.pi, size=n)
    ring = major + minor * np.cos(phi)
    pos = np.stack([ring * np.cos(theta), ring * np.sin(theta), minor * np.sin(phi)], axis=1)
    nrm = np.stack([np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)], axis=1)
    return pos, nrm


def _box(rng, n, extents):
    e = np.asarray(extents, dtype=np.float64)
    if e.shape != (3,) or np.any(e <= 0):
        raise ValueError("box extents must be three positive lengths")
    face_area = np.array([e[1] * e[2], e[0] * e[2], e[0] * e[1]])
    probs = np.repeat(face_area, 2) / (2 * face_area.sum())
    face = rng.choice(6, size=n, p=probs)
    axis, side = face // 2, np.where(face % 2 == 0, -1.0, 1.0)
    pos = (rng.uniform(size=(n, 3)) - 0.5) * e
    rows = np.arange(n)
    pos[rows, axis] = side * e[axis] / 2
    nrm = np.zeros((n, 3))
    nrm[rows, axis] = side
    return pos, nrm


def surface_area(shape: SyntheticShape) -> float:
    if shape.kind == "sphere":
        return 4 * np.pi * shape.param("radius") ** 2
    if shape.kind == "two-spheres":
        return 8 * np.pi * shape.param("radius") ** 2
    if shape.kind == "torus":
        return 4 * np.pi**2 * shape.param("major") * shape.param("minor")
    a, b, c = shape.param("extents")
    return 2 * (a * b + a * c + b * c)


def _draw(shape: SyntheticShape, rng, n):
    if shape.kind == "sphere":
        radius = shape.param("radius")
        if radius <= 0:
            raise ValueError("radius must be positive")
        return _sphere(rng, n, radius)
    if shape.kind == "torus":
        major, minor = shape.param("major"), shape.param("minor")
        if not 0 < minor < major:
            raise ValueError("torus needs 0 < minor < major")
        return _torus(rng, n, major, minor)
    return _box(rng, n, shape.param("extents"))


def _poisson_disk(pos, n, radius, rng):
    """Greedy dart throwing over a random candidate order; returns ``n`` indices or None."""
    tree = cKDTree(pos)
    alive = np.ones(len(pos), dtype=bool)
    chosen = []
    for i in rng.permutation(len(pos)):
        if not alive[i]:
            continue
        chosen.append(i)
        alive[tree.query_ball_point(pos[i], radius)] = False
    if len(chosen) < n:
        return None
    chosen = np.asarray(chosen)
    return np.sort(rng.choice(chosen, size=n, replace=False))


def _even(shape: SyntheticShape, rng, n):
    pos, nrm = _draw(shape, rng, _OVERSAMPLE * n)
    radius = _DISK_FACTOR * np.sqrt(surface_area(shape) / max(n, 1))
    while True:
        idx = _poisson_disk(pos, n, radius, rng)
        if idx is not None:
            return pos[idx], nrm[idx]
        radius *= 0.9


def sample_shape(shape: SyntheticShape) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform surface samples and analytic unit normals.

    ``sampling="even"`` keeps a Poisson-disk subset of i.i.d. candidates, so no
    two samples are much closer than the mean spacing; ``"random"`` returns the
    i.i.d. samples directly. Gaussian noise, when requested, moves the positions
    only; normals stay those of the clean surface points.
    """
    rng = np.random.default_rng(shape.seed)
    if shape.kind == "two-spheres":
        radius, sep = shape.param("radius"), shape.param("separation")
        if sep <= 2 * radius:
            raise ValueError("two-spheres needs separation > 2 * radius")
        n_a = (shape.count + 1) // 2
        a, b = (_sample_clean(replace(shape, kind="sphere", count=k, params={"radius": radius}), rng)
                for k in (n_a, shape.count - n_a))
        offset = np.array([sep / 2, 0.0, 0.0])
        pos = np.concatenate([a[0] - offset, b[0] + offset])
        nrm = np.concatenate([a[1], b[1]])
    else:
        pos, nrm = _sample_clean(shape, rng)
    if shape.noise > 0:
        diag = np.linalg.norm(pos.max(axis=0) - pos.min(axis=0))
        pos = pos + rng.normal(scale=shape.noise * diag, size=pos.shape)
    return pos, nrm


def _sample_clean(shape, rng):
    if shape.sampling == "even":
        return _even(shape, rng, shape.count)
    return _draw(shape, rng, shape.count)


def shape_components(shape: SyntheticShape) -> np.ndarray:
    """Connected-component label per sample (all zero except for two-spheres)."""
    labels = np.zeros(shape.count, dtype=np.int64)
    if shape.kind == "two-spheres":
        labels[(shape.count + 1) // 2 :] = 1
    return labels


def dense_reference(mu, cloud: PointCloud, w: float, s=None) -> dict:
    """``A mu``, ``A^T s`` and ``G mu`` by direct O(N^2) summation.

    ``s`` defaults to ``A mu - 1/2``, the residual the solver feeds to ``A^T``.
    """
    a = apply_A(mu, cloud, w, DENSE)
    if s is None:
        s = a - 0.5
    return {"A": a, "AT": apply_AT(s, cloud, w, DENSE), "G": apply_G(mu, cloud, w, DENSE)}
