"""Point-cloud container and normalization into the solve frame.

Clouds are stored as ``(N, 3)`` float64 arrays. Normal fields (``mu``) and
scalar fields are plain numpy arrays aligned index-for-index with the cloud.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# longest bounding-box axis spans [-HALF_SPAN, HALF_SPAN], i.e. a 1/11 margin
HALF_SPAN = 10.0 / 11.0


class CloudError(ValueError):
    """Invalid point-cloud data (empty, non-finite, mismatched lengths)."""


class DegenerateCloudError(CloudError):
    """The cloud has zero spatial extent and cannot be solved."""


@dataclass(eq=False)
class PointCloud:
    """Points in the normalized frame plus the map back to input coordinates.

    ``positions = (raw - center) * scale``; see :meth:`to_input_frame`.
    """

    positions: np.ndarray
    scale: float = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    degenerate: bool = False
    _trees: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise CloudError("positions must have shape (N, 3)")
        if len(self.positions) == 0:
            raise CloudError("empty cloud")
        self.positions.setflags(write=False)

    def __len__(self):
        return len(self.positions)

    @property
    def count(self) -> int:
        return len(self.positions)

    def to_input_frame(self, points: np.ndarray | None = None) -> np.ndarray:
        """Map normalized-frame points (default: the cloud itself) back to input coordinates."""
        pts = self.positions if points is None else np.asarray(points, dtype=np.float64)
        return pts / self.scale + self.center

    def octree(self, max_depth: int = 15):
        """Octree over this cloud, built once per depth and cached."""
        if max_depth not in self._trees:
            from .octree import build_octree

            self._trees[max_depth] = build_octree(self, max_depth)
        return self._trees[max_depth]


def _as_points(raw) -> np.ndarray:
    pts = np.asarray(raw, dtype=np.float64)
    if pts.size == 0:
        raise CloudError("empty cloud")
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise CloudError("invalid coordinate")
    return pts


def normalize_cloud(raw_positions) -> PointCloud:
    """Center the bounding box at the origin and scale uniformly so the longest
    axis spans ``[-10/11, 10/11]``.

    A cloud whose points all coincide gets scale 1, is centered on that point
    and is marked ``degenerate``.
    """
    raw = _as_points(raw_positions)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = float(np.max(hi - lo))
    if extent == 0.0:
        return PointCloud(raw - center, 1.0, center, degenerate=True)
    scale = 2.0 * HALF_SPAN / extent
    # a cloud that is already normalized maps to itself exactly
    if abs(scale - 1.0) <= 4 * np.finfo(float).eps and np.all(np.abs(center) <= 1e-15):
        return PointCloud(raw.copy(), 1.0, np.zeros(3))
    # clip absorbs the last-ulp rounding of (raw - center) far from the origin
    pos = np.clip((raw - center) * scale, -HALF_SPAN, HALF_SPAN)
    return PointCloud(pos, scale, center)


def denormalize_normals(mu: np.ndarray, cloud: PointCloud) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals from oriented surface elements.

    Uniform scaling and translation do not rotate directions, so the result is
    valid in both frames. Returns ``(normals, zero_flags)``; entries with
    ``|mu_i| = 0`` come back as the zero vector with their flag set.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (len(cloud), 3):
        raise CloudError(f"normal field has shape {mu.shape}, expected ({len(cloud)}, 3)")
    norms = np.linalg.norm(mu, axis=1)
    flags = norms == 0.0
    out = np.zeros_like(mu)
    live = ~flags
    out[live] = mu[live] / norms[live, None]
    return out, flags
