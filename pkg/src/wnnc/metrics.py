"""Normal accuracy against ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NormalAccuracyReport:
    ae_pcd: float
    p_co: float  # percent
    per_point_errors: np.ndarray
    flipped_count: int

    @property
    def count(self) -> int:
        return len(self.per_point_errors)

    def as_dict(self) -> dict:
        return {
            "n_points": self.count,
            "ae_pcd": self.ae_pcd,
            "p_co": self.p_co,
            "flipped_count": self.flipped_count,
        }

    def to_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in self.as_dict().items())


def angular_error(recon, gt) -> NormalAccuracyReport:
    """Mean ``(1 - gt.recon) / 2`` and the percentage of strictly positive dots.

    Zero reconstructed normals score 0.5 and count as misoriented.
    """
    recon = np.asarray(recon, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if recon.shape != gt.shape:
        raise ValueError(f"length mismatch: {len(recon)} vs {len(gt)} normals")
    if len(gt) == 0:
        raise ValueError("no normals to compare")
    dots = np.einsum("ij,ij->i", recon, gt)
    errors = np.clip((1.0 - dots) / 2.0, 0.0, 1.0)
    correct = int(np.count_nonzero(dots > 0))
    n = len(dots)
    return NormalAccuracyReport(
        ae_pcd=float(errors.mean()),
        p_co=100.0 * correct / n,
        per_point_errors=errors,
        flipped_count=n - correct,
    )
