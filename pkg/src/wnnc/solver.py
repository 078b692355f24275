"""Iterative orientation solver.

Each iteration takes one exact line-search gradient step on
``E(mu) = ||A mu - 1/2||^2``, replaces every ``mu_i`` by the negative field
gradient ``G(mu)_i`` and rescales it back to its previous length. The cutoff
width decreases linearly from ``w2`` to ``w1`` over the run. The solve always
starts from ``mu = 0``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import CloudError, DegenerateCloudError, PointCloud
from .operators import OperatorBackend, apply_A, apply_AT, apply_G

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    w1: float = 0.002
    w2: float = 0.016
    iterations: int = 40
    tree_depth: int = 15
    c: float = 2.0
    backend: str = "treecode"
    expansion_order: int = 1
    # False runs gradient steps only (ablation)
    wnnc_update: bool = True

    def __post_init__(self):
        if not (self.w1 > 0 and self.w2 > 0):
            raise ValueError("smoothing widths must be positive")
        if self.w1 > self.w2:
            raise ValueError(f"w1={self.w1} exceeds w2={self.w2}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def operator_backend(self) -> OperatorBackend:
        return OperatorBackend(self.backend, self.c, self.tree_depth, self.expansion_order)


@dataclass
class GradStepInfo:
    alpha: float
    energy_before: float
    energy_after: float
    residual_norm: float
    skipped: bool = False


@dataclass
class SolveResult:
    mu: np.ndarray
    widths: list = field(default_factory=list)
    energies: list = field(default_factory=list)  # E after each gradient step
    alphas: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    # median |G(mu)_i| / |mu_i| per iteration
    scale_ratios: list = field(default_factory=list)
    skipped_steps: list = field(default_factory=list)
    zero_flags: np.ndarray | None = None
    nonzero_init: bool = False

    @property
    def energy(self) -> float:
        return self.energies[-1] if self.energies else float("nan")


def width_at(i: int, params: SolverParams) -> float:
    """Cutoff width for iteration ``i`` (1-based): ``w2`` at the first, ``w1`` at the last."""
    n = params.iterations
    if not 1 <= i <= n:
        raise ValueError(f"iteration {i} outside 1..{n}")
    if n == 1:
        return params.w1
    return params.w2 * (n - i) / (n - 1) + params.w1 * (i - 1) / (n - 1)


def grad_step(mu, cloud: PointCloud, w: float, backend: OperatorBackend,
              info: list | None = None) -> np.ndarray:
    """One exact line-search step of steepest descent on ``||A mu - 1/2||^2``.

    ``r = A^T (b - A mu)`` and ``alpha = |r|^2 / |A r|^2``, which equals
    ``r.r / r.A^T A r`` without a second ``A^T`` pass. If ``info`` is a list,
    a :class:`GradStepInfo` is appended to it.
    """
    mu = np.asarray(mu, dtype=np.float64)
    s = apply_A(mu, cloud, w, backend)
    res = 0.5 - s
    e0 = float(res @ res)
    r = apply_AT(res, cloud, w, backend)
    rr = float(np.sum(r * r))
    if rr == 0.0:
        if info is not None:
            info.append(GradStepInfo(0.0, e0, e0, 0.0))
        return mu.copy()
    q = apply_A(r, cloud, w, backend)
    qq = float(q @ q)
    if qq == 0.0:
        log.warning("A r vanished for nonzero r; gradient step skipped")
        if info is not None:
            info.append(GradStepInfo(0.0, e0, e0, np.sqrt(rr), skipped=True))
        return mu.copy()
    alpha = rr / qq
    if info is not None:
        e1 = float(np.sum((res - alpha * q) ** 2))
        info.append(GradStepInfo(alpha, e0, e1, np.sqrt(rr)))
    return mu + alpha * r


def wnnc_rescale(mu_prev, mu_hat) -> np.ndarray:
    """Directions of ``mu_hat`` with the lengths of ``mu_prev``.

    Entries where ``mu_hat`` vanishes keep ``mu_prev``.
    """
    mu_prev = np.asarray(mu_prev, dtype=np.float64)
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    if mu_prev.shape != mu_hat.shape:
        raise CloudError(f"shape mismatch {mu_prev.shape} vs {mu_hat.shape}")
    hat_norm = np.linalg.norm(mu_hat, axis=1)
    prev_norm = np.linalg.norm(mu_prev, axis=1)
    out = mu_prev.copy()
    live = hat_norm > 0
    out[live] = mu_hat[live] * (prev_norm[live] / hat_norm[live])[:, None]
    return out


def solve(cloud: PointCloud, params: SolverParams = SolverParams(),
          initial_mu=None, callback=None) -> SolveResult:
    """Orient ``cloud`` (already normalized). Returns the final ``mu`` plus per-iteration traces.

    ``initial_mu`` exists for experiments only: any nonzero start breaks the
    convergence behaviour, so it triggers a warning and is recorded on the
    result. ``callback(i, mu)`` is called after every iteration.
    """
    if cloud.degenerate:
        raise DegenerateCloudError("cloud has zero extent")
    backend = params.operator_backend
    n = len(cloud)
    result = SolveResult(mu=np.zeros((n, 3)))
    mu = result.mu
    if initial_mu is not None:
        mu = np.array(initial_mu, dtype=np.float64)
        if mu.shape != (n, 3):
            raise CloudError(f"initial field has shape {mu.shape}, expected ({n}, 3)")
        if np.any(mu):
            warnings.warn("nonzero initial normals: solve is only reliable from mu = 0", stacklevel=2)
            result.nonzero_init = True

    for i in range(1, params.iterations + 1):
        w = width_at(i, params)
        info: list[GradStepInfo] = []
        mu = grad_step(mu, cloud, w, backend, info)
        step = info[0]
        result.widths.append(w)
        result.alphas.append(step.alpha)
        result.energies.append(step.energy_after)
        result.residual_norms.append(step.residual_norm)
        if step.skipped:
            result.skipped_steps.append(i)
        if params.wnnc_update:
            mu_hat = apply_G(mu, cloud, w, backend)
            norms = np.linalg.norm(mu, axis=1)
            live = norms > 0
            if np.any(live):
                ratio = np.linalg.norm(mu_hat[live], axis=1) / norms[live]
                result.scale_ratios.append(float(np.median(ratio)))
            mu = wnnc_rescale(mu, mu_hat)
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError(f"non-finite normals after iteration {i}")
        log.debug("iter %d w=%.4g E=%.6g alpha=%.4g", i, w, step.energy_after, step.alpha)
        if callback is not None:
            callback(i, mu)

    result.mu = mu
    result.zero_flags = np.linalg.norm(mu, axis=1) == 0.0
    if result.zero_flags.any():
        log.warning("%d points ended with zero normals", int(result.zero_flags.sum()))
    return result
