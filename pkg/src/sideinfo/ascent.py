"""Batched projected-gradient ascent over products of probability simplices.

Every solver in the package optimizes a row-stochastic matrix ``q[row, u]``
(one simplex per row).  The engine below runs many independent problems at
once, each with its own step size and backtracking, so that a whole batch of
(map, restart) pairs advances in a single vectorized iteration.  Each batch
element follows exactly the trajectory it would follow if run alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

# floor applied before taking logs in gradients; the objective itself uses 0 log 0 = 0
LOG_FLOOR = 1e-300


class BudgetError(RuntimeError):
    """Enumeration or memory budget exceeded."""


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = 16
    tol_bits: float = 1e-7
    max_iters: int = 5000
    enum_cap: int = 4096
    map_samples: int = 512
    allow_sampling: bool = True
    seed: int = 0
    # stricter second stage run on the best few candidates
    polish_top: int = 4
    polish_tol_bits: float = 1e-11
    polish_iters: int = 20000
    # iteration cap per descent while bracketing the rate-distortion multiplier
    search_iters: int = 300

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.tol_bits <= 0 or self.max_iters < 1:
            raise ValueError("tol_bits must be > 0 and max_iters >= 1")
        if self.polish_iters < 1 or self.search_iters < 1:
            raise ValueError("polish_iters and search_iters must be >= 1")
        if self.enum_cap < 1 or self.map_samples < 1:
            raise ValueError("enum_cap and map_samples must be >= 1")


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each vector along the last axis onto the simplex."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    # the threshold is max_j (sum of the j largest entries - 1) / j
    theta = ((np.cumsum(u, axis=-1) - 1.0) / np.arange(1, n + 1)).max(axis=-1, keepdims=True)
    return np.maximum(v - theta, 0.0)


def starting_points(n_rows: int, n_cols: int, restarts: int, rng: np.random.Generator) -> np.ndarray:
    """Multi-start pattern: uniform, vertex-biased rows, then seeded random points."""
    starts = [np.full((n_rows, n_cols), 1.0 / n_cols)]
    for j in range(n_cols):
        if len(starts) >= restarts:
            break
        s = np.full((n_rows, n_cols), 0.1 / n_cols)
        s[:, j] += 0.9
        starts.append(s)
    while len(starts) < restarts:
        starts.append(rng.dirichlet(np.ones(n_cols), size=n_rows))
    return np.stack(starts[:restarts])


@dataclass
class AscentResult:
    q: np.ndarray            # (B, R, U)
    value: np.ndarray        # (B,)
    iterations: np.ndarray   # (B,)
    perturbations: np.ndarray  # (B,)


def ascend(value_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
           grad_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
           q0: np.ndarray,
           row_weight: np.ndarray,
           *,
           tol: float,
           max_iters: int,
           rng: np.random.Generator,
           project: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> AscentResult:
    """Maximize ``value_fn`` independently for every batch element.

    ``value_fn(q, idx)`` and ``grad_fn(q, idx)`` receive the active sub-batch and
    the original batch indices of its elements.  The gradient is rescaled per
    row by ``1 / row_weight`` (rows of zero weight are frozen), stepped, and
    projected back.  A step is taken only when it does not decrease the value,
    so every trajectory is monotone.
    """
    if project is None:
        project = lambda z, idx: project_simplex(z)  # noqa: E731
    q = np.array(q0, dtype=np.float64)
    B = q.shape[0]
    scale = np.where(row_weight > 0, 1.0 / np.where(row_weight > 0, row_weight, 1.0), 0.0)
    scale = scale.reshape((-1,) + (1,) * (q.ndim - 2)) if scale.ndim == 1 else scale
    all_idx = np.arange(B)
    value = value_fn(q, all_idx)
    step = np.ones(B)
    iters = np.zeros(B, dtype=np.int64)
    perturb = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)
    best_q = q.copy()
    best_v = value.copy()
    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        qa = q[idx]
        g = grad_fn(qa, idx) * scale
        bad = ~np.all(np.isfinite(g.reshape(idx.size, -1)), axis=1)
        if np.any(bad):
            # zero-support pathology: restart those elements from a perturbed point
            bi = idx[bad]
            better = value[bi] > best_v[bi]
            best_q[bi[better]] = q[bi[better]]
            best_v[bi[better]] = value[bi[better]]
            noise = rng.dirichlet(np.ones(q.shape[-1]), size=(bi.size,) + q.shape[1:-1])
            q[bi] = project(0.9 * q[bi] + 0.1 * noise, bi)
            value[bi] = value_fn(q[bi], bi)
            perturb[bi] += 1
            iters[bi] += 1
            g = np.where(np.isfinite(g), g, 0.0)
            keep = ~bad
            idx, qa, g = idx[keep], qa[keep], g[keep]
            if idx.size == 0:
                continue
        t = step[idx].reshape((-1,) + (1,) * (q.ndim - 1))
        cand = project(qa + t * g, idx)
        vc = value_fn(cand, idx)
        gain = vc - value[idx]
        ok = gain >= 0
        acc = idx[ok]
        q[acc] = cand[ok]
        value[acc] = vc[ok]
        iters[idx] += 1
        step[acc] = np.minimum(step[acc] * 2.0, 1e8)
        rej = idx[~ok]
        step[rej] *= 0.5
        done = (ok & (gain < tol)) | (step[idx] < 1e-15)
        active[idx[done]] = False
    # a perturbation restart may have left an element below its pre-restart best
    revert = best_v > value
    q[revert] = best_q[revert]
    value[revert] = best_v[revert]
    return AscentResult(q, value, iters, perturb)
