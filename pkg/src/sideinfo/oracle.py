"""Exhaustive grid search for tiny instances.

Every conditional row is restricted to the lattice of compositions with
step delta, and every deterministic map is enumerated.  The joint laws are
built from scratch here (no code shared with the solvers) so the values can
serve as an independent check.  Stochastic second-stage kernels
p(x|u,s1) or p(xhat|u,s2) can be swept on their own, usually coarser, lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ascent import BudgetError
from .problems import ChannelProblem, SourceProblem
from .ratedist import InfeasibleDistortion, feasible_range

_CHUNK = 200_000


@dataclass(frozen=True)
class GridSpec:
    delta: float = 0.02
    max_points: int = 200_000_000
    # lattice step for stochastic second-stage rows
    x_delta: float = 0.25

    def __post_init__(self):
        for name, d in (("delta", self.delta), ("x_delta", self.x_delta)):
            if not 0 < d <= 0.5:
                raise ValueError(f"{name} must be in (0, 0.5], got {d}")
            if abs(round(1 / d) * d - 1) > 1e-9:
                raise ValueError(f"1/{name} must be an integer, got {name}={d}")
        if self.max_points < 1:
            raise ValueError("max_points must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(1 / self.delta))

    @property
    def x_steps(self) -> int:
        return int(round(1 / self.x_delta))


class OracleBudgetError(BudgetError):
    def __init__(self, predicted: int, cap: int):
        super().__init__(f"grid search needs {predicted} evaluations, above max_points={cap}")
        self.predicted = predicted


def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the k-simplex whose coordinates are multiples of 1/steps."""
    pts = []
    for bars in itertools.combinations(range(steps + k - 1), k - 1):
        edges = (-1,) + bars + (steps + k - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(pts, dtype=float).reshape(-1, k) / steps


def _kernels(grid: np.ndarray, rows: int, lo: int, hi: int) -> np.ndarray:
    """Kernels number lo..hi-1 of the product lattice, shape (hi-lo, rows, k)."""
    digits = np.unravel_index(np.arange(lo, hi), (len(grid),) * rows)
    return np.stack([grid[d] for d in digits], axis=1)


def _ent(p: np.ndarray, axes) -> np.ndarray:
    """Entropy in bits over ``axes`` for a batch of (sub)distributions."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -t.sum(axis=axes)


@dataclass
class OracleResult:
    value: float
    bound: float                 # estimated distance to the grid-free optimum
    lipschitz: float             # estimated max finite-difference ratio near the optimum
    evaluations: int
    u_size: int
    kernel: np.ndarray = field(repr=False)       # best first-stage kernel
    second_stage: np.ndarray = field(repr=False)  # best map table or stochastic kernel
    stochastic: bool = False


# ---------------------------------------------------------------------------
# capacity

def _channel_mixtures(prob: ChannelProblem, u_size: int, stochastic: bool, x_steps: int):
    """Second-stage choices as kernels K[u, s1, x] (deterministic maps are vertices)."""
    nx, ns1 = prob.x_alpha.size, prob.s1_alpha.size
    rows = u_size * ns1
    if not stochastic:
        tables = itertools.product(range(nx), repeat=rows)
        for t in tables:
            K = np.zeros((rows, nx))
            K[np.arange(rows), t] = 1.0
            yield K.reshape(u_size, ns1, nx)
        return
    g = simplex_grid(nx, x_steps)
    for idx in itertools.product(range(len(g)), repeat=rows):
        yield g[list(idx)].reshape(u_size, ns1, nx)


def _capacity_values(prob: ChannelProblem, Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    """I(U;S2,Y) - I(U;S1) for kernels Q[n, s1, u] and second stage K[u, s1, x]."""
    p12 = prob.p_s1s2
    W = prob.kernel                                           # [x, s1, s2, y]
    # A[s1, u, s2, y] = sum_x p(s1, s2) K(x|u, s1) W(y|x, s1, s2)
    A = np.einsum("ab,uax,xaby->auby", p12, K, W)
    P = np.einsum("nau,auby->nauby", Q, A)                    # joint (s1, u, s2, y)
    p_uyz = P.sum(axis=1)
    p_yz = p_uyz.sum(axis=1)
    p_s1 = p12.sum(axis=1)
    p_us1 = Q * p_s1[None, :, None]
    return (_ent(p_yz, (1, 2)) - _ent(p_uyz, (1, 2, 3))
            - _ent(p_s1, 0) + _ent(p_us1, (1, 2)))


def _cap_count(prob, u_size, grid, stochastic):
    G = math.comb(grid.steps + u_size - 1, u_size - 1)
    nx, ns1 = prob.x_alpha.size, prob.s1_alpha.size
    if stochastic:
        second = math.comb(grid.x_steps + nx - 1, nx - 1) ** (u_size * ns1)
    else:
        second = nx ** (u_size * ns1)
    return G, G ** ns1, second


def oracle_capacity(prob: ChannelProblem, u_size: int, grid: GridSpec = GridSpec(), *,
                    stochastic: bool = False) -> OracleResult:
    """Grid maximum of I(U;S2,Y) - I(U;S1) over p(u|s1) and f(u,s1).

    With ``stochastic`` the second stage ranges over lattice kernels
    p(x|u,s1) instead of deterministic maps.
    """
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    G, N, second = _cap_count(prob, u_size, grid, stochastic)
    if N * second > grid.max_points:
        raise OracleBudgetError(N * second, grid.max_points)
    ns1 = prob.s1_alpha.size
    g = simplex_grid(u_size, grid.steps)
    best = (-np.inf, None, None)
    for lo in range(0, N, _CHUNK):
        Q = _kernels(g, ns1, lo, min(N, lo + _CHUNK))
        for K in _channel_mixtures(prob, u_size, stochastic, grid.x_steps):
            v = _capacity_values(prob, Q, K)
            i = int(np.argmax(v))
            if v[i] > best[0] + 1e-15:
                best = (float(v[i]), Q[i].copy(), K)
    value, q, K = best
    L, bound = _lipschitz(lambda qq: _capacity_values(prob, qq, K), q, grid.delta)
    second_stage = K if stochastic else np.argmax(K, axis=-1)
    return OracleResult(value, bound, L, N * second, u_size,
                        q, second_stage, stochastic)


def _lipschitz(fn, q: np.ndarray, delta: float) -> tuple[float, float]:
    """Largest |f change| / delta over single-step lattice moves from q."""
    rows, k = q.shape
    moves = []
    for r in range(rows):
        for i in range(k):
            if q[r, i] < delta - 1e-12:
                continue
            for j in range(k):
                if j != i:
                    m = q.copy()
                    m[r, i] -= delta
                    m[r, j] += delta
                    moves.append(np.clip(m, 0.0, 1.0))
    if not moves:
        return 0.0, 0.0
    base = fn(q[None])[0]
    vals = fn(np.stack(moves))
    change = float(np.max(np.abs(vals - base)))
    return change / delta, change


# ---------------------------------------------------------------------------
# rate distortion

def _source_linear(prob: SourceProblem, u_size: int, stochastic: bool, x_steps: int):
    """Second stages as weights w[x, s1, u] with distortion = sum q(u|x,s1) w."""
    p = prob.p_xs1s2
    d = prob.distortion
    nxh, ns2 = prob.xhat_alpha.size, prob.s2_alpha.size
    rows = u_size * ns2
    if stochastic:
        g = simplex_grid(nxh, x_steps)
        choices = (g[list(idx)] for idx in itertools.product(range(len(g)), repeat=rows))
    else:
        def one_hot(t):
            K = np.zeros((rows, nxh))
            K[np.arange(rows), t] = 1.0
            return K
        choices = (one_hot(t) for t in itertools.product(range(nxh), repeat=rows))
    for K in choices:
        K = K.reshape(u_size, ns2, nxh)
        # w[x, s1, u] = sum_{s2, xhat} p(x, s1, s2) K(xhat|u, s2) d(x, xhat)
        yield K, np.einsum("xab,ubk,xk->xau", p, K, d)


def _rates(prob: SourceProblem, Q: np.ndarray) -> np.ndarray:
    """I(U;X,S1) - I(U;S2) for kernels Q[n, x, s1, u]."""
    p = prob.p_xs1s2
    P = np.einsum("xab,nxau->nxabu", p, Q)
    p_xs1 = p.sum(axis=2)
    p_s2 = p.sum(axis=(0, 1))
    p_uxs1 = P.sum(axis=3)
    p_us2 = P.sum(axis=(1, 2))
    return (_ent(p_xs1, (0, 1)) - _ent(p_uxs1, (1, 2, 3))
            - _ent(p_s2, 0) + _ent(p_us2, (1, 2)))


def _rd_count(prob, u_size, grid, stochastic):
    rows = prob.x_alpha.size * prob.s1_alpha.size
    G = math.comb(grid.steps + u_size - 1, u_size - 1)
    nxh, ns2 = prob.xhat_alpha.size, prob.s2_alpha.size
    if stochastic:
        second = math.comb(grid.x_steps + nxh - 1, nxh - 1) ** (u_size * ns2)
    else:
        second = nxh ** (u_size * ns2)
    return G ** rows, second


def oracle_rd(prob: SourceProblem, target_d: float, u_size: int, grid: GridSpec = GridSpec(), *,
              stochastic: bool = False) -> OracleResult:
    """Grid minimum of I(U;X,S1) - I(U;S2) with distortion <= target_d.

    The bound adds to the Lipschitz estimate the rate a slack of one
    lattice step in distortion (delta * max d) would save, which measures
    how much the lattice cuts into the constraint set.
    """
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    d_min, _ = feasible_range(prob)
    if target_d < d_min - 1e-12:
        raise InfeasibleDistortion(target_d, d_min)
    N, second = _rd_count(prob, u_size, grid, stochastic)
    if N * second > grid.max_points:
        raise OracleBudgetError(N * second, grid.max_points)
    rows = prob.x_alpha.size * prob.s1_alpha.size
    nx, ns1 = prob.x_alpha.size, prob.s1_alpha.size
    slack = grid.delta * float(prob.distortion.max())
    linear = list(_source_linear(prob, u_size, stochastic, grid.x_steps))
    Wt = np.stack([w.reshape(-1) for _, w in linear], axis=1)          # (x*s1*u, M)
    g = simplex_grid(u_size, grid.steps)
    best = (np.inf, None, None)
    relaxed = np.inf
    for lo in range(0, N, _CHUNK):
        Q = _kernels(g, rows, lo, min(N, lo + _CHUNK)).reshape(-1, nx, ns1, u_size)
        r = _rates(prob, Q)
        dist = Q.reshape(len(Q), -1) @ Wt                                # (n, M)
        m = np.argmin(dist, axis=1)
        dmin = dist[np.arange(len(Q)), m]
        ok = dmin <= target_d + 1e-12
        if np.any(ok):
            i = int(np.argmin(np.where(ok, r, np.inf)))
            if r[i] < best[0] - 1e-15:
                best = (float(r[i]), Q[i].copy(), int(m[i]))
        ok_relaxed = dmin <= target_d + slack + 1e-12
        if np.any(ok_relaxed):
            relaxed = min(relaxed, float(np.min(r[ok_relaxed])))
    value, q, mi = best
    if q is None:
        # the lattice (or u_size) is too coarse to reach target_d
        raise InfeasibleDistortion(target_d, d_min)
    K = linear[mi][0]
    L, change = _lipschitz(lambda qq: _rates(prob, qq.reshape(-1, nx, ns1, u_size)), q.reshape(rows, u_size),
                           grid.delta)
    bound = change + (value - relaxed)
    second_stage = K if stochastic else np.argmax(K, axis=-1)
    return OracleResult(value, bound, L, N * second, u_size, q, second_stage, stochastic)


# ---------------------------------------------------------------------------

@dataclass
class SufficiencyReport:
    kind: str
    deterministic: float
    stochastic: float
    bound: float

    @property
    def diff(self) -> float:
        return abs(self.stochastic - self.deterministic)

    @property
    def passed(self) -> bool:
        return self.diff <= self.bound + 1e-12


def deterministic_sufficiency_check(prob, u_size: int, grid: GridSpec = GridSpec(),
                                    target_d: float | None = None) -> SufficiencyReport:
    """Grid optimum over deterministic second stages vs over stochastic ones."""
    if isinstance(prob, ChannelProblem):
        det = oracle_capacity(prob, u_size, grid)
        sto = oracle_capacity(prob, u_size, grid, stochastic=True)
        kind = "channel"
    else:
        if target_d is None:
            raise ValueError("source checks need a target distortion")
        det = oracle_rd(prob, target_d, u_size, grid)
        sto = oracle_rd(prob, target_d, u_size, grid, stochastic=True)
        kind = "source"
    return SufficiencyReport(kind, det.value, sto.value, max(det.bound, sto.bound))
