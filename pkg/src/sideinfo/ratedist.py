"""Rate distortion with state at the encoder (S1) and at the decoder (S2):

    R(D) = min over p(u|x,s1) and xhat = g(u, s2) of  I(U; S1, X) - I(U; S2)
           subject to  E d(X, Xhat) <= D.

For a fixed map g the rate is H(U|S2) - H(U|X,S1) and the distortion is
linear in p(u|x,s1).  Single points are found by bracketing the Lagrange
multiplier, then polishing with a descent that keeps the distortion
constraint satisfied at every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .ascent import LOG_FLOOR, SolverOptions, starting_points
from .maps import candidate_maps
from .prob import (Alphabet, ConditionalKernel, DeterministicMap, compose_joint,
                   mutual_information)
from .problems import SourceProblem

log = logging.getLogger(__name__)

U = "u"
_CHUNK_FLOATS = 4_000_000


class InfeasibleDistortion(ValueError):
    """Target distortion below the smallest achievable distortion."""

    def __init__(self, target: float, d_min: float):
        super().__init__(f"target distortion {target:.6g} is below d_min = {d_min:.6g}")
        self.target = target
        self.d_min = d_min


@dataclass
class RdPoint:
    target_d: float
    rate: float
    achieved_d: float
    u_given_xs1: ConditionalKernel
    xhat_map: DeterministicMap
    lam: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RdCurve:
    points: list[RdPoint]
    d_min: float
    d_max: float

    def pairs(self) -> np.ndarray:
        return np.array([(p.achieved_d, p.rate) for p in self.points]).reshape(-1, 2)


def default_u_size(prob: SourceProblem) -> int:
    if prob.s1_alpha.size == 1:
        # decoder-only side information: |U| <= |X| + 1 suffices
        return prob.x_alpha.size + 1
    return prob.x_alpha.size * prob.s1_alpha.size + 2


def feasible_range(prob: SourceProblem) -> tuple[float, float]:
    """(d_min, d_max): best distortion when x is revealed, and best constant reconstruction."""
    p_x = prob.p_xs1s2.sum(axis=(1, 2))
    d = prob.distortion
    d_min = float(p_x @ d.min(axis=1))
    d_max = float((p_x @ d).min())
    return d_min, d_max


def _best_s2_guess(prob: SourceProblem) -> np.ndarray:
    p_xs2 = prob.p_xs1s2.sum(axis=1)                      # (X, S2)
    return np.argmin(p_xs2.T @ prob.distortion, axis=1)   # best xhat for each s2


def zero_rate_distortion(prob: SourceProblem) -> float:
    """Smallest distortion at rate zero: the decoder guesses from S2 alone."""
    p_xs2 = prob.p_xs1s2.sum(axis=1)
    return float((p_xs2.T @ prob.distortion).min(axis=1).sum())


def _zero_rate_table(prob: SourceProblem, u_size: int) -> np.ndarray:
    return np.tile(_best_s2_guess(prob), (u_size, 1))


def rd_objective(prob: SourceProblem, u_given_xs1: ConditionalKernel,
                 xhat_map: DeterministicMap) -> tuple[float, float]:
    """(I(U;S1,X) - I(U;S2), E d(X, Xhat)) of p(x,s1,s2) p(u|x,s1) 1{xhat = g(u,s2)}."""
    if u_given_xs1.from_axes != (prob.x_alpha, prob.s1_alpha):
        raise ValueError("u_given_xs1 must condition on (x, s1)")
    u_alpha = u_given_xs1.to_axis
    if xhat_map.from_axes != (u_alpha, prob.s2_alpha) or xhat_map.to_axis != prob.xhat_alpha:
        raise ValueError("xhat_map must map (u, s2) to xhat")
    j = compose_joint(prob.source_joint, u_given_xs1)
    j = compose_joint(j, xhat_map.kernel())
    x, s1, s2, xh = prob.x_alpha.name, prob.s1_alpha.name, prob.s2_alpha.name, prob.xhat_alpha.name
    rate = mutual_information(j, u_alpha.name, (s1, x)) - mutual_information(j, u_alpha.name, s2)
    # j axes: x, s1, s2, u, xhat
    dist = float(np.einsum("abcde,ae->", j.mass, prob.distortion))
    return rate, dist


def _xlogx(p):
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def _softmax2(logits: np.ndarray) -> np.ndarray:
    z = np.exp2(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


class _Batch:
    """Rate, distortion and descent steps over a batch of (map, start) pairs.

    Rows r index (x, s1) pairs in C order.
    """

    def __init__(self, prob: SourceProblem, tables: np.ndarray, map_of: np.ndarray):
        p = prob.p_xs1s2
        nx, ns1, ns2 = p.shape
        self.w = p.sum(axis=2).reshape(-1)                            # p(x, s1)
        cond = np.where(self.w[:, None] > 0, p.reshape(-1, ns2), 0.0)
        self.C = cond / np.where(self.w > 0, self.w, 1.0)[:, None]     # p(s2 | x, s1)
        x_of_row = np.repeat(np.arange(nx), ns1)
        d = prob.distortion
        # dbar[m, r, u] = sum_t p(t | r) d(x_r, g_m(u, t))
        dxg = d[x_of_row[None, :, None, None], tables[:, None, :, :]]  # (M, R, U, S2)
        self.dbar = np.einsum("mrut,rt->mru", dxg, self.C)
        self.h_s2 = -_xlogx(p.sum(axis=(0, 1))).sum()
        self.map_of = map_of

    def _put(self, q):
        return np.einsum("r,bru,rt->but", self.w, q, self.C)

    def rate(self, q, idx):
        B = q.shape[0]
        h_ut = -_xlogx(self._put(q)).reshape(B, -1).sum(1)
        h_u_xs1 = -(self.w[None, :, None] * _xlogx(q)).reshape(B, -1).sum(1)
        return h_ut - self.h_s2 - h_u_xs1

    def dist(self, q, idx):
        return np.einsum("r,bru,bru->b", self.w, q, self.dbar[self.map_of[idx]])

    def log_posterior(self, q):
        """a[b, r, u] = sum_t p(t | r) log2 p(u | t), with p(u | t) induced by q."""
        P = self._put(q)
        tot = P.sum(axis=1, keepdims=True)
        post = P / np.where(tot > 0, tot, 1.0)
        return np.einsum("rt,but->bru", self.C, np.log2(np.maximum(post, LOG_FLOOR)))

    def constrained_step(self, a, dbar, budget, iters=60):
        """argmin over q of sum_r w_r sum_u q (log2 q - a) subject to dist <= budget.

        The minimizer is q = softmax2(a - nu * dbar) for the smallest nu >= 0
        meeting the budget.  The distortion falls as nu grows, with slope
        -ln2 * sum_r w_r Var_q(dbar); nu comes from Newton steps kept inside
        a bracket.
        """
        wq = self.w[None, :, None]
        q = _softmax2(a)
        val = np.einsum("bru,bru->b", wq * q, dbar)
        need = val > budget
        if not np.any(need):
            return q
        ab, db, bb = a[need], dbar[need], budget[need]
        n = len(ab)

        def at(nu):
            qn = _softmax2(ab - nu[:, None, None] * db)
            m1 = np.einsum("bru,bru->br", qn, db)
            m2 = np.einsum("bru,bru->br", qn, db * db)
            v = np.einsum("r,br->b", self.w, m1)
            slope = -np.log(2.0) * np.einsum("r,br->b", self.w, np.maximum(m2 - m1 * m1, 0.0))
            return qn, v, slope

        lo, hi = np.zeros(n), np.ones(n)
        for _ in range(60):
            _, v, _ = at(hi)
            over = v > bb
            if not np.any(over):
                break
            lo = np.where(over, hi, lo)
            hi = np.where(over, hi * 4.0, hi)
        eps = 1e-14 * np.maximum(1.0, np.abs(bb))
        # aim just inside the budget so rounding cannot push the result over it
        tb = bb - eps
        nu = 0.5 * (lo + hi)
        done = np.zeros(n, dtype=bool)
        for _ in range(iters):
            _, v, slope = at(nu)
            feas = v <= tb
            hi = np.where(feas, np.minimum(hi, nu), hi)
            lo = np.where(feas, lo, np.maximum(lo, nu))
            done |= ((v <= bb) & (np.abs(v - tb) <= eps)) | ((hi - lo) <= 1e-14 * hi)
            if np.all(done):
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = nu - (v - tb) / slope
            ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
            nu = np.where(done, nu, np.where(ok, newton, 0.5 * (lo + hi)))
        qb, v, _ = at(nu)
        use_hi = v > bb
        if np.any(use_hi):
            qb[use_hi] = at(hi)[0][use_hi]
        q[need] = qb
        return q


def _descend(batch: _Batch, q0: np.ndarray, *, lam: float | None = None,
             budget: np.ndarray | None = None, tol: float, max_iters: int):
    """Alternating minimization over p(u|x,s1) and the decoder posterior p(u|s2).

    The rate equals min over r(u|s2) of sum w q (log2 q - sum_t p(t|x,s1) log2 r(u|t)),
    so minimizing alternately in r (giving the induced posterior) and in q
    (a softmax, under the distortion budget or with the Lagrangian term
    lam * dist) never increases the objective.  Runs every element until
    its decrease falls below ``tol``; returns (q, iterations).
    """
    q = np.array(q0, dtype=float)
    B = len(q)
    idx = np.arange(B)

    def objective(qq, ii):
        r = batch.rate(qq, ii)
        return r if lam is None else r + lam * batch.dist(qq, ii)

    value = objective(q, idx)
    iters = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iters):
        ii = np.flatnonzero(active)
        if ii.size == 0:
            break
        a = batch.log_posterior(q[ii])
        dbar = batch.dbar[batch.map_of[ii]]
        if lam is None:
            qn = batch.constrained_step(a, dbar, budget[ii])
        else:
            qn = _softmax2(a - lam * dbar)
        vn = objective(qn, ii)
        q[ii] = qn
        drop = value[ii] - vn
        value[ii] = vn
        iters[ii] += 1
        active[ii[drop < tol]] = False
    return q, iters


def _clean_rows(q):
    q = np.maximum(q, 0.0)
    return q / q.sum(axis=-1, keepdims=True)


class _Search:
    """All (map, start) pairs for one problem and u_size."""

    def __init__(self, prob: SourceProblem, u_size: int, opts: SolverOptions):
        self.prob = prob
        self.opts = opts
        self.u_size = u_size
        self.rng = np.random.default_rng(opts.seed)
        nx, ns1 = prob.x_alpha.size, prob.s1_alpha.size
        self.mapset = candidate_maps(u_size, prob.s2_alpha.size, prob.xhat_alpha.size, opts, self.rng)
        self.full_tables = self.mapset.tables                       # (M, U, S2)
        self.tables = self.full_tables[:, :self.mapset.u_active]
        self.starts = starting_points(nx * ns1, self.mapset.u_active, opts.restarts, self.rng)
        self.iterations = 0

    def _chunks(self, per_elem):
        M, R = len(self.tables), len(self.starts)
        per_map = max(1, _CHUNK_FLOATS // max(1, per_elem * R))
        for lo in range(0, M, per_map):
            yield lo, min(M, lo + per_map)

    def lagrangian(self, lam: float, warm: np.ndarray | None = None, max_iters: int | None = None):
        """Minimize rate + lam * distortion for every (map, start); returns (q, rate, dist)."""
        R = len(self.starts)
        nrow, nu = self.starts.shape[1:]
        per_elem = nrow * nu * max(self.prob.s2_alpha.size, 2)
        qs, rs, ds = [], [], []
        for lo, hi in self._chunks(per_elem):
            m = hi - lo
            batch = _Batch(self.prob, self.tables[lo:hi], np.repeat(np.arange(m), R))
            q0 = np.tile(self.starts, (m, 1, 1))
            if warm is not None:
                # replace the last start of each map by the previous solution for that map
                q0.reshape(m, R, nrow, nu)[:, -1] = warm[lo:hi]
            q, it = _descend(batch, q0, lam=lam, tol=self.opts.tol_bits,
                             max_iters=self.opts.max_iters if max_iters is None else max_iters)
            self.iterations += int(it.sum())
            idx = np.arange(len(q0))
            qs.append(q.reshape(m, R, nrow, nu))
            rs.append(batch.rate(q, idx).reshape(m, R))
            ds.append(batch.dist(q, idx).reshape(m, R))
        return np.concatenate(qs), np.concatenate(rs), np.concatenate(ds)

    def constrained(self, map_idx: np.ndarray, q0: np.ndarray, budget: float, tol: float, iters: int):
        """Descent on the rate over {distortion <= budget} for given (map, start) pairs."""
        batch = _Batch(self.prob, self.tables[map_idx], np.arange(len(map_idx)))
        q0 = np.array(q0, dtype=float)
        budgets = np.full(len(map_idx), budget)
        q, it = _descend(batch, q0, budget=budgets, tol=tol, max_iters=iters)
        self.iterations += int(it.sum())
        all_idx = np.arange(len(map_idx))
        return q, batch.rate(q, all_idx), batch.dist(q, all_idx)

    def point(self, target_d, map_i, q, lam, extra=None) -> RdPoint:
        prob = self.prob
        u_alpha = Alphabet(U, self.u_size)
        rows = np.zeros((prob.x_alpha.size * prob.s1_alpha.size, self.u_size))
        rows[:, :q.shape[-1]] = _clean_rows(q)
        kernel = ConditionalKernel((prob.x_alpha, prob.s1_alpha), u_alpha,
                                   rows.reshape(prob.x_alpha.size, prob.s1_alpha.size, -1))
        g = DeterministicMap((u_alpha, prob.s2_alpha), prob.xhat_alpha, self.full_tables[map_i])
        rate, dist = rd_objective(prob, kernel, g)
        diag = {
            "iterations": self.iterations,
            "restarts": self.opts.restarts,
            "maps_searched": int(len(self.tables)),
            "map_space": int(self.mapset.total),
            "exhaustive": bool(self.mapset.exhaustive),
            "best_map_index": int(map_i),
            "notes": list(self.mapset.notes),
        }
        if extra:
            diag.update(extra)
        return RdPoint(float(target_d), rate, dist, kernel, g, lam, diag)


def _best(rates, dists, budget=np.inf):
    """Index of the lowest-rate entry with distortion within budget (ties: first)."""
    ok = dists <= budget
    if not np.any(ok):
        return None
    r = np.where(ok, np.round(rates, 12), np.inf)
    return np.unravel_index(int(np.argmin(r)), rates.shape)


def solve_rd_point(prob: SourceProblem, target_d: float, u_size: int | None = None,
                   opts: SolverOptions = SolverOptions(), *, method: str = "lagrangian",
                   bisection_steps: int = 5) -> RdPoint:
    """Lowest rate found with expected distortion <= target_d.

    The configuration returned is feasible, so ``rate`` upper-bounds R(D)
    for this ``u_size``.  ``method="lagrangian"`` brackets the multiplier
    whose minimizer meets the target and polishes on the constraint set;
    ``method="constrained"`` runs the constrained descent from every start.
    """
    if u_size is None:
        u_size = default_u_size(prob)
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    d_min, d_max = feasible_range(prob)
    if target_d < d_min - 1e-12:
        raise InfeasibleDistortion(target_d, d_min)
    budget = target_d + 1e-12
    search = _Search(prob, u_size, opts)
    if target_d >= zero_rate_distortion(prob):
        # rate >= 0 always (U - (X,S1) - S2 is Markov), so a constant U is optimal here
        q0 = np.zeros((prob.x_alpha.size * prob.s1_alpha.size, u_size))
        q0[:, 0] = 1.0
        search.full_tables = np.array([_zero_rate_table(prob, u_size)])
        return search.point(target_d, 0, q0, 0.0 if method == "lagrangian" else None,
                            {"method": "zero-rate", "d_min": d_min, "d_max": d_max})
    M, R = len(search.tables), len(search.starts)
    candidates = []     # (map index, q) pairs to polish
    lam_used = None
    bracket = {}

    if method == "lagrangian":
        def per_map(q, rates, dists, lam):
            lg = rates + lam * dists
            r = np.argmin(np.round(lg, 12), axis=1)
            return q[np.arange(M), r], lg[np.arange(M), r]

        lo_lam, hi_lam = 0.0, None
        # the bracket only needs rough minimizers; the polish below converges fully
        cap = min(opts.search_iters, opts.max_iters)
        q, rates, dists = search.lagrangian(0.0, max_iters=cap)
        lo_side = per_map(q, rates, dists, 0.0)
        hi_side = None
        hit = _best(rates, dists, budget)
        if hit is not None:
            hi_lam, hi_side = 0.0, lo_side
            candidates.append((hit[0], q[hit]))
        else:
            lam = 1.0
            warm = lo_side[0]
            while lam <= 1e6:
                q, rates, dists = search.lagrangian(lam, warm, cap)
                side = per_map(q, rates, dists, lam)
                arg = np.unravel_index(int(np.argmin(np.round(rates + lam * dists, 12))), rates.shape)
                hit = _best(rates, dists, budget)
                if hit is not None:
                    candidates.append((hit[0], q[hit]))
                if dists[arg] <= budget:
                    hi_lam, hi_side = lam, side
                    break
                lo_lam, lo_side = lam, side
                warm = side[0]
                lam *= 4.0
            if hi_side is not None:
                for _ in range(bisection_steps):
                    if hi_lam - lo_lam < 1e-6 * hi_lam:
                        break
                    mid = 0.5 * (lo_lam + hi_lam)
                    q, rates, dists = search.lagrangian(mid, hi_side[0], cap)
                    side = per_map(q, rates, dists, mid)
                    arg = np.unravel_index(int(np.argmin(np.round(rates + mid * dists, 12))), rates.shape)
                    hit = _best(rates, dists, budget)
                    if hit is not None:
                        candidates.append((hit[0], q[hit]))
                    # the overall Lagrangian minimizer decides the side of the bracket
                    if dists[arg] <= budget:
                        hi_lam, hi_side = mid, side
                    else:
                        lo_lam, lo_side = mid, side
        lam_used = hi_lam if hi_lam is not None else lo_lam
        # polish the best few maps from both ends of the bracket
        for side in (hi_side, lo_side):
            if side is None:
                continue
            qm, lg = side
            for m in np.argsort(np.round(lg, 12), kind="stable")[:max(1, opts.polish_top)]:
                candidates.append((m, qm[m]))
        bracket = {"lambda_bracket": [lo_lam, hi_lam]}
    elif method == "constrained":
        maps = np.repeat(np.arange(M), R)
        q0 = np.tile(search.starts, (M, 1, 1))
        q, rates, dists = search.constrained(maps, q0, budget, opts.tol_bits, opts.max_iters)
        # feasible points first, each group by rate
        order = np.lexsort((np.round(rates, 12), dists > budget))[:max(1, opts.polish_top)]
        candidates.extend((maps[k], q[k]) for k in order)
    else:
        raise ValueError(f"unknown method {method!r}")

    maps = np.array([c[0] for c in candidates])
    q0 = np.stack([c[1] for c in candidates])
    q, rates, dists = search.constrained(maps, q0, budget, opts.polish_tol_bits, opts.polish_iters)
    k = _best(rates, dists, budget)
    feasible = k is not None
    if not feasible:
        # only possible when u_size is too small to reach target_d
        log.warning("no configuration with distortion <= %.6g found (u_size=%d)", target_d, u_size)
        k = (int(np.argmin(dists)),)
    k = k[0]
    return search.point(target_d, maps[k], q[k], None if method == "constrained" else lam_used,
                        {"method": method, "d_min": d_min, "d_max": d_max, "feasible": feasible, **bracket})


def cardinality_gap(prob: SourceProblem, target_d: float, u_size: int,
                    opts: SolverOptions = SolverOptions()) -> float:
    """R(u_size) - R(u_size + 1) at ``target_d``; large gaps suggest u_size is too small.

    Infinite when ``target_d`` is out of reach with ``u_size`` symbols but
    reachable with one more.
    """
    small = solve_rd_point(prob, target_d, u_size, opts)
    big = solve_rd_point(prob, target_d, u_size + 1, opts)
    if not small.diagnostics.get("feasible", True) and big.diagnostics.get("feasible", True):
        return math.inf
    return small.rate - big.rate


def default_lambda_grid(n: int = 20, hi: float = 100.0) -> np.ndarray:
    """0 followed by n - 1 geometrically spaced multipliers up to ``hi``."""
    return np.concatenate([[0.0], np.geomspace(hi / 1000.0, hi, n - 1)])


def sweep_rd_curve(prob: SourceProblem, u_size: int | None = None, lambda_grid=None,
                   opts: SolverOptions = SolverOptions()) -> RdCurve:
    """Trace R(D) by minimizing rate + lam * distortion over ``lambda_grid``.

    Each multiplier contributes its best (map, start) pair; points dominated
    by another point (no lower in rate nor in distortion) are dropped and the
    rest are sorted by achieved distortion.
    """
    if u_size is None:
        u_size = default_u_size(prob)
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValueError("lambda_grid must be a nonempty list of finite values >= 0")
    d_min, d_max = feasible_range(prob)
    search = _Search(prob, u_size, opts)
    points = []
    for lam in grid:
        q, rates, dists = search.lagrangian(float(lam))
        k = np.unravel_index(int(np.argmin(np.round(rates + lam * dists, 12))), rates.shape)
        pt = search.point(0.0, k[0], q[k], float(lam), {"method": "sweep"})
        pt.target_d = pt.achieved_d
        points.append(pt)
    # compare at 1e-9 so points differing only by rounding count as duplicates
    key = [(round(p.achieved_d, 9), round(p.rate, 9)) for p in points]
    keep, seen = [], set()
    for i, p in enumerate(points):
        d_i, r_i = key[i]
        dominated = any(r <= r_i and d <= d_i and (r, d) != (r_i, d_i) for d, r in key)
        if not dominated and key[i] not in seen:
            seen.add(key[i])
            keep.append(p)
    keep.sort(key=lambda p: (p.achieved_d, p.rate))
    return RdCurve(keep, d_min, d_max)


@dataclass
class CurveCheck:
    monotone: bool
    convex: bool
    worst_rise: float           # largest rate increase between consecutive points
    worst_excess: float         # largest rate above a chord of two other points

    @property
    def passed(self) -> bool:
        return self.monotone and self.convex


def check_curve(curve: RdCurve, convex_tol: float = 1e-4, monotone_tol: float = 1e-6) -> CurveCheck:
    """Nonincreasing rates, and every point at or below the chord of any two others."""
    pr = curve.pairs()
    d, r = pr[:, 0], pr[:, 1]
    rise = float(np.max(np.diff(r), initial=0.0))
    excess = 0.0
    n = len(d)
    for i in range(n):
        for k in range(i + 2, n):
            if d[k] - d[i] <= 0:
                continue
            j = np.arange(i + 1, k)
            t = (d[j] - d[i]) / (d[k] - d[i])
            chord = (1 - t) * r[i] + t * r[k]
            excess = max(excess, float(np.max(r[j] - chord)))
    return CurveCheck(rise <= monotone_tol, excess <= convex_tol, rise, excess)
