"""Capacity of a channel with state known partly at the sender (S1) and partly
at the receiver (S2):

    C = max over p(u|s1) and x = f(u, s1) of  I(U; S2, Y) - I(U; S1).

For a fixed map f the objective is evaluated in the form
H(S2,Y) - H(U,S2,Y) + H(U|S1), which only needs the (u, s2, y) marginal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ascent import LOG_FLOOR, SolverOptions, ascend, starting_points
from .maps import candidate_maps, enumerate_maps  # noqa: F401  (re-exported)
from .prob import (Alphabet, ConditionalKernel, DeterministicMap, compose_joint,
                   mutual_information)
from .problems import ChannelProblem

log = logging.getLogger(__name__)

U = "u"
INTERIOR = 1e-15
# batch elements per vectorized chunk, bounded by the (S1,U,S2,Y) block size
_CHUNK_FLOATS = 4_000_000


@dataclass
class CapacityResult:
    value: float
    u_size: int
    u_given_s1: ConditionalKernel
    x_map: DeterministicMap
    diagnostics: dict = field(default_factory=dict)


def default_u_size(prob: ChannelProblem) -> int:
    return prob.x_alpha.size * prob.s1_alpha.size + 1


def _u_alpha(u_size: int) -> Alphabet:
    return Alphabet(U, u_size)


def objective(prob: ChannelProblem, u_given_s1: ConditionalKernel, x_map: DeterministicMap) -> float:
    """I(U; S2, Y) - I(U; S1) of the joint p(s1,s2) p(u|s1) 1{x = f(u,s1)} p(y|x,s1,s2)."""
    if u_given_s1.from_axes != (prob.s1_alpha,):
        raise ValueError("u_given_s1 must condition on s1 only")
    u_alpha = u_given_s1.to_axis
    if x_map.from_axes != (u_alpha, prob.s1_alpha) or x_map.to_axis != prob.x_alpha:
        raise ValueError("x_map must map (u, s1) to x")
    j = compose_joint(prob.state_joint, u_given_s1)
    j = compose_joint(j, x_map.kernel())
    j = compose_joint(j, prob.channel)
    y, s1, s2 = prob.y_alpha.name, prob.s1_alpha.name, prob.s2_alpha.name
    return mutual_information(j, u_alpha.name, (s2, y)) - mutual_information(j, u_alpha.name, s1)


def _xlogx(p):
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


class _Batch:
    """Vectorized objective and gradient for a batch of (map, start) pairs."""

    def __init__(self, prob: ChannelProblem, tables: np.ndarray, map_of: np.ndarray,
                 frozen: np.ndarray | None = None):
        p_st = prob.p_s1s2
        W = prob.kernel                                    # (X, S1, S2, Y)
        ns1 = p_st.shape[0]
        s_idx = np.arange(ns1)
        # A[m, s1, u, s2, y] = p(s1, s2) W(y | f_m(u, s1), s1, s2)
        Wf = W[tables, s_idx[None, None, :]]              # (M, U, S1, S2, Y)
        self.A = np.transpose(Wf, (0, 2, 1, 3, 4)) * p_st[None, :, None, :, None]
        self.p_s1 = p_st.sum(axis=1)
        self.map_of = map_of
        # (B, U) mask of labels held at zero mass (face-restricted polishing)
        self.frozen = frozen

    def _marg(self, q, idx):
        A = self.A[self.map_of[idx]]
        P = np.einsum("bsu,bsuty->buty", q, A)
        return A, P

    def value(self, q, idx):
        _, P = self._marg(q, idx)
        B = q.shape[0]
        h_uty = -_xlogx(P).reshape(B, -1).sum(1)
        h_ty = -_xlogx(P.sum(1)).reshape(B, -1).sum(1)
        h_u_s1 = -(self.p_s1[None, :, None] * _xlogx(q)).reshape(B, -1).sum(1)
        return h_ty - h_uty + h_u_s1

    def grad(self, q, idx):
        empty = ~np.any(q > 0, axis=1)                     # (b, u): label unused in every row
        # evaluate at a slightly interior point so log P(u,t,y) and log q stay paired
        qe = np.maximum(q, INTERIOR)
        A, P = self._marg(qe, idx)
        log_pty = np.log2(np.maximum(P.sum(1, keepdims=True), LOG_FLOOR))
        lp = np.log2(np.maximum(P, LOG_FLOOR)) - log_pty
        g = np.einsum("bsuty,buty->bsu", A, lp)
        g -= self.p_s1[None, :, None] * np.log2(qe)
        if np.any(empty):
            # one-sided derivative of opening an unused label from a single row:
            # sum_{t,y} A log(A / P(t,y)); the floored logs above would overstate it
            g_new = np.einsum("bsuty,bsuty->bsu", A,
                              np.log2(np.maximum(A, LOG_FLOOR)) - log_pty[:, :, None].transpose(0, 2, 1, 3, 4))
            g = np.where(empty[:, None, :], g_new, g)
        if self.frozen is not None:
            g = np.where(self.frozen[idx][:, None, :], -1e12, g)
        return g


def _merge_equivalent(q: np.ndarray, A_m: np.ndarray) -> np.ndarray:
    """Pool the mass of labels that induce the same channel behaviour.

    Labels u, u' with A[:, u] == A[:, u'] are interchangeable; merging them is
    a function of U that leaves (S1, S2, Y) untouched, so I(U;S2,Y) - I(U;S1)
    cannot decrease.  Gradient steps approach this merge only slowly.
    """
    q = q.copy()
    nu = q.shape[-1]
    first: dict[bytes, int] = {}
    for u in range(nu):
        key = np.round(A_m[:, u], 15).tobytes()
        if key in first:
            q[:, first[key]] += q[:, u]
            q[:, u] = 0.0
        else:
            first[key] = u
    return q


def _run_batches(prob, tables, starts, opts, rng, tol, iters, frozen=None):
    """Ascend every (map, start) pair; returns per-pair q, value, iterations, perturbations."""
    M, R = len(tables), len(starts)
    ns1, nu = starts.shape[1:]
    block = ns1 * nu * prob.s2_alpha.size * prob.y_alpha.size
    maps_per_chunk = max(1, _CHUNK_FLOATS // max(1, block * R))
    qs, vals, its, perts = [], [], [], []
    for lo in range(0, M, maps_per_chunk):
        chunk = tables[lo:lo + maps_per_chunk]
        m = len(chunk)
        batch = _Batch(prob, chunk, np.repeat(np.arange(m), R),
                       None if frozen is None else np.tile(frozen, (m, 1)))
        q0 = np.tile(starts, (m, 1, 1))
        res = ascend(batch.value, batch.grad, q0, batch.p_s1, tol=tol, max_iters=iters, rng=rng)
        qs.append(res.q.reshape(m, R, ns1, nu))
        vals.append(res.value.reshape(m, R))
        its.append(res.iterations.reshape(m, R))
        perts.append(res.perturbations.reshape(m, R))
    return (np.concatenate(qs), np.concatenate(vals), np.concatenate(its), np.concatenate(perts))


def inner_ascent(prob: ChannelProblem, x_map: DeterministicMap, start: ConditionalKernel,
                 opts: SolverOptions = SolverOptions()) -> tuple[ConditionalKernel, float]:
    """Projected-gradient ascent on p(u|s1) for one fixed map, from one start."""
    if start.from_axes != (prob.s1_alpha,):
        raise ValueError("start must be a kernel from s1 to u")
    if x_map.from_axes != (start.to_axis, prob.s1_alpha) or x_map.to_axis != prob.x_alpha:
        raise ValueError("x_map must map (u, s1) to x")
    rng = np.random.default_rng(opts.seed)
    batch = _Batch(prob, x_map.table[None], np.zeros(1, dtype=np.int64))
    res = ascend(batch.value, batch.grad, np.array(start.rows)[None], batch.p_s1,
                 tol=opts.tol_bits, max_iters=opts.max_iters, rng=rng)
    kernel = ConditionalKernel(start.from_axes, start.to_axis, _clean_rows(res.q[0]))
    inner_ascent.last_diagnostics = {"iterations": int(res.iterations[0]),
                                     "perturbations": int(res.perturbations[0])}
    return kernel, float(batch.value(kernel.rows[None], np.zeros(1, dtype=np.int64))[0])


inner_ascent.last_diagnostics = {}


def _clean_rows(q: np.ndarray) -> np.ndarray:
    q = np.maximum(q, 0.0)
    return q / q.sum(axis=-1, keepdims=True)


def solve_capacity(prob: ChannelProblem, u_size: int | None = None,
                   opts: SolverOptions = SolverOptions(), *,
                   canonical_maps: bool = True) -> CapacityResult:
    """Best objective found over deterministic maps and multi-start ascent.

    The returned configuration is feasible, so ``value`` is a lower bound on
    the capacity for this ``u_size``.
    """
    if u_size is None:
        u_size = default_u_size(prob)
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    rng = np.random.default_rng(opts.seed)
    ns1, nx = prob.s1_alpha.size, prob.x_alpha.size
    mapset = candidate_maps(u_size, ns1, nx, opts, rng, canonical=canonical_maps)
    full_tables = mapset.tables                           # (M, U, S1)
    ua = mapset.u_active
    tables = full_tables[:, :ua]
    starts = starting_points(ns1, ua, opts.restarts, rng)

    q, vals, its, perts = _run_batches(prob, tables, starts, opts, rng, opts.tol_bits, opts.max_iters)

    # second, stricter pass on the best few (map, start) pairs
    flat = vals.ravel()
    order = np.argsort(-flat, kind="stable")
    top = order[:max(1, opts.polish_top)]
    mi, ri = np.unravel_index(top, vals.shape)
    pol_q, pol_v, pol_it, pol_pt = [], [], [], []
    for m, r in zip(mi, ri):
        A_m = _Batch(prob, tables[m:m + 1], np.zeros(1, dtype=np.int64)).A[0]
        q_start = _merge_equivalent(q[m, r], A_m)
        frozen = ~np.any(q_start > 0, axis=0)[None]
        res_q, res_v, res_i, res_p = _run_batches(prob, tables[m:m + 1], q_start[None], opts, rng,
                                                  opts.polish_tol_bits, opts.polish_iters, frozen)
        pol_q.append(res_q[0, 0]); pol_v.append(res_v[0, 0])
        pol_it.append(res_i[0, 0]); pol_pt.append(res_p[0, 0])
    pol_v = np.array(pol_v)
    # highest value wins; ties go to the earliest (map, start) in enumeration order
    best = max(range(len(top)), key=lambda k: (round(pol_v[k], 12), -top[k]))
    m_best, r_best = mi[best], ri[best]

    u_alpha = _u_alpha(u_size)
    q_best = np.zeros((ns1, u_size))
    q_best[:, :ua] = _clean_rows(pol_q[best])
    kernel = ConditionalKernel((prob.s1_alpha,), u_alpha, q_best)
    x_map = DeterministicMap((u_alpha, prob.s1_alpha), prob.x_alpha, full_tables[m_best])
    value = objective(prob, kernel, x_map)
    per_restart = vals.max(axis=0)
    diagnostics = {
        "iterations": int(its.sum() + np.sum(pol_it)),
        "restarts": int(opts.restarts),
        "perturbation_restarts": int(perts.sum() + np.sum(pol_pt)),
        "best_per_restart": [float(v) for v in per_restart],
        "maps_searched": int(len(tables)),
        "map_space": int(mapset.total),
        "exhaustive": bool(mapset.exhaustive),
        "best_map_index": int(m_best),
        "best_restart": int(r_best),
        "notes": list(mapset.notes),
    }
    if not mapset.exhaustive:
        log.info("capacity search sampled maps: %s", "; ".join(mapset.notes))
    return CapacityResult(value, u_size, kernel, x_map, diagnostics)


def cardinality_gap(prob: ChannelProblem, u_size: int, opts: SolverOptions = SolverOptions()) -> float:
    """value(u_size + 1) - value(u_size); large gaps suggest u_size is too small."""
    return solve_capacity(prob, u_size + 1, opts).value - solve_capacity(prob, u_size, opts).value
