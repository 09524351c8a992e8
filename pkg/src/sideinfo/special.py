"""The eight classical special cases (state known to nobody, the receiver or
decoder, the sender or encoder, or both), their reduction from the general
two-sided formulas, and the channel/source duality table.

Availability patterns are written as two-character strings: the first
character says whether the sender (encoder) sees the state, the second
whether the receiver (decoder) does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ascent import LOG_FLOOR, SolverOptions
from .capacity import solve_capacity
from .prob import Alphabet, ConditionalKernel, JointDist
from .problems import ChannelProblem, SourceProblem
from .ratedist import InfeasibleDistortion, solve_rd_point

PATTERNS = ("00", "01", "10", "11")
REDUCTION_TOL = 1e-3

# patterns whose dedicated formula is the general one with a constant state
SHARED_PATTERN = {"channel": "10", "source": "01"}

BA_TOL = 1e-9
BA_MAX_ITERS = 100_000


@dataclass(frozen=True)
class AvailabilityPattern:
    sender_knows: bool
    receiver_knows: bool

    @classmethod
    def parse(cls, code: "str | AvailabilityPattern") -> "AvailabilityPattern":
        if isinstance(code, AvailabilityPattern):
            return code
        if code not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}, got {code!r}")
        return cls(code[0] == "1", code[1] == "1")

    @property
    def code(self) -> str:
        return f"{int(self.sender_knows)}{int(self.receiver_knows)}"

    # source-side names for the same two flags
    @property
    def encoder_knows(self) -> bool:
        return self.sender_knows

    @property
    def decoder_knows(self) -> bool:
        return self.receiver_knows


# ---------------------------------------------------------------------------
# full state and degeneration

def channel_state(prob: ChannelProblem) -> tuple[np.ndarray, np.ndarray]:
    """Collapse (s1, s2) into one state S over the support of p(s1, s2).

    Returns p(s) and W[s, x, y] = p(y | x, s).
    """
    p = prob.p_s1s2
    pairs = np.argwhere(p > 0)
    p_s = p[pairs[:, 0], pairs[:, 1]]
    W = np.stack([prob.kernel[:, a, b, :] for a, b in pairs])
    return p_s, W


def source_state(prob: SourceProblem) -> np.ndarray:
    """Collapse (s1, s2) into one state S; returns p(x, s) over the state support."""
    p = prob.p_xs1s2
    p_s12 = p.sum(axis=0)
    pairs = np.argwhere(p_s12 > 0)
    return np.stack([p[:, a, b] for a, b in pairs], axis=1)


def degenerate(prob, pattern):
    """Rebuild ``prob`` with its full state S visible only where ``pattern`` says.

    The full state is the pair (s1, s2) restricted to its support.  A side that
    does not see the state gets a one-symbol alphabet; the channel or source
    law is re-marginalized accordingly.
    """
    pat = AvailabilityPattern.parse(pattern)
    if isinstance(prob, ChannelProblem):
        p_s, W = channel_state(prob)
        ns, nx, ny = W.shape
        n1 = ns if pat.sender_knows else 1
        n2 = ns if pat.receiver_knows else 1
        p12 = np.zeros((n1, n2))
        k = np.zeros((nx, n1, n2, ny))
        for s in range(ns):
            a = s if pat.sender_knows else 0
            b = s if pat.receiver_knows else 0
            p12[a, b] += p_s[s]
            k[:, a, b, :] += p_s[s] * W[s]
        # kernel rows: average over the states merged into each (a, b) cell
        with np.errstate(invalid="ignore", divide="ignore"):
            k = np.where(p12[None, :, :, None] > 0, k / p12[None, :, :, None], 1.0 / ny)
        return _channel_like(prob, p12, k)
    if isinstance(prob, SourceProblem):
        p_xs = source_state(prob)
        nx, ns = p_xs.shape
        n1 = ns if pat.encoder_knows else 1
        n2 = ns if pat.decoder_knows else 1
        p = np.zeros((nx, n1, n2))
        for s in range(ns):
            p[:, s if pat.encoder_knows else 0, s if pat.decoder_knows else 0] += p_xs[:, s]
        return _source_like(prob, p)
    raise TypeError(f"expected ChannelProblem or SourceProblem, got {type(prob).__name__}")


def _channel_like(prob: ChannelProblem, p12, k) -> ChannelProblem:
    s1 = Alphabet(prob.s1_alpha.name, p12.shape[0])
    s2 = Alphabet(prob.s2_alpha.name, p12.shape[1])
    return ChannelProblem(prob.x_alpha, prob.y_alpha, s1, s2, JointDist((s1, s2), p12),
                          ConditionalKernel((prob.x_alpha, s1, s2), prob.y_alpha, k))


def _source_like(prob: SourceProblem, p) -> SourceProblem:
    s1 = Alphabet(prob.s1_alpha.name, p.shape[1])
    s2 = Alphabet(prob.s2_alpha.name, p.shape[2])
    return SourceProblem(prob.x_alpha, prob.xhat_alpha, s1, s2,
                         JointDist((prob.x_alpha, s1, s2), p), prob.distortion)


# ---------------------------------------------------------------------------
# alternating optimization for the classical formulas

def _mi_bits(p_x: np.ndarray, W: np.ndarray) -> float:
    joint = p_x[:, None] * W
    q_y = joint.sum(0)
    denom = p_x[:, None] * q_y[None, :]
    pos = joint > 0
    return float(np.sum(joint[pos] * np.log2(joint[pos] / denom[pos])))


def blahut_arimoto(W: np.ndarray, tol: float = BA_TOL, max_iters: int = BA_MAX_ITERS) -> tuple[float, np.ndarray]:
    """Capacity of the channel ``W[x, y]`` and a capacity-achieving input law.

    Stops when the gap between the standard upper bound max_x D(W_x || q)
    and lower bound log sum_x p(x) 2^{D(W_x || q)} falls below ``tol``.
    """
    W = np.asarray(W, dtype=float)
    nx = W.shape[0]
    p = np.full(nx, 1.0 / nx)
    logW = np.log2(np.where(W > 0, W, 1.0))
    for _ in range(max_iters):
        q = p @ W
        logq = np.log2(np.where(q > 0, q, 1.0))
        D = np.sum(W * (logW - logq[None, :]), axis=1)
        upper = D.max()
        weights = p * np.exp2(D - upper)
        lower = upper + np.log2(weights.sum())
        p = weights / weights.sum()
        if upper - lower < tol:
            break
    return max(_mi_bits(p, W), 0.0), p


def _ba_rd_slope(p_x, d, beta, tol=BA_TOL * 1e-3, max_iters=BA_MAX_ITERS):
    """Rate-distortion iteration at slope ``beta``; returns (D, R).

    Stops when the gap between the upper and lower bounds on the
    Lagrangian, max log2 c - sum r log2 c, is below ``tol``.
    """
    nxh = d.shape[1]
    r = np.full(nxh, 1.0 / nxh)
    # subtracting the row minimum keeps the exponentials finite for huge beta
    expo = np.exp2(-beta * (d - d.min(axis=1, keepdims=True)))
    for _ in range(int(max_iters)):
        z = expo @ r
        c = (p_x / z) @ expo
        pos = r > 0
        logc = np.log2(np.maximum(c, LOG_FLOOR))
        if logc.max() - float(r[pos] @ logc[pos]) < tol:
            break
        r = r * c
        r /= r.sum()
    Q = r[None, :] * expo
    Q /= Q.sum(axis=1, keepdims=True)
    return float(np.sum(p_x[:, None] * Q * d)), max(_mi_bits(p_x, Q), 0.0)


def rate_distortion(p_xs: np.ndarray, d: np.ndarray, D: float) -> float:
    """min sum_s p(s) I(X; Xhat | S=s) subject to expected distortion <= D.

    ``p_xs[x, s]`` is the joint law; a single column gives the classical
    rate-distortion function.  States share one slope (the optimal
    allocation of the distortion budget for convex per-state curves), and
    the slope is bisected until the bracketing points are within 1e-12 in
    distortion; the rate is interpolated between them.
    """
    p_xs = np.asarray(p_xs, dtype=float)
    d = np.asarray(d, dtype=float)
    p_s = p_xs.sum(axis=0)
    keep = p_s > 0
    p_s, conds = p_s[keep], (p_xs[:, keep] / p_s[keep]).T
    d_min = float(sum(w * (c @ d.min(axis=1)) for w, c in zip(p_s, conds)))
    d_zero = float(sum(w * (c @ d).min() for w, c in zip(p_s, conds)))
    if D < d_min - 1e-12:
        raise InfeasibleDistortion(D, d_min)
    if D >= d_zero:
        return 0.0
    def at(beta):
        Ds, Rs = 0.0, 0.0
        for w, c in zip(p_s, conds):
            di, ri = _ba_rd_slope(c, d, beta)
            Ds += w * di
            Rs += w * ri
        return Ds, Rs

    # distortion falls as the slope grows; bracket the target
    lo, hi = 0.0, 1.0
    D_lo, R_lo = d_zero, 0.0
    D_hi, R_hi = at(hi)
    while D_hi > D and hi < 2.0 ** 40:
        lo, D_lo, R_lo = hi, D_hi, R_hi
        hi *= 2.0
        D_hi, R_hi = at(hi)
    if D_hi > D:
        # only reachable for D within rounding of d_min
        return R_hi
    for _ in range(200):
        if D_lo - D_hi < 1e-12 or hi - lo < 1e-13 * hi:
            break
        mid = 0.5 * (lo + hi)
        D_m, R_m = at(mid)
        if D_m > D:
            lo, D_lo, R_lo = mid, D_m, R_m
        else:
            hi, D_hi, R_hi = mid, D_m, R_m
    if D_lo - D_hi <= 0:
        return R_hi
    t = (D - D_hi) / (D_lo - D_hi)
    return float(max(R_hi + t * (R_lo - R_hi), 0.0))


# ---------------------------------------------------------------------------
# dedicated formulas

def dedicated_capacity(prob: ChannelProblem, pattern, *, u_size: int | None = None,
                       opts: SolverOptions = SolverOptions()) -> float:
    """Capacity under ``pattern`` from the classical formula for that case."""
    pat = AvailabilityPattern.parse(pattern).code
    p_s, W = channel_state(prob)
    if pat == "00":
        return blahut_arimoto(np.einsum("s,sxy->xy", p_s, W))[0]
    if pat == "01":
        # receiver sees S: capacity of the channel X -> (Y, S)
        lifted = np.einsum("s,sxy->xys", p_s, W).reshape(W.shape[1], -1)
        return blahut_arimoto(lifted)[0]
    if pat == "11":
        return float(sum(ps * blahut_arimoto(Ws)[0] for ps, Ws in zip(p_s, W)))
    return solve_capacity(degenerate(prob, "10"), u_size, opts).value


def dedicated_rd(prob: SourceProblem, pattern, target_d: float, *, u_size: int | None = None,
                 opts: SolverOptions = SolverOptions(), method: str = "lagrangian") -> float:
    """Rate distortion under ``pattern`` from the classical formula for that case.

    Encoder-only state reuses the no-state computation: the two formulas
    coincide.
    """
    pat = AvailabilityPattern.parse(pattern).code
    p_xs = source_state(prob)
    if pat in ("00", "10"):
        return rate_distortion(p_xs.sum(axis=1, keepdims=True), prob.distortion, target_d)
    if pat == "11":
        return rate_distortion(p_xs, prob.distortion, target_d)
    return solve_rd_point(degenerate(prob, "01"), target_d, u_size, opts, method=method).rate


@dataclass
class ReductionReport:
    kind: str
    pattern: str
    general: float
    dedicated: float
    target_d: float | None = None
    tol: float = REDUCTION_TOL
    # the dedicated formula is the general solver on the same reduced problem
    shared_path: bool = False

    @property
    def diff(self) -> float:
        return abs(self.general - self.dedicated)

    @property
    def passed(self) -> bool:
        return self.diff <= self.tol


class SolverFailure(RuntimeError):
    def __init__(self, side: str, cause: Exception):
        super().__init__(f"{side} computation failed: {cause}")
        self.side = side
        self.cause = cause


def verify_reduction(prob, pattern, target_d: float | None = None, *, u_size: int | None = None,
                     opts: SolverOptions = SolverOptions(), method: str = "lagrangian") -> ReductionReport:
    """Compare the general formula on the degenerated problem with the dedicated one."""
    pat = AvailabilityPattern.parse(pattern).code
    reduced = degenerate(prob, pat)
    if isinstance(prob, ChannelProblem):
        try:
            general = solve_capacity(reduced, u_size, opts).value
        except Exception as exc:
            raise SolverFailure("general", exc) from exc
        if pat == SHARED_PATTERN["channel"]:
            return ReductionReport("channel", pat, general, general, shared_path=True)
        try:
            dedicated = dedicated_capacity(prob, pat, u_size=u_size, opts=opts)
        except Exception as exc:
            raise SolverFailure("dedicated", exc) from exc
        return ReductionReport("channel", pat, general, dedicated)
    if target_d is None:
        raise ValueError("source reductions need a target distortion")
    try:
        general = solve_rd_point(reduced, target_d, u_size, opts, method=method).rate
    except InfeasibleDistortion:
        raise
    except Exception as exc:
        raise SolverFailure("general", exc) from exc
    if pat == SHARED_PATTERN["source"]:
        return ReductionReport("source", pat, general, general, target_d, shared_path=True)
    try:
        dedicated = dedicated_rd(prob, pat, target_d, u_size=u_size, opts=opts, method=method)
    except InfeasibleDistortion:
        raise
    except Exception as exc:
        raise SolverFailure("dedicated", exc) from exc
    return ReductionReport("source", pat, general, dedicated, target_d)


# ---------------------------------------------------------------------------
# duality

# (channel side, source side), following the transformation table
ROLE_MAP: tuple[tuple[str, str], ...] = (
    ("C", "R(D)"),
    ("max", "min"),
    ("Y", "X"),
    ("X", "Xhat"),
    ("S1", "S2"),
    ("S2", "S1"),
    ("U", "U"),
)

SYMBOL_ROLES = (
    ("Y", "received symbol", "X", "source"),
    ("X", "transmitted symbol", "Xhat", "estimation"),
    ("S", "state", "S", "state"),
    ("U", "auxiliary", "U", "auxiliary"),
)

PATTERN_MAP = {"00": "00", "11": "11", "10": "01", "01": "10"}


@dataclass(frozen=True)
class DualTemplate:
    kind: str                       # "channel" or "source"
    direction: str                  # "max" or "min"
    outer_pair: tuple[str, str]     # variables in the positive information term
    subtract_var: str               # variable in the negative term
    role_map: tuple[tuple[str, str], ...] = ROLE_MAP

    def formula(self) -> str:
        value = "C" if self.kind == "channel" else "R(D)"
        return f"{value} = {self.direction} [I(U; {', '.join(self.outer_pair)}) - I(U; {self.subtract_var})]"

    def dual(self) -> "DualTemplate":
        """Image of this template under the role map."""
        if self.kind == "channel":
            fwd, kind = dict(self.role_map), "source"
        else:
            fwd, kind = {b: a for a, b in self.role_map}, "channel"
        return DualTemplate(kind, fwd[self.direction], tuple(fwd[v] for v in self.outer_pair),
                            fwd[self.subtract_var], self.role_map)


def dual_template_of(kind: str) -> DualTemplate:
    if kind == "channel":
        return DualTemplate("channel", "max", ("S2", "Y"), "S1")
    if kind == "source":
        return DualTemplate("source", "min", ("S1", "X"), "S2")
    raise ValueError(f"kind must be 'channel' or 'source', got {kind!r}")


def dual_pattern(pattern: str) -> str:
    """Availability pattern of the dual problem (sender and receiver swap roles)."""
    return PATTERN_MAP[AvailabilityPattern.parse(pattern).code]
