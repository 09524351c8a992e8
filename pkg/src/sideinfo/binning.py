"""Random binning codes at small blocklength for channels and sources with
two-sided state, and Monte Carlo estimates of their error rate and
distortion.

Typicality is strong typicality: every joint symbol's empirical frequency is
within epsilon of its probability, and symbols of probability zero never
occur.  Encoders and decoders scan codewords in ascending index order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ascent import BudgetError
from .prob import (ConditionalKernel, DeterministicMap, Dist, JointDist, compose_joint, marginalize,
                   mutual_information)
from .problems import ChannelProblem, SourceProblem

# the typicality test allows this much floating-point slack on epsilon
_TYP_SLACK = 1e-12
DEFAULT_MAX_SYMBOLS = 50_000_000


class CodeTooLarge(BudgetError):
    """Codebook would exceed the configured memory cap."""


@dataclass(frozen=True)
class TypicalityParams:
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


def _typical_mask(codewords: np.ndarray, others: list[np.ndarray], reference: np.ndarray,
                  epsilon: float) -> np.ndarray:
    """Typicality of (codeword_k, *others) for every row k of ``codewords``.

    ``reference`` has the codeword alphabet on axis 0 and the others after it.
    """
    K, n = codewords.shape
    size = reference.size
    rest = np.zeros(n, dtype=np.int64)
    for seq, dim in zip(others, reference.shape[1:]):
        rest = rest * dim + seq
    flat = codewords * (size // reference.shape[0]) + rest[None, :]
    flat = flat + (np.arange(K, dtype=np.int64) * size)[:, None]
    freq = np.bincount(flat.ravel(), minlength=K * size).reshape(K, size) / n
    ref = reference.ravel()
    close = np.all(np.abs(freq - ref) <= epsilon + _TYP_SLACK, axis=1)
    support = ~np.any((freq > 0) & (ref == 0), axis=1)
    return close & support


def is_typical(sequences, reference: JointDist, params: TypicalityParams) -> bool:
    """Strong joint typicality of aligned sequences, one per reference axis."""
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    if len(seqs) != len(reference.axes):
        raise ValueError(f"{len(seqs)} sequences for a reference over {len(reference.axes)} axes")
    n = len(seqs[0])
    if n == 0 or any(len(s) != n for s in seqs):
        raise ValueError("sequences must be nonempty and of equal length")
    for s, ax in zip(seqs, reference.axes):
        if s.min() < 0 or s.max() >= ax.size:
            raise ValueError(f"symbol outside alphabet {ax.name!r}")
    return bool(_typical_mask(seqs[0][None, :], seqs[1:], reference.mass, params.epsilon)[0])


def _count(exponent_bits: float, n: int) -> int:
    """floor(2^(n * exponent)), at least 1."""
    e = n * exponent_bits
    if e > 62:
        return 2 ** 62
    return max(1, math.floor(2.0 ** e + 1e-9))


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def _draw(rng: np.random.Generator, p: np.ndarray, size) -> np.ndarray:
    """Symbols drawn from ``p`` by inverse CDF; deterministic given the generator."""
    cdf = np.cumsum(p.ravel())
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(idx, p.size - 1)


def _guard(K: int, n: int, max_symbols: int) -> None:
    if K * n > max_symbols:
        raise CodeTooLarge(f"codebook of {K} words x n={n} exceeds the cap of {max_symbols} symbols")


@dataclass
class ChannelCode:
    n: int
    num_codewords: int
    num_bins: int
    codewords: np.ndarray = field(repr=False)       # (K, n) symbols of U
    bin_of: np.ndarray = field(repr=False)          # (K,)
    u_dist: Dist
    x_map: DeterministicMap
    seed: int
    enc_ref: JointDist = field(repr=False)          # (u, s1)
    dec_ref: JointDist = field(repr=False)          # (u, y, s2)
    i_u_ys2: float = 0.0
    epsilon: float = 0.1                            # encoder typicality


@dataclass
class SourceCode:
    n: int
    num_codewords: int
    num_bins: int
    codewords: np.ndarray = field(repr=False)
    bin_of: np.ndarray = field(repr=False)
    u_dist: Dist
    xhat_map: DeterministicMap
    seed: int
    enc_ref: JointDist = field(repr=False)          # (u, x, s1)
    dec_ref: JointDist = field(repr=False)          # (u, s2)
    i_u_xs1: float = 0.0
    i_u_s2: float = 0.0
    epsilon: float = 0.1


@dataclass(frozen=True)
class EncFail:
    event: str = "E1"


@dataclass(frozen=True)
class DecFail:
    reason: str             # "none" or "ambiguous"


def _channel_joint(prob: ChannelProblem, u_given_s1: ConditionalKernel, x_map: DeterministicMap) -> JointDist:
    """Joint over (s1, s2, u, x, y) for the operating point."""
    j = compose_joint(prob.state_joint, u_given_s1)
    j = compose_joint(j, x_map.kernel())
    return compose_joint(j, prob.channel)


def build_channel_code(prob: ChannelProblem, rate_R: float, point, n: int,
                       params: TypicalityParams = TypicalityParams(), seed: int = 0,
                       *, max_symbols: int = DEFAULT_MAX_SYMBOLS) -> ChannelCode:
    """Codebook of floor(2^{n(I(U;Y,S2) - 2eps)}) words in floor(2^{n(R - 4eps)}) bins.

    ``point`` carries ``u_given_s1`` and ``x_map``, e.g. a CapacityResult.
    """
    if not rate_R > 0:
        raise ValueError("rate_R must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    j = _channel_joint(prob, point.u_given_s1, point.x_map)
    u, s1, s2, y = point.u_given_s1.to_axis, prob.s1_alpha, prob.s2_alpha, prob.y_alpha
    info = mutual_information(j, u.name, (y.name, s2.name))
    eps = params.epsilon
    K = _count(info - 2 * eps, n)
    bins = _count(rate_R - 4 * eps, n)
    _guard(K, n, max_symbols)
    u_dist = marginalize(j, [u.name]).to_dist()
    rng = np.random.default_rng(seed)
    codewords = _draw(rng, u_dist.mass, (K, n))
    bin_of = rng.integers(0, bins, size=K)
    return ChannelCode(n, K, bins, codewords, bin_of, u_dist, point.x_map, seed,
                       marginalize(j, [u.name, s1.name]), marginalize(j, [u.name, y.name, s2.name]), info, eps)


def channel_encode(code: ChannelCode, message_bin: int, s1_seq) -> np.ndarray | EncFail:
    """x^n from the first codeword in the bin that is typical with s1^n."""
    if not 0 <= message_bin < code.num_bins:
        raise ValueError(f"message bin {message_bin} outside [0, {code.num_bins})")
    s1_seq = np.asarray(s1_seq, dtype=np.int64)
    if len(s1_seq) != code.n:
        raise ValueError("s1 sequence length differs from n")
    members = np.flatnonzero(code.bin_of == message_bin)
    if members.size == 0:
        return EncFail()
    ok = _typical_mask(code.codewords[members], [s1_seq], code.enc_ref.mass, code.epsilon)
    if not np.any(ok):
        return EncFail()
    u = code.codewords[members[np.argmax(ok)]]
    return code.x_map.table[u, s1_seq]


def channel_decode(code: ChannelCode, y_seq, s2_seq, params: TypicalityParams) -> int | DecFail:
    """Bin of the unique codeword typical with (y^n, s2^n)."""
    y_seq = np.asarray(y_seq, dtype=np.int64)
    s2_seq = np.asarray(s2_seq, dtype=np.int64)
    if len(y_seq) != code.n or len(s2_seq) != code.n:
        raise ValueError("sequence length differs from n")
    ok = np.flatnonzero(_typical_mask(code.codewords, [y_seq, s2_seq], code.dec_ref.mass, params.epsilon))
    if ok.size == 0:
        return DecFail("none")
    if ok.size > 1:
        return DecFail("ambiguous")
    return int(code.bin_of[ok[0]])


def build_source_code(prob: SourceProblem, point, n: int, params: TypicalityParams = TypicalityParams(),
                      seed: int = 0, *, bin_rate: float | None = None,
                      max_symbols: int = DEFAULT_MAX_SYMBOLS) -> SourceCode:
    """Codebook of floor(2^{n R1}) words, R1 = I(U;X,S1) + eps, in floor(2^{n R}) bins.

    R = I(U;X,S1) - I(U;S2) + 3 eps unless ``bin_rate`` is given.  ``point``
    carries ``u_given_xs1`` and ``xhat_map``, e.g. an RdPoint.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kern = point.u_given_xs1
    j = compose_joint(prob.source_joint, kern)
    u, x, s1, s2 = kern.to_axis, prob.x_alpha, prob.s1_alpha, prob.s2_alpha
    i_xs1 = mutual_information(j, u.name, (x.name, s1.name))
    i_s2 = mutual_information(j, u.name, s2.name)
    eps = params.epsilon
    K = _count(i_xs1 + eps, n)
    rate = i_xs1 - i_s2 + 3 * eps if bin_rate is None else bin_rate
    bins = _count(rate, n)
    _guard(K, n, max_symbols)
    u_dist = marginalize(j, [u.name]).to_dist()
    rng = np.random.default_rng(seed)
    codewords = _draw(rng, u_dist.mass, (K, n))
    bin_of = rng.integers(0, bins, size=K)
    return SourceCode(n, K, bins, codewords, bin_of, u_dist, point.xhat_map, seed,
                      marginalize(j, [u.name, x.name, s1.name]), marginalize(j, [u.name, s2.name]),
                      i_xs1, i_s2, eps)


def source_encode_detail(code: SourceCode, x_seq, s1_seq, params: TypicalityParams) -> tuple[int, bool]:
    """(bin, found): bin of the first codeword typical with (x^n, s1^n); codeword 0 if none."""
    x_seq = np.asarray(x_seq, dtype=np.int64)
    s1_seq = np.asarray(s1_seq, dtype=np.int64)
    if len(x_seq) != code.n or len(s1_seq) != code.n:
        raise ValueError("sequence length differs from n")
    ok = _typical_mask(code.codewords, [x_seq, s1_seq], code.enc_ref.mass, params.epsilon)
    if not np.any(ok):
        return int(code.bin_of[0]), False
    return int(code.bin_of[np.argmax(ok)]), True


def source_encode(code: SourceCode, x_seq, s1_seq, params: TypicalityParams) -> int:
    return source_encode_detail(code, x_seq, s1_seq, params)[0]


@dataclass(frozen=True)
class Reconstruction:
    xhat: np.ndarray
    fallback: bool
    reason: str = ""        # "none" or "ambiguous" when fallback


def source_decode(code: SourceCode, bin_index: int, s2_seq, params: TypicalityParams) -> Reconstruction:
    """xhat^n from the unique codeword in the bin typical with s2^n, else all zeros."""
    if not 0 <= bin_index < code.num_bins:
        raise ValueError(f"bin {bin_index} outside [0, {code.num_bins})")
    s2_seq = np.asarray(s2_seq, dtype=np.int64)
    if len(s2_seq) != code.n:
        raise ValueError("s2 sequence length differs from n")
    members = np.flatnonzero(code.bin_of == bin_index)
    ok = members[_typical_mask(code.codewords[members], [s2_seq], code.dec_ref.mass, params.epsilon)] \
        if members.size else members
    if ok.size != 1:
        return Reconstruction(np.zeros(code.n, dtype=np.int64), True, "none" if ok.size == 0 else "ambiguous")
    return Reconstruction(code.xhat_map.table[code.codewords[ok[0]], s2_seq], False)


@dataclass
class SimulationReport:
    kind: str
    n: int
    trials: int
    num_codewords: int
    num_bins: int
    failures: dict                    # E1, E2, E3 counts; they sum to failure_count
    failure_count: int
    error_rate: float
    half_width: float                 # 95% normal-approximation half-width of the main metric
    mean_distortion: float | None = None
    target: float | None = None       # operating rate (channel) or target distortion (source)
    runtime_s: float = 0.0

    @property
    def metric(self) -> float:
        return self.error_rate if self.kind == "channel" else self.mean_distortion

    @property
    def excess_distortion(self) -> float | None:
        if self.mean_distortion is None or self.target is None:
            return None
        return self.mean_distortion - self.target


Z95 = 1.959963984540054


def _channel_trials(prob: ChannelProblem, code: ChannelCode, params, trials: int, seed: int, n: int):
    counts = {"E1": 0, "E2": 0, "E3": 0}
    p12 = prob.p_s1s2
    ns2 = p12.shape[1]
    cdf_y = np.cumsum(prob.kernel, axis=-1)
    for t in range(trials):
        rng = np.random.default_rng([seed, n, t])
        m = int(rng.integers(0, code.num_bins))
        st = _draw(rng, p12, n)
        s1, s2 = st // ns2, st % ns2
        x = channel_encode(code, m, s1)
        if isinstance(x, EncFail):
            counts["E1"] += 1
            continue
        c = cdf_y[x, s1, s2]
        y = np.minimum((rng.random(n)[:, None] * c[:, -1:] >= c).sum(axis=1), c.shape[1] - 1)
        got = channel_decode(code, y, s2, params)
        if isinstance(got, DecFail):
            counts["E2" if got.reason == "none" else "E3"] += 1
        elif got != m:
            # a unique but wrong codeword: counted with the ambiguity event
            counts["E3"] += 1
    return counts, None


def _source_trials(prob: SourceProblem, code: SourceCode, params, trials: int, seed: int, n: int):
    counts = {"E1": 0, "E2": 0, "E3": 0}
    p = prob.p_xs1s2
    _, ns1, ns2 = p.shape
    d = prob.distortion
    dist = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng([seed, n, t])
        idx = _draw(rng, p, n)
        x, s1, s2 = idx // (ns1 * ns2), (idx // ns2) % ns1, idx % ns2
        b, found = source_encode_detail(code, x, s1, params)
        rec = source_decode(code, b, s2, params)
        dist[t] = d[x, rec.xhat].mean()
        # one event per failed trial, the earliest in the chain
        if not found:
            counts["E1"] += 1
        elif rec.fallback:
            counts["E2" if rec.reason == "none" else "E3"] += 1
    return counts, dist


def simulate(kind: str, prob, point, n_list, rate_or_d: float, trials: int,
             params: TypicalityParams = TypicalityParams(), seed: int = 0, *,
             bin_rate: float | None = None, max_symbols: int = DEFAULT_MAX_SYMBOLS) -> list[SimulationReport]:
    """Build a fresh code per blocklength and run seeded i.i.d. trials.

    For channels ``rate_or_d`` is the operating rate R; for sources it is the
    target distortion the report compares against, with the bin rate taken
    from ``bin_rate`` when given.  Trial t at blocklength n draws from a
    generator seeded by (seed, n, t), so results do not depend on the order
    in which trials run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if kind not in ("channel", "source"):
        raise ValueError(f"kind must be 'channel' or 'source', got {kind!r}")
    reports = []
    for n in n_list:
        n = int(n)
        t0 = time.perf_counter()
        code_seed = _derived_seed(seed, n)
        if kind == "channel":
            code = build_channel_code(prob, rate_or_d, point, n, params, code_seed, max_symbols=max_symbols)
            counts, dist = _channel_trials(prob, code, params, trials, seed, n)
        else:
            code = build_source_code(prob, point, n, params, code_seed, bin_rate=bin_rate, max_symbols=max_symbols)
            counts, dist = _source_trials(prob, code, params, trials, seed, n)
        fails = sum(counts.values())
        rate = fails / trials
        if kind == "channel":
            hw = Z95 * math.sqrt(rate * (1 - rate) / trials)
            mean_d = None
        else:
            mean_d = float(dist.mean())
            hw = Z95 * float(dist.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
        reports.append(SimulationReport(kind, n, trials, code.num_codewords, code.num_bins, counts, fails,
                                        rate, hw, mean_d, rate_or_d, time.perf_counter() - t0))
    return reports
