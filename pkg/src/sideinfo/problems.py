"""Problem containers for channels and sources with two-sided state, plus a few
standard instances used throughout the tests and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prob import Alphabet, ConditionalKernel, JointDist


@dataclass(frozen=True)
class ChannelProblem:
    """Memoryless channel p(y|x,s1,s2) with states (s1, s2) ~ p(s1,s2).

    S1 is seen by the sender, S2 by the receiver.
    """

    x_alpha: Alphabet
    y_alpha: Alphabet
    s1_alpha: Alphabet
    s2_alpha: Alphabet
    state_joint: JointDist
    channel: ConditionalKernel

    def __post_init__(self):
        if self.state_joint.axes != (self.s1_alpha, self.s2_alpha):
            raise ValueError(f"state_joint axes {self.state_joint.names} must be (s1, s2)")
        want = (self.x_alpha, self.s1_alpha, self.s2_alpha)
        if self.channel.from_axes != want or self.channel.to_axis != self.y_alpha:
            raise ValueError("channel must be a kernel from (x, s1, s2) to y")

    @classmethod
    def from_arrays(cls, p_s1s2, kernel) -> "ChannelProblem":
        """``kernel[x, s1, s2, y]`` = p(y|x,s1,s2)."""
        p_s1s2 = np.asarray(p_s1s2, dtype=float)
        kernel = np.asarray(kernel, dtype=float)
        nx, ns1, ns2, ny = kernel.shape
        x, y = Alphabet("x", nx), Alphabet("y", ny)
        s1, s2 = Alphabet("s1", ns1), Alphabet("s2", ns2)
        return cls(x, y, s1, s2, JointDist((s1, s2), p_s1s2),
                   ConditionalKernel((x, s1, s2), y, kernel))

    @property
    def p_s1s2(self) -> np.ndarray:
        return self.state_joint.mass

    @property
    def kernel(self) -> np.ndarray:
        return self.channel.rows


@dataclass(frozen=True)
class SourceProblem:
    """Source (x, s1, s2) ~ p(x,s1,s2) with distortion d(x, xhat).

    S1 is seen by the encoder, S2 by the decoder.
    """

    x_alpha: Alphabet
    xhat_alpha: Alphabet
    s1_alpha: Alphabet
    s2_alpha: Alphabet
    source_joint: JointDist
    distortion: np.ndarray

    def __post_init__(self):
        if self.source_joint.axes != (self.x_alpha, self.s1_alpha, self.s2_alpha):
            raise ValueError(f"source_joint axes {self.source_joint.names} must be (x, s1, s2)")
        d = np.array(self.distortion, dtype=float)
        if d.shape != (self.x_alpha.size, self.xhat_alpha.size):
            raise ValueError(f"distortion shape {d.shape} != ({self.x_alpha.size}, {self.xhat_alpha.size})")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distortion entries must be finite and nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "distortion", d)

    @classmethod
    def from_arrays(cls, p_xs1s2, distortion) -> "SourceProblem":
        p = np.asarray(p_xs1s2, dtype=float)
        d = np.asarray(distortion, dtype=float)
        nx, ns1, ns2 = p.shape
        x, xh = Alphabet("x", nx), Alphabet("xhat", d.shape[1])
        s1, s2 = Alphabet("s1", ns1), Alphabet("s2", ns2)
        return cls(x, xh, s1, s2, JointDist((x, s1, s2), p), d)

    @property
    def p_xs1s2(self) -> np.ndarray:
        return self.source_joint.mass


def hamming(n: int, m: int | None = None) -> np.ndarray:
    m = n if m is None else m
    return 1.0 - np.eye(n, m)


def bsc_kernel(p: float) -> np.ndarray:
    return np.array([[1 - p, p], [p, 1 - p]])


def bsc(p: float) -> ChannelProblem:
    """Binary symmetric channel without state."""
    return ChannelProblem.from_arrays([[1.0]], bsc_kernel(p)[:, None, None, :])


def noiseless_binary(n_s1: int = 1, n_s2: int = 1) -> ChannelProblem:
    """Y = X regardless of the (uniform, independent) state."""
    k = np.zeros((2, n_s1, n_s2, 2))
    k[0, ..., 0] = 1.0
    k[1, ..., 1] = 1.0
    return ChannelProblem.from_arrays(np.full((n_s1, n_s2), 1.0 / (n_s1 * n_s2)), k)


def stuck_at(p_defect: float = 0.2) -> ChannelProblem:
    """Memory cell that is ok, stuck at 0 or stuck at 1; the writer knows which.

    S1 = (ok, stuck0, stuck1) with probabilities (1 - p, p/2, p/2); S2 trivial.
    """
    k = np.zeros((2, 3, 1, 2))
    for x in range(2):
        k[x, 0, 0, x] = 1.0
        k[x, 1, 0, 0] = 1.0
        k[x, 2, 0, 1] = 1.0
    p_s = np.array([1 - p_defect, p_defect / 2, p_defect / 2])
    return ChannelProblem.from_arrays(p_s[:, None], k)


def state_channel(p_s, kernels) -> ChannelProblem:
    """Channel with a single state S known on both sides (S1 = S2 = S).

    ``kernels[s]`` is the |X| x |Y| matrix p(y|x,s).  Use
    :func:`sideinfo.special.degenerate` to hide the state from either side.
    """
    p_s = np.asarray(p_s, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    ns, nx, ny = kernels.shape
    k = np.zeros((nx, ns, ns, ny))
    for s in range(ns):
        k[:, s, :, :] = kernels[s][:, None, :]
    return ChannelProblem.from_arrays(np.diag(p_s), k)


def two_state_bsc() -> ChannelProblem:
    """BSC(0) or BSC(0.5), each with probability 1/2."""
    return state_channel([0.5, 0.5], [bsc_kernel(0.0), bsc_kernel(0.5)])


def state_source(p_xs, distortion) -> SourceProblem:
    """Source with a single state S known on both sides (S1 = S2 = S)."""
    p_xs = np.asarray(p_xs, dtype=float)
    nx, ns = p_xs.shape
    p = np.zeros((nx, ns, ns))
    for s in range(ns):
        p[:, s, s] = p_xs[:, s]
    return SourceProblem.from_arrays(p, distortion)


def binary_uniform_hamming() -> SourceProblem:
    return SourceProblem.from_arrays(np.full((2, 1, 1), 0.5), hamming(2))


def binary_wyner_ziv(crossover: float = 0.25) -> SourceProblem:
    """X uniform, decoder sees S2 = X through a BSC(crossover); S1 trivial."""
    p = np.zeros((2, 1, 2))
    for x in range(2):
        for s in range(2):
            p[x, 0, s] = 0.5 * ((1 - crossover) if s == x else crossover)
    return SourceProblem.from_arrays(p, hamming(2))
