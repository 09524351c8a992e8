"""Seeded random instances for the reduction, ordering and oracle checks.

Instances carry one full state S known on both sides (S1 = S2 = S) so that
:func:`sideinfo.special.degenerate` can hide it from either side.
"""

from __future__ import annotations

import numpy as np

from .problems import ChannelProblem, SourceProblem, state_channel, state_source

# (|X|, |S|) shapes cycled through by the suites; |Y| = |X| and |Xhat| = |X|
SHAPES = ((2, 2), (2, 3), (3, 2))


def random_channel(rng: np.random.Generator, nx: int = 2, ns: int = 2, ny: int | None = None) -> ChannelProblem:
    ny = nx if ny is None else ny
    p_s = rng.dirichlet(np.ones(ns))
    kernels = rng.dirichlet(np.ones(ny), size=(ns, nx))
    return state_channel(p_s, kernels)


def random_source(rng: np.random.Generator, nx: int = 2, ns: int = 2) -> SourceProblem:
    p_xs = rng.dirichlet(np.ones(nx * ns)).reshape(nx, ns)
    d = rng.uniform(0.5, 1.5, size=(nx, nx))
    np.fill_diagonal(d, 0.0)
    return state_source(p_xs, d)


def channel_suite(n: int = 20, seed: int = 2024) -> list[ChannelProblem]:
    rng = np.random.default_rng(seed)
    return [random_channel(rng, *SHAPES[i % len(SHAPES)]) for i in range(n)]


def source_suite(n: int = 20, seed: int = 2025) -> list[SourceProblem]:
    rng = np.random.default_rng(seed)
    return [random_source(rng, *SHAPES[i % len(SHAPES)]) for i in range(n)]


def distortion_levels(prob: SourceProblem, fractions=(0.3, 0.6)) -> list[float]:
    """Targets at the given fractions of the no-state zero-rate distortion.

    With zero-distortion diagonals d_min = 0 under every pattern, so these
    levels are feasible for all four patterns.
    """
    p_x = prob.p_xs1s2.sum(axis=(1, 2))
    d_max = float((p_x @ prob.distortion).min())
    return [f * d_max for f in fractions]
