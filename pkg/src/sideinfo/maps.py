"""Enumeration of deterministic maps f: (U, S) -> X.

A map is stored as an integer table ``table[u, s]``.  Row ``u`` of the table
(the function s -> f(u, s)) is called a *strategy*.

Two maps whose strategy multisets agree are relabelings of one another and
reach the same optimum.  Moreover, two labels u, u' carrying the same
strategy can be merged without loss (the merged label is a function of U that
keeps X, and the information penalty can only shrink under merging).  So the
solvers only need maps whose strategies are *distinct*: one map per subset of
size min(|U|, K) of the K = |X|^|S| strategies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ascent import BudgetError, SolverOptions
from .prob import Alphabet, DeterministicMap


def enumerate_maps(u_alpha: Alphabet, s_alpha: Alphabet, x_alpha: Alphabet):
    """Yield every map (U, S) -> X exactly once, in lexicographic table order."""
    shape = (u_alpha.size, s_alpha.size)
    for flat in itertools.product(range(x_alpha.size), repeat=shape[0] * shape[1]):
        yield DeterministicMap((u_alpha, s_alpha), x_alpha, np.array(flat).reshape(shape))


def map_count(u_size: int, s_size: int, x_size: int) -> int:
    return x_size ** (u_size * s_size)


def strategies(s_size: int, x_size: int) -> np.ndarray:
    """All K = x_size**s_size functions S -> X as rows of a (K, s_size) array."""
    return np.array(list(itertools.product(range(x_size), repeat=s_size)), dtype=np.int64).reshape(-1, s_size)


@dataclass
class MapSet:
    tables: np.ndarray          # (M, U, S) integer
    exhaustive: bool
    total: int                  # size of the space the tables cover or were drawn from
    notes: list[str] = field(default_factory=list)
    # labels beyond this index repeat strategy 0 and are never worth using
    active: int | None = None

    @property
    def u_active(self) -> int:
        return self.tables.shape[1] if self.active is None else self.active


def candidate_maps(u_size: int, s_size: int, x_size: int, opts: SolverOptions,
                   rng: np.random.Generator, *, canonical: bool = True) -> MapSet:
    """Maps the solvers search over.

    With ``canonical`` the search runs over distinct-strategy subsets (see the
    module docstring); otherwise over all tables.  Either space is enumerated
    when it fits ``opts.enum_cap`` and sampled otherwise.
    """
    if u_size < 1:
        raise ValueError("u_size must be >= 1")
    if not canonical:
        total = map_count(u_size, s_size, x_size)
        if total <= opts.enum_cap:
            tables = np.array(list(itertools.product(range(x_size), repeat=u_size * s_size)),
                              dtype=np.int64).reshape(total, u_size, s_size)
            return MapSet(tables, True, total)
        if not opts.allow_sampling:
            raise BudgetError(f"{total} maps exceed enum_cap={opts.enum_cap} and sampling is disabled")
        tables = rng.integers(0, x_size, size=(opts.map_samples, u_size, s_size))
        return MapSet(tables, False, total, [f"sampled {opts.map_samples} of {total} maps"])

    strat = strategies(s_size, x_size)
    K = len(strat)
    if u_size >= K:
        cols = list(range(K)) + [0] * (u_size - K)
        return MapSet(strat[cols][None], True, 1, ["all strategies fit in U"], active=K)
    total = math.comb(K, u_size)
    if total <= opts.enum_cap:
        subsets = np.array(list(itertools.combinations(range(K), u_size)), dtype=np.int64)
        return MapSet(strat[subsets], True, total)
    if not opts.allow_sampling:
        raise BudgetError(f"{total} strategy subsets exceed enum_cap={opts.enum_cap} and sampling is disabled")
    seen = set()
    subsets = []
    tries = 0
    while len(subsets) < opts.map_samples and tries < 20 * opts.map_samples:
        tries += 1
        sub = tuple(sorted(rng.choice(K, size=u_size, replace=False).tolist()))
        if sub not in seen:
            seen.add(sub)
            subsets.append(sub)
    subsets.sort()
    return MapSet(strat[np.array(subsets)], False, total,
                  [f"sampled {len(subsets)} of {total} strategy subsets (enum_cap={opts.enum_cap})"])
