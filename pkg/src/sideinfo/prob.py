"""Finite-alphabet probability arithmetic and information functionals.

All quantities are in bits.  Distributions are validated on construction and
never silently renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-9


class InvalidDistribution(ValueError):
    """Raised when an array is not a valid (conditional) probability law."""


@dataclass(frozen=True)
class Alphabet:
    name: str
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"alphabet {self.name!r} must have size >= 1, got {self.size}")
        object.__setattr__(self, "size", int(self.size))


def _check_mass(mass: np.ndarray, what: str, axis=None) -> None:
    if not np.all(np.isfinite(mass)):
        raise InvalidDistribution(f"{what}: non-finite probability mass")
    if np.any(mass < 0):
        raise InvalidDistribution(f"{what}: negative probability mass (min {mass.min():.3g})")
    total = mass.sum(axis=axis)
    dev = np.max(np.abs(total - 1.0))
    if dev > NORM_TOL:
        raise InvalidDistribution(f"{what}: mass sums to 1{dev:+.3g}, outside tolerance {NORM_TOL}")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dist:
    alphabet: Alphabet
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        mass = _frozen(self.mass)
        if mass.shape != (self.alphabet.size,):
            raise InvalidDistribution(
                f"Dist over {self.alphabet.name!r}: shape {mass.shape} != ({self.alphabet.size},)")
        _check_mass(mass, f"Dist over {self.alphabet.name!r}")
        object.__setattr__(self, "mass", mass)


@dataclass(frozen=True)
class JointDist:
    """Joint law over named axes; ``mass[i0, i1, ...]`` follows ``axes`` order."""

    axes: tuple[Alphabet, ...]
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = tuple(self.axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        if not axes:
            raise ValueError("a joint distribution needs at least one axis")
        mass = _frozen(self.mass)
        shape = tuple(a.size for a in axes)
        if mass.shape != shape:
            raise InvalidDistribution(f"JointDist{tuple(names)}: shape {mass.shape} != {shape}")
        _check_mass(mass, f"JointDist{tuple(names)}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "mass", mass)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"no axis {name!r} in {self.names}") from None

    def alphabet(self, name: str) -> Alphabet:
        return self.axes[self.axis(name)]

    def to_dist(self) -> Dist:
        if len(self.axes) != 1:
            raise ValueError("only single-axis joints convert to Dist")
        return Dist(self.axes[0], self.mass)


@dataclass(frozen=True)
class ConditionalKernel:
    """Row-stochastic map; ``rows[c0, c1, ..., t]`` is p(t | c0, c1, ...)."""

    from_axes: tuple[Alphabet, ...]
    to_axis: Alphabet
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        from_axes = tuple(self.from_axes)
        rows = _frozen(self.rows)
        shape = tuple(a.size for a in from_axes) + (self.to_axis.size,)
        if rows.shape != shape:
            raise InvalidDistribution(
                f"kernel {self.to_axis.name}|{[a.name for a in from_axes]}: shape {rows.shape} != {shape}")
        _check_mass(rows, f"kernel p({self.to_axis.name}|{','.join(a.name for a in from_axes)})", axis=-1)
        object.__setattr__(self, "from_axes", from_axes)
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class DeterministicMap:
    """A function from conditioning tuples to output symbols."""

    from_axes: tuple[Alphabet, ...]
    to_axis: Alphabet
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        from_axes = tuple(self.from_axes)
        table = np.array(self.table, dtype=np.int64)
        shape = tuple(a.size for a in from_axes)
        if table.shape != shape:
            raise ValueError(f"map table shape {table.shape} != {shape}")
        if table.size and (table.min() < 0 or table.max() >= self.to_axis.size):
            raise ValueError(f"map output outside alphabet {self.to_axis.name!r}")
        table.setflags(write=False)
        object.__setattr__(self, "from_axes", from_axes)
        object.__setattr__(self, "table", table)

    def kernel(self) -> ConditionalKernel:
        rows = np.zeros(self.table.shape + (self.to_axis.size,))
        np.put_along_axis(rows, self.table[..., None], 1.0, axis=-1)
        return ConditionalKernel(self.from_axes, self.to_axis, rows)

    def __eq__(self, other):
        if not isinstance(other, DeterministicMap):
            return NotImplemented
        return (self.from_axes == other.from_axes and self.to_axis == other.to_axis
                and np.array_equal(self.table, other.table))

    def __hash__(self):
        return hash((self.from_axes, self.to_axis, self.table.tobytes()))


def _plogp_sum(mass: np.ndarray) -> float:
    p = mass[mass > 0]
    return float(-np.sum(p * np.log2(p)))


def entropy(p: Dist | JointDist) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    if not isinstance(p, (Dist, JointDist)):
        raise TypeError(f"expected Dist or JointDist, got {type(p).__name__}")
    return max(_plogp_sum(np.asarray(p.mass)), 0.0)


def _names(group) -> tuple[str, ...]:
    return (group,) if isinstance(group, str) else tuple(group)


def marginalize(j: JointDist, keep_axes: Iterable[str] | str) -> JointDist:
    """Sum out every axis not in ``keep_axes``; result axes follow ``keep_axes`` order."""
    keep = _names(keep_axes)
    if not keep:
        raise ValueError("marginalize needs a nonempty set of axes to keep")
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate axes in keep set {keep}")
    idx = [j.axis(n) for n in keep]
    drop = tuple(i for i in range(len(j.axes)) if i not in idx)
    mass = j.mass.sum(axis=drop) if drop else j.mass
    # remaining axes are in original order; permute to the requested order
    remaining = [i for i in range(len(j.axes)) if i in idx]
    mass = np.transpose(mass, [remaining.index(i) for i in idx])
    return JointDist(tuple(j.axes[i] for i in idx), mass)


def _group_entropy(j: JointDist, names: Sequence[str]) -> float:
    if not names:
        return 0.0
    return entropy(marginalize(j, names))


def mutual_information(j: JointDist, a=None, b=None) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B).

    With no groups given, ``j`` must have exactly two axes.  Otherwise ``a`` and
    ``b`` name disjoint axis groups (a name or a tuple of names); remaining axes
    are marginalized out.
    """
    if a is None and b is None:
        if len(j.axes) != 2:
            raise ValueError(f"mutual_information needs a 2-axis joint, got {len(j.axes)} axes")
        a, b = j.names
    ga, gb = _names(a), _names(b)
    if set(ga) & set(gb):
        raise ValueError(f"overlapping groups {ga} and {gb}")
    mi = _group_entropy(j, ga) + _group_entropy(j, gb) - _group_entropy(j, ga + gb)
    return max(mi, 0.0)


def conditional_entropy(j: JointDist, target, given=()) -> float:
    """H(target | given)."""
    gt, gg = _names(target), _names(given)
    return max(_group_entropy(j, gt + gg) - _group_entropy(j, gg), 0.0)


def conditional_mutual_information(j: JointDist, given: str | None = None, a=None, b=None) -> float:
    """I(A;B|C).  For a 3-axis joint, ``given`` names the conditioning axis C."""
    if a is None and b is None:
        if len(j.axes) != 3:
            raise ValueError(f"conditional_mutual_information needs a 3-axis joint, got {len(j.axes)}")
        if given is None:
            given = j.names[2]
        a, b = [n for n in j.names if n != given]
    ga, gb, gc = _names(a), _names(b), _names(given)
    val = (_group_entropy(j, ga + gc) + _group_entropy(j, gb + gc)
           - _group_entropy(j, ga + gb + gc) - _group_entropy(j, gc))
    return max(val, 0.0)


def compose_joint(base: JointDist, k: ConditionalKernel) -> JointDist:
    """Append ``k.to_axis`` to ``base`` with mass base(.) * k(to | from)."""
    for ax in k.from_axes:
        if ax not in base.axes:
            raise ValueError(f"kernel conditions on {ax}, absent from joint axes {base.axes}")
    if k.to_axis.name in base.names:
        raise ValueError(f"axis {k.to_axis.name!r} already present in joint")
    nb = len(base.axes)
    # broadcast kernel rows onto base axes followed by the new axis
    src = [base.axis(ax.name) for ax in k.from_axes]
    order = np.argsort(src)
    rows = np.transpose(k.rows, list(order) + [len(src)])
    shape = [1] * nb + [k.to_axis.size]
    for i in sorted(src):
        shape[i] = base.axes[i].size
    rows = rows.reshape(shape)
    mass = base.mass[..., None] * rows
    return JointDist(base.axes + (k.to_axis,), mass)


def product(*dists: Dist) -> JointDist:
    """Independent joint of several single-variable laws."""
    mass = np.ones(())
    for d in dists:
        mass = np.multiply.outer(mass, d.mass)
    return JointDist(tuple(d.alphabet for d in dists), mass)


def as_joint(d: Dist) -> JointDist:
    return JointDist((d.alphabet,), d.mass)
