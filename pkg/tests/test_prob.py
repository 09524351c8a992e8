import numpy as np
import pytest
from hypothesis import given, strategies as st

from sideinfo.prob import (Alphabet, ConditionalKernel, DeterministicMap, Dist, InvalidDistribution,
                           JointDist, compose_joint, conditional_entropy,
                           conditional_mutual_information, entropy, marginalize,
                           mutual_information, product)

A, B, C = Alphabet("a", 2), Alphabet("b", 3), Alphabet("c", 2)


def joints(shape):
    return st.lists(st.floats(0.0, 1.0), min_size=int(np.prod(shape)), max_size=int(np.prod(shape))) \
        .filter(lambda v: sum(v) > 1e-3) \
        .map(lambda v: np.array(v).reshape(shape) / sum(v))


def test_entropy_values():
    assert entropy(Dist(A, [0.5, 0.5])) == pytest.approx(1.0)
    assert entropy(Dist(A, [1.0, 0.0])) == 0.0
    assert entropy(Dist(B, np.full(3, 1 / 3))) == pytest.approx(np.log2(3))


def test_validation_rejects_bad_mass():
    with pytest.raises(InvalidDistribution):
        Dist(A, [0.6, 0.6])
    with pytest.raises(InvalidDistribution):
        Dist(A, [1.5, -0.5])
    with pytest.raises(InvalidDistribution):
        Dist(A, [np.nan, 1.0])
    with pytest.raises(InvalidDistribution):
        JointDist((A, B), np.ones((3, 2)) / 6)
    with pytest.raises(InvalidDistribution):
        ConditionalKernel((A,), B, [[0.5, 0.5, 0.5], [1, 0, 0]])


def test_arrays_are_read_only():
    d = Dist(A, [0.25, 0.75])
    with pytest.raises(ValueError):
        d.mass[0] = 1.0


def test_mi_of_copy_and_independent():
    copy = JointDist((A, C), np.eye(2) / 2)
    assert mutual_information(copy) == pytest.approx(1.0)
    ind = product(Dist(A, [0.3, 0.7]), Dist(B, [0.2, 0.3, 0.5]))
    assert mutual_information(ind) == pytest.approx(0.0, abs=1e-12)


def test_marginalize_order_and_mass():
    m = np.arange(12, dtype=float).reshape(2, 3, 2)
    j = JointDist((A, B, C), m / m.sum())
    mc = marginalize(j, ("c", "a"))
    assert mc.names == ("c", "a")
    np.testing.assert_allclose(mc.mass, (m / m.sum()).sum(axis=1).T)


def test_compose_and_map_kernel():
    base = JointDist((A,), [0.4, 0.6])
    f = DeterministicMap((A,), C, [1, 0])
    j = compose_joint(base, f.kernel())
    np.testing.assert_allclose(j.mass, [[0, 0.4], [0.6, 0]])
    with pytest.raises(ValueError):
        compose_joint(j, f.kernel())


@given(joints((2, 3, 2)))
def test_information_identities(m):
    j = JointDist((A, B, C), m)
    h = lambda *n: entropy(marginalize(j, n))
    # chain rule and nonnegativity
    assert h("a", "b") == pytest.approx(h("a") + conditional_entropy(j, "b", "a"), abs=1e-9)
    assert mutual_information(j, "a", "b") >= 0
    assert mutual_information(j, "a", "b") == pytest.approx(mutual_information(j, "b", "a"), abs=1e-12)
    assert mutual_information(j, "a", "b") <= min(h("a"), h("b")) + 1e-9
    i_ab_c = conditional_mutual_information(j, "c", "a", "b")
    assert i_ab_c >= 0
    # I(A;B,C) = I(A;C) + I(A;B|C)
    assert mutual_information(j, "a", ("b", "c")) == pytest.approx(
        mutual_information(j, "a", "c") + i_ab_c, abs=1e-9)
