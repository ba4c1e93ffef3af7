import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stability_lab.dataset import Dataset, generate_hastie
from stability_lab.learners import Stub, train
from stability_lab.losses import (
    LossKind,
    LossName,
    classification_loss,
    cross_entropy_loss,
    empirical_error,
    gamma_loss,
    loss_values,
)

scores = st.floats(-5, 5, allow_nan=False)
signs = st.sampled_from([-1, 1])
probs = st.floats(0, 1)


@pytest.mark.parametrize("pred, y, want", [(1, 1, 0), (0, 1, 1), (0, 0, 0), (1, 0, 1)])
def test_classification_loss(pred, y, want):
    assert classification_loss(pred, y) == want


@pytest.mark.parametrize("margin, want", [(-0.3, 1.0), (0.5, 0.5), (2.0, 0.0)])
def test_gamma_loss_branches(margin, want):
    assert gamma_loss(margin, 1, 1.0) == pytest.approx(want)
    assert gamma_loss(-margin, -1, 1.0) == pytest.approx(want)


@pytest.mark.parametrize("gamma", [0.25, 1.0, 3.0])
def test_gamma_loss_continuous_at_kinks(gamma):
    for knot in (0.0, gamma):
        lo, hi = gamma_loss(knot - 1e-13, 1, gamma), gamma_loss(knot + 1e-13, 1, gamma)
        assert abs(lo - hi) <= 1e-12 + 2e-13 / gamma
        assert abs(gamma_loss(knot, 1, gamma) - lo) <= 1e-12 + 2e-13 / gamma


@given(scores, signs, st.floats(0.01, 10))
def test_gamma_loss_in_unit_interval(s, y, gamma):
    assert 0.0 <= gamma_loss(s, y, gamma) <= 1.0


@given(scores, scores, signs)
def test_gamma_loss_one_lipschitz(s1, s2, y):
    assert abs(gamma_loss(s1, y, 1.0) - gamma_loss(s2, y, 1.0)) <= abs(s1 - s2) + 1e-12


def test_cross_entropy_values():
    assert cross_entropy_loss(0.5, 1) == pytest.approx(math.log(2))
    assert cross_entropy_loss(1.0, 1) == 0.0
    assert cross_entropy_loss(0.0, 1) == pytest.approx(-math.log(1e-12))
    assert cross_entropy_loss(0.0, 1) == pytest.approx(27.631, abs=1e-3)


@given(probs, probs)
def test_cross_entropy_monotone(p, q):
    lo, hi = min(p, q), max(p, q)
    assert cross_entropy_loss(lo, 1) >= cross_entropy_loss(hi, 1) >= 0.0
    assert cross_entropy_loss(hi, 0) >= cross_entropy_loss(lo, 0) >= 0.0


@given(st.lists(st.tuples(probs, st.integers(0, 1)), min_size=1, max_size=20), st.floats(0.1, 4))
def test_vectorised_losses_match_scalar(rows, gamma):
    p = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    labels = (p >= 0.5).astype(int)
    ce = loss_values(LossKind(LossName.CROSS_ENTROPY), labels, p, y)
    assert np.allclose(ce, [cross_entropy_loss(a, b) for a, b in zip(p, y)], rtol=1e-12, atol=0)
    gl = loss_values(LossKind(LossName.GAMMA, gamma=gamma), labels, p, y)
    want = [gamma_loss(2 * a - 1, 2 * b - 1, gamma) for a, b in zip(p, y)]
    assert np.allclose(gl, want, rtol=0, atol=1e-12)
    cl = loss_values(LossKind(), labels, p, y)
    assert cl.tolist() == [classification_loss(a, b) for a, b in zip(labels, y)]


def test_tau_defaults():
    assert LossKind().tau == 1.0
    assert LossKind(LossName.GAMMA, gamma=0.5).tau == 2.0
    with pytest.raises(ValueError):
        LossKind(gamma=0.0)


def test_empirical_error_match_mismatch_half():
    D = Dataset(np.zeros((20, 1)), [1] * 20)
    assert empirical_error(train(D, Stub(1)), D, LossKind()) == 0.0
    assert empirical_error(train(D, Stub(0)), D, LossKind()) == 1.0
    half = Dataset(np.zeros((20, 1)), [0, 1] * 10)
    assert empirical_error(train(half, Stub(1)), half, LossKind()) == 0.5


@given(st.integers(1, 30), st.integers(0, 1000), st.sampled_from([LossName.CLASSIFICATION, LossName.GAMMA]))
def test_empirical_error_in_unit_interval(m, seed, kind):
    D = generate_hastie(m, seed)
    r = empirical_error(train(D, Stub(seed % 2)), D, LossKind(kind))
    assert 0.0 <= r <= 1.0
