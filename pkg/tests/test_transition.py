import numpy as np
import pytest
from scipy.linalg import expm

from spinsim.simulate import transition_probability


def expm_oracle(q_up, q_down, eta_i, delta):
    gen = np.array([[-q_up, q_up], [q_down, -q_down]])
    p = expm(delta * gen)
    return p[int(eta_i), 1]


def test_matches_matrix_exponential():
    rng = np.random.default_rng(42)
    for _ in range(100):
        q_up, q_down = rng.uniform(0, 10, 2)
        delta = rng.uniform(0, 2)
        for eta in (0, 1):
            got = transition_probability(q_up, q_down, eta, delta)
            assert got == pytest.approx(
                expm_oracle(q_up, q_down, eta, delta), abs=1e-12)


def test_edge_cases():
    assert transition_probability(0.0, 0.0, 0, 1.0) == 0.0
    assert transition_probability(0.0, 0.0, 1, 1.0) == 1.0
    assert transition_probability(2.0, 3.0, 0, 0.0) == 0.0
    assert transition_probability(2.0, 3.0, 1, 0.0) == 1.0
    # stationary split reached as delta -> inf
    assert transition_probability(2.0, 3.0, 0, 1e9) == pytest.approx(0.4)
    assert transition_probability(2.0, 3.0, 1, 1e9) == pytest.approx(0.4)


def test_range_and_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        q_up, q_down = rng.uniform(0, 10, 2)
        delta = rng.uniform(0, 2)
        p0 = transition_probability(q_up, q_down, 0, delta)
        p1 = transition_probability(q_up, q_down, 1, delta)
        assert 0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0
    # at fixed total rate, larger up-share moves the 0 -> 1 chance up
    big_q = 5.0
    shares = np.linspace(0, 1, 11)
    probs = [transition_probability(s * big_q, (1 - s) * big_q, 0, 0.3)
             for s in shares]
    assert all(b >= a for a, b in zip(probs, probs[1:]))


def test_accuracy_near_zero():
    # tiny delta*Q: the expm1 path keeps full relative accuracy
    p = transition_probability(1e-9, 1e-9, 0, 1e-6)
    assert p == pytest.approx(1e-15, rel=1e-6)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    q_up = rng.uniform(0, 5, 50)
    q_down = rng.uniform(0, 5, 50)
    eta = rng.integers(0, 2, 50)
    vec = transition_probability(q_up, q_down, eta, 0.17)
    for i in range(50):
        assert vec[i] == transition_probability(
            float(q_up[i]), float(q_down[i]), int(eta[i]), 0.17)


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        transition_probability(-1.0, 1.0, 0, 0.1)
    with pytest.raises(ValueError):
        transition_probability(1.0, -1.0, 0, 0.1)
    with pytest.raises(ValueError):
        transition_probability(1.0, 1.0, 0, -0.1)
