import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmf.features import (DimensionError, QuadModel, SymmetryError, build_T, model_eval,
                          n_features, n_quadratic, pair_position, psi, q_to_tensor,
                          selector_J, tensor_action, tensor_adjoint, tensor_apply,
                          tensor_to_q, xi)

from conftest import random_model

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_counts():
    assert [n_quadratic(d) for d in (1, 2, 3, 4)] == [1, 3, 6, 10]
    assert [n_features(d) for d in (1, 2, 3)] == [3, 6, 10]


@pytest.mark.parametrize("tau, expected", [
    ([2.0, 3.0], [4.0, 6.0, 9.0]),
    ([5.0], [25.0]),
    ([1.0, 0.0, -1.0], [1.0, 0.0, -1.0, 0.0, 0.0, 1.0]),
])
def test_psi_examples(tau, expected):
    np.testing.assert_array_equal(psi(tau), expected)


@pytest.mark.parametrize("tau, expected", [
    ([0.0, 0.0], [1, 0, 0, 0, 0, 0]),
    ([2.0], [1, 2, 4]),
    ([1.0, -1.0], [1, 1, -1, 1, -1, 1]),
])
def test_xi_examples(tau, expected):
    np.testing.assert_array_equal(xi(tau), expected)


def test_pair_position_row_major():
    assert [pair_position(i, j, 3) for i, j in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]] \
        == list(range(6))
    assert pair_position(2, 0, 3) == pair_position(0, 2, 3)


def test_build_T_examples():
    np.testing.assert_array_equal(build_T(np.array([[0.0, 1.0]])), [[1, 1], [0, 1], [0, 1]])
    assert build_T(np.zeros((3, 0))).shape == (10, 0)
    T = build_T(np.eye(2))
    np.testing.assert_array_equal(T, [[1, 1], [1, 0], [0, 1], [1, 0], [0, 0], [0, 1]])


def test_build_T_rejects_vector():
    with pytest.raises(DimensionError):
        build_T(np.ones(3))


def test_q_to_tensor_examples():
    np.testing.assert_array_equal(q_to_tensor([[1.0, 0.0, 1.0]], 2)[0], np.eye(2))
    np.testing.assert_array_equal(q_to_tensor([[0.0, 1.0, 0.0]], 2)[0], [[0, 0.5], [0.5, 0]])
    with pytest.raises(DimensionError):
        q_to_tensor(np.ones((2, 4)), 2)


def test_tensor_to_q_examples():
    np.testing.assert_array_equal(tensor_to_q(np.zeros((1, 2, 2))), [[0, 0, 0]])
    np.testing.assert_array_equal(tensor_to_q(np.diag([2.0, 5.0])[None]), [[2, 0, 5]])
    np.testing.assert_array_equal(tensor_to_q(np.array([[[0.0, 3.0], [3.0, 0.0]]])), [[0, 6, 0]])
    with pytest.raises(SymmetryError):
        tensor_to_q(np.array([[[0.0, 1.0], [2.0, 0.0]]]))


def test_roundtrip_exact_all_d(rng):
    for d in range(1, 7):
        Q = rng.standard_normal((4, n_quadratic(d)))
        np.testing.assert_array_equal(tensor_to_q(q_to_tensor(Q, d)), Q)


@given(arrays(np.float64, (3, 3), elements=finite), arrays(np.float64, 2, elements=finite))
def test_quadratic_form_matches_psi(Q, tau):
    B = q_to_tensor(Q, 2)
    lhs = np.einsum("kab,a,b->k", B, tau, tau)
    np.testing.assert_allclose(lhs, Q @ psi(tau), rtol=1e-12, atol=1e-9)


def test_tensor_action_and_adjoint(rng):
    D, d = 4, 3
    B = q_to_tensor(rng.standard_normal((D, n_quadratic(d))), d)
    np.testing.assert_array_equal(tensor_action(np.zeros((D, d, d)), np.ones(d)), np.zeros((D, d)))
    assert tensor_adjoint(B, np.zeros(D)).shape == (d, d)
    np.testing.assert_array_equal(tensor_adjoint(B, np.eye(D)[1]), B[1])
    for _ in range(20):
        tau, eta, v = rng.standard_normal(d), rng.standard_normal(d), rng.standard_normal(D)
        np.testing.assert_allclose(tensor_action(B, eta) @ tau, tensor_action(B, tau) @ eta,
                                   atol=1e-12)
        np.testing.assert_allclose(v @ tensor_apply(B, tau, eta), tau @ tensor_adjoint(B, v) @ eta,
                                   atol=1e-12)
    # d = 1: the action is eta times the column of scalar slices
    B1 = np.array([1.5, -2.0, 0.5]).reshape(3, 1, 1)
    np.testing.assert_array_equal(tensor_action(B1, np.array([2.0]))[:, 0], [3.0, -4.0, 1.0])
    with pytest.raises(DimensionError):
        tensor_action(B1, np.ones(2))


def test_selector_J(rng):
    np.testing.assert_array_equal(selector_J(1), [[0], [0], [1]])
    J = selector_J(3)
    np.testing.assert_array_equal(J.T @ J, np.eye(6))
    model = random_model(rng, 5, 3)
    np.testing.assert_array_equal(model.R @ J, model.Q)


def test_model_eval_examples(rng):
    model = random_model(rng, 4, 2)
    np.testing.assert_array_equal(model(np.zeros(2)), model.c)
    lin = QuadModel(model.c, model.A, np.zeros_like(model.Q))
    tau = rng.standard_normal(2)
    np.testing.assert_allclose(lin(tau), model.c + model.A @ tau, atol=1e-15)
    with pytest.raises(DimensionError):
        model_eval(model, np.ones(3))


def test_two_path_evaluation(rng):
    for d in range(1, 7):
        model = random_model(rng, 5, d)
        taus = rng.standard_normal((d, 50))
        direct = np.column_stack([model.c + model.A @ t + np.einsum("kab,a,b->k", model.B, t, t)
                                  for t in taus.T])
        np.testing.assert_allclose(model.evaluate(taus), direct, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(model(taus[:, 0]), model.R @ xi(taus[:, 0]), atol=1e-12)


def test_model_constructors_and_json(rng):
    model = random_model(rng, 3, 2)
    again = QuadModel.from_json(model.to_json())
    np.testing.assert_array_equal(again.R, model.R)
    np.testing.assert_array_equal(QuadModel.from_R(model.R, 2).Q, model.Q)
    np.testing.assert_array_equal(QuadModel.from_tensor(model.c, model.A, model.B).Q, model.Q)
    with pytest.raises(DimensionError):
        QuadModel.from_R(model.R, 3)
    with pytest.raises(DimensionError):
        QuadModel(np.zeros(3), np.zeros((2, 2)), np.zeros((3, 3)))
