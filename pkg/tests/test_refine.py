import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactsos.gram import MonomialBasis, full_basis
from exactsos.refine import (
    FactorMatrix,
    RefineConfig,
    backward_error,
    factor_to_gram,
    float_gauss_newton,
    gauss_newton,
    initial_factor,
)

from .conftest import PARRILO_TEXT, P

PARRILO_BASIS = MonomialBasis(2, ((2, 0), (0, 2), (1, 1)))
PARRILO_SQUARES = [(Fraction(1, 2), P("2*x1^2 - 3*x2^2 + x1*x2")), (Fraction(1, 2), P("x2^2 + 3*x1*x2"))]


def test_initial_factor_examples():
    b = full_basis(1, 1)
    L = initial_factor([(1, P("x1 + 1", 1))], b)
    assert L.to_float().tolist() == [[1.0, 1.0]]
    L = initial_factor([(4, P("x1", 1))], MonomialBasis(1, ((1,),)))
    assert L.to_float().tolist() == [[2.0]]


def test_initial_factor_folds_square_roots():
    L = initial_factor(PARRILO_SQUARES, PARRILO_BASIS)
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(L.to_float(), [[2 * r, -3 * r, r], [0, r, 3 * r]], rtol=1e-15)


def test_initial_factor_extends_basis():
    L = initial_factor([(1, P("x1 + 1", 1))], MonomialBasis(1, ((1,),)))
    assert L.extended == ((0,),) and len(L.basis) == 2
    with pytest.raises(KeyError):
        initial_factor([(1, P("x1 + 1", 1))], MonomialBasis(1, ((1,),)), extend=False)


def test_backward_error_examples():
    f = P(PARRILO_TEXT)
    assert backward_error(f, initial_factor(PARRILO_SQUARES, PARRILO_BASIS)) < 1e-70
    zero = FactorMatrix.from_values(MonomialBasis(1, ((1,),)), [[0]])
    assert backward_error(P("x1^2", 1), zero) == 1.0


def test_backward_error_is_lipschitz_in_the_factor():
    f = P(PARRILO_TEXT)
    L = initial_factor(PARRILO_SQUARES, PARRILO_BASIS)
    for eps in (1e-4, 1e-6, 1e-8):
        data = L.data.copy()
        data[0, 0] += round(eps * 2**L.frac_bits)
        theta = backward_error(f, FactorMatrix(L.basis, data, L.frac_bits))
        # d(theta)/d(c00) is about 2 * |c00| * sqrt(1 + ...) -> O(eps)
        assert eps < theta < 20 * eps


def test_factor_to_gram_reference_instance():
    G = factor_to_gram(initial_factor(PARRILO_SQUARES, PARRILO_BASIS))
    np.testing.assert_allclose(G.to_numpy(), [[2, -3, 1], [-3, 5, 0], [1, 0, 5]], atol=1e-60)


def test_factor_to_gram_trivial():
    b = full_basis(1, 1)
    assert factor_to_gram(FactorMatrix.from_values(b, [[1, 0]])).to_numpy().tolist() == [[1, 0], [0, 0]]
    assert factor_to_gram(FactorMatrix.from_values(b, [[0, 0]])).to_numpy().tolist() == [[0, 0], [0, 0]]


def test_gauss_newton_fixed_point():
    out = gauss_newton(P(PARRILO_TEXT), initial_factor(PARRILO_SQUARES, PARRILO_BASIS))
    assert out.converged and out.iterations <= 1 and out.theta_final < 1e-15


def test_gauss_newton_from_noisy_start():
    rng = np.random.default_rng(0)
    L = initial_factor(PARRILO_SQUARES, PARRILO_BASIS)
    noisy = FactorMatrix.from_values(PARRILO_BASIS, (L.to_float() + 1e-3 * rng.standard_normal(L.data.shape)).tolist())
    out = gauss_newton(P(PARRILO_TEXT), noisy, RefineConfig(max_iters=50))
    assert out.converged and out.theta_final < 1e-15


def test_gauss_newton_infeasible_target():
    b = MonomialBasis(1, ((1,),))
    out = gauss_newton(P("-x1^2", 1), FactorMatrix.from_values(b, [[0.3]]))
    assert not out.converged and out.theta_final >= 1


def test_gauss_newton_honours_deadline():
    out = gauss_newton(P(PARRILO_TEXT), FactorMatrix.from_values(PARRILO_BASIS, [[1, 1, 1]]), deadline=0.0)
    assert not out.converged and out.iterations == 0


def test_refine_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(tol_tau=0)
    with pytest.raises(ValueError):
        RefineConfig(precision_bits=32)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 1e-1))
def test_accepted_steps_never_increase_theta(seed, noise):
    rng = np.random.default_rng(seed)
    b = full_basis(2, 2)
    C = rng.integers(-3, 4, size=(2, len(b))).astype(float)
    f = P("0")
    for row in C:
        q = b.polynomial([Fraction(int(v)) for v in row])
        f = f + q * q
    if f.is_zero():
        return
    L0 = FactorMatrix.from_values(b, (C + noise * rng.standard_normal(C.shape)).tolist())
    out = gauss_newton(f, L0, RefineConfig(max_iters=15))
    h = out.theta_history
    assert all(b2 < a for a, b2 in zip(h, h[1:]))
    assert out.theta_final <= backward_error(f, L0)


def test_float_gauss_newton_reduces_error():
    b = PARRILO_BASIS
    f = P(PARRILO_TEXT)
    C0 = np.array([[1.0, -2.0, 0.5], [0.2, 0.5, 2.0]])
    C, theta = float_gauss_newton(f, b, C0, max_iters=100)
    assert theta < 1e-8
