from fractions import Fraction

import pytest
from hypothesis import given

from exactsos.gram import (
    BasisTooLarge,
    BasisTooSmall,
    GramRational,
    MonomialBasis,
    full_basis,
    gram_to_poly,
    least_norm_gram,
    matching_system,
    project_onto_affine,
    support_restricted_basis,
)
from exactsos.poly import Polynomial

from .conftest import PARRILO_TEXT, P
from .strategies import rational_matrices

PARRILO_BASIS = MonomialBasis(2, ((2, 0), (0, 2), (1, 1)))
PARRILO_G = [[2, -3, 1], [-3, 5, 0], [1, 0, 5]]


def sym(M):
    n = len(M)
    return [[(M[i][j] + M[j][i]) / 2 for j in range(n)] for i in range(n)]


def test_full_basis_examples():
    b = full_basis(2, 2)
    assert list(b) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert list(full_basis(1, 0)) == [(0,)]
    assert len(full_basis(3, 2)) == 10


def test_full_basis_cap():
    with pytest.raises(BasisTooLarge):
        full_basis(6, 6, cap=100)


def test_restricted_basis_parrilo():
    b = support_restricted_basis(P(PARRILO_TEXT))
    assert {(2, 0), (1, 1), (0, 2)} <= set(b)
    assert not {(0, 0), (1, 0), (0, 1)} & set(b)


def test_restricted_basis_small_cases():
    assert list(support_restricted_basis(P("x1^2", 1))) == [(1,)]
    assert set(support_restricted_basis(P("x1^4 + x2^4"))) == {(2, 0), (1, 1), (0, 2)}


def test_gram_to_poly_reference_matrix():
    assert gram_to_poly(GramRational(PARRILO_BASIS, PARRILO_G)) == P(PARRILO_TEXT)


def test_gram_to_poly_trivial():
    b = MonomialBasis(2, ((1, 0), (0, 1)))
    assert gram_to_poly(GramRational(b, [[0, 0], [0, 0]])).is_zero()
    assert gram_to_poly(GramRational(b, [[1, 0], [0, 1]])) == P("x1^2 + x2^2")


def test_matching_system_reference_constraints():
    sys = matching_system(P(PARRILO_TEXT), PARRILO_BASIS)
    eqs = {}
    for mono, row, b in zip(sys.target_monomials, sys.rows, sys.rhs):
        eqs[mono] = ({sys.unknowns[u]: c for u, c in row.items()}, b)
    assert eqs[(4, 0)] == ({(0, 0): 1}, 2)
    assert eqs[(0, 4)] == ({(1, 1): 1}, 5)
    assert eqs[(2, 2)] == ({(2, 2): 1, (0, 1): 2}, -1)
    assert eqs[(3, 1)] == ({(0, 2): 2}, 2)
    assert eqs[(1, 3)] == ({(1, 2): 2}, 0)


def test_matching_system_zero_polynomial_is_homogeneous():
    sys = matching_system(Polynomial.zero(2), full_basis(2, 1))
    assert all(b == 0 for b in sys.rhs)


def test_basis_too_small():
    with pytest.raises(BasisTooSmall):
        matching_system(P("x1^4 + 1"), MonomialBasis(2, ((2, 0),)))


def test_projection_fixed_point():
    G0 = GramRational(PARRILO_BASIS, PARRILO_G)
    sys = matching_system(P(PARRILO_TEXT), PARRILO_BASIS)
    assert project_onto_affine(G0, sys).entries == G0.entries


def test_projection_of_diagonal_guess_is_feasible():
    f = P(PARRILO_TEXT)
    sys = matching_system(f, PARRILO_BASIS)
    G = project_onto_affine(GramRational(PARRILO_BASIS, [[2, 0, 0], [0, 5, 0], [0, 0, 0]]), sys)
    assert sys.is_satisfied(G.vec())
    assert gram_to_poly(G) == f


@given(rational_matrices(3))
def test_matching_system_self_consistency(M):
    b = full_basis(2, 1)
    G = GramRational(b, sym(M))
    f = gram_to_poly(G)
    assert matching_system(f, b).is_satisfied(G.vec())


@given(rational_matrices(3), rational_matrices(3))
def test_projection_is_feasible_and_idempotent(M, N):
    b = full_basis(2, 1)
    f = gram_to_poly(GramRational(b, sym(M)))
    sys = matching_system(f, b)
    G = project_onto_affine(GramRational(b, sym(N)), sys)
    assert sys.is_satisfied(G.vec())
    assert project_onto_affine(G, sys).entries == G.entries


@given(rational_matrices(3))
def test_least_norm_is_no_larger_than_any_solution(M):
    b = full_basis(2, 1)
    G = GramRational(b, sym(M))
    ln = least_norm_gram(matching_system(gram_to_poly(G), b))
    frob = lambda A: sum(x * x for row in A.entries for x in row)  # noqa: E731
    assert frob(ln) <= frob(G)


def test_gram_vec_round_trip():
    G = GramRational(PARRILO_BASIS, PARRILO_G)
    assert GramRational.from_vec(PARRILO_BASIS, G.vec()).entries == G.entries
    assert all(isinstance(x, Fraction) for x in G.vec())
