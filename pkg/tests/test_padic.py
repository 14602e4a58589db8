import random

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from eismu.errors import DomainError, PrecisionError
from eismu.padic import (
    PadicCapped,
    gamma_log_index,
    gamma_log_table,
    mahler_basis_matrices,
    mat_mul_mod,
    teichmuller,
    val,
    vp_frac,
)

PRIMES = [5, 7, 11, 13, 19, 37]


def test_val_examples():
    assert val(PadicCapped(5, 4, 50)) == (2, True)
    assert val(PadicCapped(5, 4, 0)) == (4, False)
    assert val(PadicCapped(5, 4, 7)) == (0, True)


def test_residue_is_reduced():
    x = PadicCapped(5, 2, 7) * PadicCapped(5, 2, 11)
    assert 0 <= x.residue < 25
    assert x.residue == 77 % 25


def test_vp_frac():
    assert vp_frac(sympy.Rational(50, 3), 5) == 2
    assert vp_frac(sympy.Rational(3, 125), 5) == -3


def test_teichmuller_examples():
    assert teichmuller(1, 7, 3).residue == 1
    assert teichmuller(2, 5, 2).residue == 7
    for p in PRIMES:
        assert teichmuller(p - 1, p, 3).residue == p**3 - 1


def test_teichmuller_rejects_non_units():
    with pytest.raises(DomainError):
        teichmuller(10, 5, 2)


@given(st.sampled_from(PRIMES), st.integers(1, 6), st.integers(1, 10**6))
def test_teichmuller_is_root_of_unity(p, M, u):
    if u % p == 0:
        u += 1
    w = teichmuller(u, p, M)
    assert w.residue % p == u % p
    assert pow(w.residue, p - 1, p**M) == 1


def test_gamma_log_examples():
    assert gamma_log_index(1, 3, 7) == 0
    for p in PRIMES:
        assert gamma_log_index(1 + p, 2, p) == 1
    assert gamma_log_index(7, 2, 5) == 0


def test_gamma_log_against_enumeration():
    # brute force: find s with (1+p)^s = u / omega(u)
    p, n = 7, 3
    q = p**n
    for u in range(1, q):
        if u % p == 0:
            continue
        w = teichmuller(u, p, n).residue
        target = u * pow(w, -1, q) % q
        s = next(s for s in range(p ** (n - 1)) if pow(1 + p, s, q) == target)
        assert gamma_log_index(u, n, p) == s
        assert gamma_log_table(p, n)[u] == s


@given(st.sampled_from(PRIMES), st.integers(1, 4), st.integers(1, 10**6), st.integers(1, 10**6))
def test_gamma_log_is_homomorphism(p, n, u, v):
    if u % p == 0:
        u += 1
    if v % p == 0:
        v += 1
    m = p ** (n - 1)
    assert gamma_log_index(u * v, n, p) == (gamma_log_index(u, n, p) + gamma_log_index(v, n, p)) % m


@given(
    st.sampled_from(PRIMES),
    st.integers(1, 6),
    st.integers(0, 10**9),
    st.integers(0, 10**9),
)
def test_val_of_products(p, M, a, b):
    x, y = PadicCapped(p, M, a), PadicCapped(p, M, b)
    vx, vy = val(x), val(y)
    if vx.exact and vy.exact:
        assert val(x * y).value == min(vx.value + vy.value, M)


def test_mahler_small_rows():
    fwd, bwd = mahler_basis_matrices(4, 7, 3)
    # z^0 = C(z,0), z^1 = C(z,1), z^2 = C(z,1) + 2 C(z,2)
    assert [row[0] for row in fwd] == [1, 0, 0]
    assert [row[1] for row in fwd] == [0, 1, 0]
    assert [row[2] for row in fwd] == [0, 1, 2]
    # C(z,2) = (z^2 - z)/2
    inv2 = pow(2, -1, 7**3)
    assert [bwd[i][2] for i in range(3)] == [0, (-inv2) % 7**3, inv2]


def test_mahler_against_sympy_expansion():
    z = sympy.symbols("z")
    p, M, k = 11, 4, 9
    q = p**M
    _, bwd = mahler_basis_matrices(k, p, M)
    for j in range(k - 1):
        poly = sympy.Poly(sympy.expand_func(sympy.binomial(z, j)), z)
        coeffs = [poly.coeff_monomial(z**i) for i in range(k - 1)]
        want = [int(c.p * pow(int(c.q), -1, q)) % q for c in coeffs]
        assert [bwd[i][j] for i in range(k - 1)] == want


def test_mahler_identity_37_32():
    fwd, bwd = mahler_basis_matrices(32, 37, 4)
    prod = mat_mul_mod(fwd, bwd, 37**4)
    n = len(prod)
    assert prod == [[int(i == j) for j in range(n)] for i in range(n)]


@pytest.mark.property
@given(st.sampled_from([(11, 8), (19, 8), (37, 20)]), st.integers(1, 5), st.randoms(use_true_random=False))
def test_mahler_round_trip(pk, M, rnd):
    p, k = pk
    q = p**M
    fwd, bwd = mahler_basis_matrices(k, p, M)
    v = [[rnd.randrange(q) for _ in range(k - 1)]]
    assert mat_mul_mod(mat_mul_mod(v, fwd, q), bwd, q) == v


def test_mahler_rejects_large_degree():
    with pytest.raises(PrecisionError):
        mahler_basis_matrices(9, 5, 2)
