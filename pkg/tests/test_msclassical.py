from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from eismu import linalg
from eismu import msclassical as mc
from eismu.chars import quadratic_character
from eismu.errors import DomainError, RankNotOne
from eismu.padic import vp_capped


def mobius(g, z):
    a, b, c, d = g
    return Fraction(a * z.numerator + b * z.denominator, c * z.numerator + d * z.denominator)


@pytest.fixture(scope="module")
def space11_4(small_basis):
    return mc.build_symbol_space(small_basis, 4, 4)


def random_symbol(space, seed):
    rng = np.random.default_rng(seed)
    return space.symbol(rng.integers(0, space.q, space.dim))


def test_manin_basis_sizes():
    assert mc.build_manin_basis(1, 11).ngens == 12
    assert mc.build_manin_basis(1, 37).ngens == 38
    assert mc.build_manin_basis(5, 19, quadratic_character(5)).ngens == 120
    with pytest.raises(DomainError):
        mc.build_manin_basis(19, 19)


def test_relation_orbits_partition():
    b = mc.build_manin_basis(5, 19, quadratic_character(5))
    for orbits in (b.sigma_orbits(), b.tau_orbits()):
        flat = sorted(i for orb in orbits for i in orb)
        assert flat == list(range(b.ngens))


def test_act_dual_examples():
    p, M = 11, 3
    alpha = mc.WeightCoeffDual.from_monomial([1, 0, 0, 0], p, M)
    assert mc.act_dual(alpha, (1, 0, 0, 1), 5) == alpha
    shifted = mc.act_dual(alpha, (1, 1, 0, 1), 5)
    assert shifted([1, 0, 0, 0]) == 1
    # k = 4, alpha = (P -> P(0)), gamma = [1,0;0,p]
    ev0 = mc.WeightCoeffDual.from_monomial([1, 0, 0], p, M)
    out = mc.act_dual(ev0, (1, 0, 0, p), 4)
    assert out.monomial() == [1, 0, 0]


def test_act_dual_against_polynomial_expansion():
    # (alpha|gamma)(P) = alpha((a+cz)^g P((b+dz)/(a+cz))), expanded with sympy
    z = sympy.symbols("z")
    p, M, g = 11, 4, 4
    q = p**M
    rng = np.random.default_rng(2)
    mono = [int(x) for x in rng.integers(0, q, g + 1)]
    alpha = mc.WeightCoeffDual.from_monomial(mono, p, M)
    gamma = (3, 5, 11, 2)
    a, b, c, d = gamma
    out = mc.act_dual(alpha, gamma, g + 2).monomial()
    for j in range(g + 1):
        poly = sympy.Poly(sympy.expand((a + c * z) ** (g - j) * (b + d * z) ** j), z)
        want = sum(int(poly.coeff_monomial(z**i)) * mono[i] for i in range(g + 1)) % q
        assert out[j] == want


def test_space_dimension_level_11_weight_2(small_basis):
    sp = mc.build_symbol_space(small_basis, 2, 4)
    assert sp.dim == 3


def test_t2_characteristic_polynomial_level_11(small_basis):
    sp = mc.build_symbol_space(small_basis, 2, 4)
    x = sympy.symbols("x")
    q = 11**4
    cp = sympy.Matrix(mc.hecke_matrix(sp, "T2").tolist()).charpoly(x).all_coeffs()
    want = sympy.Poly((x - 3) * (x + 2) ** 2, x).all_coeffs()
    assert [int(c) % q for c in cp] == [int(c) % q for c in want]


def test_ordinary_rank_level_11(small_basis):
    sp = mc.build_symbol_space(small_basis, 2, 4)
    U = mc.hecke_matrix(sp, "U11")
    x = sympy.symbols("x")
    cp = sympy.Matrix(U.tolist()).charpoly(x).all_coeffs()
    assert [int(c) % 11**4 for c in cp] == [1, 11**4 - 3, 3, 11**4 - 1]
    e = mc.ordinary_projector(U, 11, 4)
    assert linalg.eliminate(e, 11, 1).rank == 3


def test_projector_trivial_cases():
    q = 7**3
    U = np.array([[1, 2], [0, 3]], dtype=np.int64)
    assert np.array_equal(mc.ordinary_projector(U, 7, 3), np.eye(2, dtype=np.int64))
    N = np.array([[0, 7], [0, 0]], dtype=np.int64)
    assert not mc.ordinary_projector(N, 7, 3).any()
    assert q == 343


@pytest.mark.property
def test_ordinary_projector_properties(space11_4):
    sp = space11_4
    q = sp.q
    U = mc.hecke_matrix(sp, "U11")
    e = mc.ordinary_projector(U, 11, sp.W)
    assert np.array_equal(linalg.matmul_mod(e, e, q), e)
    assert np.array_equal(linalg.matmul_mod(e, U, q), linalg.matmul_mod(U, e, q))
    Y, _ = linalg.image_basis(e, 11, sp.W)
    Ur = mc.restrict(U, Y, 11, sp.W)
    det = int(sympy.Matrix(Ur.tolist()).det())
    assert det % 11 != 0


def test_iota_is_involution(space11_4):
    I = mc.hecke_matrix(space11_4, "iota")
    assert np.array_equal(linalg.matmul_mod(I, I, space11_4.q), np.eye(space11_4.dim, dtype=np.int64))


@pytest.mark.property
@given(st.integers(0, 10**6))
def test_random_symbols_satisfy_relations(space11_4, seed):
    phi = random_symbol(space11_4, seed)
    assert phi.relation_defect() >= phi.M
    for op in ("T2", "U11", "iota"):
        assert mc.apply_operator(space11_4, op, phi).relation_defect() >= phi.M


@given(st.integers(0, 10**6), st.sampled_from([(0, 1), (2, 7), (-3, 5), (13, 22)]))
def test_path_evaluation(space11_4, seed, frac):
    phi = random_symbol(space11_4, seed)
    r = Fraction(*frac)
    assert not phi.evaluate_mono(r, r).any()
    a, b, c = r, Fraction(1, 3), Fraction(-5, 8)
    lhs = phi.evaluate_mono(a, c)
    rhs = (phi.evaluate_mono(a, b) + phi.evaluate_mono(b, c)) % phi.q
    assert np.array_equal(lhs, rhs)
    # phi(gamma D) = phi(D) | gamma^-1 for gamma in Gamma_0(11)
    gamma = (1, 2, 11, 23)
    left = mc.evaluate_at_path(phi, mobius(gamma, a), mobius(gamma, c))
    right = mc.act_dual(mc.evaluate_at_path(phi, a, c), mc.adjugate(gamma), phi.k)
    assert left == right


def test_hecke_matrix_against_direct_definition(space11_4):
    sp = space11_4
    phi = random_symbol(sp, 5)
    for op, kind, ell in (("T2", "T", 2), ("T3", "T", 3), ("U11", "U", 11)):
        A = mc.hecke_matrix(sp, op)
        via_matrix = sp.symbol(linalg.matmul_mod(A, sp.coords(phi.values)[:, None], sp.q)[:, 0])
        assert np.array_equal(via_matrix.values, mc.hecke_direct(phi, kind, ell).values)


def test_hecke_direct_with_character():
    basis = mc.build_manin_basis(5, 7, quadratic_character(5))
    sp = mc.build_symbol_space(basis, 4, 3)
    phi = random_symbol(sp, 1)
    for op, kind, ell in (("T2", "T", 2), ("U5", "U", 5), ("U7", "U", 7)):
        A = mc.hecke_matrix(sp, op)
        via_matrix = sp.symbol(linalg.matmul_mod(A, sp.coords(phi.values)[:, None], sp.q)[:, 0])
        assert np.array_equal(via_matrix.values, mc.hecke_direct(phi, kind, ell).values)


@pytest.mark.property
@settings(max_examples=20)
@given(st.sampled_from(["T2", "T3", "T5", "T7", "U11", "iota"]), st.sampled_from(["T2", "T3", "T5", "T7", "U11", "iota"]))
def test_hecke_commutativity(space11_4, a, b):
    q = space11_4.q
    A, B = mc.hecke_matrix(space11_4, a), mc.hecke_matrix(space11_4, b)
    assert np.array_equal(linalg.matmul_mod(A, B, q), linalg.matmul_mod(B, A, q))


def test_disk_cache_round_trip(small_basis, tmp_path):
    sp = mc.cached_symbol_space(small_basis, 4, 3, tmp_path)
    cold = mc.hecke_matrix(sp, "T2", tmp_path)
    warm_space = mc.cached_symbol_space(small_basis, 4, 3, tmp_path)
    warm = mc.hecke_matrix(warm_space, "T2", tmp_path)
    assert np.array_equal(cold, warm)
    assert np.array_equal(sp.B, warm_space.B)
    assert any(tmp_path.rglob("*.npz"))


# -- the two worked cases --------------------------------------------------------------


def test_case19_packet(run19):
    pk = run19.packet
    assert pk.rank_one_verified and pk.mult_one_verified
    assert pk.ord_ap_minus_one == 3
    assert pk.eis_depth == 2
    assert pk.a_p % 19 != 0


def test_case37_packet(run37):
    pk = run37.packet
    assert pk.rank_one_verified and pk.mult_one_verified
    assert pk.ord_ap_minus_one == 1
    assert pk.eis_depth == 1


@pytest.mark.parametrize("name", ["run19", "run37"])
def test_cusp_eigensymbol(name, request):
    run = request.getfixturevalue(name)
    pk = run.packet
    sym = pk.context["symbol"]
    q = sym.q
    p = sym.p
    assert sym.relation_defect() >= sym.M
    assert mc.d0_value(sym) % p != 0
    assert np.array_equal(mc.iota_symbol(sym).values, sym.values)
    for ell in (2, 3):
        if pk.N % ell == 0:
            continue
        got = mc.hecke_direct(sym, "T", ell)
        assert np.array_equal(got.values, sym.scale(pk.a_ell[ell]).values)
        e = (1 + pk.chi(ell) * pow(ell, pk.k - 1, q)) % q
        assert vp_capped(pk.a_ell[ell] - e, p, sym.M) >= pk.eis_depth
    got = mc.hecke_direct(sym, "U", p)
    assert np.array_equal(got.values, sym.scale(pk.a_p).values)


def test_case19_eigenvalues_all_congruent(run19):
    pk = run19.packet
    q = 19**pk.precision
    for ell, a in pk.a_ell.items():
        e = 1 if (5 * 19) % ell == 0 else (1 + pk.chi(ell) * pow(ell, 7, q)) % q
        assert vp_capped(a - e, 19, pk.precision) >= 2


@pytest.mark.parametrize("name", ["run19", "run37"])
def test_boundary_symbol(name, request):
    run = request.getfixturevalue(name)
    basis = run.packet.context["space"].basis
    k = run.k
    E = mc.boundary_eisenstein_symbol(basis, k, 5)
    q = E.q
    assert E.relation_defect() >= 5
    assert np.array_equal(mc.iota_symbol(E).values, E.values)
    assert mc.d0_value(E) == q - 1
    for ell in (2, 3, 7):
        if basis.L % ell == 0:
            continue
        e = (1 + basis.chi(ell) * pow(ell, k - 1, q)) % q
        assert np.array_equal(mc.hecke_direct(E, "T", ell).values, E.scale(e).values)
    assert np.array_equal(mc.hecke_direct(E, "U", basis.p).values, E.values)
    for n in (1, 2, 3):
        m = mc.measure_disc_values(E, 1, n)
        assert not m.values[m.units()].any()


def test_measure_additivity(run37):
    sym = run37.packet.context["symbol"]
    a_p = run37.packet.a_p
    m1 = mc.measure_disc_values(sym, a_p, 1)
    m2 = mc.measure_disc_values(sym, a_p, 2)
    assert np.array_equal(m2.coarsen().values, m1.values)
    assert np.array_equal(run37.measure.coarsen().values, m2.values)


def test_total_measure_trivial_character(run37):
    pk = run37.packet
    sym = pk.context["symbol"]
    q = sym.q
    m1 = mc.measure_disc_values(sym, pk.a_p, 1)
    want = (1 - pow(pk.a_p, -1, q)) * mc.d0_value(sym) % q
    assert m1.total() == want
    assert vp_capped(m1.total(), 37, sym.M) == pk.ord_ap_minus_one


def test_level_one_plus_center_disc(run37):
    # the unit discs at level 1 together with pZ_p make up all of Z_p
    pk = run37.packet
    sym = pk.context["symbol"]
    q = sym.q
    inv = pow(pk.a_p, -1, q)
    discs = mc.one_values(sym, [(a, 37) for a in range(37)])
    units_total = mc.measure_disc_values(sym, pk.a_p, 1).total()
    assert (units_total + int(discs[0]) * inv) % q == int(discs.sum()) * inv % q
    total = int(discs.sum()) * inv % q
    # U_p eigen relation: sum_a phi({oo} - {a/p}) = a_p phi({oo} - {0})
    assert total == mc.d0_value(sym) % q


def test_residual_rank_37():
    assert mc.residual_eisenstein_rank(37, 32) == 2
    assert mc.check_residual_rank(37, 32) == 2


def test_residual_character():
    chi = mc.residual_character(37, 32)
    # values live in F_37, so multiplicativity is checked modulo 37
    units = range(1, 37)
    assert all(chi(a * b) == chi(a) * chi(b) % 37 for a in units for b in units)
    assert chi(2) == pow(2, 30, 37)
    assert chi(-1) == 1


def test_rank_detection_on_synthetic_rank_three(monkeypatch):
    monkeypatch.setattr(mc, "residual_eisenstein_rank", lambda p, k, count=4, cache_dir=None: 3)
    with pytest.raises(RankNotOne) as info:
        mc.check_residual_rank(101, 68)
    assert info.value.rank == 3
    monkeypatch.setattr(mc, "residual_eisenstein_rank", lambda p, k, count=4, cache_dir=None: 1)
    with pytest.raises(DomainError):
        mc.check_residual_rank(101, 68)


def test_eigenpacket_rejects_parity_mismatch():
    basis = mc.build_manin_basis(5, 19, quadratic_character(5))
    with pytest.raises(DomainError):
        mc.find_eisenstein_eigenpacket(basis, 7, 5)


def test_no_congruence_is_reported():
    basis = mc.build_manin_basis(1, 37)
    with pytest.raises(DomainError):
        mc.find_eisenstein_eigenpacket(basis, 30, 3)
