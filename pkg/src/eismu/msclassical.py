"""Classical weight-k modular symbols for Gamma_0(Np) with a quadratic or trivial character.

Symbols are stored through Manin generators. For g in SL_2(Z) put
X(g) = phi(g{0} - g{oo}) | g; then X(gamma g) = psi(d_gamma) X(g), so X is a
function on P^1(Z/Np) twisted by psi, subject to

    X(g) = -X(g sigma) | sigma^-1,       sigma = [0,-1;1,0]
    X(g) + X(g tau) | tau^-1 + X(g tau^2) | tau^-2 = 0,   tau = [0,-1;1,-1]

Values live in the dual of polynomials of degree <= g = k-2 and are stored in
monomial-dual coordinates alpha(z^j); for g < p these are integrally
equivalent to the binomial-dual coordinates alpha(C(z, j)).
The weight action is (gamma.P)(z) = (a+cz)^g P((b+dz)/(a+cz)) and
(alpha|gamma)(P) = alpha(gamma.P), so alpha|gamma = alpha @ act(gamma).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, gcd
from pathlib import Path

import numpy as np

from . import linalg
from .chars import DirichletCharacter, eisenstein_eigenvalue, is_prime, trivial_character
from .errors import DomainError, InsufficientPrecision, PrecisionError, RankNotOne
from .padic import mahler_basis_matrices, vp, vp_capped

CACHE_VERSION = 1

SIGMA = (0, -1, 1, 0)
TAU = (0, -1, 1, -1)
TAU2 = (-1, 1, -1, 0)
IOTA = (-1, 0, 0, 1)


def mat_mul(x, y):
    a, b, c, d = x
    e, f, g, h = y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def adjugate(x):
    a, b, c, d = x
    return (d, -b, -c, a)


def det(x):
    return x[0] * x[3] - x[1] * x[2]


# -- projective line ---------------------------------------------------------


class P1:
    """P^1(Z/L): canonical representatives and a lookup table.

    lookup[(c, d)] = (i, lam) means (c, d) = lam * reps[i] modulo L.
    """

    def __init__(self, L: int):
        self.L = L
        units = [u for u in range(1, L + 1) if gcd(u, L) == 1] if L > 1 else [1]
        reps = []
        table = {}
        for c in range(L):
            for d in range(L):
                if (c, d) in table or gcd(gcd(c, d), L) != 1:
                    continue
                i = len(reps)
                reps.append((c, d))
                for u in units:
                    key = (c * u % L, d * u % L)
                    table.setdefault(key, (i, u % L))
        if L == 1:
            reps, table = [(0, 0)], {(0, 0): (0, 0)}
        self.reps = reps
        self.table = table

    def __len__(self):
        return len(self.reps)

    def lookup(self, c: int, d: int):
        return self.table.get((c % self.L, d % self.L))


def lift_to_sl2(c: int, d: int, L: int) -> tuple[int, int, int, int]:
    """A matrix in SL_2(Z) whose bottom row is congruent to (c, d) mod L."""
    c %= L
    d %= L
    if L == 1:
        return (1, 0, 0, 1)
    if c == 0:
        c = L
    t = 0
    while gcd(c, d + t * L) != 1:
        t += 1
    d = d + t * L
    g, x, y = _egcd(d, c)
    # x d + y c = 1  ->  a = x, b = -y
    return (x, -y, c, d)


def _egcd(a: int, b: int):
    if b == 0:
        return (a, 1, 0) if a >= 0 else (-a, -1, 0)
    g, x, y = _egcd(b, a % b)
    return g, y, x - (a // b) * y


@dataclass
class ManinBasis:
    N: int
    p: int
    chi: DirichletCharacter
    p1: P1 = field(repr=False)
    mats: list = field(repr=False)
    sigma: list = field(repr=False)  # i -> (j, sign)
    tau: list = field(repr=False)  # i -> (j1, s1, j2, s2)
    iota: list = field(repr=False)  # i -> (j, sign)

    @property
    def L(self) -> int:
        return self.N * self.p

    @property
    def ngens(self) -> int:
        return len(self.p1)

    def sign(self, lam: int) -> int:
        return self.chi(lam)

    def coset(self, c: int, d: int):
        """(index, character sign) for the coset with bottom row (c, d), or None."""
        hit = self.p1.lookup(c, d)
        if hit is None:
            return None
        i, lam = hit
        return i, self.chi(lam)

    def tau_orbits(self) -> list[tuple[int, ...]]:
        seen = set()
        out = []
        for i in range(self.ngens):
            if i in seen:
                continue
            j1 = self.tau[i][0]
            j2 = self.tau[i][2]
            orb = tuple(sorted({i, j1, j2}))
            seen.update(orb)
            out.append(orb)
        return out

    def sigma_orbits(self) -> list[tuple[int, ...]]:
        seen = set()
        out = []
        for i in range(self.ngens):
            if i in seen:
                continue
            orb = tuple(sorted({i, self.sigma[i][0]}))
            seen.update(orb)
            out.append(orb)
        return out


def build_manin_basis(N: int, p: int, chi: DirichletCharacter | None = None) -> ManinBasis:
    if gcd(N, p) != 1:
        raise DomainError("N and p must be coprime")
    chi = chi or trivial_character()
    if (N * p) % chi.modulus:
        raise DomainError("character modulus must divide Np")
    L = N * p
    p1 = P1(L)
    mats = [lift_to_sl2(c, d, L) for (c, d) in p1.reps]

    def look(c, d):
        i, lam = p1.lookup(c, d)
        return i, chi(lam)

    sigma, tau, iota = [], [], []
    for (c, d) in p1.reps:
        sigma.append(look(d, -c))
        j1, s1 = look(d, -c - d)
        j2, s2 = look(-c - d, c)
        tau.append((j1, s1, j2, s2))
        iota.append(look(-c, d))
    return ManinBasis(N, p, chi, p1, mats, sigma, tau, iota)


# -- weight action -------------------------------------------------------------


def _poly_pow(a: int, c: int, m: int) -> list[int]:
    return [comb(m, t) * a ** (m - t) * c**t for t in range(m + 1)]


def action_matrix_exact(gamma, g: int) -> list[list[int]]:
    """act(gamma)[i][j] = coefficient of z^i in (a+cz)^(g-j) (b+dz)^j."""
    a, b, c, d = gamma
    out = [[0] * (g + 1) for _ in range(g + 1)]
    for j in range(g + 1):
        A = _poly_pow(a, c, g - j)
        B = _poly_pow(b, d, j)
        for s, x in enumerate(A):
            if x:
                for t, y in enumerate(B):
                    out[s + t][j] += x * y
    return out


def action_matrix(gamma, g: int, q: int) -> np.ndarray:
    """act(gamma) reduced mod q as an int64 array."""
    a, b, c, d = (int(x) % q for x in gamma)
    n = g + 1
    if q * q * n < 2**62:
        binom = _binom_table(g, q)
        apow = _powers(a, g, q)
        cpow = _powers(c, g, q)
        bpow = _powers(b, g, q)
        dpow = _powers(d, g, q)
        out = np.zeros((n, n), dtype=np.int64)
        for j in range(n):
            m = g - j
            A = binom[m, : m + 1] * apow[m::-1] % q * cpow[: m + 1] % q
            B = binom[j, : j + 1] * bpow[j::-1] % q * dpow[: j + 1] % q
            out[:, j] = np.convolve(A, B) % q
        return out
    exact = action_matrix_exact(gamma, g)
    return np.array([[x % q for x in row] for row in exact], dtype=np.int64)


@lru_cache(maxsize=64)
def _binom_table(g: int, q: int) -> np.ndarray:
    t = np.zeros((g + 1, g + 1), dtype=np.int64)
    for m in range(g + 1):
        for s in range(m + 1):
            t[m, s] = comb(m, s) % q
    return t


def _powers(x: int, g: int, q: int) -> np.ndarray:
    out = np.empty(g + 1, dtype=np.int64)
    v = 1
    for i in range(g + 1):
        out[i] = v
        v = v * x % q
    return out


def eval_one_vector(c: int, d: int, g: int, q: int) -> np.ndarray:
    """Monomial coefficients of (d - c z)^g, i.e. the polynomial h^-1 . 1 for h = [*,*;c,d]."""
    return np.array([comb(g, t) * pow(d, g - t, q) * pow(-c, t, q) % q for t in range(g + 1)], dtype=np.int64)


# -- dual coefficient vectors -------------------------------------------------


@dataclass(frozen=True)
class WeightCoeffDual:
    """An element of Hom(P_g, Z/p^M) in binomial-dual coordinates alpha(C(z, j))."""

    p: int
    M: int
    values: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.values) + 1

    @classmethod
    def from_monomial(cls, mono, p: int, M: int) -> "WeightCoeffDual":
        q = p**M
        g = len(mono) - 1
        _, backward = mahler_basis_matrices(g + 2, p, M)
        # alpha(C(z, j)) = sum_i backward[i][j] alpha(z^i)
        vals = tuple(sum(backward[i][j] * int(mono[i]) for i in range(g + 1)) % q for j in range(g + 1))
        return cls(p, M, vals)

    def monomial(self) -> list[int]:
        q = self.p**self.M
        g = len(self.values) - 1
        forward, _ = mahler_basis_matrices(g + 2, self.p, self.M)
        return [sum(forward[i][j] * self.values[i] for i in range(g + 1)) % q for j in range(g + 1)]

    def __call__(self, poly_monomial) -> int:
        """Evaluate on a polynomial given by monomial coefficients."""
        q = self.p**self.M
        return sum(int(a) * b for a, b in zip(poly_monomial, self.monomial())) % q


def act_dual(alpha: WeightCoeffDual, gamma, k: int) -> WeightCoeffDual:
    g = k - 2
    if len(alpha.values) != g + 1:
        raise DomainError("weight mismatch")
    if det(gamma) == 0:
        raise DomainError("singular matrix")
    q = alpha.p**alpha.M
    mono = np.array(alpha.monomial(), dtype=np.int64)
    act = action_matrix(gamma, g, q)
    out = linalg.matmul_mod(mono[None, :], act, q)[0]
    return WeightCoeffDual.from_monomial(out, alpha.p, alpha.M)


# -- cusps and paths -------------------------------------------------------------

INF = None


def convergent_matrices(x: Fraction) -> list[tuple[int, int, int, int]]:
    """SL_2(Z) matrices h_j with {x} - {oo} = -sum_j h_j({0} - {oo})."""
    x = Fraction(x)
    num, den = x.numerator, x.denominator
    # continued fraction
    cf = []
    while True:
        q_, r = divmod(num, den)
        cf.append(q_)
        if r == 0:
            break
        num, den = den, r
    p_prev, q_prev = 1, 0
    p_cur, q_cur = cf[0], 1
    out = []
    for j in range(len(cf)):
        if j > 0:
            p_prev, p_cur = p_cur, cf[j] * p_cur + p_prev
            q_prev, q_cur = q_cur, cf[j] * q_cur + q_prev
        # columns (p_cur, q_cur) and (p_prev, q_prev); det = p_cur q_prev - p_prev q_cur
        dt = p_cur * q_prev - p_prev * q_cur
        if dt == 1:
            out.append((p_cur, p_prev, q_cur, q_prev))
        else:
            out.append((p_cur, -p_prev, q_cur, -q_prev))
    return out


def _as_cusp(x):
    if x is None:
        return None
    return Fraction(x)


# -- symbols ---------------------------------------------------------------------


@dataclass
class ClassicalSymbol:
    """Generator values X[i] (monomial-dual coordinates) of a weight-k symbol mod p^M."""

    basis: ManinBasis
    k: int
    M: int
    values: np.ndarray  # shape (ngens, k-1)
    sign: int | None = None

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def q(self) -> int:
        return self.basis.p**self.M

    def generator_value(self, i: int) -> WeightCoeffDual:
        return WeightCoeffDual.from_monomial(self.values[i], self.p, self.M)

    def x_of(self, gamma):
        """X(gamma) for gamma in SL_2(Z)."""
        i, s = self.basis.coset(gamma[2], gamma[3])
        return s * self.values[i] % self.q

    def unimodular_value(self, h) -> np.ndarray:
        """phi(h{0} - h{oo}) as a monomial-dual vector."""
        g = self.k - 2
        return linalg.matmul_mod(self.x_of(h)[None, :], action_matrix(adjugate(h), g, self.q), self.q)[0]

    def value_to_inf(self, x) -> np.ndarray:
        """phi({x} - {oo})."""
        g = self.k - 2
        out = np.zeros(g + 1, dtype=np.int64)
        if x is None:
            return out
        for h in convergent_matrices(x):
            out = (out - self.unimodular_value(h)) % self.q
        return out

    def evaluate_mono(self, r, s) -> np.ndarray:
        return (self.value_to_inf(_as_cusp(r)) - self.value_to_inf(_as_cusp(s))) % self.q

    def relation_defect(self) -> int:
        """Largest p-power modulus to which all Manin relations hold (M if exact)."""
        return relation_defect(self.basis, self.k, self.values, self.q)

    def scale(self, c: int) -> "ClassicalSymbol":
        return ClassicalSymbol(self.basis, self.k, self.M, self.values * (c % self.q) % self.q, self.sign)

    def __add__(self, other):
        return ClassicalSymbol(self.basis, self.k, self.M, (self.values + other.values) % self.q)

    def __sub__(self, other):
        return ClassicalSymbol(self.basis, self.k, self.M, (self.values - other.values) % self.q)

    def is_zero(self) -> bool:
        return not (self.values % self.q).any()


def evaluate_at_path(phi: ClassicalSymbol, r, s) -> WeightCoeffDual:
    """phi({r} - {s}); cusps are rationals or None for infinity."""
    return WeightCoeffDual.from_monomial(phi.evaluate_mono(r, s), phi.p, phi.M)


def relation_defect(basis: ManinBasis, k: int, values: np.ndarray, q: int) -> int:
    p = basis.p
    g = k - 2
    M = round(np.log(q) / np.log(p))
    act_s = action_matrix(SIGMA, g, q)
    act_t = action_matrix(TAU, g, q)
    act_t2 = action_matrix(TAU2, g, q)
    X = values % q
    worst = M
    js = [basis.sigma[i][0] for i in range(basis.ngens)]
    ss = np.array([basis.sigma[i][1] for i in range(basis.ngens)], dtype=np.int64)
    r1 = (linalg.matmul_mod(X, act_s, q) + ss[:, None] * X[js]) % q
    j1 = [t[0] for t in basis.tau]
    s1 = np.array([t[1] for t in basis.tau], dtype=np.int64)
    j2 = [t[2] for t in basis.tau]
    s2 = np.array([t[3] for t in basis.tau], dtype=np.int64)
    r2 = (X + s1[:, None] * linalg.matmul_mod(X[j1], act_t2, q) + s2[:, None] * linalg.matmul_mod(X[j2], act_t, q)) % q
    for r in (r1, r2):
        worst = min(worst, linalg.content(r, p, M))
    return worst


# -- the symbol space -------------------------------------------------------------


@dataclass
class SymbolSpace:
    """Saturated Z_p-basis (mod p^W) of the weight-k symbols on a Manin basis.

    Columns of B are full generator-value vectors, flattened as
    X[i, t] -> i*(k-1) + t. Coordinates of a vector in the space are read off
    at the positions pos, where B is the identity.
    """

    basis: ManinBasis
    k: int
    W: int
    reliable: int
    B: np.ndarray
    pos: np.ndarray

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def q(self) -> int:
        return self.basis.p**self.W

    @property
    def dim(self) -> int:
        return self.B.shape[1]

    def symbol(self, coords, M: int | None = None) -> ClassicalSymbol:
        M = M or self.W
        vec = linalg.matmul_mod(self.B, np.asarray(coords, dtype=np.int64).reshape(-1, 1), self.q)[:, 0]
        return ClassicalSymbol(self.basis, self.k, M, vec.reshape(self.basis.ngens, self.k - 1) % self.p**M)

    def coords(self, values: np.ndarray) -> np.ndarray:
        flat = np.asarray(values, dtype=np.int64).reshape(-1)
        return flat[self.pos] % self.q


def _relation_system(basis: ManinBasis, k: int, q: int):
    """Relations on the sigma-reduced unknowns.

    Returns (R, free_gens, transforms) with X_j = X_{free(j)} @ transforms[j].
    """
    g = k - 2
    n = g + 1
    ngens = basis.ngens
    act_s = action_matrix(SIGMA, g, q)
    act_t = action_matrix(TAU, g, q)
    act_t2 = action_matrix(TAU2, g, q)
    eye = np.eye(n, dtype=np.int64)
    parent = [None] * ngens
    trans = [None] * ngens
    free_gens = []
    extra = []  # (free generator, block) constraints X_f @ block = 0
    sign_g = (-1) ** g
    for orb in basis.sigma_orbits():
        i = orb[0]
        j, s = basis.sigma[i]
        parent[i] = len(free_gens)
        trans[i] = eye
        free_gens.append(i)
        if j == i:
            extra.append((i, (act_s + s * eye) % q))
        else:
            s_inv = pow(s, -1, q)
            parent[j] = parent[i]
            trans[j] = (-s_inv * act_s) % q
            s2 = basis.sigma[j][1]
            coeff = (s2 - s_inv * sign_g) % q
            if coeff:
                extra.append((i, coeff * eye % q))
    nfree = len(free_gens)
    rows = []
    for orb in basis.tau_orbits():
        i = orb[0]
        j1, s1, j2, s2 = basis.tau[i]
        block = np.zeros((n, nfree * n), dtype=np.int64)
        for j, c in ((i, eye), (j1, s1 * act_t2), (j2, s2 * act_t)):
            f = parent[j]
            m = linalg.matmul_mod(trans[j], c % q, q)
            block[:, f * n : (f + 1) * n] += m.T
        rows.append(block % q)
    for i, blk in extra:
        block = np.zeros((n, nfree * n), dtype=np.int64)
        f = parent[i]
        block[:, f * n : (f + 1) * n] = blk.T
        rows.append(block)
    R = np.concatenate(rows, axis=0) % q if rows else np.zeros((0, nfree * n), dtype=np.int64)
    R = R[np.any(R != 0, axis=1)]
    return R, parent, trans, free_gens


def build_symbol_space(basis: ManinBasis, k: int, W: int, min_reliable: int | None = None) -> SymbolSpace:
    if k < 2:
        raise DomainError("k must be at least 2")
    p = basis.p
    if k - 2 >= p:
        raise PrecisionError(f"weight {k} needs k-2 < p")
    q = p**W
    g = k - 2
    n = g + 1
    R, parent, trans, free_gens = _relation_system(basis, k, q)
    nfree = len(free_gens)
    if R.shape[0]:
        K, reliable, free_cols = linalg.kernel_basis(R, p, W, with_free=True)
    else:
        K, reliable, free_cols = np.eye(nfree * n, dtype=np.int64), W, list(range(nfree * n))
    if min_reliable is not None and reliable < min_reliable:
        raise InsufficientPrecision(f"symbol lattice only reliable to {reliable} digits")
    d = K.shape[1]
    B = np.zeros((basis.ngens * n, d), dtype=np.int64)
    for j in range(basis.ngens):
        f = parent[j]
        B[j * n : (j + 1) * n] = linalg.matmul_mod(trans[j].T, K[f * n : (f + 1) * n], q)
    pos = np.array([free_gens[c // n] * n + c % n for c in free_cols], dtype=np.int64)
    return SymbolSpace(basis, k, W, reliable, B % q, pos)


# -- Hecke operators --------------------------------------------------------------


@lru_cache(maxsize=None)
def heilbronn_merel(n: int) -> tuple[tuple[int, int, int, int], ...]:
    """Merel's set: ad - bc = n, a > b >= 0, d > c >= 0."""
    out = []
    for a in range(1, n + 1):
        for d in range(1, n + 2 - a):
            m = a * d - n
            if m < 0:
                continue
            if m == 0:
                for c in range(d):
                    out.append((a, 0, c, d))
                for b in range(1, a):
                    out.append((a, b, 0, d))
                continue
            for b in range(1, a):
                if m % b == 0:
                    c = m // b
                    if c < d:
                        out.append((a, b, c, d))
    return tuple(out)


def hecke_cosets(basis: ManinBasis, op: str, ell: int):
    """(coefficient, matrix) pairs for the double coset operator on symbols."""
    L = basis.L
    if op == "T":
        if L % ell == 0:
            raise DomainError(f"T_{ell} needs ell prime to {L}")
        out = [(1, (1, a, 0, ell)) for a in range(ell)]
        out.append((basis.chi(ell), (ell, 0, 0, 1)))
        return out
    if op == "U":
        if L % ell:
            raise DomainError(f"U_{ell} needs ell dividing {L}")
        return [(1, (1, a, 0, ell)) for a in range(ell)]
    raise DomainError(f"unknown operator {op}")


def hecke_direct(phi: ClassicalSymbol, op: str, ell: int) -> ClassicalSymbol:
    """Apply a Hecke operator straight from its definition (slow; used for checks)."""
    basis = phi.basis
    g = phi.k - 2
    q = phi.q
    out = np.zeros_like(phi.values)
    for i, m in enumerate(basis.mats):
        acc = np.zeros(g + 1, dtype=np.int64)
        for coef, delta in hecke_cosets(basis, op, ell):
            dg = mat_mul(delta, m)
            r = Fraction(dg[1], dg[3]) if dg[3] else None
            s = Fraction(dg[0], dg[2]) if dg[2] else None
            val = phi.evaluate_mono(r, s)
            acc = (acc + coef * linalg.matmul_mod(val[None, :], action_matrix(dg, g, q), q)[0]) % q
        out[i] = acc
    return ClassicalSymbol(basis, phi.k, phi.M, out % q)


def iota_symbol(phi: ClassicalSymbol) -> ClassicalSymbol:
    basis = phi.basis
    act = action_matrix(IOTA, phi.k - 2, phi.q)
    js = [basis.iota[i][0] for i in range(basis.ngens)]
    ss = np.array([basis.iota[i][1] for i in range(basis.ngens)], dtype=np.int64)
    vals = ss[:, None] * linalg.matmul_mod(phi.values[js], act, phi.q) % phi.q
    return ClassicalSymbol(basis, phi.k, phi.M, vals)


def _merel_targets(basis: ManinBasis, h):
    js, ss, ok = [], [], []
    for i, (c, d) in enumerate(basis.p1.reps):
        hit = basis.coset(c * h[0] + d * h[2], c * h[1] + d * h[3])
        if hit is None:
            continue
        ok.append(i)
        js.append(hit[0])
        ss.append(hit[1])
    return np.array(ok, dtype=np.int64), np.array(js, dtype=np.int64), np.array(ss, dtype=np.int64)


def hecke_blocks(basis: ManinBasis, k: int, q: int, ell: int, rows=None) -> np.ndarray:
    """Block matrix of T_ell (or U_ell when ell | Np) on generator values.

    Uses Merel's matrices: X'_i = sum_h psi X_{(c_i:d_i)h} @ act(adj h).
    Returns H with H[r, j] the (k-1)x(k-1) block mapping X_j (column) into
    row generator rows[r].
    """
    g = k - 2
    n = g + 1
    rows = list(range(basis.ngens)) if rows is None else list(rows)
    where = {i: r for r, i in enumerate(rows)}
    H = np.zeros((len(rows), basis.ngens, n, n), dtype=np.int64)
    for h in heilbronn_merel(ell):
        ok, js, ss = _merel_targets(basis, h)
        keep = [t for t, i in enumerate(ok) if i in where]
        if not keep:
            continue
        QT = action_matrix(adjugate(h), g, q).T
        ri = np.array([where[int(ok[t])] for t in keep], dtype=np.int64)
        np.add.at(H, (ri, js[keep]), (ss[keep][:, None, None] * QT[None]) % q)
        H %= q
    return H


def iota_blocks(basis: ManinBasis, k: int, q: int, rows=None) -> np.ndarray:
    g = k - 2
    n = g + 1
    rows = list(range(basis.ngens)) if rows is None else list(rows)
    H = np.zeros((len(rows), basis.ngens, n, n), dtype=np.int64)
    QT = action_matrix(IOTA, g, q).T
    for r, i in enumerate(rows):
        j, s = basis.iota[i]
        H[r, j] = s * QT % q
    return H


def _cache_path(cache_dir, key: dict) -> Path | None:
    if cache_dir is None:
        return None
    blob = json.dumps({"v": CACHE_VERSION, **key}, sort_keys=True).encode()
    name = hashlib.sha256(blob).hexdigest()[:32]
    return Path(cache_dir) / f"v{CACHE_VERSION}" / f"{name}.npz"


def cache_load(cache_dir, key: dict):
    path = _cache_path(cache_dir, key)
    if path is None or not path.exists():
        return None
    with np.load(path) as data:
        return {name: data[name] for name in data.files}


def cache_store(cache_dir, key: dict, **arrays) -> None:
    path = _cache_path(cache_dir, key)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _space_key(space: SymbolSpace, op: str) -> dict:
    b = space.basis
    return {"N": b.N, "p": b.p, "k": space.k, "psi": b.chi.name, "op": op, "W": space.W}


def hecke_matrix(space: SymbolSpace, op: str, cache_dir=None) -> np.ndarray:
    """Matrix (column convention) of an operator on the symbol space.

    op is "T<ell>", "U<ell>" or "iota".
    """
    key = _space_key(space, op)
    hit = cache_load(cache_dir, key)
    if hit is not None:
        return hit["m"]
    basis = space.basis
    n = space.k - 1
    q = space.q
    gens = sorted({int(x) // n for x in space.pos})
    if op == "iota":
        H = iota_blocks(basis, space.k, q, gens)
    else:
        kind, ell = op[0], int(op[1:])
        if kind == "T" and basis.L % ell == 0:
            raise DomainError(f"T_{ell} needs ell prime to {basis.L}")
        if kind == "U" and basis.L % ell:
            raise DomainError(f"U_{ell} needs ell dividing {basis.L}")
        H = hecke_blocks(basis, space.k, q, ell, gens)
    where = {i: r for r, i in enumerate(gens)}
    rows = np.array([where[int(x) // n] for x in space.pos])
    offs = np.array([int(x) % n for x in space.pos])
    # H[r, j, t, u]: coefficient of X_j[u] in X'_{gens[r]}[t]
    Hrows = H[rows, :, offs, :].reshape(len(space.pos), basis.ngens * n)
    m = linalg.matmul_mod(Hrows, space.B, q)
    cache_store(cache_dir, key, m=m)
    return m


def apply_operator(space: SymbolSpace, op: str, phi: ClassicalSymbol) -> ClassicalSymbol:
    """Apply an operator to one symbol through its full block matrix."""
    basis = space.basis
    q = phi.q
    if op == "iota":
        return iota_symbol(phi)
    H = hecke_blocks(basis, phi.k, q, int(op[1:]))
    n = phi.k - 1
    flat = H.transpose(0, 2, 1, 3).reshape(basis.ngens * n, basis.ngens * n)
    vals = linalg.matmul_mod(flat, phi.values.reshape(-1, 1), q).reshape(basis.ngens, n)
    return ClassicalSymbol(basis, phi.k, phi.M, vals)


# -- projectors and eigenspaces ----------------------------------------------------


def _power_exponent(dim: int, W: int) -> int:
    t = 1
    while t < max(1, dim) * W:
        t *= 2
    return t


def ordinary_projector(U: np.ndarray, p: int, M: int) -> np.ndarray:
    """Idempotent onto the part where U is invertible, along the nilpotent part mod p."""
    d = U.shape[0]
    q = p**M
    if d == 0:
        return np.zeros((0, 0), dtype=np.int64)
    Bm = linalg.matpow_mod(U % q, _power_exponent(d, M), q)
    Y, _ = linalg.image_basis(Bm, p, M)
    K, _ = linalg.kernel_basis(Bm, p, M)
    r = Y.shape[1]
    if r + K.shape[1] != d:
        raise ArithmeticError("ordinary decomposition did not converge")
    Q = np.concatenate([Y, K], axis=1) % q
    Qinv = linalg.inverse_mod(Q, p, M)
    D = np.zeros((d, d), dtype=np.int64)
    D[:r, :r] = np.eye(r, dtype=np.int64)
    return linalg.matmul_mod(linalg.matmul_mod(Q, D, q), Qinv, q)


def restrict(op: np.ndarray, Y: np.ndarray, p: int, W: int) -> np.ndarray:
    """Matrix of op on the op-stable saturated subspace spanned by the columns of Y."""
    q = p**W
    return linalg.solve_coords(Y, linalg.matmul_mod(op, Y, q), p, W)


def generalized_kernel(A: np.ndarray, p: int, W: int) -> np.ndarray:
    """Saturated basis of the part of the space on which A is topologically nilpotent."""
    d = A.shape[0]
    if d == 0:
        return np.zeros((0, 0), dtype=np.int64)
    Ap = linalg.matpow_mod(A % p**W, _power_exponent(d, W), p**W)
    K, _ = linalg.kernel_basis(Ap, p, W)
    return K


def residual_eigenvalue(op: str, k: int, chi: DirichletCharacter, q: int) -> int:
    """Eigenvalue of op on the ordinary Eisenstein series E^ord_{k,chi}."""
    if op.startswith("U"):
        return 1
    ell = int(op[1:])
    return eisenstein_eigenvalue(ell, k, chi, q)


def sturm_bound(k: int, basis: ManinBasis) -> int:
    return -(-k * basis.ngens // 12)


@dataclass
class EigenPacket:
    p: int
    N: int
    k: int
    chi: DirichletCharacter
    M: int
    a_p: int
    a_ell: dict
    eis_depth: int
    rank_one_verified: bool
    mult_one_verified: bool
    rank: int
    precision: int
    context: dict = field(default_factory=dict, repr=False)

    def residual(self, ell: int) -> int:
        return residual_eigenvalue("U" if (self.N * self.p) % ell == 0 else f"T{ell}", self.k, self.chi, self.p)

    @property
    def ord_ap_minus_one(self) -> int:
        return vp_capped(self.a_p - 1, self.p, self.M)


def default_operators(basis: ManinBasis, count: int = 4) -> list[str]:
    ops = [f"U{basis.p}"]
    ops += [f"U{ell}" for ell in range(2, basis.N + 1) if basis.N % ell == 0 and is_prime(ell)]
    ell = 2
    found = 0
    while found < count:
        if is_prime(ell) and basis.L % ell:
            ops.append(f"T{ell}")
            found += 1
        ell += 1
    return ops


def working_precision(p: int, M: int, margin: int = 1) -> int:
    W = M + margin
    while W > M and p**W >= linalg.MAX_MODULUS:
        W -= 1
    if p**W >= linalg.MAX_MODULUS:
        raise PrecisionError(f"p^{M} is too large for int64 arithmetic")
    return W


def eisenstein_block(space: SymbolSpace, M: int, ops=None, cache_dir=None) -> dict:
    """Plus part, ordinary part and the residual Eisenstein generalized eigenspace."""
    p = space.p
    W = space.W
    q = space.q
    basis = space.basis
    ops = ops or default_operators(basis)
    chi = basis.chi
    mats = {op: hecke_matrix(space, op, cache_dir) for op in ["iota"] + ops}
    d = space.dim
    plus_proj = (np.eye(d, dtype=np.int64) + mats["iota"]) * pow(2, -1, q) % q
    Yp, _ = linalg.image_basis(plus_proj, p, W)
    U = mats[f"U{p}"]
    U_plus = restrict(U, Yp, p, W)
    e_ord = ordinary_projector(U_plus, p, W)
    Yo_local, _ = linalg.image_basis(e_ord, p, W)
    Y = linalg.matmul_mod(Yp, Yo_local, q)  # ordinary plus part in space coordinates
    ordinary_rank = Y.shape[1]
    for op in ops:
        A = restrict(mats[op], Y, p, W)
        e = residual_eigenvalue(op, space.k, chi, q)
        A = (A - e * np.eye(A.shape[0], dtype=np.int64)) % q
        K = generalized_kernel(A, p, W)
        Y = linalg.matmul_mod(Y, K, q)
        if Y.shape[1] == 0:
            break
    local = {op: restrict(mats[op], Y, p, W) for op in ops} if Y.shape[1] else {}
    return {"mats": mats, "Y": Y, "local": local, "ops": ops, "plus_dim": Yp.shape[1], "ordinary_rank": ordinary_rank}


def mult_one_dimension(local: dict, k: int, chi: DirichletCharacter, p: int) -> int:
    """Dimension over F_p of the joint residual Eisenstein kernel on the block."""
    if not local:
        return 0
    blocks = []
    for op, A in local.items():
        e = residual_eigenvalue(op, k, chi, p)
        blocks.append((A - e * np.eye(A.shape[0], dtype=np.int64)) % p)
    stacked = np.concatenate(blocks, axis=0)
    K, _ = linalg.kernel_basis(stacked, p, 1)
    return K.shape[1]


def find_eisenstein_eigenpacket(basis: ManinBasis, k: int, M: int, cache_dir=None, ops=None, space=None) -> EigenPacket:
    p = basis.p
    chi = basis.chi
    if chi.parity != (-1) ** k:
        raise DomainError("parity of the character and the weight disagree")
    W = working_precision(p, M)
    if space is None:
        space = cached_symbol_space(basis, k, W, cache_dir)
    q = space.q
    blk = eisenstein_block(space, M, ops, cache_dir)
    if blk["Y"].shape[1] > 2 and ops is None:
        # more Hecke operators may split off unrelated systems that agree at the first few primes
        blk = eisenstein_block(space, M, default_operators(basis, 12), cache_dir)
    Y, local, ops = blk["Y"], blk["local"], blk["ops"]
    rank = Y.shape[1]
    if rank > 2:
        raise RankNotOne(f"residual Eisenstein eigenspace has rank {rank} > 2", rank)
    if rank < 2:
        raise DomainError(f"no cuspidal Eisenstein congruence (eigenspace rank {rank})")
    mult = mult_one_dimension(local, k, chi, p)
    Uloc = local[f"U{p}"]
    a_p = (int(np.trace(Uloc)) - 1) % q
    prec = min(space.reliable, M)
    v = vp_capped(a_p - 1, p, prec)
    if v >= prec:
        raise InsufficientPrecision(f"a_p = 1 modulo p^{prec}; raise the precision")
    phi, content_loss = _cusp_vector(space, Y, local, k, chi)
    prec = min(prec, space.reliable - content_loss)
    if prec <= v:
        raise InsufficientPrecision("eigensymbol saturation used up the available precision")
    sym = space.symbol(phi)
    sym = ClassicalSymbol(basis, k, prec, sym.values % p**prec, sign=1)
    packet = EigenPacket(
        p=p, N=basis.N, k=k, chi=chi, M=prec, a_p=a_p % p**prec, a_ell={}, eis_depth=0,
        rank_one_verified=(rank == 2), mult_one_verified=(mult == 1), rank=rank, precision=prec,
        context={"space": space, "block": blk, "symbol": sym},
    )
    _fill_eigenvalues(packet, sym)
    return packet


def _cusp_vector(space: SymbolSpace, Y: np.ndarray, local: dict, k: int, chi) -> tuple[np.ndarray, int]:
    """Generator of the cuspidal eigenline inside the rank-2 block."""
    p, W, q = space.p, space.W, space.q
    best, best_c = None, W + 1
    for op, A in local.items():
        e = residual_eigenvalue(op, k, chi, q)
        img = linalg.matmul_mod(Y, (A - e * np.eye(A.shape[0], dtype=np.int64)) % q, q)
        for col in img.T:
            c = linalg.content(col, p, W)
            if c < best_c:
                best, best_c = col, c
    if best is None or best_c >= W:
        raise InsufficientPrecision("could not isolate the cuspidal eigenline")
    if best_c:
        best = (best // p**best_c) % q
    return best, best_c


def cusp_eigensymbol(basis: ManinBasis, packet: EigenPacket, M: int | None = None) -> ClassicalSymbol:
    if not packet.rank_one_verified:
        raise RankNotOne("eigenspace rank is not 2", packet.rank)
    sym = packet.context["symbol"]
    if M is not None and M < sym.M:
        return ClassicalSymbol(sym.basis, sym.k, M, sym.values % basis.p**M, sym.sign)
    return sym


def cached_symbol_space(basis: ManinBasis, k: int, W: int, cache_dir=None) -> SymbolSpace:
    key = {"N": basis.N, "p": basis.p, "k": k, "psi": basis.chi.name, "op": "space", "W": W}
    hit = cache_load(cache_dir, key)
    if hit is not None:
        return SymbolSpace(basis, k, W, int(hit["reliable"]), hit["B"], hit["pos"])
    space = build_symbol_space(basis, k, W)
    cache_store(cache_dir, key, B=space.B, pos=space.pos, reliable=np.array(space.reliable))
    return space


# -- evaluation at the constant polynomial -------------------------------------------


def coset_arrays(basis: ManinBasis) -> tuple[np.ndarray, np.ndarray]:
    """Dense (c, d) -> (generator index, character sign) tables, cached on the basis."""
    cached = getattr(basis, "_coset_arrays", None)
    if cached is not None:
        return cached
    L = basis.L
    idx = np.full((L, L), -1, dtype=np.int64)
    sgn = np.zeros((L, L), dtype=np.int64)
    for (c, d), (i, lam) in basis.p1.table.items():
        idx[c % L, d % L] = i
        sgn[c % L, d % L] = basis.chi(lam)
    object.__setattr__(basis, "_coset_arrays", (idx, sgn))
    return idx, sgn


def _path_rows(num: int, den: int):
    """Bottom rows (c, d) of the unimodular matrices along the path from oo to num/den."""
    rows = []
    p_prev, q_prev = 1, 0
    a, b = num, den
    first = True
    p_cur = q_cur = None
    while True:
        t, r = divmod(a, b)
        if first:
            p_cur, q_cur = t, 1
            first = False
        else:
            p_prev, p_cur = p_cur, t * p_cur + p_prev
            q_prev, q_cur = q_cur, t * q_cur + q_prev
        dt = p_cur * q_prev - p_prev * q_cur
        rows.append((q_cur, q_prev if dt == 1 else -q_prev))
        if r == 0:
            return rows
        a, b = b, r


def one_values(phi: ClassicalSymbol, cusps, chunk: int = 200_000) -> np.ndarray:
    """phi({oo} - {x})(1) for each cusp x = num/den (den > 0), vectorized."""
    basis = phi.basis
    g = phi.k - 2
    q = phi.q
    L = basis.L
    cid, cs, cd = [], [], []
    for n_, (num, den) in enumerate(cusps):
        for c, d in _path_rows(num, den):
            cid.append(n_)
            cs.append(c)
            cd.append(d)
    cid = np.array(cid, dtype=np.int64)
    c_arr = np.array(cs, dtype=object)
    d_arr = np.array(cd, dtype=object)
    cmod = np.array([int(x) % L for x in c_arr], dtype=np.int64) if L > 1 else np.zeros(len(cs), dtype=np.int64)
    dmod = np.array([int(x) % L for x in d_arr], dtype=np.int64) if L > 1 else np.zeros(len(cs), dtype=np.int64)
    cq = np.array([int(x) % q for x in c_arr], dtype=np.int64)
    dq = np.array([int(x) % q for x in d_arr], dtype=np.int64)
    idx_t, sgn_t = coset_arrays(basis)
    gens = idx_t[cmod, dmod]
    sgns = sgn_t[cmod, dmod]
    if (gens < 0).any():
        raise ArithmeticError("path row outside the projective line")
    coeff = np.array([comb(g, t) % q for t in range(g + 1)], dtype=np.int64)
    Xc = phi.values % q * coeff[None, :] % q
    vals = np.zeros(len(cid), dtype=np.int64)
    for lo in range(0, len(cid), chunk):
        sl = slice(lo, lo + chunk)
        A = Xc[gens[sl]]
        u = (-cq[sl]) % q
        v = dq[sl]
        S = A[:, g].copy()
        vp_ = np.ones_like(v)
        for m in range(g - 1, -1, -1):
            vp_ = vp_ * v % q
            S = (A[:, m] * vp_ % q + u * S % q) % q
        vals[sl] = S * sgns[sl] % q
    out = np.zeros(len(cusps), dtype=np.int64)
    np.add.at(out, cid, vals)
    return out % q


def d0_value(phi: ClassicalSymbol) -> int:
    """phi({oo} - {0})(1)."""
    return int(one_values(phi, [(0, 1)])[0])


def hecke_eigenvalue_at_one(phi: ClassicalSymbol, ell: int) -> int:
    """a_ell of an eigensymbol from (phi|T_ell)({oo}-{0})(1) = a_ell phi({oo}-{0})(1)."""
    basis = phi.basis
    q = phi.q
    p = basis.p
    v0 = d0_value(phi)
    if v0 % p == 0:
        raise InsufficientPrecision("phi({oo}-{0})(1) is not a unit")
    total = int(one_values(phi, [(a, ell) for a in range(ell)]).sum())
    if basis.L % ell:
        total += basis.chi(ell) * pow(ell, phi.k - 2, q) * v0
    return total * pow(v0, -1, q) % q


def _fill_eigenvalues(packet: EigenPacket, sym: ClassicalSymbol) -> None:
    basis = sym.basis
    p = basis.p
    q = p**packet.precision
    bound = sturm_bound(packet.k, basis)
    depth = packet.precision
    a_ell = {}
    for ell in range(2, bound + 1):
        if not is_prime(ell):
            continue
        a = hecke_eigenvalue_at_one(sym, ell)
        a_ell[ell] = a
        e = 1 if basis.L % ell == 0 else eisenstein_eigenvalue(ell, packet.k, packet.chi, q)
        depth = min(depth, vp_capped(a - e, p, packet.precision))
    if p not in a_ell:
        a_ell[p] = hecke_eigenvalue_at_one(sym, p)
    if (a_ell[p] - packet.a_p) % q:
        raise ArithmeticError("U_p eigenvalue from paths disagrees with the trace")
    depth = min(depth, vp_capped(packet.a_p - 1, p, packet.precision))
    packet.a_ell = a_ell
    packet.eis_depth = depth


# -- boundary Eisenstein symbol ------------------------------------------------------


def boundary_cusp_value(x: int, y: int, k: int, basis: ManinBasis, q: int) -> np.ndarray:
    """Value at the cusp x/y of the boundary symbol supported on the orbit of 0.

    phi({x/y})(P) = psi(y) y^g P(-x/y) when gcd(y, Np) = 1, and 0 otherwise.
    """
    g = k - 2
    if gcd(y, basis.L) != 1:
        return np.zeros(g + 1, dtype=np.int64)
    s = basis.chi(y)
    return np.array([s * pow(-x, j, q) * pow(y, g - j, q) % q for j in range(g + 1)], dtype=np.int64)


def boundary_eisenstein_symbol(basis: ManinBasis, k: int, M: int) -> ClassicalSymbol:
    """Restriction to degree-zero divisors of the boundary symbol with phi({0}) = (P -> P(0))."""
    if basis.chi.parity != (-1) ** k:
        raise DomainError("parity of the character and the weight disagree")
    q = basis.p**M
    g = k - 2
    vals = np.zeros((basis.ngens, g + 1), dtype=np.int64)
    for i, m in enumerate(basis.mats):
        a, b, c, d = m
        at0 = boundary_cusp_value(b, d, k, basis, q)
        atinf = boundary_cusp_value(a, c, k, basis, q)
        vals[i] = linalg.matmul_mod(((at0 - atinf) % q)[None, :], action_matrix(m, g, q), q)[0]
    return ClassicalSymbol(basis, k, M, vals, sign=1)


# -- measures --------------------------------------------------------------------------


@dataclass
class PadicLMeasure:
    """Values on the discs a + p^n Z_p, a a unit mod p^n (index a, zero elsewhere)."""

    p: int
    n: int
    M: int
    values: np.ndarray
    provenance: str = "classical"
    accuracy: np.ndarray | None = None

    def __post_init__(self):
        if self.accuracy is None:
            self.accuracy = np.full(self.p**self.n, self.M, dtype=np.int64)

    def value(self, a: int) -> int:
        return int(self.values[a % self.p**self.n])

    def units(self) -> list[int]:
        return [a for a in range(self.p**self.n) if a % self.p]

    def coarsen(self) -> "PadicLMeasure":
        """Push forward to level n-1 by summing over the refining discs."""
        if self.n < 2:
            raise DomainError("cannot coarsen below level 1")
        m = self.p ** (self.n - 1)
        q = self.p**self.M
        vals = self.values.reshape(self.p, m).sum(axis=0) % q
        acc = self.accuracy.reshape(self.p, m).min(axis=0)
        return PadicLMeasure(self.p, self.n - 1, self.M, vals, self.provenance, acc)

    def total(self) -> int:
        return int(self.values.sum() % self.p**self.M)


def measure_disc_values(phi: ClassicalSymbol, a_p: int, n: int, M: int | None = None) -> PadicLMeasure:
    """L_p(a + p^n Z_p) = a_p^-n phi({oo} - {a/p^n})(1) on all unit discs."""
    p = phi.p
    M = phi.M if M is None else min(M, phi.M)
    q = p**M
    if a_p % p == 0:
        raise DomainError("a_p is not a unit")
    if n < 1:
        raise DomainError("level must be at least 1")
    pn = p**n
    units = [a for a in range(pn) if a % p]
    sym = phi if M == phi.M else ClassicalSymbol(phi.basis, phi.k, M, phi.values % q, phi.sign)
    raw = one_values(sym, [(a, pn) for a in units])
    scale = pow(a_p, -n, q)
    vals = np.zeros(pn, dtype=np.int64)
    vals[units] = raw * scale % q
    return PadicLMeasure(p, n, M, vals, "classical")


# -- residual rank detection -----------------------------------------------------------


def residual_character(p: int, k: int) -> DirichletCharacter:
    """The character a -> a^(k-2) mod p, the reduction of omega^(k-2)."""
    e = (k - 2) % (p - 1)
    return DirichletCharacter(p, tuple(pow(a, e, p) if a % p else 0 for a in range(p)), f"omega^{e}")


def residual_eisenstein_rank(p: int, k: int, count: int = 4, cache_dir=None) -> int:
    """Rank of the residual Eisenstein block, read off in weight 2 with character omega^(k-2).

    Modulo p the ordinary weight-k symbols of level p match the weight-2
    symbols with nebentypus omega^(k-2), so the rank test needs only a
    space of dimension about p/6 instead of (k-1)(p+1).
    """
    if not is_prime(p) or p < 5:
        raise DomainError("p must be a prime at least 5")
    if k % 2 or k < 2:
        raise DomainError("k must be even and at least 2")
    chi = residual_character(p, k)
    basis = build_manin_basis(1, p, chi)
    space = build_symbol_space(basis, 2, 1)
    blk = eisenstein_block(space, 1, default_operators(basis, count), cache_dir)
    return blk["Y"].shape[1]


def check_residual_rank(p: int, k: int, count: int = 4, cache_dir=None) -> int:
    """Raise RankNotOne when the residual block is larger than Eisenstein plus one cusp form."""
    rank = residual_eisenstein_rank(p, k, count, cache_dir)
    if rank > 2:
        raise RankNotOne(f"residual Eisenstein block for (p, k) = ({p}, {k}) has rank {rank} > 2", rank)
    if rank < 2:
        raise DomainError(f"no cuspidal Eisenstein congruence at (p, k) = ({p}, {k})")
    return rank
