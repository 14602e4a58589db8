"""Overconvergent modular symbols with finitely many moments.

A distribution on Z_p is stored through its first D moments. The public
type keeps binomial moments mu(C(z, j)); internally symbols are handled in
monomial moments mu(z^j), which is equivalent while D <= p.

Symbols are described by Y_i = Phi(g_i({0} - {oo})) for the Manin
representatives g_i. Every matrix that ever acts on a distribution is in
S_0(p) (lower-left entry divisible by p, upper-left entry a unit), so the
action is integral. Moments j <= k-2 transform exactly; a dropped moment
i >= D only perturbs moment j > k-2 by a multiple of p^(D-j), which is the
accuracy recorded for that moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from . import linalg
from . import msclassical as mc
from .errors import DegenerateProjector, DomainError, MomentDeficit, PrecisionError, RankNotOne, UnsolvableError
from .msclassical import IOTA, SIGMA, TAU, TAU2, ClassicalSymbol, ManinBasis, PadicLMeasure, WeightCoeffDual
from .padic import mahler_basis_matrices, vp_capped


def default_moments(k: int) -> int:
    return max(k - 1, 8)


def in_s0p(gamma, p: int) -> bool:
    a, b, c, d = gamma
    return c % p == 0 and a % p != 0 and a * d - b * c != 0


def _gen_binom(e: int, i: int) -> int:
    if e >= 0:
        return comb(e, i)
    return (-1) ** i * comb(i - e - 1, i)


@lru_cache(maxsize=32)
def _action_tables(g: int, D: int, q: int):
    cgen = np.array([[_gen_binom(g - j, i) % q for j in range(D)] for i in range(D)], dtype=np.int64)
    cbin = np.array([[comb(j, s) % q for j in range(D)] for s in range(D)], dtype=np.int64)
    expo = np.array([[g - j - i for j in range(D)] for i in range(D)], dtype=np.int64)
    return cgen, cbin, expo


def dist_action_matrix(gamma, g: int, D: int, q: int) -> np.ndarray:
    """A[i][j] = z^i coefficient of (a+cz)^(g-j) (b+dz)^j, truncated to i < D.

    For j > g the first factor is the power series of (a+cz)^-(j-g), which
    needs a to be a unit. Monomial moments then transform as nu = mu @ A.
    """
    a, b, c, d = (int(x) % q for x in gamma)
    cgen, cbin, expo = _action_tables(g, D, q)
    m_min = g - 2 * (D - 1)
    a_inv = pow(a, -1, q)
    apow = []
    x = pow(a_inv, -m_min, q) if m_min < 0 else pow(a, m_min, q)
    for _ in range(2 * D):
        apow.append(x)
        x = x * a % q
    apow = np.array(apow, dtype=np.int64)
    cpow = np.array([pow(c, i, q) for i in range(D)], dtype=np.int64)
    base = cgen * apow[expo - m_min] % q * cpow[:, None] % q
    bpow = [pow(b, e, q) for e in range(D)]
    dpow = [pow(d, s, q) for s in range(D)]
    A = np.zeros((D, D), dtype=np.int64)
    for s in range(D):
        coef = np.array([cbin[s, j] * bpow[j - s] % q * dpow[s] % q if j >= s else 0 for j in range(D)], dtype=np.int64)
        if not coef.any():
            continue
        A[s:, :] = (A[s:, :] + base[: D - s, :] * coef[None, :] % q) % q
    return A


@dataclass(frozen=True)
class FiniteApproxDistribution:
    """First D binomial moments mu(C(z, j)) of a distribution, modulo p^M."""

    p: int
    M: int
    moments: tuple[int, ...]

    @property
    def D(self) -> int:
        return len(self.moments)

    @property
    def q(self) -> int:
        return self.p**self.M

    def is_zero(self) -> bool:
        return not any(x % self.q for x in self.moments)

    def monomial(self) -> np.ndarray:
        forward, _ = mahler_basis_matrices(self.D + 1, self.p, self.M)
        F = np.array(forward, dtype=np.int64)
        return linalg.matmul_mod(np.array(self.moments, dtype=np.int64)[None, :], F, self.q)[0]

    @classmethod
    def from_monomial(cls, mono, p: int, M: int) -> "FiniteApproxDistribution":
        mono = np.asarray(mono, dtype=np.int64)
        _, backward = mahler_basis_matrices(len(mono) + 1, p, M)
        B = np.array(backward, dtype=np.int64)
        vals = linalg.matmul_mod(mono[None, :], B, p**M)[0]
        return cls(p, M, tuple(int(x) for x in vals))

    @classmethod
    def dirac(cls, x: int, p: int, M: int, D: int) -> "FiniteApproxDistribution":
        q = p**M
        return cls(p, M, tuple(comb(x, j) % q if x >= 0 else _gen_binom(x, j) % q for j in range(D)))


def dist_act(mu: FiniteApproxDistribution, gamma, k: int) -> FiniteApproxDistribution:
    """(mu | gamma)(f) = mu((a+cz)^(k-2) f((b+dz)/(a+cz))) for gamma in S_0(p)."""
    if not in_s0p(gamma, mu.p):
        raise DomainError(f"{gamma} is not in S_0({mu.p})")
    A = dist_action_matrix(gamma, k - 2, mu.D, mu.q)
    return FiniteApproxDistribution.from_monomial(linalg.matmul_mod(mu.monomial()[None, :], A, mu.q)[0], mu.p, mu.M)


def specialize(mu: FiniteApproxDistribution, k: int) -> WeightCoeffDual:
    """Restriction to polynomials of degree at most k-2."""
    if mu.D < k - 1:
        raise MomentDeficit(f"need {k - 1} moments, have {mu.D}")
    return WeightCoeffDual(mu.p, mu.M, tuple(mu.moments[: k - 1]))


def lift_dual(alpha: WeightCoeffDual, D: int) -> FiniteApproxDistribution:
    """A distribution specializing to alpha (higher moments zero)."""
    if D < len(alpha.values):
        raise MomentDeficit("fewer moments than the polynomial degree needs")
    return FiniteApproxDistribution(alpha.p, alpha.M, tuple(alpha.values) + (0,) * (D - len(alpha.values)))


def solve_difference_equation(nu: FiniteApproxDistribution) -> tuple[FiniteApproxDistribution, int]:
    """mu with mu|[1,1;0,1] - mu = nu, and the number of moments it leaves undetermined.

    Since C(z+1, j) - C(z, j) = C(z, j-1), the difference operator shifts
    binomial moments down by one: mu_j = nu_(j+1). The top moment of mu is
    free and is set to zero.
    """
    if nu.moments[0] % nu.q:
        raise UnsolvableError("total measure of the right-hand side is not zero")
    mom = tuple(nu.moments[1:]) + (0,)
    return FiniteApproxDistribution(nu.p, nu.M, mom), 1


def difference_operator(mu: FiniteApproxDistribution, k: int) -> FiniteApproxDistribution:
    nu = dist_act(mu, (1, 1, 0, 1), k)
    return FiniteApproxDistribution(mu.p, mu.M, tuple((x - y) % mu.q for x, y in zip(nu.moments, mu.moments)))


# -- the symbol space ------------------------------------------------------------------


def moment_accuracy(g: int, D: int, M: int) -> np.ndarray:
    return np.array([M if j <= g else min(M, D - j) for j in range(D)], dtype=np.int64)


def _coset_and_gamma(basis: ManinBasis, h):
    """For h in SL_2(Z): (j, character value, gamma^-1) with h = gamma g_j."""
    hit = basis.p1.lookup(h[2], h[3])
    if hit is None:
        raise ArithmeticError("matrix outside the level")
    j, lam = hit
    return j, basis.chi(lam), mc.mat_mul(basis.mats[j], mc.adjugate(h))


def _path_terms(basis: ManinBasis, x):
    """Terms (j, sign, gamma^-1) with Phi({oo} - {x}) = sum sign * Y_j | gamma^-1."""
    if x is None:
        return []
    return [_coset_and_gamma(basis, h) for h in mc.convergent_matrices(x)]


def _cusps_of(m):
    a, b, c, d = m
    zero = Fraction(b, d) if d else None
    inf = Fraction(a, c) if c else None
    return zero, inf


@dataclass
class OvSpace:
    """Solutions of the Manin relations in the D-moment distribution module."""

    basis: ManinBasis
    k: int
    D: int
    M: int
    K: np.ndarray  # kernel basis, columns, flattened monomial coordinates
    accuracy: np.ndarray  # per moment
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def q(self) -> int:
        return self.basis.p**self.M

    @property
    def g(self) -> int:
        return self.k - 2

    @property
    def size(self) -> int:
        return self.basis.ngens * self.D

    def operator(self, op: str) -> np.ndarray:
        """Matrix (column convention, flattened monomial moments) of T_l, U_l or iota.

        A product "A*B" means apply B first, then A.
        """
        if op not in self._ops:
            if "*" in op:
                left, right = op.split("*", 1)
                self._ops[op] = linalg.matmul_mod(self.operator(left), self.operator(right), self.q)
            else:
                self._ops[op] = _operator_matrix(self, op)
        return self._ops[op]


def _relation_matrix(basis: ManinBasis, g: int, D: int, M: int) -> np.ndarray:
    q = basis.p**M
    n = basis.ngens
    acc = moment_accuracy(g, D, M)
    scale = np.array([basis.p ** (M - a) for a in acc], dtype=np.int64)
    blocks = []
    eye = np.eye(D, dtype=np.int64)
    for i, gi in enumerate(basis.mats):
        for word in ((SIGMA,), (TAU, TAU2)):
            R = np.zeros((D, n * D), dtype=np.int64)
            R[:, i * D : (i + 1) * D] += eye
            for w in word:
                j, s, ginv = _coset_and_gamma(basis, mc.mat_mul(gi, w))
                A = dist_action_matrix(ginv, g, D, q)
                R[:, j * D : (j + 1) * D] = (R[:, j * D : (j + 1) * D] + s * A.T) % q
            blocks.append(R * scale[:, None] % q)
    return np.concatenate(blocks, axis=0) % q


def build_ov_space(basis: ManinBasis, k: int, D: int | None = None, M: int = 5) -> OvSpace:
    D = default_moments(k) if D is None else D
    if D < k - 1:
        raise MomentDeficit(f"need at least {k - 1} moments")
    if D - 1 >= basis.p:
        raise PrecisionError("binomial and monomial moments differ when D > p")
    if basis.chi.parity != (-1) ** k:
        raise DomainError("parity of the character and the weight disagree")
    R = _relation_matrix(basis, k - 2, D, M)
    K, _ = linalg.kernel_basis(R, basis.p, M)
    return OvSpace(basis, k, D, M, K, moment_accuracy(k - 2, D, M))


def _operator_matrix(space: OvSpace, op: str) -> np.ndarray:
    basis = space.basis
    D, g, q, p = space.D, space.g, space.q, space.p
    if op == "iota":
        cosets = [(1, IOTA)]
    else:
        cosets = mc.hecke_cosets(basis, op[0], int(op[1:]))
    n = basis.ngens
    big = np.zeros((n * D, n * D), dtype=np.int64)
    cache = {}
    for i, gi in enumerate(basis.mats):
        for coef, beta in cosets:
            m = mc.mat_mul(beta, gi)
            zero, inf = _cusps_of(m)
            for sign, cusp in ((1, inf), (-1, zero)):
                for j, s, ginv in _path_terms(basis, cusp):
                    mat = mc.mat_mul(ginv, beta)
                    if not in_s0p(mat, p):
                        raise ArithmeticError("acting matrix left S_0(p)")
                    key = tuple(x % q for x in mat)
                    A = cache.get(key)
                    if A is None:
                        A = dist_action_matrix(mat, g, D, q)
                        cache[key] = A
                    f = coef * sign * s % q
                    big[i * D : (i + 1) * D, j * D : (j + 1) * D] += f * A.T % q
            big[i * D : (i + 1) * D] %= q
    return big % q


# -- symbols ---------------------------------------------------------------------------


@dataclass
class OvSymbol:
    """Generator values Y_i as binomial moments, shape (ngens, D), with an accuracy ledger."""

    space: OvSpace
    values: np.ndarray
    accuracy: np.ndarray
    seed: int | None = None

    @property
    def basis(self) -> ManinBasis:
        return self.space.basis

    @property
    def k(self) -> int:
        return self.space.k

    @property
    def q(self) -> int:
        return self.space.q

    def distribution(self, i: int) -> FiniteApproxDistribution:
        return FiniteApproxDistribution(self.space.p, self.space.M, tuple(int(x) for x in self.values[i]))

    def flat_monomial(self) -> np.ndarray:
        F = _forward(self.space)
        return linalg.matmul_mod(self.values, F, self.q).reshape(-1)

    @classmethod
    def from_flat_monomial(cls, space: OvSpace, y: np.ndarray, accuracy=None, seed=None) -> "OvSymbol":
        B = _backward(space)
        vals = linalg.matmul_mod(np.asarray(y, dtype=np.int64).reshape(space.basis.ngens, space.D), B, space.q)
        acc = space.accuracy.copy() if accuracy is None else np.asarray(accuracy, dtype=np.int64)
        return cls(space, vals, acc, seed)

    def relation_defect(self) -> int:
        """Smallest p-adic accuracy (after ledger scaling) at which a relation fails; M if none."""
        sp = self.space
        R = _relation_matrix(sp.basis, sp.g, sp.D, sp.M)
        r = linalg.matmul_mod(R, self.flat_monomial()[:, None], sp.q)
        return linalg.content(r, sp.p, sp.M)

    def apply(self, op: str) -> "OvSymbol":
        y = linalg.matmul_mod(self.space.operator(op), self.flat_monomial()[:, None], self.q)[:, 0]
        return OvSymbol.from_flat_monomial(self.space, y, self.accuracy, self.seed)

    def scale(self, c: int) -> "OvSymbol":
        return OvSymbol(self.space, self.values * (c % self.q) % self.q, self.accuracy.copy(), self.seed)

    def __add__(self, other):
        return OvSymbol(self.space, (self.values + other.values) % self.q, np.minimum(self.accuracy, other.accuracy), self.seed)

    def __sub__(self, other):
        return OvSymbol(self.space, (self.values - other.values) % self.q, np.minimum(self.accuracy, other.accuracy), self.seed)

    def is_zero(self) -> bool:
        p = self.space.p
        return all(not (self.values[:, j] % p ** int(a)).any() for j, a in enumerate(self.accuracy))

    def specialize(self) -> ClassicalSymbol:
        """The classical symbol X_i = Y_i | g_i on moments up to k-2."""
        sp = self.space
        g, q = sp.g, sp.q
        mono = linalg.matmul_mod(self.values, _forward(sp), q)[:, : g + 1]
        X = np.zeros((sp.basis.ngens, g + 1), dtype=np.int64)
        for i, gi in enumerate(sp.basis.mats):
            X[i] = linalg.matmul_mod(mono[i : i + 1], mc.action_matrix(gi, g, q), q)[0]
        return ClassicalSymbol(sp.basis, sp.k, sp.M, X, sign=None)

    def value_at_d0(self) -> int:
        """Phi({oo} - {0})(1)."""
        return int(_disc_values(self, [(0, 1)], 0)[0, 0])


def _forward(space: OvSpace) -> np.ndarray:
    forward, _ = mahler_basis_matrices(space.D + 1, space.p, space.M)
    return np.array(forward, dtype=np.int64)


def _backward(space: OvSpace) -> np.ndarray:
    _, backward = mahler_basis_matrices(space.D + 1, space.p, space.M)
    return np.array(backward, dtype=np.int64)


def random_ov_symbol(space: OvSpace, seed: int = 0) -> OvSymbol:
    """A seeded random solution of the Manin relations."""
    rng = np.random.default_rng(seed)
    c = rng.integers(0, space.q, size=space.K.shape[1], dtype=np.int64)
    y = linalg.matmul_mod(space.K, c[:, None], space.q)[:, 0]
    return OvSymbol.from_flat_monomial(space, y, seed=seed)


def _specialization_matrix(space: OvSpace) -> np.ndarray:
    """Flattened Y (monomial) -> flattened X (monomial-dual), column convention."""
    basis, D, g, q = space.basis, space.D, space.g, space.q
    n = basis.ngens
    S = np.zeros((n * (g + 1), n * D), dtype=np.int64)
    for i, gi in enumerate(basis.mats):
        A = mc.action_matrix(gi, g, q)
        S[i * (g + 1) : (i + 1) * (g + 1), i * D : i * D + g + 1] = A.T
    return S


def lift_classical(space: OvSpace, phi: ClassicalSymbol, seed: int | None = None) -> OvSymbol:
    """Some overconvergent symbol specializing to phi (not yet an eigensymbol)."""
    if phi.M < space.M:
        raise PrecisionError("classical symbol is known to lower precision")
    q = space.q
    S = _specialization_matrix(space)
    SK = linalg.matmul_mod(S, space.K, q)
    x = (phi.values % q).reshape(-1)
    try:
        c = linalg.solve_linear(SK, x[:, None], space.p, space.M)
    except UnsolvableError as exc:
        raise UnsolvableError("classical symbol does not lift; is it a solution of the relations?") from exc
    if seed is not None:
        # add a random element of the kernel of specialization
        rng = np.random.default_rng(seed)
        Kspec, _ = linalg.kernel_basis(SK, space.p, space.M)
        if Kspec.shape[1]:
            extra = linalg.matmul_mod(Kspec, rng.integers(0, q, size=(Kspec.shape[1], 1), dtype=np.int64), q)
            c = (c + extra) % q
    y = linalg.matmul_mod(space.K, c, q)[:, 0]
    return OvSymbol.from_flat_monomial(space, y, seed=seed)


def specialization_kernel_symbol(space: OvSpace, seed: int = 0) -> OvSymbol:
    """A random symbol whose specialization vanishes."""
    q = space.q
    SK = linalg.matmul_mod(_specialization_matrix(space), space.K, q)
    Kspec, _ = linalg.kernel_basis(SK, space.p, space.M)
    rng = np.random.default_rng(seed)
    c = linalg.matmul_mod(Kspec, rng.integers(0, q, size=(Kspec.shape[1], 1), dtype=np.int64), q)
    y = linalg.matmul_mod(space.K, c, q)[:, 0]
    return OvSymbol.from_flat_monomial(space, y, seed=seed)


def boundary_eisenstein_lift(space: OvSpace) -> OvSymbol:
    """Y_i = Phi_E({g_i 0}) - Phi_E({g_i oo}) with Phi_E({x/y}) = psi(y) y^g [f -> f(-x/y)]."""
    basis, D, g, q = space.basis, space.D, space.g, space.q
    vals = np.zeros((basis.ngens, D), dtype=np.int64)

    def cusp_dist(x: int, y: int) -> np.ndarray:
        if np.gcd(y, basis.L) != 1:
            return np.zeros(D, dtype=np.int64)
        if y < 0:
            x, y = -x, -y
        s = basis.chi(y)
        pt = -x * pow(y, -1, q) % q
        return np.array([s * pow(y, g, q) % q * pow(pt, j, q) % q for j in range(D)], dtype=np.int64)

    for i, (a, b, c, d) in enumerate(basis.mats):
        vals[i] = (cusp_dist(b, d) - cusp_dist(a, c)) % q
    return OvSymbol(space, linalg.matmul_mod(vals, _backward(space), q), space.accuracy.copy())


# -- ordinary projection and eigensymbols ----------------------------------------------


def plus_part(phi: OvSymbol) -> OvSymbol:
    half = pow(2, -1, phi.q)
    return (phi + phi.apply("iota")).scale(half)


def up_iterate(phi: OvSymbol, a_p: int, iterations: int) -> OvSymbol:
    """a_p^-t Phi | U_p^t.

    After one application every moment below D is determined modulo
    p^min(M, D) by the moments of the input, so the ledger is raised
    to that level (one moment at a time when D <= M).
    """
    p = phi.space.p
    if a_p % p == 0:
        raise DomainError("a_p must be a unit")
    q = phi.q
    inv = pow(a_p, -1, q)
    op = f"U{p}"
    acc = phi.accuracy.copy()
    M, D = phi.space.M, phi.space.D
    for _ in range(iterations):
        phi = phi.apply(op).scale(inv)
        acc = np.minimum(M, np.maximum(acc + 1, np.minimum(M, D)))
        phi.accuracy = acc.copy()
    return phi


def hecke_closure(phi: OvSymbol, ops: list[str], max_rounds: int = 64) -> np.ndarray:
    """Saturated basis (flattened monomial columns) of the Hecke module generated by phi."""
    sp = phi.space
    p, M, q = sp.p, sp.M, sp.q
    V, _ = linalg.image_basis(phi.flat_monomial()[:, None], p, M)
    for _ in range(max_rounds):
        cols = [V] + [linalg.matmul_mod(sp.operator(op), V, q) for op in ops]
        W, _ = linalg.image_basis(np.concatenate(cols, axis=1), p, M)
        if W.shape[1] == V.shape[1]:
            return W
        V = W
    raise ArithmeticError("Hecke closure did not stabilize")


def eigen_operators(basis: ManinBasis, primes=None) -> list[str]:
    """U_p and U_p composed with the other Hecke operators.

    Composing with U_p makes each operator exact on the truncated module:
    whatever the truncation drops lies in the filtration that U_p sends to
    p^D, hence to zero once D >= M.
    """
    up = f"U{basis.p}"
    ops = mc.default_operators(basis) if primes is None else [f"U{l}" for l in range(2, basis.N + 1) if basis.N % l == 0 and mc.is_prime(l)] + [f"T{l}" for l in primes if basis.L % l]
    return [up] + [f"{up}*{op}" for op in ops if op != up]


def composite_residual(op: str, k: int, chi, q: int) -> int:
    out = 1
    for part in op.split("*"):
        out = out * mc.residual_eigenvalue(part, k, chi, q) % q
    return out


def project_eigensystem(phi: OvSymbol, packet: mc.EigenPacket, primes=None) -> OvSymbol:
    """The cuspidal eigensymbol inside the Hecke module generated by phi.

    The residual Eisenstein part of the module is cut out by generalized
    kernels of (op - residual eigenvalue); the boundary Eisenstein line is
    then removed by (op - Eisenstein eigenvalue), which acts on it by zero.
    """
    if not packet.rank_one_verified:
        raise RankNotOne("eigenspace rank is not 2", packet.rank)
    sp = phi.space
    p, q, M, k = sp.p, sp.q, sp.M, sp.k
    if sp.D < M:
        raise PrecisionError("Hecke projection needs at least M moments")
    chi = sp.basis.chi
    ops = eigen_operators(sp.basis, primes)
    V = hecke_closure(phi, ops)
    local = {op: mc.restrict(sp.operator(op), V, p, M) for op in ops}
    Y = np.eye(V.shape[1], dtype=np.int64)
    for op in ops:
        A = mc.restrict(local[op], Y, p, M)
        e = composite_residual(op, k, chi, q)
        K = mc.generalized_kernel((A - e * np.eye(A.shape[0], dtype=np.int64)) % q, p, M)
        Y = linalg.matmul_mod(Y, K, q)
        if Y.shape[1] == 0:
            break
    if Y.shape[1] > 2:
        raise RankNotOne(f"residual Eisenstein part of rank {Y.shape[1]}", Y.shape[1])
    best, best_c = None, M
    for op in ops:
        e = composite_residual(op, k, chi, q)
        img = linalg.matmul_mod((local[op] - e * np.eye(V.shape[1], dtype=np.int64)) % q, Y, q)
        for col in img.T:
            c = linalg.content(col, p, M)
            if c < best_c:
                best, best_c = col, c
    if best is None or best_c >= M:
        raise DegenerateProjector("every projector vanishes modulo p^M; raise the precision or add primes")
    if best_c:
        best = (best // p**best_c) % q
    y = linalg.matmul_mod(V, best[:, None], q)[:, 0]
    acc = np.full(sp.D, M - best_c, dtype=np.int64)
    return OvSymbol.from_flat_monomial(sp, y, acc, phi.seed)


def normalize(phi: OvSymbol) -> OvSymbol:
    """Scale so that Phi({oo} - {0})(1) = 1."""
    v = phi.value_at_d0()
    if v % phi.space.p == 0:
        raise PrecisionError("Phi({oo}-{0})(1) is not a unit")
    return phi.scale(pow(v, -1, phi.q))


# -- measures ----------------------------------------------------------------------------


def _disc_values(phi: OvSymbol, cusps, taylor_degree: int) -> np.ndarray:
    """Phi({oo} - {x})(z^t) for t <= taylor_degree, over many cusps x = num/den."""
    sp = phi.space
    basis, g, q = sp.basis, sp.g, sp.q
    mono = linalg.matmul_mod(phi.values, _forward(sp), q)[:, : g + 1]
    gens, signs, mats, owner = [], [], [], []
    for n_, (num, den) in enumerate(cusps):
        for j, s, ginv in _path_terms(basis, Fraction(num, den)):
            gens.append(j)
            signs.append(s)
            mats.append([int(x) % q for x in ginv])
            owner.append(n_)
    out = np.zeros((len(cusps), taylor_degree + 1), dtype=np.int64)
    if not gens:
        return out
    gens = np.array(gens, dtype=np.int64)
    signs = np.array(signs, dtype=np.int64) % q
    mats = np.array(mats, dtype=np.int64)
    owner = np.array(owner, dtype=np.int64)
    a, b, c, d = (mats[:, t] for t in range(4))
    Y = mono[gens]
    for t in range(taylor_degree + 1):
        # coefficients of (a+cz)^(g-t) (b+dz)^t
        P = np.zeros((len(gens), g + 1), dtype=np.int64)
        P[:, 0] = 1
        deg = 0
        for u, v in [(a, c)] * (g - t) + [(b, d)] * t:
            new = np.zeros_like(P)
            new[:, : deg + 2] = u[:, None] * P[:, : deg + 2] % q
            new[:, 1 : deg + 2] = (new[:, 1 : deg + 2] + v[:, None] * P[:, : deg + 1] % q) % q
            P = new
            deg += 1
        val = (Y * P % q).sum(axis=1) % q * signs % q
        np.add.at(out[:, t], owner, val)
    return out % q


@dataclass
class LocalMeasure(PadicLMeasure):
    """Disc values together with local moments int_disc ((x-a)/p^n)^t dmu, t <= taylor_degree."""

    local_moments: np.ndarray | None = None


def oms_measure(phi: OvSymbol, a_p: int, n: int, taylor_degree: int = 2) -> LocalMeasure:
    """Disc values a_p^-n Phi({oo} - {a/p^n})(1) on unit discs, with local moments."""
    sp = phi.space
    p, q = sp.p, sp.q
    if taylor_degree < 0 or taylor_degree > sp.g:
        raise DomainError("taylor degree must lie between 0 and k-2")
    acc = int(min(phi.accuracy[: taylor_degree + 1]))
    if acc < 1:
        raise PrecisionError("accuracy below p^1")
    if a_p % p == 0:
        raise DomainError("a_p is not a unit")
    pn = p**n
    units = [a for a in range(pn) if a % p]
    raw = _disc_values(phi, [(a, pn) for a in units], taylor_degree)
    raw = raw * pow(a_p, -n, q) % q
    vals = np.zeros(pn, dtype=np.int64)
    vals[units] = raw[:, 0]
    local = np.zeros((pn, taylor_degree + 1), dtype=np.int64)
    local[units] = raw
    accuracy = np.full(pn, acc, dtype=np.int64)
    return LocalMeasure(p, n, sp.M, vals, "oms", accuracy, local)


def agree_within_ledger(m1: PadicLMeasure, m2: PadicLMeasure) -> tuple[bool, int]:
    """Whether two measures agree on every unit disc modulo the smaller accuracy."""
    if (m1.p, m1.n) != (m2.p, m2.n):
        raise DomainError("measures live at different levels")
    acc = np.minimum(m1.accuracy, m2.accuracy)
    worst = int(acc[[a for a in m1.units()]].min())
    mod = m1.p**worst
    diff = (m1.values - m2.values) % mod
    return (not diff[m1.units()].any()), worst


def normalized_measure(m: PadicLMeasure, scale: int) -> PadicLMeasure:
    q = m.p**m.M
    s = scale % q
    out = PadicLMeasure(m.p, m.n, m.M, m.values * s % q, m.provenance, m.accuracy.copy())
    return out


@dataclass
class OmsRun:
    space: OvSpace
    symbol: OvSymbol
    measure: LocalMeasure
    seed: int
    iterations: int


def oms_route(
    basis: ManinBasis,
    packet: mc.EigenPacket,
    n: int = 3,
    D: int | None = None,
    seed: int = 0,
    iterations: int | None = None,
    taylor_degree: int = 2,
    primes=None,
) -> OmsRun:
    """Random symbol, U_p iteration, Hecke projection and normalized disc values."""
    M = packet.precision
    space = build_ov_space(basis, packet.k, D, M)
    phi = plus_part(random_ov_symbol(space, seed))
    t = iterations if iterations is not None else 2 * M
    phi = up_iterate(phi, packet.a_p, t)
    phi = normalize(project_eigensystem(phi, packet, primes))
    meas = oms_measure(phi, packet.a_p, n, taylor_degree)
    return OmsRun(space, phi, meas, seed, t)
