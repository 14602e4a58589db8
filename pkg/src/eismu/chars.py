"""Characters, Bernoulli numbers, special values and Eisenstein q-expansions."""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, gcd

from .errors import DomainError, PoleError
from .padic import PadicCapped, frac_mod, vp, vp_frac


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def primes_up_to(n: int) -> list[int]:
    return [q for q in range(2, n + 1) if is_prime(q)]


def kronecker(d: int, n: int) -> int:
    """Kronecker symbol (d/n) for n >= 1."""
    if n == 0:
        return 1 if abs(d) == 1 else 0
    result = 1
    while n % 2 == 0:
        n //= 2
        if d % 2 == 0:
            return 0
        if d % 8 in (3, 5):
            result = -result
    # Jacobi symbol (d/n) for odd n
    a = d % n
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


@dataclass(frozen=True)
class DirichletCharacter:
    """A primitive character with values +1/-1 (trivial or quadratic).

    values[a] is chi(a) for 0 <= a < modulus, with 0 at non-units.
    """

    modulus: int
    values: tuple[int, ...] = field(repr=False)
    name: str = "triv"

    def __call__(self, a: int) -> int:
        return self.values[a % self.modulus]

    @property
    def order(self) -> int:
        return 1 if all(v in (0, 1) for v in self.values) else 2

    @property
    def parity(self) -> int:
        return self(-1)

    def is_trivial(self) -> bool:
        return self.modulus == 1

    def inverse(self) -> "DirichletCharacter":
        return self

    def is_primitive(self) -> bool:
        N = self.modulus
        for d in range(1, N):
            if N % d:
                continue
            # induced from modulus d iff chi(a) = 1 whenever a = 1 mod d, gcd(a, N) = 1
            if all(self(a) == 1 for a in range(1, N, d) if gcd(a, N) == 1):
                return False
        return True

    def is_multiplicative(self) -> bool:
        N = self.modulus
        units = [a for a in range(N) if gcd(a, N) == 1]
        return all(self(a * b) == self(a) * self(b) for a in units for b in units)


def trivial_character() -> DirichletCharacter:
    return DirichletCharacter(1, (1,), "triv")


def quadratic_character(N: int) -> DirichletCharacter:
    """The primitive quadratic character of conductor N."""
    for D in (N, -N):
        if D % 4 in (0, 1) and _is_fundamental(D):
            vals = tuple(kronecker(D, a) if gcd(a, N) == 1 else 0 for a in range(N))
            chi = DirichletCharacter(N, vals, "quad")
            return chi
    raise DomainError(f"no primitive quadratic character of conductor {N}")


def _is_fundamental(D: int) -> bool:
    if D in (0, 1):
        return False
    if D % 4 == 1:
        m = abs(D)
        return all(m % (q * q) for q in range(2, int(m**0.5) + 1))
    if D % 4 == 0:
        m = D // 4
        if m % 4 not in (2, 3):
            return False
        m = abs(m)
        return all(m % (q * q) for q in range(2, int(m**0.5) + 1))
    return False


def character(N: int, psi: str) -> DirichletCharacter:
    if psi == "triv":
        if N != 1:
            raise DomainError("the trivial character is only used with N = 1")
        return trivial_character()
    if psi == "quad":
        return quadratic_character(N)
    raise DomainError(f"unknown character selector {psi!r}")


_bern_lock = threading.Lock()
_bern_cache: list[Fraction] = [Fraction(1)]


def bernoulli(k: int) -> Fraction:
    """B_k with B_1 = -1/2."""
    if k < 0:
        raise DomainError("k must be non-negative")
    if k == 1:
        return Fraction(-1, 2)
    if k > 1 and k % 2:
        return Fraction(0)
    with _bern_lock:
        cache = _bern_cache
        while len(cache) <= k:
            n = len(cache)
            # sum_{j<=n} C(n+1, j) B_j = 0
            s = Fraction(0)
            for j in range(n):
                bj = cache[j] if j != 1 else Fraction(-1, 2)
                if j > 1 and j % 2:
                    continue
                s += comb(n + 1, j) * bj
            cache.append(-s / (n + 1))
        return cache[k]


def bernoulli_poly(k: int, x: Fraction) -> Fraction:
    return sum(comb(k, j) * bernoulli(j) * x ** (k - j) for j in range(k + 1))


def bernoulli_chi(k: int, chi: DirichletCharacter) -> Fraction:
    """Generalized Bernoulli number B_{k,chi} (B_{k,1} = B_k, except B_{1,1} = +1/2)."""
    if k < 1:
        raise DomainError("k must be at least 1")
    N = chi.modulus
    if N == 1:
        return Fraction(1, 2) if k == 1 else bernoulli(k)
    if chi.parity != (-1) ** k:
        return Fraction(0)
    total = sum(chi(a) * bernoulli_poly(k, Fraction(a, N)) for a in range(1, N + 1))
    return Fraction(N) ** (k - 1) * total


def zeta_p_at(p: int, k: int, M: int) -> PadicCapped:
    """zeta_p(k) = -(1 - p^(k-1)) B_k / k modulo p^M."""
    if k < 2 or k % 2:
        raise DomainError("k must be even and at least 2")
    if k % (p - 1) == 0:
        raise PoleError(f"k={k} is divisible by p-1={p - 1}")
    x = -(1 - Fraction(p) ** (k - 1)) * bernoulli(k) / k
    return PadicCapped.from_rational(x, p, M)


def lp_char_at(chi: DirichletCharacter, k: int, p: int, M: int, branch_nonzero: bool = False) -> PadicCapped:
    """L_p(chi, z^k) = -(1 - chi^-1(p) p^(k-1)) B_{k,chi^-1} / k modulo p^M."""
    if k < 1:
        raise DomainError("k must be at least 1")
    if chi.modulus % p == 0:
        raise DomainError("p divides the conductor")
    if chi.is_trivial() and not branch_nonzero:
        if k % (p - 1) == 0 or k == 1:
            raise PoleError("trivial character on the trivial branch has a pole here")
    if chi.parity != (-1) ** k:
        warnings.warn("parity mismatch: value is zero", stacklevel=2)
        return PadicCapped(p, M, 0)
    inv = chi.inverse()
    x = -(1 - inv(p) * Fraction(p) ** (k - 1)) * bernoulli_chi(k, inv) / k
    return PadicCapped.from_rational(x, p, M)


def lp_char_valuation(chi: DirichletCharacter, k: int, p: int) -> int:
    """Exact valuation of L_p(chi, z^k) (the rational value is non-zero here)."""
    inv = chi.inverse()
    x = -(1 - inv(p) * Fraction(p) ** (k - 1)) * bernoulli_chi(k, inv) / k
    if x == 0:
        raise DomainError("value is zero")
    return vp_frac(x, p)


@dataclass(frozen=True)
class IrregularPair:
    p: int
    k: int
    index: int

    def as_json(self) -> dict:
        return {"p": self.p, "k": self.k, "index": self.index}


def irregular_pairs(pmax: int) -> list[IrregularPair]:
    if pmax < 5:
        raise DomainError("pmax must be at least 5")
    out = []
    for p in primes_up_to(pmax):
        if p < 5:
            continue
        for k in range(2, p - 2, 2):
            num = bernoulli(k).numerator
            if num % p == 0:
                out.append(IrregularPair(p, k, vp(num, p)))
    return out


def is_irregular_by_power_sums(p: int, k: int) -> bool:
    """p | B_k via sum_{a<p} a^k = p B_k mod p^2 (k even, p-1 not dividing k)."""
    s = sum(pow(a, k, p * p) for a in range(1, p)) % (p * p)
    return s % (p * p) == 0


def eisenstein_eigenvalue(ell: int, k: int, chi: DirichletCharacter, q: int) -> int:
    return (1 + chi(ell) * pow(ell, k - 1, q)) % q


@dataclass(frozen=True)
class EisensteinData:
    k: int
    chi: DirichletCharacter
    p: int
    M: int
    constant_term: PadicCapped
    coefficients: tuple[int, ...]  # a_0 placeholder then a_1..a_nmax mod p^M

    def a(self, n: int) -> int:
        return self.coefficients[n]

    def eigenvalue(self, ell: int) -> int:
        if ell == self.p:
            return 1
        return eisenstein_eigenvalue(ell, self.k, self.chi, self.p**self.M)


def eisenstein_constant_term(k: int, chi: DirichletCharacter, p: int) -> Fraction:
    return -(1 - chi(p) * Fraction(p) ** (k - 1)) * bernoulli_chi(k, chi) / (2 * k)


def eisenstein_qexp(k: int, chi: DirichletCharacter, p: int, nmax: int, M: int) -> EisensteinData:
    """Coefficients of the p-stabilized (ordinary) Eisenstein series."""
    if k < 2:
        raise DomainError("k must be at least 2")
    if chi.modulus % p == 0:
        raise DomainError("p divides the conductor")
    q = p**M
    coeffs = [0] * (nmax + 1)
    for d in range(1, nmax + 1):
        if d % p == 0:
            continue
        term = chi(d) * pow(d, k - 1, q)
        for n in range(d, nmax + 1, d):
            coeffs[n] += term
    coeffs = tuple(c % q for c in coeffs)
    const = eisenstein_constant_term(k, chi, p)
    if const.denominator % p == 0:
        raise PoleError("constant term is not p-integral")
    return EisensteinData(k, chi, p, M, PadicCapped(p, M, frac_mod(const, q)), coeffs)
