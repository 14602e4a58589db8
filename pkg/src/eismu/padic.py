"""Capped-precision p-adic integers and a few helpers built on them.

Everything here works with plain Python integers reduced modulo p^M.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import NamedTuple

from .errors import DomainError, PrecisionError


def vp(n: int, p: int) -> int:
    """Valuation of a non-zero integer. Raises on zero."""
    if n == 0:
        raise ValueError("valuation of zero")
    n = abs(n)
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def vp_capped(n: int, p: int, cap: int) -> int:
    """Valuation of n modulo p^cap, returning cap for zero."""
    n %= p**cap
    if n == 0:
        return cap
    return vp(n, p)


def vp_frac(x, p: int) -> int:
    """Valuation of a non-zero Fraction (or int)."""
    num = getattr(x, "numerator", x)
    den = getattr(x, "denominator", 1)
    return vp(num, p) - (vp(den, p) if den != 1 else 0)


def frac_mod(x, q: int) -> int:
    """Reduce a p-integral rational modulo q."""
    num = getattr(x, "numerator", x)
    den = getattr(x, "denominator", 1)
    try:
        return num * pow(den, -1, q) % q
    except ValueError:
        raise PrecisionError(f"denominator {den} is not invertible modulo {q}") from None


class ValuationReport(NamedTuple):
    value: int
    exact: bool


@dataclass(frozen=True)
class PadicCapped:
    """An element of Z_p known modulo p^cap."""

    prime: int
    cap: int
    residue: int

    def __post_init__(self):
        if self.cap < 1:
            raise DomainError("cap must be at least 1")
        object.__setattr__(self, "residue", self.residue % self.prime**self.cap)

    @classmethod
    def from_rational(cls, x, p: int, cap: int) -> "PadicCapped":
        return cls(p, cap, frac_mod(x, p**cap))

    @property
    def modulus(self) -> int:
        return self.prime**self.cap

    def _coerce(self, other) -> int:
        if isinstance(other, PadicCapped):
            if other.prime != self.prime:
                raise DomainError("primes differ")
            if other.cap < self.cap:
                return other.residue, other.cap
            return other.residue, self.cap
        return int(other), self.cap

    def __add__(self, other):
        r, cap = self._coerce(other)
        return PadicCapped(self.prime, cap, self.residue + r)

    __radd__ = __add__

    def __sub__(self, other):
        r, cap = self._coerce(other)
        return PadicCapped(self.prime, cap, self.residue - r)

    def __rsub__(self, other):
        r, cap = self._coerce(other)
        return PadicCapped(self.prime, cap, r - self.residue)

    def __neg__(self):
        return PadicCapped(self.prime, self.cap, -self.residue)

    def __mul__(self, other):
        r, cap = self._coerce(other)
        return PadicCapped(self.prime, cap, self.residue * r)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            return self.inverse() ** (-e)
        return PadicCapped(self.prime, self.cap, pow(self.residue, e, self.modulus))

    def is_unit(self) -> bool:
        return self.residue % self.prime != 0

    def inverse(self) -> "PadicCapped":
        if not self.is_unit():
            raise DomainError("not a unit")
        return PadicCapped(self.prime, self.cap, pow(self.residue, -1, self.modulus))

    def __eq__(self, other):
        if isinstance(other, PadicCapped):
            return (self.prime, self.cap, self.residue) == (other.prime, other.cap, other.residue)
        if isinstance(other, int):
            return (self.residue - other) % self.modulus == 0
        return NotImplemented

    def __hash__(self):
        return hash((self.prime, self.cap, self.residue))

    def __int__(self):
        return self.residue

    def __repr__(self):
        return f"{self.residue} + O({self.prime}^{self.cap})"


def val(x: PadicCapped) -> ValuationReport:
    if x.residue == 0:
        return ValuationReport(x.cap, False)
    return ValuationReport(vp(x.residue, x.prime), True)


def teichmuller(u: int, p: int, M: int) -> PadicCapped:
    """The (p-1)-st root of unity congruent to u modulo p."""
    if u % p == 0:
        raise DomainError(f"{u} is not a unit modulo {p}")
    q = p**M
    x = u % q
    while True:
        y = pow(x, p, q)
        if y == x:
            return PadicCapped(p, M, x)
        x = y


@lru_cache(maxsize=None)
def teichmuller_table(p: int, M: int) -> tuple[int, ...]:
    """omega(u) mod p^M for u = 0..p-1 (entry 0 is 0)."""
    return (0,) + tuple(teichmuller(u, p, M).residue for u in range(1, p))


def gamma_log_index(u: int, n: int, p: int) -> int:
    """The s mod p^(n-1) with (1+p)^s = u/omega(u) modulo p^n."""
    if u % p == 0:
        raise DomainError(f"{u} is not a unit modulo {p}")
    if n < 1:
        raise DomainError("level must be at least 1")
    q = p**n
    x = u * pow(teichmuller_table(p, n)[u % p], -1, q) % q
    gamma = 1 + p
    s = 0
    for i in range(1, n):
        # x = 1 mod p^i; peel off the p^(i-1) digit of s
        step = pow(gamma, p ** (i - 1), q)
        unit = (step - 1) // p**i % p
        d = (x - 1) // p**i % p * pow(unit, -1, p) % p
        x = x * pow(step, -d, q) % q
        s += d * p ** (i - 1)
    assert x == 1
    return s


@lru_cache(maxsize=8)
def gamma_log_table(p: int, n: int) -> dict[int, int]:
    """Map each unit u mod p^n to gamma_log_index(u, n, p)."""
    q = p**n
    omega = teichmuller_table(p, n)
    gamma = 1 + p
    table = {}
    g = 1
    for s in range(p ** (n - 1)):
        for w in omega[1:]:
            table[g * w % q] = s
        g = g * gamma % q
    return table


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


@lru_cache(maxsize=None)
def stirling1(n: int, k: int) -> int:
    """Signed Stirling numbers of the first kind."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return stirling1(n - 1, k - 1) - (n - 1) * stirling1(n - 1, k)


def mahler_basis_matrices(k: int, p: int, M: int) -> tuple[list[list[int]], list[list[int]]]:
    """Change of basis between monomials z^j and binomials C(z, j), j <= k-2.

    forward[i][j] is the C(z, i) coefficient of z^j, so binomial coordinates
    are forward @ monomial coordinates. backward is the inverse modulo p^M.
    """
    if k < 2:
        raise DomainError("k must be at least 2")
    g = k - 2
    if g >= p:
        raise PrecisionError(
            f"degree {g} >= p={p}: {g}! is not invertible mod {p}, binomial and monomial bases differ"
        )
    q = p**M
    forward = [[stirling2(j, i) * factorial(i) % q for j in range(g + 1)] for i in range(g + 1)]
    backward = [
        [stirling1(j, i) * pow(factorial(j), -1, q) % q for j in range(g + 1)] for i in range(g + 1)
    ]
    return forward, backward


def mat_mul_mod(a, b, q: int):
    n, m = len(a), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) % q for j in range(m)] for i in range(n)]
