"""Branch projection of measures on Z_p^x and mu/lambda extraction.

A measure known on the discs a + p^n Z_p is pushed to the group ring of
(Z/p^n)^x = mu_(p-1) x (1+pZ)/(1+p^n Z), then split along the tame
characters omega^a. Each branch is a polynomial in T = [1+p] - 1 modulo
(1+T)^(p^(n-1)) - 1, stored in the T-basis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .chars import DirichletCharacter, bernoulli, bernoulli_chi, character
from .errors import DomainError
from . import linalg
from . import msclassical as mc
from .msclassical import PadicLMeasure
from .padic import gamma_log_table, teichmuller_table, vp_capped, vp_frac


@dataclass
class BranchSeries:
    """One omega^a branch as a polynomial in T over Z/p^M, degree < p^(n-1)."""

    p: int
    M: int
    branch: int
    coefficients: np.ndarray
    level: int
    certified_modulus: np.ndarray

    def __post_init__(self):
        if np.any(self.certified_modulus > self.M):
            raise DomainError("certified modulus exceeds the working precision")

    def __len__(self):
        return len(self.coefficients)

    def at_zero(self) -> int:
        return int(self.coefficients[0]) if len(self.coefficients) else 0

    def times(self, other: "BranchSeries") -> "BranchSeries":
        """Product truncated to the same number of coefficients (T-adic truncation)."""
        q = self.p**self.M
        n = len(self.coefficients)
        out = np.zeros(n, dtype=object)
        a = [int(x) for x in self.coefficients]
        b = [int(x) for x in other.coefficients]
        for i, x in enumerate(a):
            if x:
                for j in range(n - i):
                    out[i + j] += x * b[j]
        coeffs = np.array([int(x) % q for x in out], dtype=np.int64)
        cm = np.minimum(self.certified_modulus, other.certified_modulus.min())
        return BranchSeries(self.p, self.M, self.branch, coeffs, self.level, cm)


@dataclass
class MuLambdaReport:
    mu: int
    lambda_: int
    certified: bool
    reason: str = ""


@lru_cache(maxsize=8)
def _pascal(m: int, q: int) -> np.ndarray:
    """C(s, j) mod q for 0 <= s, j < m."""
    C = np.zeros((m, m), dtype=np.int64)
    C[0, 0] = 1
    for s in range(1, m):
        C[s, 0] = 1
        C[s, 1:] = (C[s - 1, 1:] + C[s - 1, :-1]) % q
    return C


def _binomial_to_t_basis(c: list[int], q: int) -> np.ndarray:
    """sum_s c_s (1+T)^s rewritten as sum_j b_j T^j."""
    C = _pascal(len(c), q)
    return linalg.matmul_mod(np.array(c, dtype=np.int64)[None, :], C, q)[0]


def branch_project(measure: PadicLMeasure, a: int) -> BranchSeries:
    """sum over units u mod p^n of omega^a(u) measure(u) (1+T)^(s_u)."""
    p, n, M = measure.p, measure.n, measure.M
    q = p**M
    omega = teichmuller_table(p, M)
    logs = gamma_log_table(p, n)
    m = p ** (n - 1)
    c = [0] * m
    acc = M
    for u in measure.units():
        v = measure.value(u)
        acc = min(acc, int(measure.accuracy[u]))
        if v:
            c[logs[u]] += pow(omega[u % p], a % (p - 1), q) * v
    c = [x % q for x in c]
    coeffs = _binomial_to_t_basis(c, q)
    return BranchSeries(p, M, a % (p - 1), coeffs, n, np.full(m, acc, dtype=np.int64))


def mu_lambda(series: BranchSeries) -> MuLambdaReport:
    """Minimal coefficient valuation and the first index attaining it (uncertified)."""
    p = series.p
    best, first = None, 0
    for i, x in enumerate(series.coefficients):
        cap = int(series.certified_modulus[i])
        v = vp_capped(int(x), p, cap)
        if v < cap and (best is None or v < best):
            best, first = v, i
    if best is None:
        return MuLambdaReport(series.M, 0, False, "series is zero within its certified precision")
    return MuLambdaReport(best, first, False, "not yet certified")


def certify(series: BranchSeries, lower: int | None = None, coarser: BranchSeries | None = None) -> MuLambdaReport:
    """mu and lambda of the branch with a certification verdict.

    The finite-level polynomial r is F modulo (1+T)^(p^(n-1)) - 1, so
    mu(r) >= mu(F), with equality exactly when lambda(F) < p^(n-1), in which
    case lambda(r) = lambda(F). If mu(r) equals a proven lower bound for
    mu(F), both invariants are determined. Otherwise the report is accepted
    only when it is stable between levels n-1 and n and lambda stays well
    inside the truncation window; that rule is heuristic.
    """
    rep = mu_lambda(series)
    if not rep.certified and rep.reason.startswith("series is zero"):
        return rep
    p, n = series.p, series.level
    if lower is not None and rep.mu < lower:
        return MuLambdaReport(rep.mu, rep.lambda_, False, f"measured mu {rep.mu} is below the lower bound {lower}")
    if lower is not None and rep.mu == lower:
        return MuLambdaReport(rep.mu, rep.lambda_, True, "proven: mu attains the lower bound")
    if n >= 2 and rep.lambda_ < p ** (n - 1) - p ** (n - 2) and coarser is not None:
        prev = mu_lambda(coarser)
        if (prev.mu, prev.lambda_) == (rep.mu, rep.lambda_):
            return MuLambdaReport(rep.mu, rep.lambda_, True, "heuristic: stable under refinement")
        return MuLambdaReport(rep.mu, rep.lambda_, False, "unstable between levels")
    return MuLambdaReport(rep.mu, rep.lambda_, False, "no certificate available at this level")


# -- bounds --------------------------------------------------------------------------


def lower_bound(p: int, k: int, chi: DirichletCharacter) -> int:
    """ord_p of zeta_p(k) (trivial character) or of L_p(chi^-1, z^k)."""
    if chi.is_trivial():
        if k % (p - 1) == 0:
            raise DomainError("zeta_p has a pole at this weight")
        x = -(1 - Fraction(p) ** (k - 1)) * bernoulli(k) / k
    else:
        inv = chi.inverse()
        x = -(1 - inv(p) * Fraction(p) ** (k - 1)) * bernoulli_chi(k, inv) / k
    if x == 0:
        raise DomainError("the special value vanishes")
    return vp_frac(x, p)


@dataclass
class BoundsReport:
    p: int
    N: int
    psi: str
    k: int
    branch: int
    lower: int
    mu: int | None
    lambda_: int | None
    upper: int | None
    eis_depth: int | None
    certified: bool
    verdict: str
    seed: int | None = None
    reason: str = field(default="", repr=False)

    def as_json(self) -> dict:
        return {
            "p": self.p,
            "N": self.N,
            "psi": self.psi,
            "k": self.k,
            "branch": self.branch,
            "lower": self.lower,
            "mu": self.mu,
            "lambda": self.lambda_,
            "upper": self.upper,
            "eis_depth": self.eis_depth,
            "certified": self.certified,
            "verdict": self.verdict,
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.as_json(), separators=(", ", ": "))


def verdict_for(mu_rep: MuLambdaReport, lower: int, branch: int = 0) -> str:
    if branch % 2:
        return "not applicable"
    if not mu_rep.certified:
        return "inconclusive"
    return "holds" if mu_rep.mu == lower else "counterexample"


def make_report(p, N, psi, k, branch, lower, series, coarser, a_p_val, eis_depth, seed=None) -> BoundsReport:
    rep = certify(series, lower, coarser)
    upper = a_p_val if branch == 0 else None
    return BoundsReport(
        p, N, psi, k, branch, lower, rep.mu, rep.lambda_, upper, eis_depth,
        rep.certified, verdict_for(rep, lower, branch), seed, rep.reason,
    )


def bounds_meet_consequence(report: BoundsReport) -> dict:
    """When lower = upper on branch 0, mu must equal them and lambda must vanish."""
    if report.branch != 0 or report.upper is None or report.lower != report.upper:
        raise DomainError("bounds do not meet on branch 0")
    ok = report.mu == report.upper and report.lambda_ == 0
    return {
        "p": report.p,
        "k": report.k,
        "bound": report.upper,
        "mu": report.mu,
        "lambda": report.lambda_,
        "status": "consistent" if ok else "counterexample",
    }


def series_valuation_at_zero(series: BranchSeries) -> int:
    return vp_capped(series.at_zero(), series.p, int(series.certified_modulus[0]))


def unit_multiple(series: BranchSeries, unit: list[int]) -> BranchSeries:
    if unit[0] % series.p == 0:
        raise DomainError("constant term must be a unit")
    n = len(series.coefficients)
    u = np.zeros(n, dtype=np.int64)
    u[: min(n, len(unit))] = np.array(unit[:n], dtype=np.int64) % series.p**series.M
    other = BranchSeries(series.p, series.M, series.branch, u, series.level, np.full(n, series.M, dtype=np.int64))
    return series.times(other)


# -- end to end ----------------------------------------------------------------------


@dataclass
class ClassicalRun:
    """Eigenpacket and level-n measure for one (p, N, psi, k), shared by all branches."""

    p: int
    N: int
    psi: str
    k: int
    packet: mc.EigenPacket
    measure: PadicLMeasure

    @property
    def upper(self) -> int:
        return self.packet.ord_ap_minus_one

    def series(self, a: int) -> tuple[BranchSeries, BranchSeries]:
        return branch_project(self.measure, a), branch_project(self.measure.coarsen(), a)


def classical_run(p: int, N: int, psi: str, k: int, M: int = 5, n: int = 3, cache_dir=None) -> ClassicalRun:
    chi = character(N, psi)
    basis = mc.build_manin_basis(N, p, chi)
    packet = mc.find_eisenstein_eigenpacket(basis, k, M, cache_dir=cache_dir)
    sym = mc.cusp_eigensymbol(basis, packet)
    measure = mc.measure_disc_values(sym, packet.a_p, n)
    return ClassicalRun(p, N, psi, k, packet, measure)


def report_for_branch(run: ClassicalRun, a: int, seed: int | None = None) -> BoundsReport:
    chi = run.packet.chi
    lower = lower_bound(run.p, run.k, chi)
    series, coarser = run.series(a)
    return make_report(run.p, run.N, run.psi, run.k, a, lower, series, coarser, run.upper, run.packet.eis_depth, seed)


def verify_bounds(p: int, N: int, psi: str, k: int, a: int, M: int = 5, n: int = 3, cache_dir=None) -> BoundsReport:
    """Lower bound, measured mu and lambda, and upper bound for one branch."""
    if a % 2:
        raise DomainError("only even branches carry a conjectural value")
    run = classical_run(p, N, psi, k, M, n, cache_dir)
    return report_for_branch(run, a)
