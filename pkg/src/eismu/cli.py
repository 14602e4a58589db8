"""Command-line front end: scan, mu, verify and eisen-vanish.

Reports go to stdout as JSON lines, one object per line; a short human
summary goes to stderr. Failures of individual jobs become JSON error
records; only invalid input gives a non-zero exit status.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import click
import numpy as np

from . import iwasawa
from . import msclassical as mc
from .chars import character, irregular_pairs, is_prime
from .errors import DomainError, EismuError, RankNotOne

CACHE_ENV = "EISMU_CACHE_DIR"
DEFAULT_BUDGET = 20_000_000


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(", ", ": "))


def totient(n: int) -> int:
    out = n
    m = n
    d = 2
    while d * d <= m:
        if m % d == 0:
            while m % d == 0:
                m //= d
            out -= out // d
        d += 1
    if m > 1:
        out -= out // m
    return out


def gamma0_index(L: int) -> int:
    """Number of Manin generators, [SL_2(Z) : Gamma_0(L)]."""
    out = Fraction(L)
    m = L
    d = 2
    while d * d <= m:
        if m % d == 0:
            out *= Fraction(d + 1, d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        out *= Fraction(m + 1, m)
    return int(out)


def weight_for_branch(j: int, p: int) -> int:
    """Smallest k >= 2 with k = j mod p-1."""
    k = j % (p - 1)
    while k < 2:
        k += p - 1
    return k


@dataclass
class JobSpec:
    command: str
    p: int
    N: int = 1
    psi: str = "triv"
    k: int = 0
    branches: list = field(default_factory=lambda: [0])
    M: int = 5
    n: int = 3
    D: int | None = None
    seed: int = 0
    route: str = "classical"
    cache_dir: str | None = None

    def key(self) -> tuple:
        return (self.p, self.N, self.psi, self.k)


def validate(spec: JobSpec) -> int:
    """Check the parameter combination; returns the lower bound. Raises DomainError."""
    p, N, k = spec.p, spec.N, spec.k
    if not is_prime(p) or p < 5:
        raise DomainError(f"p = {p} must be a prime at least 5")
    if N < 1:
        raise DomainError("N must be positive")
    if N % p == 0:
        raise DomainError(f"p = {p} divides N = {N}")
    if totient(N) % p == 0:
        raise DomainError(f"p = {p} divides phi(N) = {totient(N)}")
    chi = character(N, spec.psi)
    if k < 2:
        raise DomainError("k must be at least 2")
    if (-1) ** k != chi.parity:
        raise DomainError(f"parity mismatch: (-1)^{k} differs from psi(-1) = {chi.parity}")
    if k - 2 >= p:
        raise DomainError(f"k - 2 = {k - 2} must be below p = {p}")
    if spec.n < 2:
        raise DomainError("level must be at least 2")
    if spec.M < 2:
        raise DomainError("precision must be at least 2")
    if spec.D is not None and not (spec.M <= spec.D <= p):
        raise DomainError(f"moments D = {spec.D} must satisfy M <= D <= p")
    lower = iwasawa.lower_bound(p, k, chi)
    if lower < 1:
        raise DomainError(f"(p, N, psi, k) = ({p}, {N}, {spec.psi}, {k}) is not Eisenstein-congruent")
    return lower


def estimate_cost(spec: JobSpec) -> int:
    """Rough work estimate: disc evaluations plus a proxy for the symbol space size."""
    pn = spec.p**spec.n
    size = gamma0_index(spec.N * spec.p) * (spec.k - 1)
    cost = pn * math.ceil(math.log2(pn)) + size * size // 50
    if spec.route in ("oms", "both"):
        D = spec.D or max(spec.k - 1, 8)
        osize = gamma0_index(spec.N * spec.p) * D
        cost += 2 * osize * osize
    return cost


def error_record(spec: JobSpec, exc: Exception, branch=None) -> dict:
    rec = {
        "p": spec.p,
        "N": spec.N,
        "psi": spec.psi,
        "k": spec.k,
        "branch": branch,
        "error": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, RankNotOne):
        rec["rank"] = exc.rank
    return rec


def _classical_reports(spec: JobSpec, run: iwasawa.ClassicalRun) -> list[dict]:
    return [iwasawa.report_for_branch(run, a).as_json() for a in spec.branches]


def _oms_reports(spec: JobSpec, run: iwasawa.ClassicalRun):
    from . import oms

    basis = run.packet.context["space"].basis
    orun = oms.oms_route(basis, run.packet, spec.n, spec.D, spec.seed)
    lower = iwasawa.lower_bound(spec.p, spec.k, run.packet.chi)
    out = []
    for a in spec.branches:
        series = iwasawa.branch_project(orun.measure, a)
        coarser = iwasawa.branch_project(orun.measure.coarsen(), a)
        rep = iwasawa.make_report(
            spec.p, spec.N, spec.psi, spec.k, a, lower, series, coarser, run.upper, run.packet.eis_depth, spec.seed
        )
        out.append(rep.as_json())
    return out, orun


def run_job(spec: JobSpec, check_residual: bool = True) -> list[dict]:
    """All records for one (p, N, psi, k); errors become records."""
    try:
        if spec.N == 1 and check_residual:
            mc.check_residual_rank(spec.p, spec.k, cache_dir=spec.cache_dir)
        run = iwasawa.classical_run(spec.p, spec.N, spec.psi, spec.k, spec.M, spec.n, spec.cache_dir)
    except EismuError as exc:
        return [error_record(spec, exc)]
    out = []
    if spec.route in ("classical", "both"):
        out += _classical_reports(spec, run)
    if spec.route in ("oms", "both"):
        try:
            reports, orun = _oms_reports(spec, run)
        except EismuError as exc:
            return out + [error_record(spec, exc)]
        out += reports
        if spec.route == "both":
            from . import oms

            d0 = mc.d0_value(run.packet.context["symbol"])
            ref = oms.normalized_measure(run.measure, pow(d0, -1, spec.p**run.measure.M))
            agree, acc = oms.agree_within_ledger(ref, orun.measure)
            out.append({
                "p": spec.p,
                "N": spec.N,
                "psi": spec.psi,
                "k": spec.k,
                "check": "routes_agree",
                "level": spec.n,
                "agree": agree,
                "accuracy": acc,
                "seed": spec.seed,
            })
    return out


def run_jobs(specs: list[JobSpec], workers: int):
    """Yield record lists in the order of specs, using a bounded process pool."""
    if workers <= 1 or len(specs) <= 1:
        for spec in specs:
            yield run_job(spec)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_job, spec) for spec in specs]
        for fut in futures:
            yield fut.result()


class Emitter:
    def __init__(self, output):
        self.fh = open(output, "w") if output else sys.stdout
        self.counts = {"holds": 0, "inconclusive": 0, "counterexample": 0, "not applicable": 0, "errors": 0}

    def emit(self, rec: dict) -> None:
        if "error" in rec:
            self.counts["errors"] += 1
        elif "verdict" in rec:
            self.counts[rec["verdict"]] += 1
        self.fh.write(dumps(rec) + "\n")
        self.fh.flush()

    def close(self) -> None:
        if self.fh is not sys.stdout:
            self.fh.close()

    def summary(self) -> str:
        c = self.counts
        return (
            f"summary: holds={c['holds']} inconclusive={c['inconclusive']} "
            f"counterexample={c['counterexample']} errors={c['errors']}"
        )


def _resolve_weight(p: int, k: int | None, j: int | None) -> int:
    if k is not None and j is not None:
        raise click.UsageError("give either --k or --j, not both")
    if k is None and j is None:
        raise click.UsageError("one of --k or --j is required")
    if j is not None:
        if not is_prime(p) or p < 5:
            raise click.UsageError(f"p = {p} must be a prime at least 5")
        return weight_for_branch(j, p)
    return k


def _check_budget(cost: int, budget: int) -> None:
    if cost > budget:
        raise click.ClickException(
            f"estimated cost {cost} exceeds the compute budget {budget}; nothing was computed (use --budget to override)"
        )


cache_option = click.option(
    "--cache-dir",
    type=click.Path(file_okay=False),
    envvar=CACHE_ENV,
    default=None,
    help=f"Cache directory for symbol spaces and Hecke matrices (default from ${CACHE_ENV}).",
)


@click.group()
@click.version_option(package_name="eismu")
def main():
    """p-adic L-functions of Eisenstein-congruent eigenforms and their mu-invariants."""


@main.command()
@click.option("--pmax", type=int, required=True, help="Scan primes 5 <= p <= pmax.")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def scan(pmax, output):
    """List irregular pairs (p, k) with p <= pmax."""
    if pmax < 5:
        raise click.BadParameter("pmax must be at least 5", param_hint="--pmax")
    em = Emitter(output)
    pairs = irregular_pairs(pmax)
    for pair in pairs:
        em.emit(pair.as_json())
    em.close()
    click.echo(f"{len(pairs)} irregular pairs with p <= {pmax}", err=True)


def _job_options(f):
    opts = [
        click.option("--p", "p", type=int, required=True),
        click.option("--N", "N", type=int, default=1, show_default=True),
        click.option("--psi", type=click.Choice(["triv", "quad"]), default=None, help="Default: triv for N=1, else quad."),
        click.option("--k", "k", type=int, default=None),
        click.option("--j", "j", type=int, default=None, help="Weight class mod p-1; mapped to the smallest k >= 2."),
        click.option("--prec", "M", type=int, default=5, show_default=True),
        click.option("--level", "n", type=int, default=3, show_default=True),
        click.option("--moments", "D", type=int, default=None),
        click.option("--seed", type=int, default=0, show_default=True),
        cache_option,
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _default_psi(N: int, psi: str | None) -> str:
    return psi if psi is not None else ("triv" if N == 1 else "quad")


@main.command()
@_job_options
@click.option("--branch", "branches", type=int, multiple=True, help="Branch a (repeatable, default 0).")
@click.option("--route", type=click.Choice(["classical", "oms", "both"]), default="classical", show_default=True)
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def mu(p, N, psi, k, j, M, n, D, seed, cache_dir, branches, route, budget, output):
    """mu and lambda of the branches of one Eisenstein-congruent eigenform."""
    k = _resolve_weight(p, k, j)
    psi = _default_psi(N, psi)
    branch_list = sorted({a % (p - 1) for a in branches}) if branches else [0]
    spec = JobSpec("mu", p, N, psi, k, branch_list, M, n, D, seed, route, cache_dir)
    try:
        validate(spec)
    except DomainError as exc:
        raise click.UsageError(str(exc))
    em = Emitter(output)
    if N == 1:
        # the rank guard is cheap and must fire even when the full run is out of budget
        try:
            mc.check_residual_rank(p, k, cache_dir=cache_dir)
        except EismuError as exc:
            em.emit(error_record(spec, exc))
            em.close()
            click.echo(em.summary(), err=True)
            return
    _check_budget(estimate_cost(spec), budget)
    for rec in run_job(spec, check_residual=False):
        em.emit(rec)
    em.close()
    click.echo(em.summary(), err=True)


@main.command()
@click.option("--pmax", type=int, required=True)
@click.option("--branch", "branches", type=int, multiple=True, help="Even branches to check (default: all).")
@click.option("--prec", "M", type=int, default=5, show_default=True)
@click.option("--level", "n", type=int, default=3, show_default=True)
@click.option("--budget", type=int, default=DEFAULT_BUDGET, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
@cache_option
def verify(pmax, branches, M, n, budget, jobs, output, cache_dir):
    """Check mu(f_k, omega^a) against the lower bound for every irregular pair p <= pmax."""
    if pmax < 5:
        raise click.BadParameter("pmax must be at least 5", param_hint="--pmax")
    if any(a % 2 for a in branches):
        raise click.BadParameter("only even branches carry a verdict", param_hint="--branch")
    specs = []
    for pair in irregular_pairs(pmax):
        p, k = pair.p, pair.k
        bl = sorted({a % (p - 1) for a in branches}) if branches else list(range(0, p - 1, 2))
        specs.append(JobSpec("verify", p, 1, "triv", k, bl, M, n, None, 0, "classical", cache_dir))
    specs.sort(key=JobSpec.key)
    _check_budget(sum(estimate_cost(s) for s in specs), budget)
    em = Emitter(output)
    for spec, recs in zip(specs, run_jobs(specs, jobs)):
        if len(recs) == 1 and "error" in recs[0]:
            click.echo(f"p={spec.p} k={spec.k}: {recs[0]['error']}: {recs[0]['message']}", err=True)
        for rec in recs:
            em.emit(rec)
    em.close()
    click.echo(em.summary(), err=True)


def eisen_vanish_record(p: int, N: int, psi: str, k: int, M: int = 5, levels=(1, 2, 3), lift: bool = False) -> dict:
    """Boundary Eisenstein symbol checks: plus part, support away from oo, value at 0, zero unit measure."""
    chi = character(N, psi)
    basis = mc.build_manin_basis(N, p, chi)
    E = mc.boundary_eisenstein_symbol(basis, k, M)
    q = p**M
    g = k - 2
    checks = {}
    checks["manin_relations"] = E.relation_defect() >= M
    checks["plus_part"] = bool(np.array_equal(mc.iota_symbol(E).values, E.values))
    e0 = np.zeros(g + 1, dtype=np.int64)
    e0[0] = 1
    checks["value_at_zero_is_evaluation"] = bool(np.array_equal(E.evaluate_mono(0, None), e0))
    # phi({x} - {oo}) must equal the boundary value at x alone, for cusps of every kind
    cusps = [Fraction(a, b) for b in (1, 2, 3, p, N * p, p * p) for a in range(-3, 4) if math.gcd(a, b) == 1]
    ok = True
    for x in cusps:
        want = mc.boundary_cusp_value(x.numerator, x.denominator, k, basis, q)
        ok = ok and bool(np.array_equal(E.evaluate_mono(x, None), want))
    checks["vanishes_at_infinity"] = ok
    zero = {}
    for n in levels:
        meas = mc.measure_disc_values(E, 1, n)
        zero[str(n)] = not meas.values[meas.units()].any()
    checks["unit_measure_zero"] = all(zero.values())
    if lift:
        from . import oms

        space = oms.build_ov_space(basis, k, None, M)
        Phi = oms.boundary_eisenstein_lift(space)
        spec_ok = bool(np.array_equal(Phi.specialize().values % q, E.values % q))
        lm = [oms.oms_measure(Phi, 1, n, 0) for n in levels]
        checks["lift_relations"] = Phi.relation_defect() >= M
        checks["lift_specializes"] = spec_ok
        checks["lift_unit_measure_zero"] = all(not m.values[m.units()].any() for m in lm)
    holds = all(checks.values())
    return {
        "p": p,
        "N": N,
        "psi": psi,
        "k": k,
        "checks": checks,
        "unit_measure_zero_by_level": zero,
        "status": "holds" if holds else "counterexample",
    }


@main.command("eisen-vanish")
@click.option("--p", "p", type=int, required=True)
@click.option("--N", "N", type=int, default=1, show_default=True)
@click.option("--psi", type=click.Choice(["triv", "quad"]), default=None)
@click.option("--k", "k", type=int, default=None)
@click.option("--j", "j", type=int, default=None)
@click.option("--prec", "M", type=int, default=5, show_default=True)
@click.option("--level", "n", type=int, default=3, show_default=True, help="Check unit discs at levels 1..n.")
@click.option("--lift/--no-lift", default=False, help="Also check the overconvergent lift.")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def eisen_vanish(p, N, psi, k, j, M, n, lift, output):
    """Check that the boundary Eisenstein symbol gives the zero measure on Z_p^x."""
    k = _resolve_weight(p, k, j)
    psi = _default_psi(N, psi)
    spec = JobSpec("eisen-vanish", p, N, psi, k, [0], M, max(n, 2))
    try:
        validate(spec)
    except DomainError as exc:
        raise click.UsageError(str(exc))
    if n < 1:
        raise click.BadParameter("level must be at least 1", param_hint="--level")
    em = Emitter(output)
    rec = eisen_vanish_record(p, N, psi, k, M, tuple(range(1, n + 1)), lift)
    em.emit(rec)
    em.close()
    click.echo(f"eisen-vanish ({p}, {N}, {psi}, {k}): {rec['status']}", err=True)


if __name__ == "__main__":
    main()
