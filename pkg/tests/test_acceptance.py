"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with: pytest tests/test_acceptance.py -v -s
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from eismu import cli, iwasawa, oms
from eismu import msclassical as mc
from eismu.chars import bernoulli_chi, character
from eismu.padic import vp_capped, vp_frac

ROOT = Path(__file__).resolve().parents[1]

# pinned budgets (seconds) and tolerances
FLAGSHIP_SECONDS = 600
SWEEP_SECONDS = 3600
PROPERTY_SECONDS = 300
CROSS_ROUTE_MIN_DIGITS = 3


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


def test_criterion_1_flagship(report):
    t0 = time.perf_counter()
    run = iwasawa.classical_run(19, 5, "quad", 8, M=5, n=3)
    rep = iwasawa.report_for_branch(run, 0)
    elapsed = time.perf_counter() - t0
    ord_b = vp_frac(bernoulli_chi(8, character(5, "quad")), 19)
    got = (ord_b, run.packet.eis_depth, run.upper, rep.mu, rep.lambda_)
    ok = got == (2, 2, 3, 2, 1) and rep.certified and elapsed < FLAGSHIP_SECONDS
    detail = f"(ord B, eis, ord(a_p-1), mu, lambda) = {got}, certified={rep.certified}, {elapsed:.1f}s"
    assert report(1, ok, detail)


@pytest.mark.slow
def test_criterion_2_sweep_branch_zero(report):
    t0 = time.perf_counter()
    rows = []
    for p, k in ((37, 32), (59, 44), (67, 58)):
        mc.check_residual_rank(p, k)
        run = iwasawa.classical_run(p, 1, "triv", k, M=5, n=3)
        rep = iwasawa.report_for_branch(run, 0)
        meet = iwasawa.bounds_meet_consequence(rep)
        rows.append((p, k, rep.lower, rep.upper, rep.mu, rep.lambda_, rep.certified, meet["status"]))
    elapsed = time.perf_counter() - t0
    ok = all(r[2:] == (1, 1, 1, 0, True, "consistent") for r in rows) and elapsed < SWEEP_SECONDS
    assert report(2, ok, f"(p, k, lower, upper, mu, lambda, certified, status) = {rows}, {elapsed:.1f}s")


def test_criterion_3_all_even_branches_p37(report, run37):
    reps = [iwasawa.report_for_branch(run37, a) for a in range(0, 36, 2)]
    bad = [(r.branch, r.mu, r.certified) for r in reps if r.mu != 1 or not r.certified]
    ok = len(reps) == 18 and not bad
    assert report(3, ok, f"{len(reps)} even branches, mu = 1 and certified on all; failures: {bad}")


def test_criterion_4_eisenstein_vanishing(report):
    out = []
    for p, N, psi, k in ((37, 1, "triv", 32), (19, 5, "quad", 8)):
        rec = cli.eisen_vanish_record(p, N, psi, k, M=5, levels=(1, 2, 3))
        out.append(((p, k, psi), rec["checks"], rec["unit_measure_zero_by_level"]))
    ok = all(all(checks.values()) and all(levels.values()) for _, checks, levels in out)
    detail = "; ".join(f"{case}: {sorted(k for k, v in checks.items() if v)}" for case, checks, _ in out)
    assert report(4, ok, detail)


def test_criterion_5_unit_value_and_interpolation(report, run19, run37):
    rows = []
    for run in (run19, run37):
        sym = run.packet.context["symbol"]
        d0 = mc.d0_value(sym)
        s, _ = run.series(0)
        rows.append((run.p, d0 % run.p != 0, iwasawa.series_valuation_at_zero(s), run.upper))
    ok = all(unit and v == upper for _, unit, v, upper in rows)
    assert report(5, ok, f"(p, phi(D0)(1) unit, val at T=0, ord(a_p-1)) = {rows}")


def test_criterion_6_two_routes(report, run19):
    pk = run19.packet
    basis = pk.context["space"].basis
    orun = oms.oms_route(basis, pk, n=3, seed=0)
    sym = pk.context["symbol"]
    ref = oms.normalized_measure(run19.measure, pow(mc.d0_value(sym), -1, 19**run19.measure.M))
    agree, digits = oms.agree_within_ledger(ref, orun.measure)
    ok = agree and digits >= CROSS_ROUTE_MIN_DIGITS
    assert report(6, ok, f"level-3 unit discs agree={agree} modulo 19^{digits}")


@pytest.mark.slow
def test_criterion_7_property_suites(report):
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-m", "property", "-q", "-p", "no:cacheprovider", str(ROOT / "tests")],
        cwd=ROOT,
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and elapsed < PROPERTY_SECONDS
    assert report(7, ok, f"{tail} ({elapsed:.1f}s, limit {PROPERTY_SECONDS}s)")


@pytest.mark.slow
def test_criterion_8_rank_guard(report):
    result = CliRunner().invoke(cli.main, ["mu", "--p", "547", "--k", "486"])
    recs = [json.loads(x) for x in result.stdout.splitlines() if x.strip()]
    ok = result.exit_code == 0 and len(recs) == 1 and recs[0].get("error") == "RankNotOne"
    rank = recs[0].get("rank") if recs else None
    assert report(8, ok, f"exit={result.exit_code}, error={recs[0].get('error') if recs else None}, residual rank={rank}")
