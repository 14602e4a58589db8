import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eismu import iwasawa
from eismu.chars import character
from eismu.errors import DomainError
from eismu.msclassical import PadicLMeasure
from eismu.padic import gamma_log_index, teichmuller, vp_capped

P, N_LEVEL, M = 7, 3, 4
Q = P**M


def dirac(u, p=P, n=N_LEVEL, m=M):
    vals = np.zeros(p**n, dtype=np.int64)
    vals[u % p**n] = 1
    return PadicLMeasure(p, n, m, vals)


def series(coeffs, p=P, m=M, level=3):
    c = np.array(coeffs, dtype=np.int64) % p**m
    return iwasawa.BranchSeries(p, m, 0, c, level, np.full(len(c), m, dtype=np.int64))


def measures():
    units = [a for a in range(P**N_LEVEL) if a % P]
    return st.lists(st.integers(0, Q - 1), min_size=len(units), max_size=len(units)).map(_measure_from(units))


def _measure_from(units):
    def build(vals):
        v = np.zeros(P**N_LEVEL, dtype=np.int64)
        v[units] = vals
        return PadicLMeasure(P, N_LEVEL, M, v)

    return build


def test_branch_project_dirac_at_one():
    for a in range(P - 1):
        s = iwasawa.branch_project(dirac(1), a)
        assert s.coefficients.tolist() == [1] + [0] * (P ** (N_LEVEL - 1) - 1)


def test_branch_project_group_like():
    u = 1 + P
    assert gamma_log_index(u, N_LEVEL, P) == 1
    for a in range(P - 1):
        s = iwasawa.branch_project(dirac(u), a)
        w = pow(teichmuller(u % P, P, M).residue, a, Q)
        assert s.coefficients.tolist()[:3] == [w, w, 0]


def test_branch_project_zero_measure():
    zero = PadicLMeasure(P, N_LEVEL, M, np.zeros(P**N_LEVEL, dtype=np.int64))
    s = iwasawa.branch_project(zero, 2)
    assert not s.coefficients.any()
    rep = iwasawa.mu_lambda(s)
    assert (rep.mu, rep.certified) == (M, False)


def test_mu_lambda_examples():
    assert (iwasawa.mu_lambda(series([P, P])).mu, iwasawa.mu_lambda(series([P, P])).lambda_) == (1, 0)
    rep = iwasawa.mu_lambda(series([0, P, 1]))
    assert (rep.mu, rep.lambda_) == (0, 2)
    rep = iwasawa.mu_lambda(series([3]))
    assert (rep.mu, rep.lambda_) == (0, 0)


@given(measures(), measures(), st.integers(0, P - 2))
def test_branch_project_is_linear(m1, m2, a):
    s = PadicLMeasure(P, N_LEVEL, M, (m1.values + 3 * m2.values) % Q)
    lhs = iwasawa.branch_project(s, a).coefficients
    rhs = (iwasawa.branch_project(m1, a).coefficients + 3 * iwasawa.branch_project(m2, a).coefficients) % Q
    assert np.array_equal(lhs, rhs)


@given(measures())
def test_branches_at_zero_recover_the_measure(m):
    # branch 0 at T = 0 is the total; character orthogonality recovers each residue class mod p
    assert iwasawa.branch_project(m, 0).at_zero() == m.total()
    at0 = [iwasawa.branch_project(m, a).at_zero() for a in range(P - 1)]
    for b in range(1, P):
        w_inv = pow(teichmuller(b, P, M).residue, -1, Q)
        lhs = sum(pow(w_inv, a, Q) * at0[a] for a in range(P - 1)) % Q
        cls = sum(m.value(u) for u in m.units() if u % P == b)
        assert lhs == (P - 1) * cls % Q


@given(st.lists(st.integers(0, Q - 1), min_size=9, max_size=9), st.lists(st.integers(0, Q - 1), min_size=3, max_size=9))
def test_mu_lambda_invariant_under_units(coeffs, unit):
    s = series(coeffs)
    if unit[0] % P == 0:
        unit[0] += 1
    base = iwasawa.mu_lambda(s)
    if base.reason.startswith("series is zero"):
        return
    scaled = iwasawa.mu_lambda(iwasawa.unit_multiple(s, unit))
    assert (scaled.mu, scaled.lambda_) == (base.mu, base.lambda_)


def test_unit_multiple_needs_unit():
    with pytest.raises(DomainError):
        iwasawa.unit_multiple(series([1, 2]), [P, 1])


def test_certify_rules():
    s = series([P, 2 * P] + [0] * 7)
    assert iwasawa.certify(s, lower=1).certified
    # a measured mu below a proven lower bound is never certified
    assert not iwasawa.certify(s, lower=2).certified
    # mu above the lower bound needs another certificate
    assert not iwasawa.certify(s, lower=0).certified
    # no lower bound: stability between levels decides
    coarse = series([P, 1, 0], level=2)
    fine = series([P, 1] + [0] * 7)
    assert iwasawa.certify(fine, None, coarse).reason.startswith("heuristic")
    assert not iwasawa.certify(fine, None, series([1, 0, 0], level=2)).certified


def test_lower_bounds():
    assert iwasawa.lower_bound(19, 8, character(5, "quad")) == 2
    assert iwasawa.lower_bound(37, 32, character(1, "triv")) == 1
    with pytest.raises(DomainError):
        iwasawa.lower_bound(37, 36, character(1, "triv"))


def test_report_json_schema():
    rep = iwasawa.BoundsReport(37, 1, "triv", 32, 0, 1, 1, 0, 1, 1, True, "holds", None)
    assert list(rep.as_json()) == [
        "p", "N", "psi", "k", "branch", "lower", "mu", "lambda", "upper", "eis_depth", "certified", "verdict", "seed",
    ]


def test_bounds_meet_consequence_synthetic():
    good = iwasawa.BoundsReport(37, 1, "triv", 32, 0, 1, 1, 0, 1, 1, True, "holds")
    assert iwasawa.bounds_meet_consequence(good)["status"] == "consistent"
    bad = iwasawa.BoundsReport(37, 1, "triv", 32, 0, 1, 1, 2, 1, 1, True, "holds")
    assert iwasawa.bounds_meet_consequence(bad)["status"] == "counterexample"
    apart = iwasawa.BoundsReport(19, 5, "quad", 8, 0, 2, 2, 1, 3, 2, True, "holds")
    with pytest.raises(DomainError):
        iwasawa.bounds_meet_consequence(apart)


def test_case19_report(run19):
    rep = iwasawa.report_for_branch(run19, 0)
    assert (rep.lower, rep.mu, rep.lambda_, rep.upper, rep.eis_depth) == (2, 2, 1, 3, 2)
    assert rep.certified and rep.verdict == "holds"
    with pytest.raises(DomainError):
        iwasawa.bounds_meet_consequence(rep)


def test_case37_reports(run37):
    rep = iwasawa.report_for_branch(run37, 0)
    assert (rep.lower, rep.mu, rep.lambda_, rep.upper) == (1, 1, 0, 1)
    assert iwasawa.bounds_meet_consequence(rep)["status"] == "consistent"
    for a in range(2, 36, 2):
        r = iwasawa.report_for_branch(run37, a)
        assert r.mu >= r.lower
        assert r.upper is None


def test_odd_branch_has_no_verdict(run37):
    assert iwasawa.report_for_branch(run37, 1).verdict == "not applicable"


@pytest.mark.parametrize("name", ["run19", "run37"])
def test_branch_zero_at_t0_is_upper_bound(name, request):
    run = request.getfixturevalue(name)
    s, _ = run.series(0)
    assert iwasawa.series_valuation_at_zero(s) == run.upper
