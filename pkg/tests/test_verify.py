import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from toruslyap.systems import get_catalog
from toruslyap.verify import (
    FAILED,
    HOLDS,
    HYPOTHESIS_FAILED,
    VIOLATED,
    WITHIN,
    Claim,
    Row,
    RunParams,
    VerificationReport,
    check_sigma_bounds,
    check_subexponential,
    check_entropy_equality,
    check_uniform_bound,
    check_metric_bound,
    exit_code,
    run_checks,
    sig12,
)

LOG_PHI2 = math.log((3 + math.sqrt(5)) / 2)
FAST = RunParams(steps=20_000, sup_ensemble=256, samples=2000, metric_samples=8, ensemble=4)


def test_sig12():
    assert sig12(1 / 3) == 0.333333333333
    assert sig12(float("inf")) is None
    assert sig12(None) is None


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 1))
def test_row_slack_and_verdict_rule(re, bound, se):
    row = Row(1, re, bound, se, "x")
    assert row.slack == sig12(row.bound - row.re_lambda)
    assert row.tolerance == sig12(3 * row.stderr + 1e-3)
    if row.slack < -row.tolerance:
        assert row.verdict == VIOLATED
    elif row.slack < 0:
        assert row.verdict == WITHIN
    else:
        assert row.verdict == HOLDS


def test_two_sided_rows():
    assert Row(1, 1.0, 1.0, 0.0, "x", two_sided=True).verdict == HOLDS
    assert Row(1, 1.0, 1.0005, 0.0, "x", two_sided=True).verdict == WITHIN
    assert Row(1, 1.0, 1.1, 0.0, "x", two_sided=True).verdict == VIOLATED
    assert Row(1, None, 1.0, 0.0, "x").verdict == FAILED


def test_claim_verdict_is_worst_row():
    c = Claim("c", rows=[Row(1, 0.0, 1.0, 0.0, "x"), Row(1, 1.0, 0.9995, 0.0, "x")])
    assert c.verdict == WITHIN
    c.rows.append(Row(1, 2.0, 0.0, 0.0, "x"))
    assert c.verdict == VIOLATED
    assert Claim("h", hypothesis_ok=False).verdict == HYPOTHESIS_FAILED


def _report(*verdicts):
    rep = VerificationReport("s", {}, RunParams())
    rep.claims.append(Claim("c", rows=[Row(1, 0.0, 0.0, 0.0, "x", verdict=v) for v in verdicts]))
    return rep


def test_exit_codes():
    assert exit_code([_report(HOLDS, WITHIN)]) == 0
    assert exit_code([_report(HOLDS, VIOLATED, HYPOTHESIS_FAILED)]) == 2
    assert exit_code([_report(HYPOTHESIS_FAILED)]) == 3
    assert exit_code([_report(FAILED, HYPOTHESIS_FAILED)]) == 4


def _assert_self_consistent(rep):
    for _, row in rep.rows():
        if row.slack is not None:
            assert row.slack == sig12(row.bound - row.re_lambda)
            if row.verdict == VIOLATED:
                assert row.slack < -row.tolerance


def test_uniform_bound_cat():
    rep = check_uniform_bound(get_catalog("cat"), FAST)
    claim = rep.claim("uniform_bound")
    assert claim.verdict == HOLDS
    top = [r for r in claim.rows if r.k == 1 and r.re_lambda > 0][0]
    assert abs(top.re_lambda - LOG_PHI2) <= 1e-9
    assert abs(top.slack) <= 1e-3
    _assert_self_consistent(rep)


@pytest.mark.parametrize("name,verdict", [("shear", HOLDS), ("identity", HOLDS), ("cat", HYPOTHESIS_FAILED)])
def test_subexponential(name, verdict):
    claim = check_subexponential(get_catalog(name), FAST).claim("subexponential")
    assert claim.verdict == verdict
    if verdict == HYPOTHESIS_FAILED:
        assert claim.rows == []


def test_sigma_bounds():
    rep = check_sigma_bounds(get_catalog("cat"), FAST)
    assert rep.claim("sigma_bound").verdict == HOLDS
    c = rep.claim("exponent_signs")
    assert c.verdict == HOLDS and {r.kind for r in c.rows} == {"positive-exponent", "negative-exponent"}
    rep = check_sigma_bounds(get_catalog("shear"), FAST)
    assert rep.claim("exponent_signs").rows == []
    assert rep.claim("sigma_bound").verdict == HOLDS


def test_metric_bound_cat_slack_is_epsilon():
    rep = check_metric_bound(get_catalog("cat"), 0.1, (), FAST)
    tb = rep.claim("metric_bound")
    top = [r for r in tb.rows if r.k == 1 and r.re_lambda > 0][0]
    assert abs(top.slack - 0.1) <= 1e-6
    for name in ("metric_bound", "sigma_metric_bound", "volume_growth_bound"):
        assert rep.claim(name).verdict in (HOLDS, WITHIN)
    assert "p=0.5" in tb.hypothesis and "p=1" in tb.hypothesis
    _assert_self_consistent(rep)


def test_metric_bound_identity():
    rep = check_metric_bound(get_catalog("identity"), 0.3, (2.0,), FAST)
    for _, r in rep.rows():
        assert r.verdict == HOLDS
    assert "p=2" in rep.claim("metric_bound").hypothesis
    with pytest.raises(ValueError):
        check_metric_bound(get_catalog("identity"), -1.0, (), FAST)


def test_entropy_equality():
    assert check_entropy_equality(get_catalog("cat"), FAST).claim("entropy_equality").verdict == HOLDS
    assert check_entropy_equality(get_catalog("identity"), FAST).claim("entropy_equality").verdict == HOLDS
    shear = check_entropy_equality(get_catalog("shear"), FAST).claim("entropy_equality")
    # finite-n polynomial growth puts the entropy estimate above Sigma = 0
    assert shear.verdict == HYPOTHESIS_FAILED
    assert shear.hypothesis == {"linear_part_ergodic": False}


def test_run_checks_selectors():
    sys = get_catalog("cat")
    names = lambda w: [c.name for c in run_checks(sys, w, FAST).claims]
    assert names("a") == ["uniform_bound"]
    assert names("acor") == ["subexponential"]
    assert names("bc") == ["sigma_bound", "exponent_signs"]
    assert names("b") == ["metric_bound", "sigma_metric_bound", "volume_growth_bound"]
    assert names("d") == ["sigma_metric_bound"]
    assert names("f") == ["entropy_equality"]
    with pytest.raises(ValueError):
        run_checks(sys, "z", FAST)


def test_report_json_and_csv():
    rep = run_checks(get_catalog("cat"), "a", FAST)
    data = json.loads(rep.to_json())
    assert list(data) == ["system", "claims", "diagnostics", "provenance"]
    assert data["provenance"]["seed"] == 0 and data["provenance"]["steps"] == FAST.steps
    assert data["system"]["spec"]["matrix"] == [[2, 1], [1, 1]]
    assert len(data["system"]["config_hash"]) == 16
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("system,claim,k,kind")
    assert len(lines) == 1 + len(rep.rows())


def test_reports_are_deterministic():
    sys = get_catalog("perturbed-cat-0.05")
    a = run_checks(sys, "all", FAST).to_json()
    b = run_checks(sys, "all", FAST).to_json()
    assert a == b
    c = run_checks(sys, "a", RunParams(**{**FAST.__dict__, "seed": 1})).to_json()
    assert c != run_checks(sys, "a", FAST).to_json()


def test_failures_become_failed_rows():
    # sup_ensemble of 0 is rejected by the estimator and reported, not raised
    rep = check_uniform_bound(get_catalog("cat"), RunParams(sup_ensemble=0, horizon=8))
    claim = rep.claim("uniform_bound")
    assert claim.verdict == FAILED
    assert "ValidationError" in claim.rows[0].note
    assert exit_code([rep]) == 4


def test_no_violations_across_catalog_and_random_systems():
    from toruslyap.systems import catalog_names, random_conservative_system

    rng = np.random.default_rng(2024)
    systems = [get_catalog(n) for n in catalog_names()] + [random_conservative_system(rng) for _ in range(20)]
    bad = []
    for sys in systems:
        rep = run_checks(sys, "all", FAST)
        _assert_self_consistent(rep)
        bad += [(sys.matrix, name, r.k) for name, r in rep.rows() if r.verdict == VIOLATED]
    assert bad == []
