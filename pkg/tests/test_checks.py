import pytest

from ppgen.checks import (
    dr_robustness_check,
    lemma2_check,
    oracle_agreement_check,
    orthonormality_check,
    prop1_check,
    run_checks,
    theorem_structural_check,
)
from ppgen.regression import legendre_eval


def test_orthonormality_passes():
    assert orthonormality_check().passed


def test_orthonormality_detects_unnormalized_basis():
    def unnormalized(x, degree):
        feats = legendre_eval(x, degree)
        return feats * 1.1  # deliberately broken scaling

    assert not orthonormality_check(basis=unnormalized).passed


def test_prop1_reduced_scale():
    assert prop1_check(seed=3, n_replications=3_000).passed


def test_theorem_check_reduced_scale():
    res = theorem_structural_check("om", seed=9, n_refits=80, n0=4_000, n_os=2_000)
    assert res.passed, res.detail


def test_theorem_check_rejects_unknown_estimator():
    with pytest.raises(ValueError):
        theorem_structural_check("ipw")


def test_lemma2_reduced_scale():
    res = lemma2_check(seed=5, n_worlds=12, n_os=4_000, n_features=150)
    assert res.passed, res.detail


def test_dr_robustness_reduced_scale():
    res = dr_robustness_check(seed=5, n1=2_000, n0=6_000, n_replications=10)
    assert res.passed, res.detail


def test_oracle_agreement_reduced_scale():
    res = oracle_agreement_check(seed=5, n_draws=100_000)
    assert res.passed, res.detail


def test_run_checks_filter_and_unknown():
    results = run_checks(["orthonormality"], seed=1)
    assert [r.name for r in results] == ["orthonormality"]
    with pytest.raises(ValueError):
        run_checks(["no-such-check"])


def test_check_result_line_format():
    res = orthonormality_check()
    assert res.line().startswith("PASS  orthonormality:")
