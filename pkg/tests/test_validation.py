"""Audit machinery tests, including the planted-violation catalogue."""

import json

import numpy as np
import pytest

from torusfield import kernels as K
from torusfield import validation as V
from torusfield.geometry import Invariants3, random_sites

from conftest import make_expansion, make_matern_spectral, rand_correlation
from planted import IndefiniteConstantKernel, bad_matern_spectral, negated_pd_gamma


def test_audit_report_consistency():
    rep = V.AuditReport(min_eig_ratio=-1e-9, n_trials=3, worst_trial_seed=0, tolerance=1e-8)
    assert rep.passed
    rep = V.AuditReport(min_eig_ratio=-1e-7, n_trials=3, worst_trial_seed=0, tolerance=1e-8)
    assert not rep.passed
    parsed = json.loads(rep.to_json())
    assert parsed["passed"] is False
    assert parsed["min_eig_ratio"] == -1e-7


def test_pd_audit_passes_valid_kernel():
    kernel = make_expansion(np.random.default_rng(0), 2, 2, 1, 2)
    rep = V.pd_audit(kernel, n_sites=20, n_trials=5, seed=3)
    assert rep.passed
    assert rep.n_trials == 5
    assert rep.violations == []


def test_pd_audit_detects_planted_indefinite():
    rep = V.pd_audit(IndefiniteConstantKernel(), n_sites=10, n_trials=3, seed=0)
    assert not rep.passed
    assert rep.min_eig_ratio < -0.5
    assert len(rep.violations) == 3


def test_pd_audit_single_site_is_origin_block():
    kernel = make_expansion(np.random.default_rng(1), 2, 1, 1, 2)
    rep = V.pd_audit(kernel, n_sites=1, n_trials=2, seed=0)
    assert rep.passed


def test_pd_audit_deterministic_and_thread_safe():
    kernel = make_expansion(np.random.default_rng(2), 2, 2, 2, 2)
    rep1 = V.pd_audit(kernel, n_sites=12, n_trials=6, seed=9)
    rep2 = V.pd_audit(kernel, n_sites=12, n_trials=6, seed=9)
    rep4 = V.pd_audit(kernel, n_sites=12, n_trials=6, seed=9, workers=4)
    assert rep1.to_dict() == rep2.to_dict() == rep4.to_dict()


def test_pd_audit_pass_fail_invariant_under_variance_scaling():
    rng = np.random.default_rng(3)
    scaling = K.VarianceScaling(np.array([2.0, 3.0]))
    good = make_expansion(rng, 2, 1, 1, 2)
    assert V.pd_audit(K.apply_variance(good, scaling), 12, 3, seed=1).passed
    bad = K.apply_variance(IndefiniteConstantKernel(), scaling)
    assert not V.pd_audit(bad, 12, 3, seed=1).passed


def test_gram_matrix_symmetric_blocks():
    kernel = make_expansion(np.random.default_rng(4), 3, 2, 1, 2)
    sites = random_sites(0, 7, 2, 1, 2)
    gram = V.gram_matrix(kernel, sites)
    assert gram.shape == (21, 21)
    assert np.array_equal(gram, gram.T)


# ---------------------------------------------------------------------------
# Conditional definiteness
# ---------------------------------------------------------------------------


def test_cnd_audit_constant_matrix_passes_both_orientations():
    gamma = lambda r, h: 0.7 * np.ones((2, 2))
    for orientation in ("gamma_cnd", "gamma_cpd"):
        rep = V.cnd_audit(gamma, 10, 3, seed=0, orientation=orientation)
        assert rep.passed, orientation


def test_cnd_audit_builtin_family_is_cnd():
    gamma = K.CrossVariogramSpec(
        v=np.array([0.3, 0.2]),
        beta=rand_correlation(np.random.default_rng(5), 2),
        a=1.0,
        b=0.5,
        kappa=1.0,
    )
    rep = V.cnd_audit(gamma, 12, 4, seed=2, orientation="gamma_cnd")
    assert rep.passed


def test_cnd_audit_flags_negated_pd_kernel():
    rep = V.cnd_audit(negated_pd_gamma, 12, 4, seed=2, orientation="gamma_cpd")
    assert not rep.passed


def test_cnd_audit_cpd_follows_from_pd():
    # A genuinely positive definite matrix function is conditionally positive
    # definite on contrasts, so the gamma_cpd orientation must pass.
    beta = rand_correlation(np.random.default_rng(6), 2)
    gamma = lambda r, h: beta * np.exp(-h) * np.exp(-0.5 * (1 - r))
    rep = V.cnd_audit(gamma, 12, 4, seed=3, orientation="gamma_cpd")
    assert rep.passed


def test_cnd_matrix_ratio():
    # alpha_ij = a_i + a_j vanishes on contrasts; identity does not.
    a = np.array([0.4, 1.1, 0.7])
    assert V.cnd_matrix_ratio(a[:, None] + a[None, :]) <= 1e-12
    assert V.cnd_matrix_ratio(np.eye(3)) > 0.1


def test_cnd_audit_rejects_unknown_orientation():
    with pytest.raises(ValueError):
        V.cnd_audit(negated_pd_gamma, 5, 2, seed=0, orientation="sideways")


# ---------------------------------------------------------------------------
# The torus-varying Matern condition
# ---------------------------------------------------------------------------


def test_matern_condition_identity_beta_passes():
    kernel = K.MaternSpectralKernel(
        1, 1, 2,
        K.VarianceScaling(np.ones(2)),
        1.0,
        np.eye(2),
        [K.AffineSmoothness(0.5, 0.3), K.ConstantSmoothness(2.0)],
    )
    rep = V.matern_condition_audit(kernel)
    assert rep.passed


def test_matern_condition_matches_2x2_closed_form():
    nu1, nu2, b12 = 0.5, 2.5, 0.9
    kernel = K.MaternSpectralKernel(
        1, 1, 2,
        K.VarianceScaling(np.ones(2)),
        1.0,
        np.array([[1.0, b12], [b12, 1.0]]),
        [K.ConstantSmoothness(nu1), K.ConstantSmoothness(nu2)],
    )
    a_grid = 0.05 * np.arange(1, 21)
    rep = V.matern_condition_audit(kernel, a_grid=a_grid)
    worst = np.inf
    nu12 = 0.5 * (nu1 + nu2)
    for a in a_grid:
        m11, m22, m12 = a**nu1, a**nu2, b12 * a**nu12
        mean, delta = 0.5 * (m11 + m22), np.hypot(0.5 * (m11 - m22), m12)
        lo, hi = mean - delta, mean + delta
        worst = min(worst, lo / max(abs(lo), abs(hi)))
    assert rep.min_eig_ratio == pytest.approx(worst, abs=1e-12)
    assert rep.passed


def test_matern_condition_detects_bad_colocation():
    rep = V.matern_condition_audit(bad_matern_spectral(1.01))
    assert not rep.passed
    assert rep.violations


def test_matern_spectral_constructor_runs_the_audit():
    with pytest.raises(ValueError, match="positive definiteness"):
        K.MaternSpectralKernel(
            1, 1, 2,
            K.VarianceScaling(np.ones(2)),
            1.0,
            np.array([[1.0, 1.01], [1.01, 1.0]]),
            [K.ConstantSmoothness(0.5), K.ConstantSmoothness(1.5)],
        )
