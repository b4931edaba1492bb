"""Kernel catalogue tests: closed-form values, series oracles, audits."""

import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from torusfield import kernels as K
from torusfield import validation as V
from torusfield.geometry import Invariants3, random_sites
from torusfield.specfun import beta_fn, matern
from torusfield.strictjson import ConfigError

from conftest import (
    FAMILY_FACTORIES,
    make_expansion,
    make_fclass,
    make_sinh,
    rand_correlation,
    rand_psd,
)


def inv(s, r, h):
    return Invariants3(s, r, h)


# ---------------------------------------------------------------------------
# ExpansionKernel
# ---------------------------------------------------------------------------


def test_expansion_single_constant_term_is_radial():
    term = K.ExpansionTerm(0, 0, np.eye(2), K.MaternProfile(1.0, 0.5))
    kernel = K.ExpansionKernel(2, 2, 1, 3, [term])
    got = kernel.eval(inv(-0.7, 0.2, 2.0))
    np.testing.assert_allclose(got, math.exp(-2.0) * np.eye(2), rtol=1e-12)


def test_expansion_origin_equals_coefficient_sum():
    kernel = make_expansion(np.random.default_rng(0), 3, 2, 3, 2)
    np.testing.assert_allclose(
        kernel.origin_value(), kernel.coefficient_sum_at_zero(), atol=1e-12
    )


def test_expansion_degree_one_parity():
    rng = np.random.default_rng(1)
    a0, a1 = rand_psd(rng, 2), rand_psd(rng, 2)
    kernel = K.ExpansionKernel(
        2, 2, 1, 2,
        [
            K.ExpansionTerm(0, 0, a0, K.GaussianProfile(1.0)),
            K.ExpansionTerm(1, 0, a1, K.GaussianProfile(1.0)),
        ],
    )
    s, r, h = 0.37, -0.6, 1.2
    plus = kernel.eval(inv(s, r, h))
    minus = kernel.eval(inv(-s, r, h))
    even = K.ExpansionKernel(2, 2, 1, 2, [K.ExpansionTerm(0, 0, a0, K.GaussianProfile(1.0))])
    np.testing.assert_allclose(plus + minus, 2 * even.eval(inv(s, r, h)), atol=1e-12)


def test_expansion_rejects_duplicates_and_requires_psd():
    term = K.ExpansionTerm(0, 0, np.eye(2), K.GaussianProfile(1.0))
    with pytest.raises(ValueError, match="duplicate"):
        K.ExpansionKernel(2, 1, 1, 1, [term, term])
    with pytest.raises(ValueError, match="positive semidefinite"):
        K.ExpansionTerm(0, 0, np.array([[1.0, 2.0], [2.0, 1.0]]), K.GaussianProfile(1.0))


def test_expansion_normalized_flag():
    good = K.ExpansionTerm(0, 0, np.eye(2), K.MaternProfile(1.0, 1.0))
    K.ExpansionKernel(2, 1, 1, 1, [good], normalized=True)
    bad = K.ExpansionTerm(0, 0, 0.5 * np.eye(2), K.MaternProfile(1.0, 1.0))
    with pytest.raises(ValueError, match="unit diagonal"):
        K.ExpansionKernel(2, 1, 1, 1, [bad], normalized=True)


def test_kernel_eval_is_exactly_symmetric_and_cauchy_schwarz():
    rng = np.random.default_rng(2)
    for name, factory in FAMILY_FACTORIES.items():
        kernel = factory(rng, 2, 1, 2, 2)
        origin = np.diag(kernel.origin_value())
        bound = np.sqrt(np.outer(origin, origin))
        for _ in range(25):
            point = inv(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 4))
            block = kernel.eval(point)
            assert np.array_equal(block, block.T), name
            assert np.all(np.abs(block) <= bound * (1 + 1e-9)), name


# ---------------------------------------------------------------------------
# SinhSeriesKernel
# ---------------------------------------------------------------------------


def scalar_sinh_kernel(gamma_value=1.0, k_max=2000):
    gamma = lambda r, h: np.array([[gamma_value]])
    return K.SinhSeriesKernel(1, 1, 1, gamma, k_max=k_max)


def test_sinh_series_classical_identity_at_s1():
    kernel = scalar_sinh_kernel(1.0, k_max=2000)
    exact = 1.0 + (math.pi / math.tanh(math.pi) - 1.0) / 2.0
    got = kernel.eval(inv(1.0, 0.0, 0.0))[0, 0]
    assert abs(got - exact) < 5e-4
    assert kernel.series_tail_bound() == pytest.approx(1 / 2000)


def test_sinh_series_partial_sum_oracle_at_s0():
    kernel = scalar_sinh_kernel(0.7, k_max=5000)
    got = kernel.eval(inv(0.0, 0.3, 1.0))[0, 0]
    k = np.arange(0, 5001)
    oracle = np.sum(np.cos(k * (math.pi / 2)) / (k**2 + 0.7))
    assert got == pytest.approx(float(oracle), abs=1e-12)


def test_sinh_series_decreasing_in_gamma():
    values = []
    for g in (0.5, 1.0, 5.0, 50.0, 500.0):
        kernel = scalar_sinh_kernel(g, k_max=3000)
        values.append(kernel.eval(inv(0.6, 0.0, 0.0))[0, 0])
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 0.01


def test_sinh_series_rejects_nonpositive_gamma():
    gamma = lambda r, h: np.array([[1.0 - 2.0 * math.exp(-h)]])
    with pytest.raises(ValueError, match=r"gamma_00"):
        K.SinhSeriesKernel(1, 1, 1, gamma, k_max=100)


def test_sinh_closed_form_printed_expression():
    kernel = scalar_sinh_kernel(1.0)
    got = kernel.eval_closed_form(inv(1.0, 0.0, 0.0))[0, 0]
    expected = 1.0 + (math.pi / 2.0) * math.sinh(math.sqrt(math.pi)) / math.sinh(1.0)
    assert got == pytest.approx(expected, rel=1e-12)
    finite = kernel.eval_closed_form(inv(-0.4, 0.7, 2.0))
    assert np.all(np.isfinite(finite))


def test_sinh_discrepancy_report_is_nonempty():
    kernel = make_sinh(np.random.default_rng(3), 2, 1, 2, k_max=500)
    report = K.sinh_discrepancy_report(
        kernel, s_grid=np.linspace(-1, 1, 4), r_grid=np.linspace(-1, 1, 3), h_grid=[0.0, 1.0]
    )
    assert len(report["rows"]) == 4 * 3 * 2 * 3
    assert report["max_abs_diff"] > 0.1
    assert np.isfinite(report["mean_abs_diff"])


def test_cross_variogram_spec_validation():
    beta = rand_correlation(np.random.default_rng(4), 2)
    with pytest.raises(ValueError, match="kappa"):
        K.CrossVariogramSpec(np.array([0.1, 0.1]), beta, a=1.0, b=0.1, kappa=2.5)
    with pytest.raises(ValueError, match="positive entries"):
        K.CrossVariogramSpec(np.array([0.1, 0.1]), np.eye(2) - 0.0, a=1.0, b=0.1, kappa=1.0)
    spec = K.CrossVariogramSpec(np.array([0.2, 0.3]), beta, a=1.2, b=0.4, kappa=1.5)
    val = spec.evaluate(0.5, 1.0)
    expected = (
        np.array([[0.4, 0.5], [0.5, 0.6]])
        + beta.max()
        - beta * math.exp(-1.2 * 0.5 - 0.4 * 1.0**1.5)
    )
    np.testing.assert_allclose(val, expected, atol=1e-14)


# ---------------------------------------------------------------------------
# FClassKernel
# ---------------------------------------------------------------------------


def mixture_oracle(t, alpha, tau, nu, n_quad=256):
    """Beta(alpha, nu) mixture of ((1-d)/(1-d t))^tau via Gauss-Legendre."""
    x, w = leggauss(n_quad)
    delta = 0.5 * (x + 1.0)
    weights = 0.5 * w
    dens = delta ** (alpha - 1) * (1 - delta) ** (nu - 1) / beta_fn(alpha, nu)
    return float(np.sum(weights * dens * ((1 - delta) / (1 - delta * t)) ** tau))


def test_fclass_function_matches_mixture():
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = rng.uniform(-0.95, 0.95)
        alpha = rng.uniform(1.0, 3.0)
        tau = rng.uniform(0.5, 2.5)
        nu = rng.uniform(1.0, 3.0)
        assert K.fclass_function(t, alpha, tau, nu) == pytest.approx(
            mixture_oracle(t, alpha, tau, nu), abs=1e-6
        )


def test_fclass_value_at_s0():
    kernel = make_fclass(np.random.default_rng(6), 2, 1, 1, 2)
    got = kernel.eval(inv(0.0, 0.4, 1.0))
    expected = np.exp(
        gammaln(kernel.alpha) + gammaln(kernel.nu) - gammaln(kernel.alpha + kernel.nu)
    ) * np.exp(
        gammaln(kernel.nu + kernel.tau)
        + gammaln(kernel.alpha + kernel.nu)
        - gammaln(kernel.nu)
        - gammaln(kernel.alpha + kernel.nu + kernel.tau)
    )
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_fclass_monotone_in_s_where_inner_positive():
    rng = np.random.default_rng(7)
    # Positive-entry inner correlation so the monotonicity direction is fixed.
    inner = K.normalize(
        K.ExpansionKernel(
            2, 1, 1, 2,
            [K.ExpansionTerm(0, 0, rand_correlation(rng, 2), K.MaternProfile(1.0, 0.8))],
        )
    )
    a = rng.uniform(0.4, 1.2, 2)
    n = rng.uniform(0.5, 1.2, 2)
    kernel = K.FClassKernel(1, a[:, None] + a[None, :], n[:, None] + n[None, :], 1.1, inner)
    r, h = 0.9, 0.2
    c = kernel.inner.eval(inv(1.0, r, h))
    assert np.all(c > 0)
    top = kernel.eval(inv(1.0, r, h))
    for s in (-1.0, -0.3, 0.2, 0.8):
        assert np.all(kernel.eval(inv(s, r, h)) <= top + 1e-12)


def test_fclass_rejects_non_cnd_parameters():
    inner = K.normalize(
        K.ExpansionKernel(2, 1, 1, 1, [K.ExpansionTerm(0, 0, np.eye(2), K.GaussianProfile(1.0))])
    )
    with pytest.raises(ValueError, match="conditionally negative"):
        K.FClassKernel(1, np.eye(2) + 1.0, np.ones((2, 2)), 1.0, inner)


def test_fclass_rejects_oversized_inner():
    big = K.ExpansionKernel(
        2, 1, 1, 1, [K.ExpansionTerm(0, 0, 2.0 * np.eye(2), K.GaussianProfile(1.0))]
    )
    a = np.array([0.5, 0.7])
    alpha = a[:, None] + a[None, :]
    with pytest.raises(ValueError, match="C_ij"):
        K.FClassKernel(1, alpha, alpha, 1.0, big)


# ---------------------------------------------------------------------------
# MaternSpectralKernel
# ---------------------------------------------------------------------------


def test_matern_spectral_diagonal_value():
    rng = np.random.default_rng(8)
    sigma = K.VarianceScaling(np.array([1.3, 0.8]))
    nus = [0.7, 1.9]
    kernel = K.MaternSpectralKernel(
        1, 1, 3, sigma, 1.0, rand_correlation(rng, 2),
        [K.ConstantSmoothness(v) for v in nus],
    )
    got = kernel.eval(inv(0.3, -0.2, 0.0))
    for i, nu in enumerate(nus):
        expected = sigma.sigma[i] ** 2 * math.exp(gammaln(nu) - gammaln(nu + 1.5))
        assert got[i, i] == pytest.approx(expected, rel=1e-12)


def test_matern_spectral_half_integer_closed_form():
    sigma = K.VarianceScaling(np.array([1.0, 2.0]))
    beta = np.array([[1.0, 0.6], [0.6, 1.0]])
    kernel = K.MaternSpectralKernel(
        1, 1, 1, sigma, 1.0, beta,
        [K.ConstantSmoothness(0.5), K.ConstantSmoothness(0.5)],
    )
    h = 1.7
    got = kernel.eval(inv(0.1, 0.9, h))
    expected = (
        np.outer([1.0, 2.0], [1.0, 2.0])
        * beta
        * math.exp(gammaln(0.5) - gammaln(1.0))
        * math.exp(-h)
    )
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_matern_spectral_identity_beta_reduces_to_scalar_matern():
    nus = [0.6, 2.1]
    kernel = K.MaternSpectralKernel(
        2, 1, 2, K.VarianceScaling(np.array([1.1, 0.7])), 1.4, np.eye(2),
        [K.ConstantSmoothness(v) for v in nus],
    )
    h = 0.9
    got = kernel.eval(inv(0.2, 0.5, h))
    assert got[0, 1] == 0.0
    for i, nu in enumerate(nus):
        expected = (
            kernel.sigma.sigma[i] ** 2
            * math.exp(gammaln(nu) - gammaln(nu + 1.0))
            * matern(h, 1.4, nu)
        )
        assert got[i, i] == pytest.approx(expected, rel=1e-12)


def test_matern_spectral_fourier_oracle_d1():
    """Numerical Fourier transform of the spectral slice matches the kernel.

    The transform of sigma_i sigma_j beta_ij alpha^(2 nu) (alpha^2 + w^2)^(-nu - 1/2)
    carries an extra global factor pi^(d/2) relative to the Gamma-ratio
    normalization used by eval; the comparison divides it out.
    """
    rng = np.random.default_rng(9)
    sigma = K.VarianceScaling(np.array([1.0, 1.5]))
    beta = rand_correlation(rng, 2)
    alpha = 1.2
    kernel = K.MaternSpectralKernel(
        1, 1, 1, sigma, alpha, beta,
        [K.AffineSmoothness(0.6, 0.2), K.ConstantSmoothness(1.8)],
    )
    omega = np.linspace(0.0, 200.0, 80_001)
    for _ in range(4):
        s, r = rng.uniform(-1, 1, 2)
        h = rng.uniform(0.3, 2.5)
        nu = kernel.nu_matrix(s, r)
        spectral = (
            (sigma.outer() * beta)[..., None]
            * alpha ** (2 * nu[..., None])
            * (alpha**2 + omega**2) ** (-nu[..., None] - 0.5)
        )
        transform = 2.0 * np.trapezoid(np.cos(omega * h) * spectral, omega, axis=-1)
        got = kernel.eval(inv(s, r, h))
        np.testing.assert_allclose(transform / math.sqrt(math.pi), got, atol=1e-4)


def test_equal_slope_affine_is_pd_but_mixed_slopes_need_gram_audit():
    sigma = K.VarianceScaling(np.ones(2))
    beta = np.array([[1.0, 0.6], [0.6, 1.0]])
    equal = K.MaternSpectralKernel(
        1, 2, 2, sigma, 1.0, beta,
        [K.AffineSmoothness(0.8, 0.1), K.AffineSmoothness(0.6, 0.1)],
    )
    assert V.pd_audit(equal, 25, 8, seed=2).passed
    # Unequal slopes satisfy the pointwise colocation check (a congruence of
    # beta) but the assembled kernel is genuinely not positive definite; the
    # Gram audit is the guard that catches it.
    mixed = K.MaternSpectralKernel(
        1, 2, 2, sigma, 1.0, beta,
        [K.ConstantSmoothness(0.8), K.AffineSmoothness(0.6, 0.1)],
    )
    assert V.matern_condition_audit(mixed).passed
    assert not V.pd_audit(mixed, 40, 10, seed=2).passed


def test_affine_smoothness_orientation():
    fn = K.AffineSmoothness(0.5, 0.25)
    assert fn(1.0, 1.0) == pytest.approx(0.5)
    assert fn(-1.0, -1.0) == pytest.approx(1.5)
    kernel = K.MaternSpectralKernel(
        1, 1, 2, K.VarianceScaling(np.ones(1)), 1.0, np.eye(1), [fn]
    )
    # Covariance must be maximal at coincident points.
    top = kernel.eval(inv(1.0, 1.0, 0.0))[0, 0]
    assert kernel.eval(inv(-1.0, -1.0, 0.0))[0, 0] < top
    assert V.pd_audit(kernel, 15, 5, seed=1).passed


# ---------------------------------------------------------------------------
# normalize / apply_variance
# ---------------------------------------------------------------------------


def test_normalize_unit_diagonal_and_idempotent():
    kernel = make_expansion(np.random.default_rng(10), 3, 2, 1, 2)
    normed = K.normalize(kernel)
    np.testing.assert_allclose(np.diag(normed.origin_value()), 1.0, atol=1e-12)
    twice = K.normalize(normed)
    point = inv(0.3, -0.5, 1.1)
    np.testing.assert_allclose(twice.eval(point), normed.eval(point), atol=1e-12)
    diag = np.diag(kernel.origin_value())
    expected = kernel.eval(point) / np.sqrt(np.outer(diag, diag))
    np.testing.assert_allclose(normed.eval(point), expected, atol=1e-12)


def test_apply_variance_scales_entries():
    kernel = make_expansion(np.random.default_rng(11), 2, 1, 1, 2)
    ones = K.apply_variance(kernel, K.VarianceScaling(np.ones(2)))
    point = inv(-0.2, 0.8, 0.4)
    np.testing.assert_allclose(ones.eval(point), kernel.eval(point), atol=0)
    scaled = K.apply_variance(kernel, K.VarianceScaling(np.array([2.0, 3.0])))
    assert scaled.eval(point)[0, 1] == pytest.approx(6.0 * kernel.eval(point)[0, 1], rel=1e-14)


def test_every_family_gram_is_psd():
    rng = np.random.default_rng(12)
    for name, factory in FAMILY_FACTORIES.items():
        kernel = factory(rng, 2, 1, 2, 2)
        sites = random_sites(17, 40, kernel.d1, kernel.d2, kernel.d)
        gram = V.gram_matrix(kernel, sites)
        eigs = np.linalg.eigvalsh(gram)
        assert eigs[0] >= -1e-8 * abs(eigs[-1]), name


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------


def expansion_config():
    return {
        "family": "expansion",
        "p": 2, "d1": 1, "d2": 1, "d": 2,
        "terms": [
            {"k1": 0, "k2": 0, "matrix": [[1.0, 0.3], [0.3, 1.0]],
             "profile": {"type": "matern", "alpha": 1.0, "nu": 0.5}},
            {"k1": 1, "k2": 0, "matrix": [[0.4, 0.1], [0.1, 0.4]],
             "profile": {"type": "gaussian", "alpha": 0.8}},
        ],
    }


def test_kernel_from_config_families():
    kernel = K.kernel_from_config(expansion_config())
    assert isinstance(kernel, K.ExpansionKernel)
    assert kernel.p == 2

    sinh_cfg = {
        "family": "sinh_series", "p": 1, "d1": 1, "d2": 2, "d": 1,
        "gamma": {"v": [0.3], "beta": [[1.0]], "a": 1.0, "b": 0.2, "kappa": 1.0},
        "k_max": 300,
    }
    kernel = K.kernel_from_config(sinh_cfg)
    assert isinstance(kernel, K.SinhSeriesKernel)
    assert kernel.k_max == 300

    f_cfg = {
        "family": "f_class", "p": 2, "d1": 2, "d2": 1, "d": 2,
        "alpha": [[1.0, 1.2], [1.2, 1.4]],
        "nu": [[0.8, 1.0], [1.0, 1.2]],
        "tau": 1.0,
        "inner": {"terms": [{"k2": 0, "matrix": [[1.0, 0.5], [0.5, 1.0]],
                             "profile": {"type": "exponential", "alpha": 1.0}}]},
    }
    kernel = K.kernel_from_config(f_cfg)
    assert isinstance(kernel, K.FClassKernel)

    m_cfg = {
        "family": "matern_spectral", "p": 2, "d1": 1, "d2": 1, "d": 2,
        "sigma": [1.0, 2.0], "alpha": 1.0,
        "beta": [[1.0, 0.5], [0.5, 1.0]],
        "nu": [{"type": "constant", "value": 0.7},
               {"type": "affine", "base": 0.5, "eps": 0.1}],
    }
    kernel = K.kernel_from_config(m_cfg)
    assert isinstance(kernel, K.MaternSpectralKernel)


def test_kernel_from_config_strictness():
    cfg = expansion_config()
    cfg["surprise"] = 1
    with pytest.raises(ConfigError, match="surprise"):
        K.kernel_from_config(cfg)
    cfg = expansion_config()
    del cfg["p"]
    with pytest.raises(ConfigError, match="'p'"):
        K.kernel_from_config(cfg)
    cfg = expansion_config()
    cfg["terms"][0]["profile"]["type"] = "sinc"
    with pytest.raises(ConfigError, match="sinc"):
        K.kernel_from_config(cfg)
    with pytest.raises(ConfigError, match="family"):
        K.kernel_from_config({"family": "fractal", "p": 1, "d1": 1, "d2": 1, "d": 1})
