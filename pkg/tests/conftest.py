"""Shared helpers: random PSD matrices and valid kernel factories per family."""

from __future__ import annotations

import numpy as np

from torusfield import kernels as K


def rand_psd(rng: np.random.Generator, p: int, scale: float = 1.0) -> np.ndarray:
    w = rng.standard_normal((p, p))
    m = w @ w.T / p + 0.15 * np.eye(p)
    return scale * 0.5 * (m + m.T)


def rand_correlation(rng: np.random.Generator, p: int) -> np.ndarray:
    """PSD matrix with unit diagonal and strictly positive entries."""
    pts = rng.standard_normal((p, 3))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    return np.exp(-0.35 * d2)


def rand_profile(rng: np.random.Generator) -> K.RadialProfile:
    kind = rng.integers(3)
    if kind == 0:
        return K.MaternProfile(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.4, 2.5)))
    if kind == 1:
        return K.GaussianProfile(float(rng.uniform(0.4, 1.5)))
    return K.ExponentialProfile(float(rng.uniform(0.4, 2.0)))


def make_expansion(rng: np.random.Generator, p: int, d1: int, d2: int, d: int) -> K.ExpansionKernel:
    terms = []
    degrees = {(int(rng.integers(0, 3)), int(rng.integers(0, 3))) for _ in range(4)}
    degrees.add((0, 0))
    for k1, k2 in sorted(degrees):
        terms.append(
            K.ExpansionTerm(k1, k2, rand_psd(rng, p, scale=1.0 / (1 + k1 + k2)), rand_profile(rng))
        )
    return K.ExpansionKernel(p, d1, d2, d, terms)


def make_sinh(rng: np.random.Generator, p: int, d2: int, d: int, k_max: int = 2000) -> K.SinhSeriesKernel:
    gamma = K.CrossVariogramSpec(
        v=rng.uniform(0.05, 0.5, p),
        beta=rand_correlation(rng, p),
        a=float(rng.uniform(0.5, 2.0)),
        b=float(rng.uniform(0.1, 1.0)),
        kappa=float(rng.uniform(0.5, 2.0)),
    )
    return K.SinhSeriesKernel(p, d2, d, gamma, k_max=k_max)


def make_fclass(rng: np.random.Generator, p: int, d1: int, d2: int, d: int) -> K.FClassKernel:
    a_vec = rng.uniform(0.3, 1.5, p)
    n_vec = rng.uniform(0.4, 1.5, p)
    alpha = a_vec[:, None] + a_vec[None, :]
    nu = n_vec[:, None] + n_vec[None, :]
    inner_terms = [
        K.ExpansionTerm(0, 0, rand_psd(rng, p), rand_profile(rng)),
        K.ExpansionTerm(0, 1, rand_psd(rng, p, 0.4), rand_profile(rng)),
    ]
    inner = K.normalize(K.ExpansionKernel(p, 1, d2, d, inner_terms))
    return K.FClassKernel(d1, alpha, nu, float(rng.uniform(0.4, 2.5)), inner)


def make_matern_spectral(
    rng: np.random.Generator, p: int, d1: int, d2: int, d: int
) -> K.MaternSpectralKernel:
    return K.MaternSpectralKernel(
        d1,
        d2,
        d,
        K.VarianceScaling(rng.uniform(0.5, 2.0, p)),
        float(rng.uniform(0.5, 2.0)),
        rand_correlation(rng, p),
        [K.ConstantSmoothness(float(rng.uniform(0.4, 2.5))) for _ in range(p)],
    )


FAMILY_FACTORIES = {
    "expansion": make_expansion,
    "sinh_series": lambda rng, p, d1, d2, d: make_sinh(rng, p, d2, d),
    "f_class": make_fclass,
    "matern_spectral": make_matern_spectral,
}
