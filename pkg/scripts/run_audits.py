#!/usr/bin/env python3
"""Audit one kernel per catalogue family plus the planted-violation cases.

Prints a summary table; exits 1 if a valid kernel fails or a planted
violation goes undetected.
"""

import sys

import numpy as np

from torusfield import kernels as K
from torusfield import validation as V


def correlation(rng, p):
    pts = rng.standard_normal((p, 3))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    return np.exp(-0.35 * d2)


def catalogue(rng, p=2, d2=2, d=2):
    expansion = K.ExpansionKernel(
        p, 1, d2, d,
        [
            K.ExpansionTerm(0, 0, correlation(rng, p), K.MaternProfile(1.0, 0.8)),
            K.ExpansionTerm(1, 1, 0.4 * correlation(rng, p), K.GaussianProfile(0.9)),
        ],
    )
    sinh = K.SinhSeriesKernel(
        p, d2, d,
        K.CrossVariogramSpec(
            v=rng.uniform(0.1, 0.4, p), beta=correlation(rng, p), a=1.0, b=0.5, kappa=1.0
        ),
    )
    a_vec = rng.uniform(0.4, 1.2, p)
    n_vec = rng.uniform(0.5, 1.4, p)
    inner = K.normalize(
        K.ExpansionKernel(
            p, 1, d2, d,
            [K.ExpansionTerm(0, 0, correlation(rng, p), K.MaternProfile(1.0, 0.7))],
        )
    )
    fclass = K.FClassKernel(
        1, a_vec[:, None] + a_vec[None, :], n_vec[:, None] + n_vec[None, :], 1.2, inner
    )
    matern = K.MaternSpectralKernel(
        1, d2, d,
        K.VarianceScaling(rng.uniform(0.5, 1.5, p)),
        1.0,
        correlation(rng, p),
        [K.ConstantSmoothness(float(v)) for v in rng.uniform(0.5, 2.0, p)],
    )
    return {
        "expansion": expansion,
        "sinh_series": sinh,
        "f_class": fclass,
        "matern_spectral": matern,
    }


def main():
    rng = np.random.default_rng(0)
    rows = []
    ok = True
    for name, kernel in catalogue(rng).items():
        rep = V.pd_audit(kernel, n_sites=40, n_trials=10, seed=1)
        rows.append((name, rep.min_eig_ratio, rep.passed))
        ok = ok and rep.passed

    sys.path.insert(0, "tests")
    from planted import IndefiniteConstantKernel, bad_matern_spectral, negated_pd_gamma

    planted_checks = [
        ("planted indefinite constant", not V.pd_audit(
            IndefiniteConstantKernel(), 10, 3, seed=0).passed),
        ("planted negated variogram", not V.cnd_audit(
            negated_pd_gamma, 12, 4, seed=0, orientation="gamma_cpd").passed),
        ("planted colocation > 1", not V.matern_condition_audit(
            bad_matern_spectral(1.01)).passed),
    ]

    print(f"{'kernel':<28}{'min eig ratio':>16}  result")
    for name, ratio, passed in rows:
        print(f"{name:<28}{ratio:>16.3e}  {'pass' if passed else 'FAIL'}")
    for name, detected in planted_checks:
        print(f"{name:<28}{'':>16}  {'detected' if detected else 'MISSED'}")
        ok = ok and detected
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
