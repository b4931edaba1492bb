"""Catalogue of componentwise-isotropic matrix-valued covariance kernels.

Every kernel maps the pair invariants (s, r, h) of two sites on
S^d1 x S^d2 x R^d to a symmetric p x p covariance block.  Kernels are
immutable after construction and their ``eval`` is pure, so concurrent
evaluation is safe.

Four families are provided:

- :class:`ExpansionKernel`: finite Gegenbauer double expansion with
  PSD-matrix-times-radial-profile coefficients.
- :class:`SinhSeriesKernel`: cosine series on the circle (d1 = 1) with
  coefficients 1/(k^2 + gamma_ij(r, h)) driven by a cross-variogram.
- :class:`FClassKernel`: Beta-mixture hypergeometric family composed with an
  inner correlation on S^d2 x R^d.
- :class:`MaternSpectralKernel`: multivariate Matern with smoothness that may
  vary over the hypertorus.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, hyp2f1

from . import strictjson as sj
from . import validation
from .geometry import Invariants3, Site, reduce_pair
from .specfun import beta_fn, gegenbauer_normalized, matern

__all__ = [
    "MatrixKernel",
    "VarianceScaling",
    "RadialProfile",
    "MaternProfile",
    "GaussianProfile",
    "ExponentialProfile",
    "ExpansionTerm",
    "ExpansionKernel",
    "CrossVariogramSpec",
    "SinhSeriesKernel",
    "FClassKernel",
    "ConstantSmoothness",
    "AffineSmoothness",
    "MaternSpectralKernel",
    "fclass_function",
    "normalize",
    "apply_variance",
    "sinh_discrepancy_report",
    "kernel_from_config",
]


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _check_psd(matrix: np.ndarray, name: str, tol: float = 1e-10) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(_sym(m))
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1.0)
    if eigs[0] < -tol * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eig {eigs[0]:g})")
    return _sym(m)


class MatrixKernel(ABC):
    """Componentwise-isotropic matrix-valued covariance kernel.

    Subclasses set ``p`` (field components) and the space dimensions
    ``d1, d2, d``, and implement ``eval``.
    """

    p: int
    d1: int
    d2: int
    d: int

    @abstractmethod
    def eval(self, inv: Invariants3) -> np.ndarray:
        """Symmetric p x p covariance block at the pair invariants."""

    def eval_batch(self, s: np.ndarray, r: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Blocks at many invariant triples at once, shape (n, p, p).

        Subclasses override this with vectorized implementations; the default
        falls back to per-point evaluation.
        """
        return np.stack(
            [
                self.eval(Invariants3(float(si), float(ri), float(hi)))
                for si, ri, hi in zip(np.ravel(s), np.ravel(r), np.ravel(h))
            ]
        )

    def eval_pair(self, a: Site, b: Site) -> np.ndarray:
        return self.eval(reduce_pair(a, b))

    def eval_srh(self, s: float, r: float, h: float) -> np.ndarray:
        return self.eval(Invariants3(s, r, h))

    def origin_value(self) -> np.ndarray:
        """Covariance block at coincident sites, K(1, 1, 0)."""
        return self.eval(Invariants3(1.0, 1.0, 0.0))


@dataclass(frozen=True)
class VarianceScaling:
    """Per-component standard deviations sigma_i > 0."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 1 or np.any(s <= 0):
            raise ValueError("sigma must be a 1-d vector of positive reals")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    def outer(self) -> np.ndarray:
        return np.outer(self.sigma, self.sigma)


class _ScaledKernel(MatrixKernel):
    """Entrywise sigma_i sigma_j scaling of a base kernel."""

    def __init__(self, base: MatrixKernel, scaling: VarianceScaling):
        if scaling.sigma.size != base.p:
            raise ValueError("scaling length must match the number of components")
        self.base = base
        self.scaling = scaling
        self._outer = scaling.outer()
        self.p, self.d1, self.d2, self.d = base.p, base.d1, base.d2, base.d

    def eval(self, inv: Invariants3) -> np.ndarray:
        return self._outer * self.base.eval(inv)

    def eval_batch(self, s, r, h) -> np.ndarray:
        return self._outer * self.base.eval_batch(s, r, h)


class _NormalizedKernel(MatrixKernel):
    """Base kernel rescaled so every diagonal entry is 1 at (1, 1, 0)."""

    def __init__(self, base: MatrixKernel):
        diag = np.diag(base.origin_value())
        if np.any(diag <= 0):
            raise ValueError("cannot normalize: nonpositive diagonal at the origin")
        self.base = base
        self._inv_scale = 1.0 / np.sqrt(np.outer(diag, diag))
        self.p, self.d1, self.d2, self.d = base.p, base.d1, base.d2, base.d

    def eval(self, inv: Invariants3) -> np.ndarray:
        return self._inv_scale * self.base.eval(inv)

    def eval_batch(self, s, r, h) -> np.ndarray:
        return self._inv_scale * self.base.eval_batch(s, r, h)


def apply_variance(kernel: MatrixKernel, scaling: VarianceScaling) -> MatrixKernel:
    """Scale entries by sigma_i sigma_j; preserves positive definiteness."""
    return _ScaledKernel(kernel, scaling)


def normalize(kernel: MatrixKernel) -> MatrixKernel:
    """Rescale entries by 1/sqrt(K_ii(1,1,0) K_jj(1,1,0)); idempotent."""
    return _NormalizedKernel(kernel)


# ---------------------------------------------------------------------------
# Radial profiles: positive definite correlations on R^d for every d.
# ---------------------------------------------------------------------------


class RadialProfile(ABC):
    """Scalar correlation function of distance, equal to 1 at the origin."""

    @abstractmethod
    def __call__(self, h) -> np.ndarray | float: ...

    @abstractmethod
    def to_config(self) -> dict: ...


@dataclass(frozen=True)
class MaternProfile(RadialProfile):
    alpha: float
    nu: float

    def __post_init__(self):
        if self.alpha <= 0 or self.nu <= 0:
            raise ValueError("Matern profile needs alpha > 0 and nu > 0")

    def __call__(self, h):
        return matern(h, self.alpha, self.nu)

    def to_config(self) -> dict:
        return {"type": "matern", "alpha": self.alpha, "nu": self.nu}


@dataclass(frozen=True)
class GaussianProfile(RadialProfile):
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("Gaussian profile needs alpha > 0")

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        out = np.exp(-((self.alpha * h) ** 2))
        return float(out) if out.ndim == 0 else out

    def to_config(self) -> dict:
        return {"type": "gaussian", "alpha": self.alpha}


@dataclass(frozen=True)
class ExponentialProfile(RadialProfile):
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("exponential profile needs alpha > 0")

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        out = np.exp(-self.alpha * h)
        return float(out) if out.ndim == 0 else out

    def to_config(self) -> dict:
        return {"type": "exponential", "alpha": self.alpha}


def _profile_from_config(cfg, path: str) -> RadialProfile:
    cfg = dict(sj.require_mapping(cfg, path))
    kind = sj.take(cfg, "type", path)
    if kind == "matern":
        profile = MaternProfile(sj.take(cfg, "alpha", path), sj.take(cfg, "nu", path))
    elif kind == "gaussian":
        profile = GaussianProfile(sj.take(cfg, "alpha", path))
    elif kind == "exponential":
        profile = ExponentialProfile(sj.take(cfg, "alpha", path))
    else:
        raise sj.ConfigError(path, f"unknown profile type {kind!r}")
    sj.finish(cfg, path)
    return profile


# ---------------------------------------------------------------------------
# Gegenbauer double expansion with finitely many terms.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionTerm:
    """One coefficient B_k(h) = matrix * profile(h) at degrees k = (k1, k2)."""

    k1: int
    k2: int
    matrix: np.ndarray
    profile: RadialProfile

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("degrees must be nonnegative")
        m = _check_psd(self.matrix, f"coefficient matrix at k=({self.k1},{self.k2})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def coefficient(self, h) -> np.ndarray:
        """B_k evaluated at distance h (broadcasts over h)."""
        prof = np.asarray(self.profile(h), dtype=float)
        return prof[..., None, None] * self.matrix


class ExpansionKernel(MatrixKernel):
    """K(s, r, h) = sum_k B_k(h) C_k1(s) C_k2(r) over finitely many k.

    Each B_k is a symmetric PSD matrix times a radial correlation profile,
    which makes every term (and hence the sum) positive definite on the
    product space.  With ``normalized=True`` the coefficient sum at h = 0 is
    required to have unit diagonal.
    """

    def __init__(
        self,
        p: int,
        d1: int,
        d2: int,
        d: int,
        terms: list[ExpansionTerm],
        normalized: bool = False,
    ):
        if p < 1 or d1 < 1 or d2 < 1 or d < 1:
            raise ValueError("dimensions p, d1, d2, d must all be >= 1")
        if not terms:
            raise ValueError("an expansion kernel needs at least one term")
        keys = [(t.k1, t.k2) for t in terms]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate degree pairs in expansion terms")
        for t in terms:
            if t.matrix.shape != (p, p):
                raise ValueError(
                    f"term at k=({t.k1},{t.k2}) has shape {t.matrix.shape}, expected ({p},{p})"
                )
        self.p, self.d1, self.d2, self.d = p, d1, d2, d
        self.terms = tuple(sorted(terms, key=lambda t: (t.k1, t.k2)))
        self.normalized = normalized
        if normalized:
            diag = np.diag(self.coefficient_sum_at_zero())
            if np.max(np.abs(diag - 1.0)) > 1e-8:
                raise ValueError(
                    "normalized flag set but coefficient sum at h=0 does not have unit diagonal"
                )

    def coefficient_sum_at_zero(self) -> np.ndarray:
        return sum(t.coefficient(0.0) for t in self.terms)

    def eval(self, inv: Invariants3) -> np.ndarray:
        out = np.zeros((self.p, self.p))
        for t in self.terms:
            cs = gegenbauer_normalized(self.d1, t.k1, inv.s)
            cr = gegenbauer_normalized(self.d2, t.k2, inv.r)
            out += t.coefficient(inv.h) * (cs * cr)
        return _sym(out)

    def eval_batch(self, s, r, h) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        r = np.asarray(r, dtype=float)
        h = np.asarray(h, dtype=float)
        out = np.zeros(s.shape + (self.p, self.p))
        for t in self.terms:
            cs = gegenbauer_normalized(self.d1, t.k1, s)
            cr = gegenbauer_normalized(self.d2, t.k2, r)
            prof = np.asarray(t.profile(h), dtype=float)
            out += (cs * cr * prof)[..., None, None] * t.matrix
        return 0.5 * (out + np.swapaxes(out, -1, -2))


# ---------------------------------------------------------------------------
# Circle cosine series with cross-variogram-driven coefficients (d1 = 1).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossVariogramSpec:
    """Built-in variogram family on S^d2 x R^d with strictly positive values.

    gamma_ij(r, h) = (v_i + v_j) + max(beta) - beta_ij exp(-a (1 - r) - b h^kappa)

    with beta symmetric PSD with positive entries, a > 0, b >= 0 and
    kappa in (0, 2].  The family is conditionally negative definite: the
    constant part vanishes on zero-sum contrasts and the subtracted term is a
    PSD matrix times a positive definite scalar correlation.  Consequently
    exp(-xi gamma_ij) factors into a separable part times the entrywise
    exponential of a positive definite function, which is what the series
    coefficients 1/(k^2 + gamma_ij) of :class:`SinhSeriesKernel` require.
    Choose v > 0 so that gamma stays strictly positive at coincident sites.
    """

    v: np.ndarray
    beta: np.ndarray
    a: float
    b: float
    kappa: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1 or np.any(v < 0):
            raise ValueError("nugget offsets v must be nonnegative reals")
        beta = _check_psd(self.beta, "cross-variogram matrix beta")
        if beta.shape != (v.size, v.size):
            raise ValueError("beta must be p x p with p = len(v)")
        if np.any(beta <= 0):
            raise ValueError("beta must have strictly positive entries")
        if self.a <= 0:
            raise ValueError("sphere range a must be positive")
        if self.b < 0:
            raise ValueError("Euclidean range b must be nonnegative")
        if not 0 < self.kappa <= 2:
            raise ValueError("stable exponent kappa must lie in (0, 2]")
        v = v.copy()
        v.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "beta", beta)

    @property
    def p(self) -> int:
        return self.v.size

    def evaluate(self, r, h) -> np.ndarray:
        """Variogram blocks; broadcasts over array-valued (r, h)."""
        r = np.asarray(r, dtype=float)
        h = np.asarray(h, dtype=float)
        g = np.exp(-self.a * (1.0 - r) - self.b * h**self.kappa)
        base = self.v[:, None] + self.v[None, :] + float(self.beta.max())
        return base - self.beta * g[..., None, None]


class SinhSeriesKernel(MatrixKernel):
    """Cosine series K_ij = sum_k cos(k arccos s) / (k^2 + gamma_ij(r, h)).

    Defined for d1 = 1.  The series, truncated at ``k_max`` terms, is the
    normative definition; :meth:`eval_closed_form` evaluates the sinh-ratio
    closed form for the discrepancy report and is not used by ``eval``.
    """

    #: Chunk length for the vectorized series accumulation.
    _CHUNK = 1 << 16

    def __init__(
        self,
        p: int,
        d2: int,
        d: int,
        gamma,
        k_max: int = 2000,
        d1: int = 1,
    ):
        if d1 != 1:
            raise ValueError("the cosine-series kernel requires d1 = 1")
        if k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {k_max}")
        gamma_p = getattr(gamma, "p", None)
        if gamma_p is not None and gamma_p != p:
            raise ValueError("gamma block size does not match p")
        self.p, self.d1, self.d2, self.d = p, 1, d2, d
        self.gamma = gamma
        self.k_max = int(k_max)
        # Positivity of gamma is a standing hypothesis; sample it up front.
        for r in np.linspace(-1.0, 1.0, 9):
            for h in (0.0, 0.5, 1.0, 5.0, 25.0):
                self.gamma_at(float(r), float(h))

    def gamma_at(self, r: float, h: float) -> np.ndarray:
        vals = validation._gamma_values(self.gamma, r, h)
        if vals.shape != (self.p, self.p):
            raise ValueError(f"gamma returned shape {vals.shape}, expected ({self.p},{self.p})")
        if np.any(vals <= 0):
            i, j = np.argwhere(vals <= 0)[0]
            raise ValueError(
                f"gamma_{i}{j}(r={r:g}, h={h:g}) = {vals[i, j]:g} is not strictly positive"
            )
        return _sym(vals)

    def _gamma_batch(self, r: np.ndarray, h: np.ndarray) -> np.ndarray:
        if isinstance(self.gamma, CrossVariogramSpec):
            vals = self.gamma.evaluate(r, h)
        else:
            vals = np.stack(
                [
                    validation._gamma_values(self.gamma, float(ri), float(hi))
                    for ri, hi in zip(r, h)
                ]
            )
        if np.any(vals <= 0):
            idx = np.argwhere(vals <= 0)[0]
            n, i, j = int(idx[0]), int(idx[-2]), int(idx[-1])
            raise ValueError(
                f"gamma_{i}{j}(r={r[n]:g}, h={h[n]:g}) is not strictly positive"
            )
        return 0.5 * (vals + np.swapaxes(vals, -1, -2))

    def series_tail_bound(self) -> float:
        """Bound on the truncation error: sum_{k > k_max} 1/k^2 < 1/k_max."""
        return 1.0 / self.k_max

    def eval(self, inv: Invariants3) -> np.ndarray:
        gamma = self.gamma_at(inv.r, inv.h)
        theta = math.acos(inv.s)
        out = np.zeros_like(gamma)
        for start in range(0, self.k_max + 1, self._CHUNK):
            k = np.arange(start, min(start + self._CHUNK, self.k_max + 1), dtype=float)
            out += np.sum(
                np.cos(k * theta)[:, None, None] / (k[:, None, None] ** 2 + gamma[None]),
                axis=0,
            )
        return _sym(out)

    def eval_batch(self, s, r, h) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
        gamma = self._gamma_batch(np.asarray(r, float), np.asarray(h, float))
        theta = np.arccos(s)
        # Exact head of the series, then a gamma-power expansion of the tail:
        # 1/(k^2 + g) = 1/k^2 - g/k^4 + g^2/k^6 - g^3/k^8 + O(g^4/k^10), whose
        # scalar sums are gamma-independent.  With head >= 4 sqrt(max gamma)
        # the truncated correction is below 1e-13 of the result.
        head = min(self.k_max, max(256, int(4.0 * math.sqrt(float(gamma.max())))))
        k = np.arange(0, head + 1, dtype=float)
        cosk = np.cos(np.multiply.outer(k, theta))
        recip = 1.0 / (k[:, None, None, None] ** 2 + gamma[None])
        out = np.einsum("kn,knpq->npq", cosk, recip)
        if self.k_max > head:
            sums = np.zeros((4, theta.size))
            for start in range(head + 1, self.k_max + 1, self._CHUNK):
                k = np.arange(start, min(start + self._CHUNK, self.k_max + 1), dtype=float)
                cosk = np.cos(np.multiply.outer(k, theta))
                inv_k2 = (1.0 / k**2)[:, None]
                weighted = cosk * inv_k2
                for m in range(4):
                    sums[m] += weighted.sum(axis=0)
                    if m < 3:
                        weighted *= inv_k2
            tail = (
                sums[0][:, None, None]
                - gamma * sums[1][:, None, None]
                + gamma**2 * sums[2][:, None, None]
                - gamma**3 * sums[3][:, None, None]
            )
            out += tail
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def eval_closed_form(self, inv: Invariants3) -> np.ndarray:
        """sinh-ratio closed form, kept verbatim for the discrepancy report.

        1/gamma + (pi/2) sinh(sqrt(gamma (pi - arccos s))) / sinh(sqrt(gamma)).
        This does not agree with the cosine series; see
        :func:`sinh_discrepancy_report`.
        """
        gamma = self.gamma_at(inv.r, inv.h)
        theta = math.acos(inv.s)
        val = 1.0 / gamma + 0.5 * math.pi * np.sinh(
            np.sqrt(gamma * (math.pi - theta))
        ) / np.sinh(np.sqrt(gamma))
        return _sym(val)


def sinh_discrepancy_report(
    kernel: SinhSeriesKernel,
    s_grid=None,
    r_grid=None,
    h_grid=None,
) -> dict:
    """Tabulate series vs closed-form values of a :class:`SinhSeriesKernel`.

    Returns a dict with per-point rows (s, r, h, i, j, series, closed_form,
    abs_diff) and summary statistics.  No agreement is asserted: the two
    expressions genuinely differ and the table documents by how much.
    """
    if s_grid is None:
        s_grid = np.linspace(-1.0, 1.0, 10)
    if r_grid is None:
        r_grid = np.linspace(-1.0, 1.0, 10)
    if h_grid is None:
        h_grid = np.linspace(0.0, 3.0, 5)
    rows = []
    max_diff = 0.0
    total = 0.0
    for s in s_grid:
        for r in r_grid:
            for h in h_grid:
                inv = Invariants3(float(s), float(r), float(h))
                series = kernel.eval(inv)
                closed = kernel.eval_closed_form(inv)
                for i in range(kernel.p):
                    for j in range(i, kernel.p):
                        diff = abs(series[i, j] - closed[i, j])
                        rows.append(
                            {
                                "s": float(s),
                                "r": float(r),
                                "h": float(h),
                                "i": i,
                                "j": j,
                                "series": float(series[i, j]),
                                "closed_form": float(closed[i, j]),
                                "abs_diff": float(diff),
                            }
                        )
                        max_diff = max(max_diff, diff)
                        total += diff
    return {
        "rows": rows,
        "max_abs_diff": max_diff,
        "mean_abs_diff": total / len(rows),
        "series_tail_bound": kernel.series_tail_bound(),
        "k_max": kernel.k_max,
    }


# ---------------------------------------------------------------------------
# Beta-mixture hypergeometric family.
# ---------------------------------------------------------------------------


def fclass_function(t, alpha, tau, nu):
    """Mixture function F(t; alpha, tau, nu) on t in [-1, 1].

    F(t) = B(alpha, nu + tau) / B(alpha, nu) * 2F1(tau, alpha; alpha + nu + tau; t),
    equivalently the Beta(alpha, nu) mixture of ((1 - delta)/(1 - delta t))^tau
    over delta in (0, 1).  The mixture representation has nonnegative power
    series coefficients in t, which is what makes kernels built from it
    positive definite.  Broadcasts over array arguments.
    """
    t = np.asarray(t, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(alpha <= 0) or np.any(nu <= 0) or tau <= 0:
        raise ValueError("alpha, tau and nu must be strictly positive")
    if np.any(np.abs(t) > 1.0):
        raise ValueError("argument t must lie in [-1, 1]")
    prefactor = np.exp(
        gammaln(nu + tau) + gammaln(alpha + nu) - gammaln(nu) - gammaln(alpha + nu + tau)
    )
    out = prefactor * hyp2f1(tau, alpha, alpha + nu + tau, t)
    return float(out) if out.ndim == 0 else out


class FClassKernel(MatrixKernel):
    """K_ij(s, r, h) = B(alpha_ij, nu_ij) F(s C_ij(r, h); alpha_ij, tau, nu_ij).

    ``alpha`` and ``nu`` are symmetric conditionally negative definite
    matrices with positive entries (checked numerically at construction) and
    the inner kernel C is a correlation on S^d2 x R^d with |C_ij| <= 1.
    """

    def __init__(
        self,
        d1: int,
        alpha: np.ndarray,
        nu: np.ndarray,
        tau: float,
        inner: MatrixKernel,
        cnd_tol: float = 1e-8,
        validate: bool = True,
    ):
        alpha = np.asarray(alpha, dtype=float)
        nu = np.asarray(nu, dtype=float)
        p = inner.p
        if alpha.shape != (p, p) or nu.shape != (p, p):
            raise ValueError("alpha and nu must be p x p matching the inner kernel")
        if tau <= 0:
            raise ValueError("tau must be positive")
        if np.any(alpha <= 0) or np.any(nu <= 0):
            raise ValueError("alpha and nu must have strictly positive entries")
        if not (np.allclose(alpha, alpha.T) and np.allclose(nu, nu.T)):
            raise ValueError("alpha and nu must be symmetric")
        if validate:
            for name, m in (("alpha", alpha), ("nu", nu)):
                ratio = validation.cnd_matrix_ratio(m)
                if ratio > cnd_tol:
                    raise ValueError(
                        f"{name} is not conditionally negative definite "
                        f"(projected ratio {ratio:g})"
                    )
            self._check_inner(inner)
        self.p, self.d1, self.d2, self.d = p, d1, inner.d2, inner.d
        self.alpha = _sym(alpha)
        self.nu = _sym(nu)
        self.tau = float(tau)
        self.inner = inner
        # Constant prefactors: B(alpha, nu) and the mixture normalization.
        self._beta_pref = np.exp(
            gammaln(self.alpha) + gammaln(self.nu) - gammaln(self.alpha + self.nu)
        )
        self._mix_pref = np.exp(
            gammaln(self.nu + self.tau)
            + gammaln(self.alpha + self.nu)
            - gammaln(self.nu)
            - gammaln(self.alpha + self.nu + self.tau)
        )
        self._c_param = self.alpha + self.nu + self.tau

    @staticmethod
    def _check_inner(inner: MatrixKernel) -> None:
        for s in (-1.0, 0.0, 1.0):
            for r in np.linspace(-1.0, 1.0, 7):
                for h in (0.0, 0.7, 3.0):
                    c = inner.eval(Invariants3(s, float(r), h))
                    if np.max(np.abs(c)) > 1.0 + 1e-8:
                        raise ValueError("inner kernel entries must satisfy |C_ij| <= 1")
        base = inner.eval(Invariants3(1.0, 0.3, 0.5))
        other = inner.eval(Invariants3(-0.4, 0.3, 0.5))
        if not np.allclose(base, other, atol=1e-10):
            raise ValueError("inner kernel must not depend on the first sphere invariant")

    def eval(self, inv: Invariants3) -> np.ndarray:
        c = self.inner.eval(Invariants3(1.0, inv.r, inv.h))
        t = np.clip(inv.s * c, -1.0, 1.0)
        out = self._beta_pref * self._mix_pref * hyp2f1(
            self.tau, self.alpha, self._c_param, t
        )
        return _sym(out)

    def eval_batch(self, s, r, h) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        c = self.inner.eval_batch(np.ones_like(s), r, h)
        t = np.clip(s[..., None, None] * c, -1.0, 1.0)
        out = self._beta_pref * self._mix_pref * hyp2f1(
            self.tau, self.alpha, self._c_param, t
        )
        return 0.5 * (out + np.swapaxes(out, -1, -2))


# ---------------------------------------------------------------------------
# Multivariate Matern with torus-varying smoothness.
# ---------------------------------------------------------------------------


class ConstantSmoothness:
    """Constant smoothness nu(s, r) = value."""

    def __init__(self, value: float):
        if value <= 0:
            raise ValueError("smoothness must be positive")
        self.value = float(value)

    def __call__(self, s: float, r: float) -> float:
        return self.value

    def to_config(self) -> dict:
        return {"type": "constant", "value": self.value}


class AffineSmoothness:
    """Affine smoothness nu(s, r) = base + eps (2 - s - r) with eps >= 0.

    The slope enters with (2 - s - r) so that smoothness is minimal, and the
    covariance maximal, at coincident sphere points; the opposite orientation
    would put more mass at antipodal pairs than on the diagonal, which no
    covariance can do.

    Use one shared ``eps`` across all components of a multivariate kernel:
    the slope then factors out of the colocation matrices as a positive
    definite scalar function and the model is certified.  Unequal slopes pass
    the pointwise grid audit (each matrix is a congruence of beta) yet can
    produce kernels that are not positive definite; run the end-to-end Gram
    audit when mixing slopes.
    """

    def __init__(self, base: float, eps: float):
        if base <= 0:
            raise ValueError("base smoothness must be positive")
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.base = float(base)
        self.eps = float(eps)

    def __call__(self, s: float, r: float) -> float:
        return self.base + self.eps * (2.0 - s - r)

    def to_config(self) -> dict:
        return {"type": "affine", "base": self.base, "eps": self.eps}


class MaternSpectralKernel(MatrixKernel):
    """K_ij = sigma_i sigma_j rho_ij(s, r) Matern(h; alpha, nu_ij(s, r)).

    rho_ij(s, r) = beta_ij Gamma(nu_ij) / Gamma(nu_ij + d/2) and
    nu_ij = (nu_ii + nu_jj) / 2 from per-component smoothness functions.
    At construction the matrices [beta_ij a^(nu_ij(s, r))] are eigenchecked
    over a grid of a in (0, 1] and Chebyshev (s, r) points; pass
    ``validate=False`` to skip (used to exercise the auditor on bad inputs).
    """

    def __init__(
        self,
        d1: int,
        d2: int,
        d: int,
        sigma: VarianceScaling,
        alpha: float,
        beta: np.ndarray,
        nu_funcs: list,
        validate: bool = True,
        condition_tol: float = 1e-8,
    ):
        p = sigma.sigma.size
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (p, p):
            raise ValueError("beta must be p x p")
        if not np.allclose(beta, beta.T):
            raise ValueError("beta must be symmetric")
        if np.max(np.abs(np.diag(beta) - 1.0)) > 1e-12:
            raise ValueError("beta must have unit diagonal")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if len(nu_funcs) != p:
            raise ValueError("need one smoothness function per component")
        self.p, self.d1, self.d2, self.d = p, d1, d2, d
        self.sigma = sigma
        self.alpha = float(alpha)
        self.beta = _sym(beta)
        self.nu_funcs = list(nu_funcs)
        self._outer = sigma.outer()
        if validate:
            report = validation.matern_condition_audit(self, tol=condition_tol)
            if not report.passed:
                raise ValueError(
                    "smoothness/colocation matrix fails the positive definiteness "
                    f"condition (worst ratio {report.min_eig_ratio:g})"
                )

    def nu_matrix(self, s: float, r: float) -> np.ndarray:
        diag = np.array([f(s, r) for f in self.nu_funcs])
        return 0.5 * (diag[:, None] + diag[None, :])

    def _nu_batch(self, s: np.ndarray, r: np.ndarray) -> np.ndarray:
        diag = np.stack(
            [np.broadcast_to(np.asarray(f(s, r), dtype=float), s.shape) for f in self.nu_funcs],
            axis=-1,
        )
        return 0.5 * (diag[..., :, None] + diag[..., None, :])

    def eval(self, inv: Invariants3) -> np.ndarray:
        nu = self.nu_matrix(inv.s, inv.r)
        rho = self.beta * np.exp(gammaln(nu) - gammaln(nu + 0.5 * self.d))
        m = matern(inv.h, self.alpha, nu)
        return _sym(self._outer * rho * m)

    def eval_batch(self, s, r, h) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        r = np.asarray(r, dtype=float)
        h = np.asarray(h, dtype=float)
        nu = self._nu_batch(s, r)
        rho = self.beta * np.exp(gammaln(nu) - gammaln(nu + 0.5 * self.d))
        m = matern(h[..., None, None], self.alpha, nu)
        out = self._outer * rho * m
        return 0.5 * (out + np.swapaxes(out, -1, -2))


# ---------------------------------------------------------------------------
# Configuration parsing (strict: unknown keys are errors).
# ---------------------------------------------------------------------------


def _expansion_terms_from_config(cfg_terms, p: int, path: str, force_k1_zero: bool):
    if not isinstance(cfg_terms, list) or not cfg_terms:
        raise sj.ConfigError(path, "expected a nonempty list of terms")
    terms = []
    for idx, item in enumerate(cfg_terms):
        tpath = f"{path}[{idx}]"
        item = dict(sj.require_mapping(item, tpath))
        k1 = 0 if force_k1_zero else int(sj.take(item, "k1", tpath))
        k2 = int(sj.take(item, "k2", tpath))
        matrix = sj.as_matrix(sj.take(item, "matrix", tpath), f"{tpath}.matrix", (p, p))
        profile = _profile_from_config(sj.take(item, "profile", tpath), f"{tpath}.profile")
        sj.finish(item, tpath)
        terms.append(ExpansionTerm(k1, k2, matrix, profile))
    return terms


def _common_dims(cfg: dict, path: str) -> tuple[int, int, int, int]:
    p = int(sj.take(cfg, "p", path))
    d1 = int(sj.take(cfg, "d1", path))
    d2 = int(sj.take(cfg, "d2", path))
    d = int(sj.take(cfg, "d", path))
    return p, d1, d2, d


def kernel_from_config(cfg, path: str = "kernel", validate: bool = True) -> MatrixKernel:
    """Build a catalogue kernel from a JSON-style mapping.

    Families: "expansion", "sinh_series", "f_class", "matern_spectral".
    Unknown keys anywhere in the mapping raise :class:`ConfigError`.  With
    ``validate=False`` the construction-time definiteness checks are skipped
    so that the audit machinery can report on invalid parameters itself.
    """
    cfg = dict(sj.require_mapping(cfg, path))
    family = sj.take(cfg, "family", path)
    if family == "expansion":
        p, d1, d2, d = _common_dims(cfg, path)
        normalized = bool(sj.take(cfg, "normalized", path, default=False))
        terms = _expansion_terms_from_config(
            sj.take(cfg, "terms", path), p, f"{path}.terms", force_k1_zero=False
        )
        sj.finish(cfg, path)
        return ExpansionKernel(p, d1, d2, d, terms, normalized=normalized)
    if family == "sinh_series":
        p, d1, d2, d = _common_dims(cfg, path)
        if d1 != 1:
            raise sj.ConfigError(path, "sinh_series requires d1 = 1")
        gpath = f"{path}.gamma"
        gcfg = dict(sj.require_mapping(sj.take(cfg, "gamma", path), gpath))
        gamma = CrossVariogramSpec(
            v=sj.as_vector(sj.take(gcfg, "v", gpath), f"{gpath}.v", p),
            beta=sj.as_matrix(sj.take(gcfg, "beta", gpath), f"{gpath}.beta", (p, p)),
            a=float(sj.take(gcfg, "a", gpath)),
            b=float(sj.take(gcfg, "b", gpath)),
            kappa=float(sj.take(gcfg, "kappa", gpath)),
        )
        sj.finish(gcfg, gpath)
        k_max = int(sj.take(cfg, "k_max", path, default=2000))
        sj.finish(cfg, path)
        return SinhSeriesKernel(p, d2, d, gamma, k_max=k_max)
    if family == "f_class":
        p, d1, d2, d = _common_dims(cfg, path)
        alpha = sj.as_matrix(sj.take(cfg, "alpha", path), f"{path}.alpha", (p, p))
        nu = sj.as_matrix(sj.take(cfg, "nu", path), f"{path}.nu", (p, p))
        tau = float(sj.take(cfg, "tau", path))
        ipath = f"{path}.inner"
        icfg = dict(sj.require_mapping(sj.take(cfg, "inner", path), ipath))
        iterms = _expansion_terms_from_config(
            sj.take(icfg, "terms", ipath), p, f"{ipath}.terms", force_k1_zero=True
        )
        sj.finish(icfg, ipath)
        sj.finish(cfg, path)
        inner = normalize(ExpansionKernel(p, 1, d2, d, iterms))
        return FClassKernel(d1, alpha, nu, tau, inner, validate=validate)
    if family == "matern_spectral":
        p, d1, d2, d = _common_dims(cfg, path)
        sigma = VarianceScaling(sj.as_vector(sj.take(cfg, "sigma", path), f"{path}.sigma", p))
        alpha = float(sj.take(cfg, "alpha", path))
        beta = sj.as_matrix(sj.take(cfg, "beta", path), f"{path}.beta", (p, p))
        nu_cfg = sj.take(cfg, "nu", path)
        if not isinstance(nu_cfg, list) or len(nu_cfg) != p:
            raise sj.ConfigError(f"{path}.nu", f"expected a list of {p} smoothness specs")
        nu_funcs = []
        for idx, item in enumerate(nu_cfg):
            npath = f"{path}.nu[{idx}]"
            item = dict(sj.require_mapping(item, npath))
            kind = sj.take(item, "type", npath)
            if kind == "constant":
                fn = ConstantSmoothness(float(sj.take(item, "value", npath)))
            elif kind == "affine":
                fn = AffineSmoothness(
                    float(sj.take(item, "base", npath)), float(sj.take(item, "eps", npath))
                )
            else:
                raise sj.ConfigError(npath, f"unknown smoothness type {kind!r}")
            sj.finish(item, npath)
            nu_funcs.append(fn)
        sj.finish(cfg, path)
        return MaternSpectralKernel(
            d1, d2, d, sigma, alpha, beta, nu_funcs, validate=validate
        )
    raise sj.ConfigError(path, f"unknown kernel family {family!r}")
