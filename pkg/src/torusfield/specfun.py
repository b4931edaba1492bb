"""Scalar special functions and quadrature rules shared by all kernel families.

Every routine is a pure function of its arguments and safe to call from any
number of threads.  Gamma and factorial ratios are evaluated in log space so
that large orders neither overflow nor lose their leading digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gamma as _gamma
from scipy.special import gammaln as _gammaln
from scipy.special import hyp2f1 as _hyp2f1
from scipy.special import kv as _kv
from scipy.special import kve as _kve

__all__ = [
    "QuadratureRule",
    "harmonic_dim",
    "sphere_area",
    "gegenbauer_raw",
    "gegenbauer_normalized",
    "matern",
    "bessel_k",
    "gauss_2f1",
    "gauss_jacobi_rule",
    "beta_fn",
    "log_gamma",
]

_LN2 = math.log(2.0)
_LNPI = math.log(math.pi)


def harmonic_dim(n: int, k: int) -> int:
    """Dimension of the space of degree-k spherical harmonics on S^n.

    Evaluates (2k + n - 1) (k + n - 2)! / (k! (n - 1)!) with exact integer
    arithmetic; the value is 1 by convention for n = 1, k = 0.  Python
    integers are unbounded, so the result is exact for every (n, k).
    """
    if n < 1:
        raise ValueError(f"sphere dimension must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"harmonic degree must be >= 0, got {k}")
    if n == 1 and k == 0:
        return 1
    num = (2 * k + n - 1) * math.factorial(k + n - 2)
    den = math.factorial(k) * math.factorial(n - 1)
    if num % den != 0:
        raise ArithmeticError(f"harmonic_dim({n}, {k}) is not an integer")
    return num // den


def sphere_area(n: int) -> float:
    """Total area of the unit sphere S^n: 2 pi^((n+1)/2) / Gamma((n+1)/2)."""
    if n < 1:
        raise ValueError(f"sphere dimension must be >= 1, got {n}")
    return math.exp(_LN2 + 0.5 * (n + 1) * _LNPI - _gammaln(0.5 * (n + 1)))


def gegenbauer_raw(lam: float, k: int, r):
    """Gegenbauer polynomial c_k^lam(r) via the three-term recurrence.

    c_0 = 1, c_1 = 2 lam r, and
    k c_k = 2 (k + lam - 1) r c_{k-1} - (k + 2 lam - 2) c_{k-2}.

    Accepts a scalar or array argument r in [-1, 1].
    """
    if lam <= 0:
        raise ValueError(f"Gegenbauer order must be positive, got {lam}")
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    r_arr = np.asarray(r, dtype=float)
    c_prev = np.ones_like(r_arr)
    if k == 0:
        return c_prev if r_arr.ndim else float(c_prev)
    c_curr = 2.0 * lam * r_arr
    for j in range(2, k + 1):
        c_next = (2.0 * (j + lam - 1.0) * r_arr * c_curr - (j + 2.0 * lam - 2.0) * c_prev) / j
        c_prev, c_curr = c_curr, c_next
    return c_curr if r_arr.ndim else float(c_curr)


def gegenbauer_normalized(n: int, k: int, r):
    """Gegenbauer polynomial for S^n normalized to 1 at r = 1.

    For n >= 2 this is c_k^((n-1)/2)(r) / c_k^((n-1)/2)(1).  For n = 1 the
    order parameter degenerates to zero and the normalized limit is the
    Chebyshev polynomial cos(k arccos r).
    """
    if n < 1:
        raise ValueError(f"sphere dimension must be >= 1, got {n}")
    r_arr = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    if n == 1:
        out = np.cos(k * np.arccos(r_arr))
    else:
        lam = 0.5 * (n - 1)
        out = gegenbauer_raw(lam, k, r_arr) / gegenbauer_raw(lam, k, 1.0)
    return out if np.ndim(r) else float(out)


def matern(h, alpha: float, nu) -> np.ndarray | float:
    """Matern correlation (2^(1-nu)/Gamma(nu)) (alpha h)^nu K_nu(alpha h).

    Continuous at the origin with value 1.  Broadcasts over ``h`` and ``nu``;
    the product is assembled in log space via the exponentially scaled Bessel
    function, which keeps the h -> 0 and nu-large regimes stable.
    """
    if alpha <= 0:
        raise ValueError(f"scale alpha must be positive, got {alpha}")
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(nu_arr <= 0):
        raise ValueError("smoothness nu must be positive")
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise ValueError("distance h must be nonnegative")
    x, nu_b = np.broadcast_arrays(alpha * h_arr, nu_arr)
    out = np.ones(x.shape)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        nup = nu_b[pos]
        with np.errstate(under="ignore"):
            log_val = (
                (1.0 - nup) * _LN2
                - _gammaln(nup)
                + nup * np.log(xp)
                + np.log(_kve(nup, xp))
                - xp
            )
            out[pos] = np.exp(log_val)
    scalar = np.ndim(h) == 0 and np.ndim(nu) == 0
    return float(out[()]) if scalar else out


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x) for x > 0."""
    nu_arr = np.asarray(nu, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(nu_arr <= 0):
        raise ValueError("order nu must be positive")
    if np.any(x_arr <= 0):
        raise ValueError("argument x must be positive")
    out = _kv(nu_arr, x_arr)
    scalar = np.ndim(nu) == 0 and np.ndim(x) == 0
    return float(out) if scalar else out


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for z < 1.

    The boundary z = 1 is admitted when c - a - b > 0, where the series
    converges to the Gauss summation value.
    """
    if c <= 0:
        raise ValueError(f"parameter c must be positive, got {c}")
    if z > 1.0:
        raise ValueError(f"argument z must satisfy z <= 1, got {z}")
    if z == 1.0:
        if c - a - b <= 0:
            raise ValueError("2F1 diverges at z = 1 unless c - a - b > 0")
        return float(_gamma(c) * _gamma(c - a - b) / (_gamma(c - a) * _gamma(c - b)))
    return float(_hyp2f1(a, b, c, z))


def beta_fn(a: float, b: float) -> float:
    """Beta function B(a, b) for positive arguments, via log-gamma."""
    if a <= 0 or b <= 0:
        raise ValueError(f"Beta function arguments must be positive, got ({a}, {b})")
    return math.exp(_gammaln(a) + _gammaln(b) - _gammaln(a + b))


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    if x <= 0:
        raise ValueError(f"log_gamma argument must be positive, got {x}")
    return float(_gammaln(x))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for the weight function (1 - t^2)^exponent on (-1, 1).

    Immutable after construction.  Nodes are strictly increasing and
    symmetric about zero; the weights sum to B(exponent + 1, 1/2).
    """

    nodes: np.ndarray
    weights: np.ndarray
    exponent: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        if self.exponent <= -1:
            raise ValueError(f"weight exponent must exceed -1, got {self.exponent}")
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.max(np.abs(nodes + nodes[::-1])) > 1e-12:
            raise ValueError("nodes must be symmetric about 0")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        total = beta_fn(self.exponent + 1.0, 0.5)
        if abs(weights.sum() - total) > 1e-10:
            raise ValueError(
                f"weights sum to {weights.sum()!r}, expected {total!r} within 1e-10"
            )
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Weighted sum of values sampled at the nodes (first axis)."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def gauss_jacobi_rule(m: int, exponent: float) -> QuadratureRule:
    """m-point Gauss rule for the weight (1 - t^2)^exponent on (-1, 1).

    Built by eigendecomposition of the symmetric tridiagonal recurrence
    matrix (Golub-Welsch); exact for polynomials of degree <= 2m - 1.
    """
    if m < 1:
        raise ValueError(f"node count must be >= 1, got {m}")
    a = float(exponent)
    if a <= -1:
        raise ValueError(f"weight exponent must exceed -1, got {a}")
    mu0 = beta_fn(a + 1.0, 0.5)
    if m == 1:
        return QuadratureRule(np.array([0.0]), np.array([mu0]), a)
    # Recurrence coefficients of the monic ultraspherical polynomials.  The
    # k = 1 coefficient is written separately: the generic expression is
    # 0/0 there when a = -1/2.
    beta = np.empty(m - 1)
    beta[0] = 1.0 / (2.0 * a + 3.0)
    if m > 2:
        k = np.arange(2.0, m)
        beta[1:] = k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a) ** 2 - 1.0)
    nodes, vecs = eigh_tridiagonal(np.zeros(m), np.sqrt(beta))
    weights = mu0 * vecs[0] ** 2
    # Exact symmetrization removes the eigensolver's last-digit asymmetry.
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(nodes, weights, a)
