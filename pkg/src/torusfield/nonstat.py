"""Kernels on the torus cross R^d that are not radially symmetric in R^d.

Restricted to d1 = d2 = 1, where the sphere harmonics are the explicit real
circle basis {1, sqrt(2) cos(k t), sqrt(2) sin(k t)}, orthonormal against the
uniform probability measure.  A kernel in this class expands as

    K((x, u), (x', u')) = sum over (k1, (j1, j1'), k2, (j2, j2')) of
        Upsilon(u, u') Y_{k1,j1}(t1) Y_{k1,j1'}(t1') Y_{k2,j2}(t2) Y_{k2,j2'}(t2')

with p x p matrix coefficient functions Upsilon of the Euclidean pair.  The
coefficient index is the full tensor one: each sphere carries an independent
(unprimed, primed) pair of harmonic indices, grouped per sphere.  Writing a
shared harmonic index across the two spheres would not be well defined when
the eigenspace dimensions differ, and could not represent isotropic kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import strictjson as sj
from .geometry import Site
from .specfun import harmonic_dim
from .validation import AuditReport, gram_matrix, min_eig_ratio, pd_audit

__all__ = [
    "circle_harmonic",
    "circle_angle",
    "XiTerm",
    "XiKernel",
    "separable_upsilon",
    "gaussian_bump",
    "polynomial_g",
    "sinusoid_g",
    "stationary_embedding",
    "isotropic_pair_kernel",
    "recover_upsilon",
    "SummabilityReport",
    "square_summability_report",
    "truncation_l2_error",
    "export_recovered_csv",
    "xi_pd_audit",
    "xi_from_config",
]


def circle_harmonic(k: int, j: int, theta):
    """Real circle harmonic Y_{k,j}(theta), orthonormal for dtheta/(2 pi).

    j indexes within the degree: Y_{0,1} = 1, Y_{k,1} = sqrt(2) cos(k theta),
    Y_{k,2} = sqrt(2) sin(k theta) for k >= 1.
    """
    theta = np.asarray(theta, dtype=float)
    if k == 0:
        if j != 1:
            raise ValueError("degree 0 has a single harmonic, j = 1")
        return np.ones_like(theta)
    if j == 1:
        return np.sqrt(2.0) * np.cos(k * theta)
    if j == 2:
        return np.sqrt(2.0) * np.sin(k * theta)
    raise ValueError(f"circle harmonics have j in {{1, 2}}, got {j}")


def circle_angle(x) -> float:
    """Angle of a point on the unit circle S^1 in R^2."""
    coords = getattr(x, "coords", x)
    return float(np.arctan2(coords[1], coords[0]))


def _check_index(k: int, j: int, jp: int) -> None:
    dim = harmonic_dim(1, k)
    if not (1 <= j <= dim and 1 <= jp <= dim):
        raise ValueError(
            f"harmonic indices ({j}, {jp}) out of range 1..{dim} for degree {k}"
        )


@dataclass(frozen=True)
class XiTerm:
    """One expansion term: degrees (k1, k2), per-sphere index pairs, and Upsilon.

    ``upsilon`` maps a Euclidean pair (u, u') to a p x p matrix.
    """

    k1: int
    j1: int
    j1p: int
    k2: int
    j2: int
    j2p: int
    upsilon: object

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("degrees must be nonnegative")
        _check_index(self.k1, self.j1, self.j1p)
        _check_index(self.k2, self.j2, self.j2p)

    @property
    def index(self) -> tuple:
        return (self.k1, self.j1, self.j1p, self.k2, self.j2, self.j2p)

    def mirrored(self) -> "XiTerm":
        """Index with primed and unprimed harmonic roles swapped."""
        return XiTerm(
            self.k1,
            self.j1p,
            self.j1,
            self.k2,
            self.j2p,
            self.j2,
            lambda u, up, f=self.upsilon: np.asarray(f(up, u), dtype=float).T,
        )


class XiKernel:
    """Finite harmonic expansion on (S^1 x S^1 x R^d)^2 with matrix coefficients.

    ``eval_pair`` evaluates at two sites; ``angle_eval`` broadcasts over
    arrays of circle angles at fixed Euclidean components, which is what the
    quadrature-based coefficient recovery consumes.  Construction verifies
    numerically that the kernel is symmetric under swapping its arguments.
    """

    def __init__(self, p: int, d: int, truncation: tuple[int, int], terms: list[XiTerm]):
        if p < 1 or d < 1:
            raise ValueError("p and d must be >= 1")
        n1, n2 = truncation
        if n1 < 0 or n2 < 0:
            raise ValueError("truncation degrees must be nonnegative")
        keys = [t.index for t in terms]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate coefficient indices")
        for t in terms:
            if t.k1 > n1 or t.k2 > n2:
                raise ValueError(f"term {t.index} exceeds the truncation {truncation}")
        self.p, self.d = p, d
        self.d1 = self.d2 = 1
        self.truncation = (int(n1), int(n2))
        self.terms = tuple(terms)
        self._check_symmetry()

    def _check_symmetry(self) -> None:
        rng = np.random.default_rng(20240)
        for _ in range(4):
            u = rng.uniform(-2, 2, self.d)
            up = rng.uniform(-2, 2, self.d)
            t = rng.uniform(0, 2 * np.pi, 4)
            kab = self.angle_eval(t[0], t[1], t[2], t[3], u, up)
            kba = self.angle_eval(t[1], t[0], t[3], t[2], up, u)
            if not np.allclose(kab, np.swapaxes(kba, -1, -2), atol=1e-10):
                raise ValueError(
                    "coefficients are not argument-swap symmetric; add mirrored "
                    "terms (see XiTerm.mirrored)"
                )

    def angle_eval(self, t1, t1p, t2, t2p, u, up) -> np.ndarray:
        """Evaluate at circle angles (broadcast) and fixed Euclidean points."""
        t1, t1p, t2, t2p = np.broadcast_arrays(
            np.asarray(t1, float), np.asarray(t1p, float), np.asarray(t2, float), np.asarray(t2p, float)
        )
        out = np.zeros(t1.shape + (self.p, self.p))
        for term in self.terms:
            ups = np.asarray(term.upsilon(u, up), dtype=float)
            factor = (
                circle_harmonic(term.k1, term.j1, t1)
                * circle_harmonic(term.k1, term.j1p, t1p)
                * circle_harmonic(term.k2, term.j2, t2)
                * circle_harmonic(term.k2, term.j2p, t2p)
            )
            out += factor[..., None, None] * ups
        return out

    def eval_pair(self, a: Site, b: Site) -> np.ndarray:
        if a.dims != (1, 1, self.d) or b.dims != (1, 1, self.d):
            raise ValueError(f"sites must live on S^1 x S^1 x R^{self.d}")
        out = self.angle_eval(
            circle_angle(a.x1), circle_angle(b.x1), circle_angle(a.x2), circle_angle(b.x2), a.u, b.u
        )
        return 0.5 * (out + out.T)

    def coefficient(self, index: tuple, u, up) -> np.ndarray:
        """Stored Upsilon at a full index, zero when absent."""
        for t in self.terms:
            if t.index == tuple(index):
                return np.asarray(t.upsilon(u, up), dtype=float)
        return np.zeros((self.p, self.p))


# ---------------------------------------------------------------------------
# Coefficient palette: separable Upsilon(u, u') = g(u) A g(u') with A PSD.
# ---------------------------------------------------------------------------


def separable_upsilon(matrix: np.ndarray, g):
    """Upsilon(u, u') = g(u) matrix g(u'); positive definite when matrix is PSD."""
    matrix = np.asarray(matrix, dtype=float)
    eigs = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    if eigs[0] < -1e-10 * max(1.0, abs(eigs[-1])):
        raise ValueError("separable coefficient matrix must be PSD")

    def upsilon(u, up):
        return float(g(u)) * float(g(up)) * matrix

    return upsilon


def gaussian_bump(center, width: float):
    """g(u) = exp(-|u - center|^2 / width^2)."""
    center = np.asarray(center, dtype=float)
    if width <= 0:
        raise ValueError("width must be positive")

    def g(u):
        diff = np.asarray(u, float) - center
        return float(np.exp(-np.dot(diff, diff) / width**2))

    return g


def polynomial_g(coeffs, direction):
    """g(u) = sum_m coeffs[m] (direction . u)^m."""
    coeffs = np.asarray(coeffs, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def g(u):
        x = float(direction @ np.asarray(u, float))
        return float(sum(c * x**m for m, c in enumerate(coeffs)))

    return g


def sinusoid_g(freq, phase: float = 0.0):
    """g(u) = cos(freq . u + phase)."""
    freq = np.asarray(freq, dtype=float)

    def g(u):
        return float(np.cos(freq @ np.asarray(u, float) + phase))

    return g


def stationary_embedding(expansion_kernel) -> XiKernel:
    """Embed a componentwise-isotropic expansion on the torus into this class.

    By the addition formula, C_k(cos dt) = (1/kappa_k) sum_j Y_{k,j}(t) Y_{k,j}(t'),
    so an isotropic term B_k(h) C_k1 C_k2 becomes coefficients diagonal in
    each sphere's index pair with value B_k(|u - u'|) / (kappa_k1 kappa_k2).
    Requires d1 = d2 = 1.
    """
    if expansion_kernel.d1 != 1 or expansion_kernel.d2 != 1:
        raise ValueError("the embedding needs a kernel on the classical torus")
    terms = []
    n1 = max(t.k1 for t in expansion_kernel.terms)
    n2 = max(t.k2 for t in expansion_kernel.terms)
    for t in expansion_kernel.terms:
        scale = 1.0 / (harmonic_dim(1, t.k1) * harmonic_dim(1, t.k2))

        def upsilon(u, up, term=t, scale=scale):
            h = float(np.linalg.norm(np.asarray(u, float) - np.asarray(up, float)))
            return scale * term.coefficient(h)

        for j1 in range(1, harmonic_dim(1, t.k1) + 1):
            for j2 in range(1, harmonic_dim(1, t.k2) + 1):
                terms.append(XiTerm(t.k1, j1, j1, t.k2, j2, j2, upsilon))
    return XiKernel(expansion_kernel.p, expansion_kernel.d, (n1, n2), terms)


def isotropic_pair_kernel(kernel):
    """Adapter exposing ``angle_eval`` for a componentwise-isotropic kernel.

    Lets the recovery quadrature run on catalogue kernels with d1 = d2 = 1.
    """

    class _Adapter:
        p = kernel.p
        d = kernel.d

        @staticmethod
        def angle_eval(t1, t1p, t2, t2p, u, up):
            from .geometry import Invariants3

            t1, t1p, t2, t2p = np.broadcast_arrays(
                np.asarray(t1, float),
                np.asarray(t1p, float),
                np.asarray(t2, float),
                np.asarray(t2p, float),
            )
            h = float(np.linalg.norm(np.asarray(u, float) - np.asarray(up, float)))
            s = np.cos(t1 - t1p)
            r = np.cos(t2 - t2p)
            out = np.empty(t1.shape + (kernel.p, kernel.p))
            it = np.nditer(s, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                out[idx] = kernel.eval(Invariants3(float(s[idx]), float(r[idx]), h))
            return out

    return _Adapter()


# ---------------------------------------------------------------------------
# Coefficient recovery by four-fold angular quadrature.
# ---------------------------------------------------------------------------


def _angle_nodes(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def default_quad_order(max_degree: int) -> int:
    """Trapezoidal node count, spectrally exact for trigonometric polynomials."""
    return 4 * max_degree + 16


def _kernel_angle_eval(kernel):
    fn = getattr(kernel, "angle_eval", None)
    if fn is None:
        raise TypeError("kernel must expose angle_eval(t1, t1p, t2, t2p, u, up)")
    return fn


def recover_upsilon(
    kernel,
    k1: int,
    j: tuple[int, int],
    k2: int,
    jp: tuple[int, int],
    u,
    up,
    quad_order: int | None = None,
) -> np.ndarray:
    """Recover Upsilon at one harmonic index by four-fold angular quadrature.

    Projects K((x, u), (x', u')) on the product of the four circle harmonics
    named by the index, using the uniform trapezoidal rule per angle, which
    is exact for trigonometric polynomials of degree below the node count.
    """
    j1, j1p = j
    j2, j2p = jp
    _check_index(k1, j1, j1p)
    _check_index(k2, j2, j2p)
    kmax = max(k1, k2)
    n = quad_order if quad_order is not None else default_quad_order(kmax)
    if n < 2 * kmax + 8:
        raise ValueError(f"quad_order {n} too small; need at least {2 * kmax + 8}")
    angle_eval = _kernel_angle_eval(kernel)
    thetas = _angle_nodes(n)
    y1 = circle_harmonic(k1, j1, thetas)
    y1p = circle_harmonic(k1, j1p, thetas)
    y2 = circle_harmonic(k2, j2, thetas)
    y2p = circle_harmonic(k2, j2p, thetas)
    p = kernel.p
    acc = np.zeros((p, p))
    # Stream over the first angle to keep the evaluation grid 3-d.
    grid = (thetas[:, None, None], thetas[None, :, None], thetas[None, None, :])
    for a, ta in enumerate(thetas):
        block = angle_eval(ta, grid[0], grid[1], grid[2], u, up)
        acc += y1[a] * np.einsum("b,c,e,bce...->...", y1p, y2, y2p, block)
    return acc / float(n) ** 4


@dataclass
class SummabilityReport:
    """Partial sums S_N of squared coefficient magnitudes up to degree N."""

    degrees: np.ndarray
    partial_sums: np.ndarray
    increments: np.ndarray = field(init=False)

    def __post_init__(self):
        self.increments = np.diff(self.partial_sums, prepend=0.0)


def _harmonic_table(n_max: int, thetas: np.ndarray) -> tuple[np.ndarray, list]:
    """Stack all harmonics of degree <= n_max; returns (table, index list)."""
    rows = [np.ones_like(thetas)]
    index = [(0, 1)]
    for k in range(1, n_max + 1):
        rows.append(np.sqrt(2.0) * np.cos(k * thetas))
        index.append((k, 1))
        rows.append(np.sqrt(2.0) * np.sin(k * thetas))
        index.append((k, 2))
    return np.stack(rows), index


def _full_coefficient_tensor(kernel, u, up, n_max: int, quad_order: int):
    """All projections T[m1, m2, m3, m4] for harmonics of degree <= n_max."""
    n = quad_order
    if n < 2 * n_max + 8:
        raise ValueError(f"quad_order {n} too small; need at least {2 * n_max + 8}")
    angle_eval = _kernel_angle_eval(kernel)
    thetas = _angle_nodes(n)
    table, index = _harmonic_table(n_max, thetas)
    m = table.shape[0]
    p = kernel.p
    tensor = np.zeros((m, m, m, m, p, p))
    grid = (thetas[:, None, None], thetas[None, :, None], thetas[None, None, :])
    for a in range(n):
        block = angle_eval(thetas[a], grid[0], grid[1], grid[2], u, up)
        # Contract one angle axis at a time; block axes are (t1p, t2, t2p, p, p).
        t1 = np.tensordot(table, block, (1, 0))  # (m2, t2, t2p, p, p)
        t2 = np.tensordot(table, t1, (1, 1))  # (m3, m2, t2p, p, p)
        t3 = np.tensordot(table, t2, (1, 2))  # (m4, m3, m2, p, p)
        contrib = np.transpose(t3, (2, 1, 0, 3, 4))
        tensor += table[:, a][:, None, None, None, None, None] * contrib[None]
    tensor /= float(n) ** 4
    return tensor, index


def square_summability_report(
    kernel,
    u,
    up,
    n_max: int,
    quad_order: int | None = None,
) -> SummabilityReport:
    """Partial sums of squared coefficient entries over degrees up to n_max.

    S_N sums |Upsilon|^2 (all matrix entries, all index pairs) over
    max(k1, k2) <= N.  The sums are nondecreasing by construction; vanishing
    increments indicate square summability of the expansion.
    """
    n = quad_order if quad_order is not None else default_quad_order(n_max)
    tensor, index = _full_coefficient_tensor(kernel, u, up, n_max, n)
    degree = np.array([k for k, _ in index])
    sq = np.sum(tensor**2, axis=(-1, -2))
    # Assign each squared coefficient to the shell of its largest degree and
    # accumulate, so the partial sums are nondecreasing by construction.
    shell = np.maximum.reduce(
        np.meshgrid(degree, degree, degree, degree, indexing="ij")
    )
    increments = np.array(
        [float(np.sum(sq[shell == n_deg])) for n_deg in range(n_max + 1)]
    )
    return SummabilityReport(np.arange(n_max + 1), np.cumsum(increments))


def truncation_l2_error(kernel: XiKernel, u, up, n1: int, n2: int, quad_order: int) -> float:
    """Mean-square distance between the kernel and its (n1, n2) truncation.

    Integrates the squared Frobenius norm of K - K_{n1,n2} over all four
    circle angles against the uniform probability measure.
    """
    kept = [t for t in kernel.terms if t.k1 <= n1 and t.k2 <= n2]
    thetas = _angle_nodes(quad_order)
    grid = (thetas[:, None, None], thetas[None, :, None], thetas[None, None, :])
    total = 0.0
    truncated = XiKernel(kernel.p, kernel.d, kernel.truncation, kept) if kept else None
    for a in range(quad_order):
        block = kernel.angle_eval(thetas[a], grid[0], grid[1], grid[2], u, up)
        if truncated is not None:
            block = block - truncated.angle_eval(thetas[a], grid[0], grid[1], grid[2], u, up)
        total += float(np.sum(block**2))
    return total / float(quad_order) ** 4


def export_recovered_csv(
    kernel,
    u,
    up,
    n1: int,
    n2: int,
    path,
    quad_order: int | None = None,
) -> None:
    """Recover all coefficients up to degrees (n1, n2) and write them as CSV.

    One row per matrix entry, keyed by the sphere index pairs and the entry
    position: columns k1, j1, j1p, k2, j2, j2p, l, m, value.
    """
    import csv

    n = quad_order if quad_order is not None else default_quad_order(max(n1, n2))
    tensor, index = _full_coefficient_tensor(kernel, u, up, max(n1, n2), n)
    lookup = {key: pos for pos, key in enumerate(index)}
    p = kernel.p
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "j1", "j1p", "k2", "j2", "j2p", "l", "m", "value"])
        for k1 in range(n1 + 1):
            for k2 in range(n2 + 1):
                dims1 = harmonic_dim(1, k1)
                dims2 = harmonic_dim(1, k2)
                for j1 in range(1, dims1 + 1):
                    for j1p in range(1, dims1 + 1):
                        for j2 in range(1, dims2 + 1):
                            for j2p in range(1, dims2 + 1):
                                block = tensor[
                                    lookup[(k1, j1)],
                                    lookup[(k1, j1p)],
                                    lookup[(k2, j2)],
                                    lookup[(k2, j2p)],
                                ]
                                for l in range(p):
                                    for m in range(p):
                                        writer.writerow(
                                            [k1, j1, j1p, k2, j2, j2p, l, m,
                                             repr(float(block[l, m]))]
                                        )


def xi_pd_audit(
    kernel: XiKernel,
    n_sites: int = 25,
    n_trials: int = 5,
    seed: int = 0,
    tol: float = 1e-8,
    n_points: int = 20,
    box_halfwidth: float = 3.0,
) -> dict:
    """Two-level positive definiteness audit of an expansion kernel.

    Level (a) checks each stored coefficient as a two-argument matrix
    function over random Euclidean designs; level (b) runs the end-to-end
    Gram audit of the assembled kernel over random sites.
    """
    rng = np.random.default_rng(seed)
    per_term = []
    for t in kernel.terms:
        pts = rng.uniform(-box_halfwidth, box_halfwidth, size=(n_points, kernel.d))
        p = kernel.p
        big = np.empty((n_points * p, n_points * p))
        for i in range(n_points):
            for j in range(n_points):
                big[i * p : (i + 1) * p, j * p : (j + 1) * p] = np.asarray(
                    t.upsilon(pts[i], pts[j]), dtype=float
                )
        ratio, _ = min_eig_ratio(big)
        per_term.append({"index": list(t.index), "min_eig_ratio": float(ratio)})
    level_a_flagged = [row["index"] for row in per_term if row["min_eig_ratio"] < -tol]
    level_b = pd_audit(
        kernel, n_sites=n_sites, n_trials=n_trials, seed=seed, tol=tol,
        box_halfwidth=box_halfwidth,
    )
    return {
        "per_coefficient": per_term,
        "coefficients_flagged": level_a_flagged,
        "gram_audit": level_b,
        "passed": not level_a_flagged and level_b.passed,
    }


# ---------------------------------------------------------------------------
# Configuration parsing for the coefficient palette.
# ---------------------------------------------------------------------------


def _g_from_config(cfg, path: str):
    cfg = dict(sj.require_mapping(cfg, path))
    kind = sj.take(cfg, "type", path)
    if kind == "gaussian_bump":
        g = gaussian_bump(
            sj.as_vector(sj.take(cfg, "center", path), f"{path}.center"),
            float(sj.take(cfg, "width", path)),
        )
    elif kind == "polynomial":
        g = polynomial_g(
            sj.as_vector(sj.take(cfg, "coeffs", path), f"{path}.coeffs"),
            sj.as_vector(sj.take(cfg, "direction", path), f"{path}.direction"),
        )
    elif kind == "sinusoid":
        g = sinusoid_g(
            sj.as_vector(sj.take(cfg, "freq", path), f"{path}.freq"),
            float(sj.take(cfg, "phase", path, default=0.0)),
        )
    else:
        raise sj.ConfigError(path, f"unknown shape function type {kind!r}")
    sj.finish(cfg, path)
    return g


def xi_from_config(cfg, path: str = "kernel") -> XiKernel:
    """Build an :class:`XiKernel` from a JSON-style mapping (strict keys)."""
    cfg = dict(sj.require_mapping(cfg, path))
    family = sj.take(cfg, "family", path)
    if family != "xi":
        raise sj.ConfigError(path, f"expected family 'xi', got {family!r}")
    p = int(sj.take(cfg, "p", path))
    d = int(sj.take(cfg, "d", path))
    trunc = sj.take(cfg, "truncation", path)
    if not (isinstance(trunc, list) and len(trunc) == 2):
        raise sj.ConfigError(f"{path}.truncation", "expected [N1, N2]")
    terms_cfg = sj.take(cfg, "terms", path)
    sj.finish(cfg, path)
    if not isinstance(terms_cfg, list) or not terms_cfg:
        raise sj.ConfigError(f"{path}.terms", "expected a nonempty list")
    terms = []
    for idx, item in enumerate(terms_cfg):
        tpath = f"{path}.terms[{idx}]"
        item = dict(sj.require_mapping(item, tpath))
        k1 = int(sj.take(item, "k1", tpath))
        j1 = int(sj.take(item, "j1", tpath))
        j1p = int(sj.take(item, "j1p", tpath))
        k2 = int(sj.take(item, "k2", tpath))
        j2 = int(sj.take(item, "j2", tpath))
        j2p = int(sj.take(item, "j2p", tpath))
        upath = f"{tpath}.upsilon"
        ucfg = dict(sj.require_mapping(sj.take(item, "upsilon", tpath), upath))
        kind = sj.take(ucfg, "type", upath)
        if kind != "separable":
            raise sj.ConfigError(upath, f"unknown coefficient type {kind!r}")
        matrix = sj.as_matrix(sj.take(ucfg, "matrix", upath), f"{upath}.matrix", (p, p))
        g = _g_from_config(sj.take(ucfg, "g", upath), f"{upath}.g")
        sj.finish(ucfg, upath)
        sj.finish(item, tpath)
        terms.append(XiTerm(k1, j1, j1p, k2, j2, j2p, separable_upsilon(matrix, g)))
    return XiKernel(p, d, (int(trunc[0]), int(trunc[1])), terms)
