"""Gaussian random field simulation and simple kriging on finite designs.

Sampling goes through a single Cholesky factorization of the jittered Gram
matrix; per-sample noise streams are derived from (seed, sample index) so
runs are deterministic and samples could be generated in parallel.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import Site, UnitVector, _site_header
from .validation import cross_gram_matrix, gram_matrix

__all__ = [
    "FieldSample",
    "simulate",
    "empirical_covariance",
    "krige",
    "save_samples_csv",
    "save_field_csv",
    "load_field_csv",
    "save_predictions_csv",
]

log = logging.getLogger(__name__)

MAX_JITTER_ESCALATIONS = 8


@dataclass(frozen=True)
class FieldSample:
    """One zero-mean field realization: values[i, c] at sites[i], component c."""

    sites: tuple
    values: np.ndarray
    seed: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != len(self.sites):
            raise ValueError("values must be an N x p matrix matching the site list")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sites", tuple(self.sites))


def _factor_with_jitter(gram: np.ndarray, jitter: float) -> tuple[np.ndarray, float, int]:
    """Cholesky factor of gram + jitter I, escalating jitter tenfold on failure."""
    n = gram.shape[0]
    current = jitter
    for escalation in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            chol = np.linalg.cholesky(gram + current * np.eye(n))
            if escalation:
                log.warning(
                    "Cholesky needed %d jitter escalation(s); final jitter %.3e",
                    escalation,
                    current,
                )
            return chol, current, escalation
        except np.linalg.LinAlgError:
            current = current * 10.0 if current > 0 else 1e-14 * max(np.trace(gram) / n, 1.0)
    min_eig = float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0])
    raise np.linalg.LinAlgError(
        f"Gram matrix is not factorizable at the jitter cap; minimum eigenvalue {min_eig:g}"
    )


def simulate(
    kernel,
    sites: list[Site],
    n_samples: int,
    seed: int,
    jitter: float | None = None,
) -> list[FieldSample]:
    """Draw zero-mean Gaussian field samples with the kernel's covariance.

    The Gram matrix is factorized once as L L^T and each sample is L eps with
    eps standard normal from the stream (seed, sample index).  ``jitter``
    defaults to 1e-10 trace/(pN) and is escalated tenfold (with a logged
    warning) whenever the factorization fails, up to a cap.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    if n_samples == 0:
        return []
    gram = gram_matrix(kernel, sites)
    n = gram.shape[0]
    if jitter is None:
        jitter = 1e-10 * np.trace(gram) / n
    chol, _, _ = _factor_with_jitter(gram, jitter)
    p = kernel.p
    samples = []
    for idx in range(n_samples):
        rng = np.random.default_rng([seed, idx])
        eps = rng.standard_normal(n)
        values = (chol @ eps).reshape(len(sites), p)
        samples.append(FieldSample(tuple(sites), values, seed))
    return samples


def empirical_covariance(samples: list[FieldSample]) -> np.ndarray:
    """Unbiased sample covariance of flattened field vectors (site-major)."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples for a covariance estimate")
    data = np.stack([s.values.reshape(-1) for s in samples])
    return np.cov(data, rowvar=False, ddof=1)


def krige(
    kernel,
    obs_sites: list[Site],
    obs_values: np.ndarray,
    noise: float,
    query_sites: list[Site],
) -> tuple[np.ndarray, np.ndarray]:
    """Simple (zero-mean) kriging predictions and per-component variances.

    Returns (predictions, variances), each of shape (len(query_sites), p).
    Predictions are K_*^T (K + noise I)^(-1) y; variances are the diagonal of
    K_** - K_*^T (K + noise I)^(-1) K_*, clamped at zero with a warning when
    they dip below -1e-8.
    """
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    obs_values = np.asarray(obs_values, dtype=float)
    p = kernel.p
    if obs_values.shape != (len(obs_sites), p):
        raise ValueError(
            f"obs_values shape {obs_values.shape}, expected ({len(obs_sites)}, {p})"
        )
    gram = gram_matrix(kernel, obs_sites) + noise * np.eye(len(obs_sites) * p)
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"observation system is singular (noise={noise:g}): {exc}"
        ) from exc
    cross = cross_gram_matrix(kernel, obs_sites, query_sites)
    y = obs_values.reshape(-1)
    predictions = (cross.T @ cho_solve(factor, y)).reshape(len(query_sites), p)

    solved = cho_solve(factor, cross)
    reduction = np.sum(cross * solved, axis=0)
    prior = np.concatenate([np.diag(kernel.eval_pair(q, q)) for q in query_sites])
    variances = prior - reduction
    if np.any(variances < -1e-8):
        warnings.warn(
            f"kriging variance dipped to {variances.min():g}; clamping to 0",
            stacklevel=2,
        )
    variances = np.maximum(variances, 0.0).reshape(len(query_sites), p)
    return predictions, variances


# ---------------------------------------------------------------------------
# CSV input/output: sites columns followed by p value columns.
# ---------------------------------------------------------------------------


def _value_header(p: int) -> list[str]:
    return [f"z_{i}" for i in range(p)]


def save_samples_csv(samples: list[FieldSample], path) -> None:
    """Write samples: a leading sample index, site columns, p value columns."""
    if not samples:
        raise ValueError("no samples to write")
    sites = samples[0].sites
    d1, d2, d = sites[0].dims
    p = samples[0].values.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample"] + _site_header(d1, d2, d) + _value_header(p))
        for si, sample in enumerate(samples):
            for site, row_vals in zip(sample.sites, sample.values):
                coords = np.concatenate([site.x1.coords, site.x2.coords, site.u])
                writer.writerow(
                    [str(si)] + [repr(float(v)) for v in coords] + [repr(float(v)) for v in row_vals]
                )


def save_field_csv(sites: list[Site], values: np.ndarray, path) -> None:
    """Write one field (sites plus p value columns), e.g. kriging observations."""
    values = np.asarray(values, dtype=float)
    d1, d2, d = sites[0].dims
    p = values.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_site_header(d1, d2, d) + _value_header(p))
        for site, row_vals in zip(sites, values):
            coords = np.concatenate([site.x1.coords, site.x2.coords, site.u])
            writer.writerow([repr(float(v)) for v in coords] + [repr(float(v)) for v in row_vals])


def load_field_csv(path) -> tuple[list[Site], np.ndarray]:
    """Read a field written by :func:`save_field_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n1 = sum(1 for c in header if c.startswith("x1_"))
        n2 = sum(1 for c in header if c.startswith("x2_"))
        nd = sum(1 for c in header if c.startswith("u_"))
        p = sum(1 for c in header if c.startswith("z_"))
        if header != _site_header(n1 - 1, n2 - 1, nd) + _value_header(p):
            raise ValueError(f"{path}: malformed field header {header}")
        sites, values = [], []
        for row in reader:
            if not row:
                continue
            vals = np.array([float(v) for v in row])
            sites.append(
                Site(
                    UnitVector(vals[:n1]),
                    UnitVector(vals[n1 : n1 + n2]),
                    vals[n1 + n2 : n1 + n2 + nd],
                )
            )
            values.append(vals[n1 + n2 + nd :])
    return sites, np.array(values)


def save_predictions_csv(
    query_sites: list[Site], predictions: np.ndarray, variances: np.ndarray, path
) -> None:
    """Write kriging output: site columns, then pred_i and var_i columns."""
    d1, d2, d = query_sites[0].dims
    p = predictions.shape[1]
    header = (
        _site_header(d1, d2, d)
        + [f"pred_{i}" for i in range(p)]
        + [f"var_{i}" for i in range(p)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for site, pred, var in zip(query_sites, predictions, variances):
            coords = np.concatenate([site.x1.coords, site.x2.coords, site.u])
            writer.writerow(
                [repr(float(v)) for v in coords]
                + [repr(float(v)) for v in pred]
                + [repr(float(v)) for v in var]
            )
