"""Coherent-structure masks from an exponent field: Gaussian pre-filter, then
a two-component Gaussian mixture fitted by EM; the mean of the higher
component is the binarization threshold.

The filtered samples are standardized before fitting and the threshold
comparison happens in standardized space, which makes the resulting mask
invariant under affine rescaling of the input field.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from .fields import MaskField, ScalarField


class DegenerateInputError(ValueError):
    """Samples cannot support a two-component fit (too few or zero variance)."""


@dataclass(frozen=True)
class LcsParams:
    gaussian_sigma: float = 1.0
    em_tol: float = 1e-6  # relative log-likelihood change to stop
    em_max_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be non-negative")
        if not (self.em_tol > 0):
            raise ValueError("em_tol must be positive")


@dataclass
class GmmModel:
    """Two-component 1D mixture, components ordered by ascending mean."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    ll_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        if not np.all(np.isfinite(self.means)):
            raise ValueError("means must be finite")

    @property
    def threshold(self) -> float:
        """Mean of the higher-mean component."""
        return float(self.means[1])


def gaussian_filter(fld: ScalarField, sigma: float) -> ScalarField:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), clamp-to-edge."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return fld.copy()
    radius = int(np.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (k / sigma) ** 2)
    kernel /= kernel.sum()
    out = convolve1d(fld.values, kernel, axis=0, mode="nearest")
    out = convolve1d(out, kernel, axis=1, mode="nearest")
    return ScalarField(fld.spec, out)


def _kmeans2(z: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Two-center Lloyd iteration seeded at the 5%/95% quantiles; returns the
    boolean high-cluster assignment."""
    c_lo, c_hi = np.quantile(z, [0.05, 0.95])
    if c_lo == c_hi:
        c_lo, c_hi = z.min(), z.max()
    for _ in range(max_iter):
        hi = np.abs(z - c_hi) < np.abs(z - c_lo)
        if not hi.any() or hi.all():
            hi = z > np.median(z)
        new_lo, new_hi = z[~hi].mean(), z[hi].mean()
        if new_lo == c_lo and new_hi == c_hi:
            break
        c_lo, c_hi = new_lo, new_hi
    return hi


def _log_pdf(z, mean, var):
    return -0.5 * (np.log(2 * np.pi * var) + (z - mean) ** 2 / var)


def fit_gmm2(samples, params: LcsParams | None = None) -> GmmModel:
    """EM fit of a two-component mixture to 1D samples.

    Initialization is a deterministic quantile-seeded k-means split, so fits
    are reproducible. The log-likelihood is non-decreasing across iterations
    and recorded in the model's ll_trace.
    """
    if params is None:
        params = LcsParams()
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 16:
        raise DegenerateInputError(f"need at least 16 samples, got {x.size}")
    mu0 = x.mean()
    s0 = x.std()
    if s0 == 0 or not np.isfinite(s0):
        raise DegenerateInputError("samples have zero variance")
    z = (x - mu0) / s0

    hi = _kmeans2(z)
    var_floor = 1e-10
    means = np.array([z[~hi].mean(), z[hi].mean()])
    variances = np.maximum(np.array([z[~hi].var(), z[hi].var()]), var_floor)
    weights = np.array([(~hi).mean(), hi.mean()])

    trace: list[float] = []
    ll = -np.inf
    for _ in range(params.em_max_iter):
        # E step in log space
        log_r = np.stack(
            [np.log(weights[i]) + _log_pdf(z, means[i], variances[i]) for i in range(2)]
        )
        m = log_r.max(axis=0)
        log_norm = m + np.log(np.exp(log_r - m).sum(axis=0))
        new_ll = float(log_norm.sum())
        r = np.exp(log_r - log_norm)
        # M step
        n_k = r.sum(axis=1)
        n_k = np.maximum(n_k, 1e-12)
        means = (r * z).sum(axis=1) / n_k
        variances = np.maximum((r * (z - means[:, None]) ** 2).sum(axis=1) / n_k, var_floor)
        weights = n_k / z.size
        weights /= weights.sum()
        assert new_ll >= ll - 1e-9 * max(1.0, abs(ll)), "EM log-likelihood decreased"
        trace.append(new_ll)
        if np.isfinite(ll) and abs(new_ll - ll) <= params.em_tol * max(1.0, abs(ll)):
            ll = new_ll
            break
        ll = new_ll

    order = np.argsort(means)
    return GmmModel(
        weights=weights[order],
        means=mu0 + s0 * means[order],
        variances=s0**2 * variances[order],
        log_likelihood=ll,
        ll_trace=trace,
    )


def extract_lcs(ftle: ScalarField, params: LcsParams | None = None) -> MaskField:
    """Binary ridge-region mask: filter, fit the mixture, keep cells at or
    above the higher component's mean.

    A constant field cannot be split; it yields an empty mask with a warning.
    """
    if params is None:
        params = LcsParams()
    filtered = gaussian_filter(ftle, params.gaussian_sigma)
    vals = filtered.values
    mu = vals.mean()
    s = vals.std()
    if s == 0 or not np.isfinite(s):
        warnings.warn("constant field: returning empty mask", RuntimeWarning, stacklevel=2)
        return MaskField.empty(ftle.spec)
    # fit and compare in standardized space so affine rescaling of the input
    # cannot move any sample across the threshold
    z = (vals - mu) / s
    model = fit_gmm2(z.ravel(), params)
    return MaskField(ftle.spec, z >= model.threshold)
