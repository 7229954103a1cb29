"""Gaussian entropy and mutual-information measurements.

Everything here evaluates closed-form Gaussian quantities from covariance
matrices: differential entropy ½ log((2πe)^n |Σ|), mutual information as a
half log-determinant ratio, and the power normalization that rescales
encodings to unit mean per-coordinate power so entropies of differently
loaded compressors are comparable.  All values are in nats; convert to
bits only for display.

Two verification helpers back the theory the compressor relies on:
loading invariance (deterministic mutual information ignores row scaling,
and only noiseless encodings have that property) and projection optimality
(the generalized eigenvector subspace beats random projections of equal
rank).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .tensor_stats import DataMatrix, logdet_psd

LOG_2PIE = float(np.log(2.0 * np.pi * np.e))


@dataclass
class EntropyReport:
    """Entropy of one encoding size, with the log-determinant it came from."""

    n_z: int
    entropy_nats: float
    normalized: bool
    covariance_logdet: float

    def __post_init__(self):
        expected = 0.5 * (self.n_z * LOG_2PIE + self.covariance_logdet)
        if abs(self.entropy_nats - expected) > 1e-9 * (1 + abs(expected)):
            raise ValueError("entropy_nats does not match its own logdet")

    @property
    def entropy_bits(self):
        return self.entropy_nats / float(np.log(2.0))


@dataclass
class LoadingInvarianceReport:
    """Spread of MI across random loadings, and the noisy-case comparison."""

    n_z: int
    trials: int
    max_relative_spread: float
    noiseless_mi: float
    noisy_mi: float


@dataclass
class ProjectionOptimalityReport:
    """Worst-case MI margin of the eigenvector subspace over random maps."""

    n_z: int
    trials: int
    mi_optimal: float
    min_margin: float


def gaussian_entropy(sigma):
    """Differential entropy ½ log((2πe)^n |Σ|) in nats."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionError("covariance must be square, got shape %s"
                             % (sigma.shape,))
    n = sigma.shape[0]
    return 0.5 * (n * LOG_2PIE + logdet_psd(sigma))


def entropy_report(sigma, normalized=False):
    """EntropyReport for a covariance, recording its log-determinant."""
    sigma = np.asarray(sigma, dtype=np.float64)
    ld = logdet_psd(sigma)
    n = sigma.shape[0]
    return EntropyReport(n_z=n, entropy_nats=0.5 * (n * LOG_2PIE + ld),
                         normalized=normalized, covariance_logdet=ld)


def power_normalize(z_samples):
    """Rescale samples so mean per-coordinate power equals one.

    A single scalar √(n_z / tr(Σ̂_z)) multiplies every sample, leaving
    relative geometry intact; the trace of the resulting sample covariance
    is exactly n_z.  Doubling the inputs therefore does not change the
    output.
    """
    if not isinstance(z_samples, DataMatrix):
        z_samples = DataMatrix(np.asarray(z_samples, dtype=np.float64))
    x = z_samples.values
    xc = x - x.mean(axis=0)
    total_power = float(np.sum(xc * xc)) / x.shape[0]
    if total_power <= 0.0:
        raise NumericalError("cannot power-normalize samples with zero "
                             "variance")
    scale = np.sqrt(z_samples.n_features / total_power)
    return DataMatrix(x * scale, centered=z_samples.centered)


def gaussian_mi(sigma_z, sigma_z_given_y):
    """Mutual information ½(log|Σ_z| − log|Σ_{z|y}|) in nats.

    Both determinants are evaluated without jitter: the inputs must be
    strictly positive definite, and keeping them exact preserves the
    invariance of MI under loadings to machine precision.
    """
    sigma_z = np.asarray(sigma_z, dtype=np.float64)
    sigma_c = np.asarray(sigma_z_given_y, dtype=np.float64)
    if sigma_z.shape != sigma_c.shape:
        raise DimensionError("covariances must have equal shapes, got %s "
                             "and %s" % (sigma_z.shape, sigma_c.shape))
    return 0.5 * (logdet_psd(sigma_z, jitter=0.0)
                  - logdet_psd(sigma_c, jitter=0.0))


def encoding_mi(matrix_a, cov, noise_std=0.0):
    """MI between z = A x̃ + ξ and the regression target y.

    Propagates the marginal and conditional input covariances through the
    encoder and applies the Gaussian formula; ``noise_std`` is the standard
    deviation of the isotropic encoder noise ξ.
    """
    a = np.asarray(matrix_a, dtype=np.float64)
    noise = float(noise_std) ** 2 * np.eye(a.shape[0])
    sigma_z = a @ cov.sigma_x @ a.T + noise
    sigma_c = a @ cov.sigma_x_given_y @ a.T + noise
    return gaussian_mi(sigma_z, sigma_c)


def mi_loading_invariance_check(sol, cov, n_z, trials=20, seed=0):
    """Verify MI ignores positive diagonal loadings when ξ = 0.

    Evaluates I(z;y) for ``trials`` random positive row scalings of the
    first ``n_z`` eigenvector rows with noiseless encodings and reports the
    maximum relative spread.  One unit-noise case is also evaluated and
    must come out strictly smaller, confirming that the invariance is a
    property of the noiseless map alone.
    """
    v = sol.eigen.left_eigenvectors[:n_z]
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(trials):
        w = 10.0 ** rng.uniform(-1.0, 1.0, size=n_z)
        values.append(encoding_mi(w[:, None] * v, cov))
    values = np.asarray(values)
    mean = float(values.mean())
    spread = float((values.max() - values.min()) / max(abs(mean), 1e-300))
    noisy = encoding_mi(v, cov, noise_std=1.0)
    if not noisy < mean:
        raise NumericalError("unit encoder noise failed to reduce MI "
                             "(%.6f >= %.6f)" % (noisy, mean))
    return LoadingInvarianceReport(n_z=n_z, trials=trials,
                                   max_relative_spread=spread,
                                   noiseless_mi=mean, noisy_mi=noisy)


def random_projection_optimality_check(cov, n_z, trials=100, seed=0):
    """Compare the eigenvector subspace against random rank-n_z maps.

    Returns the minimum over trials of MI(eigenvector rows) minus
    MI(random projection); a non-negative margin confirms the subspace is
    MI-optimal at that rank.
    """
    from .tensor_stats import gib_eigensystem

    eigen = gib_eigensystem(cov)
    mi_opt = encoding_mi(eigen.left_eigenvectors[:n_z], cov)
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(trials):
        m = rng.standard_normal((n_z, cov.dim))
        margin = min(margin, mi_opt - encoding_mi(m, cov))
    return ProjectionOptimalityReport(n_z=n_z, trials=trials,
                                      mi_optimal=mi_opt,
                                      min_margin=float(margin))
