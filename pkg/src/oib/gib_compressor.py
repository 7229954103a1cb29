"""Closed-form Gaussian information-bottleneck compressor and baselines.

Given the generalized eigensystem of (sigma_x_given_y, sigma_x) with
ascending eigenvalues lam_i and Sigma_x-orthogonal directions v_i, the
optimal linear-Gaussian encoder at trade-off beta keeps every direction
whose critical value beta_i^c = 1 / (1 - lam_i) is exceeded and loads it
with

    alpha_i = sqrt((beta (1 - lam_i) - 1) / (lam_i r_i)).

The CCA baseline keeps the same directions with unit loadings; the PCA
baseline projects on the top-variance eigenvectors of sigma_x instead.
Encoding is z = A x, optionally plus unit-variance Gaussian noise.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor_stats import CovariancePair, GeneralizedEigenResult, \
    gib_eigensystem


class CompressorKind(str, enum.Enum):
    OIB = "oib"
    CCA = "cca"
    PCA = "pca"


@dataclass
class GibSolution:
    """Eigensystem plus the ascending critical beta values."""

    eigen: GeneralizedEigenResult
    beta_critical: np.ndarray
    n_x: int

    def __post_init__(self):
        if np.any(self.beta_critical <= 1.0):
            raise ValueError("critical beta values must exceed 1; "
                             "eigenvalues were not clamped into (0, 1)")


@dataclass
class Compressor:
    """A fitted linear feature extractor with an optional noise model."""

    kind: CompressorKind
    matrix_a: np.ndarray
    n_z: int
    beta: float = None
    noise_std: float = 0.0

    def __post_init__(self):
        self.matrix_a = np.asarray(self.matrix_a, dtype=np.float64)
        if self.matrix_a.ndim != 2 or self.matrix_a.shape[0] != self.n_z:
            raise DimensionError("matrix_a must have n_z=%d rows, got shape "
                                 "%s" % (self.n_z, self.matrix_a.shape))
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")

    @property
    def n_x(self):
        return self.matrix_a.shape[1]

    @property
    def rho(self):
        """Compression ratio n_x / n_z."""
        if self.n_z == 0:
            return float("inf")
        return self.n_x / self.n_z


def solve_gib(cov):
    """Solve the eigensystem of a CovariancePair and attach critical betas."""
    eigen = gib_eigensystem(cov)
    beta_critical = 1.0 / (1.0 - eigen.eigenvalues)
    return GibSolution(eigen=eigen, beta_critical=beta_critical,
                       n_x=eigen.dim)


def _loadings(sol, beta, n_z):
    lam = sol.eigen.eigenvalues[:n_z]
    r = sol.eigen.r_values[:n_z]
    num = np.maximum(beta * (1.0 - lam) - 1.0, 0.0)
    return np.sqrt(num / (lam * r))


def compressor_at_beta(sol, beta, noise_std=0.0):
    """Compressor whose row count is the number of critical betas below beta."""
    if beta < 0.0:
        raise ValueError("beta must be non-negative")
    n_z = int(np.sum(beta > sol.beta_critical))
    alpha = _loadings(sol, beta, n_z)
    matrix = alpha[:, None] * sol.eigen.left_eigenvectors[:n_z]
    return Compressor(kind=CompressorKind.OIB, matrix_a=matrix, n_z=n_z,
                      beta=float(beta), noise_std=noise_std)


def beta_for_size(sol, n_z):
    """Log-space midpoint of the critical interval that yields n_z rows.

    The interval above the last critical value is closed off at twice its
    lower end so every n_z up to n_x has a finite representative beta.
    """
    if not 1 <= n_z <= sol.n_x:
        raise ValueError("n_z must lie in [1, %d], got %d" % (sol.n_x, n_z))
    upper = np.append(sol.beta_critical, 2.0 * sol.beta_critical[-1])
    return float(np.sqrt(sol.beta_critical[n_z - 1] * upper[n_z]))


def compressor_at_size(sol, n_z, noise_std=0.0):
    """Compressor with exactly n_z rows, with beta chosen inside its interval."""
    beta = beta_for_size(sol, n_z)
    alpha = _loadings(sol, beta, n_z)
    matrix = alpha[:, None] * sol.eigen.left_eigenvectors[:n_z]
    return Compressor(kind=CompressorKind.OIB, matrix_a=matrix, n_z=n_z,
                      beta=beta, noise_std=noise_std)


def cca_compressor(sol, n_z, noise_std=0.0):
    """Unit-loading compressor on the first n_z eigendirections."""
    if not 1 <= n_z <= sol.n_x:
        raise ValueError("n_z must lie in [1, %d], got %d" % (sol.n_x, n_z))
    matrix = sol.eigen.left_eigenvectors[:n_z].copy()
    return Compressor(kind=CompressorKind.CCA, matrix_a=matrix, n_z=n_z,
                      beta=None, noise_std=noise_std)


def pca_compressor(sigma_x, n_z, noise_std=0.0):
    """Projection on the n_z largest-variance eigenvectors of sigma_x."""
    sigma_x = np.asarray(sigma_x, dtype=np.float64)
    if not 1 <= n_z <= sigma_x.shape[0]:
        raise ValueError("n_z must lie in [1, %d], got %d"
                         % (sigma_x.shape[0], n_z))
    _, vecs = np.linalg.eigh(sigma_x)
    matrix = vecs[:, ::-1][:, :n_z].T.copy()
    return Compressor(kind=CompressorKind.PCA, matrix_a=matrix, n_z=n_z,
                      beta=None, noise_std=noise_std)


def encode(comp, x, rng=None):
    """z = A x, plus seeded Gaussian noise when the compressor is stochastic.

    ``rng`` may be an integer seed or a numpy Generator; it is required
    whenever noise_std > 0 so that encodings stay reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != comp.n_x:
        raise DimensionError("expected inputs of length %d, got shape %s"
                             % (comp.n_x, x.shape))
    z = batch @ comp.matrix_a.T
    if comp.noise_std > 0.0:
        if rng is None:
            raise ValueError("stochastic encoding requires a seed or "
                             "Generator for reproducibility")
        gen = rng if isinstance(rng, np.random.Generator) \
            else np.random.default_rng(rng)
        z = z + comp.noise_std * gen.standard_normal(z.shape)
    return z[0] if single else z
