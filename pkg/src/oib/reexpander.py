"""Linear re-expansion of compressed features back to pre-activation space.

Two fitting routes produce the same kind of estimator: the population
L-MMSE solution theta = C_yz C_zz^-1 when covariances are known, and the
least-squares solution of the normal equations on training encodings.
Both fit on centered data and store the offset needed to undo the
centering, so predictions are theta @ z + target_mean.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, NumericalError
from .tensor_stats import DataMatrix

DEFAULT_RIDGE_SCALE = 1e-8


class FitMethod(str, enum.Enum):
    LMMSE_POPULATION = "lmmse_population"
    LS_SAMPLE = "ls_sample"


@dataclass
class Reexpander:
    """Linear estimator mapping n_z encodings to n_y targets."""

    theta: np.ndarray
    fit_method: FitMethod
    target_mean: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.target_mean = np.asarray(self.target_mean, dtype=np.float64)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta contains non-finite entries")
        if self.theta.ndim != 2 or \
                self.target_mean.shape != (self.theta.shape[0],):
            raise DimensionError("theta must be n_y x n_z with a length-n_y "
                                 "target mean")

    @property
    def n_y(self):
        return self.theta.shape[0]

    @property
    def n_z(self):
        return self.theta.shape[1]


def fit_lmmse(c_yz, c_zz, ridge=0.0, target_mean=None):
    """Population estimator theta = C_yz (C_zz + ridge I)^-1."""
    c_yz = np.asarray(c_yz, dtype=np.float64)
    c_zz = np.asarray(c_zz, dtype=np.float64)
    try:
        cho = linalg.cho_factor(c_zz + ridge * np.eye(c_zz.shape[0]),
                                lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("C_zz + ridge*I is not positive definite; "
                             "increase ridge") from exc
    theta = linalg.cho_solve(cho, c_yz.T).T
    if target_mean is None:
        target_mean = np.zeros(theta.shape[0])
    return Reexpander(theta=theta, fit_method=FitMethod.LMMSE_POPULATION,
                      target_mean=np.asarray(target_mean, dtype=np.float64))


def _as_values(m):
    return m.values if isinstance(m, DataMatrix) else np.asarray(m,
                                                                dtype=float)


def fit_ls(z_train, y_train, ridge=None, svd_fallback=False):
    """Least-squares fit of the normal equations on training encodings.

    ``ridge=None`` applies the default stabilization
    DEFAULT_RIDGE_SCALE * tr(Z'Z) / n_z; pass 0.0 for the raw normal
    equations.  A rank-deficient system with ridge 0 raises unless
    ``svd_fallback`` asks for the SVD pseudo-inverse solution.
    """
    z = _as_values(z_train)
    y = _as_values(y_train)
    if len(z) != len(y):
        raise DimensionError("z and y must have the same number of rows")
    n, n_z = z.shape
    if n <= n_z:
        raise ValueError("the system must be over-determined: need more "
                         "than n_z=%d samples, got %d" % (n_z, n))
    z_mean, y_mean = z.mean(axis=0), y.mean(axis=0)
    zc, yc = z - z_mean, y - y_mean
    gram = zc.T @ zc
    if ridge is None:
        ridge = DEFAULT_RIDGE_SCALE * np.trace(gram) / n_z
    gram[np.diag_indices_from(gram)] += ridge
    rhs = zc.T @ yc
    if ridge > 0.0:
        theta = np.linalg.solve(gram, rhs).T
    else:
        try:
            theta = np.linalg.solve(gram, rhs).T
        except np.linalg.LinAlgError as exc:
            if not svd_fallback:
                raise NumericalError(
                    "Z'Z is singular with ridge 0; pass svd_fallback=True "
                    "to solve via the SVD pseudo-inverse") from exc
            theta = np.linalg.lstsq(zc, yc, rcond=None)[0].T
    target_mean = y_mean - theta @ z_mean
    return Reexpander(theta=theta, fit_method=FitMethod.LS_SAMPLE,
                      target_mean=target_mean)


def reexpand(rx, z):
    """Predict targets for one encoding or a batch of encodings."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    batch = z[None, :] if single else z
    if batch.shape[1] != rx.n_z:
        raise DimensionError("expected encodings of length %d, got shape %s"
                             % (rx.n_z, z.shape))
    out = batch @ rx.theta.T + rx.target_mean
    return out[0] if single else out


def mse_entropy_gap(mse, cond_entropy, n_y):
    """mse minus the conditional-entropy lower bound on the estimation error.

    The bound is (n_y / (2 pi e)) * exp(2 H / n_y); for a Gaussian error
    with isotropic covariance the bound is met with equality, and any
    estimator's mean squared error sits on or above it.
    """
    bound = n_y / (2.0 * np.pi * np.e) * np.exp(2.0 * cond_entropy / n_y)
    return float(mse - bound)
