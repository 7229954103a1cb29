"""Orthonormal real-packed 2D-DFT and the Henze-Zirkler normality test.

The forward transform takes an image, applies the orthonormal 2D-DFT, and
repacks the complex coefficients into exactly n_x real numbers: purely real
coefficients (DC and the Nyquist lines) are kept as they are, and each
conjugate-symmetric pair contributes sqrt(2) * Re and sqrt(2) * Im of one
representative.  The packing is linear, orthonormal, and exactly invertible,
so covariances and entropies measured on the transformed data are directly
comparable with the pixel domain.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import lognorm

from .errors import DimensionError, NumericalError
from .tensor_stats import DataMatrix

_SQRT2 = np.sqrt(2.0)


@dataclass
class RealDft2dPlan:
    """Precomputed packing indices for a height x width (x channels) image."""

    height: int
    width: int
    channels: int = 1
    real_slots: np.ndarray = field(init=False, repr=False)
    pair_repr: np.ndarray = field(init=False, repr=False)
    pair_conj: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise DimensionError("plan dimensions must be positive")
        k = np.arange(self.height)[:, None]
        l = np.arange(self.width)[None, :]
        flat = k * self.width + l
        conj = ((-k) % self.height) * self.width + ((-l) % self.width)
        self.real_slots = np.flatnonzero((flat == conj).ravel())
        self.pair_repr = np.flatnonzero((flat < conj).ravel())
        self.pair_conj = conj.ravel()[self.pair_repr]

    @property
    def n_pixels(self):
        return self.height * self.width

    @property
    def n_features(self):
        return self.height * self.width * self.channels


def _as_batch(plan, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != plan.n_features:
        raise DimensionError("expected vectors of length %d, got shape %s"
                             % (plan.n_features, x.shape))
    return batch, single


def forward(plan, x):
    """Real-packed orthonormal 2D-DFT of one vector or a batch of rows."""
    batch, single = _as_batch(plan, x)
    n, hw = len(batch), plan.n_pixels
    per_channel = batch.reshape(n * plan.channels, plan.height, plan.width)
    f = np.fft.fft2(per_channel, norm="ortho").reshape(n * plan.channels, hw)
    packed = np.concatenate([f[:, plan.real_slots].real,
                             _SQRT2 * f[:, plan.pair_repr].real,
                             _SQRT2 * f[:, plan.pair_repr].imag], axis=1)
    out = packed.reshape(n, plan.channels * hw)
    return out[0] if single else out


def inverse(plan, coeffs):
    """Exact inverse of forward()."""
    batch, single = _as_batch(plan, coeffs)
    n, hw = len(batch), plan.n_pixels
    per_channel = batch.reshape(n * plan.channels, hw)
    n_real = plan.real_slots.size
    n_pair = plan.pair_repr.size
    f = np.zeros((n * plan.channels, hw), dtype=np.complex128)
    f[:, plan.real_slots] = per_channel[:, :n_real]
    rep = (per_channel[:, n_real:n_real + n_pair]
           + 1j * per_channel[:, n_real + n_pair:]) / _SQRT2
    f[:, plan.pair_repr] = rep
    f[:, plan.pair_conj] = rep.conj()
    img = np.fft.ifft2(f.reshape(-1, plan.height, plan.width), norm="ortho")
    out = img.real.reshape(n, plan.channels * hw)
    return out[0] if single else out


@dataclass
class HzTestResult:
    """Henze-Zirkler statistic with its log-normal null approximation."""

    statistic: float
    lognormal_mean: float
    lognormal_var: float
    p_value: float
    level: float = 0.05

    @property
    def normal(self):
        """True when the test does not reject normality at the given level."""
        return self.p_value > self.level


def henze_zirkler(data, level=0.05):
    """Henze-Zirkler multivariate normality test.

    Computes the smoothed characteristic-function distance on
    Mahalanobis-whitened data with the standard bandwidth
    b = ((N (2d + 1) / 4) ** (1 / (d + 4))) / sqrt(2) and a p-value from the
    log-normal approximation of the null distribution.
    """
    x = data.values if isinstance(data, DataMatrix) else np.asarray(data,
                                                                dtype=float)
    n, d = x.shape
    if n <= d:
        raise DimensionError("Henze-Zirkler needs more samples than "
                             "dimensions (N=%d, d=%d); project to fewer "
                             "coordinates first" % (n, d))
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / n
    try:
        cho = linalg.cho_factor(s, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("sample covariance is singular; reduce the "
                             "dimension or add shrinkage") from exc
    w = linalg.cho_solve(cho, xc.T).T          # S^-1 (x - mean)
    d_i = np.einsum("ij,ij->i", xc, w)          # Mahalanobis distances
    g = xc @ w.T                                # Gram matrix in the metric
    d_ij = d_i[:, None] + d_i[None, :] - 2.0 * g

    b = ((n * (2.0 * d + 1.0) / 4.0) ** (1.0 / (d + 4.0))) / np.sqrt(2.0)
    b2 = b * b
    t1 = float(np.mean(np.exp(-b2 / 2.0 * np.clip(d_ij, 0.0, None))))
    t2 = 2.0 * (1.0 + b2) ** (-d / 2.0) * float(
        np.mean(np.exp(-b2 / (2.0 * (1.0 + b2)) * d_i)))
    t3 = (1.0 + 2.0 * b2) ** (-d / 2.0)
    hz = n * (t1 - t2 + t3)

    a = 1.0 + 2.0 * b2
    wb = (1.0 + b2) * (1.0 + 3.0 * b2)
    mu = 1.0 - a ** (-d / 2.0) * (1.0 + d * b2 / a
                                  + d * (d + 2.0) * b2 ** 2 / (2.0 * a * a))
    si2 = (2.0 * (1.0 + 4.0 * b2) ** (-d / 2.0)
           + 2.0 * a ** (-d) * (1.0 + 2.0 * d * b2 ** 2 / a ** 2
                                + 3.0 * d * (d + 2.0) * b2 ** 4 / (4.0 * a ** 4))
           - 4.0 * wb ** (-d / 2.0) * (1.0 + 3.0 * d * b2 ** 2 / (2.0 * wb)
                                       + d * (d + 2.0) * b2 ** 4 / (2.0 * wb ** 2)))
    pmu = np.log(np.sqrt(mu ** 4 / (si2 + mu * mu)))
    psi = np.sqrt(np.log1p(si2 / (mu * mu)))
    p = float(lognorm.sf(hz, psi, scale=np.exp(pmu)))
    return HzTestResult(statistic=float(hz), lognormal_mean=float(mu),
                        lognormal_var=float(si2), p_value=p, level=level)
