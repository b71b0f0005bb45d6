"""Emission, duration, and transition distributions used by the sampler.

Emissions are Gaussian (scalar or multivariate) with semi-conjugate priors:
a Normal prior on the mean and an inverse-gamma (scalar) or inverse-Wishart
(multivariate) prior on the scale. Segment durations follow a shifted
Poisson, ``d = 1 + Poisson(rate)``, so durations are always >= 1 while the
Gamma prior on the rate stays conjugate on ``d - 1``.

All posterior-update functions return closed-form posterior hyperparameters
and leave sampling to the caller; every sampler takes an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import poisson

from .validation import check_positive, check_spd

# Jitter added to near-singular scale matrices before decomposition; states
# holding one or two observations can produce degenerate scatter matrices.
COV_JITTER = 1e-9


# ---------------------------------------------------------------------------
# parameter and prior containers


@dataclass(frozen=True)
class GaussianParams1D:
    """Scalar Gaussian emission parameters."""

    mean: float
    variance: float

    def __post_init__(self):
        check_positive(self.variance, "variance")

    @property
    def dim(self) -> int:
        return 1

    def mean_vector(self) -> np.ndarray:
        return np.array([self.mean])


@dataclass(frozen=True)
class GaussianParamsMV:
    """Multivariate Gaussian emission parameters."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        cov = check_spd(self.covariance, tol=1e-10, name="covariance")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def mean_vector(self) -> np.ndarray:
        return self.mean


@dataclass(frozen=True)
class DurationParams:
    """Shifted-Poisson duration parameters; mean duration is ``1 + rate``."""

    rate: float

    def __post_init__(self):
        check_positive(self.rate, "rate")


@dataclass(frozen=True)
class ScalarEmissionPrior:
    """Normal prior on the mean, inverse-gamma prior on the variance."""

    mu0: float = 0.0
    sigma0_sq: float = 4.0
    a0: float = 2.0
    b0: float = 2.0

    def __post_init__(self):
        check_positive(self.sigma0_sq, "sigma0_sq")
        check_positive(self.a0, "a0")
        check_positive(self.b0, "b0")


@dataclass(frozen=True)
class MVEmissionPrior:
    """Normal prior on the mean, inverse-Wishart prior on the covariance."""

    mu0: np.ndarray
    sigma0: np.ndarray
    nu0: float
    psi0: np.ndarray

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        sigma0 = check_spd(self.sigma0, name="sigma0")
        psi0 = check_spd(self.psi0, name="psi0")
        p = mu0.shape[0]
        if sigma0.shape[0] != p or psi0.shape[0] != p:
            raise ValueError("prior dimensions are inconsistent")
        if self.nu0 <= p - 1:
            raise ValueError(f"nu0 must exceed p - 1 = {p - 1}, got {self.nu0}")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)
        object.__setattr__(self, "psi0", psi0)

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @classmethod
    def default(cls, p: int) -> "MVEmissionPrior":
        """Unit prior: zero mean, identity scales, smallest df with mean psi0."""
        return cls(mu0=np.zeros(p), sigma0=np.eye(p), nu0=p + 2, psi0=np.eye(p))


@dataclass(frozen=True)
class DurationPrior:
    """Gamma(shape, scale) prior on the shifted-Poisson rate."""

    shape: float = 1.0
    scale: float = 7.0

    def __post_init__(self):
        check_positive(self.shape, "shape")
        check_positive(self.scale, "scale")


EmissionPrior = ScalarEmissionPrior | MVEmissionPrior
EmissionParams = GaussianParams1D | GaussianParamsMV


# ---------------------------------------------------------------------------
# sampling primitives


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """Draw from a Dirichlet with the given concentration vector.

    Implemented via normalized Gamma draws so that very small concentrations
    (which arise after repeated weight damping) never produce NaN: if every
    Gamma draw underflows to zero the draw degenerates to a one-hot vector at
    an index chosen proportionally to the concentration.
    """
    conc = np.asarray(concentration, dtype=np.float64)
    if conc.ndim != 1 or conc.size == 0:
        raise ValueError("concentration must be a non-empty vector")
    if np.any(conc <= 0) or not np.all(np.isfinite(conc)):
        raise ValueError("concentration entries must be positive and finite")
    draws = rng.gamma(conc)
    total = draws.sum()
    if total <= 0.0:
        out = np.zeros_like(conc)
        out[rng.choice(conc.size, p=conc / conc.sum())] = 1.0
        return out
    return draws / total


def sample_categorical_log(log_weights, rng: np.random.Generator) -> int:
    """Sample an index from unnormalized log weights."""
    logw = np.asarray(log_weights, dtype=np.float64)
    top = np.max(logw)
    if not np.isfinite(top):
        raise ValueError("all categorical log weights are -inf")
    w = np.exp(logw - top)
    return int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))


def sample_inv_gamma(a: float, b: float, rng: np.random.Generator) -> float:
    """Draw from InvGamma(shape a, scale b)."""
    return float(b / rng.gamma(a))


def sample_inv_wishart(df: float, psi, rng: np.random.Generator) -> np.ndarray:
    """Draw from the inverse-Wishart via the Bartlett decomposition.

    Valid for any real df > p - 1.
    """
    psi = np.asarray(psi, dtype=np.float64)
    p = psi.shape[0]
    if df <= p - 1:
        raise ValueError(f"df must exceed p - 1 = {p - 1}, got {df}")
    # W ~ Wishart(df, psi^{-1}); the returned draw is W^{-1} ~ IW(df, psi).
    scale_inv = cho_solve((cholesky(psi, lower=True), True), np.eye(p))
    L = np.linalg.cholesky(scale_inv)
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    M = L @ A
    Minv = solve_triangular(M, np.eye(p), lower=True)
    draw = Minv.T @ Minv
    return 0.5 * (draw + draw.T)


def sample_mvn(mean, cov, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    L = np.linalg.cholesky(chol_jitter(cov))
    return mean + L @ rng.standard_normal(mean.shape[0])


def chol_jitter(mat) -> np.ndarray:
    """Return ``mat`` symmetrized, with diagonal jitter if it is near-singular."""
    mat = np.asarray(mat, dtype=np.float64)
    sym = 0.5 * (mat + mat.T)
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        return sym + COV_JITTER * np.eye(sym.shape[0])


def sample_emission_prior(prior: EmissionPrior, rng: np.random.Generator) -> EmissionParams:
    """Draw emission parameters from the prior."""
    if isinstance(prior, ScalarEmissionPrior):
        variance = sample_inv_gamma(prior.a0, prior.b0, rng)
        mean = rng.normal(prior.mu0, np.sqrt(prior.sigma0_sq))
        return GaussianParams1D(mean=float(mean), variance=variance)
    covariance = sample_inv_wishart(prior.nu0, prior.psi0, rng)
    mean = sample_mvn(prior.mu0, prior.sigma0, rng)
    return GaussianParamsMV(mean=mean, covariance=chol_jitter(covariance))


def sample_duration_prior(prior: DurationPrior, rng: np.random.Generator) -> DurationParams:
    return DurationParams(rate=float(rng.gamma(prior.shape, prior.scale)))


# ---------------------------------------------------------------------------
# conjugate posterior updates


def normal_mean_conditional(data, variance, mu0, sigma0_sq):
    """Posterior (mu_n, sigma_n_sq) of a Gaussian mean with known variance."""
    check_positive(variance, "variance")
    check_positive(sigma0_sq, "sigma0_sq")
    data = np.asarray(data, dtype=np.float64)
    n = data.size
    if n == 0:
        return float(mu0), float(sigma0_sq)
    prec = 1.0 / sigma0_sq + n / variance
    sigma_n_sq = 1.0 / prec
    mu_n = sigma_n_sq * (mu0 / sigma0_sq + data.sum() / variance)
    return float(mu_n), float(sigma_n_sq)


def inv_gamma_variance_conditional(data, mean, a0, b0):
    """Posterior (a_n, b_n) of a Gaussian variance with known mean."""
    check_positive(a0, "a0")
    check_positive(b0, "b0")
    data = np.asarray(data, dtype=np.float64)
    if data.size == 0:
        return float(a0), float(b0)
    a_n = a0 + data.size / 2.0
    b_n = b0 + 0.5 * np.sum((data - mean) ** 2)
    return float(a_n), float(b_n)


def mvn_mean_conditional(data, covariance, mu0, sigma0):
    """Posterior (mu_n, Sigma_n) of a multivariate Gaussian mean, known covariance."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    data = np.asarray(data, dtype=np.float64).reshape(-1, mu0.shape[0])
    n = data.shape[0]
    if n == 0:
        return mu0.copy(), np.asarray(sigma0, dtype=np.float64).copy()
    eye = np.eye(mu0.shape[0])
    prior_prec = cho_solve((cholesky(np.asarray(sigma0, dtype=np.float64), lower=True), True), eye)
    lik_prec = cho_solve((cholesky(np.asarray(covariance, dtype=np.float64), lower=True), True), eye)
    post_prec = prior_prec + n * lik_prec
    sigma_n = cho_solve((cholesky(post_prec, lower=True), True), eye)
    mu_n = sigma_n @ (prior_prec @ mu0 + lik_prec @ data.sum(axis=0))
    return mu_n, 0.5 * (sigma_n + sigma_n.T)


def inv_wishart_scale_conditional(data, mean, nu0, psi0):
    """Posterior (nu_n, Psi_n) of a covariance matrix with known mean."""
    mean = np.asarray(mean, dtype=np.float64)
    psi0 = np.asarray(psi0, dtype=np.float64)
    data = np.asarray(data, dtype=np.float64).reshape(-1, mean.shape[0])
    n = data.shape[0]
    if n == 0:
        return float(nu0), psi0.copy()
    resid = data - mean
    return float(nu0 + n), psi0 + resid.T @ resid


def gamma_duration_conditional(durations, shape, scale):
    """Posterior (shape_n, rate_n) of the shifted-Poisson rate.

    The prior Gamma(shape, scale) is returned in shape-rate form, with each
    duration contributing ``d - 1`` to the shape and 1 to the rate.
    """
    check_positive(shape, "shape")
    check_positive(scale, "scale")
    durations = np.asarray(durations, dtype=np.int64)
    if durations.size and np.any(durations < 1):
        raise ValueError("durations must be >= 1")
    shape_n = shape + float(np.sum(durations - 1))
    rate_n = 1.0 / scale + durations.size
    return float(shape_n), float(rate_n)


# ---------------------------------------------------------------------------
# log densities


def shifted_poisson_logpmf(d, rate):
    """log P(D = d) for D = 1 + Poisson(rate); defined for d >= 1."""
    d_arr = np.asarray(d)
    if np.any(d_arr < 1):
        raise ValueError("shifted-Poisson durations must be >= 1")
    check_positive(rate, "rate")
    out = poisson.logpmf(d_arr - 1, rate)
    return float(out) if np.isscalar(d) else out


def shifted_poisson_log_sf(d, rate):
    """log P(D > d) for D = 1 + Poisson(rate); log_sf(0) = 0."""
    d_arr = np.asarray(d)
    if np.any(d_arr < 0):
        raise ValueError("d must be >= 0")
    check_positive(rate, "rate")
    out = poisson.logsf(d_arr - 1, rate)
    return float(out) if np.isscalar(d) else out


def duration_logpmf_table(rates, d_max: int) -> np.ndarray:
    """(d_max, K) table of log pmf at durations 1..d_max for each state."""
    rates = np.asarray(rates, dtype=np.float64)
    d = np.arange(1, d_max + 1)[:, None]
    return poisson.logpmf(d - 1, rates[None, :])


def duration_logsf_table(rates, d_max: int) -> np.ndarray:
    """(d_max + 1, K) table of log P(D > d) at d = 0..d_max for each state."""
    rates = np.asarray(rates, dtype=np.float64)
    d = np.arange(0, d_max + 1)[:, None]
    return poisson.logsf(d - 1, rates[None, :])


def emission_logpdf(y, theta: EmissionParams) -> float:
    """Exact Gaussian log density of a single observation."""
    if isinstance(theta, GaussianParams1D):
        y_arr = np.asarray(y, dtype=np.float64).reshape(-1)
        if y_arr.size != 1:
            raise ValueError(f"scalar emission got observation of size {y_arr.size}")
        resid = y_arr[0] - theta.mean
        return float(-0.5 * (np.log(2.0 * np.pi * theta.variance) + resid**2 / theta.variance))
    y_arr = np.asarray(y, dtype=np.float64).reshape(-1)
    p = theta.dim
    if y_arr.size != p:
        raise ValueError(f"observation has size {y_arr.size}, expected {p}")
    L = np.linalg.cholesky(chol_jitter(theta.covariance))
    z = solve_triangular(L, y_arr - theta.mean, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (p * np.log(2.0 * np.pi) + logdet + z @ z))


def emission_loglik_matrix(values: np.ndarray, thetas) -> np.ndarray:
    """(T, K) matrix of per-timestep emission log likelihoods.

    ``values`` is the (T, p) observation matrix; ``thetas`` the per-state
    emission parameters.
    """
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[0]
    out = np.empty((T, len(thetas)))
    for k, theta in enumerate(thetas):
        if isinstance(theta, GaussianParams1D):
            if values.shape[1] != 1:
                raise ValueError("scalar emission requires 1-channel data")
            resid = values[:, 0] - theta.mean
            out[:, k] = -0.5 * (np.log(2.0 * np.pi * theta.variance) + resid**2 / theta.variance)
        else:
            if values.shape[1] != theta.dim:
                raise ValueError("observation dimension does not match emission")
            L = np.linalg.cholesky(chol_jitter(theta.covariance))
            z = solve_triangular(L, (values - theta.mean).T, lower=True)
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            out[:, k] = -0.5 * (theta.dim * np.log(2.0 * np.pi) + logdet + np.sum(z * z, axis=0))
    return out
