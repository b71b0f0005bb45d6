"""Block Gibbs sampler for the (robust) HDP-HSMM.

Each iteration resamples, in order: the shared state weights and transition
rows under the weak-limit Dirichlet approximation, the emission and duration
parameters conditioned on the current labels, a mean-ordering relabeling
that prevents label switching, and finally the full segment sequence from
backwards messages. With the robust variant enabled, a merge sweep then
collapses redundant states and damps their base weights; the damped weights
feed the next iteration's transition resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import invwishart, mode, multivariate_normal, poisson

from .core import (
    Hyperparams,
    ModelState,
    ObservationSequence,
    SegmentSequence,
    bar_transitions,
    transition_counts,
)
from .distributions import (
    GaussianParams1D,
    GaussianParamsMV,
    MVEmissionPrior,
    ScalarEmissionPrior,
    chol_jitter,
    emission_loglik_matrix,
    gamma_duration_conditional,
    inv_gamma_variance_conditional,
    inv_wishart_scale_conditional,
    mvn_mean_conditional,
    normal_mean_conditional,
    sample_dirichlet,
    sample_duration_prior,
    sample_emission_prior,
    sample_inv_gamma,
    sample_inv_wishart,
    sample_mvn,
    shifted_poisson_log_sf,
    shifted_poisson_logpmf,
)
from .merge import merge_redundant_states, merged_segments
from .messages import backward_messages, sample_segments
from .validation import as_int_vector

_TINY = np.finfo(np.float64).tiny

# Convergence is evaluated every this many retained samples.
CHECK_EVERY = 100
# A state is monitored when it occupies at least this fraction of timesteps.
MONITOR_OCCUPANCY = 0.01
# Minimum retained samples (per scalar series) before split-chain R-hat runs.
MIN_MONITOR_SAMPLES = 8


@dataclass
class SamplerState:
    """Markov state carried between iterations: parameters, labels, damped weights."""

    model: ModelState
    seg: SegmentSequence
    beta_tilde: np.ndarray


@dataclass
class ChainSample:
    """Thinned post-burn-in snapshot of the sampler."""

    iteration: int
    theta: list
    omega: np.ndarray
    pi: np.ndarray
    labels: np.ndarray
    loglik: float
    monitor_means: np.ndarray


@dataclass
class PosteriorChain:
    samples: list[ChainSample] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    gr_values: dict[str, float] = field(default_factory=dict)


@dataclass
class PointEstimate:
    """Posterior point estimate over the states that survive in the label mode."""

    surviving_states: np.ndarray
    theta_hat: list
    omega_hat: np.ndarray
    pi_hat: np.ndarray
    x_hat: np.ndarray

    @property
    def n_states(self) -> int:
        return self.surviving_states.size


# ---------------------------------------------------------------------------
# parameter resampling


def resample_emission_params(y, labels, prior, theta_prev, k_max, rng):
    """Semi-conjugate draws for every state; dataless states redraw the prior.

    States with data get one half-sweep of mean | scale followed by
    scale | mean, conditioning the first on the previous iteration's scale.
    """
    values = y.values if isinstance(y, ObservationSequence) else np.asarray(y, dtype=np.float64)
    labels = as_int_vector(labels, "labels")
    theta = []
    for i in range(k_max):
        data = values[labels == i]
        if data.shape[0] == 0:
            theta.append(sample_emission_prior(prior, rng))
            continue
        if isinstance(prior, ScalarEmissionPrior):
            col = data[:, 0]
            mu_n, s_n = normal_mean_conditional(
                col, theta_prev[i].variance, prior.mu0, prior.sigma0_sq
            )
            mean_new = float(rng.normal(mu_n, math.sqrt(s_n)))
            a_n, b_n = inv_gamma_variance_conditional(col, mean_new, prior.a0, prior.b0)
            theta.append(GaussianParams1D(mean=mean_new, variance=sample_inv_gamma(a_n, b_n, rng)))
        else:
            mu_n, sigma_n = mvn_mean_conditional(
                data, chol_jitter(theta_prev[i].covariance), prior.mu0, prior.sigma0
            )
            mean_new = sample_mvn(mu_n, sigma_n, rng)
            nu_n, psi_n = inv_wishart_scale_conditional(data, mean_new, prior.nu0, prior.psi0)
            cov_new = sample_inv_wishart(nu_n, chol_jitter(psi_n), rng)
            theta.append(GaussianParamsMV(mean=mean_new, covariance=chol_jitter(cov_new)))
    return theta


def resample_duration_params(seg: SegmentSequence, prior, k_max, rng) -> np.ndarray:
    """Gamma-posterior draws of each state's duration rate.

    The final segment is excluded: its duration is right-censored by the
    horizon and would bias the rate downward.
    """
    omega = np.empty(k_max)
    labels = seg.labels[:-1]
    durations = seg.durations[:-1]
    for i in range(k_max):
        durs = durations[labels == i]
        if durs.size == 0:
            omega[i] = sample_duration_prior(prior, rng).rate
        else:
            shape_n, rate_n = gamma_duration_conditional(durs, prior.shape, prior.scale)
            omega[i] = rng.gamma(shape_n, 1.0 / rate_n)
    return omega


def crt_table_counts(n: np.ndarray, concentration: np.ndarray, rng) -> np.ndarray:
    """Auxiliary table counts: customer c joins a new table w.p. a / (a + c)."""
    m = np.zeros_like(n)
    rows, cols = np.nonzero(n)
    for i, j in zip(rows, cols):
        a = concentration[j]
        c = np.arange(n[i, j])
        m[i, j] = np.count_nonzero(rng.random(n[i, j]) * (a + c) < a)
    return m


def resample_beta_and_transitions(seg: SegmentSequence, beta_tilde, hyper: Hyperparams, rng):
    """Weak-limit HDP update of the shared weights and the transition rows.

    Table counts use the previous iteration's (possibly damped) weights;
    the fresh weights then parameterize each row's Dirichlet posterior.
    """
    K = hyper.k_max
    beta_tilde = np.asarray(beta_tilde, dtype=np.float64)
    n = transition_counts(seg, K)
    m = crt_table_counts(n, hyper.alpha * beta_tilde, rng)
    beta = sample_dirichlet(hyper.gamma / K + m.sum(axis=0), rng)
    conc = np.maximum(hyper.alpha * beta, _TINY)
    pi = np.vstack([sample_dirichlet(conc + n[i], rng) for i in range(K)])
    return beta, pi


def apply_identifiability(model: ModelState, labels):
    """Relabel states so emission means are increasing.

    Multivariate means compare lexicographically; ties fall back to the
    duration rate. The permutation is applied to every parameter block and
    to the labels, leaving the joint density unchanged.
    """
    means = model.means()
    keys = (model.omega,) + tuple(means[:, c] for c in range(means.shape[1] - 1, -1, -1))
    perm = np.lexsort(keys)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    relabeled = ModelState(
        beta=model.beta[perm],
        pi=model.pi[np.ix_(perm, perm)],
        theta=[model.theta[i] for i in perm],
        omega=model.omega[perm],
    )
    labels = as_int_vector(labels, "labels")
    return relabeled, inverse[labels]


# ---------------------------------------------------------------------------
# log densities for monitoring and invariance checks


def data_joint_loglik(y: ObservationSequence, seg: SegmentSequence, model: ModelState) -> float:
    """log p(x, y | model): uniform initial state, semi-Markov transitions,
    shifted-Poisson durations with a right-censored final segment, Gaussian
    emissions."""
    with np.errstate(divide="ignore"):
        log_pibar = np.log(bar_transitions(model.pi))
    ll = -math.log(model.K)
    ll += float(log_pibar[seg.labels[:-1], seg.labels[1:]].sum())
    if seg.n_segments > 1:
        ll += float(
            np.sum(
                poisson.logpmf(seg.durations[:-1] - 1, model.omega[seg.labels[:-1]])
            )
        )
    ll += shifted_poisson_log_sf(int(seg.durations[-1]) - 1, model.omega[seg.labels[-1]])
    loglik = emission_loglik_matrix(y.values, model.theta)
    ll += float(loglik[np.arange(y.T), seg.to_label_vector()].sum())
    return ll


def _dirichlet_logpdf(x, conc) -> float:
    x = np.asarray(x, dtype=np.float64)
    conc = np.asarray(conc, dtype=np.float64)
    return float(
        gammaln(conc.sum()) - gammaln(conc).sum() + ((conc - 1.0) * np.log(x)).sum()
    )


def joint_log_density(model: ModelState, seg: SegmentSequence, y: ObservationSequence,
                      hyper: Hyperparams) -> float:
    """Full joint log density of (parameters, labels, data) under the priors."""
    K = hyper.k_max
    ll = _dirichlet_logpdf(model.beta, np.full(K, hyper.gamma / K))
    conc = hyper.alpha * model.beta
    for i in range(K):
        ll += _dirichlet_logpdf(model.pi[i], conc)
    prior = hyper.emission_prior
    for theta in model.theta:
        if isinstance(prior, ScalarEmissionPrior):
            ll += float(
                -0.5 * (math.log(2 * math.pi * prior.sigma0_sq)
                        + (theta.mean - prior.mu0) ** 2 / prior.sigma0_sq)
            )
            ll += float(
                prior.a0 * math.log(prior.b0) - gammaln(prior.a0)
                - (prior.a0 + 1) * math.log(theta.variance) - prior.b0 / theta.variance
            )
        else:
            ll += float(multivariate_normal.logpdf(theta.mean, mean=prior.mu0, cov=prior.sigma0))
            ll += float(invwishart.logpdf(theta.covariance, df=prior.nu0, scale=prior.psi0))
    dp = hyper.duration_prior
    ll += float(
        np.sum(
            (dp.shape - 1) * np.log(model.omega)
            - model.omega / dp.scale
            - gammaln(dp.shape)
            - dp.shape * math.log(dp.scale)
        )
    )
    return ll + data_joint_loglik(y, seg, model)


# ---------------------------------------------------------------------------
# iteration and chain driver


def init_state(y: ObservationSequence, hyper: Hyperparams, rng) -> SamplerState:
    """Draw the initial sampler state from the priors.

    The initial segmentation is generated from the prior semi-Markov process
    and truncated to the data horizon.
    """
    K = hyper.k_max
    beta = sample_dirichlet(np.full(K, hyper.gamma / K), rng)
    conc = np.maximum(hyper.alpha * beta, _TINY)
    pi = np.vstack([sample_dirichlet(conc, rng) for _ in range(K)])
    theta = [sample_emission_prior(hyper.emission_prior, rng) for _ in range(K)]
    omega = np.array([sample_duration_prior(hyper.duration_prior, rng).rate for _ in range(K)])

    pibar = bar_transitions(pi)
    labels, durations = [], []
    state = int(rng.integers(K))
    remaining = y.T
    while remaining > 0:
        d = min(1 + int(rng.poisson(omega[state])), remaining)
        labels.append(state)
        durations.append(d)
        remaining -= d
        if remaining > 0:
            state = int(rng.choice(K, p=pibar[state]))
    seg = SegmentSequence(labels=np.array(labels), durations=np.array(durations))
    model = ModelState(beta=beta, pi=pi, theta=theta, omega=omega)
    return SamplerState(model=model, seg=seg, beta_tilde=beta.copy())


def gibbs_iteration(state: SamplerState, y: ObservationSequence, hyper: Hyperparams,
                    rng) -> SamplerState:
    """One full sweep of the block sampler; the merge step runs iff robust."""
    beta, pi = resample_beta_and_transitions(state.seg, state.beta_tilde, hyper, rng)
    labels_prev = state.seg.to_label_vector()
    theta = resample_emission_params(
        y, labels_prev, hyper.emission_prior, state.model.theta, hyper.k_max, rng
    )
    omega = resample_duration_params(state.seg, hyper.duration_prior, hyper.k_max, rng)
    model = ModelState(beta=beta, pi=pi, theta=theta, omega=omega)
    model, _ = apply_identifiability(model, labels_prev)

    msgs = backward_messages(y, model, d_max=hyper.d_max)
    seg = sample_segments(msgs, rng)

    if hyper.robust:
        outcome = merge_redundant_states(
            seg.to_label_vector(), model.beta, model.pi, model.theta,
            hyper.tau, rng, damping=hyper.merge_damping,
        )
        seg = merged_segments(outcome)
        beta_tilde = outcome.beta_tilde
    else:
        beta_tilde = model.beta
    return SamplerState(model=model, seg=seg, beta_tilde=beta_tilde)


def _monitor_means(model: ModelState, labels: np.ndarray) -> np.ndarray:
    """(k, p) emission means of states occupying >= 1% of timesteps.

    Rows are in state-index order, which the identifiability constraint
    keeps sorted by mean, so row r is the r-th smallest monitored mean.
    """
    counts = np.bincount(labels, minlength=model.K)
    qualifying = np.flatnonzero(counts >= MONITOR_OCCUPANCY * labels.size)
    if qualifying.size == 0:
        return np.empty((0, model.means().shape[1]))
    return np.vstack([model.theta[i].mean_vector() for i in qualifying])


def gelman_rubin(chain_values) -> float:
    """Potential scale reduction factor over two or more scalar series."""
    arr = np.asarray(chain_values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 4:
        raise ValueError("need >= 2 series of length >= 4")
    n = arr.shape[1]
    W = float(np.mean(np.var(arr, axis=1, ddof=1)))
    B_over_n = float(np.var(np.mean(arr, axis=1), ddof=1))
    if W == 0.0:
        return 1.0 if B_over_n == 0.0 else float("inf")
    return float(np.sqrt(((n - 1) / n * W + B_over_n) / W))


def _split_rhat(series: np.ndarray) -> float:
    h = series.size // 2
    return gelman_rubin(np.vstack([series[:h], series[-h:]]))


def convergence_check(samples: list[ChainSample], threshold: float):
    """Split-chain R-hat over the monitored scalars.

    The series for rank r collects the r-th smallest monitored mean from
    every retained sample having at least r monitored states, for every rank
    present in the most recent sample. Each rank must span at least half the
    retained history (and MIN_MONITOR_SAMPLES), so a chain whose monitored
    state count is still churning cannot pass.
    """
    gr: dict[str, float] = {}
    if len(samples) < MIN_MONITOR_SAMPLES:
        return False, gr
    gr["loglik"] = _split_rhat(np.array([s.loglik for s in samples]))
    k_star = samples[-1].monitor_means.shape[0]
    if k_star == 0:
        return False, gr
    p = samples[-1].monitor_means.shape[1]
    min_span = max(MIN_MONITOR_SAMPLES, len(samples) // 2)
    for r in range(k_star):
        rows = np.array([s.monitor_means[r] for s in samples if s.monitor_means.shape[0] > r])
        if rows.shape[0] < min_span:
            return False, gr
        for c in range(p):
            name = f"mean_{r + 1}" if p == 1 else f"mean_{r + 1}_{c + 1}"
            gr[name] = _split_rhat(rows[:, c])
    converged = all(v < threshold for v in gr.values())
    return converged, gr


def run_chain(y: ObservationSequence, hyper: Hyperparams, rng):
    """Run the sampler to convergence or ``max_iter``.

    Returns the thinned post-burn-in chain and a point estimate computed
    from the trailing window, or ``None`` when no samples were retained.
    """
    if y.T < 2:
        raise ValueError("need at least 2 timesteps")
    _check_prior_dim(hyper, y.p)
    state = init_state(y, hyper, rng)
    chain = PosteriorChain()
    for it in range(1, hyper.max_iter + 1):
        state = gibbs_iteration(state, y, hyper, rng)
        chain.iterations_run = it
        if it <= hyper.burn_in or (it - hyper.burn_in) % hyper.thin != 0:
            continue
        labels = state.seg.to_label_vector()
        chain.samples.append(
            ChainSample(
                iteration=it,
                theta=list(state.model.theta),
                omega=state.model.omega.copy(),
                pi=state.model.pi.copy(),
                labels=labels,
                loglik=data_joint_loglik(y, state.seg, state.model),
                monitor_means=_monitor_means(state.model, labels),
            )
        )
        if len(chain.samples) % CHECK_EVERY == 0:
            converged, gr = convergence_check(chain.samples, hyper.gr_threshold)
            chain.gr_values = gr
            if converged:
                chain.converged = True
                break
    estimate = estimate_posterior(chain, hyper.estimate_window_frac) if chain.samples else None
    return chain, estimate


def _check_prior_dim(hyper: Hyperparams, p: int) -> None:
    prior = hyper.emission_prior
    if isinstance(prior, ScalarEmissionPrior):
        if p != 1:
            raise ValueError("scalar emission prior requires 1-channel data")
    elif prior.dim != p:
        raise ValueError(f"emission prior dimension {prior.dim} does not match data ({p})")


def estimate_posterior(chain: PosteriorChain, window_frac: float = 0.2) -> PointEstimate:
    """Point estimate from the trailing window of retained samples.

    Parameters are averaged; the label vector takes the per-timestep mode.
    """
    if not chain.samples:
        raise ValueError("cannot estimate from an empty chain")
    if not 0.0 < window_frac <= 1.0:
        raise ValueError("window_frac must be in (0, 1]")
    w = max(1, math.ceil(window_frac * len(chain.samples)))
    window = chain.samples[-w:]

    label_stack = np.vstack([s.labels for s in window])
    x_hat = mode(label_stack, axis=0, keepdims=False).mode.astype(np.int64)
    surviving = np.unique(x_hat)

    theta_hat = []
    for i in surviving:
        thetas = [s.theta[i] for s in window]
        if isinstance(thetas[0], GaussianParams1D):
            theta_hat.append(
                GaussianParams1D(
                    mean=float(np.mean([t.mean for t in thetas])),
                    variance=float(np.mean([t.variance for t in thetas])),
                )
            )
        else:
            theta_hat.append(
                GaussianParamsMV(
                    mean=np.mean([t.mean for t in thetas], axis=0),
                    covariance=np.mean([t.covariance for t in thetas], axis=0),
                )
            )
    omega_hat = np.array([np.mean([s.omega[i] for s in window]) for i in surviving])

    pi_mean = np.mean([s.pi for s in window], axis=0)
    pibar = bar_transitions(pi_mean)[np.ix_(surviving, surviving)]
    row_sums = pibar.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        pi_hat = np.where(row_sums > 0, pibar / np.where(row_sums > 0, row_sums, 1.0), 0.0)

    return PointEstimate(
        surviving_states=surviving,
        theta_hat=theta_hat,
        omega_hat=omega_hat,
        pi_hat=pi_hat,
        x_hat=x_hat,
    )
