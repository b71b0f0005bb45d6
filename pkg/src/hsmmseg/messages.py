"""Explicit-duration backwards message passing and block segment sampling.

All accumulation is in log space; per-state emission log likelihoods are
cumulative-summed once so each duration window costs a subtraction. The
messages are indexed t = 0..T, with ``logB[T] = 0``. A survival-function
lump accounts for segments whose duration runs past ``min(d_max, T - t)``:
at the horizon it is the exact right-censoring term, and under a truncated
``d_max`` it is the truncation approximation applied at every t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelState, ObservationSequence, SegmentSequence, bar_transitions
from .distributions import (
    duration_logpmf_table,
    duration_logsf_table,
    emission_loglik_matrix,
    sample_categorical_log,
)


class DegeneratePosteriorError(RuntimeError):
    """Raised when numerical underflow leaves no admissible state or duration."""


def _lse_rows(arr: np.ndarray) -> np.ndarray:
    """Log-sum-exp along axis 0, tolerating all-(-inf) columns.

    Hand-rolled because this sits on the sampler's hot path, where the
    generic scipy implementation's per-call overhead dominates the runtime.
    """
    mx = arr.max(axis=0)
    finite = mx > -np.inf
    if finite.all():
        return mx + np.log(np.exp(arr - mx).sum(axis=0))
    out = np.full(arr.shape[1], -np.inf)
    idx = np.flatnonzero(finite)
    sub = arr[:, idx]
    out[idx] = mx[idx] + np.log(np.exp(sub - mx[idx]).sum(axis=0))
    return out


def logsumexp_1d(arr) -> float:
    arr = np.asarray(arr, dtype=np.float64)
    mx = arr.max()
    if mx == -np.inf:
        return -np.inf
    return float(mx + np.log(np.exp(arr - mx).sum()))


@dataclass
class BackwardMessages:
    """Backwards messages plus the tables needed to block-sample segments."""

    logB: np.ndarray  # (T + 1, A)
    logBstar: np.ndarray  # (T + 1, A)
    active: np.ndarray  # state indices the columns refer to
    d_max: int
    log_pibar: np.ndarray  # (A, A), restricted to active states
    log_dur_pmf: np.ndarray  # (d_max, A)
    log_dur_sf: np.ndarray  # (d_max + 1, A)
    loglik_cumsum: np.ndarray  # (T + 1, A) cumulative emission log likelihoods

    @property
    def T(self) -> int:
        return self.logB.shape[0] - 1


def backward_messages(
    y: ObservationSequence,
    model: ModelState,
    active=None,
    d_max: int | None = None,
) -> BackwardMessages:
    """Compute logB and logB* for every t = 0..T over the active states.

    ``active`` defaults to all states. Self-transitions are removed from the
    full transition matrix before restricting to the active set, so inactive
    states still absorb their share of row normalization.
    """
    T = y.T
    if active is None:
        active = np.arange(model.K)
    else:
        active = np.asarray(active, dtype=np.int64)
    if active.size == 0:
        raise ValueError("active state set must be non-empty")

    pibar = bar_transitions(model.pi)[np.ix_(active, active)]
    with np.errstate(divide="ignore"):
        log_pibar = np.log(pibar)

    d_max_eff = T if d_max is None else min(int(d_max), T)
    if d_max_eff < 1:
        raise ValueError("d_max must be >= 1")

    rates = model.omega[active]
    thetas = [model.theta[i] for i in active]
    loglik = emission_loglik_matrix(y.values, thetas)
    csum = np.vstack([np.zeros(active.size), np.cumsum(loglik, axis=0)])
    log_dur_pmf = duration_logpmf_table(rates, d_max_eff)
    log_dur_sf = duration_logsf_table(rates, d_max_eff)

    A = active.size
    logB = np.zeros((T + 1, A))
    logBstar = np.zeros((T + 1, A))
    # The cumulative emission sum at the segment start factors out of every
    # duration candidate, so the recursion reduces rows of
    # logB[t+d] + csum[t+d] + log pmf(d) without per-row subtraction. All of
    # those rows are finite (positive-rate Poisson pmf and sf never vanish),
    # so the inner log-sum-exp can skip -inf handling; the transition
    # reduction runs in linear space, scaled by the row maximum, because
    # pibar may legitimately contain zeros.
    pibar_lin = np.exp(log_pibar)
    logB_plus_csum = np.empty((T + 1, A))
    logB_plus_csum[T] = csum[T]
    lump_rows = log_dur_sf + csum[T]  # (d_max + 1, A)
    buf = np.empty((d_max_eff + 1, A))
    with np.errstate(divide="ignore"):
        for t in range(T - 1, -1, -1):
            m = min(d_max_eff, T - t)
            # rows: durations 1..m, then the censoring/truncation lump.
            np.add(logB_plus_csum[t + 1 : t + m + 1], log_dur_pmf[:m], out=buf[:m])
            buf[m] = lump_rows[m]
            rows = buf[: m + 1]
            mx = rows.max(axis=0)
            bstar = mx + np.log(np.exp(rows - mx).sum(axis=0)) - csum[t]
            logBstar[t] = bstar
            scale = bstar.max()
            if scale == -np.inf:
                logB[t] = -np.inf
            else:
                logB[t] = np.log(pibar_lin @ np.exp(bstar - scale)) + scale
            logB_plus_csum[t] = logB[t] + csum[t]

    return BackwardMessages(
        logB=logB,
        logBstar=logBstar,
        active=active,
        d_max=d_max_eff,
        log_pibar=log_pibar,
        log_dur_pmf=log_dur_pmf,
        log_dur_sf=log_dur_sf,
        loglik_cumsum=csum,
    )


def _initial_log_weights(msgs: BackwardMessages, initial=None) -> np.ndarray:
    if initial is None:
        log_init = np.full(msgs.active.size, -np.log(msgs.active.size))
    else:
        initial = np.asarray(initial, dtype=np.float64)
        if initial.size != msgs.active.size:
            raise ValueError("initial distribution size does not match active states")
        with np.errstate(divide="ignore"):
            log_init = np.log(initial)
    return log_init + msgs.logBstar[0]


def initial_state_marginal(msgs: BackwardMessages, initial=None) -> np.ndarray:
    """Posterior p(x_1 = k | y) over the active states."""
    logw = _initial_log_weights(msgs, initial)
    w = np.exp(logw - logsumexp_1d(logw))
    return w / w.sum()


def total_log_likelihood(msgs: BackwardMessages, initial=None) -> float:
    """log p(y) = log sum_k p(x_1 = k) B*_0(k)."""
    return logsumexp_1d(_initial_log_weights(msgs, initial))


def sample_segments(
    msgs: BackwardMessages,
    rng: np.random.Generator,
    initial=None,
) -> SegmentSequence:
    """Block-sample a full segment sequence from the message posterior.

    The final segment is right-censored: when the lump term is drawn, the
    segment simply fills the remaining horizon.
    """
    T = msgs.T
    csum = msgs.loglik_cumsum
    labels = []
    durations = []

    logw0 = _initial_log_weights(msgs, initial)
    try:
        pos = sample_categorical_log(logw0, rng)
    except ValueError:
        raise DegeneratePosteriorError("initial-state posterior has no mass") from None

    t = 0
    while t < T:
        m = min(msgs.d_max, T - t)
        logw = np.empty(m + 1)
        logw[:m] = (
            msgs.log_dur_pmf[:m, pos]
            + (csum[t + 1 : t + m + 1, pos] - csum[t, pos])
            + msgs.logB[t + 1 : t + m + 1, pos]
        )
        logw[m] = msgs.log_dur_sf[m, pos] + (csum[T, pos] - csum[t, pos])
        try:
            pick = sample_categorical_log(logw, rng)
        except ValueError:
            raise DegeneratePosteriorError(f"duration posterior at t={t} has no mass") from None
        d = T - t if pick == m else pick + 1
        labels.append(int(msgs.active[pos]))
        durations.append(d)
        t += d
        if t >= T:
            break
        try:
            pos = sample_categorical_log(msgs.log_pibar[pos] + msgs.logBstar[t], rng)
        except ValueError:
            raise DegeneratePosteriorError(f"state posterior at t={t} has no mass") from None

    return SegmentSequence(labels=np.array(labels), durations=np.array(durations))
