"""Synthetic ground truth, segmentation metrics, and the replication study."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .core import Hyperparams, ObservationSequence, SegmentSequence
from .gibbs import run_chain
from .validation import check_row_stochastic


@dataclass(frozen=True)
class GroundTruth:
    """Scalar-Gaussian ground truth for sequence generation."""

    means: np.ndarray
    variances: np.ndarray
    rates: np.ndarray
    transitions: np.ndarray
    n_segments: int = 30

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        rates = np.asarray(self.rates, dtype=np.float64)
        transitions = check_row_stochastic(self.transitions, name="transitions")
        K = means.size
        if variances.size != K or rates.size != K or transitions.shape != (K, K):
            raise ValueError("ground-truth parameter sizes are inconsistent")
        if np.any(np.diag(transitions) != 0.0):
            raise ValueError("ground-truth transition rows must have zero diagonal")
        if np.any(variances <= 0) or np.any(rates <= 0):
            raise ValueError("variances and rates must be positive")
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "transitions", transitions)

    @property
    def n_states(self) -> int:
        return self.means.size


def default_truth(n_segments: int = 30) -> GroundTruth:
    """Three well-separated states with mean duration near 7 steps."""
    return GroundTruth(
        means=np.array([4.0, 0.0, -4.0]),
        variances=np.ones(3),
        rates=np.full(3, 6.0),
        transitions=np.array(
            [
                [0.0, 0.3, 0.7],
                [0.8, 0.0, 0.2],
                [0.4, 0.6, 0.0],
            ]
        ),
        n_segments=n_segments,
    )


def generate_sequence(truth: GroundTruth, rng: np.random.Generator):
    """Sample (observations, segments) from the ground truth.

    The initial state is uniform; durations are zero-truncated Poisson
    (zero draws are redrawn) so every segment has length >= 1.
    """
    labels = np.empty(truth.n_segments, dtype=np.int64)
    durations = np.empty(truth.n_segments, dtype=np.int64)
    state = int(rng.integers(truth.n_states))
    chunks = []
    for s in range(truth.n_segments):
        d = 0
        while d == 0:
            d = int(rng.poisson(truth.rates[state]))
        labels[s] = state
        durations[s] = d
        chunks.append(rng.normal(truth.means[state], np.sqrt(truth.variances[state]), size=d))
        if s + 1 < truth.n_segments:
            state = int(rng.choice(truth.n_states, p=truth.transitions[state]))
    seg = SegmentSequence(labels=labels, durations=durations)
    y = ObservationSequence(values=np.concatenate(chunks)[:, None])
    return y, seg


def change_point_set(seg: SegmentSequence) -> np.ndarray:
    """Sorted timesteps t where the label changes between t and t+1 (1-based t)."""
    return np.cumsum(seg.durations)[:-1]


def cp_metrics(true_cps, est_cps, window: int = 1):
    """(missed, extra) under greedy one-to-one matching within +/- window.

    Estimated change points are visited in increasing time order and each
    claims the closest unmatched true change point within the window
    (earlier on ties).
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    true_cps = np.sort(np.asarray(true_cps, dtype=np.int64))
    est_cps = np.sort(np.asarray(est_cps, dtype=np.int64))
    unmatched = list(true_cps)
    matched = 0
    for cp in est_cps:
        best = None
        for idx, t in enumerate(unmatched):
            dist = abs(int(cp) - int(t))
            if dist <= window and (best is None or dist < best[1]):
                best = (idx, dist)
        if best is not None:
            unmatched.pop(best[0])
            matched += 1
    return len(unmatched), int(est_cps.size - matched)


def count_states(labels) -> int:
    return int(np.unique(np.asarray(labels)).size)


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    model: str  # "baseline" or "robust"
    converged: bool
    iterations: int
    n_states: int
    missed_cp: int
    extra_cp: int
    # posterior point estimates of the surviving states, in label order
    state_means: tuple[float, ...] = ()
    duration_rates: tuple[float, ...] = ()


@dataclass(frozen=True)
class ModelSummary:
    n_converged: int
    mean_gibbs_iterations: float
    mean_missed_cp: float
    mean_extra_cp: float
    state_count_histogram: dict[int, int]


@dataclass(frozen=True)
class ReplicationSummary:
    """Converged-only means and state-count histograms per model."""

    n_reps: int
    baseline: ModelSummary
    robust: ModelSummary


def study_hyperparams(
    base: Hyperparams | None = None,
    max_iter: int = 3000,
    tau: float = 1.5,
) -> tuple[Hyperparams, Hyperparams]:
    """(baseline, robust) pair sharing priors, differing only in the merge step."""
    base = base if base is not None else Hyperparams(max_iter=max_iter, tau=tau)
    return replace(base, robust=False), replace(base, robust=True)


def _run_replication(rep, truth, hyper_baseline, hyper_robust, master_seed, cp_window):
    rep_ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep,))
    data_seed, fit_seed = rep_ss.spawn(2)
    y, true_seg = generate_sequence(truth, np.random.default_rng(data_seed))
    true_cps = change_point_set(true_seg)

    records = []
    for name, hyper in (("baseline", hyper_baseline), ("robust", hyper_robust)):
        chain, estimate = run_chain(y, hyper, np.random.default_rng(fit_seed))
        if estimate is None:
            records.append(
                ReplicationRecord(
                    rep=rep, model=name, converged=False,
                    iterations=chain.iterations_run, n_states=0,
                    missed_cp=len(true_cps), extra_cp=0,
                )
            )
            continue
        est_seg = SegmentSequence.from_label_vector(estimate.x_hat)
        missed, extra = cp_metrics(true_cps, change_point_set(est_seg), window=cp_window)
        records.append(
            ReplicationRecord(
                rep=rep,
                model=name,
                converged=chain.converged,
                iterations=chain.iterations_run,
                n_states=estimate.n_states,
                missed_cp=missed,
                extra_cp=extra,
                state_means=tuple(float(t.mean) for t in estimate.theta_hat),
                duration_rates=tuple(float(r) for r in estimate.omega_hat),
            )
        )
    return records


def summarize_records(records: list[ReplicationRecord]) -> ReplicationSummary:
    def summarize(name):
        rows = [r for r in records if r.model == name]
        conv = [r for r in rows if r.converged]
        hist: dict[int, int] = {}
        for r in conv:
            hist[r.n_states] = hist.get(r.n_states, 0) + 1
        if conv:
            return ModelSummary(
                n_converged=len(conv),
                mean_gibbs_iterations=float(np.mean([r.iterations for r in conv])),
                mean_missed_cp=float(np.mean([r.missed_cp for r in conv])),
                mean_extra_cp=float(np.mean([r.extra_cp for r in conv])),
                state_count_histogram=hist,
            )
        return ModelSummary(0, float("nan"), float("nan"), float("nan"), hist)

    n_reps = len({r.rep for r in records})
    return ReplicationSummary(n_reps=n_reps, baseline=summarize("baseline"), robust=summarize("robust"))


def run_replication_study(
    hyper_baseline: Hyperparams,
    hyper_robust: Hyperparams,
    truth: GroundTruth,
    n_reps: int,
    seed: int = 0,
    cp_window: int = 1,
    n_jobs: int = 1,
):
    """Fit both models to ``n_reps`` independently generated datasets.

    Both models see the same data and the same per-replication seed, so the
    comparison is paired. Returns (summary, records) with records ordered by
    replication regardless of scheduling.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_run_replication)(rep, truth, hyper_baseline, hyper_robust, seed, cp_window)
        for rep in range(n_reps)
    )
    records = [r for batch in batches for r in batch]
    return summarize_records(records), records
