"""Core domain types: observation sequences, segmentations, and model state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    DurationPrior,
    EmissionParams,
    EmissionPrior,
    ScalarEmissionPrior,
)
from .validation import (
    as_float_matrix,
    as_int_vector,
    check_positive,
    check_row_stochastic,
    check_simplex,
)


@dataclass(frozen=True)
class ObservationSequence:
    """A T x p matrix of signal samples at uniform time steps."""

    values: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", as_float_matrix(self.values, "values"))
        check_positive(self.sample_rate_hz, "sample_rate_hz")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SegmentSequence:
    """Ordered (label, duration) segments; adjacent segments never share a label."""

    labels: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        labels = as_int_vector(self.labels, "labels")
        durations = as_int_vector(self.durations, "durations")
        if labels.size != durations.size or labels.size == 0:
            raise ValueError("labels and durations must be non-empty and equal length")
        if np.any(durations < 1):
            raise ValueError("segment durations must be >= 1")
        if np.any(labels < 0):
            raise ValueError("segment labels must be non-negative")
        if np.any(labels[1:] == labels[:-1]):
            raise ValueError("adjacent segments must not share a label")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "durations", durations)

    @property
    def n_segments(self) -> int:
        return self.labels.size

    @property
    def n_timesteps(self) -> int:
        return int(self.durations.sum())

    def starts(self) -> np.ndarray:
        """0-based start index of each segment."""
        return np.concatenate(([0], np.cumsum(self.durations)[:-1]))

    def to_label_vector(self) -> np.ndarray:
        """Expand to per-timestep labels of length sum(durations)."""
        return np.repeat(self.labels, self.durations)

    @classmethod
    def from_label_vector(cls, x) -> "SegmentSequence":
        """Collapse maximal runs of equal labels into segments."""
        x = as_int_vector(x, "label vector")
        if x.size == 0:
            raise ValueError("label vector must be non-empty")
        boundaries = np.flatnonzero(x[1:] != x[:-1]) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [x.size]))
        return cls(labels=x[starts], durations=ends - starts)


def to_label_vector(seg: SegmentSequence) -> np.ndarray:
    return seg.to_label_vector()


def from_label_vector(x) -> SegmentSequence:
    return SegmentSequence.from_label_vector(x)


def bar_transitions(pi: np.ndarray) -> np.ndarray:
    """Remove self-transitions and renormalize each row.

    ``pibar[i, j] = pi[i, j] / (1 - pi[i, i])`` off the diagonal, zero on it.
    Rows with a unit diagonal cannot be renormalized.
    """
    pi = check_row_stochastic(pi, tol=1e-9, name="pi")
    diag = np.diag(pi)
    if np.any(diag >= 1.0):
        raise ValueError("cannot remove self-transitions from a row with pi[i, i] = 1")
    out = pi / (1.0 - diag)[:, None]
    np.fill_diagonal(out, 0.0)
    return out


def transition_counts(seg: SegmentSequence, K: int) -> np.ndarray:
    """K x K counts of consecutive segment-label pairs; diagonal is zero."""
    labels = seg.labels
    if labels.size and labels.max() >= K:
        raise ValueError(f"segment labels must be < {K}")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (labels[:-1], labels[1:]), 1)
    return counts


@dataclass
class ModelState:
    """Full parameter state of the sampler at one iteration."""

    beta: np.ndarray
    pi: np.ndarray
    theta: list[EmissionParams]
    omega: np.ndarray  # shifted-Poisson rate per state

    def __post_init__(self):
        self.beta = check_simplex(self.beta, tol=1e-9, name="beta")
        self.pi = check_row_stochastic(self.pi, tol=1e-9, name="pi")
        self.omega = np.asarray(self.omega, dtype=np.float64)
        K = self.beta.size
        if self.pi.shape != (K, K) or len(self.theta) != K or self.omega.size != K:
            raise ValueError("beta, pi, theta, omega sizes are inconsistent")
        if np.any(self.omega <= 0):
            raise ValueError("duration rates must be positive")

    @property
    def K(self) -> int:
        return self.beta.size

    def means(self) -> np.ndarray:
        """(K, p) matrix of emission means."""
        return np.vstack([t.mean_vector() for t in self.theta])


@dataclass(frozen=True)
class Hyperparams:
    """Priors, concentrations, merge threshold, and the run protocol."""

    gamma: float = 6.0
    alpha: float = 6.0
    emission_prior: EmissionPrior = field(default_factory=ScalarEmissionPrior)
    duration_prior: DurationPrior = field(default_factory=DurationPrior)
    tau: float = 1.5
    k_max: int = 20
    d_max: int | None = None  # None means the full horizon
    burn_in: int = 100
    thin: int = 5
    max_iter: int = 10000
    gr_threshold: float = 1.1
    estimate_window_frac: float = 0.2
    robust: bool = True
    merge_damping: float = 0.1

    def __post_init__(self):
        check_positive(self.gamma, "gamma")
        check_positive(self.alpha, "alpha")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.d_max is not None and self.d_max < 1:
            raise ValueError("d_max must be >= 1 or None")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if not 0.0 < self.estimate_window_frac <= 1.0:
            raise ValueError("estimate_window_frac must be in (0, 1]")
        if not 0.0 < self.merge_damping <= 1.0:
            raise ValueError("merge_damping must be in (0, 1]")
