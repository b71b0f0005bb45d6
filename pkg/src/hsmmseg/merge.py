"""Redundant-state detection and merging.

Two states are redundant when the l2 distance between their emission means
is at most a threshold tau. Each merge sweep visits the in-use states in a
random order; the anchor and every unprocessed state within tau of it form a
group, a single survivor is drawn with probability proportional to the
transition mass flowing in from non-similar states, the losers' base weights
are damped, and the losers' timesteps are relabeled to the survivor.

Group formation is anchor-relative and therefore not transitive: states that
survive one sweep are not guaranteed to be pairwise farther than tau apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SegmentSequence
from .distributions import EmissionParams, GaussianParams1D


@dataclass(frozen=True)
class MergeGroup:
    anchor: int
    members: tuple[int, ...]
    survivor: int


@dataclass
class MergeOutcome:
    """Result of one merge sweep over the in-use states."""

    labels_tilde: np.ndarray
    beta_tilde: np.ndarray  # damped and renormalized simplex
    beta_damped: np.ndarray  # damped weights before renormalization
    groups: list[MergeGroup]


def divergence(theta_i: EmissionParams, theta_j: EmissionParams, include_std: bool = False) -> float:
    """l2 distance between emission parameter vectors (means by default).

    With ``include_std`` the per-dimension standard deviations are appended
    to the compared vectors.
    """
    if isinstance(theta_i, GaussianParams1D) != isinstance(theta_j, GaussianParams1D):
        raise ValueError("cannot compare emission parameters of different families")
    a = theta_i.mean_vector()
    b = theta_j.mean_vector()
    if a.size != b.size:
        raise ValueError("emission parameter dimensions differ")
    if include_std:
        if isinstance(theta_i, GaussianParams1D):
            a = np.append(a, np.sqrt(theta_i.variance))
            b = np.append(b, np.sqrt(theta_j.variance))
        else:
            a = np.concatenate([a, np.sqrt(np.diag(theta_i.covariance))])
            b = np.concatenate([b, np.sqrt(np.diag(theta_j.covariance))])
    return float(np.linalg.norm(a - b))


def merge_group_weights(J, J_prime, pi: np.ndarray) -> np.ndarray:
    """Survivor probabilities over J from transition mass out of J'.

    ``weight[j] ∝ sum_{i in J'} pi[i, j]``; if no mass flows in (J' empty or
    all-zero columns), the survivor is uniform over J.
    """
    J = list(J)
    J_prime = list(J_prime)
    if not J:
        raise ValueError("candidate set J must be non-empty")
    if set(J) & set(J_prime):
        raise ValueError("J and J' must be disjoint")
    if J_prime:
        weights = np.asarray(pi)[np.ix_(J_prime, J)].sum(axis=0)
    else:
        weights = np.zeros(len(J))
    total = weights.sum()
    if total <= 0.0:
        return np.full(len(J), 1.0 / len(J))
    return weights / total


def merge_redundant_states(
    labels,
    beta: np.ndarray,
    pi: np.ndarray,
    theta,
    tau: float,
    rng: np.random.Generator,
    damping: float = 0.1,
    include_std: bool = False,
) -> MergeOutcome:
    """Run one merge sweep over the states appearing in ``labels``.

    The random processing order is drawn from ``rng`` by sampling the in-use
    states without replacement.
    """
    in_use = np.unique(np.asarray(labels))
    order = in_use[rng.permutation(in_use.size)]
    return _merge_with_order(labels, beta, pi, theta, tau, order, rng, damping, include_std)


def _merge_with_order(
    labels,
    beta,
    pi,
    theta,
    tau,
    order,
    rng,
    damping=0.1,
    include_std=False,
) -> MergeOutcome:
    """Merge sweep with an explicit anchor order (exposed for deterministic tests)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    labels_tilde = np.array(labels, dtype=np.int64, copy=True)
    beta = np.asarray(beta, dtype=np.float64)
    beta_damped = beta.copy()
    pi = np.asarray(pi, dtype=np.float64)

    processed: set[int] = set()
    groups: list[MergeGroup] = []
    damped_any = False
    for anchor in order:
        anchor = int(anchor)
        if anchor in processed:
            continue
        in_use = set(np.unique(labels_tilde).tolist())
        if anchor not in in_use:
            processed.add(anchor)
            continue
        div = {
            j: divergence(theta[anchor], theta[j], include_std)
            for j in in_use
            if j != anchor
        }
        members = [anchor] + sorted(j for j, d in div.items() if d <= tau and j not in processed)
        non_similar = sorted(j for j, d in div.items() if d > tau)
        if len(members) == 1:
            survivor = anchor
        else:
            weights = merge_group_weights(members, non_similar, pi)
            survivor = members[rng.choice(len(members), p=weights)]
        for j in members:
            if j != survivor:
                beta_damped[j] = damping * beta[j]
                damped_any = True
        if len(members) > 1:
            mask = np.isin(labels_tilde, members)
            labels_tilde[mask] = survivor
        processed.update(members)
        groups.append(MergeGroup(anchor=anchor, members=tuple(members), survivor=survivor))

    # Renormalize only when damping changed the weights, so a no-op sweep
    # leaves beta bit-identical.
    beta_tilde = beta_damped / beta_damped.sum() if damped_any else beta_damped.copy()
    return MergeOutcome(
        labels_tilde=labels_tilde,
        beta_tilde=beta_tilde,
        beta_damped=beta_damped,
        groups=groups,
    )


def merged_segments(outcome: MergeOutcome) -> SegmentSequence:
    """Rebuild a SegmentSequence from merged labels, fusing adjacent runs."""
    return SegmentSequence.from_label_vector(outcome.labels_tilde)
