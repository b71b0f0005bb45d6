"""Trip ingestion, preprocessing, fitting, and artifact export.

CSV schemas
-----------
- trip input: header ``t,accel,lane_offset,yaw_rate``; ``t`` strictly increasing.
- generic series input: header ``t,<channel>...``; same ``t`` rules.
- segmentation output: ``t,label`` with 1-based integer timesteps.
- segment table output: ``segment_id,label,start,duration`` (1-based ids/starts).
- replication output: ``rep,model,converged,iterations,n_states,missed_cp,extra_cp``.

Numbers are written with 9 significant digits so reruns diff cleanly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .core import ObservationSequence, SegmentSequence
from .distributions import GaussianParams1D, GaussianParamsMV
from .gibbs import PosteriorChain, run_chain
from .simulate import (
    ReplicationRecord,
    ReplicationSummary,
    default_truth,
    generate_sequence,
    run_replication_study,
    study_hyperparams,
)
from .validation import as_rng

TRIP_COLUMNS = ("t", "accel", "lane_offset", "yaw_rate")
TRIP_CHANNELS = TRIP_COLUMNS[1:]
SUMMARY_SCHEMA = "hsmmseg-summary-v1"


def fmt(x) -> str:
    """Format a float with 9 significant digits."""
    return f"{float(x):.9g}"


@dataclass
class NormalizationStats:
    """Per-channel mean and population standard deviation of a trip."""

    means: np.ndarray
    stds: np.ndarray


@dataclass
class TripRecord:
    trip_id: str
    raw: ObservationSequence
    normalization_stats: NormalizationStats | None = None


# ---------------------------------------------------------------------------
# loading


def _read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _parse_time_series(path, header, rows, columns):
    idx = [header.index(c) for c in columns]
    t_prev = None
    data = np.empty((len(rows), len(columns)))
    for r, row in enumerate(rows):
        for c, col in enumerate(idx):
            try:
                value = float(row[col])
            except (ValueError, IndexError):
                raise ValueError(f"{path}: row {r + 1}: bad value in column {columns[c]!r}") from None
            if not np.isfinite(value):
                raise ValueError(f"{path}: row {r + 1}: non-finite value in column {columns[c]!r}")
            data[r, c] = value
        if t_prev is not None and data[r, 0] <= t_prev:
            raise ValueError(f"{path}: row {r + 1}: column 't' must be strictly increasing")
        t_prev = data[r, 0]
    if len(rows) == 0:
        raise ValueError(f"{path}: no data rows")
    return data


def load_trip_csv(path, sample_rate_hz: float = 10.0) -> TripRecord:
    """Load a kinematic trip CSV with columns t, accel, lane_offset, yaw_rate."""
    header, rows = _read_csv_rows(path)
    missing = [c for c in TRIP_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing required column(s) {', '.join(missing)}")
    data = _parse_time_series(path, header, rows, TRIP_COLUMNS)
    trip_id = os.path.splitext(os.path.basename(str(path)))[0]
    return TripRecord(
        trip_id=trip_id,
        raw=ObservationSequence(values=data[:, 1:], sample_rate_hz=sample_rate_hz),
    )


def load_series_csv(path) -> ObservationSequence:
    """Load a generic series CSV: column t plus one column per channel."""
    header, rows = _read_csv_rows(path)
    if not header or header[0] != "t" or len(header) < 2:
        raise ValueError(f"{path}: expected header 't,<channel>...', got {','.join(header)!r}")
    data = _parse_time_series(path, header, rows, header)
    return ObservationSequence(values=data[:, 1:])


def is_trip_csv(path) -> bool:
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return all(c in [h.strip() for h in header] for c in TRIP_COLUMNS)


# ---------------------------------------------------------------------------
# preprocessing


def downsample(y: ObservationSequence, factor: int) -> ObservationSequence:
    """Average consecutive blocks of ``factor`` samples; drop the remainder."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n_blocks = y.T // factor
    if n_blocks == 0:
        raise ValueError(f"sequence of length {y.T} is shorter than factor {factor}")
    trimmed = y.values[: n_blocks * factor]
    values = trimmed.reshape(n_blocks, factor, y.p).mean(axis=1)
    return ObservationSequence(values=values, sample_rate_hz=y.sample_rate_hz / factor)


def normalize(y: ObservationSequence):
    """Z-score each channel with its own mean and population std."""
    means = y.values.mean(axis=0)
    stds = y.values.std(axis=0)
    if np.any(stds <= 0):
        bad = int(np.flatnonzero(stds <= 0)[0])
        raise ValueError(f"channel {bad} has zero variance and cannot be normalized")
    normalized = ObservationSequence(
        values=(y.values - means) / stds, sample_rate_hz=y.sample_rate_hz
    )
    return normalized, NormalizationStats(means=means, stds=stds)


def denormalize(y: ObservationSequence, stats: NormalizationStats) -> ObservationSequence:
    return ObservationSequence(
        values=y.values * stats.stds + stats.means, sample_rate_hz=y.sample_rate_hz
    )


def denormalize_means(thetas, stats: NormalizationStats):
    """Map emission parameters from z-scored space back to original units."""
    out = []
    for theta in thetas:
        if isinstance(theta, GaussianParams1D):
            out.append(
                GaussianParams1D(
                    mean=theta.mean * float(stats.stds[0]) + float(stats.means[0]),
                    variance=theta.variance * float(stats.stds[0]) ** 2,
                )
            )
        else:
            scale = np.outer(stats.stds, stats.stds)
            out.append(
                GaussianParamsMV(
                    mean=theta.mean * stats.stds + stats.means,
                    covariance=theta.covariance * scale,
                )
            )
    return out


# ---------------------------------------------------------------------------
# artifact writers


def write_segmentation_csv(path, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "label"])
        for t, label in enumerate(labels, start=1):
            writer.writerow([t, int(label)])


def write_segment_table_csv(path, seg: SegmentSequence) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", "label", "start", "duration"])
        for s, start in enumerate(seg.starts()):
            writer.writerow([s + 1, int(seg.labels[s]), int(start) + 1, int(seg.durations[s])])


def write_traces_csv(path, chain: PosteriorChain, k_max: int, p: int) -> None:
    """Monitored scalars per retained sample; blank cells where a rank is absent."""
    n_cols = k_max * p
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "iteration", "loglik"] + [f"mean_{i + 1:02d}" for i in range(n_cols)])
        for s, sample in enumerate(chain.samples, start=1):
            means = [fmt(v) for v in np.ravel(sample.monitor_means)]
            writer.writerow([s, sample.iteration, fmt(sample.loglik)] + means + [""] * (n_cols - len(means)))


def write_replication_csv(path, records: list[ReplicationRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "model", "converged", "iterations", "n_states", "missed_cp", "extra_cp"])
        for r in records:
            writer.writerow(
                [r.rep, r.model, int(r.converged), r.iterations, r.n_states, r.missed_cp, r.extra_cp]
            )


def write_replication_summary_csv(path, summary: ReplicationSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "n_reps", "n_converged", "mean_iterations", "mean_missed_cp",
             "mean_extra_cp", "state_count_histogram"]
        )
        for name, m in (("baseline", summary.baseline), ("robust", summary.robust)):
            hist = ";".join(f"{k}:{v}" for k, v in sorted(m.state_count_histogram.items()))
            writer.writerow(
                [name, summary.n_reps, m.n_converged, fmt(m.mean_gibbs_iterations),
                 fmt(m.mean_missed_cp), fmt(m.mean_extra_cp), hist]
            )


def summary_table(summary: ReplicationSummary) -> str:
    lines = [
        f"{'':<28}{'baseline':>12}{'robust':>12}",
        f"{'converged simulations':<28}{summary.baseline.n_converged:>12}{summary.robust.n_converged:>12}",
    ]
    for label, attr in (
        ("avg. gibbs iterations", "mean_gibbs_iterations"),
        ("avg. missed change points", "mean_missed_cp"),
        ("avg. extra change points", "mean_extra_cp"),
    ):
        b = getattr(summary.baseline, attr)
        r = getattr(summary.robust, attr)
        lines.append(f"{label:<28}{fmt(b):>12}{fmt(r):>12}")
    return "\n".join(lines)


def _round9(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round9(summary), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def _fit_artifact_paths(outdir):
    return {
        "segmentation": os.path.join(outdir, "segmentation.csv"),
        "segments": os.path.join(outdir, "segments.csv"),
        "summary": os.path.join(outdir, "summary.json"),
        "traces": os.path.join(outdir, "traces.csv"),
    }


def fit_command(config: RunConfig, downsample_factor: int = 10) -> dict:
    """Fit one dataset and write segmentation, summary, and trace artifacts.

    Trip-schema inputs are downsampled then z-scored before fitting, and the
    reported emission means are mapped back to original units.
    """
    if config.input is None:
        raise ValueError("fit requires an input CSV path")
    os.makedirs(config.output, exist_ok=True)

    stats = None
    factor = None
    if is_trip_csv(config.input):
        trip = load_trip_csv(config.input)
        factor = downsample_factor
        y, stats = normalize(downsample(trip.raw, factor))
        source_id = trip.trip_id
    else:
        y = load_series_csv(config.input)
        source_id = os.path.splitext(os.path.basename(str(config.input)))[0]

    hyper = config.hyperparams(y.p)
    chain, estimate = run_chain(y, hyper, as_rng(config.seed))
    if estimate is None:
        raise ValueError("no posterior samples retained; increase max_iter beyond burn_in")

    theta_report = estimate.theta_hat if stats is None else denormalize_means(estimate.theta_hat, stats)
    occupancy = {
        int(i): float(np.mean(estimate.x_hat == i)) for i in estimate.surviving_states
    }
    summary = {
        "schema": SUMMARY_SCHEMA,
        "source_id": source_id,
        "model": config.model,
        "emission": config.emission_family(y.p),
        "seed": config.seed,
        "tau": config.tau,
        "preprocessing": {
            "downsample_factor": factor,
            "normalization": None
            if stats is None
            else {
                "convention": "population",
                "means": stats.means.tolist(),
                "stds": stats.stds.tolist(),
            },
        },
        "convergence": {
            "converged": chain.converged,
            "iterations": chain.iterations_run,
            "gr_values": dict(chain.gr_values),
        },
        "states": [
            {
                "id": int(i),
                "mean": theta_report[k].mean_vector().tolist(),
                "duration_rate": float(estimate.omega_hat[k]),
                "occupancy": occupancy[int(i)],
            }
            for k, i in enumerate(estimate.surviving_states)
        ],
        "transition_matrix": estimate.pi_hat.tolist(),
        "labels": estimate.x_hat.tolist(),
    }

    paths = _fit_artifact_paths(config.output)
    seg = SegmentSequence.from_label_vector(estimate.x_hat)
    write_segmentation_csv(paths["segmentation"], estimate.x_hat)
    write_segment_table_csv(paths["segments"], seg)
    write_summary_json(paths["summary"], summary)
    write_traces_csv(paths["traces"], chain, hyper.k_max, y.p)
    return paths


def export_segments(summary_path, outdir) -> dict:
    """Re-emit the segmentation CSVs recorded in a saved model summary."""
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{summary_path}: not a {SUMMARY_SCHEMA} document")
    labels = np.asarray(summary["labels"], dtype=np.int64)
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "segmentation": os.path.join(outdir, "segmentation.csv"),
        "segments": os.path.join(outdir, "segments.csv"),
    }
    write_segmentation_csv(paths["segmentation"], labels)
    write_segment_table_csv(paths["segments"], SegmentSequence.from_label_vector(labels))
    return paths


def simulate_command(config: RunConfig, n_segments: int = 30) -> dict:
    """Write a synthetic benchmark dataset and its ground-truth segmentation."""
    os.makedirs(config.output, exist_ok=True)
    truth = default_truth(n_segments=n_segments)
    y, seg = generate_sequence(truth, as_rng(config.seed))
    paths = {
        "data": os.path.join(config.output, "data.csv"),
        "truth_segments": os.path.join(config.output, "truth_segments.csv"),
        "truth_labels": os.path.join(config.output, "truth_labels.csv"),
    }
    with open(paths["data"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, value in enumerate(y.values[:, 0], start=1):
            writer.writerow([t, fmt(value)])
    write_segment_table_csv(paths["truth_segments"], seg)
    write_segmentation_csv(paths["truth_labels"], seg.to_label_vector())
    return paths


def replicate_command(config: RunConfig, n_reps: int = 20, n_jobs: int = 1,
                      n_segments: int = 30) -> tuple[dict, ReplicationSummary]:
    """Run the paired baseline/robust replication study and write its CSVs."""
    os.makedirs(config.output, exist_ok=True)
    hyper_robust = config.with_model("robust").hyperparams(p=1)
    hyper_baseline = config.with_model("baseline").hyperparams(p=1)
    summary, records = run_replication_study(
        hyper_baseline,
        hyper_robust,
        default_truth(n_segments=n_segments),
        n_reps=n_reps,
        seed=config.seed,
        n_jobs=n_jobs,
    )
    paths = {
        "replications": os.path.join(config.output, "replications.csv"),
        "summary": os.path.join(config.output, "replication_summary.csv"),
    }
    write_replication_csv(paths["replications"], records)
    write_replication_summary_csv(paths["summary"], summary)
    return paths, summary
