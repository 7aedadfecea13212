"""Trajectory-quality metrics: endpoint adherence, waypoint spacing
uniformity and smoothness angles, with corpus aggregation and CSV export.

All measurements operate on lists of 3-D end-effector points that include
the ground-truth endpoints; all distance metrics are in meters, all angles
in degrees. Aggregates use the population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

METRIC_NAMES = (
    "init_dist",
    "final_dist",
    "avg_spacing",
    "max_spacing_dev",
    "avg_angle",
    "min_angle",
)


@dataclass
class TrajectoryStats:
    init_dist: float
    final_dist: float
    avg_spacing: float
    max_spacing_dev: float
    avg_angle: float
    min_angle: float
    skipped_triplets: int = 0  # triplets dropped because of a zero-length segment

    def as_tuple(self):
        return tuple(getattr(self, m) for m in METRIC_NAMES)


@dataclass
class CorpusStats:
    mean: dict[str, float]
    std: dict[str, float]
    histograms: dict[str, tuple[np.ndarray, np.ndarray]]  # metric -> (edges, counts)
    count: int


def endpoint_distances(traj_points: np.ndarray, s0_ef, sT_ef) -> tuple[float, float]:
    """Euclidean distances from the ground-truth endpoints to the first and
    last predicted waypoints (end-effector positions only)."""
    traj_points = np.asarray(traj_points, dtype=np.float64)
    if traj_points.ndim != 2 or traj_points.shape[0] < 1:
        raise InvalidInputError("trajectory must contain at least one point")
    init = float(np.linalg.norm(np.asarray(s0_ef) - traj_points[0]))
    final = float(np.linalg.norm(np.asarray(sT_ef) - traj_points[-1]))
    return init, final


def spacing_stats(points: np.ndarray) -> tuple[float, float]:
    """Average consecutive-point distance and the maximum absolute deviation
    from that average. The point list must already include the ground-truth
    endpoints."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise InvalidInputError("need at least 2 points")
    dists = np.linalg.norm(np.diff(points, axis=0), axis=1)
    avg = float(np.mean(dists))
    return avg, float(np.max(np.abs(dists - avg)))


def angle_stats(points: np.ndarray) -> tuple[float, float, int]:
    """Mean and minimum interior angle (degrees) over succeeding-waypoint
    triplets. Triplets containing a zero-length segment are skipped; the
    count of skipped triplets is returned as a diagnostic."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 3:
        raise InvalidInputError("need at least 3 points")
    angles = []
    skipped = 0
    for i in range(1, points.shape[0] - 1):
        u = points[i - 1] - points[i]
        v = points[i + 1] - points[i]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            skipped += 1
            continue
        c = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(c)))
    if not angles:
        raise InvalidInputError("all segments zero-length; angles undefined")
    return float(np.mean(angles)), float(np.min(angles)), skipped


def trajectory_stats(ef_seq: np.ndarray, s0_ef, sT_ef) -> TrajectoryStats:
    """All per-trajectory metrics for a predicted intermediate sequence,
    measured on the whole point list including the ground-truth endpoints."""
    ef_seq = np.asarray(ef_seq, dtype=np.float64)
    init, final = endpoint_distances(ef_seq, s0_ef, sT_ef)
    points = np.vstack([np.asarray(s0_ef)[None, :], ef_seq, np.asarray(sT_ef)[None, :]])
    avg_sp, max_dev = spacing_stats(points)
    avg_ang, min_ang, skipped = angle_stats(points)
    return TrajectoryStats(
        init_dist=init,
        final_dist=final,
        avg_spacing=avg_sp,
        max_spacing_dev=max_dev,
        avg_angle=avg_ang,
        min_angle=min_ang,
        skipped_triplets=skipped,
    )


def aggregate(stats: list[TrajectoryStats], bins: int) -> CorpusStats:
    """Per-metric mean, population std, and an equal-width histogram over
    [min, max] (right-open bins, last bin closed)."""
    if not stats:
        raise InvalidInputError("empty stats list")
    if bins < 1:
        raise InvalidInputError("bins must be >= 1")
    mean, std, hists = {}, {}, {}
    for m in METRIC_NAMES:
        vals = np.array([getattr(s, m) for s in stats], dtype=np.float64)
        mean[m] = float(vals.mean())
        std[m] = float(vals.std())
        counts, edges = np.histogram(vals, bins=bins)
        hists[m] = (edges, counts)
    return CorpusStats(mean=mean, std=std, histograms=hists, count=len(stats))


def sharp_turn_fraction(stats: list[TrajectoryStats], threshold_angle: float) -> float:
    """Fraction of trajectories whose minimum interior angle falls below the
    threshold (sharp-turn indicator)."""
    if not stats:
        raise InvalidInputError("empty stats list")
    return float(
        np.mean([s.min_angle < threshold_angle for s in stats])
    )


# ---------------------------------------------------------------------------
# CSV export


def write_stats_csv(stats: list[TrajectoryStats], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_NAMES) + ",skipped_triplets\n")
        for s in stats:
            fh.write(
                ",".join(repr(v) for v in s.as_tuple())
                + f",{s.skipped_triplets}\n"
            )


def write_aggregate_csv(corpus: CorpusStats, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("metric,mean,std,count\n")
        for m in METRIC_NAMES:
            fh.write(f"{m},{corpus.mean[m]!r},{corpus.std[m]!r},{corpus.count}\n")


def write_histograms_csv(corpus: CorpusStats, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("metric,bin_left,bin_right,count\n")
        for m in METRIC_NAMES:
            edges, counts = corpus.histograms[m]
            for i, c in enumerate(counts):
                fh.write(f"{m},{edges[i]!r},{edges[i + 1]!r},{int(c)}\n")
