"""Distance-consistency metrics and their bootstrap summaries.

A transformed point is an "error" when some other clip's original sits
strictly nearer to it than its own original. Within-space consistency is the
complement of the mean error; between-space consistency compares the two
spaces either by agreement of the binary errors or by rank correlation of
the distance profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .transforms import TransformSpec


def delta(own_distance: float, other_distances) -> int:
    """0 when the own original is strictly nearest, 1 otherwise (ties count
    as errors)."""
    others = np.asarray(other_distances, dtype=np.float64)
    if others.size == 0:
        raise ValueError("need at least one competing original")
    return 0 if own_distance < others.min() else 1


@dataclass(frozen=True)
class DeltaVector:
    """Per-clip binary errors for one (space, measure, transform) cell."""

    entries: Mapping[str, int]
    space: str
    measure: str
    transform: TransformSpec

    def values(self) -> np.ndarray:
        return np.array([self.entries[k] for k in sorted(self.entries)], dtype=np.float64)


def delta_vector(matrix, own_col: Mapping[str, str], space: str,
                 transform: TransformSpec) -> DeltaVector:
    """Evaluate the error function for every row of a distance matrix.

    `own_col` maps each row id to the column id of its own original; that
    column must be present along with at least one competitor.
    """
    col_index = {c: i for i, c in enumerate(matrix.col_ids)}
    entries = {}
    for i, row_id in enumerate(matrix.row_ids):
        own = own_col[row_id]
        if own not in col_index:
            raise ValueError(f"own original {own!r} missing from distance row")
        j = col_index[own]
        row = matrix.values[i]
        others = np.delete(row, j)
        entries[row_id] = delta(row[j], others)
    return DeltaVector(entries=entries, space=space, measure=matrix.measure,
                       transform=transform)


def within_consistency(deltas: DeltaVector) -> float:
    """Complement of the mean error rate."""
    values = deltas.values()
    if values.size == 0:
        raise ValueError("empty delta vector")
    return float(1.0 - values.mean())


def average_ranks(x) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    boundaries = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1], [True])))
    ranks_sorted = np.empty(x.shape[0])
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks_sorted[start:stop] = 0.5 * (start + stop - 1) + 1.0
    ranks = np.empty(x.shape[0])
    ranks[order] = ranks_sorted
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson correlation of average-ranked values.

    Returns NaN when either input has zero rank variance (constant input);
    callers exclude those from aggregation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = np.dot(dx, dx)
    vy = np.dot(dy, dy)
    if vx == 0.0 or vy == 0.0:
        return float("nan")
    if np.array_equal(rx, ry):
        return 1.0  # identical rankings correlate exactly, no rounding
    rho = np.dot(dx, dy) / np.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, rho)))


def between_rho(audio_row, latent_row) -> float:
    """Rank correlation of one point's distance profiles across the two
    spaces (rows already aligned on the same originals, self excluded)."""
    return spearman(audio_row, latent_row)


def between_acc(delta_audio: DeltaVector, delta_latent: DeltaVector) -> float:
    """Fraction of clips on which the two spaces' binary errors agree."""
    if set(delta_audio.entries) != set(delta_latent.entries):
        raise ValueError("delta vectors cover different clip ids")
    keys = sorted(delta_audio.entries)
    agree = [int(delta_audio.entries[k] == delta_latent.entries[k]) for k in keys]
    return float(np.mean(agree))


def agreement_values(delta_audio: DeltaVector, delta_latent: DeltaVector) -> np.ndarray:
    if set(delta_audio.entries) != set(delta_latent.entries):
        raise ValueError("delta vectors cover different clip ids")
    keys = sorted(delta_audio.entries)
    return np.array(
        [float(delta_audio.entries[k] == delta_latent.entries[k]) for k in keys]
    )


def original_space_rho(audio_matrix, latent_matrix) -> list[float]:
    """Per-original rank correlation between its audio and latent distance
    rows over all other originals (self excluded)."""
    if audio_matrix.row_ids != audio_matrix.col_ids:
        raise ValueError("audio matrix must be square on the same id set")
    if latent_matrix.row_ids != audio_matrix.row_ids or latent_matrix.col_ids != audio_matrix.col_ids:
        raise ValueError("matrices must share the same id set")
    n = len(audio_matrix.row_ids)
    if n < 4:
        raise ValueError("need at least 4 originals")
    rhos = []
    for i in range(n):
        a = np.delete(audio_matrix.values[i], i)
        z = np.delete(latent_matrix.values[i], i)
        rhos.append(spearman(a, z))
    return rhos


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    ci_low: float
    ci_high: float
    n: int


def bootstrap_ci(values, n_boot: int = 1000, level: float = 0.95,
                 seed: int = 0) -> BootstrapSummary:
    """Percentile bootstrap interval for the mean; deterministic per seed."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot bootstrap an empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [alpha, 100.0 - alpha])
    return BootstrapSummary(mean=float(values.mean()), ci_low=float(lo),
                            ci_high=float(hi), n=int(values.size))


@dataclass(frozen=True)
class ConsistencyRecord:
    """One reported metric value with its grouping keys and interval."""

    metric: str  # CW | CB_acc | CB_rho
    value: float
    ci_low: float
    ci_high: float
    encoder: str
    task_label: str
    audio_measure: str
    latent_measure: str
    category: str
    magnitude: float | None
    n: int
    n_excluded: int = 0

    def __post_init__(self):
        if self.metric in ("CW", "CB_acc") and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"{self.metric} outside [0, 1]: {self.value}")
        if self.metric == "CB_rho" and not (-1.0 <= self.value <= 1.0):
            raise ValueError(f"CB_rho outside [-1, 1]: {self.value}")
        if not (self.ci_low <= self.value <= self.ci_high):
            raise ValueError("value must lie inside its confidence interval")


def summarize(metric: str, values, *, encoder: str = "", task_label: str = "",
              audio_measure: str = "", latent_measure: str = "", category: str = "",
              magnitude: float | None = None, n_boot: int = 1000,
              level: float = 0.95, seed: int = 0,
              n_excluded: int = 0) -> ConsistencyRecord:
    """Bootstrap a per-clip value list into one consistency record."""
    boot = bootstrap_ci(values, n_boot=n_boot, level=level, seed=seed)
    # Resampled means can sit entirely on one side of the sample mean when
    # the sample is tiny and skewed; the interval is widened to contain it.
    ci_low = min(boot.ci_low, boot.mean)
    ci_high = max(boot.ci_high, boot.mean)
    return ConsistencyRecord(
        metric=metric, value=boot.mean, ci_low=ci_low, ci_high=ci_high,
        encoder=encoder, task_label=task_label, audio_measure=audio_measure,
        latent_measure=latent_measure, category=category, magnitude=magnitude,
        n=boot.n, n_excluded=n_excluded,
    )
