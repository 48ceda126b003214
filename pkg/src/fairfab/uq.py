"""Euclidean-error statistics, trust gating, and cross-run consistency.

Definitions are pinned so independent implementations agree bit-for-bit
on the decision: population standard deviation (divide by n), nearest-rank
95th percentile (1-based index ceil(0.95 * n) into the ascending sort),
and an inclusive trust comparison (p95 <= threshold is trusted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ValidationError

TRUSTED = "trusted"
UNTRUSTED = "untrusted"


@dataclass(frozen=True)
class UQReport:
    n: int
    mean_error: float
    std_error: float
    p95_error: float
    max_error: float
    trust_threshold: float
    verdict: str  # trusted | untrusted

    def to_document(self) -> dict:
        return {"metric": "euclidean_px", **asdict(self)}


@dataclass(frozen=True)
class ConsistencyReport:
    max_abs_deviation: float
    mean_abs_deviation: float
    tolerance: float
    passed: bool

    def to_document(self) -> dict:
        return asdict(self)


def euclidean_errors(predictions, truths) -> np.ndarray:
    """Per-row Euclidean distance between predicted and true positions.

    Both arguments are (n, d) position arrays in the same units; the
    result is a float64 vector of length n.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape:
        raise ValidationError(
            f"shape mismatch: predictions {predictions.shape} vs truths {truths.shape}")
    if predictions.ndim != 2 or predictions.shape[0] == 0:
        raise ValidationError(
            f"expected nonempty (n, d) arrays, got shape {predictions.shape}")
    return np.sqrt(np.sum((predictions - truths) ** 2, axis=1))


def nearest_rank_p95(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("percentile of an empty sample is undefined")
    rank = math.ceil(0.95 * values.size)  # 1-based
    return float(np.sort(values)[rank - 1])


def error_stats(distances, trust_threshold: float) -> UQReport:
    """Summary statistics plus trust verdict over a nonempty distance sample."""
    distances = np.asarray(distances, dtype=np.float64).ravel()
    if distances.size == 0:
        raise ValidationError("statistics over an empty sample are undefined")
    if not np.all(np.isfinite(distances)):
        raise ValidationError("distance sample contains non-finite values")
    if not (trust_threshold > 0):
        raise ValidationError(f"trust threshold must be positive, got {trust_threshold!r}")
    p95 = nearest_rank_p95(distances)
    return UQReport(n=int(distances.size),
                    mean_error=float(np.mean(distances)),
                    std_error=float(np.std(distances)),  # population: divide by n
                    p95_error=p95,
                    max_error=float(np.max(distances)),
                    trust_threshold=float(trust_threshold),
                    verdict=TRUSTED if p95 <= trust_threshold else UNTRUSTED)


def trust_gate(report: UQReport) -> tuple[str, str]:
    """Echo the verdict with the threshold comparison spelled out."""
    op = "<=" if report.p95_error <= report.trust_threshold else ">"
    justification = (f"p95 {report.p95_error:.6g} {op} "
                     f"{report.trust_threshold:.6g} -> {report.verdict}")
    return report.verdict, justification


def consistency_check(results_a, results_b, tolerance: float = 1e-5) -> ConsistencyReport:
    """Per-coordinate agreement of two position lists for the same inputs.

    Symmetric in its arguments; passes exactly when the largest absolute
    per-coordinate deviation is at or below the tolerance.
    """
    a = np.asarray(results_a, dtype=np.float64)
    b = np.asarray(results_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValidationError("consistency over empty result lists is undefined")
    if tolerance < 0:
        raise ValidationError(f"tolerance must be nonnegative, got {tolerance!r}")
    dev = np.abs(a - b)
    max_dev = float(np.max(dev))
    return ConsistencyReport(max_abs_deviation=max_dev,
                             mean_abs_deviation=float(np.mean(dev)),
                             tolerance=float(tolerance),
                             passed=max_dev <= tolerance)
