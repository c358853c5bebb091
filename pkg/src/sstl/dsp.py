"""Signal primitives: zero-phase low-pass, extrema detection, RANSAC line fit."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .errors import DegenerateDataError

SAMPLE_RATE_HZ = 500.0


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = 5.0
    order: int = 2
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise ValueError(
                f"cutoff_hz must lie in (0, {self.sample_rate_hz / 2}), got {self.cutoff_hz}"
            )
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class RansacSpec:
    inlier_threshold: float = 0.15
    iterations: int = 500
    min_inliers_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 < self.min_inliers_fraction <= 1:
            raise ValueError("min_inliers_fraction must lie in (0, 1]")


def zero_phase_lowpass(x: Sequence[float], spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Forward-backward Butterworth low-pass with odd reflection at both edges.

    The net response has zero phase and the squared magnitude of the causal
    filter, so a sine at the cutoff comes out at half amplitude.
    """
    x = np.asarray(x, dtype=float)
    padlen = 3 * spec.order
    if x.ndim != 1 or len(x) < padlen + 1:
        raise ValueError(f"signal too short for order-{spec.order} filtering: need > {padlen} samples")
    sos = sps.butter(spec.order, spec.cutoff_hz, btype="low", fs=spec.sample_rate_hz, output="sos")
    return sps.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)


def find_extrema(x: Sequence[float], min_prominence: float) -> list[int]:
    """Boundary-inclusive list of alternating turning points.

    A turning point is confirmed once the signal retraces from it by at least
    ``min_prominence``.  On a plateau the last sample is taken, so a hold
    belongs to the segment that led into it.  The returned list always starts
    at 0 and ends at ``len(x) - 1``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("signal is empty")
    if n == 1:
        return [0]
    vals = x.tolist()
    out = [0]
    i_max = i_min = 0
    trend = 0
    k = 1
    while k < n and trend == 0:
        if vals[k] >= vals[i_max]:
            i_max = k
        if vals[k] <= vals[i_min]:
            i_min = k
        if vals[i_max] - vals[i_min] >= min_prominence:
            trend = 1 if i_max > i_min else -1
        k += 1
    if trend == 0:
        return [0, n - 1]
    cand = i_max if trend > 0 else i_min
    for k in range(k, n):
        v = vals[k]
        if trend > 0:
            if v >= vals[cand]:
                cand = k
            elif vals[cand] - v >= min_prominence:
                out.append(cand)
                trend, cand = -1, k
        else:
            if v <= vals[cand]:
                cand = k
            elif v - vals[cand] >= min_prominence:
                out.append(cand)
                trend, cand = 1, k
    if out[-1] != n - 1:
        out.append(n - 1)
    return out


def _lstsq_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0:
        raise DegenerateDataError("all x values are identical")
    slope = float(dx @ (y - ym)) / sxx
    return slope, float(ym - slope * xm)


def ransac_line(
    points: Sequence[tuple[float, float]] | np.ndarray,
    spec: RansacSpec = RansacSpec(),
) -> tuple[float, float, np.ndarray]:
    """Robust ``y = slope * x + intercept`` fit.

    Two-point hypotheses are drawn from a seeded generator; the one with the
    most points within ``inlier_threshold`` (vertical residual) wins, ties
    broken by the lower inlier RMS and then the earlier draw.  The winner's
    inliers are refit by ordinary least squares.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegenerateDataError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    n = len(x)
    rng = np.random.default_rng(spec.seed)
    i = rng.integers(0, n, spec.iterations)
    j = (i + rng.integers(1, n, spec.iterations)) % n
    dx = x[j] - x[i]
    ok = dx != 0
    if not ok.any():
        raise DegenerateDataError("no non-vertical two-point hypothesis available")
    slopes = np.where(ok, (y[j] - y[i]) / np.where(ok, dx, 1.0), 0.0)
    icpts = y[i] - slopes * x[i]

    counts = np.empty(spec.iterations, dtype=np.int64)
    rms = np.empty(spec.iterations)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, spec.iterations, chunk):
        sl = slice(start, start + chunk)
        resid = np.abs(y[None, :] - (slopes[sl, None] * x[None, :] + icpts[sl, None]))
        inl = resid <= spec.inlier_threshold
        counts[sl] = inl.sum(axis=1)
        rms[sl] = np.sqrt(np.where(inl, resid**2, 0.0).sum(axis=1) / np.maximum(counts[sl], 1))
    counts[~ok] = -1
    # lexsort keys are least-significant first: draw index, then RMS, then consensus.
    h = np.lexsort((np.arange(spec.iterations), rms, -counts))[0]
    mask = np.abs(y - (slopes[h] * x + icpts[h])) <= spec.inlier_threshold
    if mask.sum() < max(2, spec.min_inliers_fraction * n):
        raise DegenerateDataError(
            f"consensus of {int(mask.sum())}/{n} points is below min_inliers_fraction={spec.min_inliers_fraction}"
        )
    slope, intercept = _lstsq_line(x[mask], y[mask])
    return slope, intercept, mask
