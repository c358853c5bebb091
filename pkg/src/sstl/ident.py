"""Loop segmentation and hysteresis parameter extraction from a tension trace."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dsp import FilterSpec, RansacSpec, find_extrema, ransac_line, zero_phase_lowpass
from .errors import DegenerateDataError, IdentificationError
from .plant import HysteresisParams, Phase, TensionTrace

MIN_FIT_SAMPLES = 5
# A leading run only counts as backlash if the output moved by less than this
# fraction of the input over it; physical propagation slopes are far above it.
BACKLASH_MAX_GAIN = 0.1
GAMMA_P_MAX = 1.05
GAMMA_R_MIN = 0.95


@dataclass(frozen=True)
class PhaseSegment:
    label: Phase
    start_idx: int
    end_idx: int

    def __post_init__(self):
        if not self.start_idx < self.end_idx:
            raise ValueError(f"empty segment [{self.start_idx}, {self.end_idx})")

    def __len__(self) -> int:
        return self.end_idx - self.start_idx


@dataclass(frozen=True)
class IdentSpec:
    """Identification settings; ``filter=None`` skips low-pass filtering."""

    filter: FilterSpec | None = field(default_factory=FilterSpec)
    delta_bl: float = 0.3
    ransac: RansacSpec = field(default_factory=RansacSpec)
    min_prominence: float = 1.0

    def __post_init__(self):
        if not self.delta_bl > 0:
            raise ValueError("delta_bl must be > 0")
        if not self.min_prominence > 0:
            raise ValueError("min_prominence must be > 0")


def filtered_channels(trace: TensionTrace, spec: IdentSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.filter is None:
        return trace.t_in.copy(), trace.t_out.copy()
    fspec = replace(spec.filter, sample_rate_hz=1.0 / trace.dt)
    try:
        return zero_phase_lowpass(trace.t_in, fspec), zero_phase_lowpass(trace.t_out, fspec)
    except ValueError as exc:
        raise IdentificationError(f"trace too short: {exc}") from exc


def _segment(f_in: np.ndarray, f_out: np.ndarray, spec: IdentSpec) -> list[PhaseSegment]:
    n = len(f_in)
    ext = find_extrema(f_in, spec.min_prominence)
    # The turning sample closes the segment that led into it.
    bounds = [0] + [e + 1 for e in ext[1:-1]] + [n]
    segments: list[PhaseSegment] = []
    usable = False
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < 2:
            continue
        usable = usable or (b - a) > 4
        d_in = f_in[b - 1] - f_in[a]
        if d_in == 0:
            continue
        pull = d_in > 0
        ref = f_out[a - 1] if a > 0 else f_out[0]
        within = np.abs(f_out[a:b] - ref) <= spec.delta_bl
        run = b - a if within.all() else int(np.argmin(within))
        if run > 0:
            span_in = abs(f_in[a + run - 1] - (f_in[a - 1] if a > 0 else f_in[0]))
            span_out = abs(f_out[a + run - 1] - ref)
            if span_in == 0 or span_out > BACKLASH_MAX_GAIN * span_in:
                run = 0
        split = a + run
        bl, prop = (Phase.PB, Phase.PP) if pull else (Phase.RB, Phase.RP)
        if split > a:
            segments.append(PhaseSegment(bl, a, split))
        if b > split:
            segments.append(PhaseSegment(prop, split, b))
    if not usable:
        raise IdentificationError("no monotone segment longer than 4 samples")
    return segments


def segment_loop(trace: TensionTrace, spec: IdentSpec = IdentSpec()) -> list[PhaseSegment]:
    """Split a trace into labelled PB/PP/RB/RP index ranges.

    Turning points of the filtered input split the trace into monotone
    segments.  Each segment opens with a backlash range, the samples whose
    filtered output stays within ``delta_bl`` of its value at the turn, and
    the rest is propagation.
    """
    f_in, f_out = filtered_channels(trace, spec)
    return _segment(f_in, f_out, spec)


def identify_params(trace: TensionTrace, spec: IdentSpec = IdentSpec()) -> HysteresisParams:
    f_in, f_out = filtered_channels(trace, spec)
    segments = _segment(f_in, f_out, spec)
    n = len(f_in)
    # Filtering smears each phase boundary over roughly one cutoff period.
    settle = 0 if spec.filter is None else int(round(1.0 / (spec.filter.cutoff_hz * trace.dt)))
    # A slack tendon reads zero regardless of input; drop those samples and the
    # filter transient around them.
    slack = f_out <= spec.delta_bl
    if slack.any() and settle:
        slack = np.convolve(slack, np.ones(2 * settle + 1), mode="same") > 0
    fitted = {}
    for label, name in ((Phase.PP, "pull"), (Phase.RP, "release")):
        idx = []
        for s in segments:
            if s.label is not label:
                continue
            a = s.start_idx + (settle if s.start_idx > 0 else 0)
            b = s.end_idx - (settle if s.end_idx < n else 0)
            keep = np.arange(a, b)[~slack[a:b]] if b > a else np.arange(0)
            if len(keep) >= MIN_FIT_SAMPLES:
                idx.append(keep)
        if not idx:
            raise IdentificationError(f"no usable {name}-propagation segment in trace")
        sel = np.concatenate(idx)
        try:
            slope, intercept, _ = ransac_line(np.column_stack([f_in[sel], f_out[sel]]), spec.ransac)
        except DegenerateDataError as exc:
            raise IdentificationError(f"{name} fit failed: {exc}") from exc
        fitted[name] = (slope, intercept)
    (gp, bp), (gr, br) = fitted["pull"], fitted["release"]
    if not 0 < gp <= GAMMA_P_MAX:
        raise IdentificationError(f"pull slope {gp:.4f} outside (0, {GAMMA_P_MAX}]; segmentation is likely mislabelled")
    if gr < GAMMA_R_MIN:
        raise IdentificationError(f"release slope {gr:.4f} below {GAMMA_R_MIN}; segmentation is likely mislabelled")
    # Slopes within the noise band around unity are snapped onto the physical range.
    return HysteresisParams(min(gp, 1.0), bp, max(gr, 1.0), br)


PARAMS_HEADER = ("gamma_p", "beta_p", "gamma_r", "beta_r")


def format_params_csv(params: HysteresisParams) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PARAMS_HEADER)
    writer.writerow([f"{v:.6f}" for v in params.as_tuple()])
    return buf.getvalue()


def write_params_csv(params: HysteresisParams, path: str | Path) -> None:
    Path(path).write_text(format_params_csv(params))


def read_params_csv(path: str | Path) -> HysteresisParams:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) != 2 or tuple(rows[0]) != PARAMS_HEADER:
        raise ValueError(f"{path}: expected header {','.join(PARAMS_HEADER)} and one row")
    return HysteresisParams(*(float(v) for v in rows[1]))
