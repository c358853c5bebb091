"""Experiment runner: reference trajectories, SSTL probing, baselines and metrics."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .control import CompensatorConfig, LoopTrace, run_closed_loop
from .dsp import SAMPLE_RATE_HZ
from .ident import IdentSpec, identify_params
from .mapping import MappingModel, MlpConfig, generate_dataset, predict, train_mlp
from .plant import ACT_BETA_P, ACT_BETA_R, HysteresisParams, TensionTrace, simulate_trace, sstl_twin

Kind = Literal["trapezoid", "sinusoid", "multisine"]
Scheme = Literal["no_comp", "no_bias", "proposed", "direct_ident"]
SCHEMES: tuple[str, ...] = ("no_comp", "no_bias", "proposed", "direct_ident")

# Force-sensor noise on probing traces (newtons).
PROBE_NOISE = 0.05
REVERSAL_WINDOW_S = 2.0
MAPE_MIN_REF = 0.5


@dataclass(frozen=True)
class TrajectorySpec:
    kind: Kind
    duration: float
    sample_rate: float = SAMPLE_RATE_HZ
    # trapezoid
    low: float = 5.0
    high: float = 25.0
    rise: float = 3.0
    hold: float = 1.0
    fall: float = 8.0
    # sinusoid
    freq: float = 0.01
    amplitude: float = 5.0
    offset: float = 10.0
    # multisine
    n_components: int = 6
    freq_range: tuple[float, float] = (0.02, 0.15)
    amp_range: tuple[float, float] = (5.0, 30.0)
    bounds: tuple[float, float] = (1.0, 30.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("trapezoid", "sinusoid", "multisine"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if self.kind == "trapezoid":
            if min(self.rise, self.fall) <= 0 or self.hold < 0:
                raise ValueError("rise and fall must be > 0, hold >= 0")
            if self.rise + self.hold + self.fall > self.duration + 1e-9:
                raise ValueError("rise + hold + fall exceeds duration")
        if self.kind == "multisine":
            if self.n_components < 1:
                raise ValueError("n_components must be positive")
            if not 0 < self.bounds[0] < self.bounds[1]:
                raise ValueError("bounds must satisfy 0 < low < high")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


PRESETS: dict[str, TrajectorySpec] = {
    # Probes: one loop each, wide enough to reach both propagation lines.
    "probe_act": TrajectorySpec("trapezoid", 12.0, low=2.0, high=25.0),
    "probe_sstl": TrajectorySpec("trapezoid", 12.0, low=0.5, high=60.0),
    "probe_di": TrajectorySpec("sinusoid", 12.0, freq=1 / 12.0, amplitude=11.5, offset=13.5),
    "sinusoid": TrajectorySpec("sinusoid", 200.0),
    "multisine": TrajectorySpec("multisine", 100.0),
    "sinusoid_full": TrajectorySpec("sinusoid", 400.0),
    "multisine_full": TrajectorySpec("multisine", 400.0),
}
DEFAULT_SUITE = ("sinusoid", "multisine")
DEFAULT_SEEDS = (0, 1, 2)


def gen_trajectory(spec: TrajectorySpec) -> np.ndarray:
    t = np.arange(spec.n_samples) / spec.sample_rate
    if spec.kind == "trapezoid":
        knots = np.cumsum([0.0, spec.rise, spec.hold, spec.fall])
        ref = np.interp(t, knots, [spec.low, spec.high, spec.high, spec.low])
    elif spec.kind == "sinusoid":
        ref = spec.offset + spec.amplitude * np.sin(2 * np.pi * spec.freq * t)
    else:
        rng = np.random.default_rng(spec.seed)
        f = rng.uniform(*spec.freq_range, spec.n_components)
        a = rng.uniform(*spec.amp_range, spec.n_components)
        ph = rng.uniform(0.0, 2 * np.pi, spec.n_components)
        raw = spec.offset + (a[:, None] * np.sin(2 * np.pi * f[:, None] * t[None, :] + ph[:, None])).sum(axis=0)
        span = raw.max() - raw.min()
        if span == 0:
            raise ValueError("multisine is constant; cannot rescale")
        lo, hi = spec.bounds
        ref = lo + (raw - raw.min()) * (hi - lo) / span
    if not np.all(ref > 0):
        raise ValueError("trajectory produces non-positive tension")
    return ref


# -- metrics ------------------------------------------------------------------


def _pair(ref, out) -> tuple[np.ndarray, np.ndarray]:
    ref, out = np.asarray(ref, dtype=float), np.asarray(out, dtype=float)
    if ref.shape != out.shape or ref.ndim != 1 or len(ref) < 1:
        raise ValueError("ref and out must be 1-D with equal length >= 1")
    return ref, out


def metric_rmse(ref, out) -> float:
    ref, out = _pair(ref, out)
    return float(np.sqrt(np.mean((ref - out) ** 2)))


def metric_mape(ref, out) -> float:
    ref, out = _pair(ref, out)
    if np.any(ref < MAPE_MIN_REF):
        raise ValueError(f"MAPE undefined: reference drops below {MAPE_MIN_REF} N")
    return float(100.0 * np.mean(np.abs(ref - out) / ref))


def reversal_indices(ref: np.ndarray, deadband: float = 1e-6) -> np.ndarray:
    """Samples where the sign of the reference increment flips."""
    d = np.diff(ref)
    s = np.where(d > deadband, 1, np.where(d < -deadband, -1, 0))
    nz = np.flatnonzero(s)
    if len(nz) < 2:
        return np.array([], dtype=int)
    flips = nz[1:][s[nz[1:]] != s[nz[:-1]]]
    return flips + 1


def near_reversal_mask(ref: np.ndarray, dt: float, window_s: float = REVERSAL_WINDOW_S) -> np.ndarray:
    mask = np.zeros(len(ref), dtype=bool)
    w = int(round(window_s / dt))
    for i in reversal_indices(ref):
        mask[max(0, i - w):i + w + 1] = True
    return mask


# -- probing ------------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def default_model(dataset_seed: int = 0) -> MappingModel:
    """Skip-MLP trained on the default synthetic dataset (cached per process)."""
    return train_mlp(generate_dataset(seed=dataset_seed), MlpConfig())


def probe_trace(plant: HysteresisParams, probe: TrajectorySpec, noise: float, seed: int) -> TensionTrace:
    return simulate_trace(plant, gen_trajectory(probe), probe.dt, noise, seed)


def probe_and_infer(
    sstl_plant: HysteresisParams,
    ident_spec: IdentSpec = IdentSpec(),
    model: MappingModel | None = None,
    probe: TrajectorySpec = PRESETS["probe_sstl"],
    noise: float = PROBE_NOISE,
    seed: int = 0,
    beta_p: float = ACT_BETA_P,
    beta_r: float = ACT_BETA_R,
) -> CompensatorConfig:
    """Probe the SSTL, map its slopes to the actuation side, attach calibrated biases."""
    est = identify_params(probe_trace(sstl_plant, probe, noise, seed), ident_spec)
    gp, gr = predict(default_model() if model is None else model, est.gamma_p, est.gamma_r)
    return CompensatorConfig(gp, beta_p, gr, beta_r)


def direct_ident_config(
    act_plant: HysteresisParams,
    ident_spec: IdentSpec = IdentSpec(),
    probe: TrajectorySpec = PRESETS["probe_di"],
    noise: float = PROBE_NOISE,
    seed: int = 0,
) -> CompensatorConfig:
    return CompensatorConfig.from_params(identify_params(probe_trace(act_plant, probe, noise, seed), ident_spec))


# -- experiments --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentReport:
    scheme: str
    trajectory: str
    position: str
    seed: int
    rmse: float
    rmse_std: float
    mape: float
    rmse_reduction: float
    rmse_near_reversal: float
    rmse_far_reversal: float
    config: CompensatorConfig | None = None
    trace: LoopTrace | None = field(default=None, repr=False, compare=False)


def _loop_metrics(trace: LoopTrace) -> tuple[float, float, float, float, float]:
    err = trace.error
    near = near_reversal_mask(trace.t_ref, trace.dt)
    rms = lambda e: float(np.sqrt(np.mean(e**2))) if len(e) else math.nan
    return (
        metric_rmse(trace.t_ref, trace.t_out),
        float(np.abs(err).std()),
        metric_mape(trace.t_ref, trace.t_out),
        rms(err[near]),
        rms(err[~near]),
    )


def scheme_config(
    scheme: str,
    act_plant: HysteresisParams,
    seed: int = 0,
    sstl_plant: HysteresisParams | None = None,
    model: MappingModel | None = None,
    ident_spec: IdentSpec = IdentSpec(),
    noise: float = PROBE_NOISE,
) -> CompensatorConfig | None:
    if scheme == "no_comp":
        return None
    if scheme in ("proposed", "no_bias"):
        sstl = sstl_twin(act_plant) if sstl_plant is None else sstl_plant
        cfg = probe_and_infer(sstl, ident_spec, model, noise=noise, seed=seed)
        return cfg.without_bias() if scheme == "no_bias" else cfg
    if scheme == "direct_ident":
        return direct_ident_config(act_plant, ident_spec, noise=noise, seed=seed)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")


def run_experiment(
    scheme: str,
    act_plant: HysteresisParams,
    trajectory: TrajectorySpec | str = "sinusoid",
    seed: int = 0,
    *,
    sstl_plant: HysteresisParams | None = None,
    model: MappingModel | None = None,
    ident_spec: IdentSpec = IdentSpec(),
    noise: float = PROBE_NOISE,
    lag_tau: float = 0.0,
    position: str = "sim",
) -> ExperimentReport:
    """Closed-loop run of one scheme, with RMSE reduction against a paired no_comp run.

    ``seed`` drives probe noise; for a multisine given by preset name it also
    seeds the reference draw.
    """
    name, spec = resolve_trajectory(trajectory, seed)
    ref = gen_trajectory(spec)
    cfg = scheme_config(scheme, act_plant, seed, sstl_plant, model, ident_spec, noise)
    trace = run_closed_loop(act_plant, ref, spec.dt, cfg, lag_tau)
    rmse, rmse_std, mape, near, far = _loop_metrics(trace)
    base = trace if cfg is None else run_closed_loop(act_plant, ref, spec.dt, None, lag_tau)
    base_rmse = metric_rmse(base.t_ref, base.t_out)
    red = 100.0 * (1.0 - rmse / base_rmse) if base_rmse > 0 else 0.0
    return ExperimentReport(scheme, name, position, seed, rmse, rmse_std, mape, red, near, far, cfg, trace)


def resolve_trajectory(trajectory: TrajectorySpec | str, seed: int) -> tuple[str, TrajectorySpec]:
    if isinstance(trajectory, TrajectorySpec):
        return trajectory.kind, trajectory
    if trajectory not in PRESETS:
        raise ValueError(f"unknown trajectory preset {trajectory!r}; known: {', '.join(PRESETS)}")
    spec = PRESETS[trajectory]
    if spec.kind == "multisine":
        spec = replace(spec, seed=seed)
    return trajectory, spec


def run_suite(
    act_plant: HysteresisParams,
    trajectories: Sequence[str] = DEFAULT_SUITE,
    schemes: Sequence[str] = SCHEMES,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    **kwargs,
) -> list[ExperimentReport]:
    return [
        run_experiment(scheme, act_plant, traj, seed, **kwargs)
        for traj in trajectories
        for seed in seeds
        for scheme in schemes
    ]


RESULTS_HEADER = ("trajectory", "scheme", "position", "rmse_N", "rmse_std_N", "mape_pct", "rmse_red_pct")


def write_results_csv(reports: Sequence[ExperimentReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in reports:
            w.writerow([r.trajectory, r.scheme, r.position] + [
                f"{v:.6f}" for v in (r.rmse, r.rmse_std, r.mape, r.rmse_reduction)])
