"""Quasi-static tendon-sheath hysteresis plant.

The plant follows the four-phase loop (pull-backlash, pull-propagation,
release-backlash, release-propagation).  In propagation the output follows
``gamma * t_in + beta`` for the current direction; in backlash the output is
held until the line of the new direction crosses the held value.

A double-pass loop (SSTL) is the same operator with its own parameter set,
produced here either from geometry (``n_pass=2``) or from an empirical
quadratic fit against the single-pass slopes (:func:`sstl_twin`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

Direction = Literal["pull", "release"]

# Input changes at or below this magnitude do not count as motion.
DIRECTION_DEADBAND = 1e-9

# Mean actuation / SSTL biases across bending configurations (newtons).
ACT_BETA_P = -1.444
ACT_BETA_R = -1.043
SSTL_BETA_P = 0.033
SSTL_BETA_R = 4.366

# Empirical Gamma_sstl = a * Gamma_act**2 + b coefficients per direction.
FIT_PULL = (0.735, 0.019)
FIT_RELEASE = (1.718, -1.574)

# Mean identified actuation parameters (gamma_p, beta_p, gamma_r, beta_r).
TABLE_MEAN_ACT = (0.583, ACT_BETA_P, 1.688, ACT_BETA_R)

# Default friction-angle product range for single-pass geometries.
MU_PHI_RANGE = (0.47, 0.633)


class Phase(str, Enum):
    PB = "PB"
    PP = "PP"
    RB = "RB"
    RP = "RP"

    @property
    def is_backlash(self) -> bool:
        return self in (Phase.PB, Phase.RB)

    @property
    def direction(self) -> Direction:
        return "pull" if self in (Phase.PB, Phase.PP) else "release"


@dataclass(frozen=True)
class PlantGeometry:
    mu: float
    phi: float
    n_pass: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")
        if not (math.isfinite(self.phi) and self.phi >= 0):
            raise ValueError(f"phi must be finite and >= 0, got {self.phi}")
        if self.n_pass not in (1, 2):
            raise ValueError(f"n_pass must be 1 or 2, got {self.n_pass}")

    @classmethod
    def from_mu_phi(cls, mu_phi: float, n_pass: int = 1) -> "PlantGeometry":
        """Geometry with unit bending angle carrying the whole friction product."""
        return cls(mu=mu_phi, phi=1.0, n_pass=n_pass)


@dataclass(frozen=True)
class HysteresisParams:
    """Propagation slopes and biases for both directions."""

    gamma_p: float
    beta_p: float
    gamma_r: float
    beta_r: float

    def __post_init__(self):
        for name in ("gamma_p", "beta_p", "gamma_r", "beta_r"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.gamma_p <= 1.0:
            raise ValueError(f"gamma_p must lie in (0, 1], got {self.gamma_p}")
        if self.gamma_r < 1.0:
            raise ValueError(f"gamma_r must be >= 1, got {self.gamma_r}")

    def gamma(self, direction: Direction) -> float:
        return self.gamma_p if direction == "pull" else self.gamma_r

    def beta(self, direction: Direction) -> float:
        return self.beta_p if direction == "pull" else self.beta_r

    def line(self, direction: Direction, t_in: float) -> float:
        return self.gamma(direction) * t_in + self.beta(direction)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.gamma_p, self.beta_p, self.gamma_r, self.beta_r)

    @property
    def product(self) -> float:
        return self.gamma_p * self.gamma_r


@dataclass(frozen=True)
class PlantState:
    phase: Phase
    t_out_held: float
    t_in_rev: float
    dir_prev: int
    t_in_prev: float

    @classmethod
    def initial(cls, params: HysteresisParams, t_in0: float) -> "PlantState":
        # Probing starts with a pull, already propagating.
        out = max(params.line("pull", t_in0), 0.0)
        return cls(Phase.PP, out, t_in0, +1, t_in0)


@dataclass(frozen=True)
class TensionTrace:
    dt: float
    t_in: np.ndarray = field(repr=False)
    t_out: np.ndarray = field(repr=False)

    def __post_init__(self):
        t_in = np.asarray(self.t_in, dtype=float)
        t_out = np.asarray(self.t_out, dtype=float)
        if t_in.ndim != 1 or t_in.shape != t_out.shape:
            raise ValueError("t_in and t_out must be 1-D sequences of equal length")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not (np.all(np.isfinite(t_in)) and np.all(np.isfinite(t_out))):
            raise ValueError("tensions must be finite")
        if np.any(t_in < 0) or np.any(t_out < 0):
            raise ValueError("tensions must be non-negative")
        object.__setattr__(self, "t_in", t_in)
        object.__setattr__(self, "t_out", t_out)

    def __len__(self) -> int:
        return len(self.t_in)

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.t_in)) * self.dt

    def scaled(self, c: float) -> "TensionTrace":
        return TensionTrace(self.dt, self.t_in * c, self.t_out * c)


def gamma_from_geometry(geom: PlantGeometry, direction: Direction) -> float:
    """Capstan attenuation ``exp(-n * mu * zeta * phi)`` for one direction."""
    zeta = 1.0 if direction == "pull" else -1.0
    return math.exp(-geom.n_pass * geom.mu * zeta * geom.phi)


def params_from_geometry(geom: PlantGeometry, beta_p: float = 0.0, beta_r: float = 0.0) -> HysteresisParams:
    return HysteresisParams(
        gamma_p=gamma_from_geometry(geom, "pull"),
        beta_p=beta_p,
        gamma_r=gamma_from_geometry(geom, "release"),
        beta_r=beta_r,
    )


def sstl_twin(
    act: HysteresisParams,
    fit_pull: tuple[float, float] = FIT_PULL,
    fit_release: tuple[float, float] = FIT_RELEASE,
    beta_p: float = SSTL_BETA_P,
    beta_r: float = SSTL_BETA_R,
    asymmetry: float = 1.0,
) -> HysteresisParams:
    """Double-pass loop parameters implied by actuation slopes.

    Each SSTL slope is ``a * gamma_act**2 + b`` for its direction.  ``asymmetry``
    scales the release slope to emulate pulley friction that breaks the
    ``gamma_p * gamma_r = 1`` symmetry.
    """
    gp = fit_pull[0] * act.gamma_p**2 + fit_pull[1]
    gr = (fit_release[0] * act.gamma_r**2 + fit_release[1]) * asymmetry
    if gp <= 0 or gr <= 0 or gp > 1.0:
        raise ValueError(
            f"fit coefficients give inconsistent SSTL slopes (gamma_p={gp:.4g}, gamma_r={gr:.4g})"
        )
    return HysteresisParams(gp, beta_p, gr, beta_r)


def plant_step(params: HysteresisParams, state: PlantState, t_in: float) -> tuple[PlantState, float]:
    """Advance the plant by one sample of input tension."""
    if not math.isfinite(t_in):
        raise ValueError(f"non-finite input tension {t_in!r}")
    if t_in < 0:
        raise ValueError(f"input tension must be >= 0, got {t_in}")
    phase, held, t_rev, dir_prev = _step(
        params.gamma_p, params.beta_p, params.gamma_r, params.beta_r,
        state.phase, state.t_out_held, state.t_in_rev, state.dir_prev, state.t_in_prev, t_in,
    )
    return PlantState(phase, held, t_rev, dir_prev, t_in), held


def _step(gp, bp, gr, br, phase, held, t_rev, dir_prev, t_prev, t_in):
    # Shared by plant_step and run_plant. The returned held value is this sample's output.
    d = t_in - t_prev
    if d > DIRECTION_DEADBAND:
        direction = 1
    elif d < -DIRECTION_DEADBAND:
        direction = -1
    else:
        direction = 0

    if direction != 0 and direction != dir_prev:
        t_rev = t_prev
        dir_prev = direction
        phase = Phase.PB if direction > 0 else Phase.RB

    if phase is Phase.PB:
        line = gp * t_in + bp
        if line >= held:
            phase = Phase.PP
            held = line
    elif phase is Phase.RB:
        line = gr * t_in + br
        if line <= held:
            phase = Phase.RP
            held = line
    elif phase is Phase.PP:
        held = gp * t_in + bp
    else:
        held = gr * t_in + br
    if held < 0.0:
        # Slack tendon carries no tension.
        held = 0.0
    return phase, held, t_rev, dir_prev


def run_plant(
    params: HysteresisParams,
    t_in: Sequence[float],
    state: PlantState | None = None,
) -> tuple[np.ndarray, list[Phase], PlantState]:
    """Drive the plant over an input profile.

    Returns the noiseless output, the per-sample phase log and the final state.
    """
    t_in = np.asarray(t_in, dtype=float)
    if t_in.size == 0:
        raise ValueError("input profile is empty")
    if not np.all(np.isfinite(t_in)):
        raise ValueError("input profile contains non-finite values")
    if np.any(t_in < 0):
        raise ValueError("input profile must be non-negative")
    if state is None:
        state = PlantState.initial(params, float(t_in[0]))
    gp, bp, gr, br = params.as_tuple()
    phase, held, t_rev, dir_prev, t_prev = (
        state.phase, state.t_out_held, state.t_in_rev, state.dir_prev, state.t_in_prev,
    )
    out = np.empty_like(t_in)
    phases: list[Phase] = []
    for k, u in enumerate(t_in.tolist()):
        phase, held, t_rev, dir_prev = _step(gp, bp, gr, br, phase, held, t_rev, dir_prev, t_prev, u)
        t_prev = u
        out[k] = held
        phases.append(phase)
    return out, phases, PlantState(phase, held, t_rev, dir_prev, t_prev)


def simulate_trace(
    params: HysteresisParams,
    t_in_profile: Sequence[float],
    dt: float,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> TensionTrace:
    """Simulate a probing run; Gaussian sensor noise is added to both channels."""
    t_in = np.asarray(t_in_profile, dtype=float)
    t_out, _, _ = run_plant(params, t_in)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        t_in = np.clip(t_in + rng.normal(0.0, noise_sigma, t_in.shape), 0.0, None)
        t_out = np.clip(t_out + rng.normal(0.0, noise_sigma, t_out.shape), 0.0, None)
    elif noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    return TensionTrace(dt, t_in, t_out)


TRACE_HEADER = ("time_s", "t_in_N", "t_out_N")


def write_trace_csv(trace: TensionTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for t, a, b in zip(trace.time, trace.t_in, trace.t_out):
            writer.writerow((f"{t:.6f}", f"{a:.6f}", f"{b:.6f}"))


def read_trace_csv(path: str | Path) -> TensionTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        rows = [tuple(float(v) for v in row) for row in reader if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    data = np.asarray(rows)
    dt = float(np.median(np.diff(data[:, 0])))
    return TensionTrace(dt, data[:, 1], data[:, 2])


def with_biases(params: HysteresisParams, beta_p: float, beta_r: float) -> HysteresisParams:
    return replace(params, beta_p=beta_p, beta_r=beta_r)
