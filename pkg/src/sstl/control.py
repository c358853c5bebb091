"""Feedforward hysteresis compensator.

In propagation the command inverts the current direction's line.  At a
reference reversal the controller estimates the output held by the tendon,
derives the input tension at which the new direction re-engages, and until
then issues a backlash command that drives the input through the dead zone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .plant import Direction, HysteresisParams, Phase, PlantState, _step

ZETA_DEADBAND = 1e-6
CMD_LIMITS = (0.0, 60.0)
GAMMA_P_MAX = 1.05
GAMMA_R_MIN = 0.95


@dataclass(frozen=True)
class CompensatorConfig:
    gamma_p_hat: float
    beta_p: float
    gamma_r_hat: float
    beta_r: float

    def __post_init__(self):
        for name in ("gamma_p_hat", "beta_p", "gamma_r_hat", "beta_r"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.gamma_p_hat <= GAMMA_P_MAX:
            raise ValueError(f"gamma_p_hat must lie in (0, {GAMMA_P_MAX}], got {self.gamma_p_hat}")
        if self.gamma_r_hat < GAMMA_R_MIN:
            raise ValueError(f"gamma_r_hat must be >= {GAMMA_R_MIN}, got {self.gamma_r_hat}")

    @classmethod
    def from_params(cls, params: HysteresisParams) -> "CompensatorConfig":
        return cls(params.gamma_p, params.beta_p, params.gamma_r, params.beta_r)

    def gamma(self, direction: Direction) -> float:
        return self.gamma_p_hat if direction == "pull" else self.gamma_r_hat

    def beta(self, direction: Direction) -> float:
        return self.beta_p if direction == "pull" else self.beta_r

    def without_bias(self) -> "CompensatorConfig":
        return replace(self, beta_p=0.0, beta_r=0.0)


@dataclass(frozen=True)
class CompensatorState:
    bl: bool = False
    zeta_prev: int = 0
    t_in_rev: float = 0.0
    t_out_rev: float = 0.0
    dir: Direction = "pull"


def _other(direction: Direction) -> Direction:
    return "release" if direction == "pull" else "pull"


def ff_command(t_ref: float, direction: Direction, cfg: CompensatorConfig) -> float:
    g = cfg.gamma(direction)
    if g <= 0:
        raise ValueError(f"{direction} slope must be positive, got {g}")
    return (t_ref - cfg.beta(direction)) / g


def reversal_update(t_in_rev: float, preceding_dir: Direction, cfg: CompensatorConfig) -> float:
    """Output tension held at a reversal, from the preceding direction's line."""
    return cfg.gamma(preceding_dir) * t_in_rev + cfg.beta(preceding_dir)


def backlash_thresholds(t_in_rev: float, cfg: CompensatorConfig) -> tuple[float, float]:
    """Input tensions at which pull (resp. release) re-engages after a reversal at ``t_in_rev``.

    ``t_th_pull`` applies to a reversal out of release, ``t_th_release`` to one
    out of pull.
    """
    gp, gr, bp, br = cfg.gamma_p_hat, cfg.gamma_r_hat, cfg.beta_p, cfg.beta_r
    if gp <= 0 or gr <= 0:
        raise ValueError("both slopes must be positive")
    return (gr * t_in_rev + br - bp) / gp, (gp * t_in_rev + bp - br) / gr


def backlash_command(t_ref: float, t_out_rev: float, direction: Direction, cfg: CompensatorConfig) -> float:
    # The reference error at the turn is added once more so the input overshoots the dead zone.
    return ff_command(2.0 * t_ref - t_out_rev, direction, cfg)


def _threshold_crossed(state: CompensatorState, t_in: float, cfg: CompensatorConfig) -> bool:
    th_pull, th_release = backlash_thresholds(state.t_in_rev, cfg)
    if state.dir == "pull":
        return t_in >= th_pull
    return t_in <= th_release


def controller_step(
    state: CompensatorState,
    t_ref_k: float,
    t_ref_km1: float,
    t_in_k: float,
    cfg: CompensatorConfig,
) -> tuple[CompensatorState, float]:
    """One control period; ``t_in_k`` is the measured input tension.

    Returns the new state and the unsaturated command.
    """
    for name, v in (("t_ref_k", t_ref_k), ("t_ref_km1", t_ref_km1), ("t_in_k", t_in_k)):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")
    diff = t_ref_k - t_ref_km1
    zeta = 1 if diff > ZETA_DEADBAND else (-1 if diff < -ZETA_DEADBAND else 0)
    bl, t_in_rev, t_out_rev, direction = state.bl, state.t_in_rev, state.t_out_rev, state.dir
    if zeta != 0:
        new_dir: Direction = "pull" if zeta > 0 else "release"
        if state.zeta_prev != 0 and zeta != state.zeta_prev:
            t_in_rev = t_in_k
            t_out_rev = reversal_update(t_in_k, direction, cfg)
            bl = True
        direction = new_dir
    state = CompensatorState(bl, zeta if zeta != 0 else state.zeta_prev, t_in_rev, t_out_rev, direction)
    if state.bl and _threshold_crossed(state, t_in_k, cfg):
        state = replace(state, bl=False)
    if state.bl:
        cmd = backlash_command(t_ref_k, state.t_out_rev, state.dir, cfg)
    else:
        cmd = ff_command(t_ref_k, state.dir, cfg)
    return state, cmd


def saturate(t_cmd: float, limits: tuple[float, float] = CMD_LIMITS) -> float:
    return min(max(t_cmd, limits[0]), limits[1])


@dataclass(frozen=True)
class LoopTrace:
    dt: float
    t_ref: np.ndarray
    t_cmd: np.ndarray
    t_in: np.ndarray
    t_out: np.ndarray
    phases: tuple[Phase, ...]
    bl: np.ndarray

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.t_ref)) * self.dt

    @property
    def error(self) -> np.ndarray:
        return self.t_ref - self.t_out


def run_closed_loop(
    plant: HysteresisParams,
    t_ref: Sequence[float],
    dt: float,
    cfg: CompensatorConfig | None = None,
    lag_tau: float = 0.0,
) -> LoopTrace:
    """Drive ``plant`` with the compensator (``cfg=None`` passes the reference through).

    The inner force loop is ideal unless ``lag_tau`` > 0, in which case the
    plant input follows the command through a first-order lag.  The
    controller measures the plant input applied on the previous step.
    """
    ref = np.asarray(t_ref, dtype=float)
    if ref.ndim != 1 or len(ref) < 1:
        raise ValueError("reference must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference contains non-finite values")
    if not dt > 0 or lag_tau < 0:
        raise ValueError("dt must be > 0 and lag_tau >= 0")
    a = 1.0 if lag_tau == 0 else 1.0 - math.exp(-dt / lag_tau)
    n = len(ref)
    cmd = np.empty(n)
    u_arr = np.empty(n)
    out = np.empty(n)
    bl = np.zeros(n, dtype=bool)
    phases = []

    state = CompensatorState()
    c0 = ref[0] if cfg is None else ff_command(ref[0], "pull", cfg)
    u = saturate(c0)
    pstate = PlantState.initial(plant, u)
    gp, bp, gr, br = plant.as_tuple()
    phase, held, t_rev, dir_prev, t_prev = (
        pstate.phase, pstate.t_out_held, pstate.t_in_rev, pstate.dir_prev, pstate.t_in_prev,
    )
    for k in range(n):
        if cfg is None:
            c = ref[k]
        else:
            state, c = controller_step(state, ref[k], ref[k - 1] if k else ref[0], u, cfg)
        c = saturate(c)
        u = u + a * (c - u)
        phase, held, t_rev, dir_prev = _step(gp, bp, gr, br, phase, held, t_rev, dir_prev, t_prev, u)
        t_prev = u
        cmd[k], u_arr[k], out[k], bl[k] = c, u, held, state.bl
        phases.append(phase)
    return LoopTrace(dt, ref, cmd, u_arr, out, tuple(phases), bl)


STEP_HEADER = ("time_s", "t_ref_N", "t_cmd_N", "t_in_N", "t_out_N", "phase", "bl_flag")


def write_step_csv(trace: LoopTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_HEADER)
        for k in range(len(trace.t_ref)):
            w.writerow([
                f"{k * trace.dt:.6f}", f"{trace.t_ref[k]:.6f}", f"{trace.t_cmd[k]:.6f}",
                f"{trace.t_in[k]:.6f}", f"{trace.t_out[k]:.6f}", trace.phases[k].value, int(trace.bl[k]),
            ])
