"""Inter-system statistics between actuation and SSTL parameter populations."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError
from .plant import (
    ACT_BETA_P,
    ACT_BETA_R,
    FIT_PULL,
    FIT_RELEASE,
    MU_PHI_RANGE,
    HysteresisParams,
    PlantGeometry,
    params_from_geometry,
    sstl_twin,
)

# 0.889 / 0.966, rounded: the SSTL slope product relative to the actuation one.
DEFAULT_ASYMMETRY = 0.92


@dataclass(frozen=True)
class ParamPair:
    act: HysteresisParams
    sstl: HysteresisParams
    config_id: str = ""


@dataclass(frozen=True)
class InterSystemStats:
    pearson_r: float
    rmse_identity: float
    fit_slope: float
    fit_bias: float
    rmse_fit: float


def intersystem_stats(pairs: Sequence[ParamPair], direction: str) -> InterSystemStats:
    """Compare ``Gamma_sstl`` against ``Gamma_act**2`` for one direction."""
    if direction not in ("pull", "release"):
        raise ValueError(f"direction must be 'pull' or 'release', got {direction!r}")
    if len(pairs) < 3:
        raise DegenerateDataError(f"need at least 3 pairs, got {len(pairs)}")
    x = np.array([p.act.gamma(direction) ** 2 for p in pairs])
    y = np.array([p.sstl.gamma(direction) for p in pairs])
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateDataError("zero variance in slope population")
    slope = float(dx @ dy) / sxx
    bias = float(y.mean() - slope * x.mean())
    return InterSystemStats(
        pearson_r=float(dx @ dy) / np.sqrt(sxx * syy),
        rmse_identity=float(np.sqrt(np.mean((y - x) ** 2))),
        fit_slope=slope,
        fit_bias=bias,
        rmse_fit=float(np.sqrt(np.mean((y - (slope * x + bias)) ** 2))),
    )


@dataclass(frozen=True)
class FieldStats:
    mean: float
    std: float
    min: float
    max: float


PRODUCT_FIELDS = ("gamma_p", "gamma_r", "product", "beta_p", "beta_r")


def product_stats(params_list: Sequence[HysteresisParams]) -> dict[str, FieldStats]:
    """Per-field summary; ``std`` uses the n-1 denominator (0 for a single entry)."""
    if not params_list:
        raise ValueError("params_list is empty")
    cols = {
        "gamma_p": [p.gamma_p for p in params_list],
        "gamma_r": [p.gamma_r for p in params_list],
        "product": [p.gamma_p * p.gamma_r for p in params_list],
        "beta_p": [p.beta_p for p in params_list],
        "beta_r": [p.beta_r for p in params_list],
    }
    out = {}
    for name in PRODUCT_FIELDS:
        v = np.asarray(cols[name])
        std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out[name] = FieldStats(float(v.mean()), std, float(v.min()), float(v.max()))
    return out


def synthetic_pairs(
    n: int = 40,
    fit_pull: tuple[float, float] = FIT_PULL,
    fit_release: tuple[float, float] = FIT_RELEASE,
    slope_noise: tuple[float, float] = (0.0, 0.0),
    asymmetry: float = DEFAULT_ASYMMETRY,
    mu_phi_range: tuple[float, float] = MU_PHI_RANGE,
    seed: int = 0,
) -> list[ParamPair]:
    """Population of (actuation, SSTL) parameter pairs over random geometries.

    Actuation slopes come from the capstan law; SSTL slopes from the quadratic
    fit, scaled by ``asymmetry`` on release and perturbed by Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    mu_phi = rng.uniform(*mu_phi_range, size=n)
    noise = rng.normal(size=(n, 2)) * np.asarray(slope_noise)
    pairs = []
    for k in range(n):
        act = params_from_geometry(PlantGeometry.from_mu_phi(float(mu_phi[k])), ACT_BETA_P, ACT_BETA_R)
        twin = sstl_twin(act, fit_pull, fit_release, asymmetry=asymmetry)
        sstl = HysteresisParams(
            twin.gamma_p + noise[k, 0], twin.beta_p, twin.gamma_r + noise[k, 1], twin.beta_r
        )
        pairs.append(ParamPair(act, sstl, f"cfg{k:03d}"))
    return pairs


INTERSYSTEM_HEADER = ("direction", "pearson_r", "rmse_id", "fit_slope", "fit_bias", "rmse_fit")
PRODUCT_HEADER = ("system", "parameter", "mean", "std", "min", "max")


def write_intersystem_csv(rows: dict[str, InterSystemStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INTERSYSTEM_HEADER)
        for direction, s in rows.items():
            w.writerow([direction] + [f"{v:.6f}" for v in
                       (s.pearson_r, s.rmse_identity, s.fit_slope, s.fit_bias, s.rmse_fit)])


def write_product_csv(tables: dict[str, dict[str, FieldStats]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRODUCT_HEADER)
        for system, stats in tables.items():
            for name in PRODUCT_FIELDS:
                s = stats[name]
                w.writerow([system, name] + [f"{v:.6f}" for v in (s.mean, s.std, s.min, s.max)])
