"""SSTL-to-actuation slope mapping.

A paired dataset of (SSTL slopes, actuation slopes) is regressed either with
a per-output affine least-squares baseline or with a small tanh MLP trained
by AdamW on MSE plus an inverse-consistency penalty ``(gp * gr - 1)**2``.
The MLP is written directly in numpy with hand-derived gradients.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, TrainingDivergence
from .plant import (
    ACT_BETA_P,
    ACT_BETA_R,
    FIT_PULL,
    FIT_RELEASE,
    MU_PHI_RANGE,
    PlantGeometry,
    params_from_geometry,
    sstl_twin,
)

LOCATIONS = ("NP", "CP", "ND")
# Residual scatter of the empirical quadratic fit, per direction.
DEFAULT_SLOPE_NOISE = (0.006, 0.096)
GAMMA_P_RANGE = (1e-6, 1.05)
GAMMA_R_MIN = 0.95


@dataclass(frozen=True)
class MappingDataset:
    """Rows are ``(gp_sstl, gr_sstl, gp_act, gr_act)``."""

    rows: np.ndarray = field(repr=False)
    locations: tuple[str, ...] = field(repr=False)
    split_seed: int = 0
    train_fraction: float = 0.75

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 4:
            raise ValueError("rows must have shape (N, 4)")
        if len(self.locations) != len(rows):
            raise ValueError("one location label per row is required")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not np.all(np.isfinite(rows)):
            raise ValueError("dataset contains non-finite slopes")
        gp_ok = (rows[:, [0, 2]] > 0) & (rows[:, [0, 2]] <= 1)
        if not gp_ok.all() or np.any(rows[:, [1, 3]] < 1):
            raise ValueError("dataset rows violate slope ranges (0 < gamma_p <= 1, gamma_r >= 1)")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "locations", tuple(self.locations))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def x(self) -> np.ndarray:
        return self.rows[:, :2]

    @property
    def y(self) -> np.ndarray:
        return self.rows[:, 2:]

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Train/test indices, stratified by location, seeded by ``split_seed``."""
        rng = np.random.default_rng(self.split_seed)
        labels = np.asarray(self.locations)
        train, test = [], []
        for loc in sorted(set(self.locations)):
            idx = np.flatnonzero(labels == loc)
            idx = idx[rng.permutation(len(idx))]
            n_train = int(round(self.train_fraction * len(idx)))
            n_train = min(max(n_train, 1), len(idx) - 1) if len(idx) > 1 else len(idx)
            train.append(idx[:n_train])
            test.append(idx[n_train:])
        return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))

    def with_split_seed(self, seed: int) -> "MappingDataset":
        return replace(self, split_seed=seed)


def generate_dataset(
    n_per_location: int = 50,
    locations: Sequence[str] = LOCATIONS,
    fit_pull: tuple[float, float] = FIT_PULL,
    fit_release: tuple[float, float] = FIT_RELEASE,
    noise_sigma: float | tuple[float, float] = DEFAULT_SLOPE_NOISE,
    seed: int = 0,
    mu_phi_range: tuple[float, float] = MU_PHI_RANGE,
    asymmetry: float = 1.0,
    train_fraction: float = 0.75,
) -> MappingDataset:
    """Synthetic paired slopes over random bending geometries.

    ``noise_sigma`` is a scalar or a (pull, release) pair of Gaussian
    perturbation scales applied to the SSTL slopes.
    """
    if n_per_location < 2:
        raise ValueError("n_per_location must be >= 2")
    sig = np.broadcast_to(np.asarray(noise_sigma, dtype=float), (2,))
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for loc in locations:
        mu_phi = rng.uniform(*mu_phi_range, size=n_per_location)
        noise = rng.normal(size=(n_per_location, 2)) * sig
        for k in range(n_per_location):
            act = params_from_geometry(PlantGeometry.from_mu_phi(float(mu_phi[k])), ACT_BETA_P, ACT_BETA_R)
            twin = sstl_twin(act, fit_pull, fit_release, asymmetry=asymmetry)
            rows.append((twin.gamma_p + noise[k, 0], twin.gamma_r + noise[k, 1], act.gamma_p, act.gamma_r))
            labels.append(loc)
    return MappingDataset(np.array(rows), tuple(labels), split_seed=seed, train_fraction=train_fraction)


DATASET_HEADER = ("gp_sstl", "gr_sstl", "gp_act", "gr_act")


def write_dataset_csv(ds: MappingDataset, path: str | Path) -> None:
    """Rows are written grouped by location, in first-appearance order."""
    order = []
    for loc in dict.fromkeys(ds.locations):
        order.extend(i for i, l in enumerate(ds.locations) if l == loc)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for i in order:
            w.writerow([f"{v:.6f}" for v in ds.rows[i]])


def read_dataset_csv(
    path: str | Path,
    locations: Sequence[str] = LOCATIONS,
    split_seed: int = 0,
    train_fraction: float = 0.75,
) -> MappingDataset:
    """Read a dataset CSV; equal contiguous blocks are assigned to ``locations``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DATASET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(DATASET_HEADER)}")
        rows = np.array([[float(v) for v in r] for r in reader if r])
    n = len(rows)
    if n and len(locations) and n % len(locations) == 0:
        block = n // len(locations)
        labels = tuple(loc for loc in locations for _ in range(block))
    else:
        labels = ("all",) * n
    return MappingDataset(rows, labels, split_seed, train_fraction)


@dataclass(frozen=True)
class MlpConfig:
    embed_dim: int = 128
    n_blocks: int = 2
    skip_alpha: int = 1
    lambda_inv: float = 2e-3
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 250
    batch_size: int | None = None
    init_seed: int = 0
    # Early stopping: a slice of the training rows picks the epoch count, then
    # the model is refit on all training rows for that many epochs.
    val_fraction: float = 0.0
    patience: int = 200

    def __post_init__(self):
        if self.embed_dim < 1 or self.n_blocks < 1:
            raise ValueError("embed_dim and n_blocks must be positive")
        if self.skip_alpha not in (0, 1):
            raise ValueError("skip_alpha must be 0 or 1")
        if not self.lambda_inv >= 0:
            raise ValueError("lambda_inv must be >= 0")
        if self.epochs < 1 or not self.lr > 0 or self.weight_decay < 0:
            raise ValueError("invalid optimizer settings")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 <= self.val_fraction < 1 or self.patience < 1:
            raise ValueError("val_fraction must lie in [0, 1) and patience must be positive")


@dataclass
class MappingModel:
    kind: str
    weights: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    loss_history: list[tuple[float, float, float]] = field(default_factory=list)
    input_lo: np.ndarray | None = None
    input_hi: np.ndarray | None = None


# -- MLP core ---------------------------------------------------------------


def _init_weights(cfg: MlpConfig, n_in: int = 2, n_out: int = 2) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.init_seed)
    d = cfg.embed_dim

    def layer(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)

    w = {}
    w["embed.W"], w["embed.b"] = layer(n_in, d)
    for l in range(cfg.n_blocks):
        w[f"block{l}.W1"], w[f"block{l}.b1"] = layer(d, d)
        w[f"block{l}.W2"], w[f"block{l}.b2"] = layer(d, d)
    w["head.W"], w["head.b"] = layer(d, n_out)
    return w


def _forward(w, xs, n_blocks, alpha):
    cache = []
    h = xs @ w["embed.W"] + w["embed.b"]
    for l in range(n_blocks):
        z1 = np.tanh(h @ w[f"block{l}.W1"] + w[f"block{l}.b1"])
        h_new = np.tanh(z1 @ w[f"block{l}.W2"] + w[f"block{l}.b2"] + alpha * h)
        cache.append((h, z1, h_new))
        h = h_new
    y = (h @ w["head.W"] + w["head.b"]) * w["out.scale"] + w["out.mean"]
    return y, h, cache


def loss_terms(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Return ``(mse, inv)``: mean squared error norm and mean (gp*gr - 1)**2."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    mse = float(np.mean(np.sum((y_hat - y) ** 2, axis=1)))
    inv = float(np.mean((y_hat[:, 0] * y_hat[:, 1] - 1.0) ** 2))
    return mse, inv


def _loss_and_grads(w, xs, y, n_blocks, alpha, lam):
    y_hat, h_last, cache = _forward(w, xs, n_blocks, alpha)
    n = len(xs)
    mse, inv = loss_terms(y_hat, y)
    prod_err = y_hat[:, 0] * y_hat[:, 1] - 1.0
    g_y = 2.0 * (y_hat - y) / n
    g_y[:, 0] += lam * 2.0 * prod_err * y_hat[:, 1] / n
    g_y[:, 1] += lam * 2.0 * prod_err * y_hat[:, 0] / n

    g_u = g_y * w["out.scale"]
    g = {"head.W": h_last.T @ g_u, "head.b": g_u.sum(axis=0)}
    g_h = g_u @ w["head.W"].T
    for l in reversed(range(n_blocks)):
        h_in, z1, h_out = cache[l]
        g_a2 = g_h * (1.0 - h_out**2)
        g[f"block{l}.W2"] = z1.T @ g_a2
        g[f"block{l}.b2"] = g_a2.sum(axis=0)
        g_a1 = (g_a2 @ w[f"block{l}.W2"].T) * (1.0 - z1**2)
        g[f"block{l}.W1"] = h_in.T @ g_a1
        g[f"block{l}.b1"] = g_a1.sum(axis=0)
        g_h = g_a1 @ w[f"block{l}.W1"].T + alpha * g_a2
    g["embed.W"] = xs.T @ g_h
    g["embed.b"] = g_h.sum(axis=0)
    return mse + lam * inv, mse, inv, g


class AdamW:
    """Adam with decoupled weight decay applied to every parameter."""

    def __init__(self, params, lr=1e-3, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.wd, self.betas, self.eps = lr, weight_decay, betas, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for k in self.m:
            p, g = params[k], grads[k]
            p *= 1.0 - self.lr * self.wd
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _fit(cfg, xs, y, epochs, out_mean, out_scale, val=None):
    """Run AdamW for up to ``epochs``; returns weights, history and best epoch.

    With ``val=(xs_val, y_val)`` training stops once the validation loss has
    not improved for ``cfg.patience`` epochs.
    """
    w = {k: v.astype(np.float32) for k, v in _init_weights(cfg).items()}
    opt = AdamW(w, cfg.lr, cfg.weight_decay)
    w["out.mean"], w["out.scale"] = out_mean, out_scale
    rng = np.random.default_rng(cfg.init_seed)
    n = len(xs)
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    history = []
    best, best_epoch = math.inf, epochs
    for epoch in range(1, epochs + 1):
        order = np.arange(n) if bs == n else rng.permutation(n)
        for start in range(0, n, bs):
            sel = order[start:start + bs]
            total, mse, inv, g = _loss_and_grads(w, xs[sel], y[sel], cfg.n_blocks, cfg.skip_alpha, cfg.lambda_inv)
            if not math.isfinite(total):
                raise TrainingDivergence(f"non-finite loss at step {opt.t}")
            history.append((total, mse, inv))
            opt.step(w, g)
        if val is not None:
            y_val, _, _ = _forward(w, val[0], cfg.n_blocks, cfg.skip_alpha)
            v_mse, v_inv = loss_terms(y_val, val[1])
            v = v_mse + cfg.lambda_inv * v_inv
            if v < best:
                best, best_epoch = v, epoch
            elif epoch - best_epoch >= cfg.patience:
                break
    return w, history, best_epoch


def train_mlp(ds: MappingDataset, cfg: MlpConfig = MlpConfig()) -> MappingModel:
    train_idx, _ = ds.split()
    if len(train_idx) < 8:
        raise DegenerateDataError(f"need at least 8 training rows, got {len(train_idx)}")
    x, y = ds.x[train_idx], ds.y[train_idx]
    mean, std = x.mean(axis=0), x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    # Training runs in float32; the weights are widened again afterwards.
    xs = ((x - mean) / std).astype(np.float32)
    y32 = y.astype(np.float32)
    # Fixed output affine: the head works in standardized target units.
    y_std = y.std(axis=0)
    out_mean = y.mean(axis=0).astype(np.float32)
    out_scale = np.where(y_std > 0, y_std, 1.0).astype(np.float32)
    epochs = cfg.epochs
    n_val = int(round(cfg.val_fraction * len(xs)))
    if n_val >= 1 and len(xs) - n_val >= 4:
        perm = np.random.default_rng(cfg.init_seed).permutation(len(xs))
        fit, val = perm[n_val:], perm[:n_val]
        _, _, epochs = _fit(cfg, xs[fit], y32[fit], cfg.epochs, out_mean, out_scale, (xs[val], y32[val]))
    w, history, _ = _fit(cfg, xs, y32, epochs, out_mean, out_scale)
    w = {k: v.astype(float) for k, v in w.items()}
    w["norm.mean"], w["norm.std"] = mean, std
    return MappingModel(
        kind="mlp",
        weights=w,
        config=asdict(cfg),
        loss_history=history,
        input_lo=x.min(axis=0),
        input_hi=x.max(axis=0),
    )


def train_linear(ds: MappingDataset) -> MappingModel:
    train_idx, _ = ds.split()
    if len(train_idx) < 2:
        raise DegenerateDataError("need at least 2 training rows")
    x, y = ds.x[train_idx], ds.y[train_idx]
    design = np.column_stack([np.ones(len(x)), x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateDataError("rank-deficient design for linear mapping")
    # coef rows: intercept, gp_sstl, gr_sstl; columns: gp_act, gr_act.
    return MappingModel(
        kind="linear",
        weights={"coef": coef},
        input_lo=x.min(axis=0),
        input_hi=x.max(axis=0),
    )


def predict_raw(model: MappingModel, x: np.ndarray) -> np.ndarray:
    """Unclamped predictions for an (N, 2) array of SSTL slopes."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if model.kind == "linear":
        return np.column_stack([np.ones(len(x)), x]) @ model.weights["coef"]
    if model.kind == "mlp":
        w = model.weights
        xs = (x - w["norm.mean"]) / w["norm.std"]
        y, _, _ = _forward(w, xs, int(model.config["n_blocks"]), int(model.config["skip_alpha"]))
        return y
    raise ValueError(f"unknown model kind {model.kind!r}")


def clamp_slopes(gp: float, gr: float) -> tuple[float, float]:
    return min(max(gp, GAMMA_P_RANGE[0]), GAMMA_P_RANGE[1]), max(gr, GAMMA_R_MIN)


def predict(model: MappingModel, gamma_p_sstl: float, gamma_r_sstl: float) -> tuple[float, float]:
    """Actuation slopes for one SSTL slope pair, clamped to controller-safe ranges."""
    if model.input_lo is not None:
        lo, hi = model.input_lo, model.input_hi
        margin = 0.2 * (hi - lo)
        x = np.array([gamma_p_sstl, gamma_r_sstl])
        if np.any(x < lo - margin) or np.any(x > hi + margin):
            warnings.warn(
                f"SSTL slopes {tuple(x)} lie outside the training range expanded by 20%",
                stacklevel=2,
            )
    gp, gr = predict_raw(model, [[gamma_p_sstl, gamma_r_sstl]])[0]
    return clamp_slopes(float(gp), float(gr))


def rmse_report(model: MappingModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Per-output RMSE and the joint RMSE over both outputs."""
    err = predict_raw(model, x) - y
    per = np.sqrt(np.mean(err**2, axis=0))
    return float(per[0]), float(per[1]), float(np.sqrt(np.mean(err**2)))


# -- ablation ---------------------------------------------------------------

VARIANTS = (
    ("linear", None),
    ("plain_mlp", dict(skip_alpha=0, lambda_inv=0.0)),
    ("plain_mlp+inv", dict(skip_alpha=0, lambda_inv=2e-3)),
    ("skip_mlp", dict(skip_alpha=1, lambda_inv=0.0)),
    ("skip_mlp+inv", dict(skip_alpha=1, lambda_inv=2e-3)),
)


@dataclass(frozen=True)
class AblationRun:
    variant: str
    seed: int
    rmse_gamma_p: float
    rmse_gamma_r: float
    rmse_total: float
    train_inv_residual: float


@dataclass(frozen=True)
class AblationRow:
    variant: str
    rmse_gamma_p_mean: float
    rmse_gamma_p_std: float
    rmse_gamma_r_mean: float
    rmse_gamma_r_std: float
    rmse_total: float


def run_ablation(
    ds: MappingDataset,
    seeds: Sequence[int],
    base: MlpConfig = MlpConfig(),
) -> tuple[list[AblationRow], list[AblationRun]]:
    """Evaluate the five mapping variants on the held-out split of each seed.

    Each seed reshuffles the split and seeds the MLP initialisation.  Spreads
    are across seeds (sample standard deviation); ``rmse_total`` is the mean of
    the per-seed joint RMSE.
    """
    if len(seeds) < 3:
        raise ValueError("need at least 3 seeds")
    runs: list[AblationRun] = []
    for seed in seeds:
        dss = ds.with_split_seed(seed)
        train_idx, test_idx = dss.split()
        for name, overrides in VARIANTS:
            if overrides is None:
                model = train_linear(dss)
            else:
                model = train_mlp(dss, replace(base, init_seed=seed, **overrides))
            rp, rr, rt = rmse_report(model, dss.x[test_idx], dss.y[test_idx])
            _, inv = loss_terms(predict_raw(model, dss.x[train_idx]), dss.y[train_idx])
            runs.append(AblationRun(name, seed, rp, rr, rt, inv))
    rows = []
    for name, _ in VARIANTS:
        sel = [r for r in runs if r.variant == name]
        p = np.array([r.rmse_gamma_p for r in sel])
        r_ = np.array([r.rmse_gamma_r for r in sel])
        t = np.array([r.rmse_total for r in sel])
        rows.append(AblationRow(name, p.mean(), p.std(ddof=1), r_.mean(), r_.std(ddof=1), t.mean()))
    return rows, runs


ABLATION_HEADER = (
    "variant", "rmse_gamma_p_mean", "rmse_gamma_p_std",
    "rmse_gamma_r_mean", "rmse_gamma_r_std", "rmse_total",
)


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_HEADER)
        for r in rows:
            w.writerow([r.variant] + [f"{v:.6f}" for v in (
                r.rmse_gamma_p_mean, r.rmse_gamma_p_std,
                r.rmse_gamma_r_mean, r.rmse_gamma_r_std, r.rmse_total)])


# -- serialization ----------------------------------------------------------


def save_model(model: MappingModel, path: str | Path) -> None:
    """Write a self-describing JSON document (kind, config, weights, history)."""
    doc = {
        "format": "sstl-mapping-model",
        "version": 1,
        "kind": model.kind,
        "config": model.config,
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.weights.items()},
        "input_lo": None if model.input_lo is None else model.input_lo.tolist(),
        "input_hi": None if model.input_hi is None else model.input_hi.tolist(),
        "loss_history": [list(h) for h in model.loss_history],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path: str | Path) -> MappingModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "sstl-mapping-model":
        raise ValueError(f"{path}: not a mapping model file")
    weights = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["weights"].items()}
    lo, hi = doc.get("input_lo"), doc.get("input_hi")
    return MappingModel(
        kind=doc["kind"],
        weights=weights,
        config=doc.get("config", {}),
        loss_history=[tuple(h) for h in doc.get("loss_history", [])],
        input_lo=None if lo is None else np.asarray(lo),
        input_hi=None if hi is None else np.asarray(hi),
    )
