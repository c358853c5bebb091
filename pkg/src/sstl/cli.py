"""Command-line pipeline: ``sstl <subcommand> [--config run.yaml] [options]``.

Exit codes: 0 success, 1 other failure, 2 configuration error,
3 identification failure, 4 training divergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable

from . import analysis, harness, mapping
from .config import OUTPUT_DIR_ENV, RunConfig, config_from_dict, parse_config, trajectory_spec
from .control import CompensatorConfig, write_step_csv
from .errors import ConfigError, IdentificationError, SSTLError, TrainingDivergence
from .ident import format_params_csv, identify_params
from .plant import read_trace_csv, simulate_trace, sstl_twin, write_trace_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IDENT, EXIT_TRAIN, EXIT_IO = 0, 1, 2, 3, 4, 5


class InputFileError(OSError):
    """An input file exists but cannot be parsed."""


def _read(reader: Callable, path: str, *args):
    try:
        return reader(path, *args)
    except (ValueError, KeyError, IndexError) as exc:
        raise InputFileError(f"{path}: {exc}") from exc


def _out_dir(args, cfg: RunConfig) -> Path:
    d = Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_summary(out: Path, command: str, payload: dict) -> None:
    doc = {"command": command, **payload}
    (out / f"{command}_summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _sstl_plant(cfg: RunConfig):
    return sstl_twin(cfg.plant.to_params()) if cfg.sstl is None else cfg.sstl.to_params()


def _dataset(cfg: RunConfig, path: str | None, split_seed: int) -> mapping.MappingDataset:
    if path:
        return _read(mapping.read_dataset_csv, path, mapping.LOCATIONS, split_seed)
    d = cfg.mapping.dataset
    return mapping.generate_dataset(
        d.n_per_location, noise_sigma=(d.noise_pull, d.noise_release), seed=d.seed,
    ).with_split_seed(split_seed)


def _model(cfg: RunConfig, path: str | None) -> mapping.MappingModel:
    path = path or cfg.mapping.model_path
    if path:
        return _read(mapping.load_model, path)
    ds = _dataset(cfg, None, cfg.mapping.dataset.seed)
    if cfg.mapping.kind == "linear":
        return mapping.train_linear(ds)
    return mapping.train_mlp(ds, cfg.mapping.to_mlp_config(cfg.seed))


def _trajectory(cfg: RunConfig, override: str | None, field: str):
    if override:
        if override not in harness.PRESETS:
            raise ConfigError(f"{field}: unknown preset {override!r}; known: {', '.join(harness.PRESETS)}")
        return override
    return trajectory_spec(getattr(cfg, field))


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    plant = _sstl_plant(cfg) if args.system == "sstl" else cfg.plant.to_params()
    name, spec = harness.resolve_trajectory(_trajectory(cfg, args.profile, "probe"), cfg.seed)
    noise = cfg.noise if args.noise is None else args.noise
    trace = simulate_trace(plant, harness.gen_trajectory(spec), spec.dt, noise, cfg.seed)
    path = Path(args.output) if args.output else out / "trace.csv"
    write_trace_csv(trace, path)
    _write_summary(out, "simulate", {
        "system": args.system, "profile": name, "samples": len(trace), "noise_sigma": noise,
        "params": dict(zip(("gamma_p", "beta_p", "gamma_r", "beta_r"), plant.as_tuple())),
        "trace": str(path),
    })
    return EXIT_OK


def cmd_identify(args, cfg: RunConfig) -> int:
    trace = _read(read_trace_csv, args.trace)
    params = identify_params(trace, cfg.ident.to_spec())
    text = format_params_csv(params)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return EXIT_OK


def cmd_gen_dataset(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    ds = _dataset(cfg, None, cfg.mapping.dataset.seed)
    path = Path(args.output) if args.output else out / "dataset.csv"
    mapping.write_dataset_csv(ds, path)
    _write_summary(out, "gen-dataset", {"rows": len(ds), "dataset": str(path)})
    return EXIT_OK


def cmd_train_map(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    ds = _dataset(cfg, args.dataset, cfg.mapping.dataset.seed)
    kind = args.kind or cfg.mapping.kind
    if kind == "linear":
        model = mapping.train_linear(ds)
    else:
        model = mapping.train_mlp(ds, cfg.mapping.to_mlp_config(cfg.seed))
    path = Path(args.output) if args.output else out / "model.json"
    mapping.save_model(model, path)
    train_idx, test_idx = ds.split()
    rp, rr, rt = mapping.rmse_report(model, ds.x[test_idx], ds.y[test_idx])
    _write_summary(out, "train-map", {
        "kind": kind, "train_rows": len(train_idx), "test_rows": len(test_idx),
        "test_rmse_gamma_p": rp, "test_rmse_gamma_r": rr, "test_rmse_total": rt, "model": str(path),
    })
    return EXIT_OK


COMP_HEADER = ("gamma_p_hat", "beta_p", "gamma_r_hat", "beta_r")


def _comp_csv(c: CompensatorConfig) -> str:
    vals = (c.gamma_p_hat, c.beta_p, c.gamma_r_hat, c.beta_r)
    return ",".join(COMP_HEADER) + "\n" + ",".join(f"{v:.6f}" for v in vals) + "\n"


def cmd_probe(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    model = _model(cfg, args.model)
    _, spec = harness.resolve_trajectory(_trajectory(cfg, args.profile or "probe_sstl", "probe"), cfg.seed)
    act = cfg.plant.to_params()
    comp = harness.probe_and_infer(
        _sstl_plant(cfg), cfg.ident.to_spec(), model, spec, cfg.noise, cfg.seed, act.beta_p, act.beta_r,
    )
    text = _comp_csv(comp)
    sys.stdout.write(text)
    path = Path(args.output) if args.output else out / "compensator.csv"
    path.write_text(text)
    _write_summary(out, "probe", {"compensator": asdict(comp), "output": str(path)})
    return EXIT_OK


def cmd_run(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    schemes = harness.SCHEMES if args.scheme == "all" else (args.scheme or cfg.scheme,)
    traj = _trajectory(cfg, args.trajectory, "trajectory")
    model = _model(cfg, args.model) if any(s in ("proposed", "no_bias") for s in schemes) else None
    plant = cfg.plant.to_params()
    sstl = None if cfg.sstl is None else cfg.sstl.to_params()
    reports = []
    for scheme in schemes:
        r = harness.run_experiment(
            scheme, plant, traj, cfg.seed, sstl_plant=sstl, model=model,
            ident_spec=cfg.ident.to_spec(), noise=cfg.noise, lag_tau=cfg.lag_tau, position=args.position,
        )
        reports.append(r)
        write_step_csv(r.trace, out / f"trace_{r.trajectory}_{scheme}.csv")
    harness.write_results_csv(reports, out / "results.csv")
    _write_summary(out, "run", {"reports": [
        {k: v for k, v in asdict(r).items() if k != "trace"} for r in reports
    ]})
    return EXIT_OK


def cmd_ablation(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    if args.seeds < 3:
        raise ConfigError("--seeds must be >= 3")
    ds = _dataset(cfg, args.dataset, 0)
    base = cfg.mapping.to_mlp_config()
    rows, runs = mapping.run_ablation(ds, list(range(args.seeds)), base)
    mapping.write_ablation_csv(rows, out / "ablation.csv")
    with open(out / "ablation_runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", "seed", "rmse_gamma_p", "rmse_gamma_r", "rmse_total", "train_inv_residual"))
        for r in runs:
            w.writerow([r.variant, r.seed] + [f"{v:.6f}" for v in
                       (r.rmse_gamma_p, r.rmse_gamma_r, r.rmse_total, r.train_inv_residual)])
    _write_summary(out, "ablation", {"seeds": args.seeds, "variants": [r.variant for r in rows]})
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    """Identify both loops over a population of geometries and tabulate the statistics."""
    out = _out_dir(args, cfg)
    pairs = analysis.synthetic_pairs(args.n, seed=cfg.seed)
    spec = cfg.ident.to_spec()
    noise = cfg.noise
    identified = []
    for k, p in enumerate(pairs):
        act = identify_params(harness.probe_trace(p.act, harness.PRESETS["probe_act"], noise, cfg.seed + k), spec)
        sst = identify_params(harness.probe_trace(p.sstl, harness.PRESETS["probe_sstl"], noise, cfg.seed + k), spec)
        identified.append(analysis.ParamPair(act, sst, p.config_id))
    inter = {d: analysis.intersystem_stats(identified, d) for d in ("pull", "release")}
    analysis.write_intersystem_csv(inter, out / "intersystem.csv")
    analysis.write_product_csv({
        "act": analysis.product_stats([p.act for p in identified]),
        "sstl": analysis.product_stats([p.sstl for p in identified]),
    }, out / "product.csv")
    _write_summary(out, "analyze", {"pairs": len(identified), "noise_sigma": noise})
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "gen-dataset": cmd_gen_dataset,
    "train-map": cmd_train_map,
    "probe": cmd_probe,
    "run": cmd_run,
    "ablation": cmd_ablation,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help=f"output directory (overrides ${OUTPUT_DIR_ENV} and the config)")
    common.add_argument("--seed", type=int, help="override the config seed")

    parser = argparse.ArgumentParser(prog="sstl", description="Tendon-sheath hysteresis compensation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a probing trace")
    p.add_argument("--system", choices=("act", "sstl"), default="act")
    p.add_argument("--profile", help="trajectory preset (default: config probe)")
    p.add_argument("--noise", type=float, help="sensor noise sigma in N")
    p.add_argument("-o", "--output")

    p = sub.add_parser("identify", parents=[common], help="identify loop parameters from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("-o", "--output")

    p = sub.add_parser("gen-dataset", parents=[common], help="generate the synthetic mapping dataset")
    p.add_argument("-o", "--output")

    p = sub.add_parser("train-map", parents=[common], help="train the slope mapping")
    p.add_argument("--dataset")
    p.add_argument("--kind", choices=("mlp", "linear"))
    p.add_argument("-o", "--output")

    p = sub.add_parser("probe", parents=[common], help="probe the SSTL and infer the compensator")
    p.add_argument("--model")
    p.add_argument("--profile", help="probe preset (default probe_sstl)")
    p.add_argument("-o", "--output")

    p = sub.add_parser("run", parents=[common], help="closed-loop experiment")
    p.add_argument("--scheme", choices=harness.SCHEMES + ("all",))
    p.add_argument("--trajectory", help="trajectory preset (default: config trajectory)")
    p.add_argument("--model")
    p.add_argument("--position", default="sim", help="label for the position column")

    p = sub.add_parser("ablation", parents=[common], help="mapping ablation over seeds")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..N-1)")
    p.add_argument("--dataset")

    p = sub.add_parser("analyze", parents=[common], help="inter-system and slope-product tables")
    p.add_argument("--n", type=int, default=40, help="number of bending configurations")
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else config_from_dict(None)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    except IdentificationError as exc:
        return _fail(EXIT_IDENT, f"identification failed: {exc}")
    except TrainingDivergence as exc:
        return _fail(EXIT_TRAIN, f"training diverged: {exc}")
    except OSError as exc:
        return _fail(EXIT_IO, f"I/O error: {exc}")
    except (SSTLError, ValueError) as exc:
        return _fail(EXIT_FAIL, f"error: {exc}")


def _fail(code: int, message: str) -> int:
    print(f"sstl: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
