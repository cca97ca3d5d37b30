"""Batch experiment front-end.

Subcommands: spectrum, gate-fidelity, estimate, validate.  Runs are seeded
and reproducible: identical config and seed give byte-identical output up
to the wall-time columns.  Sweep cells derive their seeds from the root
seed through a fixed 64-bit mixing function, so parallel and serial sweeps
emit identical rows.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import chain_model as cm
from . import eigensolver as es
from . import evolution as ev
from . import metrology as mt
from .config import ConfigError, ExperimentConfig, load_config
from .validate import format_report, run_validation

GATE_CSV_HEADER = "gamma,operator,n,T,dt,fidelity,leakage,seed,walltime_s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_COMPUTE = 2
EXIT_VALIDATION = 3


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, float):
        if np.isnan(x):
            return "nan"
        return f"{x:.12g}"
    return str(x)


def _emit(text: str, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_spectrum(cfg: ExperimentConfig, output) -> int:
    try:
        rep = es.ground_space(cm.heisenberg(1, cfg.n, cfg.J), seed=cfg.seed)
    except es.AmbiguousQuartetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    lines = [
        f"chain n={cfg.n} J={_fmt(cfg.J)}",
        "quartet_energies=" + ",".join(_fmt(float(e)) for e in rep.quartet_energies),
        f"splitting={_fmt(rep.splitting)}",
        f"gap={_fmt(rep.gap)}",
        f"max_residual={_fmt(float(rep.levels.residual_norms.max()))}",
        f"seed={cfg.seed}",
    ]
    _emit("\n".join(lines) + "\n", output)
    return EXIT_OK


def _gate_cell(args: dict) -> dict:
    start = time.perf_counter()
    try:
        pert = None
        if args["gamma"] > 0.0:
            pert = cm.PerturbationSpec(args["operator"], args["gamma"], 1, args["n"])
        res = ev.gate_fidelity_experiment(
            args["n"],
            args["T"],
            args["dt"],
            cm.Direction(*args["field"]),
            pert=pert,
            J=args["J"],
            J_f=args["J_f"],
            order=args["order"],
            solver_seed=args["cell_seed"],
        )
        fid, leak = res.fidelity, res.leakage
        err = None
    except Exception as exc:  # cell failures become NaN rows, the sweep survives
        fid, leak, err = float("nan"), float("nan"), str(exc)
    return {
        "index": args["index"],
        "gamma": args["gamma"],
        "operator": args["operator"],
        "fidelity": fid,
        "leakage": leak,
        "seed": args["cell_seed"],
        "walltime_s": time.perf_counter() - start,
        "error": err,
    }


def cmd_gate_fidelity(cfg: ExperimentConfig, output, threads: int, fmt: str) -> int:
    cells = []
    index = 0
    for operator in cfg.operator_labels:
        for gamma in cfg.gamma_list:
            cells.append(
                {
                    "index": index,
                    "gamma": float(gamma),
                    "operator": operator,
                    "n": cfg.n,
                    "T": cfg.total_time,
                    "dt": cfg.dt,
                    "J": cfg.J,
                    "J_f": cfg.J_f,
                    "order": cfg.splitting_order,
                    "field": (cfg.field_direction.x, cfg.field_direction.y, cfg.field_direction.z),
                    "cell_seed": mt.mix_seed(cfg.seed, index),
                }
            )
            index += 1
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_gate_cell, cells))
    else:
        rows = [_gate_cell(c) for c in cells]
    rows.sort(key=lambda r: r["index"])
    for row in rows:
        if row["error"]:
            print(f"cell {row['index']} failed: {row['error']}", file=sys.stderr)

    if fmt == "json":
        payload = [
            {
                "gamma": r["gamma"],
                "operator": r["operator"],
                "n": cfg.n,
                "T": cfg.total_time,
                "dt": cfg.dt,
                "fidelity": r["fidelity"],
                "leakage": r["leakage"],
                "seed": r["seed"],
                "walltime_s": r["walltime_s"],
            }
            for r in rows
        ]
        _emit(json.dumps(payload, indent=2, allow_nan=True) + "\n", output)
        return EXIT_OK
    lines = [GATE_CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    _fmt(r["gamma"]),
                    r["operator"],
                    str(cfg.n),
                    _fmt(cfg.total_time),
                    _fmt(cfg.dt),
                    _fmt(r["fidelity"]),
                    _fmt(r["leakage"]),
                    str(r["seed"]),
                    _fmt(r["walltime_s"]),
                ]
            )
        )
    _emit("\n".join(lines) + "\n", output)
    return EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, output, fmt: str) -> int:
    records_out = []
    for idx, n_samples in enumerate(cfg.N_list):
        start = time.perf_counter()
        cell_seed = mt.mix_seed(cfg.seed, idx)
        factory = None
        if cfg.estimation_mode == "full-chain":
            sampler_memo: dict = {}

            def factory(axis, _cfg=cfg, _memo=sampler_memo):
                key = (round(axis.x, 12), round(axis.y, 12), round(axis.z, 12))
                if key not in _memo:
                    _memo[key] = mt.FullChainSampler(
                        axis,
                        n=_cfg.n,
                        J=_cfg.J,
                        J_f=_cfg.J_f,
                        gate_time=_cfg.total_time,
                        gate_dt=_cfg.dt,
                        order=_cfg.splitting_order,
                    )
                return _memo[key]
        recs = mt.direction_experiment(
            n_samples,
            cfg.trials,
            seed=cell_seed,
            true_axis=cfg.true_axis,
            psi0=np.asarray(cfg.psi0, dtype=float),
            mode=cfg.estimation_mode,
            chain_sampler_factory=factory,
        )
        errors = np.array([r.angular_error for r in recs])
        axes = np.array([r.axis_estimate.as_array() for r in recs])
        mean_axis = axes.mean(axis=0)
        nrm = np.linalg.norm(mean_axis)
        axis_estimate = (mean_axis / nrm).tolist() if nrm > 1e-12 else [0.0, 0.0, 1.0]

        e_f_estimate = None
        residual = None
        if cfg.backgrounds:
            rec_runs = mt.reconstruction_experiment(
                cfg.J_f,
                cfg.field_direction,
                cfg.backgrounds[0],
                cfg.backgrounds[1],
                n_samples,
                cfg.trials,
                seed=cell_seed,
            )
            e_f_estimate = float(np.mean([r.E_f_estimate for r in rec_runs]))
            residual = float(np.mean([r.residual for r in rec_runs]))

        records_out.append(
            {
                "mode": cfg.estimation_mode,
                "N": int(n_samples),
                "trials": cfg.trials,
                "axis_estimate": [round(float(x), 12) for x in axis_estimate],
                "mean_angular_error": float(errors.mean()),
                "var_angular_error": float(errors.var(ddof=1)) if len(errors) > 1 else 0.0,
                "E_f_estimate": e_f_estimate,
                "residual": residual,
                "seed": cell_seed,
                "degenerate_trials": int(sum(r.degenerate for r in recs)),
                "walltime_s": time.perf_counter() - start,
            }
        )
    if fmt == "csv":
        header = (
            "mode,N,trials,axis_x,axis_y,axis_z,mean_angular_error,var_angular_error,"
            "E_f_estimate,residual,seed,degenerate_trials,walltime_s"
        )
        lines = [header]
        for r in records_out:
            lines.append(
                ",".join(
                    [
                        r["mode"],
                        str(r["N"]),
                        str(r["trials"]),
                        _fmt(r["axis_estimate"][0]),
                        _fmt(r["axis_estimate"][1]),
                        _fmt(r["axis_estimate"][2]),
                        _fmt(r["mean_angular_error"]),
                        _fmt(r["var_angular_error"]),
                        _fmt(r["E_f_estimate"]),
                        _fmt(r["residual"]),
                        str(r["seed"]),
                        str(r["degenerate_trials"]),
                        _fmt(r["walltime_s"]),
                    ]
                )
            )
        _emit("\n".join(lines) + "\n", output)
    else:
        _emit(json.dumps(records_out, indent=2) + "\n", output)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, output) -> int:
    results = run_validation(seed=cfg.seed)
    _emit(format_report(results) + "\n", output)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinsense",
        description="Spin-1 chain simulator for protected edge-mode field sensing",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "gate-fidelity", "estimate", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--threads", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--output", default=None, help="write results to this path")
        p.add_argument("--format", choices=("csv", "json"), default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.output is not None:
            cfg.output_path = args.output
        if args.format is not None:
            cfg.output_format = args.format
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    fmt = cfg.output_format
    try:
        if args.command == "spectrum":
            return cmd_spectrum(cfg, cfg.output_path)
        if args.command == "gate-fidelity":
            return cmd_gate_fidelity(cfg, cfg.output_path, max(1, args.threads), fmt or "csv")
        if args.command == "estimate":
            return cmd_estimate(cfg, cfg.output_path, fmt or "json")
        if args.command == "validate":
            return cmd_validate(cfg, cfg.output_path)
    except (es.ConvergenceError, es.AmbiguousQuartetError, RuntimeError, ValueError) as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_CONFIG


def entry_point():
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()
