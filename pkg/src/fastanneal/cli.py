"""Command-line front end.

    fastanneal <command> --seed SEED [--preset NAME] [--config FILE]
               [--set key=value ...] [--threads K] [--out-dir DIR]

Commands: anneal, rate, benchmark, couple, pf-check.  Exit status is 0 on
success, 2 on configuration errors and 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._rng import make_rng
from .acceptance import from_config as acceptance_from_config
from .annealer import AnnealerConfig, AnnealingError, Objective, run
from .config import ConfigError, canonical_json, config_hash, load_file, parse_override, resolve
from .coupling import SampleMeanObjective, estimate_kernel_tv
from .domain import BoxDomain, kernel_from_config, sample_uniform
from .experiments import (BenchmarkStudy, ExceedanceCurve, benchmark_objective,
                          compare_classical_fast, exceedance_curves, fit_loglog_slope,
                          fit_tv_linear, pf_check, run_benchmark_study, coupling_grid,
                          write_coupling_csv, write_curves_csv, write_fits_csv)
from .schedules import cooling_from_config, precision_from_config
from .ssm import BenchmarkModel, BenchmarkParams, CircleModel, LinearGaussianModel, simulate


# ---------------------------------------------------------------------------
# building objects from a resolved config


def build_domain(cfg) -> BoxDomain:
    ls = cfg["domain.log_scale"] or None
    return BoxDomain(cfg["domain.lower"], cfg["domain.upper"], ls)


def build_annealer(cfg, seed: int) -> AnnealerConfig:
    dom = build_domain(cfg)
    step = cfg["kernel.step"]
    return AnnealerConfig(
        acceptance=acceptance_from_config(cfg["acceptance.kind"], cfg["acceptance.tau"]),
        cooling=cooling_from_config(cfg["cooling.kind"], cfg["cooling.alpha"], cfg["cooling.scale"],
                                    cfg["cooling.beta0"], cfg["cooling.beta"]),
        kernel=kernel_from_config(cfg["kernel.kind"], dom, cfg["kernel.step_rule"],
                                  (step[0] if len(step) == 1 else step) if step else None),
        domain=dom,
        iterations=cfg["annealer.iterations"],
        seed=seed,
        precision=precision_from_config(cfg["precision.kind"], cfg["precision.n"], cfg["precision.n0"],
                                        cfg["precision.n1"], cfg["precision.delta"], cfg["precision.floor"]),
        record_every=cfg["annealer.record_every"],
    )


def _neg_abs(points):
    return -np.abs(points).sum(axis=-1)


def _noisy_neg_abs_sampler(noise: float):
    def h(points, size, rng):
        return _neg_abs(points)[:, None] + noise * rng.standard_normal((points.shape[0], size))
    return h


def build_objective(cfg, seed: int):
    """Returns ``(objective, exact_psi, psi_max)``; the last two are ``None`` when unknown."""
    name = cfg["objective.name"]
    if name == "neg_abs":
        return Objective.exact(_neg_abs, vectorized=True), _neg_abs, 0.0
    if name == "noisy_neg_abs":
        sm = SampleMeanObjective(_noisy_neg_abs_sampler(cfg["objective.noise"]))
        return sm.objective, _neg_abs, 0.0
    params = BenchmarkParams(*cfg["benchmark.theta0"])
    _, obs = simulate(BenchmarkModel(), params.as_array(), cfg["benchmark.T"], make_rng(seed, 0))
    return benchmark_objective(obs), None, None


# ---------------------------------------------------------------------------
# output helpers


def _write_metadata(out_dir, command, cfg, seed, extra=None) -> None:
    meta = {
        "command": command,
        "seed": seed,
        "version": __version__,
        "config_hash": config_hash(cfg),
        "config": json.loads(canonical_json(cfg)),
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "metadata.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _csv_writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


# ---------------------------------------------------------------------------
# commands


def cmd_anneal(cfg, seed, out_dir, threads) -> int:
    acfg = build_annealer(cfg, seed)
    objective, _, _ = build_objective(cfg, seed)
    path = os.path.join(out_dir, "trajectory.csv")
    try:
        traj = run(acfg, objective)
    except AnnealingError as exc:
        exc.trajectory.write_csv(path)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    traj.write_csv(path)
    _write_metadata(out_dir, "anneal", cfg, seed, {"final_theta": [float(v) for v in traj.final_theta]})
    print(f"final theta: {' '.join(repr(float(v)) for v in traj.final_theta)}")
    return 0


def _synthetic_selftest(cfg, out_dir) -> int:
    ns = np.asarray(cfg["rate.checkpoints"], dtype=float)
    ns = ns[ns > 0]
    curve = ExceedanceCurve(1.0, [(int(n), float(n ** (-1 / 3)), 0.0, 0) for n in ns])
    fit = fit_loglog_slope(curve)
    write_curves_csv(os.path.join(out_dir, "curve.csv"), [curve])
    write_fits_csv(os.path.join(out_dir, "fit.csv"), [("synthetic", 1.0, fit)])
    print(f"synthetic n^(-1/3) curve: slope {fit.slope!r}, r^2 {fit.r_squared!r}")
    return 0


def cmd_rate(cfg, seed, out_dir, threads) -> int:
    if cfg["rate.synthetic"]:
        return _synthetic_selftest(cfg, out_dir)
    cks, reps, eps = cfg["rate.checkpoints"], cfg["rate.reps"], cfg["rate.epsilons"]
    fit_min, fit_max = cfg["rate.fit_min"], cfg["rate.fit_max"]
    if cfg["rate.compare"]:
        lo, hi = cfg["domain.lower"], cfg["domain.upper"]
        if lo != [-0.5] or hi != [0.5] or cfg["objective.name"] != "neg_abs":
            raise ConfigError("rate.compare: the paired comparison runs on the one-dimensional "
                              "neg_abs example over [-0.5, 0.5]")
        comp = compare_classical_fast(cks, reps, seed, eps, alpha=cfg["cooling.alpha"],
                                      tau=cfg["acceptance.tau"], beta0=cfg["cooling.beta0"],
                                      block_size=cfg["rate.block_size"], threads=threads,
                                      fit_min=fit_min, fit_max=fit_max)
        write_curves_csv(os.path.join(out_dir, "curve_fast.csv"), comp.fast)
        write_curves_csv(os.path.join(out_dir, "curve_classical.csv"), comp.classical)
        rows = ([("fast", c.epsilon, f) for c, f in zip(comp.fast, comp.fast_fits)]
                + [("classical", c.epsilon, f) for c, f in zip(comp.classical, comp.classical_fits)])
        write_fits_csv(os.path.join(out_dir, "fit.csv"), rows)
        fh, w = _csv_writer(os.path.join(out_dir, "paired.csv"))
        with fh:
            w.writerow(["epsilon", "n", "z", "p_value"])
            for e, z, p in comp.paired:
                w.writerow([repr(float(e)), comp.final_n, repr(z), repr(p)])
    else:
        acfg = build_annealer(cfg, seed)
        objective, psi, psi_max = build_objective(cfg, seed)
        if psi is None:
            raise ConfigError("objective.name: rate measurement needs an objective with known exact values")
        curves = exceedance_curves(acfg, objective, psi_max, eps, cks, reps, seed, exact_psi=psi,
                                   block_size=cfg["rate.block_size"], threads=threads)
        label = f"{cfg['acceptance.kind']}-{cfg['cooling.kind']}"
        write_curves_csv(os.path.join(out_dir, "curve.csv"), curves)
        rows = [(label, c.epsilon, fit_loglog_slope(c, fit_min, fit_max)) for c in curves]
        write_fits_csv(os.path.join(out_dir, "fit.csv"), rows)
    for scheme, e, f in rows:
        print(f"{scheme} epsilon={e}: slope {f.slope:.4f} (r^2 {f.r_squared:.3f}) over n in {f.n_range}")
    _write_metadata(out_dir, "rate", cfg, seed)
    return 0


def cmd_benchmark(cfg, seed, out_dir, threads) -> int:
    study = BenchmarkStudy(T=cfg["benchmark.T"], reps=cfg["benchmark.reps"],
                           iterations=cfg["annealer.iterations"],
                           theta0=BenchmarkParams(*cfg["benchmark.theta0"]),
                           block_size=cfg["benchmark.block_size"])
    acfg = build_annealer(cfg, seed)
    if acfg.precision is None:
        raise ConfigError("precision.kind: the benchmark needs a precision schedule")
    res = run_benchmark_study(study, seed, threads=threads, cfg=acfg)
    res.write_csvs(out_dir)
    _write_metadata(out_dir, "benchmark", cfg, seed, {"data_stream": [seed, 0]})
    for name, m, s in zip(res.names, res.mean, res.std):
        print(f"{name}: mean {m:.4g}  stderr {s:.3g}")
    return 0


def cmd_couple(cfg, seed, out_dir, threads) -> int:
    model = CircleModel(cfg["circle.drift"], cfg["circle.sigma"], cfg["circle.kappa"])
    rows = coupling_grid(model, cfg["couple.T"], cfg["couple.Ns"], cfg["couple.ratios"],
                         cfg["couple.reps"], seed, threads)
    write_coupling_csv(os.path.join(out_dir, "coupling.csv"), rows)
    fh, w = _csv_writer(os.path.join(out_dir, "coupling_fit.csv"))
    with fh:
        w.writerow(["t", "slope", "intercept", "r_squared"])
        xs = {(Np - N) / N for _, N, Np, *_ in rows}
        if len(xs) >= 2:
            for t in range(1, cfg["couple.T"] + 1):
                f = fit_tv_linear(rows, t)
                w.writerow([t, repr(f.slope), repr(f.intercept), repr(f.r_squared)])
                if t == cfg["couple.t_fit"]:
                    print(f"t={t}: tv_bound ~ {f.intercept:.4f} + {f.slope:.4f} (N'-N)/N, r^2 {f.r_squared:.4f}")
    print(f"max tv_bound: {max(r[5] for r in rows):.4g}")
    if cfg["couple.kernel_reps"] > 0:
        dom = build_domain(cfg)
        sm = SampleMeanObjective(_noisy_neg_abs_sampler(cfg["objective.noise"]))
        acc = acceptance_from_config(cfg["acceptance.kind"], cfg["acceptance.tau"])
        kern = kernel_from_config(cfg["kernel.kind"], dom, cfg["kernel.step_rule"],
                                  cfg["kernel.step"] or None)
        N, Np, beta = cfg["couple.kernel_N"], cfg["couple.kernel_Nprime"], cfg["couple.kernel_beta"]
        rate, se = estimate_kernel_tv(lambda r, k: sample_uniform(dom, r, k), kern, dom, acc, beta, sm,
                                      N, Np, make_rng(seed, 3), cfg["couple.kernel_reps"])
        fh, w = _csv_writer(os.path.join(out_dir, "kernel_tv.csv"))
        with fh:
            w.writerow(["beta", "N", "Nprime", "reps", "disagreement", "stderr"])
            w.writerow([repr(beta), N, Np, cfg["couple.kernel_reps"], repr(rate), repr(se)])
        print(f"kernel disagreement rate {rate:.4g} +- {se:.2g}")
    _write_metadata(out_dir, "couple", cfg, seed)
    return 0


def cmd_pf_check(cfg, seed, out_dir, threads) -> int:
    model = LinearGaussianModel(cfg["lg.phi"], cfg["lg.sigma_v"], cfg["lg.c"], cfg["lg.sigma_w"],
                                cfg["lg.m0"], cfg["lg.s0"])
    rep = pf_check(model, cfg["pf.T"], cfg["pf.Ns"], cfg["pf.seeds"], seed, threads)
    rel, sd = rep.mean_rel_error(), rep.sd()
    fh, w = _csv_writer(os.path.join(out_dir, "pf_check.csv"))
    with fh:
        w.writerow(["N", "kalman", "mean_loglik", "sd", "mean_rel_error"])
        for i, N in enumerate(rep.Ns):
            w.writerow([N, repr(float(rep.kalman)), repr(float(rep.logliks[i].mean())),
                        repr(float(sd[i])), repr(float(rel[i]))])
    print(f"kalman log-likelihood {rep.kalman:.6f}")
    for i, N in enumerate(rep.Ns):
        print(f"N={N}: mean relative error {100 * rel[i]:.3f}%  sd {sd[i]:.4f}")
    _write_metadata(out_dir, "pf-check", cfg, seed)
    return 0


COMMANDS = {
    "anneal": cmd_anneal,
    "rate": cmd_rate,
    "benchmark": cmd_benchmark,
    "couple": cmd_couple,
    "pf-check": cmd_pf_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastanneal", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--seed", type=int, required=True, help="root seed (required)")
        s.add_argument("--config", help="YAML file with dotted keys")
        s.add_argument("--preset", help="named preset applied before the config file")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        s.add_argument("--threads", type=int, default=1, help="concurrent replication blocks")
        s.add_argument("--out-dir", default=".", help="directory for CSV and metadata output")
        if name == "benchmark":
            s.add_argument("--desk-scale", action="store_true", help="T=100, reps=20, 2000 iterations")
        if name == "rate":
            s.add_argument("--synthetic", action="store_true",
                           help="fit an exact n^(-1/3) curve instead of running chains")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        file_values = load_file(args.config) if args.config else {}
        overrides = dict(parse_override(o) for o in args.overrides)
        if getattr(args, "synthetic", False):
            overrides["rate.synthetic"] = True
        cfg = resolve(args.preset, file_values, overrides, getattr(args, "desk_scale", False))
        os.makedirs(args.out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, args.seed, args.out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
