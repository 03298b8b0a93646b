"""Command-line harness: ``solve``, ``ablate``, ``validate`` and ``schedule``.

Exit codes: 0 success, 1 a property or solver failure, 2 a usage or
configuration error. Every file written under ``<outdir>/<seed>-<hash>/`` is
a pure function of the config and the seed; wall-clock timings go to a
separate ``timing.csv`` that is never compared.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .core import NoiseModel, Rng
from .correction import admm_correct, qdp_correct
from .diagnostics import (KlBoundInput, kkt_residual, kl_gaussian_injected, mse, oracle_anneal,
                          oracle_constrained_prox, psnr)
from .operators import CountingOperator, as_matrix, build_operator
from .priors import (GaussianPrior, GmmPrior, LinearAutoencoder, latent_prior,
                     squared_exponential_cov)
from .sampler import HybridConfig, run_latent_hybrid, run_pixel
from .tensorio import read_tensor, write_tensor

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

LEVEL_COLUMNS = ["level", "sigma", "sigma_next", "mode", "gamma", "anchor_residual", "residual",
                 "feas_gap", "primal_gap", "steps", "rejected", "f_first", "f_last",
                 "apply", "vjp", "jvp", "probe", "kl_exact", "kl_bound"]
TRACE_COLUMNS = ["level", "k", "s", "F", "alpha", "backtracks", "primal_gap", "feas_gap"]
ABLATE_COLUMNS = ["solver", "step_mode", "seed", "budget", "psnr", "mse", "final_residual",
                  "final_feas_gap", "radius", "feasible", "apply", "vjp", "jvp", "probe"]


def _num(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(row.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# problem construction

def build_prior(cfg: ExperimentConfig):
    p = cfg.problem
    cov = squared_exponential_cov(p.n, p.length, p.scale, p.nugget)
    if p.prior == "gaussian":
        return GaussianPrior(np.zeros(p.n), cov)
    shift = np.full(p.n, p.gmm_shift)
    return GmmPrior([0.5, 0.5], [GaussianPrior(shift, cov), GaussianPrior(-shift, cov)])


def _sample_prior(prior, rng: Rng) -> np.ndarray:
    if isinstance(prior, GaussianPrior):
        return prior.sample(rng)
    pick = int(np.searchsorted(np.cumsum(prior.weights), rng.uniform((1,))[0], side="right"))
    return prior.components[min(pick, len(prior.components) - 1)].sample(rng)


def build_autoencoder(cfg: ExperimentConfig) -> LinearAutoencoder:
    p = cfg.problem
    if p.latent_dim in (0, p.n):
        return LinearAutoencoder.identity(p.n)
    return LinearAutoencoder.random(p.n, p.latent_dim, Rng(p.ae_seed, 3))


def _latent_denoiser(prior, ae):
    if isinstance(prior, GaussianPrior):
        return latent_prior(prior, ae).denoise
    return GmmPrior(prior.weights, [latent_prior(c, ae) for c in prior.components]).denoise


class Problem:
    """Operator, prior, ground truth and measurement for one seed."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.base_op = build_operator(cfg.problem.operator_spec())
        self.prior = build_prior(cfg)
        if cfg.problem.signal == "generated":
            self.x_true = _sample_prior(self.prior, Rng(seed, 0))
        else:
            self.x_true = read_tensor(cfg.problem.signal_path(cfg.base_dir)).reshape(-1)
            if self.x_true.size != cfg.problem.n:
                raise ConfigError(f"signal has {self.x_true.size} entries, problem.n is {cfg.problem.n}")
        self.y = NoiseModel(cfg.problem.beta).sample(self.base_op.apply(self.x_true), Rng(seed, 2))
        self.radius = cfg.solver.correction().radius(self.base_op.output_dim)

    def gaussian_linear(self) -> bool:
        return (self.base_op.linear and isinstance(self.prior, GaussianPrior)
                and self.cfg.solver.mode == "pixel")

    def run(self, corrector=None, correction=None):
        s = self.cfg.solver
        op = CountingOperator(self.base_op)
        rng = Rng(self.seed, 1)
        sched = s.schedule()
        if s.mode == "pixel":
            record = run_pixel(self.y, op, self.prior.denoise, sched,
                               correction or s.correction(), rng, corrector=corrector)
        else:
            ae = build_autoencoder(self.cfg)
            switch = math.inf if s.mode == "latent" else s.sigma_switch
            hybrid = HybridConfig(switch, correction or s.correction(), s.latent_correction())
            record = run_latent_hybrid(self.y, op, _latent_denoiser(self.prior, ae), ae, sched,
                                       hybrid, rng)
        return record, op


def _level_rows(problem: Problem, record):
    rows, trace = [], []
    gauss = isinstance(problem.prior, GaussianPrior)
    for lv in record.levels:
        row = {
            "level": lv.index, "sigma": lv.sigma, "sigma_next": lv.sigma_next, "mode": lv.mode,
            "gamma": lv.gamma, "anchor_residual": lv.anchor_residual, "residual": lv.residual,
            "feas_gap": lv.feas_gap, "primal_gap": lv.primal_gap, "steps": lv.steps,
            "rejected": lv.rejected, "f_first": lv.f_first, "f_last": lv.f_last, **lv.calls,
        }
        res = lv.correction
        if gauss and lv.mode == "pixel" and lv.sigma_next > 0:
            exact, bound = kl_gaussian_injected(KlBoundInput(
                res.anchor, problem.prior.posterior_cov(lv.sigma), res.x, lv.sigma_next))
            row["kl_exact"], row["kl_bound"] = exact, bound
        rows.append(row)
        for t in res.trace:
            trace.append({"level": lv.index, "k": t.k, "s": t.s, "F": t.f_after, "alpha": t.alpha,
                          "backtracks": t.backtracks, "primal_gap": t.primal_gap,
                          "feas_gap": t.feas_gap})
    return rows, trace


def _totals(levels) -> dict:
    out = {"apply": 0, "vjp": 0, "jvp": 0, "probe": 0}
    for lv in levels:
        for k, v in lv.calls.items():
            out[k] += v
    return out


def solve_one(cfg: ExperimentConfig, seed: int, outdir: str) -> dict:
    """Run one seed and write its artifacts; returns the summary dictionary."""
    problem = Problem(cfg, seed)
    record, _ = problem.run()
    rows, trace = _level_rows(problem, record)
    final = record.levels[-1]
    summary = {
        "seed": seed,
        "config_hash": cfg.digest(),
        "mode": cfg.solver.mode,
        "operator": cfg.problem.operator,
        "levels": len(record.levels),
        "radius": problem.radius,
        "psnr": psnr(record.output, problem.x_true),
        "mse": mse(record.output, problem.x_true),
        "final_residual": final.residual,
        "final_feas_gap": final.feas_gap,
        "rejected_steps": sum(lv.rejected for lv in record.levels),
        "calls": _totals(record.levels),
        "budget_per_level": {"pixel": cfg.solver.K * cfg.solver.S,
                             "latent": cfg.solver.latent_K * cfg.solver.latent_S},
    }
    if final.mode == "pixel":
        res = final.correction
        kkt = kkt_residual(res.x, res.v, res.u, res.anchor, problem.y, problem.base_op,
                           final.gamma, res.radius, cfg.solver.rho)
        summary["kkt_final"] = kkt.as_dict()
    kl = [(r["kl_exact"], r["kl_bound"]) for r in rows if "kl_exact" in r]
    if kl:
        summary["kl"] = {"max_exact": max(e for e, _ in kl), "max_bound": max(b for _, b in kl),
                         "bound_holds": all(e <= b for e, b in kl)}
    if problem.gaussian_linear():
        H = as_matrix(problem.base_op)
        pm = problem.prior.posterior_mean(H, problem.y, max(cfg.problem.beta, 1e-12))
        ref = oracle_anneal(problem.y, H, problem.prior.denoise, cfg.solver.schedule().sigmas,
                            problem.radius, Rng(seed, 1))
        sigma_min = cfg.solver.schedule().sigmas[-1]
        pm_prox, _ = oracle_constrained_prox(pm, problem.y, H, sigma_min ** 2, problem.radius)
        summary["oracle"] = {"posterior_mean_psnr": psnr(pm, problem.x_true),
                             "prox_posterior_mean_psnr": psnr(pm_prox, problem.x_true),
                             "exact_prox_psnr": psnr(ref, problem.x_true),
                             "distance_to_exact_prox": float(np.linalg.norm(record.output - ref))}

    run_dir = os.path.join(outdir, f"{seed}-{cfg.digest()}")
    os.makedirs(run_dir, exist_ok=True)
    _write(os.path.join(run_dir, "config.ini"), cfg.replace("runs", seed=seed).dumps())
    _write(os.path.join(run_dir, "levels.csv"), _csv(LEVEL_COLUMNS, rows))
    if cfg.outputs.trace:
        _write(os.path.join(run_dir, "trace.csv"), _csv(TRACE_COLUMNS, trace))
    if cfg.outputs.final:
        write_tensor(record.output, os.path.join(run_dir, "final.ten"))
    _write(os.path.join(run_dir, "summary.json"),
           json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    summary["run_dir"] = run_dir
    return summary


def ablate_one(cfg: ExperimentConfig, seed: int) -> tuple[list[dict], list[dict]]:
    """All solver x step-size arms at a matched budget of ``K * S`` steps per level."""
    if cfg.solver.mode != "pixel":
        raise ConfigError("ablation runs in pixel mode only")
    problem = Problem(cfg, seed)
    budget = cfg.solver.K * cfg.solver.S
    beta = max(cfg.problem.beta, 1e-3)
    rows, timing = [], []
    for solver in cfg.ablate.solvers:
        for step in cfg.ablate.steps:
            correction = cfg.solver.correction().replace(step_mode=step)
            if solver == "qdp":
                def corrector(anchor, y, op, gamma, c):
                    return qdp_correct(anchor, y, op, gamma, beta, budget, c)
            else:
                corrector = admm_correct
            t0 = time.perf_counter()
            record, op = problem.run(corrector=corrector, correction=correction)
            elapsed = time.perf_counter() - t0
            final = record.levels[-1]
            rows.append({
                "solver": solver, "step_mode": step, "seed": seed, "budget": budget,
                "psnr": psnr(record.output, problem.x_true),
                "mse": mse(record.output, problem.x_true),
                "final_residual": final.residual, "final_feas_gap": final.feas_gap,
                "radius": problem.radius,
                "feasible": final.feas_gap <= problem.radius * (1 + 1e-12),
                **op.counts,
            })
            timing.append({"solver": solver, "step_mode": step, "seed": seed,
                           "seconds": round(elapsed, 6)})
    return rows, timing


# commands

def _resolve(args) -> ExperimentConfig:
    if args.config is None:
        cfg = cfgmod.preset("gauss-blur-1d")
    elif args.config.startswith("preset:"):
        cfg = cfgmod.preset(args.config[len("preset:"):])
    else:
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace("runs", seed=args.seed, repeats=1)
    if args.outdir is not None:
        cfg = cfg.replace("outputs", dir=args.outdir)
    return cfg


def _seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.runs.seed + i for i in range(cfg.runs.repeats)]


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


def cmd_solve(args) -> int:
    cfg = _resolve(args)
    outdir = cfg.outputs.dir
    results = _map(solve_one, [(cfg, s, outdir) for s in _seeds(cfg)], args.jobs)
    for r in results:
        line = (f"seed {r['seed']}: psnr {r['psnr']:.3f} dB, mse {r['mse']:.3e}, "
                f"feas gap {r['final_feas_gap']:.4f} / radius {r['radius']:.4f}")
        if "oracle" in r:
            o = r["oracle"]
            line += (f"; exact-prox loop {o['exact_prox_psnr']:.3f} dB, prox of posterior mean "
                     f"{o['prox_posterior_mean_psnr']:.3f} dB")
        print(line)
        print(f"  -> {r['run_dir']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    results = _map(ablate_one, [(cfg, s) for s in _seeds(cfg)], args.jobs)
    rows = [r for rs, _ in results for r in rs]
    timing = [t for _, ts in results for t in ts]
    run_dir = os.path.join(cfg.outputs.dir, f"ablate-{cfg.runs.seed}-{cfg.digest()}")
    os.makedirs(run_dir, exist_ok=True)
    _write(os.path.join(run_dir, "ablate.csv"), _csv(ABLATE_COLUMNS, rows))
    _write(os.path.join(run_dir, "timing.csv"),
           _csv(["solver", "step_mode", "seed", "seconds"], timing))
    for r in rows:
        print(f"{r['solver']:5s} {r['step_mode']:9s} seed {r['seed']}: psnr {r['psnr']:.3f} dB, "
              f"feas gap {r['final_feas_gap']:.4f} (radius {r['radius']:.4f}), "
              f"calls apply={r['apply']} vjp={r['vjp']} jvp={r['jvp']} probe={r['probe']}")
    print(f"  -> {run_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from . import validate
    report = validate.run_all(args.filter, echo=lambda line: print(line, file=sys.stderr))
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    if not report["suites"]:
        print(f"no suite matches filter {args.filter!r}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_schedule(args) -> int:
    cfg = _resolve(args)
    sched = cfg.solver.schedule()
    sys.stdout.write(_csv(["index", "sigma"],
                          [{"index": i, "sigma": s} for i, s in enumerate(sched.sigmas)]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feasprox",
        description="Annealed denoiser sampling with hard feasibility corrections.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file, or preset:NAME (default preset:gauss-blur-1d)")
    common.add_argument("--seed", type=int, help="run a single seed instead of runs.seed/repeats")
    common.add_argument("--outdir", help="override outputs.dir")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for repeats")
    sub.add_parser("solve", parents=[common], help="run the configured sampler")
    sub.add_parser("ablate", parents=[common], help="ADMM vs penalty x step-size grid")
    v = sub.add_parser("validate", help="run the property and acceptance suites")
    v.add_argument("--filter", default="", help="substring selecting suites by name")
    sub.add_parser("schedule", parents=[common], help="print the noise schedule as CSV")
    return parser


COMMANDS = {"solve": cmd_solve, "ablate": cmd_ablate, "validate": cmd_validate,
            "schedule": cmd_schedule}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"feasprox: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, RuntimeError, ValueError) as exc:
        print(f"feasprox: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
