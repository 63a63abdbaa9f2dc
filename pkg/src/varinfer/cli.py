"""Command-line entry points.

Subcommands: ``simulate``, ``fit``, ``test-global``, ``test-fdr``,
``experiment``. Exit code 0 on success, 1 on usage errors, 2 on
numerical failures (with a machine-readable JSON error on stderr).
Every output file is written atomically (temp file plus rename).

Defaults for ``--threads`` and ``--log-level`` can be overridden with the
environment variables ``VARINFER_THREADS`` and ``VARINFER_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import em, fileio
from .experiments import Scenario, StudyConfig, StudyError, run_estimation_study, run_fdr_study, run_global_study
from .inference import fdr_select, global_test, test_matrix
from .model import Dataset, HypothesisSpec, ModelParams, NonStationaryError
from .simplex import InfeasibleError
from .simulate import NetworkSpec, SimConfig, gen_data, gen_structure

USAGE_EXIT = 1
NUMERICAL_EXIT = 2

ENV_PREFIX = "VARINFER_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env_default(name: str, fallback):
    return os.environ.get(ENV_PREFIX + name, fallback)


def _build_parser() -> _Parser:
    parser = _Parser(prog="varinfer", description=__doc__)
    parser.add_argument("--threads", type=int, default=int(_env_default("THREADS", 0)),
                        help="worker processes for experiments (0 = machine parallelism)")
    parser.add_argument("--log-level", default=_env_default("LOG_LEVEL", "WARNING"))
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a structure and sample a trajectory")
    p_sim.add_argument("--kind", required=True)
    p_sim.add_argument("--p", type=int, required=True)
    p_sim.add_argument("--T", type=int, required=True)
    p_sim.add_argument("--snorm", type=float, default=0.97)
    p_sim.add_argument("--sigma-eta", type=float, required=True)
    p_sim.add_argument("--sigma-eps", type=float, required=True)
    p_sim.add_argument("--burn-in", type=int, default=0)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="sparse EM fit of the observed series")
    p_fit.add_argument("--y", required=True)
    p_fit.add_argument("--tau", default="auto")
    p_fit.add_argument("--cv-grid", default="default")
    p_fit.add_argument("--max-iters", type=int, default=50)
    p_fit.add_argument("--stop-tol", type=float, default=1e-3)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", required=True)

    for name in ("test-global", "test-fdr"):
        p_t = sub.add_parser(name, help=f"{name.replace('-', ' ')} of the transition matrix")
        p_t.add_argument("--y", required=True)
        p_t.add_argument("--theta", required=True)
        p_t.add_argument("--a0", default=None, help="null matrix CSV (default: zero matrix)")
        p_t.add_argument("--s-mask", default=None, help="0/1 CSV mask of tested entries (default: all)")
        if name == "test-global":
            p_t.add_argument("--alpha", type=float, default=0.05)
            p_t.add_argument("--out", default=None)
        else:
            p_t.add_argument("--beta", type=float, default=0.05)
            p_t.add_argument("--out", required=True)

    p_exp = sub.add_parser("experiment", help="run a Monte Carlo study")
    p_exp.add_argument("--study", choices=("estimation", "global", "fdr"), required=True)
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", required=True)
    return parser


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    net = NetworkSpec(kind=args.kind, p=args.p, target_spectral_norm=args.snorm, seed=args.seed)
    config = SimConfig(network=net, T=args.T, sigma_eta=args.sigma_eta,
                       sigma_eps=args.sigma_eps, burn_in=args.burn_in, seed=args.seed)
    a_star = gen_structure(net)
    params = ModelParams(a_star, args.sigma_eta**2, args.sigma_eps**2)
    data = gen_data(params, config)
    out = _outdir(args.out)
    fileio.save_matrix(out / "y.csv", data.y)
    fileio.save_matrix(out / "x.csv", data.x)
    fileio.save_matrix(out / "A.csv", a_star)
    fileio.save_params(out / "params.json", params, a_path="A.csv")
    return 0


def _parse_tau(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--tau must be a number or 'auto', got {text!r}")
    if value < 0:
        raise UsageError("--tau must be >= 0")
    return value


def _parse_grid(text: str) -> tuple:
    if text == "default":
        return em.DEFAULT_CV_GRID
    try:
        grid = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--cv-grid must be comma-separated numbers or 'default', got {text!r}")
    if not grid or any(g <= 0 for g in grid):
        raise UsageError("--cv-grid multipliers must be positive")
    return grid


def _cmd_fit(args) -> int:
    data = Dataset(fileio.load_matrix(args.y))
    config = em.EmConfig(
        tau=_parse_tau(args.tau),
        max_iters=args.max_iters,
        stop_tol=args.stop_tol,
        cv_grid=_parse_grid(args.cv_grid),
        seed=args.seed,
    )
    theta, diag = em.em_fit(data, config)
    out = _outdir(args.out)
    fileio.save_matrix(out / "A_hat.csv", theta.A)
    fileio.save_params(out / "theta_hat.json", theta, a_path="A_hat.csv")
    doc = {
        "schema_version": fileio.SCHEMA_VERSION,
        "iterations": diag.iterations,
        "selected_tau": diag.selected_tau,
        "loglik_trace": diag.loglik_trace,
        "param_deltas": diag.param_deltas,
        "clamp_events": diag.clamp_events,
        "stopped_nonstationary": diag.stopped_nonstationary,
    }
    fileio.write_text_atomic(out / "diagnostics.json", json.dumps(doc, indent=2) + "\n")
    return 0


def _load_test_inputs(args):
    data = Dataset(fileio.load_matrix(args.y))
    theta = fileio.load_params(args.theta)
    p = data.p
    if args.a0 is None:
        a0 = np.zeros((p, p))
    else:
        a0 = fileio.load_matrix(args.a0)
    if args.s_mask is None:
        spec = HypothesisSpec(a0)
    else:
        mask = fileio.load_matrix(args.s_mask) != 0.0
        spec = HypothesisSpec(a0, frozenset(map(tuple, np.argwhere(mask))))
    return data, theta, a0, spec


def _cmd_test_global(args) -> int:
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    data, theta, a0, spec = _load_test_inputs(args)
    result = global_test(test_matrix(data, theta, a0), spec, args.alpha)
    doc = {
        "schema_version": fileio.SCHEMA_VERSION,
        "G_S": result.G_S,
        "threshold": result.threshold,
        "p_value": result.p_value,
        "reject": result.reject,
        "alpha": result.alpha,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out is not None:
        fileio.write_text_atomic(args.out, text)
    sys.stdout.write(text)
    return 0


def _cmd_test_fdr(args) -> int:
    if not 0.0 < args.beta < 1.0:
        raise UsageError("--beta must lie in (0, 1)")
    data, theta, a0, spec = _load_test_inputs(args)
    tm = test_matrix(data, theta, a0)
    result = fdr_select(tm, spec, args.beta)
    out = _outdir(args.out)
    doc = {
        "schema_version": fileio.SCHEMA_VERSION,
        "t_hat": result.t_hat,
        "n_rejections": len(result.rejections),
        "fdp_estimate_at_t_hat": result.fdp_estimate_at_t_hat,
        "beta": result.beta,
    }
    text = json.dumps(doc, indent=2) + "\n"
    fileio.write_text_atomic(out / "result.json", text)
    lines = ["i,j,H_ij"]
    for i, j in sorted(result.rejections):
        lines.append(f"{i},{j},{fileio.format_float(tm.H[i, j])}")
    fileio.write_text_atomic(out / "rejections.csv", "\n".join(lines) + "\n")
    sys.stdout.write(text)
    return 0


def _study_config(doc: dict, threads: int) -> StudyConfig:
    try:
        scenarios = tuple(
            Scenario(
                network=NetworkSpec(
                    kind=s["kind"],
                    p=int(s["p"]),
                    target_spectral_norm=float(s.get("target_spectral_norm", 0.97)),
                ),
                T=int(s["T"]),
                sigma_eps=float(s["sigma_eps"]),
                sigma_eta=float(s["sigma_eta"]),
            )
            for s in doc["scenarios"]
        )
        em_doc = doc.get("em", {})
        em_config = em.EmConfig(
            tau=em_doc.get("tau", "auto"),
            max_iters=int(em_doc.get("max_iters", 50)),
            stop_tol=float(em_doc.get("stop_tol", 1e-3)),
            cv_grid=tuple(em_doc.get("cv_grid", em.DEFAULT_CV_GRID)),
        )
        return StudyConfig(
            scenarios=scenarios,
            n_replicates=int(doc["n_replicates"]),
            seed=int(doc["seed"]),
            alpha=float(doc.get("alpha", 0.05)),
            beta=float(doc.get("beta", 0.05)),
            estimators=tuple(doc.get("estimators", ("sparse_em", "standard_em", "naive_dantzig"))),
            em=em_config,
            use_oracle_params=bool(doc.get("use_oracle_params", False)),
            threads=threads,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad study config: {exc}")


def _cmd_experiment(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    config = _study_config(doc, threads)
    runner = {
        "estimation": run_estimation_study,
        "global": run_global_study,
        "fdr": run_fdr_study,
    }[args.study]
    report = runner(config)
    fileio.write_text_atomic(args.out, report.to_csv())
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "test-global": _cmd_test_global,
    "test-fdr": _cmd_test_fdr,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    logging.basicConfig(level=args.log_level.upper())
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (NonStationaryError, InfeasibleError, StudyError, np.linalg.LinAlgError,
            ArithmeticError, RuntimeError) as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc), file=sys.stderr)
        return NUMERICAL_EXIT
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except Exception as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc), file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
