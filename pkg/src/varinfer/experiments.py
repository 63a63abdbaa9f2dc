"""Monte Carlo studies: estimation error, global size/power, FDR/TPR.

Each replicate is a pure function of (study config, scenario index,
replicate index): the replicate's root seed sequence is
``SeedSequence(entropy=config.seed, spawn_key=(scenario_index,
replicate_index))`` and its first two 64-bit words seed the structure
draw and the trajectory noise. Replicates may therefore run across any
number of worker processes with bit-identical results; aggregation
always happens in replicate order.

Failed replicates are counted and excluded; a scenario errors out if
more than 10% of its replicates fail.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .em import EmConfig, em_fit, initialize, standard_em_fit
from .fileio import format_float
from .inference import fdr_select, global_test, test_matrix
from .model import Dataset, HypothesisSpec, ModelParams
from .simulate import NetworkSpec, SimConfig, gen_data, gen_structure

log = logging.getLogger(__name__)

ESTIMATORS = ("sparse_em", "standard_em", "naive_dantzig")

REPORT_COLUMNS = (
    "study", "kind", "p", "T", "snorm", "sigma_eps", "sigma_eta",
    "metric", "mean", "se", "n_ok", "n_fail",
)


class StudyError(RuntimeError):
    """Raised when a scenario loses more than 10% of its replicates."""


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation grid."""

    network: NetworkSpec
    T: int
    sigma_eps: float
    sigma_eta: float

    def label(self) -> dict:
        return {
            "kind": self.network.kind,
            "p": self.network.p,
            "T": self.T,
            "snorm": self.network.target_spectral_norm,
            "sigma_eps": self.sigma_eps,
            "sigma_eta": self.sigma_eta,
        }


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple
    n_replicates: int
    seed: int
    alpha: float = 0.05
    beta: float = 0.05
    estimators: tuple = ESTIMATORS
    em: EmConfig = field(default_factory=EmConfig)
    use_oracle_params: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie in (0, 1)")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator {est!r}")


@dataclass(frozen=True)
class StudyReport:
    """Flat list of metric rows, one per scenario x metric."""

    study: str
    rows: tuple

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            cells = []
            for col in REPORT_COLUMNS:
                v = row[col]
                cells.append(format_float(v) if isinstance(v, float) else str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def value(self, metric: str, scenario_index: int = 0) -> float:
        matches = [r for r in self.rows if r["metric"] == metric]
        return matches[scenario_index]["mean"]


def _replicate_model(config: StudyConfig, s_idx: int, r_idx: int):
    """Draw the replicate's ground truth and data from its seed stream."""
    scenario = config.scenarios[s_idx]
    root = np.random.SeedSequence(entropy=int(config.seed), spawn_key=(s_idx, r_idx))
    structure_seed, data_seed = (int(s) for s in root.generate_state(2, np.uint64))
    net = dataclasses.replace(scenario.network, seed=structure_seed)
    a_star = gen_structure(net)
    params = ModelParams(a_star, scenario.sigma_eta**2, scenario.sigma_eps**2)
    sim = SimConfig(
        network=net,
        T=scenario.T,
        sigma_eta=scenario.sigma_eta,
        sigma_eps=scenario.sigma_eps,
        seed=data_seed,
    )
    data = gen_data(params, sim)
    return params, Dataset(data.y)


def _estimation_replicate(config: StudyConfig, s_idx: int, r_idx: int) -> dict:
    params, observed = _replicate_model(config, s_idx, r_idx)
    out = {}
    for est in config.estimators:
        if est == "sparse_em":
            theta, _ = em_fit(observed, config.em)
            a_hat = theta.A
        elif est == "standard_em":
            theta, _ = standard_em_fit(observed, config.em)
            a_hat = theta.A
        else:
            a_hat = initialize(observed).A
        out[est] = float(np.linalg.norm(a_hat - params.A))
    return out


def _fitted_params(config: StudyConfig, params: ModelParams, observed: Dataset) -> ModelParams:
    if config.use_oracle_params:
        return params
    theta, _ = em_fit(observed, config.em)
    return theta


def _global_replicate(config: StudyConfig, s_idx: int, r_idx: int) -> dict:
    params, observed = _replicate_model(config, s_idx, r_idx)
    theta = _fitted_params(config, params, observed)
    p = params.p
    spec_null = HypothesisSpec(params.A)
    spec_zero = HypothesisSpec(np.zeros((p, p)))
    tm_size = test_matrix(observed, theta, params.A)
    tm_power = test_matrix(observed, theta, np.zeros((p, p)))
    return {
        "size": float(global_test(tm_size, spec_null, config.alpha).reject),
        "power": float(global_test(tm_power, spec_zero, config.alpha).reject),
    }


def _fdr_replicate(config: StudyConfig, s_idx: int, r_idx: int) -> dict:
    params, observed = _replicate_model(config, s_idx, r_idx)
    theta = _fitted_params(config, params, observed)
    p = params.p
    spec = HypothesisSpec(np.zeros((p, p)))
    tm = test_matrix(observed, theta, np.zeros((p, p)))
    result = fdr_select(tm, spec, config.beta)
    null_mask = params.A == 0.0
    n_alt = int((~null_mask).sum())
    false_hits = sum(1 for (i, j) in result.rejections if null_mask[i, j])
    true_hits = len(result.rejections) - false_hits
    return {
        "fdp": false_hits / max(len(result.rejections), 1),
        "tpr": true_hits / max(n_alt, 1),
    }


_REPLICATE_FN = {
    "estimation": _estimation_replicate,
    "global": _global_replicate,
    "fdr": _fdr_replicate,
}


def _run_one(args):
    study, config, s_idx, r_idx = args
    try:
        return s_idx, r_idx, _REPLICATE_FN[study](config, s_idx, r_idx), None
    except Exception as exc:  # failures are tallied, not fatal per replicate
        return s_idx, r_idx, None, f"{type(exc).__name__}: {exc}"


def _run_study(study: str, config: StudyConfig, metrics: tuple) -> StudyReport:
    tasks = [
        (study, config, s_idx, r_idx)
        for s_idx in range(len(config.scenarios))
        for r_idx in range(config.n_replicates)
    ]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            raw = list(pool.map(_run_one, tasks, chunksize=1))
    else:
        raw = [_run_one(t) for t in tasks]
    # Deterministic aggregation order regardless of scheduling.
    raw.sort(key=lambda item: (item[0], item[1]))

    rows = []
    for s_idx, scenario in enumerate(config.scenarios):
        ok = [res for s, _, res, err in raw if s == s_idx and err is None]
        failures = [err for s, _, res, err in raw if s == s_idx and err is not None]
        for err in failures:
            log.warning("scenario %d replicate failed: %s", s_idx, err)
        if len(failures) > 0.1 * config.n_replicates:
            raise StudyError(
                f"scenario {s_idx}: {len(failures)}/{config.n_replicates} replicates failed; "
                f"first failure: {failures[0]}"
            )
        label = scenario.label()
        for metric in metrics:
            values = np.array([r[metric] for r in ok], dtype=float)
            mean = float(np.mean(values))
            se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
            rows.append({
                "study": study, **label, "metric": metric,
                "mean": mean, "se": se, "n_ok": len(ok), "n_fail": len(failures),
            })
    return StudyReport(study=study, rows=tuple(rows))


def run_estimation_study(config: StudyConfig) -> StudyReport:
    """Frobenius estimation error of each requested estimator."""
    return _run_study("estimation", config, tuple(config.estimators))


def run_global_study(config: StudyConfig) -> StudyReport:
    """Empirical size (null A0 = A_*) and power (A0 = 0) of the global test."""
    return _run_study("global", config, ("size", "power"))


def run_fdr_study(config: StudyConfig) -> StudyReport:
    """Mean false discovery proportion and true positive rate at level beta."""
    return _run_study("fdr", config, ("fdp", "tpr"))
