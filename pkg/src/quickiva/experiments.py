"""Monte-Carlo drivers for the extraction and separation benchmarks."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import metrics, simgen
from .extract import StoppingRule, run_extraction
from .metrics import TrialOutcome
from .model import DegenerateError
from .score import get_score
from .separate import RankDeficiencyError, run_separation

log = logging.getLogger(__name__)

EXPERIMENTS = ("extraction", "csv_extraction", "separation", "selftest")

# Algorithm ids: "quickice*" run each mixture on its own (K = 1).
EXTRACTION_ALGORITHMS = ("quickive1", "quickive2", "gradient", "quickice1", "quickice2", "gradient_ice")
SEPARATION_ALGORITHMS = ("quickiva1", "quickiva2")

DEFAULTS: Dict[str, dict] = {
    "extraction": dict(
        K=3, d=6, T=1, n_block=1000, trials=1000, algorithms=["quickive1", "quickive2", "gradient"]
    ),
    "csv_extraction": dict(
        K=3, d=6, T=3, n_block=1000, trials=1000, algorithms=["quickive2", "quickice2", "gradient"]
    ),
    "separation": dict(
        K=3, d=5, T=1, n_block=5000, trials=100, iterations=50, algorithms=["quickiva1", "quickiva2"]
    ),
}


@dataclass
class ExperimentConfig:
    experiment: str = "extraction"
    algorithms: List[str] = field(default_factory=list)
    score: str = "rational"
    K: int = 3
    d: int = 6
    T: int = 1
    n_block: int = 1000
    n_csv_sources: int = 3
    alpha: float = 0.4
    trials: int = 1000
    seed: int = 0
    init: str = "near_ideal"
    init_norm: float = 0.1
    tol: float = 1e-6
    max_iter: int = 1000
    iterations: int = 50
    hessian: str = "exact"
    mu: float = 0.2
    out: str = "results"
    workers: int = 0

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
        base = dict(DEFAULTS.get(experiment, {}))
        base.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(experiment=experiment, **base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("K", "d", "T", "n_block", "trials", "max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.init not in ("near_ideal", "random"):
            raise ValueError("init must be 'near_ideal' or 'random'")
        if self.hessian not in ("exact", "approx"):
            raise ValueError("hessian must be 'exact' or 'approx'")
        if not self.tol > 0 or not self.mu > 0:
            raise ValueError("tol and mu must be positive")
        get_score(self.score)
        allowed = SEPARATION_ALGORITHMS if self.experiment == "separation" else EXTRACTION_ALGORITHMS
        for alg in self.algorithms:
            if alg not in allowed:
                raise ValueError(f"algorithm {alg!r} not valid for {self.experiment}; choose from {allowed}")
        if self.experiment == "extraction" and self.T != 1:
            raise ValueError("the extraction experiment uses a single block; use csv_extraction for T > 1")
        if self.experiment == "separation" and self.T != 1:
            raise ValueError("separation is defined for T = 1")


# Trials ----------------------------------------------------------------------


def _extraction_data(cfg: ExperimentConfig, rng):
    if cfg.experiment == "csv_extraction":
        return simgen.generate_csv_dataset(rng, cfg.K, cfg.d, cfg.T, cfg.n_block, cfg.n_csv_sources)
    return simgen.generate_iva_dataset(rng, cfg.K, cfg.d, cfg.n_block)


def extraction_trial(cfg: ExperimentConfig, algorithm: str, trial: int) -> TrialOutcome:
    """One extraction trial; data and initialization depend only on (seed, trial)."""
    rng = simgen.trial_rng(cfg.seed, trial)
    data = _extraction_data(cfg, rng)
    if cfg.init == "near_ideal":
        w0 = simgen.near_ideal_init(rng, simgen.true_separating_vectors(data), cfg.init_norm)
    else:
        w0 = simgen.complex_normal(rng, (cfg.K, cfg.d))
    stopping = StoppingRule(cfg.tol, cfg.max_iter)
    score = get_score(cfg.score)
    base = algorithm.replace("quickice", "quickive").replace("gradient_ice", "gradient")
    if algorithm.startswith("quickice") or algorithm == "gradient_ice":
        groups = [slice(k, k + 1) for k in range(cfg.K)]
    else:
        groups = [slice(0, cfg.K)]
    sirs, its, wall, conv, errors = [], [], 0.0, True, []
    for grp in groups:
        try:
            _, o = run_extraction(
                base, data.subset(grp), w0[grp], stopping, score, cfg.hessian, cfg.mu
            )
        except (DegenerateError, np.linalg.LinAlgError) as exc:
            log.debug("trial %d (%s) failed: %s", trial, algorithm, exc)
            n = grp.stop - grp.start
            o = TrialOutcome(sir_db=np.full(n, np.nan), iterations=cfg.max_iter, error=str(exc))
            errors.append(str(exc))
        sirs.extend(np.atleast_1d(o.sir_db))
        its.append(o.iterations)
        wall += o.wall_ms
        conv = conv and o.converged
    return TrialOutcome(
        sir_db=np.array(sirs),
        iterations=int(max(its)),
        wall_ms=wall,
        converged=conv,
        error="; ".join(errors) or None,
    )


@dataclass
class SeparationTrial:
    outcome: TrialOutcome
    isr_curve: np.ndarray
    wall_curve: np.ndarray


def separation_trial(cfg: ExperimentConfig, algorithm: str, trial: int) -> SeparationTrial:
    rng = simgen.trial_rng(cfg.seed, trial)
    data = simgen.generate_separation_dataset(rng, cfg.K, cfg.d, cfg.n_block, cfg.alpha)
    W0 = np.stack([np.linalg.inv(simgen.random_mixing(rng, cfg.d)) for _ in range(cfg.K)])
    try:
        state, outcome = run_separation(
            algorithm, data, W0, budget=cfg.iterations, score=get_score(cfg.score), hessian=cfg.hessian
        )
        return SeparationTrial(outcome, np.array(state.isr_history), np.array(state.wall_ms_history))
    except (DegenerateError, RankDeficiencyError, np.linalg.LinAlgError) as exc:
        log.debug("trial %d (%s) failed: %s", trial, algorithm, exc)
        nan = np.full(cfg.iterations + 1, np.nan)
        return SeparationTrial(TrialOutcome(error=str(exc)), nan, nan)


def _dispatch(fn, cfg: ExperimentConfig, algorithm: str, workers: int) -> list:
    trials = range(cfg.trials)
    if workers <= 1 or cfg.trials == 1:
        return [fn(cfg, algorithm, t) for t in trials]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves trial order regardless of completion order
        return list(pool.map(fn, [cfg] * cfg.trials, [algorithm] * cfg.trials, trials, chunksize=4))


def run_trials(cfg: ExperimentConfig, algorithm: str, workers: Optional[int] = None) -> list:
    workers = cfg.workers if workers is None else workers
    if workers == 0:
        workers = os.cpu_count() or 1
    fn = separation_trial if cfg.experiment == "separation" else extraction_trial
    return _dispatch(fn, cfg, algorithm, workers)


# Summaries -------------------------------------------------------------------


def extraction_summary(outcomes: Sequence[TrialOutcome]) -> dict:
    sirs = np.concatenate([np.atleast_1d(o.sir_db) for o in outcomes]) if outcomes else np.empty(0)
    finite = sirs[np.isfinite(sirs)]
    n = max(sirs.size, 1)
    its = np.array([o.iterations for o in outcomes])
    total_its = max(int(its.sum()), 1)
    return dict(
        mixtures=int(sirs.size),
        success_fraction=float(np.sum(finite > metrics.SUCCESS_DB) / n),
        other_source_fraction=float(np.sum(finite < -metrics.SUCCESS_DB) / n),
        failure_fraction=float(1.0 - np.sum(np.abs(finite) > metrics.SUCCESS_DB) / n),
        median_sir_db=float(np.median(finite)) if finite.size else None,
        median_iterations=float(np.median(its)) if its.size else None,
        converged_fraction=float(np.mean([o.converged for o in outcomes])) if outcomes else None,
        errors=int(sum(o.error is not None for o in outcomes)),
        mean_wall_ms_per_iteration=float(sum(o.wall_ms for o in outcomes) / total_its),
    )


def separation_summary(results: Sequence[SeparationTrial]) -> dict:
    curves = np.array([r.isr_curve for r in results])
    walls = np.array([r.wall_curve for r in results])
    ok = np.all(np.isfinite(curves), axis=1)
    mean_curve = curves[ok].mean(axis=0) if ok.any() else np.full(curves.shape[1], np.nan)
    iters = max(curves.shape[1] - 1, 1)
    return dict(
        trials=len(results),
        errors=int((~ok).sum()),
        initial_isr_db_mean=float(mean_curve[0]),
        final_isr_db_mean=float(mean_curve[-1]),
        mean_wall_ms_per_iteration=float(walls[ok][:, -1].mean() / iters) if ok.any() else None,
        isr_db_mean_curve=[float(v) for v in mean_curve],
    )


# Runner ----------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every configured algorithm and write CSV tables plus ``summary.json``.

    Extraction writes ``histogram_sir.csv``, ``histogram_iterations.csv`` and
    ``trials.csv``; separation writes ``trajectory.csv`` and ``trials.csv``.
    Returns the summary dictionary.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = dict(config=asdict(cfg), algorithms={})
    if cfg.experiment == "separation":
        traj_rows, trial_rows = [], []
        for alg in cfg.algorithms:
            results = run_trials(cfg, alg)
            ok = [r for r in results if np.all(np.isfinite(r.isr_curve))]
            traj_rows += metrics.trajectory(
                np.array([r.isr_curve for r in ok]).reshape(len(ok), -1),
                np.array([r.wall_curve for r in ok]).reshape(len(ok), -1),
                alg,
            )
            for t, r in enumerate(results):
                trial_rows.append(
                    dict(
                        trial=t,
                        algorithm=alg,
                        iterations=r.outcome.iterations,
                        isr_db_mean=_mean_or_nan(r.outcome.isr_db),
                        error=r.outcome.error or "",
                        wall_ms=r.outcome.wall_ms,
                    )
                )
            summary["algorithms"][alg] = separation_summary(results)
        (out / "trajectory.csv").write_text(metrics.to_csv(traj_rows, metrics.TRAJECTORY_FIELDS))
        (out / "trials.csv").write_text(
            metrics.to_csv(trial_rows, ("trial", "algorithm", "iterations", "isr_db_mean", "error", "wall_ms"))
        )
    else:
        hist_rows, it_rows, trial_rows = [], [], []
        for alg in cfg.algorithms:
            outcomes = run_trials(cfg, alg)
            hist_rows += metrics.aggregate(
                [replace(o, sir_db=_finite(o.sir_db)) for o in outcomes], alg, cfg.experiment
            )
            it_rows += metrics.iteration_histogram(outcomes, alg, cfg.experiment)
            for t, o in enumerate(outcomes):
                for k, (v, c) in enumerate(zip(np.atleast_1d(o.sir_db), o.classification)):
                    trial_rows.append(
                        dict(
                            trial=t,
                            algorithm=alg,
                            k=k,
                            sir_db=float(v),
                            classification=c,
                            iterations=o.iterations,
                            converged=int(o.converged),
                            wall_ms=o.wall_ms,
                        )
                    )
            summary["algorithms"][alg] = extraction_summary(outcomes)
        (out / "histogram_sir.csv").write_text(metrics.to_csv(hist_rows, metrics.HISTOGRAM_FIELDS))
        (out / "histogram_iterations.csv").write_text(metrics.to_csv(it_rows, metrics.HISTOGRAM_FIELDS))
        (out / "trials.csv").write_text(
            metrics.to_csv(
                trial_rows,
                ("trial", "algorithm", "k", "sir_db", "classification", "iterations", "converged", "wall_ms"),
            )
        )
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return summary


def _finite(v):
    v = np.atleast_1d(v)
    return v[np.isfinite(v)]


def _mean_or_nan(v) -> float:
    v = np.atleast_1d(v)
    return float(np.mean(v)) if v.size else float("nan")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def config_fields() -> List[str]:
    return [f.name for f in fields(ExperimentConfig)]
