#!/usr/bin/env python3
"""foba-select: sweep runners for the synthetic and dataset studies, plus ``select``."""
import logging
import logging.handlers
import os
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Callable, List, Optional

import lox
import numpy as np
import pandas as pd
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from foba_select.algorithms import Algorithm
from foba_select.analysis import (
    estimation_error,
    f_measure,
    feature_groups,
    sensor_groups,
    truth_threshold_rule,
)
from foba_select.config import ExperimentConfig
from foba_select.core import SupportSet, derive_seed
from foba_select.crf import ChainCrfProblem
from foba_select.datagen import LogisticSyntheticSpec, gen_chain, gen_logistic, parse_sparse_classification
from foba_select.errors import ConfigError, FobaSelectError
from foba_select.foba import FobaResult, GoodnessMeasure, StoppingRule
from foba_select.objectives import LeastSquaresProblem, LogisticL2Problem, ObjectiveProblem

RESULT_COLUMNS = [
    "algorithm", "objective_kind", "seed", "k_bar_or_S", "f_measure",
    "est_error", "objective", "nnz", "wall_micros", "stop_reason",
]
ERROR_COLUMNS = [
    "algorithm", "objective_kind", "seed", "k_bar_or_S", "objective",
    "train_error", "test_error", "wall_micros",
]
TRACE_COLUMNS = [
    "kind", "iteration", "feature", "goodness", "delta_level", "q_before",
    "q_after", "support_size", "wall_micros", "stop_reason",
]
SORT_KEYS = ["algorithm", "k_bar_or_S", "seed"]

EXIT_TRIAL_FAILED = 1
EXIT_CONFIG_ERROR = 2

app = typer.Typer(add_completion=False, pretty_exceptions_enable=False)


load_dotenv()


def setup_logging():
    """Configure logging to write to both console and file."""
    log_dir = Path(os.environ.get("FOBA_SELECT_LOG_DIR", "logs"))
    log_dir.mkdir(parents=True, exist_ok=True)
    level = getattr(logging, os.environ.get("FOBA_SELECT_LOG", "INFO").upper(), logging.INFO)

    logger = logging.getLogger()
    logger.setLevel(level)

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    log_file = log_dir / "foba-select.log"
    file_handler = logging.handlers.RotatingFileHandler(
        log_file, maxBytes=10*1024*1024, backupCount=5  # 10MB max, 5 backups
    )
    file_handler.setLevel(logging.DEBUG)
    file_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    file_handler.setFormatter(file_formatter)
    logger.addHandler(file_handler)

    return logger


def format_float(value: Any) -> Any:
    """Shortest round-trip decimal for floats; ints, strings and None pass through."""
    if value is None:
        return None
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return None
        return repr(float(value))
    return value


def write_csv(rows: List[dict], columns: List[str], path: Path, sort: bool = True) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=columns, dtype=object)
    if sort and not df.empty:
        df = df.sort_values(SORT_KEYS, kind="mergesort").reset_index(drop=True)
    df.map(format_float).to_csv(path, index=False, lineterminator="\n")
    return df


def run_trial(task: Callable[..., List[dict]], *args) -> Optional[List[dict]]:
    """Run one trial task; failures are logged and reported as None."""
    try:
        return task(*args)
    except Exception:
        logging.error("=" * 40)
        logging.error("Trial failed: %s%s", getattr(task, "__name__", task), args[1:])
        logging.error(traceback.format_exc())
        return None


def _timed(algorithm: Algorithm, p: ObjectiveProblem, rule: StoppingRule, cfg: ExperimentConfig):
    start = time.perf_counter_ns()
    result = algorithm.run(p, rule, cfg.solver_config())
    micros = (time.perf_counter_ns() - start) // 1000 if cfg.timing else 0
    return result, micros


def _result_row(algorithm: Algorithm, p: ObjectiveProblem, seed: int, level: int,
                result: FobaResult, micros: int, **metrics) -> dict:
    return {
        "algorithm": algorithm.value,
        "objective_kind": p.kind,
        "seed": seed,
        "k_bar_or_S": level,
        "f_measure": metrics.get("f_measure"),
        "est_error": metrics.get("est_error"),
        "objective": result.objective,
        "nnz": result.support.size(),
        "wall_micros": micros,
        "stop_reason": result.stop_reason.value,
    }


def logistic_trial(cfg: ExperimentConfig, k_bar: int, seed: int) -> List[dict]:
    spec = LogisticSyntheticSpec(
        n=cfg.n, d=cfg.d, k_bar=k_bar, beta_norm=cfg.beta_norm, lam=cfg.lam,
        seed=derive_seed(seed, k_bar),
    )
    p, beta_star, F_star = gen_logistic(spec)
    truth_rules: dict[GoodnessMeasure, StoppingRule] = {}
    rows = []
    for algorithm in cfg.algorithms:
        if cfg.stop == "truth":
            if algorithm.measure not in truth_rules:
                truth_rules[algorithm.measure] = truth_threshold_rule(
                    p, F_star, algorithm.measure, cfg.solver_config()
                )
            rule = truth_rules[algorithm.measure]
        else:
            rule = cfg.stopping_rule(algorithm, k_bar)
        result, micros = _timed(algorithm, p, rule, cfg)
        rows.append(_result_row(
            algorithm, p, seed, k_bar, result, micros,
            f_measure=f_measure(result.support, F_star),
            est_error=estimation_error(result.beta, beta_star),
        ))
        logging.info("%s k_bar=%d seed=%d: nnz=%d Q=%.6g", algorithm, k_bar, seed,
                     result.support.size(), result.objective)
    return rows


def crf_trial(cfg: ExperimentConfig, level: int, seed: int) -> List[dict]:
    data = gen_chain(cfg.T, cfg.D, cfg.S, cfg.L, cfg.transition_strength,
                     cfg.emission_strength, seed=derive_seed(seed), n_sequences=2)
    train = ChainCrfProblem(data.subset([0]))
    test = train.with_data(data.subset([1]))
    return _error_rows(cfg, train, train.error_rate, test.error_rate, level, seed)


def _error_rows(cfg: ExperimentConfig, p: ObjectiveProblem, train_error, test_error,
                level: int, seed: int) -> List[dict]:
    rows = []
    for algorithm in cfg.algorithms:
        result, micros = _timed(algorithm, p, cfg.stopping_rule(algorithm, level), cfg)
        row = _result_row(algorithm, p, seed, level, result, micros)
        row["train_error"] = train_error(result.beta)
        row["test_error"] = test_error(result.beta) if test_error else None
        rows.append(row)
        logging.info("%s S=%d seed=%d: train=%.4f Q=%.6g", algorithm, level, seed,
                     row["train_error"], result.objective)
    return rows


def run_sweep(cfg: ExperimentConfig, task: Callable[..., List[dict]]) -> tuple[List[dict], int]:
    """Fan trials out over ``cfg.jobs`` threads; returns (rows, failed trial count)."""
    keys = [(level, cfg.seed + t) for level in cfg.sweep for t in range(cfg.trials)]
    if cfg.jobs == 1:
        outcomes = [run_trial(task, cfg, level, seed) for level, seed in keys]
    else:
        run_trial_threaded = lox.thread(cfg.jobs)(run_trial)
        for level, seed in keys:
            run_trial_threaded.scatter(task, cfg, level, seed)
        outcomes = run_trial_threaded.gather()
    rows = [row for outcome in outcomes if outcome for row in outcome]
    failed = sum(1 for outcome in outcomes if outcome is None)
    return rows, failed


def summarize_results(rows: List[dict], out: Path, title: str) -> pd.DataFrame:
    """Write per (algorithm, level) means to summary.csv and print them."""
    df = pd.DataFrame(rows)
    numeric = [c for c in ("f_measure", "est_error", "objective", "nnz", "train_error",
                           "test_error", "wall_micros") if c in df.columns]
    summary = (
        df[["algorithm", "k_bar_or_S"] + numeric]
        .apply(lambda col: pd.to_numeric(col, errors="coerce") if col.name in numeric else col)
        .groupby(["algorithm", "k_bar_or_S"], sort=True)
        .mean()
        .reset_index()
    )
    summary.map(format_float).to_csv(out / "summary.csv", index=False, lineterminator="\n")

    console = Console(highlight=False)
    table = Table(title=title)
    for column in summary.columns:
        table.add_column(column, justify="left" if column == "algorithm" else "right")
    for record in summary.itertuples(index=False):
        table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in record))
    console.print(table)
    return summary


def _finish(cfg: ExperimentConfig, rows: List[dict], failed: int, with_errors: bool) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, RESULT_COLUMNS, cfg.out / "results.csv")
    if with_errors:
        write_csv(rows, ERROR_COLUMNS, cfg.out / "errors.csv")
    if rows:
        summarize_results(rows, cfg.out, f"{cfg.command} ({len(rows)} runs)")
    logging.info("Wrote %d rows to %s", len(rows), cfg.out)
    if failed:
        logging.error("%d trial(s) failed", failed)
        raise typer.Exit(EXIT_TRIAL_FAILED)


def _overrides(
    algo: Optional[str], stop: Optional[str], eps: Optional[float], delta: Optional[float],
    sparsity: Optional[int], exhaust: bool, seed: Optional[int], trials: Optional[int],
    jobs: Optional[int], out: Optional[Path], one_based: bool, sweep: Optional[str],
    no_timing: bool, test: Optional[Path], settings: Optional[List[str]],
) -> dict:
    if exhaust and (sparsity is not None or eps is not None or delta is not None):
        raise ConfigError("--exhaust cannot be combined with --sparsity, --eps or --delta")
    if sparsity is not None and (eps is not None or delta is not None):
        raise ConfigError("--sparsity cannot be combined with --eps or --delta")

    values: dict[str, Any] = {}
    for item in settings or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()

    implied = None
    if exhaust:
        implied = "exhaust"
    elif sparsity is not None:
        implied = "sparsity"
    elif eps is not None or delta is not None:
        implied = "threshold"
    values.update({
        "algorithms": algo,
        "stop": stop or implied,
        "eps": eps,
        "delta": delta,
        "sparsity": sparsity,
        "seed": seed,
        "trials": trials,
        "jobs": jobs,
        "out": out,
        "sweep": sweep,
        "test_path": test,
    })
    if one_based:
        values["one_based"] = True
    if no_timing:
        values["timing"] = False
    return values


def _load(command: str, config: Optional[Path], **flags) -> ExperimentConfig:
    setup_logging()
    try:
        cfg = ExperimentConfig.from_sources(command, config, _overrides(**flags))
    except ConfigError as exc:
        logging.error("Configuration error: %s", exc)
        raise typer.Exit(EXIT_CONFIG_ERROR)
    logging.info("%s: algorithms=%s stop=%s sweep=%s trials=%d jobs=%d", command,
                 ",".join(a.value for a in cfg.algorithms), cfg.stop, list(cfg.sweep),
                 cfg.trials, cfg.jobs)
    return cfg


ConfigOpt = typer.Option(None, "--config", "-c", help="key=value config file")
AlgoOpt = typer.Option(None, "--algo", "-a", help="Algorithms (comma separated)")
StopOpt = typer.Option(None, "--stop", help="threshold, truth, sparsity or exhaust")
EpsOpt = typer.Option(None, "--eps", help="Gradient threshold epsilon")
DeltaOpt = typer.Option(None, "--delta", help="Objective-reduction threshold delta")
SparsityOpt = typer.Option(None, "--sparsity", help="Stop at this many features")
ExhaustOpt = typer.Option(False, "--exhaust", help="Select until every feature is in")
SeedOpt = typer.Option(None, "--seed", help="Base seed")
TrialsOpt = typer.Option(None, "--trials", "-n", help="Trials per sweep level")
JobsOpt = typer.Option(None, "--jobs", "-j", help="Trials to run in parallel")
OutOpt = typer.Option(None, "--out", "-o", help="Output directory")
OneBasedOpt = typer.Option(False, "--one-based", help="Report 1-based feature indices")
SweepOpt = typer.Option(None, "--sweep", help="Sweep levels, e.g. 5..14 or 10,15,20")
NoTimingOpt = typer.Option(False, "--no-timing", help="Write wall_micros as 0")
SetOpt = typer.Option(None, "--set", help="Override any config key, KEY=VALUE")


@app.command("logistic-synthetic")
def logistic_synthetic(
    config: Optional[Path] = ConfigOpt, algo: Optional[str] = AlgoOpt, stop: Optional[str] = StopOpt,
    eps: Optional[float] = EpsOpt, delta: Optional[float] = DeltaOpt,
    sparsity: Optional[int] = SparsityOpt, exhaust: bool = ExhaustOpt,
    seed: Optional[int] = SeedOpt, trials: Optional[int] = TrialsOpt, jobs: Optional[int] = JobsOpt,
    out: Optional[Path] = OutOpt, one_based: bool = OneBasedOpt, sweep: Optional[str] = SweepOpt,
    no_timing: bool = NoTimingOpt, settings: Optional[List[str]] = SetOpt,
):
    """Planted sparse logistic regression, swept over the true sparsity."""
    cfg = _load("logistic-synthetic", config, algo=algo, stop=stop, eps=eps, delta=delta,
                sparsity=sparsity, exhaust=exhaust, seed=seed, trials=trials, jobs=jobs, out=out,
                one_based=one_based, sweep=sweep, no_timing=no_timing, test=None, settings=settings)
    rows, failed = run_sweep(cfg, logistic_trial)
    _finish(cfg, rows, failed, with_errors=False)


@app.command("crf-synthetic")
def crf_synthetic(
    config: Optional[Path] = ConfigOpt, algo: Optional[str] = AlgoOpt, stop: Optional[str] = StopOpt,
    eps: Optional[float] = EpsOpt, delta: Optional[float] = DeltaOpt,
    sparsity: Optional[int] = SparsityOpt, exhaust: bool = ExhaustOpt,
    seed: Optional[int] = SeedOpt, trials: Optional[int] = TrialsOpt, jobs: Optional[int] = JobsOpt,
    out: Optional[Path] = OutOpt, one_based: bool = OneBasedOpt, sweep: Optional[str] = SweepOpt,
    no_timing: bool = NoTimingOpt, settings: Optional[List[str]] = SetOpt,
):
    """Synthetic label chains, swept over the sparsity level."""
    cfg = _load("crf-synthetic", config, algo=algo, stop=stop, eps=eps, delta=delta,
                sparsity=sparsity, exhaust=exhaust, seed=seed, trials=trials, jobs=jobs, out=out,
                one_based=one_based, sweep=sweep, no_timing=no_timing, test=None, settings=settings)
    rows, failed = run_sweep(cfg, crf_trial)
    _finish(cfg, rows, failed, with_errors=True)


def _load_classification(cfg: ExperimentConfig, path: Path, real_labels: bool = False):
    X, y = parse_sparse_classification(path, cfg.d, real_labels=real_labels)
    if cfg.test_path is None:
        return X, y, None, None
    X_test, y_test = parse_sparse_classification(cfg.test_path, cfg.d, real_labels=real_labels)
    width = max(X.shape[1], X_test.shape[1])
    X = np.pad(X, ((0, 0), (0, width - X.shape[1])))
    X_test = np.pad(X_test, ((0, 0), (0, width - X_test.shape[1])))
    return X, y, X_test, y_test


@app.command("dataset")
def dataset(
    path: Path = typer.Argument(..., help="Training file in sparse label index:value format"),
    test: Optional[Path] = typer.Option(None, "--test", help="Held-out file in the same format"),
    config: Optional[Path] = ConfigOpt, algo: Optional[str] = AlgoOpt, stop: Optional[str] = StopOpt,
    eps: Optional[float] = EpsOpt, delta: Optional[float] = DeltaOpt,
    sparsity: Optional[int] = SparsityOpt, exhaust: bool = ExhaustOpt,
    seed: Optional[int] = SeedOpt, trials: Optional[int] = TrialsOpt,
    jobs: Optional[int] = JobsOpt,
    out: Optional[Path] = OutOpt, one_based: bool = OneBasedOpt, sweep: Optional[str] = SweepOpt,
    no_timing: bool = NoTimingOpt, settings: Optional[List[str]] = SetOpt,
):
    """L2-regularized logistic regression on a sparse classification file.

    The data are fixed, so ``--trials`` only repeats each level (timing
    replicates) and ``--seed`` only labels the rows.
    """
    cfg = _load("dataset", config, algo=algo, stop=stop, eps=eps, delta=delta,
                sparsity=sparsity, exhaust=exhaust, seed=seed, trials=trials, jobs=jobs, out=out,
                one_based=one_based, sweep=sweep, no_timing=no_timing, test=test, settings=settings)
    try:
        X, y, X_test, y_test = _load_classification(cfg, path)
    except (OSError, FobaSelectError) as exc:
        logging.error("Cannot read data: %s", exc)
        raise typer.Exit(EXIT_TRIAL_FAILED)
    p = LogisticL2Problem(X, y, cfg.lam)
    test_error = (lambda beta: p.error_rate(beta, X_test, y_test)) if X_test is not None else None

    def task(cfg, level, seed):
        return _error_rows(cfg, p, p.error_rate, test_error, level, seed)

    task.__name__ = "dataset_trial"
    rows, failed = run_sweep(cfg, task)
    _finish(cfg, rows, failed, with_errors=True)


@app.command("select")
def select(
    path: Path = typer.Argument(..., help="Data file in sparse label index:value format"),
    config: Optional[Path] = ConfigOpt, algo: Optional[str] = AlgoOpt, stop: Optional[str] = StopOpt,
    eps: Optional[float] = EpsOpt, delta: Optional[float] = DeltaOpt,
    sparsity: Optional[int] = SparsityOpt, exhaust: bool = ExhaustOpt,
    seed: Optional[int] = SeedOpt, trials: Optional[int] = TrialsOpt, jobs: Optional[int] = JobsOpt,
    out: Optional[Path] = OutOpt, one_based: bool = OneBasedOpt,
    no_timing: bool = NoTimingOpt, settings: Optional[List[str]] = SetOpt,
):
    """Select features on user data and write the support, coefficients and trace.

    A single deterministic selection: ``--trials`` must be 1, ``--seed`` and
    ``--jobs`` are accepted and validated but have nothing to vary.
    """
    cfg = _load("select", config, algo=algo, stop=stop, eps=eps, delta=delta,
                sparsity=sparsity, exhaust=exhaust, seed=seed, trials=trials, jobs=jobs, out=out,
                one_based=one_based, sweep=None, no_timing=no_timing, test=None, settings=settings)
    least_squares = cfg.objective == "least-squares"
    try:
        X, y, _, _ = _load_classification(cfg, path, real_labels=least_squares)
    except (OSError, FobaSelectError) as exc:
        logging.error("Cannot read data: %s", exc)
        raise typer.Exit(EXIT_TRIAL_FAILED)
    p = LeastSquaresProblem(X, y) if least_squares else LogisticL2Problem(X, y, cfg.lam)

    algorithm = cfg.algorithms[0]
    try:
        result, _ = _timed(algorithm, p, cfg.stopping_rule(algorithm), cfg)
    except FobaSelectError:
        logging.error(traceback.format_exc())
        raise typer.Exit(EXIT_TRIAL_FAILED)

    write_select_report(cfg, p, result)


def _labels(F: SupportSet, one_based: bool) -> list[int]:
    return F.one_based() if one_based else list(F)


def write_select_report(cfg: ExperimentConfig, p: ObjectiveProblem, result: FobaResult) -> None:
    """selected.csv, trace.csv and (with group_size) groups.csv under ``cfg.out``."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    features = _labels(result.support, cfg.one_based)
    selected = [
        {"feature": label, "coefficient": float(result.beta[j])}
        for label, j in zip(features, result.support)
    ]
    write_csv(selected, ["feature", "coefficient"], cfg.out / "selected.csv", sort=False)

    def feature_label(j: int) -> int:
        return _labels(SupportSet.of([j], p.dimension), cfg.one_based)[0]

    trace = [
        {
            "kind": rec.kind.value,
            "iteration": rec.iteration,
            "feature": None if rec.feature is None else feature_label(rec.feature),
            "goodness": rec.goodness,
            "delta_level": rec.delta_level,
            "q_before": rec.q_before,
            "q_after": rec.q_after,
            "support_size": rec.support_size,
            "wall_micros": rec.wall_micros if cfg.timing else 0,
            "stop_reason": rec.stop_reason.value if rec.stop_reason else None,
        }
        for rec in result.trace
    ]
    write_csv(trace, TRACE_COLUMNS, cfg.out / "trace.csv", sort=False)

    if cfg.group_size:
        groups = sensor_groups(result.support, feature_groups(p.dimension, cfg.group_size))
        counts = [
            {"group": label, "n_selected": sum(1 for j in result.support if j // cfg.group_size == g)}
            for label, g in zip(_labels(groups, cfg.one_based), groups)
        ]
        write_csv(counts, ["group", "n_selected"], cfg.out / "groups.csv", sort=False)
        logging.info("%d of %d groups used", groups.size(), groups.dimension)

    console = Console(highlight=False)
    console.rule(title=f"{result.support.size()} features selected ({result.stop_reason.value})")
    console.print(f"  objective: {result.objective!r}")
    console.print(f"  features: {features}")
    console.rule()


if __name__ == "__main__":
    app()
