"""Experiment configs and the trial runner behind the CLI."""

from __future__ import annotations

import json
import platform
import time
import traceback
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import check_conditions
from .core import CleanPool, ContaminatedPool, DebugProblem, GroundTruth, build_stacked
from .errors import ConfigError, DebugError
from .game import DEFAULT_RHO_GRID, DEFAULT_STRATEGY_RHO, STRATEGIES, GameInstance, generator_search
from .io import RunReport, config_hash, read_csv_table
from .lasso import solve_gamma
from .synth import (SynthSpec, generate, generate_clean_pool, orthogonal_clean_pool,
                    orthogonal_leaning_design, random_orthogonal_design, stream)
from .tuning import DEFAULT_C_BAR, TuningConfig, select_lambda


def trial_seed(seed: int, k: int) -> int:
    return int(seed) * 100_000 + int(k)


def lambda_0(n: int, sigma_star: float) -> float:
    """sqrt(log 2n) sigma* / n, the noise-level unit for lambda."""
    return float(np.sqrt(np.log(2 * n)) * sigma_star / n)


@dataclass
class _Common:
    trials: int = 10
    seed: int = 0
    threads: int = 1
    out: str | None = None

    def validate(self):
        if self.trials < 0:
            raise ConfigError("trials must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")


@dataclass
class DebugConfig(_Common):
    n: int = 200
    p: int = 5
    t: int | None = None
    c_t: float | None = 0.1
    sigma_star: float = 0.1
    bug_law: str = "floor_uniform"
    bug_constant: float = 1.0
    m: int = 0  # clean rows re-queried at random with noiseless labels
    eta: float = 1.0
    lam: float | None = None
    lam0_multiple: float = 4.0
    tune: bool = False
    c_bar: float = 0.2
    csv: str | None = None
    label_column: str | int = -1
    header: bool = True


@dataclass
class TuneConfig(_Common):
    n: int = 3000
    p: int = 20
    sigma_star: float = 0.1
    c_ts: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25])
    multipliers: list[float] = field(default_factory=lambda: [1.0, 4.0, 16.0, 64.0])
    c_bar: float = 0.2
    halving_factor: float = 2.0
    trials: int = 50


@dataclass
class SweepConfig(_Common):
    ns: list[int] = field(default_factory=lambda: [1000, 3000, 10000])
    c_ts: list[float] = field(default_factory=lambda: [0.05, 0.15, 0.25, 0.35])
    p: int = 20
    sigma_star: float = 0.1
    c_bar: float = 0.2
    trials: int = 30


@dataclass
class ConditionsConfig(_Common):
    design: str = "orthogonal"  # orthogonal | gaussian
    n: int = 100
    p: int = 10
    t: int = 3
    m: int = 5
    eta: float = 1.0
    sigma_star: float = 0.1
    query_prob: float = 0.5
    lam_factor: float = 1.01  # lambda = lam_factor * lambda*


@dataclass
class GameConfig(_Common):
    design: str = "gaussian"  # gaussian | orthogonal_leaning | csv
    n: int = 40
    p: int = 20
    t: int = 1
    m: int = 0
    eta: float = 1.0
    strategies: list[str] = field(default_factory=lambda: ["onepool"])
    rhos: list[float] | None = None
    strategy_rho: float = DEFAULT_STRATEGY_RHO
    noise: float = 0.1
    csv: str | None = None
    label_column: str | int = -1
    header: bool = True
    trials: int = 50


CONFIG_TYPES = {
    "debug": DebugConfig,
    "tune": TuneConfig,
    "sweep": SweepConfig,
    "conditions": ConditionsConfig,
    "game": GameConfig,
}


def _type_ok(value, tp) -> bool:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", typing.Union)):
        return any(_type_ok(value, a) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if origin is list:
        (inner,) = typing.get_args(tp) or (typing.Any,)
        return isinstance(value, list) and all(_type_ok(v, inner) for v in value)
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is str:
        return isinstance(value, str)
    return True


def config_from_dict(command: str, data: dict):
    """Build and validate a config; unknown keys and wrong types are rejected."""
    if command not in CONFIG_TYPES:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    cls = CONFIG_TYPES[command]
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for k, v in data.items():
        if not _type_ok(v, hints[k]):
            raise ConfigError(f"config key {k!r} has invalid value {v!r}")
    cfg = cls(**data)
    _validate(command, cfg)
    return cfg


def load_config(command: str, path) -> object:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(command, data)


def _validate(command, cfg):
    cfg.validate()
    if command == "debug":
        if cfg.csv is None and (cfg.t is None) == (cfg.c_t is None):
            raise ConfigError("give exactly one of t and c_t")
        if cfg.m < 0 or cfg.eta < 0:
            raise ConfigError("m and eta must be nonnegative")
    if command == "game":
        bad = [s for s in cfg.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {list(STRATEGIES)}")
        if cfg.design not in ("gaussian", "orthogonal_leaning", "csv"):
            raise ConfigError(f"unknown game design {cfg.design!r}")
        if cfg.design == "csv" and not cfg.csv:
            raise ConfigError("csv design needs a csv path")
    if command == "conditions" and cfg.design not in ("orthogonal", "gaussian"):
        raise ConfigError(f"unknown conditions design {cfg.design!r}")
    for name in ("c_ts",):
        if hasattr(cfg, name) and any(not 0 <= c < 1 for c in getattr(cfg, name)):
            raise ConfigError(f"{name} entries must lie in [0, 1)")


# ---------------------------------------------------------------- trials


def _recovery(support, truth_support) -> dict:
    s, T = set(map(int, support)), set(map(int, truth_support))
    return {"exact": s == T, "subset": s <= T, "support_size": len(s)}


def _debug_trial(cfg: DebugConfig, k: int) -> dict:
    seed = trial_seed(cfg.seed, k)
    spec = SynthSpec(n=cfg.n, p=cfg.p, t=cfg.t, c_t=None if cfg.t is not None else cfg.c_t,
                     sigma_star=cfg.sigma_star, bug_law=cfg.bug_law, bug_constant=cfg.bug_constant, seed=seed)
    pool, truth = generate(spec)
    clean = None
    if cfg.m > 0:
        D = stream(seed, "clean-rows").choice(cfg.n, size=cfg.m, replace=False)
        clean = generate_clean_pool(pool, truth, D, cfg.eta)
    sys = build_stacked(pool, clean)
    if cfg.tune:
        res = select_lambda(sys, TuningConfig(c_bar=cfg.c_bar))
        sol, lam = res.solution, res.lambda_hat
    else:
        lam = cfg.lam if cfg.lam is not None else cfg.lam0_multiple * lambda_0(cfg.n, cfg.sigma_star)
        sol = solve_gamma(sys, lam)
    out = {"trial": k, "seed": seed, "lam": lam, "converged": sol.converged}
    out.update(_recovery(sol.support, truth.support))
    if cfg.tune:
        out["trace"] = res.trace.to_dict()
    return out


def _debug_csv(cfg: DebugConfig) -> RunReport:
    tab = read_csv_table(cfg.csv, cfg.label_column, cfg.header)
    pool = ContaminatedPool(tab.X, tab.y)
    sys = build_stacked(pool)
    if cfg.tune:
        res = select_lambda(sys, TuningConfig(c_bar=cfg.c_bar))
        sol, lam = res.solution, res.lambda_hat
    elif cfg.lam is not None:
        lam = cfg.lam
        sol = solve_gamma(sys, lam)
    else:
        raise ConfigError("csv debugging needs lam or tune = true")
    summary = {"n": pool.n, "p": pool.p, "lam": lam, "flagged": sol.support.tolist(),
               "beta_hat": sol.beta_hat.tolist(), "features": tab.feature_names, "label": tab.label_name}
    rows = [[int(i), float(sol.gamma_hat[i])] for i in sol.support]
    return summary, {"flagged": {"columns": ["row", "gamma_hat"], "rows": rows}}


def _tune_trial(cfg: TuneConfig, c_t: float, k: int) -> dict:
    seed = trial_seed(cfg.seed, k)
    pool, truth = generate(SynthSpec(n=cfg.n, p=cfg.p, c_t=c_t, sigma_star=cfg.sigma_star, seed=seed))
    sys = build_stacked(pool)
    lam0 = lambda_0(cfg.n, cfg.sigma_star)
    out = {"c_t": c_t, "trial": k, "seed": seed}
    for mult in cfg.multipliers:
        sol = solve_gamma(sys, mult * lam0)
        out[f"exact@{mult:g}"] = bool(np.array_equal(sol.support, truth.support))
    res = select_lambda(sys, TuningConfig(c_bar=cfg.c_bar, halving_factor=cfg.halving_factor))
    out["exact@tuned"] = bool(np.array_equal(res.solution.support, truth.support))
    out["lambda_hat_over_lam0"] = res.lambda_hat / lam0
    out["rounds"] = len(res.trace.rounds)
    return out


def _sweep_trial(cfg: SweepConfig, n: int, c_t: float, k: int) -> dict:
    seed = trial_seed(cfg.seed, k)
    pool, truth = generate(SynthSpec(n=n, p=cfg.p, c_t=c_t, sigma_star=cfg.sigma_star, seed=seed))
    res = select_lambda(build_stacked(pool), TuningConfig(c_bar=cfg.c_bar))
    return {"n": n, "c_t": c_t, "trial": k, "seed": seed,
            "exact": bool(np.array_equal(res.solution.support, truth.support))}


def _conditions_trial(cfg: ConditionsConfig, k: int) -> dict:
    seed = trial_seed(cfg.seed, k)
    if cfg.design == "orthogonal":
        d = random_orthogonal_design(cfg.p, cfg.t, seed, eta=cfg.eta, query_prob=cfg.query_prob)
        spec = SynthSpec(n=d.n, p=d.p, t=d.t, sigma_star=cfg.sigma_star, design="orthogonal",
                         orthogonal=d, seed=seed)
        pool, truth = generate(spec)
        clean, eps_c = orthogonal_clean_pool(d, truth, cfg.sigma_star, seed=seed)
    else:
        pool, truth = generate(SynthSpec(n=cfg.n, p=cfg.p, t=cfg.t, sigma_star=cfg.sigma_star, seed=seed))
        D = stream(seed, "clean-rows").choice(cfg.n, size=cfg.m, replace=False) if cfg.m else []
        clean = generate_clean_pool(pool, truth, D, cfg.eta, noise_sigma=cfg.sigma_star, seed=seed)
    sys = build_stacked(pool, clean)
    T = truth.support
    probe = check_conditions(sys, T, 1.0, truth)
    out = {"trial": k, "seed": seed, "b_min": probe.b_min, "alpha": probe.alpha}
    if probe.alpha is None or probe.alpha >= 1 or not np.isfinite(probe.lambda_star):
        out.update({"certified": False, "recovered": None})
        return out
    lam = max(cfg.lam_factor * probe.lambda_star, 1e-12)
    rep = check_conditions(sys, T, lam, truth)
    sol = solve_gamma(sys, lam)
    out.update({"lam": lam, "lambda_star": rep.lambda_star, "G": rep.G, "certified": rep.certified,
                "recovered": bool(np.array_equal(sol.support, T))})
    return out


def _game_design(cfg: GameConfig, seed: int, table=None):
    rng = stream(seed, "game-design")
    if cfg.design == "gaussian":
        X = rng.standard_normal((cfg.n, cfg.p))
        beta = rng.standard_normal(cfg.p)
    elif cfg.design == "orthogonal_leaning":
        X = orthogonal_leaning_design(cfg.n, cfg.p, seed, cfg.noise)
        beta = rng.standard_normal(cfg.p)
    else:
        # sample n rows; beta* is the least-squares fit on the whole file
        beta = np.linalg.lstsq(table.X, table.y, rcond=None)[0]
        X = table.X[rng.choice(table.X.shape[0], size=cfg.n, replace=False)]
    return X, beta


def _game_trial(cfg: GameConfig, k: int, table=None) -> dict:
    seed = trial_seed(cfg.seed, k)
    X, beta = _game_design(cfg, seed, table)
    inst = GameInstance.from_design(X, beta, cfg.t, cfg.m, cfg.eta)
    rhos = tuple(cfg.rhos) if cfg.rhos is not None else DEFAULT_RHO_GRID
    out = {"trial": k, "seed": seed}
    for s in cfg.strategies:
        o = generator_search(inst, s, rhos, rng_seed=seed, rho=cfg.strategy_rho)
        out[f"recovered@{s}"] = o.recovered
        out[f"D@{s}"] = list(o.D)
    return out


def _run_trials(jobs, threads: int):
    """Run callables, isolating failures; returns (results, errors) in job order."""
    def safe(job):
        try:
            return job(), None
        except (DebugError, ValueError, np.linalg.LinAlgError, FloatingPointError) as e:
            return None, {"error": type(e).__name__, "message": str(e),
                          "where": traceback.format_exc(limit=2).splitlines()[-1]}

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            pairs = list(ex.map(safe, jobs))
    else:
        pairs = [safe(j) for j in jobs]
    return pairs


def _rate(xs) -> float | None:
    xs = [bool(x) for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def run_experiment(command: str, cfg) -> RunReport:
    """Run every trial of a config and aggregate recovery rates."""
    t0 = time.perf_counter()
    meta_jobs = []
    summary, tables = {}, {}
    if command == "debug" and cfg.csv:
        summary, tables = _debug_csv(cfg)
    elif command == "debug":
        meta_jobs = [(None, (lambda k=k: _debug_trial(cfg, k))) for k in range(cfg.trials)]
    elif command == "tune":
        meta_jobs = [(c, (lambda c=c, k=k: _tune_trial(cfg, c, k))) for c in cfg.c_ts for k in range(cfg.trials)]
    elif command == "sweep":
        meta_jobs = [((n, c), (lambda n=n, c=c, k=k: _sweep_trial(cfg, n, c, k)))
                     for n in cfg.ns for c in cfg.c_ts for k in range(cfg.trials)]
    elif command == "conditions":
        meta_jobs = [(None, (lambda k=k: _conditions_trial(cfg, k))) for k in range(cfg.trials)]
    elif command == "game":
        table = read_csv_table(cfg.csv, cfg.label_column, cfg.header) if cfg.design == "csv" else None
        meta_jobs = [(None, (lambda k=k: _game_trial(cfg, k, table))) for k in range(cfg.trials)]
    else:
        raise ConfigError(f"unknown command {command!r}")

    pairs = _run_trials([j for _, j in meta_jobs], cfg.threads)
    trials = [r for r, _ in pairs if r is not None]
    errors = [dict(e, key=_plain_key(key)) for (key, _), (_, e) in zip(meta_jobs, pairs) if e is not None]

    if command == "debug" and not cfg.csv:
        summary = {"exact_success_rate": _rate(t["exact"] for t in trials),
                   "subset_success_rate": _rate(t["subset"] for t in trials)}
    elif command == "tune":
        cols = [f"exact@{m:g}" for m in cfg.multipliers] + ["exact@tuned"]
        rows = []
        for c in cfg.c_ts:
            sel = [t for t in trials if t["c_t"] == c]
            rows.append([c] + [_rate(t[col] for t in sel) for col in cols])
        tables["success_rates"] = {"columns": ["c_t"] + cols, "rows": rows}
        summary = {"cells": len(rows)}
    elif command == "sweep":
        rows = []
        for n in cfg.ns:
            for c in cfg.c_ts:
                sel = [t["exact"] for t in trials if t["n"] == n and t["c_t"] == c]
                rows.append([n, c, _rate(sel), len(sel)])
        tables["success_rates"] = {"columns": ["n", "c_t", "exact_success_rate", "trials"], "rows": rows}
    elif command == "conditions":
        cert = [t for t in trials if t.get("certified")]
        summary = {"certified": len(cert),
                   "certified_recovery_success_rate": _rate(t["recovered"] for t in cert),
                   "alpha_below_one_success_rate": _rate(t["alpha"] is not None and t["alpha"] < 1 for t in trials)}
    elif command == "game":
        rows = [[s, sum(bool(t[f"recovered@{s}"]) for t in trials), len(trials)] for s in cfg.strategies]
        tables["successes"] = {"columns": ["strategy", "successes", "trials"], "rows": rows}

    meta = {"version": __version__, "numpy": np.__version__, "python": platform.python_version(),
            "wall_time_s": time.perf_counter() - t0, "n_trials": len(meta_jobs), "n_errors": len(errors)}
    cfg_d = asdict(cfg)
    return RunReport(command, cfg_d, config_hash(cfg_d), trials, summary, tables, errors, meta)


def _plain_key(key):
    if key is None:
        return None
    return list(key) if isinstance(key, tuple) else key
