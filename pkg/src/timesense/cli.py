"""Command-line interface.

Subcommands: ``gen`` writes synthetic sensor CSVs, ``fit`` recovers kernel
hyperparameters from a sensor CSV, ``estimate`` scans a duration grid, and
``train`` runs the full task and emits all plot data.  Exit codes: 0 ok,
2 input error, 3 fit did not converge (best iterate still written),
4 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .agent import AgentParams
from .env import Action, TaskConfig
from .estimator import (
    FitConfig,
    NumericalError,
    TauGrid,
    estimate_tau,
    fit,
)
from .experiment import (
    REPRESENTATIONS,
    RunConfig,
    psychometric,
    run_experiment_detailed,
    td_error_trajectory,
)
from .features import MicrostimuliConfig
from .formats import (
    FormatError,
    ensure_dir,
    read_sensor_csv,
    write_episodes_csv,
    write_json,
    write_psychometric_csv,
    write_sensor_csv,
    write_tderror_csv,
)
from .ou import ConditioningError, OUHyperparams, SampleTimes, sample_paths

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_NUMERICAL = 4

_DEFAULT_TDERROR_WINDOW = 50

# Flat dotted config keys -> value parser.  Unknown keys are hard errors.
_BOOL = {"true": True, "false": False}


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"expected true/false, got {raw!r}") from None


_CONFIG_KEYS = {
    "episodes": int,
    "seed": int,
    "representation": str,
    "oracle_tau": _parse_bool,
    "calibration_seconds": float,
    "csc_horizon": int,
    "agent.alpha": float,
    "agent.gamma": float,
    "agent.eta": float,
    "agent.epsilon0": float,
    "agent.epsilon_decay": float,
    "agent.shared_traces": _parse_bool,
    "agent.epsilon_per_episode": _parse_bool,
    "features.m": int,
    "features.beta": float,
    "features.xi": float,
    "features.zeta": int,
    "task.dt": float,
    "task.max_interval_steps": int,
    "task.boundary_steps": int,
    "task.reward_correct": float,
    "task.reward_wrong": float,
    "task.sensor_channels": int,
    "task.samples_per_step": int,
    "task.max_episode_steps": int,
    "task.true_lambda": float,
    "task.true_sigma": float,
    "fit.init_lambda": float,
    "fit.init_sigma": float,
    "fit.max_iters": int,
    "fit.step_tolerance": float,
    "fit.learning_rate": float,
    "tau_grid.min": float,
    "tau_grid.max": float,
    "tau_grid.step": float,
    "train.tderror_window": int,
}


class ConfigError(ValueError):
    pass


def parse_config_file(path: str) -> dict:
    """Read ``key = value`` lines; '#' starts a comment; typos are errors."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](raw_value.strip())
        except ValueError as err:
            raise ConfigError(f"{path}:{line_no}: bad value for {key}: {err}") from err
    return values


def build_run_config(values: dict) -> RunConfig:
    """Assemble a RunConfig from flat config values over the defaults."""

    def section(prefix: str) -> dict:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in values.items() if k.startswith(prefix + ".")}

    task_kwargs = section("task")
    true_lam = task_kwargs.pop("true_lambda", None)
    true_sigma = task_kwargs.pop("true_sigma", None)
    if true_lam is not None or true_sigma is not None:
        base = TaskConfig().true_ou_params
        task_kwargs["true_ou_params"] = OUHyperparams(
            true_lam if true_lam is not None else base.lam,
            true_sigma if true_sigma is not None else base.sigma,
        )

    grid_kwargs = section("tau_grid")
    tau_grid = None
    if grid_kwargs:
        missing = {"min", "max", "step"} - set(grid_kwargs)
        if missing:
            raise ConfigError(
                f"tau_grid needs min, max and step; missing {sorted(missing)}"
            )
        tau_grid = TauGrid(
            np.arange(
                grid_kwargs["min"],
                grid_kwargs["max"] + 1e-9,
                grid_kwargs["step"],
            )
        )

    top = {
        k: v
        for k, v in values.items()
        if "." not in k and k not in ("seed",)
    }
    try:
        return RunConfig(
            agent=AgentParams(**section("agent")),
            features=MicrostimuliConfig(**section("features")),
            task=TaskConfig(**task_kwargs),
            fit=FitConfig(**section("fit")),
            tau_grid=tau_grid,
            master_seed=values.get("seed", 0),
            **top,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _config_echo(cfg: RunConfig) -> dict:
    echo = asdict(cfg)
    echo["tau_grid"] = [float(t) for t in cfg.resolved_tau_grid().candidates]
    return echo


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        params = OUHyperparams(args.lam, args.sigma)
        n = int(round(args.duration / args.dt))
        if n < 2:
            return _fail("duration/dt must give at least 2 samples", EXIT_INPUT)
        times = SampleTimes((np.arange(n) * args.dt))
        batch = sample_paths(params, times, args.channels, args.seed)
    except (ValueError, ConditioningError) as err:
        return _fail(str(err), EXIT_INPUT)
    try:
        write_sensor_csv(args.out, batch)
    except OSError as err:
        return _fail(f"cannot write {args.out}: {err}", EXIT_INPUT)
    print(f"wrote {n} samples x {args.channels} channels to {args.out}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        batch = read_sensor_csv(args.input)
    except FormatError as err:
        return _fail(f"{args.input}: {err}", EXIT_INPUT)
    except OSError as err:
        return _fail(str(err), EXIT_INPUT)

    fit_cfg = FitConfig()
    if args.config:
        try:
            values = parse_config_file(args.config)
            fit_cfg = build_run_config(values).fit
        except ConfigError as err:
            return _fail(str(err), EXIT_INPUT)

    try:
        result = fit(batch, fit_cfg)
    except NumericalError as err:
        if err.last_params is not None:
            write_json(
                args.out,
                {
                    "lambda": err.last_params.lam,
                    "sigma": err.last_params.sigma,
                    "log_likelihood": None,
                    "iterations": None,
                    "converged": False,
                },
            )
        return _fail(str(err), EXIT_NUMERICAL)

    write_json(
        args.out,
        {
            "lambda": result.params.lam,
            "sigma": result.params.sigma,
            "log_likelihood": result.log_likelihood,
            "iterations": result.iterations,
            "converged": result.converged,
        },
    )
    print(
        f"lambda={result.params.lam:.6g} sigma={result.params.sigma:.6g} "
        f"({result.iterations} iterations)"
    )
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def _parse_grid_spec(spec: str) -> TauGrid:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec must be MIN:MAX:STEP, got {spec!r}")
    lo, hi, step = (float(p) for p in parts)
    return TauGrid(np.arange(lo, hi + 1e-9, step))


def cmd_estimate(args: argparse.Namespace) -> int:
    import json

    try:
        batch = read_sensor_csv(args.input)
    except FormatError as err:
        return _fail(f"{args.input}: {err}", EXIT_INPUT)
    except OSError as err:
        return _fail(str(err), EXIT_INPUT)
    try:
        with open(args.hyperparams) as fh:
            raw = json.load(fh)
        params = OUHyperparams(float(raw["lambda"]), float(raw["sigma"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        return _fail(f"bad hyperparams file {args.hyperparams}: {err}", EXIT_INPUT)
    try:
        grid = _parse_grid_spec(args.grid)
    except ValueError as err:
        return _fail(str(err), EXIT_INPUT)

    try:
        estimate = estimate_tau(batch, params, grid)
    except (ValueError, ConditioningError) as err:
        return _fail(str(err), EXIT_NUMERICAL)

    write_json(
        args.out,
        {
            "tau_hat": estimate.tau_hat,
            "profile": [[tau, ll] for tau, ll in estimate.profile],
        },
    )
    print(f"tau_hat={estimate.tau_hat:.6g} over {len(estimate.profile)} candidates")
    return EXIT_OK


def _train_one(cfg: RunConfig, out_dir: str, tderror_window: int) -> dict:
    """Run one experiment and write every output file into ``out_dir``."""
    import threadpoolctl

    threadpoolctl.threadpool_limits(1)  # also applies inside pool workers
    ensure_dir(out_dir)
    started = _now()
    logs, summary, learner_state = run_experiment_detailed(cfg)
    curve = psychometric(logs, cfg.task.dt)
    tderr = td_error_trajectory(logs, tderror_window)

    out = Path(out_dir)
    outputs = [
        "episodes.csv",
        "psychometric.csv",
        "tderror.csv",
        "summary.json",
        "weights.json",
        "manifest.json",
    ]
    write_episodes_csv(str(out / "episodes.csv"), logs, cfg.task.dt)
    write_psychometric_csv(str(out / "psychometric.csv"), curve)
    write_tderror_csv(str(out / "tderror.csv"), tderr)
    summary_dict = asdict(summary)
    write_json(str(out / "summary.json"), summary_dict)
    write_json(
        str(out / "weights.json"), _weights_payload(cfg, learner_state)
    )

    manifest = {
        "artifact_version": __version__,
        "seed": cfg.master_seed,
        "config": _config_echo(cfg),
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    write_json(str(out / "manifest.json"), manifest)
    return summary_dict


def _weights_payload(cfg: RunConfig, learner_state) -> dict:
    """Final learner snapshot: weight rows per action, or the Q table."""
    action_names = [a.name.capitalize() for a in Action]
    if isinstance(learner_state, np.ndarray) and cfg.representation in (
        "microstimuli",
        "csc",
    ):
        return {
            "representation": cfg.representation,
            "actions": action_names,
            "weights": [[float(v) for v in row] for row in learner_state],
        }
    if isinstance(learner_state, dict):  # tabular-history
        return {
            "representation": cfg.representation,
            "actions": action_names,
            "q_table": {
                ",".join(map(str, key)): [float(v) for v in row]
                for key, row in sorted(learner_state.items())
            },
        }
    return {
        "representation": cfg.representation,
        "actions": action_names,
        "q_table": [[float(v) for v in row] for row in learner_state],
    }


def cmd_train(args: argparse.Namespace) -> int:
    values: dict = {}
    if args.config:
        try:
            values = parse_config_file(args.config)
        except ConfigError as err:
            return _fail(str(err), EXIT_INPUT)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.episodes is not None:
        values["episodes"] = args.episodes
    if args.oracle_tau:
        values["oracle_tau"] = True
    if args.representation:
        values["representation"] = args.representation
    try:
        cfg = build_run_config(values)
    except ConfigError as err:
        return _fail(str(err), EXIT_INPUT)

    window = values.get("train.tderror_window", _DEFAULT_TDERROR_WINDOW)

    seeds = [cfg.master_seed]
    if args.sweep_seeds:
        try:
            seeds = [int(s) for s in args.sweep_seeds.split(",") if s.strip()]
        except ValueError:
            return _fail("bad --sweep-seeds; expected comma-separated ints", EXIT_INPUT)
        if not seeds:
            return _fail("--sweep-seeds gave no seeds", EXIT_INPUT)

    single = len(seeds) == 1 and not args.sweep_seeds
    jobs = max(1, args.jobs)
    try:
        if single:
            summary = _train_one(cfg, args.out, window)
            print(
                f"{cfg.episodes} episodes done; convergence episode: "
                f"{summary['convergence_episode']}"
            )
        else:
            runs = [
                (replace(cfg, master_seed=s), str(Path(args.out) / f"seed_{s}"))
                for s in seeds
            ]
            if jobs == 1:
                for run_cfg, run_dir in runs:
                    _train_one(run_cfg, run_dir, window)
            else:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    futures = [
                        pool.submit(_train_one, run_cfg, run_dir, window)
                        for run_cfg, run_dir in runs
                    ]
                    for future in futures:
                        future.result()
            print(f"{len(runs)} runs written under {args.out}")
    except NumericalError as err:
        episode = getattr(err, "episode_index", None)
        suffix = f" (episode {episode})" if episode is not None else ""
        return _fail(f"numerical abort{suffix}: {err}", EXIT_NUMERICAL)
    except OSError as err:
        return _fail(str(err), EXIT_INPUT)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timesense",
        description="Interval timing from sensor streams plus a TD agent that uses it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write a synthetic sensor CSV")
    p_gen.add_argument("--lambda", dest="lam", type=float, required=True)
    p_gen.add_argument("--sigma", type=float, required=True)
    p_gen.add_argument("--duration", type=float, required=True, help="seconds")
    p_gen.add_argument("--dt", type=float, required=True, help="sample spacing, s")
    p_gen.add_argument("--channels", type=int, default=15)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_fit = sub.add_parser("fit", help="fit kernel hyperparameters from a sensor CSV")
    p_fit.add_argument("input", help="sensor CSV")
    p_fit.add_argument("--config", default=None)
    p_fit.add_argument("--out", required=True, help="hyperparams JSON")
    p_fit.set_defaults(func=cmd_fit)

    p_est = sub.add_parser("estimate", help="estimate elapsed time for a sensor CSV")
    p_est.add_argument("input", help="sensor CSV")
    p_est.add_argument("--hyperparams", required=True, help="JSON from fit")
    p_est.add_argument("--grid", required=True, help="candidate grid MIN:MAX:STEP")
    p_est.add_argument("--out", required=True, help="estimate JSON")
    p_est.set_defaults(func=cmd_estimate)

    p_train = sub.add_parser("train", help="run the temporal-discrimination task")
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--oracle-tau", action="store_true")
    p_train.add_argument(
        "--representation", choices=REPRESENTATIONS, default=None
    )
    p_train.add_argument(
        "--sweep-seeds",
        default=None,
        help="comma-separated seeds; each runs independently under --out/seed_N",
    )
    p_train.add_argument(
        "--jobs", type=int, default=1, help="parallel workers for sweep runs"
    )
    p_train.set_defaults(func=cmd_train)

    return parser


def main(argv: list[str] | None = None) -> int:
    # The dense algebra here is all small-matrix; oversubscribed BLAS
    # threading only adds contention, so pin it for the whole process.
    import threadpoolctl

    threadpoolctl.threadpool_limits(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
