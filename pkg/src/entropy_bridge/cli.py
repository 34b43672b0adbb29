"""Command-line front end: config files in, CSV out.

Subcommands: ``bridge``, ``robustness``, ``fig1``, ``oracle``, ``simulate``.
Configs are TOML files with ``[system]``, ``[initial]``, ``[terminal]`` and
``[task]`` sections; matrices are flat row-major arrays with dimensions
declared in the ``[system]`` section.  Numbers are printed with 17
significant digits so reruns are byte-identical.

Exit codes: 0 success, 1 usage/parse, 2 infeasible, 3 nonconvergence,
4 oracle identity breach.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import chain_oracle, mc, robustness
from .bridge import NoiseStrategy, feasible_strategy, min_supply
from .entropy import GaussianDist
from .errors import ConvergenceError, ParameterError, UnreachableError
from .matgauss import LinearSystem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGED = 3
EXIT_IDENTITY = 4

THREADS_ENV = "ENTROPY_BRIDGE_THREADS"


class ConfigError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return format(float(value), ".17g")


def _emit(rows, header, out_path):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    text = "\n".join(lines) + "\n"
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def _map_grid(fn, items):
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _matrix(section: dict, key: str, rows: int, cols: int, where: str) -> np.ndarray:
    try:
        flat = [float(v) for v in section[key]]
    except KeyError as exc:
        raise ConfigError(f"missing '{key}' in [{where}]") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{key}' in [{where}] must be a numeric array") from exc
    if len(flat) != rows * cols:
        raise ConfigError(
            f"'{key}' in [{where}] has {len(flat)} entries, expected {rows * cols}"
        )
    return np.array(flat).reshape(rows, cols)


def _vector(section: dict, key: str, size: int, where: str) -> np.ndarray:
    return _matrix(section, key, 1, size, where).reshape(size)


def _system(config: dict) -> LinearSystem:
    try:
        sec = config["system"]
        n, m = int(sec["n"]), int(sec["m"])
    except KeyError as exc:
        raise ConfigError("config needs [system] with 'n', 'm', 'A', 'B'") from exc
    a = _matrix(sec, "A", n, n, "system")
    b = _matrix(sec, "B", n, m, "system")
    try:
        return LinearSystem(a, b)
    except ValueError as exc:
        raise ConfigError(f"[system]: {exc}") from exc


def _gaussian(config: dict, name: str, n: int) -> GaussianDist:
    if name not in config:
        raise ConfigError(f"config needs a [{name}] section")
    sec = config[name]
    mean = _vector(sec, "mean", n, name)
    cov = _matrix(sec, "cov", n, n, name)
    try:
        return GaussianDist(mean, cov)
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def _seed(config: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", 0))


def cmd_bridge(config, args) -> int:
    sys_ = _system(config)
    task = config.get("task", {})
    horizon = int(task.get("horizon", sys_.n))
    phi = _gaussian(config, "initial", sys_.n)
    psi = _gaussian(config, "terminal", sys_.n)
    sol = min_supply(sys_, horizon, phi, psi)
    if not sol.feasible:
        print(
            f"horizon {horizon} is below the minimal steering horizon "
            f"tau={sol.grams.tau}",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE

    n = sys_.n
    strat = sol.strategy
    mho_eigs = np.linalg.eigvalsh(sol.riccati_sol)
    header = (
        ["row", "J", "mean_part", "cov_part"]
        + [f"mho_eig_{i}" for i in range(n)]
        + [f"w_mean_{j}" for j in range(strat.noise_dim)]
        + [
            f"K_{j}_{i}"
            for j in range(strat.noise_dim)
            for i in range(n)
        ]
        + [f"L_eig_{j}" for j in range(strat.noise_dim)]
    )
    row = (
        ["bridge", sol.supply, sol.mean_part, sol.cov_part]
        + list(mho_eigs)
        + list(strat.w_mean)
        + list(strat.gain.reshape(-1))
        + list(np.linalg.eigvalsh(strat.cond_cov))
    )
    rows = [row]
    if args.verify_mc:
        report = mc.simulate(
            sys_,
            mc.SimConfig(
                sample_count=args.verify_mc,
                seed=_seed(config, args),
                horizon=horizon,
                strategy=strat,
                init=phi,
            ),
        )
        mc_cols = (
            ["mc_supply", "mc_supply_se"]
            + [f"mc_mean_{i}" for i in range(n)]
            + [f"mc_cov_{i}_{j}" for i in range(n) for j in range(n)]
        )
        mc_vals = (
            [report.supply, report.supply_se]
            + list(report.mean)
            + list(report.cov.reshape(-1))
        )
        nan = float("nan")
        rows[0] = row + [nan] * len(mc_cols)
        rows.append(["mc"] + [nan] * (len(header) - 1) + mc_vals)
        header = header + mc_cols
    _emit(rows, header, args.out)
    return EXIT_OK


def cmd_robustness(config, args) -> int:
    sys_ = _system(config)
    task = config.get("task", {})
    if args.gamma:
        gammas = args.gamma
    else:
        gammas = [float(g) for g in task.get("gamma", [2.0])]
    if "weight" in task:
        weight = _matrix(task, "weight", sys_.n, sys_.n, "task")
    else:
        weight = np.eye(sys_.n)

    # the gamma sweep shares one continuation path, so it runs sequentially
    gammas = sorted(float(g) for g in gammas)
    try:
        sols = robustness.robustness_sweep(sys_, weight, gammas)
    except UnreachableError as exc:
        print(f"gamma unattainable: {exc} (max {exc.max_gamma!r})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    rows = []
    for gamma, sol in zip(gammas, sols):
        prob = robustness.RobustnessProblem(sys=sys_, weight=weight, gamma=gamma)
        res = robustness.sigma_residual(sol.multiplier, prob, sol.state_cov)
        rows.append(
            (
                gamma,
                sol.multiplier,
                sol.index,
                res,
                abs(sol.gamma_attained - gamma),
                sol.converged,
                sol.steps,
                sol.fixed_point_iters,
            )
        )
    header = [
        "gamma",
        "lambda",
        "Z",
        "sigma_residual",
        "gamma_residual",
        "converged",
        "steps",
        "fixed_point_iters",
    ]
    _emit(rows, header, args.out)
    return EXIT_OK


def _parse_grid(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("grid spec must be 'start:stop:step'")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ConfigError("grid spec must satisfy start <= stop, step > 0")
    count = int(round((stop - start) / step)) + 1
    return [start + i * step for i in range(count) if start + i * step <= stop + 1e-12]


def cmd_fig1(config, args) -> int:
    task = config.get("task", {}) if config else {}
    a_values = [float(a) for a in task.get("a_values", [round(0.1 * i, 1) for i in range(1, 10)])]
    if args.grid:
        gammas = _parse_grid(args.grid)
    else:
        start = float(task.get("gamma_start", 1.0))
        stop = float(task.get("gamma_stop", 10.0))
        step = float(task.get("gamma_step", 0.05))
        gammas = _parse_grid(f"{start}:{stop}:{step}")

    def curve(a):
        rows = []
        for g in gammas:
            z, _ = robustness.z_1d(a, g)
            asym = (1.0 - abs(a)) * g / (2.0 * (1.0 + abs(a)))
            rows.append((a, g, z, asym))
        return rows

    chunks = _map_grid(curve, a_values)
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r[0], r[1]))
    _emit(rows, ["A", "gamma", "Z", "asymptote"], args.out)
    return EXIT_OK


def cmd_oracle(config, args) -> int:
    task = config.get("task", {})
    rng = np.random.default_rng(_seed(config, args))
    models = []
    for path in task.get("models", []):
        try:
            models.append((path, chain_oracle.load_chain_model(path)))
        except (OSError, ValueError) as exc:
            print(f"model parse error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    for i in range(int(task.get("fuzz", 0 if models else 20))):
        nx = int(task.get("nx", 2 + (i % 2)))
        nw = int(task.get("nw", nx))
        models.append((f"fuzz-{i}", chain_oracle.random_model(rng, nx, nw)))

    horizon = max(int(task.get("horizon", 3)), 2)
    rows = []
    breached = False
    for name, model in models:
        for check in chain_oracle.identity_suite(model, rng, horizon):
            rows.append((name, check.name, check.residual, check.ok))
            breached = breached or not check.ok
    _emit(rows, ["model", "check", "residual", "ok"], args.out)
    return EXIT_IDENTITY if breached else EXIT_OK


def cmd_simulate(config, args) -> int:
    sys_ = _system(config)
    task = config.get("task", {})
    horizon = int(task.get("horizon", sys_.n))
    phi = _gaussian(config, "initial", sys_.n)
    psi = _gaussian(config, "terminal", sys_.n)
    kind = str(task.get("strategy", "optimal"))
    if kind == "optimal":
        sol = min_supply(sys_, horizon, phi, psi)
        if not sol.feasible:
            print(f"unreachable horizon (tau={sol.grams.tau})", file=sys.stderr)
            return EXIT_INFEASIBLE
        strat = sol.strategy
    elif kind == "feasible":
        eps = task.get("eps")
        strat = feasible_strategy(
            sys_, horizon, phi, psi, float(eps) if eps is not None else None
        )
    elif kind == "nominal":
        mt = sys_.m * horizon
        strat = NoiseStrategy(
            horizon=horizon,
            w_mean=np.zeros(mt),
            gain=np.zeros((mt, sys_.n)),
            cond_cov=np.eye(mt),
            anchor_mean=phi.mean,
        )
    else:
        print(f"unknown strategy kind {kind!r}", file=sys.stderr)
        return EXIT_USAGE

    report = mc.simulate(
        sys_,
        mc.SimConfig(
            sample_count=int(task.get("samples", 100_000)),
            seed=_seed(config, args),
            horizon=horizon,
            strategy=strat,
            init=phi,
        ),
    )
    n = sys_.n
    header = (
        ["samples", "seed", "supply", "supply_se"]
        + [f"mean_{i}" for i in range(n)]
        + [f"mean_se_{i}" for i in range(n)]
        + [f"cov_{i}_{j}" for i in range(n) for j in range(n)]
    )
    row = (
        [report.sample_count, _seed(config, args), report.supply, report.supply_se]
        + list(report.mean)
        + list(report.mean_se)
        + list(report.cov.reshape(-1))
    )
    _emit([row], header, args.out)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entropy-bridge",
        description="Minimum relative-entropy noise steering toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("bridge", cmd_bridge),
        ("robustness", cmd_robustness),
        ("fig1", cmd_fig1),
        ("oracle", cmd_oracle),
        ("simulate", cmd_simulate),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML problem description")
        p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--verify-mc", type=int, default=0, dest="verify_mc")
        p.add_argument(
            "--gamma",
            type=lambda s: [float(x) for x in s.split(",") if x],
            default=None,
        )
        p.add_argument("--grid", default=None, help="gamma grid 'start:stop:step'")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.config) if args.config else {}
        return args.handler(config, args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnreachableError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    raise SystemExit(main())
