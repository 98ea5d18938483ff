"""Command-line front end.

Subcommands: thresholds, simulate, ensemble, convergence, sweep. Every run
is driven by a JSON scenario config (strict schema, unknown keys are
errors) and writes CSV/JSON artifacts into the output directory. With a
fixed config and seed the output files are byte-identical across runs.

Exit codes: 0 success, 2 config or argument error, 3 domain error (the
stochastic thresholds are undefined at sigma = 0), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import __version__, analysis, brownian, scenarios
from .errors import IntegrationError, ParameterError, ZeroNoiseError
from .integrators import Scheme, _check_stride, _resolve_steps, simulate
from .model import ModelParams, State, classify_regime

_CONFIG_KEYS = {"params", "x0", "horizon", "dt", "scheme", "n_paths", "seed",
                "record_stride", "outputs"}
_REQUIRED_KEYS = {"params", "x0", "horizon", "dt", "scheme"}

DEFAULT_N_PATHS = 100
DEFAULT_SEED = 20240101


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams
    x0: State
    horizon: float
    dt: float
    scheme: Scheme
    n_paths: int = DEFAULT_N_PATHS
    seed: int = DEFAULT_SEED
    record_stride: int = 1
    outputs: str | None = None


def _require_number(data: dict, key: str, integer: bool = False):
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(f"config field {key!r} must be a number, got {value!r}")
    if integer:
        if not isinstance(value, int):
            raise ParameterError(f"config field {key!r} must be an integer, got {value!r}")
        return value
    return float(value)


def parse_config(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ParameterError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(data)
    if missing:
        raise ParameterError(f"missing config keys: {sorted(missing)}")

    params = ModelParams.from_dict(data["params"])
    x0_raw = data["x0"]
    if not isinstance(x0_raw, dict) or set(x0_raw) != {"u", "v"}:
        raise ParameterError("config field 'x0' must be an object with keys u, v")
    x0 = State(_require_number(x0_raw, "u"), _require_number(x0_raw, "v"))
    if x0.u < 0.0 or x0.v < 0.0:
        raise ParameterError(f"x0 must be nonnegative, got {tuple(x0)}")

    horizon = _require_number(data, "horizon")
    dt = _require_number(data, "dt")
    scheme_name = data["scheme"]
    if not isinstance(scheme_name, str):
        raise ParameterError(f"config field 'scheme' must be a string, got {scheme_name!r}")
    scheme = Scheme.parse(scheme_name)

    n_paths = data.get("n_paths", DEFAULT_N_PATHS)
    if "n_paths" in data:
        n_paths = _require_number(data, "n_paths", integer=True)
    if n_paths < 1:
        raise ParameterError(f"n_paths must be >= 1, got {n_paths}")
    seed = data.get("seed", DEFAULT_SEED)
    if "seed" in data:
        seed = _require_number(data, "seed", integer=True)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must fit in 64 bits, got {seed}")
    record_stride = data.get("record_stride", 1)
    if "record_stride" in data:
        record_stride = _require_number(data, "record_stride", integer=True)
    outputs = data.get("outputs")
    if outputs is not None and not isinstance(outputs, str):
        raise ParameterError(f"config field 'outputs' must be a string, got {outputs!r}")

    n_steps = _resolve_steps(horizon, dt)
    _check_stride(n_steps, record_stride)

    return ScenarioConfig(params=params, x0=x0, horizon=horizon, dt=dt,
                          scheme=scheme, n_paths=n_paths, seed=seed,
                          record_stride=record_stride, outputs=outputs)


def load_config(source: str) -> ScenarioConfig:
    """Read a config from a file path or a bundled scenario name."""
    path = Path(source)
    if not path.is_file():
        bundled = scenarios.bundled_path(source)
        if bundled is None:
            raise ParameterError(
                f"config {source!r} is neither a file nor a bundled scenario "
                f"(bundled: {', '.join(scenarios.available())})")
        path = bundled
    try:
        with open(path, encoding="utf-8") as fp:
            data = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config {path} is not valid JSON: {exc}") from None
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)


def _out_dir(cfg: ScenarioConfig, args) -> Path:
    target = args.out if args.out is not None else cfg.outputs
    if target is None:
        raise ParameterError("no output directory: set 'outputs' in the config "
                             "or pass --out")
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ParameterError(f"--seed must fit in 64 bits, got {args.seed}")
        cfg = replace(cfg, seed=args.seed)
    if args.paths is not None:
        if args.paths < 1:
            raise ParameterError(f"--paths must be >= 1, got {args.paths}")
        cfg = replace(cfg, n_paths=args.paths)
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump(payload, fp, indent=2)
        fp.write("\n")


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_thresholds(cfg: ScenarioConfig, args) -> int:
    report = classify_regime(cfg.params)
    payload = report.to_dict()
    out = _out_dir(cfg, args)
    _write_json(out / "thresholds.json", payload)
    if not args.quiet:
        print(json.dumps(payload, indent=2))
    return 0


def _cmd_simulate(cfg: ScenarioConfig, args) -> int:
    out = _out_dir(cfg, args)
    n_steps = _resolve_steps(cfg.horizon, cfg.dt)
    if cfg.scheme.is_stochastic:
        path = brownian.generate(cfg.seed, 0, cfg.dt, n_steps)
        stochastic = simulate(cfg.scheme, cfg.params, cfg.x0, cfg.horizon,
                              cfg.dt, path=path, record_stride=cfg.record_stride)
    else:
        stochastic = simulate(Scheme.RK4, cfg.params, cfg.x0, cfg.horizon,
                              cfg.dt, record_stride=cfg.record_stride)
    deterministic = simulate(Scheme.RK4, cfg.params, cfg.x0, cfg.horizon,
                             cfg.dt, record_stride=cfg.record_stride)
    with open(out / "stochastic.csv", "w", encoding="utf-8", newline="\n") as fp:
        stochastic.to_csv(fp)
    with open(out / "deterministic.csv", "w", encoding="utf-8", newline="\n") as fp:
        deterministic.to_csv(fp)
    _say(args, f"wrote {out / 'stochastic.csv'} and {out / 'deterministic.csv'} "
               f"({stochastic.clamp_count} clamps)")
    return 0


def _cmd_ensemble(cfg: ScenarioConfig, args) -> int:
    out = _out_dir(cfg, args)
    stats = analysis.ensemble(cfg.params, cfg.scheme, cfg.x0, cfg.horizon,
                              cfg.dt, cfg.n_paths, cfg.seed,
                              record_stride=cfg.record_stride)
    with open(out / "ensemble.csv", "w", encoding="utf-8", newline="\n") as fp:
        stats.to_csv(fp)
    _say(args, f"wrote {out / 'ensemble.csv'} ({stats.n_paths} paths, "
               f"clamp rate {stats.clamp_rate!r})")
    return 0


def _cmd_convergence(cfg: ScenarioConfig, args) -> int:
    out = _out_dir(cfg, args)
    report = analysis.strong_order(cfg.params, cfg.scheme, cfg.x0,
                                   cfg.horizon, dt_fine=cfg.dt,
                                   levels=args.levels, n_paths=cfg.n_paths,
                                   seed=cfg.seed)
    _write_json(out / "convergence.json", report.to_dict())
    _say(args, f"wrote {out / 'convergence.json'} (slope {report.slope!r}, "
               f"residual {report.residual!r})")
    return 0


def _parse_grid(text: str, name: str) -> list[float]:
    items = [piece for piece in (s.strip() for s in text.split(",")) if piece]
    if not items:
        raise ParameterError(f"{name} is empty")
    try:
        return [float(piece) for piece in items]
    except ValueError:
        raise ParameterError(f"{name} must be comma-separated numbers, got {text!r}") from None


def _cmd_sweep(cfg: ScenarioConfig, args) -> int:
    out = _out_dir(cfg, args)
    m_grid = _parse_grid(args.m_grid, "--m-grid")
    sigma_grid = _parse_grid(args.sigma_grid, "--sigma-grid")
    cells = analysis.regime_map(cfg.params, m_grid, sigma_grid,
                                scheme=cfg.scheme, x0=cfg.x0,
                                horizon=cfg.horizon, dt=cfg.dt,
                                n_paths=cfg.n_paths, seed=cfg.seed)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fp:
        analysis.regime_cells_to_csv(cells, fp)
    failed = sum(1 for c in cells if c.error is not None)
    _say(args, f"wrote {out / 'sweep.csv'} ({len(cells)} cells, {failed} failed)")
    return 0


_HANDLERS = {
    "thresholds": _cmd_thresholds,
    "simulate": _cmd_simulate,
    "ensemble": _cmd_ensemble,
    "convergence": _cmd_convergence,
    "sweep": _cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jobmarket",
        description="Simulation lab for a noisy free-jobs / labour-force model",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True,
                       help="scenario JSON file or bundled name (fig1, fig2)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config 'outputs')")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--paths", type=int, default=None,
                       help="override the config n_paths")
        p.add_argument("--quiet", action="store_true",
                       help="suppress informational output")

    common(sub.add_parser("thresholds", help="closed-form regime report"))
    common(sub.add_parser("simulate", help="one noisy path plus its "
                                           "deterministic companion"))
    common(sub.add_parser("ensemble", help="per-time statistics over many paths"))
    conv = sub.add_parser("convergence", help="empirical strong-order estimate")
    common(conv)
    conv.add_argument("--levels", type=int, default=5,
                      help="number of coarsening octaves above the config dt")
    sweep = sub.add_parser("sweep", help="regime map over an (m, sigma) grid")
    common(sweep)
    sweep.add_argument("--m-grid", required=True,
                       help="comma-separated m values")
    sweep.add_argument("--sigma-grid", required=True,
                       help="comma-separated sigma values")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return _HANDLERS[args.command](cfg, args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ZeroNoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
