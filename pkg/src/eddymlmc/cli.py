"""Command-line front end: config loading, experiment drivers, CSV output.

Subcommands
-----------
``screen``                 variance screening table      -> screening.csv
``run --eps V``            one adaptive MLMC run         -> mlmc_run.csv
``compare [--eps a,b,c]``  MC-vs-MLMC cost table         -> cost_compare.csv
``oracle [--quad-order q]`` quadrature reference E[W]    -> oracle.csv
``qoi --level L``          single nominal solve (debug)  -> qoi.csv

Every CSV starts with a comment block echoing the effective numerical
configuration as dotted TOML keys (``# key = value``); stripping the
``# `` prefixes yields a config file that reproduces the run.

Exit codes: 0 success (including a flagged bias-unconverged run),
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .fem import AssemblyError, SolverError, evaluate_qoi
from .mesh import LevelSpec, MeshError, dof_count
from .model import (
    ConfigurationError,
    ModelParams,
    ParameterDistributions,
    ParamSample,
    nominal_params,
)
from .mlmc import MlmcEngine, MlmcError
from .oracle import OracleError, reference_mean

_DEFAULT_EPS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)

# schema: (section, key) -> (type, default)
_SCHEMA = {
    ("geometry", "r0"): (float, 0.1),
    ("geometry", "r2"): (float, 0.8),
    ("material", "sigma"): (float, 2.0e3),
    ("excitation", "frequency_hz"): (float, 50.0),
    ("dist", "r1_nominal"): (float, 0.5),
    ("dist", "r1_halfwidth"): (float, 0.1),
    ("dist", "i0_nominal"): (float, 100.0),
    ("dist", "i0_halfwidth"): (float, 10.0),
    ("dist", "mu3_nominal"): (float, 1000.0),
    ("dist", "mu3_halfwidth"): (float, 400.0),
    ("rng", "master_seed"): (int, 42),
    ("experiment", "levels"): (int, 5),
    ("experiment", "n_warm"): (int, 100),
    ("experiment", "eps"): (list, list(_DEFAULT_EPS)),
    ("experiment", "quad_order"): (int, 8),
    ("experiment", "l_start"): (int, 2),
    ("experiment", "l_max"): (int, 4),
    ("experiment", "n_min"): (int, 10),
    ("experiment", "mc_sample_cap"): (int, 400),
}


@dataclass
class RunConfig:
    """Validated effective configuration of one CLI invocation."""

    fixed: ModelParams
    dists: ParameterDistributions
    master_seed: int
    levels: int
    n_warm: int
    eps_list: list[float]
    quad_order: int
    l_start: int
    l_max: int
    n_min: int
    mc_sample_cap: int
    out_dir: Path = field(default_factory=lambda: Path("."))
    threads: int = 1

    def echo_lines(self) -> list[str]:
        """Dotted-key TOML lines of the result-affecting configuration."""
        vals = {
            ("geometry", "r0"): self.fixed.r0,
            ("geometry", "r2"): self.fixed.r2,
            ("material", "sigma"): self.fixed.sigma,
            ("excitation", "frequency_hz"): self.fixed.omega / (2.0 * math.pi),
            ("dist", "r1_nominal"): self.dists.r1_nominal,
            ("dist", "r1_halfwidth"): self.dists.r1_halfwidth,
            ("dist", "i0_nominal"): self.dists.i0_nominal,
            ("dist", "i0_halfwidth"): self.dists.i0_halfwidth,
            ("dist", "mu3_nominal"): self.dists.mu3_nominal,
            ("dist", "mu3_halfwidth"): self.dists.mu3_halfwidth,
            ("rng", "master_seed"): self.master_seed,
            ("experiment", "levels"): self.levels,
            ("experiment", "n_warm"): self.n_warm,
            ("experiment", "eps"): self.eps_list,
            ("experiment", "quad_order"): self.quad_order,
            ("experiment", "l_start"): self.l_start,
            ("experiment", "l_max"): self.l_max,
            ("experiment", "n_min"): self.n_min,
            ("experiment", "mc_sample_cap"): self.mc_sample_cap,
        }
        lines = []
        for (sec, key), v in vals.items():
            if isinstance(v, list):
                text = "[" + ", ".join(repr(float(x)) for x in v) + "]"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{sec}.{key} = {text}")
        return lines


def _coerce(section: str, key: str, value, want):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{section}.{key} must be a number")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{section}.{key} must be an integer")
        return value
    if want is list:
        if not isinstance(value, list) or not value or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        ):
            raise ConfigurationError(
                f"{section}.{key} must be a nonempty list of numbers")
        return [float(x) for x in value]
    raise AssertionError(want)


def load_config(
    path: str | None = None,
    seed: int | None = None,
    out_dir: str | None = None,
    threads: int | None = None,
) -> RunConfig:
    """Parse the TOML config, apply CLI overrides, validate everything."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}")

    values = {sk: default for sk, (_, default) in _SCHEMA.items()}
    for section, content in raw.items():
        if not isinstance(content, dict):
            raise ConfigurationError(f"top-level key '{section}' must be a table")
        for key, value in content.items():
            sk = (section, key)
            if sk not in _SCHEMA:
                raise ConfigurationError(f"unknown config key {section}.{key}")
            values[sk] = _coerce(section, key, value, _SCHEMA[sk][0])

    if seed is not None:
        values[("rng", "master_seed")] = seed
    if threads is not None and threads < 1:
        raise ConfigurationError("--threads must be >= 1")

    dists = ParameterDistributions(
        r1_nominal=values[("dist", "r1_nominal")],
        r1_halfwidth=values[("dist", "r1_halfwidth")],
        i0_nominal=values[("dist", "i0_nominal")],
        i0_halfwidth=values[("dist", "i0_halfwidth")],
        mu3_nominal=values[("dist", "mu3_nominal")],
        mu3_halfwidth=values[("dist", "mu3_halfwidth")],
    )
    frequency = values[("excitation", "frequency_hz")]
    if frequency <= 0.0:
        raise ConfigurationError("excitation.frequency_hz must be > 0")
    fixed = ModelParams(
        r0=values[("geometry", "r0")],
        r1=dists.r1_nominal,
        r2=values[("geometry", "r2")],
        mu3=dists.mu3_nominal,
        sigma=values[("material", "sigma")],
        omega=2.0 * math.pi * frequency,
        i0=dists.i0_nominal,
    )
    dists.check_compatible(fixed)

    cfg = RunConfig(
        fixed=fixed,
        dists=dists,
        master_seed=values[("rng", "master_seed")],
        levels=values[("experiment", "levels")],
        n_warm=values[("experiment", "n_warm")],
        eps_list=values[("experiment", "eps")],
        quad_order=values[("experiment", "quad_order")],
        l_start=values[("experiment", "l_start")],
        l_max=values[("experiment", "l_max")],
        n_min=values[("experiment", "n_min")],
        mc_sample_cap=values[("experiment", "mc_sample_cap")],
        out_dir=Path(out_dir) if out_dir is not None else Path("."),
        threads=threads if threads is not None else 1,
    )
    if cfg.levels < 1:
        raise ConfigurationError("experiment.levels must be >= 1")
    if cfg.n_warm < 2:
        raise ConfigurationError("experiment.n_warm must be >= 2 "
                                 "(variance needs at least two samples)")
    if not (1 <= cfg.l_start <= cfg.l_max):
        raise ConfigurationError("need 1 <= experiment.l_start <= l_max")
    if any(e <= 0.0 for e in cfg.eps_list):
        raise ConfigurationError("experiment.eps entries must be > 0")
    if cfg.quad_order < 4:
        raise ConfigurationError("experiment.quad_order must be >= 4")
    if cfg.n_min < 2:
        raise ConfigurationError("experiment.n_min must be >= 2")
    if cfg.mc_sample_cap < 2:
        raise ConfigurationError("experiment.mc_sample_cap must be >= 2")
    return cfg


# -- CSV helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, cfg: RunConfig, header: list[str],
               rows: list[list], footer: list[str] = ()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        for line in cfg.echo_lines():
            f.write(f"# {line}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
        for line in footer:
            f.write(f"# {line}\n")


# -- commands ------------------------------------------------------------


def cmd_screen(cfg: RunConfig) -> Path:
    """Variance screening over levels 0..levels-1 -> screening.csv."""
    engine = MlmcEngine(cfg.fixed, cfg.dists, cfg.master_seed,
                        threads=cfg.threads)
    stats = engine.screening(cfg.levels - 1, cfg.n_warm)
    rows = [
        [s.level, dof_count(LevelSpec.for_level(s.level)), s.mean_w, s.var_w,
         s.mean_diff, s.var_diff]
        for s in stats
    ]
    out = cfg.out_dir / "screening.csv"
    _write_csv(out, cfg, ["level", "n_dof", "mean_w", "var_w", "mean_diff",
                          "var_diff"], rows)
    return out


def cmd_run(cfg: RunConfig, eps: float) -> Path:
    """One adaptive MLMC run -> mlmc_run.csv (allocation + summary row)."""
    if eps <= 0.0:
        raise ConfigurationError("--eps must be > 0")
    engine = MlmcEngine(cfg.fixed, cfg.dists, cfg.master_seed,
                        threads=cfg.threads)
    res = engine.mlmc_estimate(eps, cfg.l_start, cfg.l_max, cfg.n_warm,
                               cfg.n_min)
    header = ["eps", "level", "n_samples", "y", "variance_budget",
              "bias_estimate", "total_cost", "bias_converged"]
    rows: list[list] = [
        [eps, s.level, s.n_used, "", "", "", "", ""] for s in res.levels
    ]
    rows.append([eps, "summary", "", res.y, res.variance_budget,
                 res.bias_estimate, res.total_cost, res.bias_converged])
    out = cfg.out_dir / "mlmc_run.csv"
    _write_csv(out, cfg, header, rows)
    return out


def cmd_compare(cfg: RunConfig, eps_list: list[float] | None = None) -> Path:
    """MC-vs-MLMC cost table -> cost_compare.csv."""
    eps_list = list(eps_list if eps_list is not None else cfg.eps_list)
    if not eps_list:
        raise ConfigurationError("compare needs a nonempty eps list")
    if any(e <= 0.0 for e in eps_list):
        raise ConfigurationError("eps values must be > 0")
    engine = MlmcEngine(cfg.fixed, cfg.dists, cfg.master_seed,
                        threads=cfg.threads)
    table = engine.cost_compare(eps_list, cfg.l_start, cfg.l_max, cfg.n_warm,
                                cfg.n_min, cfg.mc_sample_cap)
    rows = [
        [r.epsilon, r.cost_mc, r.cost_mlmc, r.y_mc, r.y_mlmc, r.mlmc_cheaper]
        for r in table
    ]
    cheaper = [r.epsilon for r in table if r.mlmc_cheaper]
    eps_star = max(cheaper) if cheaper else None
    footer = [f"crossover_eps = {repr(eps_star) if eps_star is not None else 'none'}"]
    out = cfg.out_dir / "cost_compare.csv"
    _write_csv(out, cfg, ["eps", "cost_mc", "cost_mlmc", "y_mc", "y_mlmc",
                          "mlmc_cheaper"], rows, footer)
    return out


def cmd_oracle(cfg: RunConfig, quad_order: int | None = None) -> Path:
    """Quadrature-convergence table of the reference mean -> oracle.csv."""
    q_max = quad_order if quad_order is not None else cfg.quad_order
    if q_max < 4:
        raise ConfigurationError("--quad-order must be >= 4")
    rows = []
    for q in range(4, q_max + 1, 2):
        rows.append([q, reference_mean(cfg.fixed, cfg.dists, quad_order=q)])
    if rows[-1][0] != q_max:
        rows.append([q_max, reference_mean(cfg.fixed, cfg.dists,
                                           quad_order=q_max)])
    out = cfg.out_dir / "oracle.csv"
    _write_csv(out, cfg, ["quad_order", "e_w_ref"], rows)
    return out


def cmd_qoi(cfg: RunConfig, level: int) -> Path:
    """Single nominal solve at one level (debug) -> qoi.csv."""
    if level < 0:
        raise ConfigurationError("--level must be >= 0")
    sample = ParamSample(
        r1=cfg.dists.r1_nominal,
        i0=cfg.dists.i0_nominal,
        mu3=cfg.dists.mu3_nominal,
        sample_index=0,
        master_seed=cfg.master_seed,
    )
    out = cfg.out_dir / "qoi.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as f:
        for line in cfg.echo_lines():
            f.write(f"# {line}\n")
        f.write("sample_index,level,n_dof,residual,energy\n")
    nominal = nominal_params(cfg.dists, cfg.fixed)
    w = evaluate_qoi(sample, level, nominal, log_path=str(out))
    print(f"level {level}: W = {w!r} J/m")
    return out


def _parse_eps_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid eps list: {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eddymlmc",
        description="MLMC estimation of the mean magnetic energy of a "
                    "conducting wire in a steel tube with random parameters",
    )
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, help="override rng.master_seed")
    p.add_argument("--out", help="output directory (default: cwd)")
    p.add_argument("--threads", type=int, help="worker processes (default: 1)")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("screen", help="write the variance screening table")
    run = sub.add_parser("run", help="one adaptive MLMC run")
    run.add_argument("--eps", type=float, required=True,
                     help="relative tolerance")
    comp = sub.add_parser("compare", help="MC-vs-MLMC cost comparison")
    comp.add_argument("--eps", help="comma-separated relative tolerances "
                                    "(default: config list)")
    orc = sub.add_parser("oracle", help="quadrature reference for E[W]")
    orc.add_argument("--quad-order", type=int, dest="quad_order",
                     help="maximum tensor Gauss-Legendre order")
    qoi = sub.add_parser("qoi", help="single nominal solve (debug)")
    qoi.add_argument("--level", type=int, required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.threads)
        if args.command == "screen":
            out = cmd_screen(cfg)
        elif args.command == "run":
            out = cmd_run(cfg, args.eps)
        elif args.command == "compare":
            eps = _parse_eps_list(args.eps) if args.eps else None
            out = cmd_compare(cfg, eps)
        elif args.command == "oracle":
            out = cmd_oracle(cfg, args.quad_order)
        elif args.command == "qoi":
            out = cmd_qoi(cfg, args.level)
        else:  # pragma: no cover - argparse enforces the choices
            raise AssertionError(args.command)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (MeshError, AssemblyError, SolverError, OracleError,
            MlmcError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
