"""Batch front end.

Usage::

    parabolic-recon {validate-field,evolve,reconstruct,sweep,fit-rate} --config run.ini [options]

Exit codes: 0 success, 1 solver non-convergence, 2 configuration error,
3 a bound or invariant check failed.
"""

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .evolve import EvolutionFamily, TimeMesh, estimate_M, write_trajectory_csv
from .experiment import (
    DEFAULT_DELTAS,
    DEFAULT_SEEDS,
    ManufacturedCase,
    NoiseSpec,
    add_noise,
    error_metrics,
    initial_state,
    manufacture,
    read_sweep_csv,
    summarize,
    sweep,
    write_sweep_csv,
)
from .field import builtin, validate
from .grid import PeriodicGrid, h1_norm, l2_norm, load_state, save_state
from .linalg import ConvergenceError
from .reconstruct import ReconstructionProblem, error_bounds, qbv_reconstruct, solve

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_CONFIG, EXIT_ASSERTION = 0, 1, 2, 3
QBV_RTOL = 1e-8


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    field_family: str
    field_params: Dict[str, float]
    dim: int = 1
    n: int = 128
    side: float = 2.0 * math.pi
    horizon: float = 0.1
    steps: int = 128
    scheme: str = "backward_euler"
    inner_solver: str = "cg"
    inner_tol: float = 1e-14
    delta: float = 1e-3
    u0: str = "tent"
    u0_params: Dict[str, float] = field(default_factory=dict)
    E: Optional[float] = None
    seed: int = 0
    measurement: Optional[str] = None
    deltas: Tuple[float, ...] = DEFAULT_DELTAS
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    t_star: Optional[float] = None
    out_dir: str = "out"
    fit_input: Optional[str] = None

    def resolved(self):
        out = asdict(self)
        out["deltas"] = list(self.deltas)
        out["seeds"] = list(self.seeds)
        out["t_star"] = self.t_star if self.t_star is not None else 0.25 * self.horizon
        return out


_SECTIONS = {
    "field": None,  # free-form family parameters
    "grid": {"dim", "n", "side"},
    "mesh": {"horizon", "t", "steps", "k", "scheme", "inner_solver", "inner_tol"},
    "problem": {"delta", "u0", "e", "seed", "measurement"},
    "sweep": {"deltas", "seeds", "t_star"},
    "output": {"dir"},
    "fit": {"input"},
}


def _number(section, key, raw, kind=float):
    text = raw.strip()
    try:
        if kind is float and text.endswith("pi"):
            coef = text[:-2].rstrip("*").strip()
            return (float(coef) if coef else 1.0) * math.pi
        return kind(text)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}") from None


def _list(section, key, raw, kind=float):
    return tuple(_number(section, key, item, kind) for item in raw.replace(";", ",").split(",") if item.strip())


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTIONS[section]
        for key in parser[section]:
            if allowed is not None and key not in allowed and not (section == "problem" and key.startswith("u0_")):
                raise ConfigError(f"{section}.{key}: unknown key")
    if not parser.has_section("field") or "family" not in parser["field"]:
        raise ConfigError("field.family: required key missing")

    f = parser["field"]
    params = {k: _number("field", k, v) for k, v in f.items() if k != "family"}
    cfg = RunConfig(field_family=f["family"].strip(), field_params=params)
    if parser.has_section("grid"):
        s = parser["grid"]
        if "dim" in s:
            cfg.dim = _number("grid", "dim", s["dim"], int)
        if "n" in s:
            cfg.n = _number("grid", "n", s["n"], int)
        if "side" in s:
            cfg.side = _number("grid", "side", s["side"])
    if parser.has_section("mesh"):
        s = parser["mesh"]
        for key in ("horizon", "t"):
            if key in s:
                cfg.horizon = _number("mesh", key, s[key])
        for key in ("steps", "k"):
            if key in s:
                cfg.steps = _number("mesh", key, s[key], int)
        if "scheme" in s:
            cfg.scheme = s["scheme"].strip()
        if "inner_solver" in s:
            cfg.inner_solver = s["inner_solver"].strip()
        if "inner_tol" in s:
            cfg.inner_tol = _number("mesh", "inner_tol", s["inner_tol"])
    if parser.has_section("problem"):
        s = parser["problem"]
        if "delta" in s:
            cfg.delta = _number("problem", "delta", s["delta"])
        if "u0" in s:
            cfg.u0 = s["u0"].strip()
        if "e" in s:
            cfg.E = _number("problem", "E", s["e"])
        if "seed" in s:
            cfg.seed = _number("problem", "seed", s["seed"], int)
        if "measurement" in s:
            cfg.measurement = s["measurement"].strip()
        cfg.u0_params = {k[3:]: _number("problem", k, v) for k, v in s.items() if k.startswith("u0_")}
    if parser.has_section("sweep"):
        s = parser["sweep"]
        if "deltas" in s:
            cfg.deltas = _list("sweep", "deltas", s["deltas"])
        if "seeds" in s:
            cfg.seeds = _list("sweep", "seeds", s["seeds"], int)
        if "t_star" in s:
            cfg.t_star = _number("sweep", "t_star", s["t_star"])
    if parser.has_section("output") and "dir" in parser["output"]:
        cfg.out_dir = parser["output"]["dir"].strip()
    if parser.has_section("fit") and "input" in parser["fit"]:
        cfg.fit_input = parser["fit"]["input"].strip()
    return cfg


def _build(cfg):
    """Grid, field and evolution family; parameter errors become ConfigError."""
    try:
        grid = PeriodicGrid(cfg.dim, cfg.n, cfg.side)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    try:
        fld = builtin(cfg.field_family, dim=cfg.dim, horizon=cfg.horizon, side=cfg.side, **cfg.field_params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"field: {exc}") from None
    try:
        family = EvolutionFamily(
            fld, grid, TimeMesh(0.0, cfg.horizon, cfg.steps),
            scheme=cfg.scheme, inner_solver=cfg.inner_solver, inner_tol=cfg.inner_tol,
        )
    except ValueError as exc:
        raise ConfigError(f"mesh: {exc}") from None
    return grid, fld, family


def _initial(cfg, grid):
    try:
        return initial_state(cfg.u0, grid, seed=cfg.seed, **cfg.u0_params)
    except ValueError as exc:
        raise ConfigError(f"problem.u0: {exc}") from None


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _report(cfg, **body):
    return {"artifact_version": __version__, "config": cfg.resolved(), **body}


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate_field(cfg, args):
    _, fld, _ = _build(cfg)
    report = validate(fld)
    _write_json(os.path.join(cfg.out_dir, "field_validation.json"), _report(
        cfg, kappa=fld.kappa, declared_A_LL=fld.declared_A_LL, declared_A=fld.declared_A,
        validation=report.to_dict(),
    ))
    return EXIT_OK if report.ok else EXIT_ASSERTION


def cmd_evolve(cfg, args):
    grid, _, family = _build(cfg)
    traj = family.record(_initial(cfg, grid))
    write_trajectory_csv(os.path.join(cfg.out_dir, "trajectory.csv"), traj, grid)
    write_trajectory_csv(os.path.join(cfg.out_dir, "trajectory_norms.csv"), traj, grid, norms=True)
    M_hat = estimate_M(family, iterations=50)
    ok = family.scheme != "backward_euler" or M_hat <= 1.0 + 1e-10
    _write_json(os.path.join(cfg.out_dir, "evolve.json"), _report(
        cfg, M_hat=M_hat, contraction_ok=ok,
        final_l2_norm=l2_norm(grid, traj.final), final_h1_norm=h1_norm(grid, traj.final),
    ))
    return EXIT_OK if ok else EXIT_ASSERTION


def cmd_reconstruct(cfg, args):
    grid, fld, family = _build(cfg)
    truth = None
    if cfg.measurement:
        try:
            g_grid, g = load_state(cfg.measurement)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"problem.measurement: {exc}") from None
        if g_grid != grid:
            raise ConfigError("problem.measurement: grid does not match [grid]")
        if cfg.E is None:
            raise ConfigError("problem.E: required when a measurement file is given")
        E = cfg.E
    else:
        case = ManufacturedCase(family, _initial(cfg, grid))
        truth, E_true = manufacture(case)
        E = cfg.E if cfg.E is not None else E_true
        g = add_noise(grid, truth.final, NoiseSpec(cfg.seed, cfg.delta))
    try:
        problem = ReconstructionProblem(family, g, cfg.delta, E)
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
    result = solve(problem)

    ok = True
    body = {"diagnostics": result.diagnostics(), "kappa": fld.kappa, "E": E, "delta": cfg.delta}
    if truth is not None:
        bounds = error_bounds(problem, result, truth)
        sup_err, tail_err, _ = error_metrics(grid, result.trajectory, truth, cfg.resolved()["t_star"])
        body["bounds"] = bounds
        body["sup_error"] = sup_err
        body["tail_error"] = tail_err
        ok = bounds["h1_bound_ok"] and bounds["l2T_bound_ok"]
    if args.check_qbv:
        qbv = qbv_reconstruct(problem)
        gap = l2_norm(grid, qbv.u0 - result.u0) / max(l2_norm(grid, result.u0), 1e-300)
        body["qbv"] = {"diagnostics": qbv.diagnostics(), "relative_gap": gap, "ok": gap <= QBV_RTOL}
        ok = ok and gap <= QBV_RTOL
    body["ok"] = ok

    save_state(os.path.join(cfg.out_dir, "u0.csv"), grid, result.u0)
    save_state(os.path.join(cfg.out_dir, "u0.bin"), grid, result.u0)
    save_state(os.path.join(cfg.out_dir, "measurement.csv"), grid, g)
    write_trajectory_csv(os.path.join(cfg.out_dir, "reconstruction_norms.csv"), result.trajectory, grid, norms=True)
    _write_json(os.path.join(cfg.out_dir, "reconstruction.json"), _report(cfg, **body))
    return EXIT_OK if ok else EXIT_ASSERTION


def _fit_payload(cfg, rows, t_star):
    report = summarize(rows, t_star)
    return report, _report(cfg, fit=report.to_dict())


def cmd_sweep(cfg, args):
    grid, _, family = _build(cfg)
    if any(not 0 < d < 1 for d in cfg.deltas):
        raise ConfigError("sweep.deltas: every delta must lie in (0, 1)")
    case = ManufacturedCase(family, _initial(cfg, grid))
    if case.E <= 0:
        raise ConfigError("problem.u0: ground truth must be nonzero")
    t_star = cfg.resolved()["t_star"]
    rows = sweep(case, cfg.deltas, cfg.seeds, t_star=t_star, jobs=args.jobs)
    write_sweep_csv(os.path.join(cfg.out_dir, "sweep.csv"), rows)
    report, payload = _fit_payload(cfg, rows, t_star)
    ok = all(r["h1_bound_lhs"] <= r["h1_bound_rhs"] and r["l2T_bound_lhs"] <= r["l2T_bound_rhs"] for r in rows)
    payload["bounds_ok"] = ok
    _write_json(os.path.join(cfg.out_dir, "fit.json"), payload)
    return EXIT_OK if ok else EXIT_ASSERTION


def cmd_fit_rate(cfg, args):
    path = args.input or cfg.fit_input or os.path.join(cfg.out_dir, "sweep.csv")
    try:
        rows = read_sweep_csv(path)
        _, payload = _fit_payload(cfg, rows, cfg.resolved()["t_star"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"fit.input: {exc}") from None
    payload["input"] = os.path.basename(path)
    _write_json(os.path.join(cfg.out_dir, "fit.json"), payload)
    return EXIT_OK


COMMANDS = {
    "validate-field": cmd_validate_field,
    "evolve": cmd_evolve,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "fit-rate": cmd_fit_rate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="parabolic-recon", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="sectioned key-value config file")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep jobs")
    p.add_argument("--check-qbv", action="store_true", help="also run the quasi-boundary value route")
    p.add_argument("--scheme", choices=("be", "cn"), help="override [mesh] scheme")
    p.add_argument("--seed", type=int, help="override [problem] seed")
    p.add_argument("--input", help="sweep CSV for fit-rate")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        if args.scheme:
            cfg.scheme = args.scheme
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        try:
            os.makedirs(cfg.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output.dir: {exc}") from None
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
