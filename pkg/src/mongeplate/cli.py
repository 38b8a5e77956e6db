"""Batch front end.

Usage::

    mongeplate config.json [--grid N] [--k-const K] [--out DIR] [--command CMD]
    mongeplate --command solve --grid 33 --k-const 1 --out out/

Exit codes: 0 success, 1 non-convergence or failed check, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConfigError, GridError, MongePlateError, ParseError, ValidationError
from .functional import ConstraintData, constraint_jacobian_transpose_apply, energy_gradient
from .grid import MIN_NODES, GridDomain, ScalarField, integrate
from .solver import SolveReport, SolverConfig, minimize
from .verify import (
    compare_to_analytic,
    convergence_study,
    el_residual,
    identity_suite,
    rows_to_csv,
    rows_to_json,
)

log = logging.getLogger("mongeplate")

COMMANDS = ("solve", "verify", "converge", "identities")
SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}


@dataclass
class RunConfig:
    command: str
    grid: int = 33
    extent: tuple[float, float] = (1.0, 1.0)
    k: dict = field(default_factory=lambda: {"constant": 1.0})
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str = "out"
    seed: int = 0
    grids: tuple[int, ...] = (17, 33, 65)
    min_order: float = 1.8

    def domain(self, n: int | None = None) -> GridDomain:
        n = self.grid if n is None else n
        return GridDomain(self.extent[0], self.extent[1], n, n)

    def constraint_data(self, n: int | None = None) -> ConstraintData:
        dom = self.domain(n)
        if "constant" in self.k:
            return ConstraintData.constant_k(dom, self.k["constant"])
        return ConstraintData.polynomial(dom, self.k["poly"])

    def echo(self) -> dict:
        return {
            "command": self.command,
            "grid": self.grid,
            "extent": list(self.extent),
            "k": self.k,
            "solver": dataclasses.asdict(self.solver),
            "out": self.out,
            "seed": self.seed,
            "grids": list(self.grids),
            "min_order": self.min_order,
        }


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _parse_k(spec: Any) -> dict:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValidationError("k", 'expected {"constant": number} or {"poly": [[i, j, coeff], ...]}')
    if "constant" in spec:
        if not _is_number(spec["constant"]):
            raise ValidationError("k.constant", "must be a finite number")
        return {"constant": float(spec["constant"])}
    if "poly" in spec:
        terms = spec["poly"]
        if not isinstance(terms, list) or not terms:
            raise ValidationError("k.poly", "must be a non-empty list of [i, j, coeff]")
        out = []
        for t in terms:
            if not (isinstance(t, list) and len(t) == 3 and _is_int(t[0]) and _is_int(t[1]) and t[0] >= 0 and t[1] >= 0 and _is_number(t[2])):
                raise ValidationError("k.poly", f"bad term {t!r}; expected [i, j, coeff] with non-negative integer powers")
            out.append([t[0], t[1], float(t[2])])
        return {"poly": out}
    raise ValidationError("k", f"unknown k specification {sorted(spec)}")


def _parse_solver(spec: Any) -> SolverConfig:
    if not isinstance(spec, dict):
        raise ValidationError("solver", "must be an object")
    unknown = sorted(set(spec) - set(SOLVER_FIELDS))
    if unknown:
        raise ValidationError(f"solver.{unknown[0]}", "unknown option")
    try:
        return SolverConfig(**spec)
    except ValueError as exc:
        name = str(exc).split()[0]
        raise ValidationError(f"solver.{name}", str(exc)) from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ParseError("top level must be a JSON object")
    known = {"command", "grid", "extent", "k", "solver", "out", "seed", "grids", "min_order"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(unknown[0], "unknown field")
    if "command" not in raw:
        raise ValidationError("command", "required")
    if raw["command"] not in COMMANDS:
        raise ValidationError("command", f"must be one of {', '.join(COMMANDS)}")
    cfg = RunConfig(command=raw["command"])

    if "grid" in raw:
        if not _is_int(raw["grid"]):
            raise ValidationError("grid", "must be an integer")
        if raw["grid"] < MIN_NODES:
            raise ValidationError("grid", f"minimum {MIN_NODES}")
        cfg.grid = raw["grid"]
    if "grids" in raw:
        grids = raw["grids"]
        if not (isinstance(grids, list) and grids and all(_is_int(n) for n in grids)):
            raise ValidationError("grids", "must be a non-empty list of integers")
        if min(grids) < MIN_NODES:
            raise ValidationError("grids", f"minimum {MIN_NODES}")
        if any(b <= a for a, b in zip(grids, grids[1:])):
            raise ValidationError("grids", "must be strictly increasing")
        cfg.grids = tuple(grids)
    if "extent" in raw:
        ext = raw["extent"]
        if not (isinstance(ext, list) and len(ext) == 2 and all(_is_number(e) and e > 0 for e in ext)):
            raise ValidationError("extent", "must be [Lx, Ly] with positive finite entries")
        cfg.extent = (float(ext[0]), float(ext[1]))
    if "k" in raw:
        cfg.k = _parse_k(raw["k"])
    elif cfg.command != "identities":
        raise ValidationError("k", "required")
    if "solver" in raw:
        cfg.solver = _parse_solver(raw["solver"])
    if "out" in raw:
        if not isinstance(raw["out"], str) or not raw["out"]:
            raise ValidationError("out", "must be a non-empty path string")
        cfg.out = raw["out"]
    if "seed" in raw:
        if not _is_int(raw["seed"]):
            raise ValidationError("seed", "must be an integer")
        cfg.seed = raw["seed"]
    if "min_order" in raw:
        if not _is_number(raw["min_order"]):
            raise ValidationError("min_order", "must be a finite number")
        cfg.min_order = float(raw["min_order"])

    if cfg.command in ("solve", "verify"):
        try:
            cfg.constraint_data()
        except GridError as exc:
            raise ValidationError("k", f"does not evaluate to a finite nodal field ({exc})") from exc
    if cfg.command == "converge" and "constant" not in cfg.k:
        raise ValidationError("k", "converge needs a constant k")
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return config_from_dict(raw)


# -- output -----------------------------------------------------------------


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _envelope(cfg: RunConfig) -> dict:
    return {"artifact": "mongeplate", "version": __version__, "config": cfg.echo()}


def _solve(cfg: RunConfig, out: Path) -> tuple[SolveReport | None, ConstraintData, dict]:
    data = cfg.constraint_data()
    payload = _envelope(cfg)
    try:
        rep = minimize(None, data, cfg.solver)
    except MongePlateError as exc:
        rep = getattr(exc, "report", None)
        payload["error"] = f"{type(exc).__name__}: {exc}"
        log.error("solve failed: %s", payload["error"])
    if rep is None:
        payload.update({"converged": False, "energy": None, "constraint_inf": None, "stationarity_norm": None, "outer_iterations": 0, "newton_iterations_total": 0})
    else:
        payload.update(rep.summary())
        payload["iterations"] = rep.outer_iterations
        rep.v.to_csv(out / "v.csv")
        rep.lam.to_csv(out / "lambda.csv", interior_only=True)
    return rep, data, payload


def _verify_checks(cfg: RunConfig, rep: SolveReport, data: ConstraintData) -> list[dict]:
    dom = data.domain
    tol = cfg.solver
    checks = []

    def add(name, value, limit):
        checks.append({"name": name, "value": value, "tol": limit, "passed": bool(value <= limit)})

    add("constraint_inf", rep.constraint_inf, tol.tol_constraint)
    add("stationarity_norm", rep.stationarity_norm, tol.tol_stationarity)
    bound = 2.0 * integrate(data.k) - 2.0 * tol.tol_constraint * dom.interior_area
    add("energy lower bound deficit", max(bound - e.energy for e in rep.history), 0.0)
    # weak Euler-Lagrange equation against random test fields
    residual = energy_gradient(rep.v) * 0.5 - constraint_jacobian_transpose_apply(rep.v, rep.lam)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(8):
        h = ScalarField(dom, rng.standard_normal(dom.shape))
        worst = max(worst, abs(residual.dot(h)) / h.norm())
    add("weak EL residual per |h|", worst, tol.tol_stationarity * dom.area)
    strong = el_residual(rep.v, rep.lam).max_abs()
    checks.append({"name": "strong EL residual (reported)", "value": strong, "tol": None, "passed": True})
    if data.is_constant and data.constant > 0:
        field_err, energy_err = compare_to_analytic(rep.v, data)
        add("field error vs closed form", field_err, 1e-6)
        add("relative energy error vs closed form", energy_err / (2.0 * data.constant * dom.interior_area), 1e-6)
    return checks


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"config error: out: not writable ({exc})", file=sys.stderr)
        return 2

    if cfg.command == "identities":
        summary = identity_suite(cfg.seed)
        _dump_json(out / "identities.json", {**_envelope(cfg), **summary.to_dict()})
        return 0 if summary.passed else 1

    if cfg.command == "converge":
        rows = convergence_study(cfg.constraint_data(cfg.grids[0]), cfg.grids, cfg.solver, extent=cfg.extent)
        (out / "convergence.csv").write_text(rows_to_csv(rows))
        (out / "convergence.json").write_text(rows_to_json(rows) + "\n")
        ok = all(r.converged for r in rows)
        if len(rows) > 1:
            ok = ok and rows[-1].observed_order is not None and rows[-1].observed_order >= cfg.min_order
        return 0 if ok else 1

    rep, data, payload = _solve(cfg, out)
    ok = rep is not None and rep.converged
    if cfg.command == "verify" and rep is not None:
        checks = _verify_checks(cfg, rep, data)
        payload["checks"] = checks
        ok = ok and all(c["passed"] for c in checks)
    _dump_json(out / "report.json", payload)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mongeplate", description=__doc__.split("\n\n")[0])
    p.add_argument("config", nargs="?", help="JSON run configuration ('-' for stdin)")
    p.add_argument("--command", choices=COMMANDS, help="override the configured command")
    p.add_argument("--grid", type=int, help="override the grid size")
    p.add_argument("--k-const", type=float, help="use constant k")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            raw = {}
        else:
            text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=exc.lineno) from exc
            if not isinstance(raw, dict):
                raise ParseError("top level must be a JSON object")
        if args.command is not None:
            raw["command"] = args.command
        if args.grid is not None:
            raw["grid"] = args.grid
        if args.k_const is not None:
            raw["k"] = {"constant": args.k_const}
        if args.out is not None:
            raw["out"] = args.out
        cfg = config_from_dict(raw)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
