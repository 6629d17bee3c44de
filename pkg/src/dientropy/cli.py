"""Configuration-driven batch runner.

``dientropy --config run.yaml`` evaluates one bound per sweep point and writes
a CSV with columns ``parameter,bound,status,matrix_size,wall_time`` in
parameter order.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 infeasible statistics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .data import DataError, is_nonsignalling, load_distribution, project_nonsignalling
from .grid import GridSpec
from .npo import bell_maximization
from .oracle import MeasurementAngleSet, honest_statistics
from .relax import export_sdpa, max_bell, moment_matrix, to_sdp
from .scenario import BellFunctional, Scenario, distribution_constraints, get_functional
from .solver import BoundConfig, BoundResult, SolveOptions, SolverError, build_problems, entropy_bound

log = logging.getLogger("dientropy")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
COLUMNS = ("parameter", "bound", "status", "matrix_size", "wall_time")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SweepSource(_Strict):
    kind: Literal["sweep"] = "sweep"
    functional: str = "chsh"
    lo: float = 2.0
    hi: float = 2.0 * math.sqrt(2.0)
    steps: int = Field(13, ge=1)


class FileSource(_Strict):
    kind: Literal["distribution"]
    path: str
    format: Optional[Literal["csv", "json", "json-table"]] = None
    rows: Union[Literal["full", "chsh"], List[Tuple[int, int]]] = "full"
    project: bool = True


class HonestSource(_Strict):
    kind: Literal["honest"]
    state: Literal["werner", "dephased"] = "werner"
    alice_angles: List[float] = [0.0, math.pi / 2]
    bob_angles: List[float] = [math.pi / 4, -math.pi / 4]
    lo: float = 1.0
    hi: float = 0.8
    steps: int = Field(3, ge=1)
    rows: Union[Literal["full", "chsh"], List[Tuple[int, int]]] = "full"


class GridConfig(_Strict):
    nodes: int = Field(8, ge=1)
    lam: float = 1.0
    t_min: Optional[float] = None
    spacing: Literal["uniform", "logarithmic", "custom"] = "uniform"
    custom: Optional[List[float]] = None


class SolverConfig(_Strict):
    tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(150, ge=1)
    backend: Literal["ipm", "clarabel"] = "ipm"


class RunConfig(_Strict):
    scenario: str = "2222"
    task: Literal["one_sided_vn", "two_sided_vn", "min_entropy", "max_bell"] = "one_sided_vn"
    constraints: Union[SweepSource, FileSource, HonestSource] = Field(default_factory=SweepSource, discriminator="kind")
    grid: GridConfig = Field(default_factory=GridConfig)
    level: int = Field(2, ge=1)
    extras: List[str] = ["MNP"]
    mode: Literal["joint", "per_node"] = "per_node"
    key_input: int = Field(0, ge=0)
    key_input_bob: int = Field(0, ge=0)
    real: bool = True
    output: Optional[str] = None
    workers: int = Field(1, ge=1)
    solver: SolverConfig = Field(default_factory=SolverConfig)


def _algebraic_range(f: BellFunctional) -> Tuple[float, float]:
    lo = hi = f.offset
    s = f.scenario
    for x in range(s.alice_inputs):
        for y in range(s.bob_inputs):
            block = f.coefficients[: s.alice_outcomes[x], : s.bob_outcomes[y], x, y]
            lo += float(block.min())
            hi += float(block.max())
    return lo, hi


def semantic_errors(cfg: RunConfig) -> List[str]:
    """Checks beyond the schema; every problem is reported."""
    errors = []
    try:
        scenario = Scenario.from_name(cfg.scenario)
    except (ValueError, TypeError) as exc:
        return [f"scenario: {exc}"]
    if cfg.key_input >= scenario.alice_inputs:
        errors.append(f"key_input: {cfg.key_input} out of range for {scenario.alice_inputs} Alice inputs")
    if cfg.task == "two_sided_vn" and cfg.key_input_bob >= scenario.bob_inputs:
        errors.append(f"key_input_bob: {cfg.key_input_bob} out of range for {scenario.bob_inputs} Bob inputs")
    src = cfg.constraints
    if isinstance(src, SweepSource):
        try:
            f = get_functional(src.functional)
        except (KeyError, ValueError) as exc:
            errors.append(f"constraints.functional: {exc}")
        else:
            if f.scenario != scenario:
                errors.append(f"constraints.functional: {src.functional} needs scenario {f.scenario.name}, not {cfg.scenario}")
            lo, hi = _algebraic_range(f)
            for name, v in (("lo", src.lo), ("hi", src.hi)):
                if not lo - 1e-9 <= v <= hi + 1e-9:
                    errors.append(f"constraints.{name}: {v} outside the algebraic range [{lo}, {hi}] of {src.functional}")
    elif isinstance(src, FileSource):
        if cfg.task == "max_bell":
            errors.append("constraints: max_bell takes a functional sweep source")
        if not os.path.exists(src.path):
            errors.append(f"constraints.path: {src.path} does not exist")
    else:
        if cfg.task == "max_bell":
            errors.append("constraints: max_bell takes a functional sweep source")
        if scenario.name != "2222":
            errors.append("constraints: honest models are qubit models for scenario 2222")
        if len(src.alice_angles) != scenario.alice_inputs or len(src.bob_angles) != scenario.bob_inputs:
            errors.append("constraints: one measurement angle per input is required")
        for name, v in (("lo", src.lo), ("hi", src.hi)):
            if not 0.0 <= v <= 1.0:
                errors.append(f"constraints.{name}: noise parameter {v} outside [0, 1]")
    g = cfg.grid
    if g.spacing == "custom" and not g.custom:
        errors.append("grid.custom: a node list is required for custom spacing")
    if g.lam != 1.0 and cfg.task in ("one_sided_vn", "two_sided_vn"):
        errors.append("grid.lam: classical-quantum states need lam = 1")
    return errors


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        data = yaml.safe_load(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError("configuration must be a mapping")
    return data


# ---------------------------------------------------------------------------
# sweep points


def _points(cfg: RunConfig) -> List[Tuple[float, List[BellFunctional]]]:
    """Sweep parameter and constraint rows per point."""
    src = cfg.constraints
    scenario = Scenario.from_name(cfg.scenario)
    if isinstance(src, SweepSource):
        f = get_functional(src.functional)
        values = np.linspace(src.lo, src.hi, src.steps)
        return [(float(v), [f.with_bound(float(v), ">=")]) for v in values]
    if isinstance(src, FileSource):
        d = load_distribution(src.path, src.format)
        if d.scenario != scenario:
            raise DataError(f"{src.path}: file describes scenario {d.scenario.name}, config says {cfg.scenario}")
        ok, violation = is_nonsignalling(d)
        if not ok:
            if not src.project:
                log.warning("data signal by %.3g and projection is disabled", violation)
            else:
                d = project_nonsignalling(d)
                log.info(
                    "projected onto the non-signalling set: perturbation l1 = %.6g (max marginal deviation %.3g)",
                    d.meta["perturbation_l1"],
                    violation,
                )
        rows = src.rows if isinstance(src.rows, str) else [tuple(r) for r in src.rows]
        return [(0.0, distribution_constraints(d, rows))]
    angles = MeasurementAngleSet(src.alice_angles, src.bob_angles)
    out = []
    for v in np.linspace(src.lo, src.hi, src.steps):
        d = honest_statistics((src.state, float(v)), angles)
        rows = src.rows if isinstance(src.rows, str) else [tuple(r) for r in src.rows]
        out.append((float(v), distribution_constraints(d, rows)))
    return out


def _bound_config(cfg: RunConfig, rows: Sequence[BellFunctional], workers: int) -> BoundConfig:
    g = cfg.grid
    return BoundConfig(
        scenario=Scenario.from_name(cfg.scenario),
        constraints=rows,
        task=cfg.task,
        grid=GridSpec(g.nodes, g.lam, g.t_min, g.spacing, g.custom),
        level=cfg.level,
        extras=tuple(cfg.extras),
        mode=cfg.mode,
        key_input=cfg.key_input,
        key_input_bob=cfg.key_input_bob,
        workers=workers,
        real=cfg.real,
        options=SolveOptions(cfg.solver.tolerance, cfg.solver.max_iterations, backend=cfg.solver.backend),
    )


def _max_bell_row(cfg: RunConfig) -> BoundResult:
    src = cfg.constraints
    f = get_functional(src.functional)
    start = time.perf_counter()
    mp = moment_matrix(bell_maximization(f), cfg.level, cfg.extras, cfg.real)
    opts = SolveOptions(cfg.solver.tolerance, cfg.solver.max_iterations, backend=cfg.solver.backend)
    try:
        value = max_bell(f.scenario, f, cfg.level, cfg.extras, opts)
        status = "optimal"
    except SolverError as exc:
        log.error("%s", exc)
        value, status = None, "solver_error"
    return BoundResult(value, status, mp.size, time.perf_counter() - start)


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.12g}"


def run(cfg: RunConfig, export_dir: Optional[str] = None, out=None) -> int:
    """Execute ``cfg``; returns the process exit code."""
    if cfg.task == "max_bell":
        points = [(float(cfg.level), [])]
    else:
        points = _points(cfg)

    if export_dir is not None:
        os.makedirs(export_dir, exist_ok=True)
        for i, (param, rows) in enumerate(points):
            bc = _bound_config(cfg, rows, 1)
            if cfg.task == "max_bell":
                problems = [bell_maximization(get_functional(cfg.constraints.functional))]
            else:
                problems = build_problems(bc)
            for k, p in enumerate(problems):
                inst = to_sdp(moment_matrix(p, bc.level, bc.extras, bc.real))
                name = f"point{i:03d}" + (f"_node{k:02d}" if len(problems) > 1 else "") + ".dat-s"
                export_sdpa(inst, os.path.join(export_dir, name))
        log.info("wrote SDPA files for %d points to %s", len(points), export_dir)
        return EXIT_OK

    def one(item):
        param, rows = item
        if cfg.task == "max_bell":
            return _max_bell_row(cfg)
        inner = cfg.workers if len(points) == 1 else 1
        return entropy_bound(_bound_config(cfg, rows, inner))

    if len(points) > 1 and cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for (param, _), r in zip(points, results):
        writer.writerow([_fmt(param), _fmt(r.value), r.status, r.matrix_size, f"{r.wall_time:.3f}"])
    text = buf.getvalue()
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        (out or sys.stdout).write(text)

    statuses = {r.status for r in results}
    if "solver_error" in statuses:
        return EXIT_SOLVER
    if "infeasible" in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dientropy", description=__doc__.splitlines()[0])
    p.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--export-sdpa", metavar="DIR", help="write SDPA files instead of solving")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--level", type=int, metavar="N")
    p.add_argument("--nodes", type=int, metavar="R")
    p.add_argument("--mode", choices=("joint", "per_node"))
    p.add_argument("--output", metavar="PATH", help="CSV destination (default stdout)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        data = load_config(args.config)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key in ("workers", "level", "mode", "output"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.nodes is not None:
        data.setdefault("grid", {})
        if isinstance(data["grid"], dict):
            data["grid"]["nodes"] = args.nodes
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            print(f"config error: {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    errors = semantic_errors(cfg)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False))
        return EXIT_OK
    try:
        return run(cfg, args.export_sdpa)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
