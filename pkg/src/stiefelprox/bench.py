"""Benchmark harness: seed sweeps over problem/solver grids, CSV summaries.

Every run regenerates its instance and initial point from (kind, n, r, mu,
seed) so sweeps are reproducible bit for bit; only the cpu_s column varies
between repetitions. Runs are independent and execute on a process pool whose
size is capped by the BENCH_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .problems import make_problem, sparsity
from .solver import Mode, SolverConfig, solve, write_trace_csv
from .stiefel import RetractionKind, random_point

MODE_BY_NAME = {"arpqn": Mode.MONOTONE, "nls": Mode.NONMONOTONE, "pg": Mode.PROX_GRAD}
RETRACTION_BY_NAME = {"svd": RetractionKind.SVD, "qr": RetractionKind.QR, "cayley": RetractionKind.CAYLEY}

SUMMARY_CSV_HEADER = "label,iter,F,sparsity,cpu_s,linesearch,ssn_iters,failures"

# SolverConfig fields that --config key=val may override
_CONFIG_FIELD_TYPES = {
    f.name: f.type
    for f in dataclasses.fields(SolverConfig)
    if f.name not in ("retraction", "mode")
}


@dataclass(frozen=True)
class ExperimentSpec:
    problem: str
    n_values: tuple
    r_values: tuple
    mu_values: tuple
    modes: tuple = ("nls",)
    retractions: tuple = ("svd",)
    seeds: int = 50
    base_seed: int = 0
    overrides: dict = field(default_factory=dict)
    trace_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if not (self.n_values and self.r_values and self.mu_values and self.modes and self.retractions):
            raise ValueError("every sweep list must be nonempty")
        if self.seeds < 1:
            raise ValueError(f"need at least one seed, got {self.seeds}")
        for m in self.modes:
            if m not in MODE_BY_NAME:
                raise ValueError(f"unknown mode {m!r}")
        for rt in self.retractions:
            if rt not in RETRACTION_BY_NAME:
                raise ValueError(f"unknown retraction {rt!r}")
        unknown = set(self.overrides) - set(_CONFIG_FIELD_TYPES)
        if unknown:
            raise ValueError(f"unknown config overrides: {sorted(unknown)}")


@dataclass(frozen=True)
class SummaryRow:
    """Seed-averaged results for one (problem point, mode, retraction) cell."""

    label: str
    iterations: float
    F: float
    sparsity: float
    cpu_s: float
    linesearch: float
    ssn_iters: float
    failures: int


def build_config(mode: str, retraction: str, overrides: dict) -> SolverConfig:
    kwargs = dict(overrides)
    kwargs["mode"] = MODE_BY_NAME[mode]
    kwargs["retraction"] = RETRACTION_BY_NAME[retraction]
    return SolverConfig(**kwargs)


def run_label(kind: str, n: int, r: int, mu: float, mode: str, retraction: str) -> str:
    return f"{kind}_n{n}_r{r}_mu{mu:g}_{mode}_{retraction}"


def _run_single(task: tuple) -> dict:
    """Worker: one (instance, seed) solve; returns plain stats for aggregation."""
    kind, n, r, mu, mode, retraction, seed, overrides, trace_path = task
    try:
        problem = make_problem(kind, n, r, mu, seed)
        config = build_config(mode, retraction, overrides)
        X0 = random_point(n, r, seed)
        t0 = time.perf_counter()
        result = solve(problem, X0, config)
        cpu = time.perf_counter() - t0
        if trace_path is not None:
            write_trace_csv(result.trace, trace_path)
        iters = len(result.trace)
        return {
            "ok": True,
            "iter": iters,
            "F": problem.objective(result.point.data),
            "sparsity": sparsity(result.point.data),
            "cpu_s": cpu,
            "linesearch": sum(t.ls_trials for t in result.trace),
            "ssn_iters": sum(t.ssn_iters for t in result.trace) / max(1, iters),
            "status": result.status.value,
        }
    except Exception as exc:  # isolated: a failed run must not abort the sweep
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _pool_size(n_tasks: int) -> int:
    cap = int(os.environ.get("BENCH_THREADS", "0") or "0")
    workers = cap if cap > 0 else (os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def run_experiment(spec: ExperimentSpec) -> list[SummaryRow]:
    """One SummaryRow per (sweep point, mode, retraction), seed-averaged."""
    cells = [
        (n, r, mu, mode, retraction)
        for n in spec.n_values
        for r in spec.r_values
        for mu in spec.mu_values
        for mode in spec.modes
        for retraction in spec.retractions
    ]
    trace_dir = Path(spec.trace_dir) if spec.trace_dir else None
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for ci, (n, r, mu, mode, retraction) in enumerate(cells):
        label = run_label(spec.problem, n, r, mu, mode, retraction)
        for i in range(spec.seeds):
            seed = spec.base_seed + i
            tpath = str(trace_dir / f"{label}_seed{seed}.csv") if trace_dir else None
            tasks.append((ci, (spec.problem, n, r, mu, mode, retraction, seed, spec.overrides, tpath)))

    workers = _pool_size(len(tasks))
    results: dict[tuple[int, int], dict] = {}
    if workers == 1:
        for idx, (ci, task) in enumerate(tasks):
            results[(ci, idx)] = _run_single(task)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (ci, _), out in zip(tasks, pool.map(_run_single, [t for _, t in tasks])):
                results[(ci, len(results))] = out

    rows = []
    per_cell: dict[int, list[dict]] = {ci: [] for ci in range(len(cells))}
    for (ci, _), out in sorted(results.items()):
        per_cell[ci].append(out)
    for ci, (n, r, mu, mode, retraction) in enumerate(cells):
        outs = per_cell[ci]
        good = [o for o in outs if o["ok"]]
        failures = len(outs) - len(good)
        if good:
            mean = lambda key: float(np.mean([o[key] for o in good]))
            row = SummaryRow(
                label=run_label(spec.problem, n, r, mu, mode, retraction),
                iterations=mean("iter"),
                F=mean("F"),
                sparsity=mean("sparsity"),
                cpu_s=mean("cpu_s"),
                linesearch=mean("linesearch"),
                ssn_iters=mean("ssn_iters"),
                failures=failures,
            )
        else:
            row = SummaryRow(
                label=run_label(spec.problem, n, r, mu, mode, retraction),
                iterations=0.0, F=float("nan"), sparsity=float("nan"),
                cpu_s=0.0, linesearch=0.0, ssn_iters=0.0, failures=failures,
            )
        rows.append(row)
    return rows


def emit_csv(rows: Sequence[SummaryRow], path) -> None:
    """UTF-8 summary CSV, 6 significant digits, '\\n' newlines."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SUMMARY_CSV_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row.label},{row.iterations:.6g},{row.F:.6g},{row.sparsity:.6g},"
                f"{row.cpu_s:.6g},{row.linesearch:.6g},{row.ssn_iters:.6g},{row.failures}\n"
            )


def _parse_overrides(items: Optional[Sequence[str]]) -> dict:
    overrides: dict = {}
    for item in items or ():
        if "=" not in item:
            raise SystemExit(f"--config expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in _CONFIG_FIELD_TYPES:
            raise SystemExit(f"unknown config field {key!r}")
        ftype = _CONFIG_FIELD_TYPES[key]
        overrides[key] = int(value) if ftype in ("int", int) else float(value)
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Sweep the composite Stiefel solvers over problem grids and seeds.",
    )
    parser.add_argument("--problem", required=True, choices=("cm", "spca"))
    parser.add_argument("--n", required=True, type=int, nargs="+", help="column lengths to sweep")
    parser.add_argument("--r", required=True, type=int, nargs="+", help="column counts to sweep")
    parser.add_argument("--mu", required=True, type=float, nargs="+", help="l1 weights to sweep")
    parser.add_argument("--mode", type=str, nargs="+", default=["nls"], choices=sorted(MODE_BY_NAME))
    parser.add_argument("--retraction", type=str, nargs="+", default=["svd"], choices=sorted(RETRACTION_BY_NAME))
    parser.add_argument("--seeds", type=int, default=50, help="runs per cell (seed = base+i)")
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="summary CSV path")
    parser.add_argument("--config", action="append", metavar="KEY=VAL", help="solver config override")
    parser.add_argument("--trace-dir", default=None, help="write per-run iteration traces here")
    args = parser.parse_args(argv)

    spec = ExperimentSpec(
        problem=args.problem,
        n_values=tuple(args.n),
        r_values=tuple(args.r),
        mu_values=tuple(args.mu),
        modes=tuple(args.mode),
        retractions=tuple(args.retraction),
        seeds=args.seeds,
        base_seed=args.base_seed,
        overrides=_parse_overrides(args.config),
        trace_dir=args.trace_dir,
    )
    rows = run_experiment(spec)
    emit_csv(rows, args.out)
    failed = sum(row.failures for row in rows)
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({failed} failed runs)" if failed else ""))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
