"""Command-line front end: run witness sweeps described by JSON scenario files.

Exit codes: 0 success, 1 scenario error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .heom import HeomError, HeomSolver, wq_sweep
from .models import (PRESETS, ConfigurationError, build_preset, photonic_witness,
                     transmon_hadamard_witness)
from .numerics import IntegrationError
from .quantum import (DensityMatrix, evolve_operator, propagator_markov, settling_time,
                      stationary_state, two_time_correlator)
from .units import TIME_UNITS, quantity
from .witnesses import (DEFAULT_THRESHOLD, PopulationRecord, witness_womega, witness_wq,
                        witness_wq_partial, witness_wqq)

log = logging.getLogger("qwitness")

WITNESSES = ("wq", "womega", "wqq", "wq-partial")
SUPPORTED = {
    "lindblad": {"wq", "womega", "wqq", "wq-partial"},
    "heom": {"wq", "wq-partial"},
    "process": {"wq"},
    "photonic": {"wq"},
}
EXIT_OK, EXIT_SCENARIO, EXIT_SOLVER = 0, 1, 2
THREADS_ENV = "QWITNESS_THREADS"


class ScenarioError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class SolverFailure(RuntimeError):
    pass


# -- scenario parsing ------------------------------------------------------

@dataclass
class Grid:
    values: np.ndarray
    unit: str


@dataclass
class Scenario:
    name: str
    preset: str
    witness: str
    m: str
    n: str | None
    t0: Grid
    tau: Grid
    parameters: dict = field(default_factory=dict)
    initial: str | None = None
    threshold: float = DEFAULT_THRESHOLD
    time_sets: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _grid(spec, name: str, diagnostics: list) -> Grid | None:
    if spec is None:
        diagnostics.append(f"{name}: grid is missing")
        return None
    if not isinstance(spec, dict):
        diagnostics.append(f"{name}: grid must be an object with 'values' or 'start'/'stop'/'num'")
        return None
    unit = str(spec.get("unit", ""))
    try:
        if "values" in spec:
            values = np.array([float(v) for v in spec["values"]])
        else:
            num = int(spec.get("num", 0))
            values = np.linspace(float(spec["start"]), float(spec["stop"]), num) if num > 0 else np.array([])
    except (KeyError, TypeError, ValueError) as exc:
        diagnostics.append(f"{name}: cannot read grid ({exc})")
        return None
    if values.size == 0:
        diagnostics.append(f"{name}: grid must be nonempty")
        return None
    if values.size > 1 and np.any(np.diff(values) <= 0):
        diagnostics.append(f"{name}: grid must be strictly increasing")
    if np.any(values < 0):
        diagnostics.append(f"{name}: grid values must be nonnegative")
    return Grid(values, unit)


def parse_scenario(data: dict) -> Scenario:
    """Check a scenario document and collect every problem before failing."""
    diagnostics = []
    if not isinstance(data, dict):
        raise ScenarioError(["scenario must be a JSON object"])
    preset_name = data.get("preset")
    preset = PRESETS.get(preset_name)
    if preset is None:
        diagnostics.append(f"preset: unknown preset {preset_name!r}; choose from {list(PRESETS)}")
    witness = data.get("witness", "wq")
    if witness not in WITNESSES:
        diagnostics.append(f"witness: {witness!r} is not one of {WITNESSES}")
    elif preset is not None and witness not in SUPPORTED[preset.kind]:
        diagnostics.append(f"witness: {witness!r} is not available for preset {preset_name!r} "
                           f"(supported: {sorted(SUPPORTED[preset.kind])})")
    labels = preset.labels if preset else ()
    m = data.get("m")
    n = data.get("n")
    if m is None:
        diagnostics.append("m: measured state is required")
    elif preset and str(m) not in labels:
        diagnostics.append(f"m: state {m!r} is out of range for d = {len(labels)} (labels {list(labels)})")
    if witness in ("womega", "wqq"):
        if n is None:
            diagnostics.append(f"n: required for witness {witness!r}")
        elif preset and str(n) not in labels:
            diagnostics.append(f"n: state {n!r} is out of range for d = {len(labels)} (labels {list(labels)})")
    initial = data.get("initial")
    if initial is not None and preset and str(initial) not in labels:
        diagnostics.append(f"initial: state {initial!r} is out of range for d = {len(labels)}")
    grids = data.get("grid", {})
    t0 = _grid(grids.get("t0"), "grid.t0", diagnostics)
    tau = _grid(grids.get("tau"), "grid.tau", diagnostics)
    for g, gname in ((t0, "grid.t0"), (tau, "grid.tau")):
        if g is None or preset is None:
            continue
        if preset.kind == "photonic":
            if g.unit not in ("", "rad"):
                diagnostics.append(f"{gname}: wave-plate angles must be in 'rad'")
        elif preset.kind == "process":
            continue
        elif preset.units.time_unit and g.unit not in TIME_UNITS:
            diagnostics.append(f"{gname}: time unit {g.unit!r} is not one of {list(TIME_UNITS)}")
    threshold = data.get("threshold", DEFAULT_THRESHOLD)
    if not isinstance(threshold, (int, float)) or threshold < 0:
        diagnostics.append("threshold: must be a nonnegative number")
    time_sets = data.get("time_sets", {})
    if witness == "womega":
        if "offsets" in time_sets:
            offs = time_sets["offsets"]
            if not (isinstance(offs, list) and len(offs) == 2):
                diagnostics.append("time_sets.offsets: need two offsets, one per time-domain set")
        elif "stationary_tolerance" in time_sets:
            if not float(time_sets["stationary_tolerance"]) > 0:
                diagnostics.append("time_sets.stationary_tolerance: must be positive")
            if preset is not None and preset.kind != "lindblad":
                diagnostics.append("time_sets.stationary_tolerance: needs a Lindblad preset")
        else:
            diagnostics.append("time_sets: give 'offsets' or 'stationary_tolerance'")
    params = data.get("parameters", {})
    if not isinstance(params, dict):
        diagnostics.append("parameters: must be an object")
    elif preset is not None:
        for key, value in params.items():
            if isinstance(value, dict) and "value" not in value:
                diagnostics.append(f"parameters.{key}: quantity needs 'value' and 'unit'")
    if diagnostics:
        raise ScenarioError(diagnostics)
    return Scenario(
        name=str(data.get("name", preset_name)), preset=preset_name, witness=witness,
        m=str(m), n=None if n is None else str(n), t0=t0, tau=tau, parameters=params,
        initial=None if initial is None else str(initial), threshold=float(threshold),
        time_sets=time_sets, solver=data.get("solver", {}), output=data.get("output", {}), raw=data)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    return parse_scenario(data)


def validate(path: str | Path) -> list[str]:
    """All diagnostics for a scenario file; an empty list means it is valid."""
    try:
        load_scenario(path)
    except ScenarioError as exc:
        return exc.diagnostics
    except OSError as exc:
        return [f"cannot read {path}: {exc}"]
    return []


# -- results ---------------------------------------------------------------

@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _table(rows: list, metadata: dict) -> ResultTable:
    extra = []
    for r in rows:
        for k in r:
            if k not in ("t0", "tau", "value", "detected") and k not in extra:
                extra.append(k)
    return ResultTable(["t0", "tau", "value", "detected", *extra], rows, metadata)


def _row(t0, tau, result) -> dict:
    row = {"t0": float(t0), "tau": float(tau), "value": float(result.value), "detected": bool(result.detected)}
    for k, v in result.components.items():
        if isinstance(v, complex):
            row[f"{k}_re"], row[f"{k}_im"] = v.real, v.imag
        elif isinstance(v, (int, float, np.floating)):
            row[k] = float(v)
    if result.status not in ("detected", "not detected"):
        row["status"] = result.status
    return row


# -- evaluation ------------------------------------------------------------

def _internal_times(grid: Grid, units) -> np.ndarray:
    if not units.time_unit:
        return grid.values.astype(float)
    return np.array([units.time(v, grid.unit) for v in grid.values])


def _sweep_lindblad(sc: Scenario, model, units) -> list:
    space = model.space
    rho0 = DensityMatrix.basis(space, sc.initial or space.labels[0])
    m = space.index(sc.m)
    n = space.index(sc.n) if sc.n is not None else None
    t0s = _internal_times(sc.t0, units)
    taus = _internal_times(sc.tau, units)
    rows = []
    cache = {}

    def rho_at(t):
        key = round(t, 12)
        if key not in cache:
            cache[key] = evolve_operator(model, rho0.matrix, t)
        return cache[key]

    def pops(r):
        p = np.clip(r.diagonal().real, 0.0, 1.0)
        return p / p.sum()

    omegas = {}
    if sc.witness in ("wq", "wq-partial", "wqq"):
        for tau in taus:
            omegas[tau] = propagator_markov(model, tau).matrix
    settle = None
    if sc.witness == "womega" and "stationary_tolerance" in sc.time_sets:
        settle = settling_time(model, rho0, float(sc.time_sets["stationary_tolerance"]))
    d = space.dim
    for a, t0 in zip(sc.t0.values, t0s):
        for b, tau in zip(sc.tau.values, taus):
            where = {"m": sc.m, "t0": float(a), "tau": float(b)}
            try:
                if sc.witness == "wq":
                    p = pops(rho_at(t0))
                    res = witness_wq(rho_at(t0 + tau)[m, m].real, p, omegas[tau][m], sc.threshold, **where)
                elif sc.witness == "wq-partial":
                    p = pops(rho_at(t0))
                    part = witness_wq_partial(rho_at(t0 + tau)[m, m].real, p * omegas[tau][m], sc.threshold)
                    res = part.to_result(**where)
                elif sc.witness == "wqq":
                    corr = two_time_correlator(model, rho0, sc.m, sc.n, t0, t0 + tau)
                    res = witness_wqq(corr, pops(rho_at(t0))[n], omegas[tau][m, n], sc.threshold, n=sc.n, **where)
                else:
                    if settle is not None:
                        offsets = (0, math.ceil(settle / t0) if t0 > 0 else 0)
                    else:
                        offsets = tuple(float(o) for o in sc.time_sets["offsets"])
                    records = []
                    for off in offsets:
                        recs = []
                        for k in range(1, d + 1):
                            start = (k + off) * t0
                            recs.append(PopulationRecord(start, start + tau, pops(rho_at(start)),
                                                         rho_at(start + tau)[m, m].real))
                        records.append(recs)
                    res = witness_womega(records[0], records[1], n, sc.threshold, m=sc.m,
                                         t0=float(a), tau=float(b))
                    res.n = sc.n
                    res.components["c_prime"] = float(offsets[1])
                    if sc.time_sets.get("scale_by_stationary", False):
                        ss = stationary_state(model).populations()
                        c = 1.0 / float(np.prod(ss)) if np.prod(ss) > 0 else float("nan")
                        res.components["scaled_value"] = c * res.value
            except (IntegrationError, ArithmeticError, np.linalg.LinAlgError) as exc:
                raise SolverFailure(f"solver failed at t0 = {a} {sc.t0.unit}, tau = {b} {sc.tau.unit}: {exc}") from exc
            rows.append(_row(a, b, res))
    return rows


def _sweep_heom(sc: Scenario, setup, units) -> list:
    dt = setup.config.dt
    space = setup.space
    rho0 = DensityMatrix.basis(space, sc.initial) if sc.initial else setup.initial
    m = space.index(sc.m)
    t0s = _internal_times(sc.t0, units)
    taus = _internal_times(sc.tau, units)
    steps0 = np.rint(t0s / dt).astype(int)
    steps_tau = np.rint(taus / dt).astype(int)
    if np.max(np.abs(steps0 * dt - t0s)) > 1e-9 or np.max(np.abs(steps_tau * dt - taus)) > 1e-9:
        raise ScenarioError([f"grid: HEOM grid points must be multiples of the time step {dt} fs"])
    backend = sc.solver.get("backend", "numba")
    try:
        solver = HeomSolver(setup.config, backend=backend)
        sweep = wq_sweep(solver, rho0.matrix, m, steps0, steps_tau, dt)
    except (HeomError, IntegrationError, ArithmeticError) as exc:
        raise SolverFailure(f"HEOM solver failed: {exc}") from exc
    rows = []
    for i, a in enumerate(sc.t0.values):
        for k, b in enumerate(sc.tau.values):
            where = {"m": sc.m, "t0": float(a), "tau": float(b)}
            p = sweep.populations[i]
            omega = np.nan_to_num(sweep.omega[i, k], nan=0.0)
            expectation = sweep.expectation[i, k]
            if sc.witness == "wq":
                res = witness_wq(expectation, p, omega, sc.threshold, **where)
            else:
                terms = np.clip(p * omega, 0.0, None)
                order = [m] + [j for j in range(len(p)) if j != m]
                res = witness_wq_partial(expectation, terms[order], sc.threshold).to_result(**where)
            rows.append(_row(a, b, res))
    return rows


def evaluate(sc: Scenario) -> ResultTable:
    preset = PRESETS[sc.preset]
    try:
        built = build_preset(sc.preset, sc.parameters)
    except ConfigurationError as exc:
        raise ScenarioError([str(exc)]) from exc
    except ValueError as exc:
        raise ScenarioError([f"parameters: {exc}"]) from exc
    units = preset.units
    if preset.kind == "lindblad":
        rows = _sweep_lindblad(sc, built, units)
        model_meta = built.meta
    elif preset.kind == "heom":
        rows = _sweep_heom(sc, built, units)
        model_meta = built.meta
    elif preset.kind == "process":
        rows = []
        for a in sc.t0.values:
            for b in sc.tau.values:
                res = transmon_hadamard_witness(built, sc.threshold)
                rows.append(_row(a, b, res))
        model_meta = {"kraus_operators": len(built.kraus)}
    else:
        rows = []
        for a in sc.t0.values:
            for b in sc.tau.values:
                res, closed = photonic_witness(float(a), float(b), preset.labels.index(sc.m), sc.threshold)
                row = _row(a, b, res)
                row["closed_form"] = closed
                rows.append(row)
        model_meta = {"t0_axis": "half-wave plate angle (rad)", "tau_axis": "quarter-wave plate angle (rad)"}
    metadata = {
        "scenario": sc.raw,
        "preset": sc.preset,
        "description": preset.description,
        "parameters": {**preset.parameters, **sc.parameters},
        "model": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v) for k, v in model_meta.items()},
        "units": {"t0": sc.t0.unit, "tau": sc.tau.unit, "internal_time": units.time_unit or "dimensionless"},
        "witness": sc.witness,
        "threshold": sc.threshold,
        "solver": {"lindblad": "matrix exponential of the Liouvillian",
                   "heom": "fixed-step RK4 with adjoint propagators", **sc.solver},
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": None,
        "rows": len(rows),
    }
    return _table(rows, metadata)


# -- output ----------------------------------------------------------------

def render_svg(table: ResultTable, path: Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "qwitness"
    t0 = np.unique(table.column("t0"))
    tau = np.unique(table.column("tau"))
    values = table.column("value")
    fig, ax = plt.subplots(figsize=(5, 4))
    units = table.metadata.get("units", {})
    if t0.size > 1 and tau.size > 1:
        z = values.reshape(t0.size, tau.size)
        mesh = ax.pcolormesh(tau, t0, z, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="witness value")
        ax.set_xlabel(f"tau [{units.get('tau', '')}]")
        ax.set_ylabel(f"t0 [{units.get('t0', '')}]")
    else:
        x, name = (tau, "tau") if tau.size > 1 else (t0, "t0")
        ax.plot(x, values, marker="o" if x.size < 30 else None)
        ax.set_xlabel(f"{name} [{units.get(name, '')}]")
        ax.set_ylabel("witness value")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_outputs(table: ResultTable, sc: Scenario, out_dir: Path, svg: bool) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = sc.output.get("stem", sc.name)
    csv_path = out_dir / f"{stem}.csv"
    meta_path = out_dir / f"{stem}.json"
    csv_path.write_text(table.to_csv())
    meta = dict(table.metadata)
    meta["generated"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    paths = {"csv": csv_path, "metadata": meta_path}
    if svg or sc.output.get("svg", False):
        svg_path = out_dir / f"{stem}.svg"
        render_svg(table, svg_path, f"{sc.preset}: {sc.witness}")
        paths["svg"] = svg_path
    return paths


def run(path: str | Path, out_dir: str | Path | None = None, svg: bool = False) -> tuple[ResultTable, dict]:
    sc = load_scenario(path)
    table = evaluate(sc)
    out = Path(out_dir) if out_dir is not None else Path(path).resolve().parent / "results"
    return table, write_outputs(table, sc, out, svg)


def list_presets() -> list[tuple[str, str]]:
    return [(name, p.description) for name, p in PRESETS.items()]


# -- entry point -----------------------------------------------------------

def _configure_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        import numba

        numba.set_num_threads(max(1, min(int(value), numba.config.NUMBA_NUM_THREADS)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qwitness", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="evaluate a scenario and write CSV, JSON and optional SVG")
    p_run.add_argument("file")
    p_run.add_argument("--out", default=None, help="output directory (default: results/ next to the file)")
    p_run.add_argument("--svg", action="store_true", help="also render an SVG plot")
    p_val = sub.add_parser("validate", help="check a scenario file without running it")
    p_val.add_argument("file")
    sub.add_parser("list-presets", help="show the shipped model presets")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "list-presets":
        for name, desc in list_presets():
            print(f"{name:10s} {desc}")
        return EXIT_OK
    if args.command == "validate":
        problems = validate(args.file)
        for line in problems:
            print(line)
        if not problems:
            print(f"{args.file}: ok")
        return EXIT_SCENARIO if problems else EXIT_OK
    _configure_threads()
    try:
        table, paths = run(args.file, args.out, args.svg)
    except ScenarioError as exc:
        for line in exc.diagnostics:
            print(f"scenario error: {line}", file=sys.stderr)
        return EXIT_SCENARIO
    except OSError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (SolverFailure, MemoryError, IntegrationError, HeomError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    detected = sum(bool(r["detected"]) for r in table.rows)
    print(f"{len(table.rows)} grid points, {detected} detected")
    for kind, p in paths.items():
        print(f"{kind}: {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
