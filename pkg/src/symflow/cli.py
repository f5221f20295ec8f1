"""Command-line front end: ``symflow run | check | export``.

A run config is a JSON object::

    {
      "space": "sphere(2)",
      "solver": {"N": 128, "T_end": 0.3, "snapshot_dt": 0.01},
      "init": {"h": "1", "f": ["1+0.05*cos(pi*r)"]},
      "bc": "totally_geodesic",
      "pipeline": {"gauge": true, "perelman": true},
      "output": {"directory": "runs/sphere", "formats": ["csv", "json"]}
    }

``bc`` may also be ``{"F": [[...], [...]]}`` (two rows of n expressions in
t, u1..un) or ``{"shen_lambda": "<expr in t>"}``.

Exit codes: 0 success (including a run that stops at a singular time),
2 bad config or missing artifacts, 3 incompatible boundary/initial data,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import glob
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import load_space, validate_identities
from .bcdsl import BCSpec, InitialProfiles, check_compatibility, parse_expr
from .deturck import COMPAT_TOL, SolverConfig, ricci_flow_residual, solve, solve_gauge
from .errors import (
    ConfigError,
    ExprSyntaxError,
    HypothesisViolated,
    IncompatibleData,
    MissingArtifacts,
    SymflowError,
    UnknownIdentifier,
    UnknownSpace,
)
from .perelman import build_pair, monotonicity_report, mrf_residual

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_INCOMPATIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
FORMATS = ("csv", "json")
TRAJECTORY_CSV = "trajectory.csv"
REPORT_JSON = "report.json"
MANIFEST_JSON = "manifest.json"
PLOT_DIR = "plot"


# ---------------------------------------------------------------------------
# config

@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.  Expressions are kept as source strings."""

    space: str
    solver: SolverConfig
    init_h: str
    init_f: tuple
    bc: object  # "totally_geodesic", ("F", rows) or ("shen_lambda", expr)
    gauge: bool = True
    perelman: bool = False
    directory: str | None = None
    formats: tuple = FORMATS
    base_dir: str = dataclasses.field(default=".", compare=False)

    @property
    def n(self):
        return len(self.init_f)

    def space_data(self):
        return _load_space(self.space, self.base_dir)

    def profiles(self) -> InitialProfiles:
        return InitialProfiles(parse_expr(self.init_h, variables=("r",)),
                               tuple(parse_expr(s, variables=("r",)) for s in self.init_f))

    def bc_spec(self) -> BCSpec:
        if self.bc == "totally_geodesic":
            return BCSpec.totally_geodesic(self.n)
        kind, value = self.bc
        if kind == "shen_lambda":
            return BCSpec.shen(parse_expr(value, variables=("t",)), self.n)
        return BCSpec.parse(value, self.n)

    def to_json(self) -> dict:
        if self.bc == "totally_geodesic":
            bc = "totally_geodesic"
        else:
            kind, value = self.bc
            bc = {kind: [list(row) for row in value] if kind == "F" else value}
        out = {
            "space": self.space,
            "solver": dataclasses.asdict(self.solver),
            "init": {"h": self.init_h, "f": list(self.init_f)},
            "bc": bc,
            "pipeline": {"gauge": self.gauge, "perelman": self.perelman},
            "output": {"formats": list(self.formats)},
        }
        if self.directory is not None:
            out["output"]["directory"] = self.directory
        return out


def _load_space(spec, base_dir):
    path = Path(spec)
    if spec.endswith(".json") and not path.is_absolute():
        spec = str(Path(base_dir) / path)
    return load_space(spec)


def _expr(src, pointer, variables):
    if not isinstance(src, str):
        raise ConfigError("expected an expression string", pointer)
    try:
        return parse_expr(src, variables=variables)
    except (ExprSyntaxError, UnknownIdentifier) as exc:
        raise ConfigError(str(exc), pointer) from exc


def _expect(obj, kind, pointer):
    if not isinstance(obj, kind):
        raise ConfigError(f"expected {kind.__name__}", pointer)
    return obj


def parse_config(obj, base_dir=".") -> RunConfig:
    """Validate a decoded JSON config.

    Raises
    ------
    ConfigError
        With a JSON pointer to the offending value.
    IncompatibleData
        If the boundary map disagrees with the initial profiles at t=0.
    """
    _expect(obj, dict, "")
    unknown = set(obj) - {"space", "solver", "init", "bc", "pipeline", "output"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", f"/{sorted(unknown)[0]}")
    if "space" not in obj:
        raise ConfigError("missing space", "/space")
    space_name = _expect(obj["space"], str, "/space")
    try:
        space = _load_space(space_name, base_dir)
    except (UnknownSpace, OSError, ValueError, SymflowError) as exc:
        raise ConfigError(str(exc), "/space") from exc

    solver_obj = _expect(obj.get("solver", {}), dict, "/solver")
    fields = {f.name for f in dataclasses.fields(SolverConfig)}
    for key in solver_obj:
        if key not in fields:
            raise ConfigError(f"unknown solver field {key!r}", f"/solver/{key}")
    try:
        solver = SolverConfig(**solver_obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "/solver") from exc

    init = _expect(obj.get("init"), dict, "/init")
    h_src = init.get("h")
    _expr(h_src, "/init/h", ("r",))
    f_src = _expect(init.get("f"), list, "/init/f")
    if len(f_src) != space.n:
        raise ConfigError(f"expected {space.n} profiles for {space_name}, got {len(f_src)}", "/init/f")
    for i, s in enumerate(f_src):
        _expr(s, f"/init/f/{i}", ("r",))
    n = space.n
    uvars = ("t",) + tuple(f"u{k}" for k in range(1, n + 1))

    bc_obj = obj.get("bc", "totally_geodesic")
    if bc_obj == "totally_geodesic":
        bc = "totally_geodesic"
    elif isinstance(bc_obj, dict) and set(bc_obj) == {"shen_lambda"}:
        _expr(bc_obj["shen_lambda"], "/bc/shen_lambda", ("t",))
        bc = ("shen_lambda", bc_obj["shen_lambda"])
    elif isinstance(bc_obj, dict) and set(bc_obj) == {"F"}:
        rows = _expect(bc_obj["F"], list, "/bc/F")
        if len(rows) != 2 or any(not isinstance(row, list) or len(row) != n for row in rows):
            raise ConfigError(f"bc.F must be two rows of {n} expressions", "/bc/F")
        for j, row in enumerate(rows):
            for i, s in enumerate(row):
                _expr(s, f"/bc/F/{j}/{i}", uvars)
        bc = ("F", tuple(tuple(row) for row in rows))
    else:
        raise ConfigError('bc must be "totally_geodesic", {"F": ...} or {"shen_lambda": ...}', "/bc")

    pipe = _expect(obj.get("pipeline", {}), dict, "/pipeline")
    gauge = _expect(pipe.get("gauge", True), bool, "/pipeline/gauge")
    perelman = _expect(pipe.get("perelman", False), bool, "/pipeline/perelman")
    if perelman and not gauge:
        raise ConfigError("the perelman stage needs the gauge stage", "/pipeline/perelman")

    out = _expect(obj.get("output", {}), dict, "/output")
    directory = out.get("directory")
    if directory is not None:
        _expect(directory, str, "/output/directory")
    formats = tuple(_expect(out.get("formats", list(FORMATS)), list, "/output/formats"))
    for i, fmt in enumerate(formats):
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format {fmt!r}", f"/output/formats/{i}")

    cfg = RunConfig(space_name, solver, h_src, tuple(f_src), bc, gauge, perelman, directory, formats,
                    str(base_dir))
    res = check_compatibility(cfg.bc_spec(), cfg.profiles(), space)
    if np.max(np.abs(res)) >= COMPAT_TOL:
        raise IncompatibleData(res, COMPAT_TOL)
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}", "") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "") from exc
    return parse_config(obj, base_dir=path.parent)


# ---------------------------------------------------------------------------
# run

@dataclass
class RunManifest:
    config: dict
    version: str
    grid: dict
    status: str
    singular_time: float | None
    files: dict
    summary: dict
    exit_code: int = EXIT_OK
    error: str | None = None

    def to_json(self):
        return dataclasses.asdict(self)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path: Path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, times, r, columns: dict):
    """Long format: one row per (t, r) pair."""
    K, M = len(times), len(r)
    names = ["t", "r"] + list(columns)
    data = np.empty((K * M, len(names)))
    data[:, 0] = np.repeat(times, M)
    data[:, 1] = np.tile(r, K)
    for c, arr in enumerate(columns.values(), start=2):
        data[:, c] = np.asarray(arr).reshape(K * M)
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")


def _series(x):
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def run(config: RunConfig, out=None) -> RunManifest:
    """Execute the configured pipeline and write its artifacts.

    Numerical failures are recorded in the manifest (``exit_code`` 4) rather
    than raised.
    """
    out = Path(out or config.directory or "symflow-run")
    out.mkdir(parents=True, exist_ok=True)
    space = config.space_data()
    bc, init = config.bc_spec(), config.profiles()
    cfg = config.solver
    grid = {"N": cfg.N, "dr": 1.0 / cfg.N, "T_end": cfg.T_end}
    summary, report, files = {"fiber_volume": 1.0}, {}, {}
    status, singular, code, error = "failed", None, EXIT_OK, None
    started = time.perf_counter()
    columns, times, r = {}, None, None
    try:
        traj = solve(cfg, space, bc, init)
        status, singular = traj.status, traj.singular_time
        times, r = traj.times, traj.r
        grid["snapshots"] = len(traj)
        flow = traj
        if config.gauge:
            traj = solve_gauge(traj, space, bc, init)
            flow = traj.recovered
            summary["fields"] = "ricci_flow"
        else:
            summary["fields"] = "gauge_fixed"
        columns["h"] = flow.h
        for i in range(flow.n):
            columns[f"f{i + 1}"] = flow.f[:, i]
        if config.gauge:
            columns["phi"] = traj.phi
        report["times"] = _series(times)
        report["min_f"] = np.min(flow.f, axis=2).T.tolist()
        if config.gauge and len(flow) >= 3:
            res = ricci_flow_residual(flow, space)
            report["flow_residual"] = _series(res.total)
            summary["final_flow_residual"] = float(res.total[-1])
        if config.perelman:
            if status != "completed" or len(flow) < 3:
                summary["perelman"] = "skipped: needs a completed run with at least three snapshots"
            else:
                pair = build_pair(flow, space)
                columns.update(psi=pair.psi, ptilde=pair.ptilde, p=pair.p)
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", HypothesisViolated)
                    rep = monotonicity_report(pair, space, strict=True)
                mres = mrf_residual(pair, space)
                report["monotonicity"] = rep.to_json()
                report["mrf_residual"] = _series(np.maximum(mres.metric, mres.p))
                summary.update(
                    final_mrf_residual=float(report["mrf_residual"][-1]),
                    max_abs_frak_F=float(np.max(np.abs(rep.frak_F))),
                    monotone=rep.monotone,
                    max_formula_gap=float(np.max(rep.formula_gap)),
                    hypothesis_warnings=[str(w.message) for w in caught],
                )
    except SymflowError as exc:
        code, error = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
        log.error("run failed: %s", error)

    if times is not None and "csv" in config.formats:
        path = out / TRAJECTORY_CSV
        _write_csv(path, times, r, columns)
        files[TRAJECTORY_CSV] = {"bytes": path.stat().st_size, "sha256": _digest(path)}
    if "json" in config.formats:
        path = out / REPORT_JSON
        _atomic_write(path, json.dumps(report, indent=1))
        files[REPORT_JSON] = {"bytes": path.stat().st_size, "sha256": _digest(path)}
    summary["elapsed_seconds"] = round(time.perf_counter() - started, 3)
    manifest = RunManifest(config.to_json(), __version__, grid, status, singular, files, summary, code, error)
    _atomic_write(out / MANIFEST_JSON, json.dumps(manifest.to_json(), indent=1))
    return manifest


# ---------------------------------------------------------------------------
# export

def export_plotdata(run_dir) -> list:
    """Write whitespace-separated column files under ``run_dir/plot``.

    One data line per snapshot; quantities that only exist at interior
    snapshots are written as ``nan`` at the two ends.

    Raises
    ------
    MissingArtifacts
        If the manifest or report is absent.
    """
    run_dir = Path(run_dir)
    for name in (MANIFEST_JSON, REPORT_JSON):
        if not (run_dir / name).is_file():
            raise MissingArtifacts(f"{run_dir / name} not found; run the config first")
    report = json.loads((run_dir / REPORT_JSON).read_text())
    if "times" not in report:
        raise MissingArtifacts(f"{run_dir / REPORT_JSON} has no time series")
    t = np.asarray(report["times"])
    plot = run_dir / PLOT_DIR
    plot.mkdir(exist_ok=True)
    written = []

    def padded(x):
        x = np.asarray(x, dtype=float)
        if x.size == t.size:
            return x
        return np.concatenate([[np.nan], x, [np.nan]])

    def emit(name, header, *cols):
        path = plot / name
        np.savetxt(path, np.column_stack([t, *cols]), fmt="%.17g", header=header)
        written.append(path)

    emit("min_f.dat", "t " + " ".join(f"min_f{i + 1}" for i in range(len(report["min_f"]))),
         *[np.asarray(c) for c in report["min_f"]])
    res_cols, res_names = [], []
    for key in ("flow_residual", "mrf_residual"):
        if key in report:
            res_cols.append(padded(report[key]))
            res_names.append(key)
    if res_cols:
        emit("residuals.dat", "t " + " ".join(res_names), *res_cols)
    mono = report.get("monotonicity")
    if mono:
        emit("F.dat", "t F", np.asarray(mono["F_values"]))
        emit("dFdt.dat", "t dF_dt_fd dF_dt_formula general_formula_rhs",
             np.asarray(mono["dF_dt_fd"]), np.asarray(mono["dF_dt_formula"]),
             np.asarray(mono["general_formula_rhs"]))
        frak = np.asarray(mono["frak_F"])
        emit("frak_F.dat", "t frak_F_0 frak_F_1", frak[0], frak[1])
    return written


# ---------------------------------------------------------------------------
# entry point

def _run_one(path, out):
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"{path}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleData as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    manifest = run(cfg, out)
    line = f"{path}: {manifest.status}"
    if manifest.singular_time is not None:
        line += f" (singular near t={manifest.singular_time:.6g})"
    if manifest.error:
        line += f"; {manifest.error}"
    print(line)
    return manifest.exit_code


def _cmd_run(args):
    paths = [args.config] if args.config else []
    if args.sweep:
        paths += sorted(p for p in glob.glob(args.sweep) if p not in paths)
    if not paths:
        print("nothing to run: give a config or --sweep GLOB", file=sys.stderr)
        return EXIT_CONFIG
    if len(paths) == 1 and not args.sweep:
        return _run_one(paths[0], args.out)
    base = Path(args.out or "symflow-sweep")
    threads = int(os.environ.get("SYMFLOW_THREADS", os.cpu_count() or 1))
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        codes = list(pool.map(lambda p: _run_one(p, base / Path(p).stem), paths))
    return max(codes)


def _cmd_check(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleData as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INCOMPATIBLE
    space = cfg.space_data()
    ident = validate_identities(space)
    res = check_compatibility(cfg.bc_spec(), cfg.profiles(), space)
    print(f"space {cfg.space}: n={space.n} d={list(space.d)} beta={_series(space.beta)}")
    print(f"structure identities: {'ok' if ident.passed else 'FAILED'} (max residual {ident.max_residual:.3g})")
    for msg in ident.failures:
        print(f"  {msg}")
    print(f"compatibility: ok (max residual {np.max(np.abs(res)):.3g})")
    return EXIT_OK if ident.passed else EXIT_CONFIG


def _cmd_export(args):
    try:
        for path in export_plotdata(args.run_dir):
            print(path)
    except MissingArtifacts as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="symflow", description="G-invariant Ricci flow with boundary")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve a config and write artifacts")
    p.add_argument("config", nargs="?")
    p.add_argument("--out", help="output directory (per-config subdirectories with --sweep)")
    p.add_argument("--sweep", metavar="GLOB", help="also run every config matching GLOB")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("check", help="validate a config, its space and boundary compatibility")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check)
    p = sub.add_parser("export", help="write gnuplot column files for a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
