"""Command-line interface: ``oqsim simulate | criterion | compare | fit-bath``.

Exit codes: 0 success, 2 usage error, 3 data mismatch or invalid input file,
4 numerical failure (including a trajectory that breaks trace or Hermiticity
conservation).  Files written by a failing command are removed.

A JSON config file (``--config``) may hold any of the long option names with
dashes replaced by underscores, plus ``{"heom": {"n_c": ..., "tolerance": ...}}``.
Options given on the command line take precedence over the config file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bath import FitError, QuadratureError, fit_response_to_exponentials, sample_response
from .criterion import DegenerateSpectrumError, criterion_report, export_visualization
from .generators import Trajectory, physicality_check, propagate_pmat, propagate_tcl
from .heom import HEOMConfig, HEOMMemoryError, converge_heom, propagate_heom
from .liouville import trace_distance
from .models import load_model
from .propagation import StepSizeError

__all__ = ["format_float", "main", "read_trajectory_csv", "write_trajectory_csv"]

METHODS = ("tcl2", "tcl4", "pmat", "heom")
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class DataMismatch(Exception):
    pass


class InvariantError(RuntimeError):
    """A trajectory violated trace or Hermiticity conservation."""


#: Largest trace or Hermiticity error accepted in a written trajectory.
CONSERVATION_TOL = 1e-7


def format_float(x: float) -> str:
    """Shortest round-trip text of ``x`` rounded to 12 significant digits."""
    v = float(format(float(x), ".12g"))
    return repr(v + 0.0)


# ---------------------------------------------------------------------------
# CSV helpers


def _trajectory_header(d: int) -> list[str]:
    cols = ["t_ps"]
    for i in range(d):
        for j in range(d):
            cols += [f"rho_{i}_{j}_re", f"rho_{i}_{j}_im"]
    return cols


def write_trajectory_csv(path, traj: Trajectory) -> None:
    d = traj.states.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_trajectory_header(d))
        for t, rho in zip(traj.times, traj.states):
            row = [format_float(t)]
            for z in rho.reshape(-1):
                row += [format_float(z.real), format_float(z.imag)]
            w.writerow(row)


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(times, states)`` from a trajectory CSV."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataMismatch(f"{path}: empty file")
    n = len(rows[0]) - 1
    d = int(round(np.sqrt(n / 2)))
    if n < 2 or 2 * d * d != n or rows[0] != _trajectory_header(d):
        raise DataMismatch(f"{path}: not a trajectory CSV")
    try:
        data = np.array(rows[1:], dtype=float)
    except ValueError as exc:
        raise DataMismatch(f"{path}: malformed rows") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise DataMismatch(f"{path}: no samples")
    states = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, d, d)
    return data[:, 0], states


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(x) for x in r])


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


# ---------------------------------------------------------------------------
# option handling


def _merge_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        heom = cfg.pop("heom", {}) or {}
        if "n_c" in heom:
            cfg.setdefault("heom_nc", heom["n_c"])
        if "tolerance" in heom:
            cfg.setdefault("heom_tolerance", heom["tolerance"])
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, default))
    return args


def _parse_methods(value) -> list[str]:
    if value is None or value == "":
        return []
    items = value if isinstance(value, list) else str(value).split(",")
    methods = [m.strip().lower() for m in items if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return list(dict.fromkeys(methods))


def _parse_horizon(value) -> float | None:
    if value is None:
        return None
    if str(value).lower() in ("inf", "infinity"):
        return np.inf
    h = float(value)
    if not h > 0:
        raise UsageError("horizon must be positive")
    return h


def _model(args):
    overrides = {k: getattr(args, k) for k in ("eta", "temperature", "cutoff_fs") if getattr(args, k, None) is not None}
    try:
        return load_model(args.model, **overrides)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise DataMismatch(f"invalid model {args.model}: {exc}") from exc


class _Outputs:
    """Tracks written files so a failed command can remove them."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.created_dir = not self.dir.exists()
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(p)
        return p

    def rollback(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_dir and self.dir.exists() and not any(self.dir.iterdir()):
            self.dir.rmdir()


# ---------------------------------------------------------------------------
# commands


def _criterion_outputs(spec, horizon, out: _Outputs) -> dict:
    report = criterion_report(spec, horizon)
    _write_json(out.path("criterion.json"), report.to_dict())
    pairs, curve = export_visualization(spec, horizon)
    _write_rows(out.path("upsilon.csv"), ["delta_ij", "upsilon_ij"], pairs)
    _write_rows(out.path("spectral_density.csv"), ["omega", "pi_J_over_omega"], curve)
    return report.to_dict()


def cmd_simulate(args) -> int:
    args = _merge_config(
        args,
        {"model": "spin_boson", "methods": None, "t_end": 5.0, "points": 501, "heom_nc": "auto",
         "heom_tolerance": 1e-3, "criterion": False, "horizon": None, "out": "oqsim_out",
         "eta": None, "temperature": None, "cutoff_fs": None},
    )
    methods = _parse_methods(args.methods)
    if not methods and not args.criterion:
        raise UsageError("nothing to do: give --methods and/or --criterion")
    if not float(args.t_end) > 0 or int(args.points) < 2:
        raise UsageError("need --t-end > 0 and --points >= 2")
    nc = args.heom_nc
    if str(nc).lower() != "auto":
        try:
            nc = int(nc)
        except ValueError as exc:
            raise UsageError("--heom-nc must be an integer or 'auto'") from exc
        if nc < 0:
            raise UsageError("--heom-nc must be non-negative")
    spec = _model(args)
    grid = np.linspace(0.0, float(args.t_end), int(args.points))
    model, rho0 = spec.system, spec.initial_state

    summary = {
        "model": {"label": spec.label, "dim": spec.dim, "parameters": spec.metadata},
        "grid": {"t_end_ps": float(args.t_end), "points": int(args.points)},
        "methods": {},
    }
    results = {}
    for m in methods:
        entry: dict = {}
        if m in ("tcl2", "tcl4"):
            order = int(m[-1])
            traj = propagate_tcl(model, order, rho0, grid)
            entry["physicality"] = physicality_check(model, order).to_dict()
        elif m == "pmat":
            traj = propagate_pmat(model, rho0, grid)
        else:
            if nc == "auto" or str(nc).lower() == "auto":
                traj, used, dists = converge_heom(model, rho0, grid, float(args.heom_tolerance))
                entry["tier_distances"] = dists
            else:
                traj = propagate_heom(model, rho0, grid, HEOMConfig(n_c=nc))
                used = nc
            entry.update({k: v for k, v in traj.info.items() if k not in ("tier_distances", "n_c_used")})
            entry["n_c_used"] = used
        entry["trace_error"] = traj.trace_error()
        entry["hermiticity_error"] = traj.hermiticity_error()
        if max(entry["trace_error"], entry["hermiticity_error"]) > CONSERVATION_TOL:
            raise InvariantError(
                f"{m}: trace error {entry['trace_error']:.3g}, Hermiticity error {entry['hermiticity_error']:.3g}"
            )
        results[m] = traj
        summary["methods"][m] = entry

    out = _Outputs(args.out)
    try:
        for m, traj in results.items():
            write_trajectory_csv(out.path(f"trajectory_{m}.csv"), traj)
        if args.criterion:
            horizon = _parse_horizon(args.horizon)
            summary["criterion"] = _criterion_outputs(spec, horizon, out)
        _write_json(out.path("summary.json"), summary)
    except BaseException:
        out.rollback()
        raise
    return 0


def cmd_criterion(args) -> int:
    args = _merge_config(
        args,
        {"model": "fmo", "horizon": None, "out": "oqsim_out", "eta": None, "temperature": None, "cutoff_fs": None},
    )
    horizon = _parse_horizon(args.horizon)
    spec = _model(args)
    out = _Outputs(args.out)
    try:
        report = _criterion_outputs(spec, horizon, out)
    except BaseException:
        out.rollback()
        raise
    print(
        f"{report['label']}: simplified {report['simplified_max']:.4g}, "
        f"full {report['full_max'] if report['full_max'] is None else format(report['full_max'], '.4g')}, "
        f"verdict {report['verdict']}"
    )
    return 0


def cmd_compare(args) -> int:
    ta, sa = read_trajectory_csv(args.traj_a)
    tb, sb = read_trajectory_csv(args.traj_b)
    if sa.shape != sb.shape:
        raise DataMismatch(f"dimension or length mismatch: {sa.shape} vs {sb.shape}")
    if not np.allclose(ta, tb, rtol=0, atol=1e-9 * max(1.0, float(np.max(np.abs(ta))))):
        raise DataMismatch("time grids differ")
    dist = np.array([trace_distance(a, b) for a, b in zip(sa, sb)])
    target = Path(args.out)
    if target.suffix.lower() != ".csv":
        target = target / "trace_distance.csv"
    out = _Outputs(target.parent)
    try:
        _write_rows(out.path(target.name), ["t_ps", "trace_distance"], np.column_stack([ta, dist]))
    except BaseException:
        out.rollback()
        raise
    return 0


def cmd_fit_bath(args) -> int:
    args = _merge_config(
        args,
        {"model": "spin_boson", "t_end": 5.0, "points": 251, "n_real": 4, "n_imag": 4, "max_rms": 0.02,
         "out": "oqsim_out", "eta": None, "temperature": None, "cutoff_fs": None},
    )
    if int(args.points) < 2 or not float(args.t_end) > 0:
        raise UsageError("need --t-end > 0 and --points >= 2")
    if int(args.n_real) < 0 or int(args.n_imag) < 0:
        raise UsageError("term counts must be non-negative")
    spec = _model(args)
    times = np.linspace(0.0, float(args.t_end), int(args.points))
    d, d1 = sample_response(spec.spectral_density, spec.thermal, times)
    resp = fit_response_to_exponentials(times, d, d1, int(args.n_real), int(args.n_imag), float(args.max_rms))
    fd, fd1 = resp.evaluate(times)
    payload = resp.to_dict()
    payload["rms_relative"] = {
        "D": float(np.sqrt(np.mean((fd - d) ** 2)) / max(np.max(np.abs(d)), 1e-300)),
        "D1": float(np.sqrt(np.mean((fd1 - d1) ** 2)) / max(np.max(np.abs(d1)), 1e-300)),
    }
    target = Path(args.out)
    if target.suffix.lower() != ".json":
        target = target / "response_fit.json"
    out = _Outputs(target.parent)
    try:
        _write_json(out.path(target.name), payload)
    except BaseException:
        out.rollback()
        raise
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="bundled model name (spin_boson, fmo) or model JSON path")
    p.add_argument("--eta", type=float, help="override the coupling scale eta")
    p.add_argument("--temperature", type=float, help="override the bath temperature (K)")
    p.add_argument("--cutoff-fs", type=float, help="override the Drude-Lorentz correlation time (fs)")
    p.add_argument("--config", help="JSON config file; command-line options win")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oqsim", description="Open quantum system dynamics and weak-coupling criteria.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="propagate with TCL2/TCL4/P-matrix/HEOM")
    _add_model_options(p)
    p.add_argument("--methods", help="comma-separated subset of tcl2,tcl4,pmat,heom")
    p.add_argument("--t-end", type=float, help="final time in ps (default 5)")
    p.add_argument("--points", type=int, help="number of output times (default 501)")
    p.add_argument("--heom-nc", help="HEOM depth or 'auto' (default auto)")
    p.add_argument("--heom-tolerance", type=float, help="tier convergence tolerance (default 1e-3)")
    p.add_argument("--criterion", action="store_true", default=None, help="also write the criterion report")
    p.add_argument("--horizon", help="criterion horizon in ps or 'inf'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("criterion", help="weak-coupling criterion report")
    _add_model_options(p)
    p.add_argument("--horizon", help="horizon in ps or 'inf' (default: the model's)")
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("compare", help="trace distance between two trajectory CSVs")
    p.add_argument("traj_a")
    p.add_argument("traj_b")
    p.add_argument("--out", default="trace_distance.csv", help="output CSV path or directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit-bath", help="fit the bath response by exponentials")
    _add_model_options(p)
    p.add_argument("--t-end", type=float, help="fit window in ps (default 5)")
    p.add_argument("--points", type=int, help="samples (default 251)")
    p.add_argument("--n-real", type=int, help="terms for D (default 4)")
    p.add_argument("--n-imag", type=int, help="terms for D1 (default 4)")
    p.add_argument("--max-rms", type=float, help="allowed RMS residual relative to peak (default 0.02)")
    p.set_defaults(func=cmd_fit_bath)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"oqsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataMismatch as exc:
        print(f"oqsim: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, QuadratureError, StepSizeError, HEOMMemoryError, DegenerateSpectrumError, RuntimeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"oqsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
