"""Command-line front end.

Exit codes: 0 success, 1 computation error, 2 configuration error,
3 enumeration capacity guard tripped.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Optional

from . import __version__
from .bounds import (
    BoundError,
    bound_report,
    closed_form_B_bound,
    closed_form_hinf,
    closed_form_hinf_Pk,
    optimize_phi,
)
from .coding import DEFAULT_CONSTANTS, CodingError, empirical_bound, run, schedule, time_series, verify_budgets
from .lattice import CapacityError, GeometryError, Lattice, ToleranceConfig, classify, cusp_witness, height
from .serialize import (
    FormatError,
    bound_rows_csv,
    bound_to_json,
    budgets_to_json,
    classification_to_json,
    coding_to_json,
    dumps,
    lattice_from_json,
    lattice_to_json,
    lp_to_json,
    parse_flow,
    parse_jumps,
    parse_phi,
    q,
    series_csv,
)
from .weyl import WeylError

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3

# used by classify when no thresholds are given
DEFAULT_DELTA, DEFAULT_DELTA_PRIME = 0.01, 0.2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

TOLERANCE_KEYS = ("delta", "delta_prime", "r", "eta0", "eps0", "precision", "root_tol", "max_nodes")


def _key_line(text: str, key: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def load_config(path: str, known: set) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    out = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{_key_line(text, k)}: unknown key {k!r}")
        out[key] = v
    out["_text"] = text
    out["_path"] = path
    return out


def _merge(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    if not getattr(args, "config", None):
        args._where = lambda key: "--" + key.replace("_", "-")
        return args
    known = {a.dest for a in parser._actions} - {"help", "config", "command"}
    cfg = load_config(args.config, known)
    text, path = cfg.pop("_text"), cfg.pop("_path")
    for k, v in cfg.items():
        if getattr(args, k, None) in (None, False, []):
            setattr(args, k, v)
    args._where = lambda key: (f"{path}:{_key_line(text, key) or _key_line(text, key.replace('_', '-'))}"
                               if key in cfg else "--" + key.replace("_", "-"))
    return args


def _checked(args, key, fn):
    try:
        return fn(getattr(args, key))
    except (FormatError, WeylError, GeometryError, ValueError, TypeError) as e:
        raise ConfigError(f"{args._where(key)}: {e}") from None


def _flow(args):
    if args.flow is None:
        raise ConfigError("--flow is required")
    return _checked(args, "flow", parse_flow)


def _tolerances(args, d: int, need_thresholds: bool = True, defaults: tuple = (None, None)) -> ToleranceConfig:
    kw = {}
    for key in TOLERANCE_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            try:
                kw[key] = int(v) if key in ("precision", "max_nodes") else float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{args._where(key)}: not a number: {v!r}") from None
    if "delta" not in kw and defaults[0] is not None:
        kw["delta"] = defaults[0]
        kw.setdefault("delta_prime", defaults[1])
    if "delta_prime" not in kw and "delta" in kw:
        kw["delta_prime"], r = schedule(kw["delta"], d)
        kw.setdefault("r", r)
    if need_thresholds and kw.get("delta") is None:
        raise ConfigError("--delta is required")
    try:
        cfg = ToleranceConfig(**kw)
        if cfg.delta is not None:
            cfg.check_thresholds(d)
    except GeometryError as e:
        keys = [k for k in ("delta", "delta_prime", "r", "eta0") if k in kw]
        where = ", ".join(args._where(k) for k in keys) or "tolerances"
        raise ConfigError(f"{where}: {e}") from None
    return cfg


def _read_lattices(paths) -> list:
    """[(source, Lattice | error message)]."""
    out = []
    if isinstance(paths, str):
        paths = [paths]
    for p in paths or []:
        try:
            data = json.loads(Path(p).read_text())
        except OSError as e:
            raise ConfigError(f"{p}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}:{e.lineno}:{e.colno}: {e.msg}") from None
        items = data if isinstance(data, list) else [data]
        for k, obj in enumerate(items):
            out.append((f"{p}#{k}", _lattice_or_error(obj)))
    return out


def _lattice_or_error(obj):
    try:
        return lattice_from_json(obj)
    except GeometryError as e:
        msg = str(e)
        return "determinant ≠ ±1" if "unimodular" in msg else msg
    except (FormatError, ValueError, TypeError) as e:
        return str(e)


def _emit(args, name: str, text: str) -> None:
    if args.out:
        path = Path(f"{args.out}.{name}")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _meta(args) -> dict:
    return {} if args.no_meta else {"meta": {"version": __version__, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
                                             "command": args.command}}


# ---------------------------------------------------------------- commands

def cmd_bound(args) -> int:
    flow = _flow(args)
    phi = _checked(args, "phi", lambda s: parse_phi(s, flow.d)) if args.phi is not None else None
    rep = bound_report(flow, phi, optimize="cusp" if args.optimize else None)
    out = bound_to_json(rep)
    if args.closed_forms:
        hinf = closed_form_hinf(flow)
        pk = closed_form_hinf_Pk(flow, 1)
        bb = closed_form_B_bound(flow)
        lp_val = rep.lp.value if rep.lp is not None else optimize_phi(flow).value
        out["closed_forms"] = {"hinf": q(hinf), "hinf_P1": q(pk), "B_bound": q(bb.value), "B_sharp": bb.sharp,
                               "lp_value": q(lp_val), "agree": lp_val == hinf == pk}
    out.update(_meta(args))
    _emit(args, "json", dumps(out))
    if args.out:
        _emit(args, "csv", bound_rows_csv(rep))
    return EXIT_OK


def cmd_optimize(args) -> int:
    flow = _flow(args)
    scope = "cusp" if args.scope in (None, "cusp") else _checked(args, "scope", lambda s: parse_jumps(s, flow.d))
    out = lp_to_json(optimize_phi(flow, scope))
    out["flow"] = [q(a) for a in flow.alpha]
    out.update(_meta(args))
    _emit(args, "json", dumps(out))
    return EXIT_OK


def cmd_classify(args) -> int:
    flow = _flow(args)
    cfg = _tolerances(args, flow.d, defaults=(DEFAULT_DELTA, DEFAULT_DELTA_PRIME))
    items = _read_lattices(args.lattice)
    if args.witness:
        P = _checked(args, "witness", lambda w: parse_jumps(w[0], flow.d))
        n = _checked(args, "witness", lambda w: int(w[1]))
        items.append((f"witness {list(P.jumps)} {n}", cusp_witness(P, n, cfg.precision)))
    if not items:
        raise ConfigError("nothing to classify: give --lattice or --witness")
    rows, failures = [], 0
    for k, (src, x) in enumerate(items):
        row = {"index": k, "source": src}
        if isinstance(x, str):
            row["error"] = x
            failures += 1
        elif x.d != flow.d:
            row["error"] = f"dimension {x.d} does not match flow dimension {flow.d}"
            failures += 1
        else:
            try:
                c = classify(x, flow, cfg)
                row.update(classification_to_json(c, [float(v) for v in height(x)]))
            except CapacityError:
                raise
            except GeometryError as e:
                row["error"] = str(e)
                failures += 1
        rows.append(row)
    out = {"flow": [q(a) for a in flow.alpha], "delta": cfg.delta, "delta_prime": cfg.delta_prime, "rows": rows}
    out.update(_meta(args))
    _emit(args, "json", dumps(out))
    return EXIT_COMPUTE if failures == len(rows) else EXIT_OK


def _single_lattice(args, d: int) -> Lattice:
    items = _read_lattices(args.lattice)
    if not items:
        return Lattice.standard(d)
    if len(items) != 1:
        raise ConfigError("code takes exactly one lattice")
    src, x = items[0]
    if isinstance(x, str):
        raise ConfigError(f"{src}: {x}")
    if x.d != d:
        raise ConfigError(f"{src}: dimension {x.d} does not match flow dimension {d}")
    return x


def _constants(args) -> dict:
    c = dict(DEFAULT_CONSTANTS)
    if args.constants:
        try:
            data = json.loads(Path(args.constants).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{args.constants}: {e}") from None
        c.update({k: float(data[k]) for k in c if k in data})
    return c


def cmd_code(args) -> int:
    flow = _flow(args)
    cfg = _tolerances(args, flow.d)
    x = _single_lattice(args, flow.d)
    if args.N is None:
        raise ConfigError("--N is required")
    N = _checked(args, "N", int)
    try:
        r = run(x, flow, cfg, N)
    except CodingError as e:
        if "N" in str(e) or "delta" in str(e):
            raise ConfigError(str(e)) from None
        raise
    consts = _constants(args)
    rep = verify_budgets(r, consts)
    coding_json = coding_to_json(r.coding, r.partition.params)
    coding_json.update(_meta(args))
    budgets = budgets_to_json(rep, consts)
    budgets.update(_meta(args))
    series = series_csv(time_series(r), flow.d)
    if args.out:
        _emit(args, "coding.json", dumps(coding_json))
        _emit(args, "budgets.json", dumps(budgets))
        _emit(args, "series.csv", series)
    else:
        sys.stdout.write(dumps({"coding": coding_json, "budgets": budgets}))
    return EXIT_OK


def cmd_witness(args) -> int:
    if args.d is None or args.P is None or args.n is None:
        raise ConfigError("witness needs --d, --P and --n")
    d = _checked(args, "d", int)
    P = _checked(args, "P", lambda s: parse_jumps(s, d))
    n = _checked(args, "n", int)
    try:
        x = cusp_witness(P, n)
    except GeometryError as e:
        raise ConfigError(str(e)) from None
    out = lattice_to_json(x)
    out.update(_meta(args))
    _emit(args, "json", dumps(out))
    return EXIT_OK


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = ["job", "status", "error", "d", "flow", "lattice", "log_delta", "delta_prime", "r", "N",
                 "ratio_i", "ratio_ii", "ratio_iii", "ratio_iv", "pass_i", "pass_ii", "pass_iii", "pass_iv",
                 "small_N", "intervals", "empirical_bound"]


def sweep_job(job: dict) -> dict:
    """One isolated (flow, lattice, delta) run; never raises."""
    row = {k: "" for k in SWEEP_COLUMNS}
    row.update(job=job["job"], flow=" ".join(job["flow"]), lattice=job["lattice_name"], log_delta=job["log_delta"])
    try:
        flow = parse_flow(job["flow"])
        x = lattice_from_json(job["lattice"])
        row["d"] = flow.d
        delta = math.exp(job["log_delta"])
        dp, r = schedule(delta, flow.d)
        cfg = ToleranceConfig(delta=delta, delta_prime=dp, r=r, precision=job["precision"])
        N = int(round(job["N_factor"] * abs(job["log_delta"])))
        row.update(delta_prime=repr(dp), r=repr(r), N=N)
        res = run(x, flow, cfg, N)
        rep = verify_budgets(res, job["constants"])
        for k in ("i", "ii", "iii", "iv"):
            row[f"ratio_{k}"] = repr(rep.ratios[k])
            row[f"pass_{k}"] = rep.passed[k]
        row["small_N"] = rep.small_N
        row["intervals"] = len(res.partition.J_prime)
        phi = parse_phi(job["phi"], flow.d) if job.get("phi") else None
        row["empirical_bound"] = q(empirical_bound(x, flow, cfg, phi, N, res.traj).value)
        row["status"] = "ok"
    except CapacityError as e:
        row.update(status="capacity", error=str(e))
    except Exception as e:  # per-job isolation
        row.update(status="failed", error=f"{type(e).__name__}: {e}")
    return row


def _sweep_jobs(args) -> list:
    flows = args.flows or []
    if isinstance(flows, str):
        flows = [f for f in flows.split(";") if f.strip()]
    logs = args.log_deltas or []
    if isinstance(logs, str):
        logs = [v for v in logs.split(",") if v.strip()]
    try:
        logs = [float(v) for v in logs]
    except ValueError:
        raise ConfigError(f"{args._where('log_deltas')}: not a list of numbers") from None
    if not flows or not logs:
        raise ConfigError("empty sweep grid: need at least one flow and one log_delta")
    if any(v >= 0 for v in logs):
        raise ConfigError(f"{args._where('log_deltas')}: log delta must be negative")
    parsed = [_checked(args, "flows", lambda f, f0=f: parse_flow(f0)) for f in flows]
    lattices = []
    for item in args.lattice or []:
        for src, x in _read_lattices([item]):
            if isinstance(x, str):
                raise ConfigError(f"{src}: {x}")
            lattices.append((src, x))
    consts = _constants(args)
    precision = int(args.precision) if args.precision is not None else None
    jobs = []
    for flow in parsed:
        cands = [(s, x) for s, x in lattices if x.d == flow.d] or [(f"standard{flow.d}", Lattice.standard(flow.d))]
        for src, x in cands:
            for ld in logs:
                jobs.append({"job": len(jobs), "flow": [q(a) for a in flow.alpha], "lattice": lattice_to_json(x),
                             "lattice_name": src, "log_delta": ld, "N_factor": float(args.N_factor or 10),
                             "constants": consts, "phi": args.phi,
                             "precision": precision or ToleranceConfig().precision})
    return jobs


def cmd_sweep(args) -> int:
    jobs = _sweep_jobs(args)
    workers = int(args.workers or 1)
    rows = []
    if workers <= 1:
        rows = [sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(sweep_job, j) for j in jobs]
            rows = [f.result() for f in as_completed(futs)]
    if args.sorted:
        rows.sort(key=lambda r: r["job"])
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    _emit(args, "csv", buf.getvalue())
    failed = sorted((r["job"], r["status"], r["error"]) for r in rows if r["status"] != "ok")
    summary = {"jobs": len(rows), "ok": len(rows) - len(failed),
               "failures": [{"job": j, "status": s, "error": e} for j, s, e in failed]}
    sys.stderr.write(dumps(summary))
    return EXIT_OK if len(failed) < len(rows) else EXIT_COMPUTE


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, tolerances: bool = False) -> None:
    p.add_argument("--config", help="JSON file whose keys mirror the long options")
    p.add_argument("--out", help="output path prefix; stdout when absent")
    p.add_argument("--no-meta", action="store_true", help="omit timestamps and version metadata")
    if tolerances:
        p.add_argument("--delta", type=float, help="cusp threshold")
        p.add_argument("--delta-prime", type=float, help="outer threshold, above delta")
        p.add_argument("--r", type=float, help="level ratio in (0, 1)")
        p.add_argument("--eta0", type=float, help="gap threshold for the flag")
        p.add_argument("--eps0", type=float, help="orientation slack")
        p.add_argument("--root-tol", type=float, help="bisection tolerance for crossings")
        p.add_argument("--max-nodes", type=int, help="enumeration node cap (exit 3 when hit)")
        p.add_argument("--precision", type=int, help="working precision in bits (default: $CUSPLAB_PRECISION or 128)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cusplab", description="Entropy-in-the-cusp bounds and trajectory coding")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="entropy bound report for a flow")
    _common(p)
    p.add_argument("--flow", help="diagonal entries, e.g. 1/2,-1/2")
    p.add_argument("--phi", help="functional coefficients; optimized when absent")
    p.add_argument("--optimize", action="store_true", help="include the LP optimum")
    p.add_argument("--closed-forms", action="store_true", help="compare with the closed forms")

    p = sub.add_parser("optimize", help="optimal functional by exact LP")
    _common(p)
    p.add_argument("--flow", help="diagonal entries, e.g. 1/2,-1/2")
    p.add_argument("--scope", help="'cusp' (default) or a jump set")

    p = sub.add_parser("classify", help="cusp region of lattices")
    _common(p, tolerances=True)
    p.add_argument("--flow", help="diagonal entries, e.g. 1/2,-1/2")
    p.add_argument("--lattice", action="append", help="JSON lattice file (repeatable)")
    p.add_argument("--witness", nargs=2, metavar=("P", "n"), help="classify the cusp witness for jump set P")

    p = sub.add_parser("code", help="code one trajectory and check the budgets")
    _common(p, tolerances=True)
    p.add_argument("--flow", help="diagonal entries, e.g. 1/2,-1/2")
    p.add_argument("--lattice", action="append", help="JSON lattice file; standard lattice when absent")
    p.add_argument("--N", help="window half-length in flow time")
    p.add_argument("--constants", help="JSON file with K1..K4")

    p = sub.add_parser("sweep", help="parallel batch of coding runs")
    _common(p)
    p.add_argument("--flows", help="';'-separated flows")
    p.add_argument("--lattice", action="append", help="JSON lattice file; standard lattice when absent")
    p.add_argument("--log-deltas", help="comma-separated log delta values")
    p.add_argument("--N-factor", dest="N_factor", type=float, help="N = factor * |log delta| (default 10)")
    p.add_argument("--phi", help="functional coefficients; optimized when absent")
    p.add_argument("--workers", type=int, help="process count (default 1)")
    p.add_argument("--precision", type=int, help="working precision in bits")
    p.add_argument("--constants", help="JSON file with K1..K4")
    p.add_argument("--sorted", action="store_true", help="order rows by job id")

    p = sub.add_parser("witness", help="diagonal lattice deep in the cusp of P")
    _common(p)
    p.add_argument("--d", help="dimension")
    p.add_argument("--P", help="jump set, e.g. {1,3}")
    p.add_argument("--n", help="depth parameter of the witness")
    return ap


COMMANDS = {"bound": cmd_bound, "optimize": cmd_optimize, "classify": cmd_classify, "code": cmd_code,
            "sweep": cmd_sweep, "witness": cmd_witness}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    try:
        args = _merge(args, sp)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        sys.stderr.write(f"cusplab: config error: {e}\n")
        return EXIT_CONFIG
    except CapacityError as e:
        sys.stderr.write(f"cusplab: capacity guard: {e}\n")
        return EXIT_CAPACITY
    except (GeometryError, CodingError, BoundError, WeylError, ArithmeticError) as e:
        sys.stderr.write(f"cusplab: {e}\n")
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
