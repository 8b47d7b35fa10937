"""JSON/CSV encoding of flows, lattices and reports.

Rationals travel as "p/q" strings, reals as JSON numbers (shortest repr,
which round-trips a double exactly) and high-precision reals as decimal
strings together with their precision in bits.
"""
from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from typing import Any, Optional

import mpmath

from .bounds import BoundReport, LPSolution
from .coding import BudgetReport, Coding
from .lattice import Classification, Lattice, default_precision
from .weyl import DiagonalFlow, LinearFunctional, Orientation, ParabolicSubgroup, orientation


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- scalars

def q(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(s) -> Fraction:
    if isinstance(s, bool):
        raise FormatError(f"not a rational: {s!r}")
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(str(s))
    try:
        return Fraction(str(s).strip())
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"not a rational: {s!r}") from None


def parse_vector(s) -> tuple:
    if isinstance(s, str):
        s = s.strip().strip("()[]")
        parts = [p for p in s.replace(";", ",").split(",") if p.strip()]
    else:
        parts = list(s)
    if not parts:
        raise FormatError("empty vector")
    return tuple(parse_rational(p) for p in parts)


def parse_flow(s) -> DiagonalFlow:
    v = parse_vector(s)
    if len(v) < 2:
        raise FormatError("a flow needs at least two entries")
    if sum(v) != 0:
        raise FormatError(f"flow entries must sum to zero, got {q(sum(v))}")
    return DiagonalFlow(len(v), v)


def parse_phi(s, d: int) -> LinearFunctional:
    v = parse_vector(s)
    if len(v) != d:
        raise FormatError(f"phi has {len(v)} entries, flow has {d}")
    return LinearFunctional(d, v)


def parse_jumps(s, d: int) -> ParabolicSubgroup:
    """'{1,3}', '[1, 3]', '1,3', 'G' or 'B'."""
    if isinstance(s, str):
        t = s.strip()
        if t.upper() == "G":
            return ParabolicSubgroup.G(d)
        if t.upper() == "B":
            return ParabolicSubgroup.B(d)
        t = t.strip("{}[]() ")
        items = [p for p in t.split(",") if p.strip()]
    else:
        items = list(s)
    try:
        return ParabolicSubgroup(d, tuple(int(p) for p in items))
    except ValueError as e:
        raise FormatError(f"bad parabolic {s!r}: {e}") from None


def real(x) -> Any:
    """JSON value for a real: float repr, or a decimal string for mpf."""
    if isinstance(x, mpmath.mpf):
        return {"decimal": mpmath.nstr(x, mpmath.mp.dps, min_fixed=-math.inf, max_fixed=math.inf),
                "precision": mpmath.mp.prec}
    return float(x)


# ---------------------------------------------------------------- lattices

def lattice_to_json(x: Lattice) -> dict:
    """{"d": d, "basis": [column_1, ..., column_d]}."""
    cols = x.columns()
    enc = (lambda v: q(v)) if x.exact else (lambda v: mpmath.nstr(v, 60))
    return {"d": x.d, "basis": [[enc(v) for v in c] for c in cols]}


def lattice_from_json(obj) -> Lattice:
    if not isinstance(obj, dict) or "basis" not in obj:
        raise FormatError('lattice must be an object with "d" and "basis"')
    cols = obj["basis"]
    d = obj.get("d", len(cols))
    if not isinstance(cols, list) or len(cols) != d or any(not isinstance(c, list) or len(c) != d for c in cols):
        raise FormatError(f"basis must be {d} columns of length {d}")
    vals = []
    for c in cols:
        row = []
        for v in c:
            # "p/q" and integers are exact; decimal strings are high-precision reals
            if isinstance(v, int) or (isinstance(v, str) and not any(ch in v for ch in ".eE")):
                row.append(parse_rational(v))
                continue
            try:
                with mpmath.workprec(default_precision() + 64):
                    row.append(+mpmath.mpf(v))
            except (ValueError, TypeError):
                raise FormatError(f"bad basis entry {v!r}") from None
        vals.append(row)
    return Lattice.from_columns(vals)


# ---------------------------------------------------------------- reports

def orientation_to_json(w: Optional[Orientation]) -> Optional[dict]:
    if w is None:
        return None
    return {"P": list(w.parabolic.jumps), "rep": list(w.rep)}


def orientation_from_json(obj, flow: DiagonalFlow) -> Optional[Orientation]:
    if obj is None:
        return None
    return orientation(flow, ParabolicSubgroup(flow.d, tuple(obj["P"])), tuple(obj["rep"]))


def lp_to_json(lp: LPSolution) -> dict:
    return {"phi": [q(c) for c in lp.phi.coeffs], "value": q(lp.value), "status": lp.status, "pivots": lp.pivots}


def bound_to_json(rep: BoundReport) -> dict:
    out = {
        "flow": [q(a) for a in rep.flow.alpha],
        "phi": [q(c) for c in rep.phi.coeffs],
        "hb_cusp": q(rep.hb_cusp),
        "hb_P": [{"P": list(j), "value": q(v)} for j, v in sorted(rep.hb_P.items())],
        "rows": [{"P": list(r.parabolic.jumps), "w": list(r.orientation.rep), "entropy": q(r.entropy),
                  "projection": [q(v) for v in r.projection], "value": q(r.value)} for r in rep.rows],
    }
    if rep.lp is not None:
        out["lp"] = lp_to_json(rep.lp)
    return out


def bound_rows_csv(rep: BoundReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["P", "w", "entropy", "projection", "value"])
    for r in rep.rows:
        w.writerow([_jumps(r.parabolic.jumps), "".join(map(str, r.orientation.rep)), q(r.entropy),
                    " ".join(q(v) for v in r.projection), q(r.value)])
    return buf.getvalue()


def _jumps(j) -> str:
    return "{" + ",".join(map(str, j)) + "}"


def classification_to_json(c: Classification, heights: list) -> dict:
    return {"P": list(c.P.jumps), "Q": list(c.Q.jumps), "orientation": orientation_to_json(c.orientation),
            "eta": [real(v) for v in c.eta], "minima": [real(v) for v in c.minima],
            "height": [real(v) for v in heights]}


def coding_to_json(code: Coding, params: dict) -> dict:
    return {"N": code.N, "params": {k: real(v) for k, v in sorted(params.items())}, "runs": code.runs()}


def coding_from_json(obj, flow: DiagonalFlow) -> Coding:
    values = {}
    for run in obj["runs"]:
        P = ParabolicSubgroup(flow.d, tuple(run["P"]))
        w = None if run["w"] is None else orientation(flow, P, tuple(run["w"]))
        for n in range(run["start"], run["end"] + 1):
            values[n] = (P, w)
    N = obj["N"]
    if set(values) != set(range(-N, N + 1)):
        raise FormatError("coding runs do not cover -N..N")
    return Coding(N, values)


def budgets_to_json(rep: BudgetReport, constants: dict) -> dict:
    return {"ratios": {k: real(v) for k, v in rep.ratios.items()},
            "constants": {k: real(v) for k, v in sorted(constants.items())},
            "passed": rep.passed, "small_N": rep.small_N, "window_clipped": rep.clipped,
            "raw": {k: real(v) if isinstance(v, float) else v for k, v in rep.raw.items()}}


def series_csv(rows: list, d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"lambda_{i}" for i in range(1, d + 1)] + [f"eta_{i}" for i in range(1, d)] + ["region"])
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:-1]] + [r[-1]])
    return buf.getvalue()


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
