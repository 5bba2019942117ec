"""File emission: trajectory/state/profile CSVs, report and blow-up JSON.

Floats are written as shortest round-trip decimals (``repr``), writes go
through a temp-file rename so partially written outputs never appear, and
nothing time- or host-dependent is emitted (re-running a command with the
same inputs reproduces byte-identical files).
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Optional

from dyadicflow.analysis import BlowupDiagnostics, InvariantReport
from dyadicflow.integrate import Trajectory
from dyadicflow.model import DyadicState, slopes, weighted_slopes

TRAJECTORY_HEADER = [
    "t", "a_0", "sup_a", "xs_norm", "J", "max_ratio", "front_index",
    "holder_half", "termination",
]
STATE_HEADER = ["k", "a_k", "b_k", "b_ks"]
PROFILE_HEADER = ["x", "y"]
SCAN_HEADER = ["alpha", "K", "max_norm", "escape_time"]


def _f(x: float) -> str:
    return repr(float(x))


def _atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """One row per sample with the scalar diagnostics and the termination."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(TRAJECTORY_HEADER)
    term = traj.termination.value
    for s in traj.samples:
        d = s.diag
        w.writerow(
            [_f(s.t), _f(d.a0), _f(d.sup_a), _f(d.xs_norm), _f(d.j_value),
             _f(d.max_ratio), d.front_index, _f(d.holder_half), term]
        )
    return _atomic_write_text(path, buf.getvalue())


def read_trajectory_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "t": float(row["t"]),
                    "a_0": float(row["a_0"]),
                    "sup_a": float(row["sup_a"]),
                    "xs_norm": float(row["xs_norm"]),
                    "J": float(row["J"]),
                    "max_ratio": float(row["max_ratio"]),
                    "front_index": int(row["front_index"]),
                    "holder_half": float(row["holder_half"]),
                    "termination": row["termination"],
                }
            )
    return rows


def write_state_csv(state: DyadicState, s: float, path) -> Path:
    """Dump ``k, a_k, b_k, b_{k,s}`` for every stored index."""
    b = slopes(state).b
    bs = weighted_slopes(state, s).bs
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(STATE_HEADER)
    for k in range(state.k + 1):
        w.writerow([k, _f(state.a[k]), _f(b[k]), _f(bs[k])])
    return _atomic_write_text(path, buf.getvalue())


def read_state_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [
            {"k": int(r["k"]), "a_k": float(r["a_k"]), "b_k": float(r["b_k"]),
             "b_ks": float(r["b_ks"])}
            for r in csv.DictReader(fh)
        ]


def write_profile_csv(points, path) -> Path:
    """Profile reconstruction points as ``x,y`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(PROFILE_HEADER)
    for x, y in points:
        w.writerow([_f(x), _f(y)])
    return _atomic_write_text(path, buf.getvalue())


def read_profile_csv(path) -> list[tuple[float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [(float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)]


def write_series_csv(rows, header, path) -> Path:
    """Two-column scalar series (e.g. ``t, xs_norm``) as CSV."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(list(header))
    for x, y in rows:
        w.writerow([_f(x), _f(y)])
    return _atomic_write_text(path, buf.getvalue())


def read_series_csv(path) -> list[tuple[float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(float(a), float(b)) for a, b in reader]


def _report_obj(rep: InvariantReport) -> dict:
    t, idx = rep.worst_location
    return {
        "name": rep.name,
        "passed": rep.passed,
        "worst_margin": rep.worst_margin,
        "worst_location": [t, idx],
        "tolerance": rep.tolerance,
    }


def write_reports_json(reports, path) -> Path:
    text = json.dumps([_report_obj(r) for r in reports], indent=2) + "\n"
    return _atomic_write_text(path, text)


def read_reports_json(path) -> list[InvariantReport]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    out = []
    for obj in data:
        t, idx = obj["worst_location"]
        out.append(
            InvariantReport(
                name=obj["name"],
                passed=obj["passed"],
                worst_margin=obj["worst_margin"],
                worst_location=(t, idx),
                tolerance=obj["tolerance"],
            )
        )
    return out


def write_blowup_json(diag: BlowupDiagnostics, path) -> Path:
    obj = {
        "delta": diag.delta,
        "j_series": [[t, j] for t, j in diag.j_series],
        "riccati_t": diag.riccati_t,
        "front_series": [[t, k] for t, k in diag.front_series],
        "escape_time": diag.escape_time,
    }
    return _atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def write_scan_csv(rows, path) -> Path:
    """Sweep summary rows ``(alpha, K, max_norm, escape_time-or-None)``."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(SCAN_HEADER)
    for alpha, kk, max_norm, esc in rows:
        w.writerow([_f(alpha), kk, _f(max_norm), "" if esc is None else _f(esc)])
    return _atomic_write_text(path, buf.getvalue())


def read_scan_csv(path) -> list[tuple[float, int, float, Optional[float]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [
            (
                float(r["alpha"]),
                int(r["K"]),
                float(r["max_norm"]),
                float(r["escape_time"]) if r["escape_time"] != "" else None,
            )
            for r in csv.DictReader(fh)
        ]


def save_outputs(traj: Trajectory, reports, diagnostics, prefix) -> dict[str, Path]:
    """Write the full output set for one run under a path prefix."""
    prefix = str(prefix)
    final = traj.final_state
    from dyadicflow.scenarios import profile_reconstruction

    paths = {
        "trajectory": write_trajectory_csv(traj, prefix + "_trajectory.csv"),
        "state": write_state_csv(final, traj.params.norm_s, prefix + "_state.csv"),
        "profile": write_profile_csv(profile_reconstruction(final), prefix + "_profile.csv"),
        "reports": write_reports_json(reports, prefix + "_reports.json"),
    }
    if diagnostics is not None:
        paths["blowup"] = write_blowup_json(diagnostics, prefix + "_blowup.json")
    return paths
