"""Plot-ready CSV and JSON emission.

Floats are written with 17 significant digits so every value round-trips.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path


def json_text(obj, indent: int = 2) -> str:
    """JSON with 17-digit floats; NaN and infinities become null."""
    def enc(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{enc(str(k), depth + 1)}: {enc(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(enc(v, depth + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + enc(v, depth + 1) for v in seq) + "\n" + end + "]"
        if o is None:
            return "null"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return "null" if not math.isfinite(o) else format(float(o), ".17g")
        s = str(o)
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
    return enc(obj, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json_text(obj))
    return path


# --- module-specific tables ----------------------------------------------

LANDSCAPE_HEADER = ("kind", "location", "S", "Scurv")
RATES_HEADER = ("level", "k", "rate_left", "rate_right", "pi", "sigma_left", "sigma_right")
TRANSITION_HEADER = ("t", "from", "to", "prob")
STATIONARY_HEADER = ("state", "pi")
PROFILE_HEADER = ("regime", "p", "t", "x", "value")
PASSAGE_HEADER = ("eps", "l", "r", "x", "p_exit_right", "mean_tau", "bound")
SNAPSHOT_HEADER = ("t", "x", "u")
SUMMARY_HEADER = ("stat", "value", "se")


def landscape_rows(land):
    return land.critical_rows()


def rate_rows(hier):
    rows = []
    for lv in hier.levels:
        for k in range(lv.u):
            rows.append((lv.q, k, lv.rate_left[k], lv.rate_right[k], lv.pi[k],
                         lv.sigma_between(k - 1), lv.sigma_between(k)))
    return rows


def hierarchy_tree(hier) -> dict:
    """Levels, their sets and member minima, rates and heights."""
    land = hier.land
    levels = []
    for lv in hier.levels:
        sets = []
        for k in range(lv.u):
            mem = lv.members(k)
            sets.append({
                "k": k,
                "minima": [land.min_location(g) for g in mem],
                "minimum_indices": list(mem),
                "depth": lv.depth[k],
                "pi": lv.pi[k],
                "h_minus": lv.h_minus[k],
                "h_plus": lv.h_plus[k],
                "rate_left": lv.rate_left[k],
                "rate_right": lv.rate_right[k],
                "saddles_right": [land.saddle_location(j) for j in lv.saddles(k)],
                "sigma_right": lv.sigma[k],
            })
        levels.append({
            "q": lv.q, "H": lv.H, "u": lv.u, "n": lv.n, "j": lv.j_anchor,
            "closed_classes": [list(c) for c in lv.structure.classes],
            "transient_minima": [land.min_location(g) for g in lv.transient],
            "sets": sets,
        })
    return {"N": land.N, "Q": hier.Q, "tilt": land.tilt, "shift": float(land.shift),
            "final_reversible": hier.final_reversible, "levels": levels}


def transition_rows(win):
    rows = []
    for i, t in enumerate(win.times):
        for s, p in zip(win.states, win.probs[i]):
            rows.append((t, win.center, int(s), p))
    return rows


def stationary_rows(ring):
    return [(i, p) for i, p in enumerate(ring.stationary)]


def snapshot_rows(sol):
    return [(t, x, u) for t, row in zip(sol.times, sol.U) for x, u in zip(sol.x, row)]
