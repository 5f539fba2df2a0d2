"""Report containers and their CSV/JSON serialisation.

CSV floats use 17 significant digits so that a round trip is exact and the
same report always produces the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields, is_dataclass

import numpy as np


@dataclass
class RatioReport:
    """Log-ratios numeric/envelope over a grid.

    ``entries`` holds ``(point, numeric, envelope, log_ratio)`` tuples.
    ``verdict`` is ``"bounded"`` when every ratio is finite and ``"violated"``
    otherwise, with ``violation`` naming the first offending point.
    """

    entries: list
    fitted: object
    spread: float
    verdict: str
    violation: tuple | None = None
    extras: dict | None = None

    @classmethod
    def from_entries(cls, entries, fitted, extras=None):
        logs = np.array([e[3] for e in entries], dtype=float)
        bad = [e for e in entries if not np.isfinite(e[3])]
        if bad:
            return cls(entries, fitted, math.inf, "violated", bad[0][0], extras)
        spread = float(logs.max() - logs.min()) if logs.size else 0.0
        return cls(entries, fitted, spread, "bounded", None, extras)

    @property
    def log_ratios(self) -> np.ndarray:
        return np.array([e[3] for e in self.entries], dtype=float)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _point_str(point) -> str:
    parts = []
    for item in point:
        if isinstance(item, (tuple, list, np.ndarray)):
            parts.append(" ".join(fmt(v) for v in np.ravel(item)))
        else:
            parts.append(fmt(item))
    return ";".join(parts)


def _constants_dict(c) -> dict:
    if c is None:
        return {}
    if is_dataclass(c):
        return {f.name: getattr(c, f.name) for f in fields(c)}
    return dict(c)


def ratio_report_csv(report: RatioReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", "numeric", "envelope", "log_ratio"])
    for point, num, env, lr in report.entries:
        w.writerow([_point_str(point), fmt(num), fmt(env), fmt(lr)])
    consts = _constants_dict(report.fitted)
    w.writerow(["#fitted"] + [f"{k}={fmt(v)}" for k, v in consts.items()]
               + [f"spread={fmt(report.spread)}", f"verdict={report.verdict}"])
    return buf.getvalue()


def estimate_csv(rows) -> str:
    """Rows of (inputs dict, McEstimate) -> CSV with inputs first, then the estimate fields."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = list(rows)
    keys = list(rows[0][0].keys()) if rows else []
    w.writerow(keys + ["mean", "stderr", "n", "zero_weight_frac"])
    for inputs, est in rows:
        w.writerow([fmt(inputs[k]) if not isinstance(inputs[k], (list, tuple, np.ndarray))
                    else " ".join(fmt(v) for v in np.ravel(inputs[k])) for k in keys]
                   + [fmt(est.mean), fmt(est.stderr), fmt(est.n), fmt(est.zero_weight_frac)])
    return buf.getvalue()


def table_csv(columns: dict) -> str:
    """Column-oriented table (e.g. r and u of a PDE snapshot) to CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(names)
    for row in zip(*(np.ravel(columns[k]) for k in names)):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ratio_report_json(report: RatioReport, experiment: str = "", regime: str = "") -> str:
    doc = {
        "experiment": experiment,
        "regime": regime,
        "fitted": _constants_dict(report.fitted),
        "spread": report.spread,
        "verdict": report.verdict,
        "violation": report.violation,
        "rows": [
            {"point": p, "numeric": n, "envelope": e, "log_ratio": lr}
            for p, n, e, lr in report.entries
        ],
        "extras": report.extras or {},
    }
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
