"""Report rows and their CSV, JSON and SVG renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from pydantic import BaseModel, ConfigDict

UNSUPPORTED = "unsupported"

Cell = Union[float, str, None]


@dataclass
class Check:
    """``lo <= values[quantity] <= hi`` (either bound may be ``None``)."""

    quantity: str
    lo: Optional[float] = None
    hi: Optional[float] = None

    def evaluate(self, values: dict) -> Union[bool, str]:
        v = values.get(self.quantity)
        if v == UNSUPPORTED:
            return UNSUPPORTED
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            return False
        return (self.lo is None or v >= self.lo) and (self.hi is None or v <= self.hi)


@dataclass
class ReportRow:
    experiment: str
    row_id: str
    domain: str
    params: dict = field(default_factory=dict)
    function: str = ""
    p: Optional[float] = None
    n: Optional[int] = None
    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def flags(self) -> dict:
        return {name: chk.evaluate(self.values) for name, chk in self.checks.items()}

    def failed(self) -> list[str]:
        return [name for name, f in self.flags.items() if f is False]

    def to_json(self) -> dict:
        d = asdict(self)
        d["flags"] = self.flags
        return d


# fixed column order per experiment kind; values then flags
COLUMNS = {
    "equivalence": (
        ["I1", "I1_err", "In", "In_err", "pull", "pull_err", "I1_pullback", "B", "B_err", "Bphi", "Bphi_err",
         "B_ext", "Bphi_ext", "In/I1", "pull/In", "koebe", "B/I1", "Bphi/I1", "koebe_lo", "koebe_hi"],
        ["In/I1", "pull/In", "koebe", "B/I1", "Bphi/I1"],
    ),
    "equivalence-summary": (
        ["spread_In/I1", "spread_pull/In", "spread_koebe", "spread_B/I1", "spread_Bphi/I1"],
        ["spread_In/I1", "spread_pull/In", "spread_koebe", "spread_B/I1", "spread_Bphi/I1"],
    ),
    "characterization": (
        ["delta", "In", "In_err", "bound", "In/bound", "B", "len_2w", "len_4w", "len_ring",
         "ahlfors", "len_2w/delta", "len_ring/delta", "ball_bound", "md", "md_bound"],
        ["energy_bound", "ball", "ring", "md"],
    ),
    "diagnostics": (
        ["t_lo", "t_hi", "chord_arc", "ahlfors", "md_sup", "md_err", "expected_chord_arc", "chord_arc_rel_err"],
        ["chord_arc", "ahlfors", "md", "chord_arc_expected"],
    ),
    "diagnostics-summary": (
        ["chord_arc_growth", "ahlfors_growth"],
        ["chord_arc_growth", "ahlfors_growth"],
    ),
    "tail": (["eps", "delta", "integral", "integral_err", "ratio", "ratio_exact_err"], ["ratio", "exact"]),
    "tail-summary": (["eps", "spread"], ["spread"]),
    "sewing": (["exponent_fit", "exponent_expected", "exponent_err", "qs_constant"], ["exponent", "qs"]),
    "sewing-summary": (["qs_at_1", "qs_monotone"], ["qs_at_1", "qs_monotone"]),
    "carleson": (["sup", "sup_refined", "refine_change", "lusin_lhs", "lusin_lhs_err", "lusin_rhs", "lusin_slack"],
                 ["stable", "lusin"]),
    "energy": (["value", "quadrature_error", "truncation_tail"], ["finite"]),
    "boundary_norm": (["value", "error_estimate", "bphi", "bphi_err"], ["finite"]),
}

BASE_COLUMNS = ["experiment", "row_id", "domain", "params", "function", "p", "n"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_columns(rows: Iterable[ReportRow]) -> list[str]:
    kinds = []
    for r in rows:
        if r.experiment not in kinds:
            kinds.append(r.experiment)
    cols = list(BASE_COLUMNS)
    for kind in sorted(kinds, key=list(COLUMNS).index):
        values, flags = COLUMNS[kind]
        cols += [v for v in values if v not in cols]
        cols += [f"flag_{f}" for f in flags if f"flag_{f}" not in cols]
    return cols + ["notes"]


def to_csv(rows: list[ReportRow]) -> str:
    if not rows:
        raise ValueError("no rows to report")
    for r in rows:
        if r.experiment not in COLUMNS:
            raise ValueError(f"unknown experiment kind {r.experiment!r}")
        values, flags = COLUMNS[r.experiment]
        extra = (set(r.values) - set(values)) | (set(r.checks) - set(flags))
        extra |= {f"{k}_err" for k in r.errors} - set(values)
        if extra:
            raise ValueError(f"row {r.row_id} has undocumented columns {sorted(extra)}")
    cols = csv_columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        rec = {"experiment": r.experiment, "row_id": r.row_id, "domain": r.domain,
               "params": ";".join(f"{k}={_cell(v)}" for k, v in r.params.items()),
               "function": r.function, "p": r.p, "n": r.n, "notes": r.notes}
        rec.update(r.values)
        for k, e in r.errors.items():
            rec[f"{k}_err"] = e
        rec.update({f"flag_{k}": f for k, f in r.flags.items()})
        w.writerow([_cell(rec.get(c)) for c in cols])
    return buf.getvalue()


class _CheckModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    quantity: str
    lo: Optional[float] = None
    hi: Optional[float] = None


class _RowModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    experiment: str
    row_id: str
    domain: str
    params: dict[str, Union[float, int, str]]
    function: str
    p: Optional[float]
    n: Optional[int]
    values: dict[str, Union[float, str, None]]
    errors: dict[str, float]
    checks: dict[str, _CheckModel]
    notes: str
    flags: dict[str, Union[bool, str]]


def to_json(rows: list[ReportRow]) -> str:
    if not rows:
        raise ValueError("no rows to report")
    return json.dumps([r.to_json() for r in rows], indent=1, allow_nan=True) + "\n"


def rows_from_json(text: str) -> list[ReportRow]:
    """Parse and validate JSON output; stored flags must match recomputed ones."""
    out = []
    for item in json.loads(text):
        m = _RowModel.model_validate(item)
        row = ReportRow(m.experiment, m.row_id, m.domain, dict(m.params), m.function, m.p, m.n,
                        dict(m.values), dict(m.errors),
                        {k: Check(c.quantity, c.lo, c.hi) for k, c in m.checks.items()}, m.notes)
        if row.flags != m.flags:
            raise ValueError(f"row {row.row_id}: stored flags disagree with the row's values")
        out.append(row)
    return out


def to_svg(rows: list[ReportRow], quantity: str, param: str, *, width: int = 640, height: int = 400) -> str:
    """Line plot of ``quantity`` against sweep parameter ``param``, one polyline per (p, n)."""
    series: dict = {}
    for r in rows:
        v = r.values.get(quantity)
        if param not in r.params or not isinstance(v, (int, float)) or not math.isfinite(v):
            continue
        series.setdefault((r.p, r.n), []).append((float(r.params[param]), float(v)))
    if not series:
        raise ValueError(f"no rows carry both {param!r} and a numeric {quantity!r}")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - abs(y0) * 0.1 - 1e-12, y1 + abs(y1) * 0.1 + 1e-12
    m = 50

    def sx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def sy(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{param}</text>',
        f'<text x="14" y="{height / 2:.1f}" transform="rotate(-90 14 {height / 2:.1f})" '
        f'text-anchor="middle" font-size="12">{quantity}</text>',
        f'<text x="{m}" y="{height - m + 16}" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - m}" y="{height - m + 16}" font-size="10" text-anchor="end">{x1:.4g}</text>',
        f'<text x="{m - 4}" y="{height - m}" font-size="10" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{m - 4}" y="{m + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>',
    ]
    for k, (key, pts) in enumerate(sorted(series.items(), key=lambda kv: (kv[0][0] or 0, kv[0][1] or 0))):
        pts = sorted(pts)
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        col = colors[k % len(colors)]
        lines.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{path}">'
                     f'<title>p={key[0]} n={key[1]}</title></polyline>')
        lines.append(f'<text x="{width - m + 4}" y="{m + 14 * k}" font-size="10" fill="{col}">p={key[0]} n={key[1]}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_report(rows: list[ReportRow], fmt: str, path, *, quantity: str | None = None,
                param: str | None = None) -> Path:
    if not rows:
        raise ValueError("no rows to report")
    path = Path(path)
    if fmt == "csv":
        text = to_csv(rows)
    elif fmt == "json":
        text = to_json(rows)
    elif fmt == "svg":
        if quantity is None or param is None:
            raise ValueError("svg output needs a quantity and a sweep parameter")
        text = to_svg(rows, quantity, param)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc.strerror}") from exc
    return path
