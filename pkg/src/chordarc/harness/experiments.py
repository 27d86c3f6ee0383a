"""Experiment runners: each turns a validated config into report rows."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from ..analysis import (BoundaryFunction, HarmonicTestFunction, PoleTerm, bp_phi_norm, boundary_norm_curve,
                        carleson_box, interior_energy, lusin_average, parse_test_function, pullback_energy,
                        tail_integral)
from ..conformal import Domain, SewingMap, parse_domain, quasisymmetric_constant
from ..errors import ChordArcError, UnsupportedDomainError
from ..geometry import (CurveWindow, Line, SectorBoundary, ahlfors_constant, ball_length, diagnose,
                        meyer_david_ratio)
from .config import ExperimentConfig
from .report import UNSUPPORTED, Check, ReportRow

RATIOS = ("In/I1", "pull/In", "koebe", "B/I1", "Bphi/I1")


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _flatten(groups):
    return [row for g in groups for row in g]


def _guard(fn, *args, **kw):
    """``(value, error, note)`` with unsupported combinations and failures folded in."""
    try:
        r = fn(*args, **kw)
    except UnsupportedDomainError as exc:
        return UNSUPPORTED, None, str(exc)
    except (ChordArcError, ValueError, FloatingPointError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"
    value = getattr(r, "value", r)
    err = getattr(r, "error_estimate", getattr(r, "quadrature_error", None))
    return float(np.real(value)), err, ""


def _ratio(a, b):
    if a == UNSUPPORTED or b == UNSUPPORTED:
        return UNSUPPORTED
    if a is None or b is None or b == 0:
        return None
    return a / b


def _sort_key(row: ReportRow):
    return (tuple(sorted(row.params.items())), row.function, row.p or 0, row.n or 0)


# ---------------------------------------------------------------------------
# equivalence


def _equivalence_task(item):
    cfg, params, dtext, ftext, p = item
    domain = parse_domain(dtext)
    u = parse_test_function(ftext)
    quad = cfg.quadrature.spec()
    trace = BoundaryFunction.trace(u)
    mpd = cfg.min_pole_distance
    notes = []

    def run(key, fn, *a, **kw):
        v, e, note = _guard(fn, *a, **kw)
        if note:
            notes.append(f"{key}: {note}")
        return v, e

    I1, I1e = run("I1", interior_energy, u, domain, p, 1, quad, weight=cfg.weight, min_pole_distance=mpd)
    I1w, _ = run("I1_pullback", interior_energy, u, domain, p, 1, quad, weight="pullback", min_pole_distance=mpd)
    B, Be = run("B", boundary_norm_curve, trace, domain.curve, p, None, quad)
    Bphi, Bphie = run("Bphi", bp_phi_norm, trace, domain, p, quad)
    if domain.exterior_map is None:
        Bext, Bphiext = UNSUPPORTED, UNSUPPORTED
    else:
        Bext = B
        Bphiext, _ = run("Bphi_ext", bp_phi_norm, trace, domain, p, quad, side="exterior")
    rows = []
    for n in cfg.n:
        if n == 1:
            In, Ine = I1, I1e
        else:
            In, Ine = run(f"I{n}", interior_energy, u, domain, p, n, quad, weight=cfg.weight, min_pole_distance=mpd)
        pull, pulle = run(f"pull{n}", pullback_energy, u, domain, p, n, quad, min_pole_distance=mpd)
        kb = 4.0 ** abs(p - 2)
        values = {"I1": I1, "In": In, "pull": pull, "I1_pullback": I1w, "B": B, "Bphi": Bphi,
                  "B_ext": Bext, "Bphi_ext": Bphiext,
                  "In/I1": _ratio(In, I1), "pull/In": _ratio(pull, In), "koebe": _ratio(I1w, I1),
                  "B/I1": _ratio(B, I1), "Bphi/I1": _ratio(Bphi, I1), "koebe_lo": 1 / kb, "koebe_hi": kb}
        errors = {k: e for k, e in (("I1", I1e), ("In", Ine), ("pull", pulle), ("B", Be), ("Bphi", Bphie))
                  if e is not None}
        checks = {name: Check(name, *cfg.brackets[name]) for name in RATIOS if name in cfg.brackets}
        checks["koebe"] = Check("koebe", 1 / kb * (1 - 1e-6), kb * (1 + 1e-6))
        rows.append(ReportRow("equivalence", f"{cfg.id}:{dtext}:{ftext}:p={p}:n={n}", dtext, dict(params),
                              ftext, p, n, values, errors, checks, "; ".join(notes)))
    return rows


def run_equivalence(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext, f, p) for params, dtext in cfg.domain_texts() for f in cfg.functions for p in cfg.p]
    rows = sorted(_flatten(_map(_equivalence_task, items, cfg.jobs)), key=_sort_key)
    return rows + [equivalence_summary(rows, cfg)]


def equivalence_summary(rows: list[ReportRow], cfg: ExperimentConfig) -> ReportRow:
    """Max/min of each ratio across the whole sweep."""
    values = {}
    for name in RATIOS:
        xs = [r.values[name] for r in rows if isinstance(r.values.get(name), float) and r.values[name] > 0]
        if any(r.values.get(name) is None for r in rows):
            values[f"spread_{name}"] = None
        elif not xs:
            values[f"spread_{name}"] = UNSUPPORTED
        else:
            values[f"spread_{name}"] = max(xs) / min(xs)
    checks = {f"spread_{name}": Check(f"spread_{name}", 1.0, cfg.spread_limit) for name in RATIOS}
    return ReportRow("equivalence-summary", f"{cfg.id}:summary", "sweep", {}, "", None, None, values, {}, checks)


# ---------------------------------------------------------------------------
# characterization


def probe_point(domain: Domain, t: float, d: float, side: str = "exterior") -> complex:
    """``gamma(t) -+ d * i * unit tangent``; minus points into the exterior side."""
    curve = domain.curve
    g = complex(curve.eval(np.array([t]))[0])
    tang = complex(curve.deriv(np.array([t]))[0])
    normal = 1j * tang / abs(tang)
    return g - d * normal if side == "exterior" else g + d * normal


@lru_cache(maxsize=32)
def _ahlfors(dtext: str) -> float:
    return ahlfors_constant(parse_domain(dtext).curve)[0]


def _characterization_task(item):
    # geometry depends only on the probe, so it is shared by every (p, n)
    cfg, params, dtext, t, d = item
    domain = parse_domain(dtext)
    quad = cfg.quadrature.spec()
    side = cfg.probes.side
    w = probe_point(domain, t, d, side)
    delta = float(domain.delta(w)[0])
    F = HarmonicTestFunction((PoleTerm(w, 1, 1.0),), (), f"pole(w={w})")
    target = "interior" if side == "exterior" else "exterior"
    C = _ahlfors(dtext)
    t_hi = max(abs(t) + 8 * delta + 2, 8.0)
    win = CurveWindow(-t_hi, t_hi, 801)
    lens = ball_length(domain.curve, w, [2 * delta, 4 * delta, 5 * delta, 6 * delta], win)
    md = meyer_david_ratio(domain.curve, w, tol=1e-7)
    geo = {"delta": delta, "len_2w": float(lens[0]), "len_4w": float(lens[1]), "len_ring": float(lens[3] - lens[2]),
           "ahlfors": C, "len_2w/delta": float(lens[0]) / delta, "len_ring/delta": float(lens[3] - lens[2]) / delta,
           "ball_bound": 3 * C, "md": md.value, "md_bound": 16 / 3 * C}
    rows = []
    for p in cfg.p:
        for n in cfg.n:
            notes = []
            In, Ine, note = _guard(interior_energy, F, domain, p, n, quad, side=target, min_pole_distance=0.0)
            if note:
                notes.append(note)
            bound = 2 * math.pi * math.factorial(n) ** p / p * delta ** (-p)
            values = dict(geo, In=In, bound=bound, B=None)
            values["In/bound"] = _ratio(In, bound)
            if cfg.with_boundary_norm:
                values["B"], _, note = _guard(boundary_norm_curve, BoundaryFunction.trace(F), domain.curve, p, None,
                                              quad, center=t, scale=delta)
                if note:
                    notes.append(note)
            checks = {"energy_bound": Check("In/bound", None, 1 + 1e-3),
                      "ball": Check("len_2w/delta", None, 3 * C),
                      "ring": Check("len_ring/delta", None, 7 * C),
                      "md": Check("md", None, 16 / 3 * C)}
            errors = {"In": Ine} if Ine is not None else {}
            rows.append(ReportRow("characterization", f"{cfg.id}:{dtext}:p={p}:n={n}:t={t}:d={d}", dtext,
                                  dict(params), F.label, p, n, values, errors, checks, "; ".join(notes)))
    return rows


def run_characterization(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext, t, d) for params, dtext in cfg.domain_texts() for t in cfg.probes.t
             for d in cfg.probes.distances]
    return _flatten(_map(_characterization_task, items, cfg.jobs))


# ---------------------------------------------------------------------------
# diagnostics


def expected_chord_arc(curve) -> float | None:
    if isinstance(curve, Line):
        return 1.0
    if isinstance(curve, SectorBoundary):
        return 1 / math.sin(curve.alpha * math.pi / 2)
    return None


def _diagnostics_task(item):
    cfg, params, dtext, win = item
    curve = parse_domain(dtext).curve
    window = curve.window if win is None else CurveWindow(win.t_lo, win.t_hi, win.samples)
    rep = diagnose(curve, window, tol=1e-7)
    exp = expected_chord_arc(curve)
    values = {"t_lo": window.t_lo, "t_hi": window.t_hi, "chord_arc": rep.chord_arc_constant,
              "ahlfors": rep.ahlfors_constant, "md_sup": rep.meyer_david_sup, "expected_chord_arc": exp,
              "chord_arc_rel_err": None if exp is None else abs(rep.chord_arc_constant / exp - 1)}
    checks = {"chord_arc": Check("chord_arc", 1.0, None), "ahlfors": Check("ahlfors", 0.0, None),
              "md": Check("md_sup", 0.0, None)}
    if exp is not None:
        checks["chord_arc_expected"] = Check("chord_arc_rel_err", None, 0.01)
    return [ReportRow("diagnostics", f"{cfg.id}:{dtext}:[{window.t_lo},{window.t_hi}]", dtext, dict(params),
                      "", None, None, values, {"md": rep.meyer_david_error}, checks)]


def run_diagnostics(cfg: ExperimentConfig) -> list[ReportRow]:
    wins = cfg.windows or ([cfg.window] if cfg.window else [None])
    items = [(cfg, params, dtext, w) for params, dtext in cfg.domain_texts() for w in wins]
    rows = _flatten(_map(_diagnostics_task, items, cfg.jobs))
    out = list(rows)
    if len(wins) > 1:
        for params, dtext in cfg.domain_texts():
            mine = [r for r in rows if r.domain == dtext]
            first, last = mine[0].values, mine[-1].values
            values = {"chord_arc_growth": last["chord_arc"] / first["chord_arc"],
                      "ahlfors_growth": last["ahlfors"] / first["ahlfors"]}
            checks = {}
            if dtext.startswith("parabola"):
                # the chord-arc constant of a parabola grows with the window, the Ahlfors one saturates
                checks = {"chord_arc_growth": Check("chord_arc_growth", 5.0, None),
                          "ahlfors_growth": Check("ahlfors_growth", None, 1.1)}
            out.append(ReportRow("diagnostics-summary", f"{cfg.id}:{dtext}:growth", dtext, dict(params), "",
                                 None, None, values, {}, checks))
    return out


# ---------------------------------------------------------------------------
# tail integral


def ray_point(domain: Domain, x: float, d: float) -> complex:
    """``phi(x + i s)`` with ``s`` chosen so the image sits at distance ``d`` from the curve."""
    m = domain.require_interior()

    def g(logs):
        return math.log(float(domain.delta_pullback(np.array([x + 1j * math.exp(logs)]))[0])) - math.log(d)
    lo, hi = math.log(d) - 1, math.log(d) + 1
    while g(lo) > 0:
        lo -= 2
    while g(hi) < 0:
        hi += 2
    s = math.exp(brentq(g, lo, hi, xtol=1e-14))
    return complex(m.eval(np.array([x + 1j * s]))[0])


def _tail_task(item):
    cfg, params, dtext, eps, x, d = item
    domain = parse_domain(dtext)
    quad = cfg.quadrature.spec()
    try:
        w = ray_point(domain, x, d)
        res, iv = tail_integral(domain, w, eps, quad, detail=True)
        delta = float(domain.delta(w)[0])
        values = {"eps": eps, "delta": delta, "integral": res.integral, "ratio": res.ratio}
        errors = {"integral": iv.error_estimate}
        note = ""
    except UnsupportedDomainError as exc:
        values = {"eps": eps, "delta": d, "integral": UNSUPPORTED, "ratio": UNSUPPORTED}
        errors, note = {}, str(exc)
    checks = {"ratio": Check("ratio", 0.0, None)}
    if isinstance(domain.curve, Line) and values["ratio"] != UNSUPPORTED:
        values["ratio_exact_err"] = abs(values["ratio"] * eps - 1)
        checks["exact"] = Check("ratio_exact_err", None, 1e-8)
    return [ReportRow("tail", f"{cfg.id}:{dtext}:eps={eps}:x={x}:d={d}", dtext, dict(params), "", None, None,
                      values, errors, checks, note)]


def run_tail(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext, eps, x, d) for params, dtext in cfg.domain_texts() for eps in cfg.eps
             for x in cfg.probes.t for d in cfg.probes.distances]
    rows = _flatten(_map(_tail_task, items, cfg.jobs))
    out = list(rows)
    for params, dtext in cfg.domain_texts():
        for eps in cfg.eps:
            xs = [r.values["ratio"] for r in rows if r.domain == dtext and r.values["eps"] == eps]
            if all(isinstance(v, float) for v in xs):
                spread = max(xs) / min(xs)
            else:
                spread = UNSUPPORTED
            out.append(ReportRow("tail-summary", f"{cfg.id}:{dtext}:eps={eps}:spread", dtext, dict(params), "",
                                 None, None, {"eps": eps, "spread": spread}, {},
                                 {"spread": Check("spread", 1.0, cfg.tail_spread_limit)}))
    return out


# ---------------------------------------------------------------------------
# sewing


def sewing_exponent(h, xs=None) -> float:
    """Least-squares slope of ``log h(x)`` against ``log x`` over positive ``xs``."""
    xs = np.geomspace(1e-2, 1e2, 9) if xs is None else np.asarray(xs, dtype=float)
    return float(np.polyfit(np.log(xs), np.log(h(xs)), 1)[0])


def _sewing_task(item):
    cfg, params, dtext = item
    domain = parse_domain(dtext)
    try:
        h = SewingMap(domain, tol=1e-11)
        fit = sewing_exponent(h)
        win = cfg.window or None
        window = CurveWindow(-4.0, 4.0, 17) if win is None else CurveWindow(win.t_lo, win.t_hi, win.samples)
        qs = quasisymmetric_constant(h, window, cfg.sewing_scales)
    except UnsupportedDomainError as exc:
        values = {"exponent_fit": UNSUPPORTED, "qs_constant": UNSUPPORTED}
        return [ReportRow("sewing", f"{cfg.id}:{dtext}", dtext, dict(params), "", None, None, values, {},
                          {"qs": Check("qs_constant", 1.0, None)}, str(exc))]
    values = {"exponent_fit": fit, "qs_constant": qs}
    checks = {"qs": Check("qs_constant", 1.0 - 1e-9, None)}
    if isinstance(domain.curve, (Line, SectorBoundary)):
        a = getattr(domain.curve, "alpha", 1.0)
        values["exponent_expected"] = a / (2 - a)
        values["exponent_err"] = abs(fit - a / (2 - a))
        checks["exponent"] = Check("exponent_err", None, 1e-3)
    return [ReportRow("sewing", f"{cfg.id}:{dtext}", dtext, dict(params), "", None, None, values, {}, checks)]


def run_sewing(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext) for params, dtext in cfg.domain_texts()]
    rows = _flatten(_map(_sewing_task, items, cfg.jobs))
    sectors = [(parse_domain(r.domain).curve, r.values["qs_constant"]) for r in rows
               if isinstance(r.values["qs_constant"], float)]
    sectors = [(getattr(c, "alpha", 1.0), q) for c, q in sectors if isinstance(c, (Line, SectorBoundary))]
    if len(sectors) < 2:
        return rows
    at1 = [q for a, q in sectors if a == 1.0]
    monotone = all(qi < qj for ai, qi in sectors for aj, qj in sectors if abs(ai - 1) < abs(aj - 1))
    values = {"qs_at_1": at1[0] if at1 else None, "qs_monotone": 1.0 if monotone else 0.0}
    checks = {"qs_monotone": Check("qs_monotone", 1.0, None)}
    if at1:
        checks["qs_at_1"] = Check("qs_at_1", 1.0 - 1e-9, 1.0 + 1e-9)
    return rows + [ReportRow("sewing-summary", f"{cfg.id}:sewing:summary", "sweep", {}, "", None, None,
                             values, {}, checks)]


# ---------------------------------------------------------------------------
# Carleson boxes and Lusin area


def dyadic_boxes(sizes, level: int = 0) -> list[tuple[float, float]]:
    """Boxes centred at 0 with the given sizes; each level halves the log-size step and adds shifted boxes."""
    sizes = sorted(float(s) for s in sizes)
    if level > 0:
        logs = np.log2(sizes)
        fine = np.linspace(logs[0], logs[-1], (len(sizes) - 1) * 2 ** level + 1) if len(sizes) > 1 else logs
        sizes = [float(2.0 ** v) for v in fine]
    boxes = []
    for L in sizes:
        shifts = [0.0] if level == 0 else [j * L / 2 ** level for j in range(-2 ** level, 2 ** level + 1)]
        boxes += [(s - L / 2, s + L / 2) for s in shifts]
    return boxes


def _carleson_sup(F, boxes, quad):
    vals = [float(carleson_box(F, I, quad).value) for I in boxes]
    k = int(np.argmax(vals))
    return vals[k], boxes[k]


def run_carleson(cfg: ExperimentConfig) -> list[ReportRow]:
    quad = cfg.quadrature.spec()
    rows = []
    for ftext in cfg.functions:
        F = parse_test_function(ftext)
        sup0, _ = _carleson_sup(F, dyadic_boxes(cfg.box_sizes, 0), quad)
        sup1, box1 = _carleson_sup(F, dyadic_boxes(cfg.box_sizes, 1), quad)
        change = abs(sup1 / sup0 - 1) if sup0 > 0 else (0.0 if sup1 == 0 else math.inf)
        rows.append(ReportRow("carleson", f"{cfg.id}:{ftext}:sup", "halfplane", {}, ftext, None, None,
                              {"sup": sup0, "sup_refined": sup1, "refine_change": change}, {},
                              {"stable": Check("refine_change", None, cfg.refine_tolerance)},
                              f"refined maximiser {box1}"))
        for a, b in cfg.lusin_intervals:
            L = b - a
            lhs = lusin_average(F, (a, b), quad)
            box = carleson_box(F, (a - L, b + L), quad)
            rhs = 2 * box.value * 3 * L
            rhs_err = 2 * box.error_estimate * 3 * L
            slack = rhs + rhs_err + lhs.error_estimate - float(lhs.value)
            rows.append(ReportRow("carleson", f"{cfg.id}:{ftext}:lusin:[{a},{b}]", "halfplane", {"a": a, "b": b},
                                  ftext, None, None,
                                  {"lusin_lhs": float(lhs.value), "lusin_rhs": rhs, "lusin_slack": slack},
                                  {"lusin_lhs": lhs.error_estimate}, {"lusin": Check("lusin_slack", 0.0, None)}))
    return rows


# ---------------------------------------------------------------------------
# single computations


def _energy_task(item):
    cfg, params, dtext, ftext, p, n = item
    domain = parse_domain(dtext)
    u = parse_test_function(ftext)
    try:
        r = interior_energy(u, domain, p, n, cfg.quadrature.spec(), weight=cfg.weight, side=cfg.side,
                            min_pole_distance=cfg.min_pole_distance)
        values = {"value": r.value, "quadrature_error": r.quadrature_error, "truncation_tail": r.truncation_tail}
        note = ""
    except UnsupportedDomainError as exc:
        values, note = {"value": UNSUPPORTED}, str(exc)
    except (ChordArcError, ValueError) as exc:
        values, note = {"value": None}, f"{type(exc).__name__}: {exc}"
    return [ReportRow("energy", f"{cfg.id}:{dtext}:{ftext}:p={p}:n={n}", dtext, dict(params), ftext, p, n,
                      values, {}, {"finite": Check("value", 0.0, None)}, note)]


def run_energy(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext, f, p, n) for params, dtext in cfg.domain_texts() for f in cfg.functions
             for p in cfg.p for n in cfg.n]
    return sorted(_flatten(_map(_energy_task, items, cfg.jobs)), key=_sort_key)


def _boundary_task(item):
    cfg, params, dtext, ftext, p = item
    domain = parse_domain(dtext)
    f = BoundaryFunction.trace(parse_test_function(ftext))
    quad = cfg.quadrature.spec()
    window = None if cfg.window is None else CurveWindow(cfg.window.t_lo, cfg.window.t_hi, cfg.window.samples)
    B, Be, n1 = _guard(boundary_norm_curve, f, domain.curve, p, window, quad)
    Bphi, Bphie, n2 = _guard(bp_phi_norm, f, domain, p, quad, side=cfg.side)
    values = {"value": B, "error_estimate": Be, "bphi": Bphi}
    errors = {"bphi": Bphie} if Bphie is not None else {}
    return [ReportRow("boundary_norm", f"{cfg.id}:{dtext}:{ftext}:p={p}", dtext, dict(params), ftext, p, None,
                      values, errors, {"finite": Check("value", 0.0, None)}, "; ".join(x for x in (n1, n2) if x))]


def run_boundary_norm(cfg: ExperimentConfig) -> list[ReportRow]:
    items = [(cfg, params, dtext, f, p) for params, dtext in cfg.domain_texts() for f in cfg.functions for p in cfg.p]
    return sorted(_flatten(_map(_boundary_task, items, cfg.jobs)), key=_sort_key)


RUNNERS = {
    "equivalence": run_equivalence,
    "characterization": run_characterization,
    "diagnostics": run_diagnostics,
    "tail": run_tail,
    "sewing": run_sewing,
    "carleson": run_carleson,
    "energy": run_energy,
    "boundary_norm": run_boundary_norm,
}


def run(cfg: ExperimentConfig) -> list[ReportRow]:
    return RUNNERS[cfg.kind](cfg)
