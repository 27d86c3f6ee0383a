"""Curves through infinity and their regularity constants.

The catalog holds a handful of explicit Jordan curves (line, sector
boundary, grating, parabola, wiggle) plus polylines read from CSV.  All
parametrizations are vectorized over numpy arrays of real parameters.

Unbounded curves are examined on finite parameter windows.  Sup-type
constants (chord-arc, Ahlfors) are therefore window-dependent lower
bounds; the Meyer-David integral adds envelope bounds for the two ends.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InjectivityError, MalformedCurveError, WindowInsufficientError
from .quadrature import QuadratureSpec, gk15, integrate_1d

__all__ = [
    "Curve", "Line", "SectorBoundary", "Grating", "Parabola", "Wiggle", "Polyline",
    "CurveWindow", "DiagnosticsReport", "MeyerDavidValue",
    "arc_length", "distance_to_curve", "chord_arc_constant", "ahlfors_constant", "ball_length",
    "meyer_david_ratio", "curve_window_samples", "diagnose", "load_polyline_csv",
    "curve_from_name", "similar_curve",
]


@dataclass(frozen=True)
class CurveWindow:
    t_lo: float
    t_hi: float
    sample_count: int = 401

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise ValueError(f"window needs t_lo < t_hi, got [{self.t_lo}, {self.t_hi}]")
        if self.sample_count < 2:
            raise ValueError("sample_count must be at least 2")

    def scaled(self, factor: float) -> "CurveWindow":
        mid = 0.5 * (self.t_lo + self.t_hi)
        half = 0.5 * (self.t_hi - self.t_lo) * factor
        return CurveWindow(mid - half, mid + half, self.sample_count)


# ---------------------------------------------------------------------------
# catalog


class Curve:
    """Parametrized locally rectifiable Jordan curve.

    Subclasses provide ``eval``, ``deriv`` and ``deriv2``; the rest has
    generic fallbacks that subclasses override when a closed form exists.
    """

    unbounded = True
    breakpoints: tuple = ()

    def eval(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def deriv2(self, t):
        raise NotImplementedError

    @property
    def window(self) -> CurveWindow:
        return CurveWindow(-10.0, 10.0)

    @property
    def name(self) -> str:
        return type(self).__name__

    def params(self) -> dict:
        return {}

    def speed(self, t):
        return np.abs(self.deriv(t))

    def divided_difference(self, s, t, d=None):
        """``(eval(s) - eval(t)) / (s - t)``; ``d`` is ``s - t`` if known exactly."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        d = s - t if d is None else np.asarray(d, dtype=float)
        near = np.abs(d) < 1e-7 * (1.0 + np.abs(t))
        safe = np.where(near, 1.0, d)
        out = (self.eval(s) - self.eval(t)) / safe
        if np.any(near):
            out = np.where(near, self.deriv(0.5 * (s + t)), out)
        return out

    def distance(self, w):
        """Vectorized ``(delta, nearest_t)``; the default window is doubled until the nearest point is inside."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        res = [self._distance_one(complex(wi)) for wi in w]
        return np.array([r[0] for r in res]), np.array([r[1] for r in res])

    def _distance_one(self, w):
        window = self.window
        for _ in range(40):
            try:
                return distance_to_curve(self, w, window)
            except WindowInsufficientError:
                if not self.unbounded:
                    raise
                window = window.scaled(2.0)
        raise WindowInsufficientError(f"no interior nearest point for {w} up to window {window}")

    def side(self, w):
        """+1 where ``w`` lies left of the curve (the interior side), -1 right, 0 on it."""
        raise NotImplementedError(f"{self.name} has no side test")

    def tail_bounds(self, w: complex, edge: float, sign: int):
        """Lower and upper bounds for the end integral of ``|eval'| / |eval - w|**2``.

        The end is ``t > edge`` for ``sign = +1`` and ``t < edge`` for
        ``sign = -1``.  Returns ``None`` when the curve has no unbounded end;
        ``(0, inf)`` means the edge is not far enough out yet.
        """
        return None

    def nearest_parameter(self, w):
        return self.distance(w)[1]

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.name}({args})"


def _arctail(A: float, beta: float) -> float:
    """``integral_A^inf ds / (s**2 + beta**2)``."""
    beta = abs(beta)
    if beta == 0:
        return 1.0 / A if A > 0 else math.inf
    return math.atan2(beta, A) / beta


@dataclass(frozen=True, repr=False)
class Line(Curve):
    def eval(self, t):
        return np.asarray(t, dtype=float) + 0j

    def deriv(self, t):
        return np.ones_like(np.asarray(t, dtype=float)) + 0j

    def deriv2(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) + 0j

    def divided_difference(self, s, t, d=None):
        return np.ones(np.broadcast(np.asarray(s), np.asarray(t)).shape) + 0j

    def distance(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return np.abs(w.imag), w.real.copy()

    def side(self, w):
        return np.sign(np.asarray(w).imag)

    def tail_bounds(self, w, edge, sign):
        v = _arctail(sign * (edge - w.real), w.imag)
        return v, v


@dataclass(frozen=True, repr=False)
class SectorBoundary(Curve):
    """Two rays from 0 with opening ``alpha * pi``, signed arc-length parameter.

    ``t > 0`` runs along the positive real axis, ``t < 0`` along the ray
    ``arg = alpha * pi``.  The interior sector lies to the left.
    """

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"sector opening alpha must lie in (0, 2), got {self.alpha}")

    breakpoints = (0.0,)

    def params(self):
        return {"alpha": self.alpha}

    @property
    def ray(self) -> complex:
        return complex(math.cos(math.pi * self.alpha), math.sin(math.pi * self.alpha))

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, t + 0j, -t * self.ray)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        # one-sided at the vertex: take the t > 0 ray at t == 0
        return np.where(t >= 0, 1.0 + 0j, -self.ray + 0j)

    def deriv2(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) + 0j

    def divided_difference(self, s, t, d=None):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        d = s - t if d is None else np.asarray(d, dtype=float)
        same_pos = (s >= 0) & (t >= 0)
        same_neg = (s <= 0) & (t <= 0)
        safe = np.where(same_pos | same_neg, 1.0, d)
        direct = (self.eval(s) - self.eval(t)) / safe
        return np.where(same_pos, 1.0 + 0j, np.where(same_neg, -self.ray, direct))

    def distance(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        s0 = w.real
        d0 = np.where(s0 > 0, np.abs(w.imag), np.abs(w))
        t0 = np.where(s0 > 0, s0, 0.0)
        wr = w * np.conj(self.ray)
        d1 = np.where(wr.real > 0, np.abs(wr.imag), np.abs(w))
        t1 = np.where(wr.real > 0, -wr.real, 0.0)
        use1 = d1 < d0
        return np.where(use1, d1, d0), np.where(use1, t1, t0)

    def side(self, w):
        w = np.asarray(w, dtype=complex)
        arg = np.mod(np.angle(w), 2 * math.pi)
        top = self.alpha * math.pi
        inside = (arg > 0) & (arg < top)
        on = (np.abs(w) == 0) | (arg == 0) | np.isclose(arg, top, rtol=0, atol=1e-15)
        return np.where(on, 0, np.where(inside, 1, -1))

    def tail_bounds(self, w, edge, sign):
        if sign > 0:
            v = _arctail(edge - w.real, w.imag)
        else:
            wr = w * np.conj(self.ray)
            v = _arctail(-edge - wr.real, wr.imag)
        return v, v

    @property
    def window(self):
        return CurveWindow(-10.0, 10.0)


@dataclass(frozen=True, repr=False)
class Grating(Curve):
    """``t + c e^{it}``: the boundary image of ``z + c e^{iz}``."""

    c: float

    def __post_init__(self):
        if not 0 <= self.c < 1:
            raise ValueError(f"grating needs 0 <= c < 1 for injectivity, got c={self.c}")

    def params(self):
        return {"c": self.c}

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return t + self.c * np.exp(1j * t)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 + 1j * self.c * np.exp(1j * t)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        return -self.c * np.exp(1j * t)

    def divided_difference(self, s, t, d=None):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        d = s - t if d is None else np.asarray(d, dtype=float)
        tiny = np.abs(d) < 1e-300
        q = np.where(tiny, 1j, np.expm1(1j * d) / np.where(tiny, 1.0, d))
        return 1.0 + self.c * np.exp(1j * t) * q

    def foot(self, a):
        """Parameter ``t`` with ``Re eval(t) = a`` (the real part is increasing)."""
        a = np.asarray(a, dtype=float)
        t = a - self.c * np.cos(a)
        for _ in range(60):
            step = (t + self.c * np.cos(t) - a) / (1.0 - self.c * np.sin(t))
            t = t - step
            if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(t))):
                break
        return t

    def distance(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return grating_nearest(self.c, w)

    def side(self, w):
        w = np.asarray(w, dtype=complex)
        t = self.foot(w.real)
        return np.sign(w.imag - self.c * np.sin(t))

    @property
    def period_length(self) -> float:
        return _grating_period_length(self.c)

    def tail_bounds(self, w, edge, sign):
        # sum period by period: each period has length L_p and on it
        # |Re(eval - w)| lies within c of s = sign * (t - Re w)
        c = self.c
        x0 = sign * (edge - w.real)
        b = abs(w.imag)
        gap = max(b - c, 0.0)
        if x0 - c <= 0:
            return 0.0, math.inf
        lp = self.period_length
        lower = lp / (2 * math.pi) * _arctail(x0 + 2 * math.pi + c, b + c)
        upper = lp * (1.0 / ((x0 - c) ** 2 + gap ** 2) + _arctail(x0 - c, gap) / (2 * math.pi))
        return lower, upper

    @property
    def window(self):
        return CurveWindow(-4 * math.pi, 4 * math.pi, 801)


@dataclass(frozen=True, repr=False)
class Parabola(Curve):
    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"parabola needs a > 0, got {self.a}")

    def params(self):
        return {"a": self.a}

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return t + 1j * self.a * t * t

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 + 2j * self.a * t

    def deriv2(self, t):
        return np.full_like(np.asarray(t, dtype=float), 2 * self.a) * 1j

    def divided_difference(self, s, t, d=None):
        return 1.0 + 1j * self.a * (np.asarray(s, dtype=float) + np.asarray(t, dtype=float))

    def side(self, w):
        w = np.asarray(w, dtype=complex)
        return np.sign(w.imag - self.a * w.real ** 2)

    def tail_bounds(self, w, edge, sign):
        # |eval'| within [2a|t|, 2a|t| + 1]; |eval - w| within |eval| -+ |w|
        a = self.a
        r = abs(w)
        T = sign * edge
        if T <= 0 or a * T * T <= 2 * r:
            return 0.0, math.inf

        def lower(t):
            return 2 * a * t / (a * t * t + t + r) ** 2

        def upper(t):
            return (2 * a * t + 1) / (a * t * t - r) ** 2
        spec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-300)
        lo = float(integrate_1d(lower, (T, math.inf), spec, scale=T).value)
        hi = float(integrate_1d(upper, (T, math.inf), spec, scale=T).value)
        return lo, hi


@dataclass(frozen=True, repr=False)
class Wiggle(Curve):
    """Graph of ``sum_k 2^-k b(2^k t)``, ``b(u) = sin(2 pi u) exp(-u^2) / 2``.

    Term ``k`` adds wiggles of size ``2^-k`` near ``t = 0``; ``depth`` is
    the finest level.
    """

    depth: int = 3

    def __post_init__(self):
        if self.depth < 0 or int(self.depth) != self.depth:
            raise ValueError("wiggle depth must be a nonnegative integer")

    breakpoints = (0.0,)

    def params(self):
        return {"depth": self.depth}

    def _g(self, t, order=0):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for k in range(self.depth + 1):
            s = 2.0 ** k
            u = s * t
            e = np.exp(-u * u)
            sn, cs = np.sin(2 * math.pi * u), np.cos(2 * math.pi * u)
            if order == 0:
                out += 0.5 * sn * e / s
            elif order == 1:
                out += 0.5 * (2 * math.pi * cs - 2 * u * sn) * e
            else:
                out += 0.5 * s * ((-4 * math.pi ** 2 - 2 + 4 * u * u) * sn - 8 * math.pi * u * cs) * e
        return out

    def eval(self, t):
        return np.asarray(t, dtype=float) + 1j * self._g(t)

    def deriv(self, t):
        return 1.0 + 1j * self._g(t, 1)

    def deriv2(self, t):
        return 1j * self._g(t, 2)

    def side(self, w):
        w = np.asarray(w, dtype=complex)
        return np.sign(w.imag - self._g(w.real))

    def _bounds(self, T):
        # |g| and |g'| on |t| >= T
        gm = gp = 0.0
        for k in range(self.depth + 1):
            s = 2.0 ** k
            u = max(s * T, 1.0)
            e = math.exp(-(s * T) ** 2) if s * T >= 1 else 1.0
            gm += 0.5 * e / s
            gp += 0.5 * (2 * math.pi + 2 * u) * e
        return gm, gp

    def tail_bounds(self, w, edge, sign):
        T = sign * edge
        if T < 1.0:
            return 0.0, math.inf
        gm, gp = self._bounds(T)
        A = sign * (edge - w.real)
        b = abs(w.imag)
        lower = _arctail(A, b + gm)
        upper = (1 + gp) * _arctail(A, max(b - gm, 0.0))
        return lower, upper

    @property
    def window(self):
        return CurveWindow(-8.0, 8.0, 801)


class Polyline(Curve):
    """Piecewise linear curve through ``points``; parameter ``t`` in ``[0, n-1]``."""

    unbounded = False

    def __init__(self, points):
        pts = np.asarray(points, dtype=complex).ravel()
        if pts.size < 2:
            raise MalformedCurveError("a polyline needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise MalformedCurveError("polyline points must be finite")
        seg = np.diff(pts)
        if np.any(np.abs(seg) == 0):
            raise MalformedCurveError("polyline has repeated consecutive points")
        self.points = pts
        self.breakpoints = tuple(float(i) for i in range(1, pts.size - 1))

    def params(self):
        return {"n_points": int(self.points.size)}

    def __eq__(self, other):
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.floor(t).astype(int), 0, self.points.size - 2)
        return i, t - i

    def eval(self, t):
        i, f = self._locate(t)
        return self.points[i] + f * (self.points[i + 1] - self.points[i])

    def deriv(self, t):
        i, _ = self._locate(t)
        return self.points[i + 1] - self.points[i]

    def deriv2(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) + 0j

    def divided_difference(self, s, t, d=None):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        d = s - t if d is None else np.asarray(d, dtype=float)
        i, _ = self._locate(s)
        j, _ = self._locate(t)
        same = i == j
        safe = np.where(same, 1.0, d)
        return np.where(same, self.points[i + 1] - self.points[i], (self.eval(s) - self.eval(t)) / safe)

    @property
    def window(self):
        return CurveWindow(0.0, float(self.points.size - 1), max(401, 8 * self.points.size))


def curve_from_name(kind: str, **params) -> Curve:
    """Build a catalog curve from a tag such as ``"sector"`` and its parameters."""
    kind = kind.lower()
    if kind in ("line", "halfplane"):
        return Line()
    if kind in ("sector", "sectorboundary"):
        return SectorBoundary(float(params["alpha"]))
    if kind == "grating":
        return Grating(float(params["c"]))
    if kind == "parabola":
        return Parabola(float(params.get("a", 1.0)))
    if kind == "wiggle":
        return Wiggle(int(params.get("depth", 3)))
    if kind == "polyline":
        return load_polyline_csv(params["path"])
    raise ValueError(f"unknown curve kind {kind!r}")


class _Similar(Curve):
    """``a * curve + b``; used to check similarity invariance."""

    def __init__(self, base: Curve, a: complex, b: complex):
        self.base, self.a, self.b = base, complex(a), complex(b)
        self.breakpoints = base.breakpoints
        self.unbounded = base.unbounded

    def eval(self, t):
        return self.a * self.base.eval(t) + self.b

    def deriv(self, t):
        return self.a * self.base.deriv(t)

    def deriv2(self, t):
        return self.a * self.base.deriv2(t)

    def divided_difference(self, s, t, d=None):
        return self.a * self.base.divided_difference(s, t, d)

    def distance(self, w):
        d, t = self.base.distance((np.asarray(w) - self.b) / self.a)
        return d * abs(self.a), t

    def tail_bounds(self, w, edge, sign):
        res = self.base.tail_bounds((w - self.b) / self.a, edge, sign)
        if res is None:
            return None
        k = 1.0 / abs(self.a)
        return k * res[0], k * res[1]

    @property
    def window(self):
        return self.base.window


def similar_curve(curve: Curve, a: complex, b: complex = 0) -> Curve:
    if a == 0:
        raise ValueError("similarity needs a != 0")
    return _Similar(curve, a, b)


def load_polyline_csv(path) -> Polyline:
    """Read a two-column (re, im) CSV; a non-numeric first row is a header."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                re_, im_ = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if k == 0:
                    continue
                raise MalformedCurveError(f"{path}:{k + 1}: expected two numbers, got {row!r}")
            rows.append(complex(re_, im_))
    return Polyline(rows)


# ---------------------------------------------------------------------------
# grating distance


@lru_cache(maxsize=64)
def _grating_period_length(c: float) -> float:
    return arc_length(Grating(c), 0.0, 2 * math.pi, tol=1e-12)


def grating_nearest(c: float, w, *, preimage=None):
    """Distance from ``w`` to ``t + c e^{it}`` and the nearest parameter.

    With ``preimage`` (points ``z`` in the upper half-plane such that
    ``w = z + c e^{iz}``) the difference ``w - eval(t)`` is formed as
    ``(z - t) + c e^{it} expm1(i (z - t))``, which keeps full relative
    accuracy when ``w`` is very close to the curve.
    """
    if preimage is not None:
        z = np.atleast_1d(np.asarray(preimage, dtype=complex)).ravel()
        x, y = z.real, z.imag
        w_re = x + c * np.exp(-y) * np.cos(x)
        w_im = y + c * np.exp(-y) * np.sin(x)
        base = Grating(c).foot(w_re) if c > 0 else x.copy()
        off = base - x

        def diff(rows, tau):
            zeta = 1j * y[rows, None] - off[rows, None] - tau
            t = base[rows, None] + tau
            return zeta + c * np.exp(1j * t) * np.expm1(1j * zeta)
    else:
        w = np.atleast_1d(np.asarray(w, dtype=complex)).ravel()
        w_im = w.imag
        base = Grating(c).foot(w.real) if c > 0 else w.real.copy()

        def diff(rows, tau):
            t = base[rows, None] + tau
            return w[rows, None] - t - c * np.exp(1j * t)

    n = base.size
    every = np.arange(n)
    d_foot = np.abs(diff(every, np.zeros((n, 1))))[:, 0]
    if c == 0:
        return d_foot, base.copy()

    # upper bound from the foot and the nearest crests/troughs
    shift = np.mod(math.pi / 2 - base, 2 * math.pi)
    cand = np.stack([np.zeros(n), shift, shift - 2 * math.pi, shift + math.pi, shift - math.pi], axis=1)
    d_up = np.min(np.abs(diff(every, cand)), axis=1)
    gap = np.maximum(np.abs(w_im) - c, 0.0)
    # Re eval advances by exactly 2 pi per period, so |Re(eval(t) - eval(foot))|
    # is at least max((1 - c)|tau|, |tau| - 2c)
    horiz = np.sqrt(np.maximum(d_up ** 2 - gap ** 2, 0.0))
    reach = np.minimum(horiz / (1 - c), horiz + 2 * c) + 1e-12

    tau_best, hw = _grating_search(diff, base, c, reach)
    tau_best = _newton_min(diff, every, tau_best, tau_best - 2 * hw, tau_best + 2 * hw, c, base)
    dist = np.abs(diff(every, tau_best[:, None]))[:, 0]
    return dist, base + tau_best


def _grating_search(diff, base, c, reach, rel=1e-8, start=16):
    """Global minimum of ``f = |diff(row, tau)|^2`` over ``|tau| <= reach`` per row.

    Branch and bound with a second-order bound: on a cell of half-width
    ``h`` around ``tau``, ``f >= f(tau) - |f'(tau)| h - M h^2 / 2`` where
    ``M = 2 (1+c)^2 + 2c (|diff(tau)| + (1+c) h)`` bounds ``|f''|``.  Cells
    that cannot beat the best value by more than ``rel`` (relative) are
    dropped.  Returns the best center and its half-width for each row.
    """
    n = base.size
    row = np.repeat(np.arange(n), start)
    hw = np.repeat(reach / start, start)
    center = -np.repeat(reach, start) + (2 * np.tile(np.arange(start), n) + 1) * hw
    best = np.full(n, np.inf)
    best_tau = np.zeros(n)
    best_hw = np.zeros(n)
    lip = 1.0 + c
    for _ in range(200):
        D = diff(row, center[:, None])[:, 0]
        t = base[row] + center
        f = np.abs(D) ** 2
        f1 = -2 * np.real(np.conj(D) * (1.0 + 1j * c * np.exp(1j * t)))
        # cells stay grouped by row, so per-row minima are segment reductions
        is_start = np.r_[True, row[1:] != row[:-1]]
        starts = np.flatnonzero(is_start)
        seg = np.cumsum(is_start) - 1
        hit = np.flatnonzero(f == np.minimum.reduceat(f, starts)[seg])
        first = hit[np.r_[True, seg[hit][1:] != seg[hit][:-1]]]
        improve = f[first] < best[row[first]]
        r = row[first][improve]
        best[r] = f[first][improve]
        best_tau[r] = center[first][improve]
        best_hw[r] = hw[first][improve]
        M = 2 * lip ** 2 + 2 * c * (np.sqrt(f) + lip * hw)
        lower = f - np.abs(f1) * hw - 0.5 * M * hw ** 2
        alive = lower < best[row] * (1 - 2 * rel)
        alive &= hw > 1e-15 * (1 + np.abs(t))
        if not alive.any():
            break
        row, center, hw = row[alive], center[alive], hw[alive] / 2
        row = np.repeat(row, 2)
        center = np.repeat(center, 2) + np.tile([-1.0, 1.0], center.size) * np.repeat(hw, 2)
        hw = np.repeat(hw, 2)
    return best_tau, np.maximum(best_hw, 1e-300)


def _newton_min(diff, rows, tau, lo, hi, c, base):
    """Safeguarded Newton on ``|diff|^2`` inside ``[lo, hi]`` (per row)."""
    t = tau.copy()
    D = diff(rows, t[:, None])[:, 0]
    active = np.arange(rows.size)
    for _ in range(40):
        r = rows[active]
        ta = t[active]
        Da = D[active]
        g = base[r] + ta
        e = c * np.exp(1j * g)
        d1 = -(1.0 + 1j * e)              # d/dtau of diff = -eval'
        f1 = 2 * np.real(np.conj(Da) * d1)
        f2 = 2 * np.abs(d1) ** 2 + 2 * np.real(np.conj(Da) * e)
        width = hi[active] - lo[active]
        step = np.where(f2 > 0, -f1 / np.where(f2 > 0, f2, 1.0), -np.sign(f1) * width / 4)
        new = np.clip(ta + step, lo[active], hi[active])
        Dn = diff(r, new[:, None])[:, 0]
        # halve steps that increase the distance
        for _ in range(30):
            worse = np.abs(Dn) > np.abs(Da)
            if not worse.any():
                break
            new = np.where(worse, 0.5 * (ta + new), new)
            Dn = np.where(worse, diff(r, new[:, None])[:, 0], Dn)
        keep = np.abs(Dn) <= np.abs(Da)
        new = np.where(keep, new, ta)
        Dn = np.where(keep, Dn, Da)
        done = np.abs(new - ta) <= 1e-12 * (1 + np.abs(g))
        t[active] = new
        D[active] = Dn
        active = active[~done]
        if active.size == 0:
            break
    return t


# ---------------------------------------------------------------------------
# operations


def curve_window_samples(curve: Curve, window: CurveWindow | None = None):
    """Monotone parameter grid with geometric refinement at corners.

    Returns ``(t, points, tangents)``.  Around every breakpoint inside the
    window, points at distance ``h 2^-k`` (``h`` the uniform spacing,
    ``k = 1..20``) are added on both sides.  Wiggles get the same grading
    at ``t = 0`` down to their finest scale.
    """
    window = window or curve.window
    t = np.linspace(window.t_lo, window.t_hi, window.sample_count)
    h = (window.t_hi - window.t_lo) / (window.sample_count - 1)
    extra = []
    levels = 20
    if isinstance(curve, Wiggle):
        levels = max(levels, curve.depth + 8)
    if not isinstance(curve, Polyline):
        for b in curve.breakpoints:
            if window.t_lo <= b <= window.t_hi:
                extra.append(b)
                for k in range(1, levels + 1):
                    extra.extend([b - h * 2.0 ** -k, b + h * 2.0 ** -k])
    else:
        extra.extend(b for b in curve.breakpoints if window.t_lo <= b <= window.t_hi)
    if extra:
        extra = [e for e in extra if window.t_lo <= e <= window.t_hi]
        t = np.unique(np.concatenate([t, extra]))
    return t, curve.eval(t), curve.deriv(t)


def arc_length(curve: Curve, t1: float, t2: float, tol: float = 1e-10) -> float:
    """Length of the arc between parameters ``t1 <= t2`` (absolute error ``<= tol``)."""
    if t2 < t1:
        raise ValueError("arc_length needs t1 <= t2")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t1 == t2:
        return 0.0
    if isinstance(curve, Polyline):
        return float(_polyline_cumulative(curve, np.array([t2]))[0] - _polyline_cumulative(curve, np.array([t1]))[0])

    def speed(t):
        v = np.abs(curve.deriv(t))
        if not np.all(np.isfinite(v)):
            raise MalformedCurveError(f"non-finite derivative on [{t1}, {t2}]")
        return v
    bps = [b for b in curve.breakpoints if t1 < b < t2]
    r = integrate_1d(speed, (t1, t2), QuadratureSpec(rel_tol=1e-15, abs_tol=tol / 2, max_subdivisions=100000),
                     breakpoints=bps)
    return float(r.value)


def _polyline_cumulative(curve: Polyline, t):
    seg = np.abs(np.diff(curve.points))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    i, f = curve._locate(t)
    return cum[i] + f * seg[i]


class _ArcTable:
    """Cumulative arc length at grid nodes plus GK15 for partial panels."""

    def __init__(self, curve: Curve, t: np.ndarray):
        self.curve = curve
        self.t = t
        if isinstance(curve, Polyline):
            self.cum = _polyline_cumulative(curve, t)
        else:
            self.cum = np.concatenate([[0.0], np.cumsum(self._panel(t[:-1], t[1:]))])

    def _panel(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        s, wk, _ = gk15()
        h = (b - a)[..., None]
        # two half panels keep the rule accurate on long grid steps
        m = 0.5 * (a + b)[..., None]
        nodes1 = a[..., None] + (m - a[..., None]) * s
        nodes2 = m + (b[..., None] - m) * s
        v1 = np.abs(self.curve.deriv(nodes1)) @ wk
        v2 = np.abs(self.curve.deriv(nodes2)) @ wk
        return 0.5 * h[..., 0] * (v1 + v2)

    def at(self, t):
        t = np.asarray(t, dtype=float)
        if isinstance(self.curve, Polyline):
            return _polyline_cumulative(self.curve, t) - _polyline_cumulative(self.curve, self.t[:1])[0]
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        return self.cum[i] + self._panel(self.t[i], t)


def distance_to_curve(curve: Curve, w: complex, window: CurveWindow | None = None):
    """``(delta, nearest_t)``: dense sampling of ``window`` then local refinement.

    Refinement is damped Newton on ``|w - eval(t)|^2`` between the grid
    neighbours of the best sample, falling back to a bounded scalar
    minimizer; the result never exceeds the best grid sample.
    """
    window = window or curve.window
    w = complex(w)
    dense = CurveWindow(window.t_lo, window.t_hi, max(window.sample_count, 2001))
    t, pts, _ = curve_window_samples(curve, dense)
    dist = np.abs(w - pts)
    i = int(np.argmin(dist))
    if dist[i] < 1e-14:
        raise ValueError(f"point {w} lies on the curve")
    if i in (0, t.size - 1) and curve.unbounded:
        sgn = -1.0 if i == 0 else 1.0
        slope = -2 * np.real(np.conj(w - pts[i]) * curve.deriv(t[i])) * sgn
        if slope < 0:
            raise WindowInsufficientError(
                f"nearest sample of {w} is at the window edge t={t[i]}; widen the window")
    lo = t[max(i - 1, 0)]
    hi = t[min(i + 1, t.size - 1)]
    best_t, best_d = t[i], dist[i]

    def f(s):
        return abs(w - complex(curve.eval(s)))

    s = t[i]
    for _ in range(50):
        D = w - complex(curve.eval(s))
        g1 = complex(curve.deriv(s))
        g2 = complex(curve.deriv2(s))
        f1 = -2 * (np.conj(D) * g1).real
        f2 = 2 * abs(g1) ** 2 - 2 * (np.conj(D) * g2).real
        if f2 <= 0:
            break
        step = -f1 / f2
        new = min(max(s + step, lo), hi)
        for _ in range(30):
            if f(new) <= abs(D):
                break
            new = 0.5 * (s + new)
        if abs(new - s) <= 1e-12:
            s = new
            break
        s = new
    if f(s) < best_d:
        best_t, best_d = s, f(s)
    if best_t == t[i] and hi > lo:
        r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if r.fun < best_d:
            best_t, best_d = float(r.x), float(r.fun)
    return float(best_d), float(best_t)


def chord_arc_constant(curve: Curve, window: CurveWindow | None = None):
    """Sup of ``arc(t1, t2) / |eval(t1) - eval(t2)|`` over sampled pairs.

    Returns ``(constant, (t1, t2))``; the discrete argmax is refined by
    alternating golden-section searches between neighbouring samples.
    """
    window = window or curve.window
    t, pts, _ = curve_window_samples(curve, window)
    if t.size > 1200:
        keep = np.unique(np.concatenate([np.linspace(0, t.size - 1, 1200).astype(int)]))
        t, pts = t[keep], pts[keep]
    table = _ArcTable(curve, t)
    arc = table.cum
    chord = np.abs(pts[:, None] - pts[None, :])
    iu = np.triu_indices(t.size, 1)
    ch = chord[iu]
    if np.any(ch < 1e-14):
        k = int(np.argmin(ch))
        raise InjectivityError(
            f"eval({t[iu[0][k]]}) and eval({t[iu[1][k]]}) coincide")
    ratio = (arc[iu[1]] - arc[iu[0]]) / ch
    k = int(np.argmax(ratio))
    i, j = int(iu[0][k]), int(iu[1][k])

    def value(a, b):
        if b <= a:
            return 1.0
        num = float(table.at(b) - table.at(a))
        den = abs(complex(curve.eval(b)) - complex(curve.eval(a)))
        return num / den if den > 0 else math.inf

    t1, t2 = float(t[i]), float(t[j])
    best = value(t1, t2)
    lo1, hi1 = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    lo2, hi2 = t[max(j - 1, 0)], t[min(j + 1, t.size - 1)]
    for _ in range(3):
        r = minimize_scalar(lambda s: -value(s, t2), bounds=(lo1, min(hi1, t2)), method="bounded",
                            options={"xatol": 1e-12 * (1 + abs(t1))})
        if -r.fun > best:
            t1, best = float(r.x), -r.fun
        r = minimize_scalar(lambda s: -value(t1, s), bounds=(max(lo2, t1), hi2), method="bounded",
                            options={"xatol": 1e-12 * (1 + abs(t2))})
        if -r.fun > best:
            t2, best = float(r.x), -r.fun
    return max(value(t1, t2), 1.0), (t1, t2)


def _ball_length(curve: Curve, table: _ArcTable, pts: np.ndarray, center: complex, radii: np.ndarray):
    """``arc length of {t in grid window : |eval(t) - center| < r}`` for each r."""
    t = table.t
    d = np.abs(pts - center)[None, :] - radii[:, None]
    inside = d < 0
    out = np.zeros(radii.size)
    for k in range(radii.size):
        ins = inside[k]
        if not ins.any():
            continue
        edges = np.diff(ins.astype(np.int8))
        starts = list(np.flatnonzero(edges == 1))
        ends = list(np.flatnonzero(edges == -1))
        lo_t, hi_t = [], []
        if ins[0]:
            lo_t.append(t[0])
        for s in starts:
            lo_t.append(_crossing(curve, center, radii[k], t[s], t[s + 1], d[k, s], d[k, s + 1]))
        for e in ends:
            hi_t.append(_crossing(curve, center, radii[k], t[e], t[e + 1], d[k, e], d[k, e + 1]))
        if ins[-1]:
            hi_t.append(t[-1])
        a = table.at(np.array(lo_t))
        b = table.at(np.array(hi_t))
        out[k] = float(np.sum(b - a))
    return out


def _crossing(curve, center, r, ta, tb, da, db):
    s = ta + (tb - ta) * da / (da - db)
    for _ in range(4):
        D = complex(curve.eval(s)) - center
        g = complex(curve.deriv(s))
        f = abs(D) - r
        fp = (np.conj(D) * g).real / abs(D) if abs(D) > 0 else 0.0
        if fp == 0:
            break
        new = min(max(s - f / fp, ta), tb)
        if abs(new - s) < 1e-15 * (1 + abs(s)):
            break
        s = new
    return s


def ahlfors_constant(curve: Curve, window: CurveWindow | None = None, radii=None, centers=None):
    """Sup of ``length(curve within B(z, r)) / r`` over on-curve centers ``z``.

    Centers are window samples (or the given parameters ``centers``).
    Restricting centers to the curve loses at most a factor 2 against
    arbitrary centers, since ``B(z, r)`` meeting the curve at ``z'`` lies in
    ``B(z', 2r)``.  Returns ``(constant, (center_t, radius))``.
    """
    window = window or curve.window
    fine = CurveWindow(window.t_lo, window.t_hi, max(4 * window.sample_count, 2001))
    t, pts, _ = curve_window_samples(curve, fine)
    table = _ArcTable(curve, t)
    if radii is None:
        span = abs(complex(curve.eval(window.t_hi)) - complex(curve.eval(window.t_lo)))
        radii = np.geomspace(span * 1e-3, span / 2, 24)
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if centers is None:
        centers, _, _ = curve_window_samples(curve, window)
    centers = np.asarray(centers, dtype=float)
    best, witness = 0.0, (float(centers[0]), float(radii[0]))
    for tc in centers:
        zc = complex(curve.eval(tc))
        vals = _ball_length(curve, table, pts, zc, radii) / radii
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, witness = float(vals[k]), (float(tc), float(radii[k]))
    return best, witness


def ahlfors_at(curve: Curve, window: CurveWindow, center_t: float, radius: float) -> float:
    fine = CurveWindow(window.t_lo, window.t_hi, max(4 * window.sample_count, 2001))
    t, pts, _ = curve_window_samples(curve, fine)
    table = _ArcTable(curve, t)
    zc = complex(curve.eval(center_t))
    return float(_ball_length(curve, table, pts, zc, np.array([radius]))[0] / radius)


def ball_length(curve: Curve, center: complex, radii, window: CurveWindow | None = None) -> np.ndarray:
    """Length of the curve inside ``B(center, r)`` for each radius (any center)."""
    window = window or curve.window
    fine = CurveWindow(window.t_lo, window.t_hi, max(4 * window.sample_count, 2001))
    t, pts, _ = curve_window_samples(curve, fine)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    return _ball_length(curve, _ArcTable(curve, t), pts, complex(center), radii)


@dataclass
class MeyerDavidValue:
    value: float
    error_estimate: float
    tail: float
    finite_curve_only: bool = False
    window: tuple = ()

    def __float__(self):
        return self.value


def meyer_david_ratio(curve: Curve, w: complex, window: CurveWindow | None = None,
                      tol: float = 1e-9, delta: float | None = None) -> MeyerDavidValue:
    """``delta(w) * integral over the curve of |dz| / |z - w|^2``.

    The window part is integrated adaptively; each unbounded end adds the
    midpoint of its tail bounds, and the half-gap goes into the error.
    The window grows (doubling its reach past the nearest point) until the
    total error is below ``tol``, or a size cap is hit, in which case the
    reported error says what was reached.
    """
    window = window or curve.window
    w = complex(w)
    if delta is None:
        delta = float(curve.distance(w)[0][0])
    if delta <= 0:
        raise ValueError(f"{w} lies on the curve")

    def integrand(t):
        return np.abs(curve.deriv(t)) / np.abs(curve.eval(t) - w) ** 2

    def piece(a, b, extra=(), level=0):
        # later extensions get geometrically smaller budgets so the sum stays below tol / 4
        bps = sorted({x for x in (*curve.breakpoints, *extra) if a < x < b})
        atol = tol / (8 * delta) * 0.5 ** level
        spec = QuadratureSpec(rel_tol=min(1e-3, tol / 8), abs_tol=atol, max_subdivisions=200000)
        return integrate_1d(integrand, (a, b), spec, breakpoints=bps)

    lo, hi = window.t_lo, window.t_hi
    if not curve.unbounded:
        body = piece(lo, hi)
        return MeyerDavidValue(delta * float(body.value), delta * body.error_estimate, 0.0, True, (lo, hi))
    near_t = float(curve.nearest_parameter(w)[0])
    lo, hi = min(lo, near_t - 1.0), max(hi, near_t + 1.0)
    body = piece(lo, hi, (near_t,))
    total, body_err = float(body.value), body.error_estimate
    cap = 1e7 * max(1.0, hi - lo)
    level = 0
    while True:
        tail_mid = tail_err = 0.0
        for sign, edge in ((1, hi), (-1, lo)):
            lv, uv = curve.tail_bounds(w, edge, sign)
            tail_mid += 0.5 * (lv + uv)
            tail_err += 0.5 * (uv - lv)
        err = delta * (body_err + tail_err)
        if err <= tol or hi - lo > cap:
            if not math.isfinite(err):
                raise WindowInsufficientError(f"no finite tail bound for w={w} on [{lo}, {hi}]")
            return MeyerDavidValue(float(delta * (total + tail_mid)), float(err), float(delta * tail_mid),
                                   False, (float(lo), float(hi)))
        level += 1
        new_lo = near_t - 2 * (near_t - lo)
        new_hi = near_t + 2 * (hi - near_t)
        left, right = piece(new_lo, lo, level=level), piece(hi, new_hi, level=level)
        total += float(left.value) + float(right.value)
        body_err += left.error_estimate + right.error_estimate
        lo, hi = new_lo, new_hi


@dataclass
class DiagnosticsReport:
    curve: str
    params: dict
    window: tuple
    chord_arc_constant: float
    chord_arc_witness: tuple
    ahlfors_constant: float
    ahlfors_witness: tuple
    meyer_david_sup: float
    meyer_david_witness: complex
    meyer_david_error: float
    finite_curve_only: bool = False
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["meyer_david_witness"] = [self.meyer_david_witness.real, self.meyer_david_witness.imag]
        d["chord_arc_witness"] = list(self.chord_arc_witness)
        d["ahlfors_witness"] = list(self.ahlfors_witness)
        d["window"] = list(self.window)
        return d


def default_probes(curve: Curve, window: CurveWindow, n: int = 5):
    """``n x n`` probe points off the curve: window abscissae times distance levels."""
    ts = np.linspace(window.t_lo, window.t_hi, n + 2)[1:-1]
    base = curve.eval(ts)
    tang = curve.deriv(ts)
    normal = 1j * tang / np.abs(tang)
    levels = np.geomspace(0.5, 8.0, n)
    probes = []
    for b, nv in zip(base, normal):
        for lv in levels:
            probes.append(complex(b + lv * nv))
    return probes


def diagnose(curve: Curve, window: CurveWindow | None = None, radii=None, probes=None,
             tol: float = 1e-6) -> DiagnosticsReport:
    window = window or curve.window
    ca, ca_w = chord_arc_constant(curve, window)
    ah, ah_w = ahlfors_constant(curve, window, radii)
    probes = default_probes(curve, window) if probes is None else probes
    best = None
    for w in probes:
        md = meyer_david_ratio(curve, w, window, tol)
        if best is None or md.value > best[0].value:
            best = (md, w)
    md, w = best
    return DiagnosticsReport(
        curve=curve.name, params=curve.params(), window=(window.t_lo, window.t_hi),
        chord_arc_constant=ca, chord_arc_witness=ca_w,
        ahlfors_constant=ah, ahlfors_witness=ah_w,
        meyer_david_sup=md.value, meyer_david_witness=complex(w), meyer_david_error=md.error_estimate,
        finite_curve_only=md.finite_curve_only,
    )
