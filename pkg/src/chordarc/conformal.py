"""Explicit conformal maps of the upper and lower half-planes.

``Power(alpha)`` sends the upper half-plane onto the sector
``0 < arg w < alpha*pi``, and ``ExteriorPower(alpha)`` sends the lower
half-plane onto its complement.  ``GratingMap(c)`` is ``z + c e^{iz}``.
All maps fix infinity and use the principal branch ``arg in (-pi, pi]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InversionError, MonotonicityError, UnsupportedDomainError
from .geometry import Curve, CurveWindow, Grating, Line, Parabola, SectorBoundary, Wiggle, grating_nearest

__all__ = [
    "ConformalMap", "IdentityH", "IdentityL", "Power", "ExteriorPower", "GratingMap",
    "Domain", "SewingMap", "parse_domain", "halfplane", "sector", "grating",
    "map_eval_derivs", "map_inverse", "poincare_ratio", "vertical_ray_point",
    "boundary_value", "sewing_eval", "quasisymmetric_constant", "cauchy_derivatives",
]

RICHARDSON_EPS = (1e-3, 1e-4, 1e-5)


def _falling(a: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= a - j
    return out


def _pos_power_dd(x, y, d, a):
    """``(x**a - y**a) / (x - y)`` for positive ``x, y`` with ``d = x - y``."""
    tiny = np.abs(d) <= 1e-300
    safe = np.where(tiny, 1.0, d)
    val = y ** a * np.expm1(a * np.log1p(safe / y)) / safe
    return np.where(tiny, a * y ** (a - 1), val)


class ConformalMap:
    """Holomorphic bijection from a half-plane (``source`` ``"H"`` or ``"L"``)."""

    source = "H"

    @property
    def name(self) -> str:
        return type(self).__name__

    def params(self) -> dict:
        return {}

    def eval(self, z):
        return self.derivs(z, 0)[0]

    def derivs(self, z, k_max: int):
        """List ``[f(z), f'(z), ..., f^(k_max)(z)]`` (vectorized)."""
        raise NotImplementedError

    def deriv(self, z, k: int = 1):
        return self.derivs(z, k)[k]

    def trace(self, x):
        """Boundary values on the real axis (limit from the source side)."""
        raise NotImplementedError

    def trace_dd(self, x, y, d=None):
        """``(trace(x) - trace(y)) / (x - y)`` without cancellation."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y if d is None else np.asarray(d, dtype=float)
        safe = np.where(d == 0, 1.0, d)
        return (self.trace(x) - self.trace(y)) / safe

    def seed(self, w):
        return np.asarray(w, dtype=complex)

    def in_source(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return z.imag > 0 if self.source == "H" else z.imag < 0

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.name}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.name, tuple(self.params().items())))


class IdentityH(ConformalMap):
    source = "H"

    def derivs(self, z, k_max):
        z = np.asarray(z, dtype=complex)
        out = [z, np.ones_like(z)]
        out += [np.zeros_like(z)] * (k_max - 1)
        return out[: k_max + 1]

    def trace(self, x):
        return np.asarray(x, dtype=float) + 0j

    def trace_dd(self, x, y, d=None):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape) + 0j


class IdentityL(IdentityH):
    source = "L"


class Power(ConformalMap):
    """``z**alpha`` on the upper half-plane, onto the sector of opening ``alpha*pi``."""

    source = "H"

    def __init__(self, alpha: float):
        if not 0 < alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
        self.alpha = float(alpha)

    def params(self):
        return {"alpha": self.alpha}

    @property
    def ray(self) -> complex:
        return complex(math.cos(math.pi * self.alpha), math.sin(math.pi * self.alpha))

    def derivs(self, z, k_max):
        z = np.asarray(z, dtype=complex)
        logz = np.log(z)
        return [_falling(self.alpha, k) * np.exp((self.alpha - k) * logz) for k in range(k_max + 1)]

    def trace(self, x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x) ** self.alpha
        return np.where(x >= 0, r + 0j, r * self.ray)

    def trace_dd(self, x, y, d=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y if d is None else np.asarray(d, dtype=float)
        a = self.alpha
        pos = (x > 0) & (y > 0)
        neg = (x < 0) & (y < 0)
        xs = np.where(pos | neg, np.abs(x), 1.0)
        ys = np.where(pos | neg, np.abs(y), 1.0)
        same = _pos_power_dd(xs, ys, np.where(pos, d, np.where(neg, -d, 0.0)), a)
        safe = np.where(pos | neg | (d == 0), 1.0, d)
        direct = (self.trace(x) - self.trace(y)) / safe
        return np.where(pos, same + 0j, np.where(neg, -same * self.ray, direct))

    def seed(self, w):
        w = np.asarray(w, dtype=complex)
        th = np.angle(w)
        # the sector reaches past arg = pi when alpha > 1
        th = np.where((th < 0) & (th + 2 * math.pi < self.alpha * math.pi + 1e-9), th + 2 * math.pi, th)
        return np.abs(w) ** (1 / self.alpha) * np.exp(1j * th / self.alpha)


class ExteriorPower(ConformalMap):
    """``z**(2 - alpha)`` on the lower half-plane.

    The image is the complement of the closed sector ``0 <= arg w <= alpha*pi``;
    the positive axis goes to the ray ``arg = 0`` and the negative axis to
    the ray ``arg = alpha*pi``, matching :class:`Power`.
    """

    source = "L"

    def __init__(self, alpha: float):
        if not 0 < alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
        self.alpha = float(alpha)
        self.beta = 2.0 - self.alpha
        # fixed branch: check the two boundary rays once
        ray = complex(math.cos(math.pi * self.alpha), math.sin(math.pi * self.alpha))
        if abs(complex(self.trace(-1.0)) - ray) > 1e-12 or abs(complex(self.trace(1.0)) - 1) > 1e-12:
            raise AssertionError("exterior power branch does not match the sector rays")

    def params(self):
        return {"alpha": self.alpha}

    @property
    def ray(self) -> complex:
        return complex(math.cos(math.pi * self.alpha), math.sin(math.pi * self.alpha))

    def derivs(self, z, k_max):
        z = np.asarray(z, dtype=complex)
        logz = np.log(z)
        return [_falling(self.beta, k) * np.exp((self.beta - k) * logz) for k in range(k_max + 1)]

    def trace(self, x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x) ** self.beta
        return np.where(x >= 0, r + 0j, r * np.exp(-1j * math.pi * self.beta))

    def trace_dd(self, x, y, d=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y if d is None else np.asarray(d, dtype=float)
        b = self.beta
        pos = (x > 0) & (y > 0)
        neg = (x < 0) & (y < 0)
        xs = np.where(pos | neg, np.abs(x), 1.0)
        ys = np.where(pos | neg, np.abs(y), 1.0)
        same = _pos_power_dd(xs, ys, np.where(pos, d, np.where(neg, -d, 0.0)), b)
        safe = np.where(pos | neg | (d == 0), 1.0, d)
        direct = (self.trace(x) - self.trace(y)) / safe
        return np.where(pos, same + 0j, np.where(neg, -same * np.exp(-1j * math.pi * b), direct))

    def seed(self, w):
        w = np.asarray(w, dtype=complex)
        th = np.angle(w)
        th = np.where(th > 0, th - 2 * math.pi, th)
        return np.abs(w) ** (1 / self.beta) * np.exp(1j * th / self.beta)


class GratingMap(ConformalMap):
    """``z + c e^{iz}`` on the upper half-plane; its boundary is ``Grating(c)``."""

    source = "H"

    def __init__(self, c: float):
        if not 0 <= c < 1:
            raise ValueError(f"grating needs 0 <= c < 1, got {c}")
        self.c = float(c)

    def params(self):
        return {"c": self.c}

    def derivs(self, z, k_max):
        z = np.asarray(z, dtype=complex)
        e = self.c * np.exp(1j * z)
        out = [z + e, 1.0 + 1j * e]
        for k in range(2, k_max + 1):
            out.append((1j) ** k * e)
        return out[: k_max + 1]

    def trace(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.c * np.exp(1j * x)

    def trace_dd(self, x, y, d=None):
        return Grating(self.c).divided_difference(x, y, d)


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """A curve with its interior map (and exterior map where one is known)."""

    curve: Curve
    interior_map: ConformalMap | None
    exterior_map: ConformalMap | None = None
    kind: str = "custom"

    @property
    def params(self) -> dict:
        return self.curve.params()

    @property
    def label(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.kind}:{args}" if args else self.kind

    def require_interior(self) -> ConformalMap:
        if self.interior_map is None:
            raise UnsupportedDomainError(f"{self.label} has no interior map")
        return self.interior_map

    def require_exterior(self) -> ConformalMap:
        if self.exterior_map is None:
            raise UnsupportedDomainError(f"{self.label} has no exterior map")
        return self.exterior_map

    def delta(self, w):
        """Distance from points ``w`` to the curve."""
        return self.curve.distance(w)[0]

    def side(self, w):
        return self.curve.side(w)

    def delta_pullback(self, z, side: str = "interior"):
        """``delta(phi(z))`` computed from the preimage ``z`` for accuracy near the boundary."""
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.ravel()
        m = self.require_interior() if side == "interior" else self.require_exterior()
        if isinstance(m, IdentityH):
            out = np.abs(z.imag)
        elif isinstance(m, Power):
            a, b = np.arctan2(z.imag, z.real), np.arctan2(z.imag, -z.real)
            out = np.abs(z) ** m.alpha * _sector_factor(m.alpha * a, m.alpha * b)
        elif isinstance(m, ExteriorPower):
            a, b = np.arctan2(-z.imag, z.real), np.arctan2(-z.imag, -z.real)
            out = np.abs(z) ** m.beta * _sector_factor(m.beta * a, m.beta * b)
        elif isinstance(m, GratingMap):
            out = grating_nearest(m.c, None, preimage=z)[0]
        else:
            out = self.delta(m.eval(z))
        return out.reshape(shape)


def _sector_factor(a, b):
    # distance from e^{ia} (angle a from one ray, b from the other) to the two rays
    fa = np.where(a <= math.pi / 2, np.sin(np.minimum(a, math.pi / 2)), 1.0)
    fb = np.where(b <= math.pi / 2, np.sin(np.minimum(b, math.pi / 2)), 1.0)
    return np.minimum(fa, fb)


def halfplane() -> Domain:
    return Domain(Line(), IdentityH(), IdentityL(), "halfplane")


def sector(alpha: float) -> Domain:
    return Domain(SectorBoundary(alpha), Power(alpha), ExteriorPower(alpha), "sector")


def grating(c: float) -> Domain:
    return Domain(Grating(c), GratingMap(c), None, "grating")


_DOMAIN_RE = re.compile(r"^\s*([a-z_]+)\s*(?::(.*))?$")


def parse_domain(text: str) -> Domain:
    """Parse ``halfplane``, ``sector:alpha=0.5``, ``grating:c=0.6`` (and geometry-only kinds)."""
    m = _DOMAIN_RE.match(text.lower())
    if not m:
        raise ValueError(f"cannot parse domain {text!r}")
    kind, rest = m.group(1), m.group(2) or ""
    params = {}
    for part in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = part.partition("=")
        if not val:
            raise ValueError(f"domain parameter {part!r} needs key=value")
        params[key.strip()] = float(val)
    try:
        if kind in ("halfplane", "line"):
            return halfplane()
        if kind == "sector":
            return sector(params["alpha"])
        if kind == "grating":
            return grating(params["c"])
        if kind == "parabola":
            return Domain(Parabola(params.get("a", 1.0)), None, None, "parabola")
        if kind == "wiggle":
            return Domain(Wiggle(int(params.get("depth", 3))), None, None, "wiggle")
    except KeyError as exc:
        raise ValueError(f"domain {kind!r} needs parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# operations


def _check_source(m: ConformalMap, z):
    z = np.asarray(z, dtype=complex)
    if not np.all(m.in_source(z)):
        side = "upper" if m.source == "H" else "lower"
        raise DomainError(f"{m.name} needs points in the open {side} half-plane")


def map_eval_derivs(m: ConformalMap, z, k_max: int = 1):
    if not 0 <= k_max <= 4:
        raise ValueError("k_max must lie in 0..4")
    _check_source(m, z)
    out = m.derivs(z, k_max)
    if np.ndim(z) == 0:
        return [complex(v) for v in out]
    return out


def cauchy_derivatives(f: Callable, z: complex, radius: float, k_max: int = 4, n: int = 64):
    """Numerical ``f^(k)(z)`` for ``k <= k_max`` from the trapezoid rule on a circle."""
    th = 2 * math.pi * np.arange(n) / n
    vals = np.asarray(f(z + radius * np.exp(1j * th)))
    out = []
    for k in range(k_max + 1):
        c = np.mean(vals * np.exp(-1j * k * th))
        out.append(complex(math.factorial(k) * c / radius ** k))
    return out


def _newton(m: ConformalMap, w, z, tol, max_steps):
    sgn = 1.0 if m.source == "H" else -1.0
    f0, f1 = m.derivs(z, 1)
    res = f0 - w
    for _ in range(max_steps):
        done = np.abs(res) <= tol
        if done.all():
            break
        step = res / f1
        lam = np.ones(z.shape)
        new = z - step
        for _ in range(40):
            ok = sgn * new.imag > 0
            nres = np.where(ok, m.derivs(np.where(ok, new, z), 0)[0] - w, np.inf)
            worse = (~ok | (np.abs(nres) > np.abs(res))) & ~done
            if not worse.any():
                break
            lam = np.where(worse, lam / 2, lam)
            new = np.where(worse, z - lam * step, new)
        z = np.where(done, z, new)
        f0, f1 = m.derivs(z, 1)
        res = f0 - w
    return z, res


def map_inverse(m: ConformalMap, w, tol: float = 1e-12, max_steps: int = 100):
    """Preimage of ``w`` by damped Newton from the asymptotic inverse.

    ``tol`` bounds ``|eval(z) - w|``; it is raised to ``8 eps |w|`` where
    that is larger.  Grating points that Newton cannot reach from the seed
    are recovered by continuation down the vertical line above ``w``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    tol_w = np.maximum(tol, 8 * np.finfo(float).eps * np.abs(w))
    sgn = 1.0 if m.source == "H" else -1.0
    z = np.atleast_1d(m.seed(w)).astype(complex)
    z = np.where(sgn * z.imag > 0, z, z.real + sgn * 1e-300j)
    z, res = _newton(m, w, z, tol_w, max_steps)
    bad = np.abs(res) > tol_w
    if bad.any() and isinstance(m, GratingMap):
        z[bad] = _grating_continuation(m, w[bad], tol_w[bad], max_steps)
        res = m.eval(z) - w
        bad = np.abs(res) > tol_w
    if bad.any():
        raise InversionError(f"{m.name} inverse did not converge at w={w[bad][0]}", z[bad][0])
    return complex(z[0]) if scalar else z


def _grating_continuation(m: "GratingMap", w, tol, max_steps):
    # the domain lies above a graph, so w + i s stays inside for s >= 0
    lift = 2.0 + 40.0
    z = w + 1j * lift
    s = lift
    while True:
        s = 0.0 if s < 1e-14 else 0.5 * s
        target = w + 1j * s
        z, _ = _newton(m, target, z, tol, max_steps)
        if s == 0.0:
            return z


def poincare_ratio(domain: Domain, z):
    """``delta(phi(z)) / (Im z |phi'(z)|)``; lies in ``[1/4, 4]`` by Koebe."""
    m = domain.require_interior()
    _check_source(m, z)
    z = np.asarray(z, dtype=complex)
    d = domain.delta_pullback(z)
    out = d / (np.abs(z.imag) * np.abs(m.derivs(z, 1)[1]))
    return float(out) if out.ndim == 0 else out


def vertical_ray_point(domain: Domain, w: complex, t: float, tol: float = 1e-12) -> complex:
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = domain.require_interior()
    z = map_inverse(m, w, tol)
    if t == 0:
        return complex(w)
    return complex(m.eval(z + 1j * t))


def boundary_value(m: ConformalMap, x, eps=RICHARDSON_EPS):
    """Limit of ``m`` at real ``x`` from the source side, by Richardson extrapolation.

    Vertical offsets are ``eps * |x|`` (``eps`` at ``x = 0``), so they stay
    small against the distance to the corner of a power map.  The three
    values are combined assuming an error expansion in integer powers of
    the offset.  Returns ``(value, error_estimate)``.
    """
    x = np.asarray(x, dtype=float)
    sgn = 1.0 if m.source == "H" else -1.0
    scale = np.where(x == 0, 1.0, np.abs(x))
    f = [m.eval(x + sgn * 1j * e * scale) for e in eps]
    r = eps[0] / eps[1]
    a1 = (r * f[1] - f[0]) / (r - 1)
    a2 = (r * f[2] - f[1]) / (r - 1)
    b = (r * r * a2 - a1) / (r * r - 1)
    return b, np.abs(b - a2)


def _curve_parameter(domain: Domain, w):
    """Curve parameter of a boundary point (signed arc length for sectors)."""
    curve = domain.curve
    if isinstance(curve, Line):
        return np.real(w)
    if isinstance(curve, SectorBoundary):
        w = np.asarray(w, dtype=complex)
        on_pos = np.abs(np.angle(w)) <= np.abs(np.angle(w * np.conj(curve.ray)))
        return np.where(on_pos, np.abs(w), -np.abs(w))
    return curve.nearest_parameter(w)


def sewing_eval(domain: Domain, x: float, tol: float = 1e-10) -> float:
    """``psi^{-1}(phi(x))`` from vertical boundary limits of both maps."""
    phi = domain.require_interior()
    psi = domain.require_exterior()
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(phi, IdentityH) and isinstance(psi, IdentityH):
        return float(x)
    target = float(_curve_parameter(domain, boundary_value(phi, x)[0]))

    def g(s):
        return float(_curve_parameter(domain, boundary_value(psi, s)[0])) - target

    lo, hi = -1.0, 1.0
    while g(lo) > 0:
        lo *= 2
        if lo < -1e300:
            raise MonotonicityError("sewing map failed to bracket")
    while g(hi) < 0:
        hi *= 2
        if hi > 1e300:
            raise MonotonicityError("sewing map failed to bracket")
    return brentq(g, lo, hi, xtol=tol * 1e-2, rtol=max(4 * np.finfo(float).eps, tol * 1e-2), maxiter=200)


@dataclass(frozen=True)
class SewingMap:
    domain: Domain
    tol: float = 1e-10

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.array([sewing_eval(self.domain, xi, self.tol) for xi in x.ravel()])
        return out.reshape(x.shape) if x.ndim else float(out[0])


def quasisymmetric_constant(h: Callable, window: CurveWindow, scales) -> float:
    """Sup of ``max(rho, 1/rho)``, ``rho = (h(x+s) - h(x)) / (h(x) - h(x-s))``.

    Centers are ``window.sample_count`` points across the window.
    """
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    x = np.linspace(window.t_lo, window.t_hi, window.sample_count)
    pts = np.unique(np.concatenate([x, *(x + s for s in scales), *(x - s for s in scales)]))
    hv = np.asarray(h(pts), dtype=float)
    if np.any(np.diff(hv) <= 0):
        k = int(np.argmin(np.diff(hv)))
        raise MonotonicityError(f"h is not increasing between {pts[k]} and {pts[k + 1]}")
    lookup = dict(zip(pts.tolist(), hv.tolist()))
    best = 1.0
    for s in scales:
        for xi in x:
            up = lookup[xi + s] - lookup[xi]
            down = lookup[xi] - lookup[xi - s]
            rho = up / down
            best = max(best, rho, 1 / rho)
    return best
