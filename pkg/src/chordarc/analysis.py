"""Harmonic test functions and the Besov-type functionals built on them.

Test functions are ``u = u1 + conj(u2)`` with ``u1``, ``u2`` finite sums of
pole terms ``coef * (z - w)**(-k)``.  Every derivative is in closed form,
and differences ``u(a) - u(b)`` are formed through divided differences so
that near-diagonal quotients keep full relative accuracy.

Interior energies are integrals over the source half-plane of the
conformal map (pullback coordinates), so only ``delta(phi(z))`` depends on
the curve.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .conformal import Domain, GratingMap, IdentityH, map_inverse
from .errors import DivergenceError, DomainError, SingularityError, TruncationError
from .geometry import Curve, CurveWindow, Line, Polyline
from .quadrature import Axis, IntegralValue, QuadratureSpec, integrate_1d, integrate_2d_graded, integrate_pair_singular

__all__ = [
    "PoleTerm", "HarmonicTestFunction", "BoundaryFunction", "EnergyResult", "TailResult",
    "parse_test_function", "grad_norm", "interior_energy", "pullback_energy",
    "boundary_norm_line", "boundary_norm_curve", "bp_phi_norm", "poisson_extend",
    "carleson_box", "carleson_norm", "lusin_area", "lusin_average", "tail_integral",
    "douglas_constant",
]

SINGULAR_RADIUS = 1e-12


def _rising(k: int, n: int) -> int:
    out = 1
    for j in range(n):
        out *= k + j
    return out


@dataclass(frozen=True)
class PoleTerm:
    """``coef * (z - w)**(-k)``."""

    w: complex
    k: int = 1
    coef: complex = 1.0

    def __post_init__(self):
        if self.k < 1 or int(self.k) != self.k:
            raise ValueError(f"pole order must be a positive integer, got {self.k}")

    def deriv(self, z, n: int):
        return self.coef * (-1) ** n * _rising(self.k, n) * (z - self.w) ** (-(self.k + n))

    def dd(self, a, b):
        """``(term(a) - term(b)) / (a - b)`` without cancellation."""
        A = a - self.w
        B = b - self.w
        k = self.k
        num = sum(A ** j * B ** (k - 1 - j) for j in range(k))
        return -self.coef * num / (A ** k * B ** k)

    def text(self) -> str:
        return f"pole(w={_ctext(self.w)},k={self.k},coef={_ctext(self.coef)})"


def _ctext(v) -> str:
    v = complex(v)
    if v.imag == 0:
        return repr(v.real)
    if v.real == 0:
        return f"{v.imag!r}i"
    return f"{v.real!r}{v.imag:+}i"


@dataclass(frozen=True)
class HarmonicTestFunction:
    holo: tuple = ()
    anti: tuple = ()
    label: str = ""

    @property
    def poles(self) -> list[complex]:
        return [t.w for t in (*self.holo, *self.anti)]

    @property
    def is_zero(self) -> bool:
        return not any(t.coef != 0 for t in (*self.holo, *self.anti))

    def _check(self, z):
        for w in self.poles:
            if np.any(np.abs(z - w) < SINGULAR_RADIUS):
                raise SingularityError(f"evaluation within {SINGULAR_RADIUS} of the pole {w}")

    def part_derivs(self, z, n: int):
        """``(u1^(n)(z), u2^(n)(z))``."""
        z = np.asarray(z, dtype=complex)
        d1 = sum((t.deriv(z, n) for t in self.holo), np.zeros_like(z))
        d2 = sum((t.deriv(z, n) for t in self.anti), np.zeros_like(z))
        return d1, d2

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        self._check(z)
        u1, u2 = self.part_derivs(z, 0)
        return u1 + np.conj(u2)

    def dd_parts(self, a, b):
        a = np.asarray(a, dtype=complex)
        b = np.asarray(b, dtype=complex)
        shape = np.broadcast(a, b).shape
        d1 = sum((t.dd(a, b) for t in self.holo), np.zeros(shape, complex))
        d2 = sum((t.dd(a, b) for t in self.anti), np.zeros(shape, complex))
        return d1, d2

    def text(self) -> str:
        parts = [t.text() for t in self.holo] + [f"conj({t.text()})" for t in self.anti]
        return " + ".join(parts) if parts else "0"

    def scaled(self, a: complex, b: complex = 0) -> "HarmonicTestFunction":
        """``z -> u(a z + b)``, again a pole sum."""
        a, b = complex(a), complex(b)

        def move(t: PoleTerm):
            return PoleTerm((t.w - b) / a, t.k, t.coef * a ** (-t.k))

        def move_anti(t: PoleTerm):
            return PoleTerm((t.w - b) / a, t.k, t.coef * a ** (-t.k))
        return HarmonicTestFunction(tuple(map(move, self.holo)), tuple(map(move_anti, self.anti)), self.label)

    def admissibility(self, domain: Domain, side: str = "interior", min_pole_distance: float = 0.1) -> list[str]:
        """Reasons the function is not admissible on one side of ``domain`` (empty if fine)."""
        problems = []
        bad_side = 1 if side == "interior" else -1
        for w in self.poles:
            d = float(domain.delta(w)[0])
            if d < min_pole_distance:
                problems.append(f"pole {w} is {d:.3g} from the curve (minimum {min_pole_distance})")
            if int(domain.side(w)) == bad_side:
                problems.append(f"pole {w} lies inside the {side} domain")
        return problems

    def require_admissible(self, domain: Domain, side: str = "interior", min_pole_distance: float = 0.1):
        problems = self.admissibility(domain, side, min_pole_distance)
        if problems:
            raise DomainError("; ".join(problems))


_TERM_RE = re.compile(r"^pole\(([^()]*)\)$")
_CONJ_RE = re.compile(r"^conj\((.*)\)$")


def _parse_complex(text: str) -> complex:
    t = text.strip().replace(" ", "").replace("i", "j")
    if t in ("j", "+j", "-j"):
        t = t.replace("j", "1j")
    try:
        return complex(t)
    except ValueError:
        raise ValueError(f"cannot parse complex number {text!r}") from None


def _split_top(text: str) -> list[str]:
    # split on '+' outside parentheses
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "+" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_test_function(text: str) -> HarmonicTestFunction:
    """Parse ``pole(w=-1i,k=1,coef=1) + conj(pole(w=-2i,k=2,coef=0.5))``; ``0`` is zero."""
    holo, anti = [], []
    if text.strip() in ("0", ""):
        return HarmonicTestFunction((), (), text.strip())
    for part in _split_top(text):
        c = _CONJ_RE.match(part)
        m = _TERM_RE.match(c.group(1).strip() if c else part)
        if not m:
            raise ValueError(f"cannot parse term {part!r}")
        args = {}
        for kv in m.group(1).split(","):
            key, _, val = kv.partition("=")
            if not val:
                raise ValueError(f"pole argument {kv!r} needs key=value")
            args[key.strip()] = val.strip()
        unknown = set(args) - {"w", "k", "coef"}
        if unknown or "w" not in args:
            raise ValueError(f"pole needs w and optional k, coef; got {sorted(args)}")
        k = int(args.get("k", "1"))
        term = PoleTerm(_parse_complex(args["w"]), k, _parse_complex(args.get("coef", "1")))
        (anti if c else holo).append(term)
    return HarmonicTestFunction(tuple(holo), tuple(anti), text.strip())


def grad_norm(u: HarmonicTestFunction, z, n: int = 1):
    """``sqrt(|d^n u1/dz^n|^2 + |d^n conj(u2)/dzbar^n|^2)``."""
    if not 1 <= n <= 4:
        raise ValueError("n must lie in 1..4")
    z = np.asarray(z, dtype=complex)
    u._check(z)
    d1, d2 = u.part_derivs(z, n)
    out = np.hypot(np.abs(d1), np.abs(d2))
    return float(out) if out.ndim == 0 else out


def _bell(phis, n: int):
    """Bell polynomials ``B_{n,k}(phi', phi'', ...)`` for ``k = 1..n``, ``n <= 4``."""
    p1 = phis[1]
    if n == 1:
        return [p1]
    p2 = phis[2]
    if n == 2:
        return [p2, p1 ** 2]
    p3 = phis[3]
    if n == 3:
        return [p3, 3 * p1 * p2, p1 ** 3]
    p4 = phis[4]
    return [p4, 4 * p1 * p3 + 3 * p2 ** 2, 6 * p1 ** 2 * p2, p1 ** 4]


def _composed_grad_norm(u: HarmonicTestFunction, phis, n: int):
    """``|grad^n (u o phi)|`` from the map derivatives ``phis`` by Faa di Bruno."""
    w = phis[0]
    bell = _bell(phis, n)
    g1 = np.zeros_like(w)
    g2 = np.zeros_like(w)
    for k in range(1, n + 1):
        d1, d2 = u.part_derivs(w, k)
        g1 = g1 + d1 * bell[k - 1]
        g2 = g2 + d2 * bell[k - 1]
    return np.hypot(np.abs(g1), np.abs(g2))


# ---------------------------------------------------------------------------
# interior energies


@dataclass
class EnergyResult:
    value: float
    quadrature_error: float
    truncation_tail: float
    p: float
    n: int
    truncation: tuple | None = None
    converged: bool = True
    kind: str = "distance"
    side: str = "interior"

    def __float__(self):
        return self.value

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["truncation"] = None if self.truncation is None else [list(r) for r in self.truncation]
        return d


def _pole_hints(u: HarmonicTestFunction, domain: Domain, side: str):
    """Center and scale of the source-plane region where ``u o phi`` varies."""
    if not u.poles:
        return 0.0, 1.0
    m = domain.require_interior() if side == "interior" else domain.require_exterior()
    centers, scales = [], []
    for w in u.poles:
        d = float(domain.delta(w)[0])
        t = float(domain.curve.nearest_parameter(w)[0])
        if isinstance(m, IdentityH):
            x, s = t, d
        elif isinstance(m, GratingMap):
            x, s = t, d
        elif hasattr(m, "alpha"):
            expo = m.alpha if side == "interior" else m.beta
            x = math.copysign(abs(t) ** (1 / expo), t) if t != 0 else 0.0
            s = max(d ** (1 / expo), 1e-12)
        else:
            x, s = t, d
        centers.append(x)
        scales.append(s)
    k = int(np.argmin(scales))
    return centers[k], max(scales[k], 1e-12)


def _energy_integrand(u, domain, m, p, n, kind, side):
    sgn = 1.0 if side == "interior" else -1.0
    np_2 = n * p - 2

    def f(x, y):
        z = x + sgn * 1j * y
        phis = m.derivs(z, n)
        dphi = np.abs(phis[1])
        if kind == "composed":
            g = _composed_grad_norm(u, phis, n)
            return g ** p * y ** np_2
        d1, d2 = u.part_derivs(phis[0], n)
        g = np.hypot(np.abs(d1), np.abs(d2))
        if kind == "distance":
            weight = domain.delta_pullback(z, side)
        else:
            weight = y * dphi
        return g ** p * weight ** np_2 * dphi ** 2
    return f


def _energy(u, domain, p, n, quad, kind, side, min_pole_distance):
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not 1 <= n <= 4:
        raise ValueError("n must lie in 1..4")
    quad = quad or QuadratureSpec()
    m = domain.require_interior() if side == "interior" else domain.require_exterior()
    if u.is_zero:
        return EnergyResult(0.0, 0.0, 0.0, p, n, quad.truncation, True, kind, side)
    u.require_admissible(domain, side, min_pole_distance)
    f = _energy_integrand(u, domain, m, p, n, kind, side)
    xc, s = _pole_hints(u, domain, side)
    brk = sorted({xc - s, xc, xc + s} | ({0.0} if hasattr(m, "alpha") else set()))
    expo = n * p - 2

    def run(xr, yr):
        # geometric breakpoints keep wide finite rectangles from hiding the peak between nodes
        steps = s * 4.0 ** np.arange(1, 40)
        xb = [b for b in sorted({*brk, *(xc - steps), *(xc + steps)}) if xr[0] < b < xr[1]]
        yb = [b for b in (s, *steps) if b < yr[1]]
        return integrate_2d_graded(f, (xr, yr), quad, grade_axis="y", grade_exponent=min(expo, 0.0),
                                   grade_edge="lo", x_breakpoints=xb if math.isfinite(xr[0]) else brk,
                                   y_breakpoints=yb if math.isfinite(yr[1]) else [s],
                                   x_scale=max(s, abs(xc), 1.0), y_scale=max(s, 1.0))

    if quad.truncation is None:
        r = run((-math.inf, math.inf), (0.0, math.inf))
        return EnergyResult(float(r.value), r.error_estimate, 0.0, p, n, None, r.converged, kind, side)
    (x0, x1), (_, y1) = quad.truncation
    body = run((x0, x1), (0.0, y1))
    # the complement of the rectangle, integrated to certify the truncation
    tail = IntegralValue(0.0, 0.0, 0, True)
    for xr, yr in (((-math.inf, x0), (0.0, math.inf)), ((x1, math.inf), (0.0, math.inf)), ((x0, x1), (y1, math.inf))):
        piece = integrate_2d_graded(f, (xr, yr), quad, grade_axis="y" if yr[0] == 0 else None,
                                    grade_exponent=min(expo, 0.0), grade_edge="lo",
                                    x_scale=max(s, 1.0), y_scale=max(s, 1.0))
        tail = tail + piece
    bound = abs(float(tail.value)) + tail.error_estimate
    target = quad.target(float(body.value))
    if bound > target / 2:
        raise TruncationError(f"tail beyond the truncation is {bound:.3g}, above half the tolerance {target / 2:.3g}")
    return EnergyResult(float(body.value), body.error_estimate, bound, p, n, quad.truncation, body.converged, kind, side)


def interior_energy(u: HarmonicTestFunction, domain: Domain, p: float, n: int = 1,
                    quad: QuadratureSpec | None = None, *, weight: str = "distance",
                    side: str = "interior", min_pole_distance: float = 0.1) -> EnergyResult:
    """``integral over Omega of |grad^n u|^p delta^(np-2) dm``, in pullback coordinates.

    ``weight="pullback"`` replaces ``delta(phi(z))`` by ``Im z |phi'(z)|``.
    ``side="exterior"`` integrates over the exterior domain with the
    exterior map.
    """
    if weight not in ("distance", "pullback"):
        raise ValueError("weight must be 'distance' or 'pullback'")
    return _energy(u, domain, p, n, quad, weight, side, min_pole_distance)


def pullback_energy(u: HarmonicTestFunction, domain: Domain, p: float, n: int = 1,
                    quad: QuadratureSpec | None = None, *, side: str = "interior",
                    min_pole_distance: float = 0.1) -> EnergyResult:
    """``integral over the half-plane of |grad^n (u o phi)|^p y^(np-2) dm``."""
    return _energy(u, domain, p, n, quad, "composed", side, min_pole_distance)


# ---------------------------------------------------------------------------
# boundary functions and norms


class BoundaryFunction:
    """A function on boundary points with a cancellation-free difference quotient.

    Build with :meth:`trace` (restriction of a harmonic test function),
    :meth:`formula` (a vectorized callable of complex points) or
    :meth:`samples` (real abscissae and values, linear interpolation).
    """

    def __init__(self, values: Callable, quotient: Callable, provenance: str, label: str = "",
                 source: HarmonicTestFunction | None = None):
        self._values = values
        self._quotient = quotient
        self.provenance = provenance
        self.label = label
        self.source = source

    @classmethod
    def trace(cls, u: HarmonicTestFunction) -> "BoundaryFunction":
        def quotient(a, b, D):
            d1, d2 = u.dd_parts(a, b)
            return d1 * D + np.conj(d2 * D)
        return cls(u, quotient, "trace", u.label or u.text(), u)

    @classmethod
    def formula(cls, f: Callable, label: str = "formula") -> "BoundaryFunction":
        def quotient(a, b, D):
            # D * d = a - b; recover d from D (nonzero for injective curves)
            return (f(a) - f(b)) * D / np.where(a == b, 1.0, a - b)
        return cls(f, quotient, "formula", label)

    @classmethod
    def samples(cls, x, values, label: str = "samples") -> "BoundaryFunction":
        x = np.asarray(x, dtype=float)
        v = np.asarray(values, dtype=complex)
        if np.any(np.diff(x) <= 0):
            raise ValueError("sample abscissae must increase")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")

        def f(z):
            r = np.real(z)
            return np.interp(r, x, v.real) + 1j * np.interp(r, x, v.imag)
        return cls.formula(f, label)._with("samples")

    def _with(self, provenance: str) -> "BoundaryFunction":
        self.provenance = provenance
        return self

    def __call__(self, z):
        return self._values(np.asarray(z, dtype=complex))

    def quotient(self, a, b, D):
        """``(f(a) - f(b)) / d`` where ``a - b = D d`` with real ``d``."""
        return self._quotient(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex), D)


def _check_decay(f: BoundaryFunction, points_pos, points_neg):
    """Reject boundary data whose ends do not settle to one common value."""
    far_p = f(points_pos)
    far_n = f(points_neg)
    if not (np.all(np.isfinite(far_p)) and np.all(np.isfinite(far_n))):
        raise DivergenceError("boundary function is not finite far out")
    ref = max(1.0, float(np.max(np.abs(np.concatenate([far_p, far_n])))))
    # oscillation between the two ends and along each end must die out
    gap = np.abs(far_p - far_n)[:-1] + np.abs(np.diff(far_p)) + np.abs(np.diff(far_n))
    if gap[-1] > max(0.1 * gap[0], 1e-12 * ref):
        raise DivergenceError("boundary function has no common limit at infinity; the double integral diverges")


def _hints_from(f: BoundaryFunction, center: float | None, scale: float | None):
    if center is not None and scale is not None:
        return center, scale
    if f.source is not None and f.source.poles:
        poles = f.source.poles
        k = int(np.argmin([abs(w.imag) for w in poles]))
        c = poles[k].real if center is None else center
        s = max(abs(poles[k].imag), 1e-9) if scale is None else scale
        return c, s
    return (0.0 if center is None else center), (1.0 if scale is None else scale)


def boundary_norm_line(f: BoundaryFunction, p: float, quad: QuadratureSpec | None = None, *,
                       center: float | None = None, scale: float | None = None) -> IntegralValue:
    """``integral over R^2 of |f(x) - f(y)|^p / |x - y|^2``."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    quad = quad or QuadratureSpec()
    far = np.geomspace(1e6, 1e12, 4)
    _check_decay(f, far + 0j, -far + 0j)
    c, s = _hints_from(f, center, scale)

    def g(x, y, d):
        q = np.abs(f.quotient(x + 0j, y + 0j, np.ones_like(d)))
        return q ** p * np.abs(d) ** (p - 2)
    return integrate_pair_singular(g, (-math.inf, math.inf), p, quad, center=c, scale=s)


def boundary_norm_curve(f: BoundaryFunction, curve: Curve, p: float, window: CurveWindow | None = None,
                        quad: QuadratureSpec | None = None, *, center: float | None = None,
                        scale: float | None = None) -> IntegralValue:
    """``integral over the curve squared of |f(w) - f(z)|^p / |w - z|^2 |dw| |dz|``.

    Unbounded curves are integrated over all parameters (compactified);
    ``window`` fixes the parameter range for polylines.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    quad = quad or QuadratureSpec()
    if isinstance(curve, Line):
        return boundary_norm_line(f, p, quad, center=center, scale=scale)
    if curve.unbounded:
        far = np.geomspace(1e6, 1e12, 4)
        _check_decay(f, curve.eval(far), curve.eval(-far))
        square = (-math.inf, math.inf)
    else:
        window = window or curve.window
        square = (window.t_lo, window.t_hi)
    c, s = _hints_from(f, center, scale)

    def g(x, y, d):
        D = curve.divided_difference(y, x, d)
        q = np.abs(f.quotient(curve.eval(y), curve.eval(x), D))
        sp = np.abs(curve.deriv(x)) * np.abs(curve.deriv(y))
        return q ** p * np.abs(d) ** (p - 2) * sp / np.abs(D) ** 2
    return integrate_pair_singular(g, square, p, quad, center=c, scale=s)


def bp_phi_norm(f: BoundaryFunction, domain: Domain, p: float, quad: QuadratureSpec | None = None, *,
                side: str = "interior") -> IntegralValue:
    """``(1 / 4 pi^2) * integral over R^2 of |f(phi(x)) - f(phi(y))|^p / |x - y|^2``."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    quad = quad or QuadratureSpec()
    m = domain.require_interior() if side == "interior" else domain.require_exterior()
    far = np.geomspace(1e6, 1e12, 4)
    _check_decay(f, m.trace(far), m.trace(-far))
    c, s = 0.0, 1.0
    if f.source is not None and f.source.poles:
        # place the compactification where f o phi varies fastest
        fake = HarmonicTestFunction(f.source.holo, f.source.anti)
        c, s = _pole_hints(fake, domain, side)

    def g(x, y, d):
        D = m.trace_dd(y, x, d)
        q = np.abs(f.quotient(m.trace(y), m.trace(x), D))
        return q ** p * np.abs(d) ** (p - 2)
    r = integrate_pair_singular(g, (-math.inf, math.inf), p, quad, center=c, scale=s)
    k = 1.0 / (4 * math.pi ** 2)
    return IntegralValue(k * r.value, k * r.error_estimate, r.subdivisions_used, r.converged)


def douglas_constant() -> float:
    """Ratio of the line norm at p = 2 to the first-order energy of the extension."""
    return 4 * math.pi


# ---------------------------------------------------------------------------
# Poisson extension, Carleson boxes, Lusin area


def poisson_extend(f: BoundaryFunction, z: complex, quad: QuadratureSpec | None = None) -> complex:
    """``(1/pi) integral of y f(t) / ((x - t)^2 + y^2) dt`` via ``t = x + y tan(theta)``."""
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("Poisson extension needs a point in the upper half-plane")
    quad = quad or QuadratureSpec()
    x, y = z.real, z.imag
    far = np.geomspace(1e6, 1e12, 7)
    big = np.abs(np.concatenate([f(far + 0j), f(-far + 0j)]))
    if not np.all(np.isfinite(big)):
        raise DivergenceError("boundary function is not finite far out")
    grow = np.polyfit(np.log(np.concatenate([far, far])), np.log(np.maximum(big, 1e-300)), 1)[0]
    if grow > 1 - 1e-3 and big.max() > 1:
        raise DivergenceError(f"boundary data grows like |t|^{grow:.3g}; the Poisson pairing diverges")

    def g(th):
        return f(x + y * np.tan(th) + 0j)
    r = integrate_1d(g, (-math.pi / 2, math.pi / 2), quad)
    if not r.converged:
        raise DivergenceError("Poisson integral did not converge")
    return complex(r.value) / math.pi


def carleson_box(F: HarmonicTestFunction, interval, quad: QuadratureSpec | None = None) -> IntegralValue:
    """``nu(Q_I) / |I|`` with ``d nu = |grad F|^2 y dm`` and ``Q_I = I x (0, |I|)``."""
    a, b = map(float, interval)
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    quad = quad or QuadratureSpec()
    L = b - a
    if F.is_zero:
        return IntegralValue(0.0, 0.0, 0, True)

    def f(x, y):
        return grad_norm(F, x + 1j * y, 1) ** 2 * y
    r = integrate_2d_graded(f, ((a, b), (0.0, L)), quad)
    return IntegralValue(float(r.value) / L, r.error_estimate / L, r.subdivisions_used, r.converged)


def carleson_norm(F: HarmonicTestFunction, boxes: Sequence, quad: QuadratureSpec | None = None) -> float:
    """Largest ``nu(Q_I) / |I|`` over the given intervals."""
    if not len(boxes):
        raise ValueError("no boxes given")
    return max(float(carleson_box(F, I, quad).value) for I in boxes)


def lusin_area(F: HarmonicTestFunction, x0: float, I, quad: QuadratureSpec | None = None) -> float:
    """``(integral over {|x - x0| < y < |I|} of |grad F|^2 dm)^(1/2)``."""
    a, b = map(float, I)
    L = b - a
    if not L > 0:
        raise DomainError("the cone is empty for |I| <= 0")
    quad = quad or QuadratureSpec()
    if F.is_zero:
        return 0.0

    # x = x0 + y sigma, |sigma| < 1, dm = y dsigma dy
    def f(sigma, y):
        return grad_norm(F, x0 + y * sigma + 1j * y, 1) ** 2 * y
    r = integrate_2d_graded(f, ((-1.0, 1.0), (0.0, L)), quad)
    return math.sqrt(max(float(r.value), 0.0))


def lusin_average(F: HarmonicTestFunction, I, quad: QuadratureSpec | None = None) -> IntegralValue:
    """``integral over x0 in I of lusin_area(F, x0, I)^2``."""
    a, b = map(float, I)
    quad = quad or QuadratureSpec()
    inner = quad.with_(rel_tol=quad.rel_tol / 10, abs_tol=quad.abs_tol / 10)

    def g(x0):
        return np.array([lusin_area(F, float(t), I, inner) ** 2 for t in np.atleast_1d(x0)])
    return integrate_1d(g, (a, b), quad)


# ---------------------------------------------------------------------------
# conformal vertical rays


class TailResult(NamedTuple):
    integral: float
    ratio: float


def tail_integral(domain: Domain, w: complex, eps: float = 0.5, quad: QuadratureSpec | None = None,
                  *, detail: bool = False):
    """Integral of ``delta^(-1-eps) |d xi|`` along the conformal vertical ray from ``w``.

    With ``z0 = x + iy = phi^{-1}(w)`` the ray is ``phi(x + i(y + t))``; the
    substitution ``y + t = y e^s`` turns the integral into one over
    ``s > 0`` with exponential decay.  Returns ``(integral, ratio)`` with
    ``ratio = integral * delta(w)^eps``; ``detail=True`` also returns the
    :class:`IntegralValue`.
    """
    if not 0 < eps < 2:
        raise ValueError(f"eps must lie in (0, 2), got {eps}")
    quad = quad or QuadratureSpec()
    m = domain.require_interior()
    z0 = complex(map_inverse(m, w))
    x, y = z0.real, z0.imag

    def g(s):
        # beyond s ~ 600 the integrand is below e^(-600 eps) relative to its start
        far = s > 600
        e = np.exp(np.where(far, 0.0, s))
        z = x + 1j * y * e
        d = domain.delta_pullback(z)
        return np.where(far, 0.0, d ** (-1 - eps) * np.abs(m.deriv(z, 1)) * y * e)
    r = integrate_1d(g, (0.0, math.inf), quad, scale=2.0 / eps)
    delta_w = float(domain.delta_pullback(np.array([z0]))[0])
    res = TailResult(float(r.value), float(r.value) * delta_w ** eps)
    return (res, r) if detail else res
