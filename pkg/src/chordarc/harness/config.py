"""Experiment configuration schema and validation."""

from __future__ import annotations

import json
import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from ..quadrature import QuadratureSpec

KINDS = ("equivalence", "characterization", "diagnostics", "tail", "sewing", "carleson", "energy", "boundary_norm")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    type: Literal["halfplane", "line", "sector", "grating", "parabola", "wiggle"] = "halfplane"
    alpha: Optional[float] = None
    c: Optional[float] = None
    a: Optional[float] = None
    depth: Optional[int] = None

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        if v is not None and not 0 < v < 2:
            raise ValueError("sector opening alpha must lie in (0, 2)")
        return v

    @field_validator("c")
    @classmethod
    def _c(cls, v):
        if v is not None and not 0 <= v < 1:
            raise ValueError("grating amplitude c must lie in [0, 1)")
        return v

    @field_validator("a")
    @classmethod
    def _a(cls, v):
        if v is not None and not v > 0:
            raise ValueError("parabola coefficient a must be positive")
        return v

    @field_validator("depth")
    @classmethod
    def _depth(cls, v):
        if v is not None and not 1 <= v <= 12:
            raise ValueError("wiggle depth must lie in 1..12")
        return v

    @model_validator(mode="after")
    def _needs(self):
        need = {"sector": "alpha", "grating": "c"}.get(self.type)
        if need and getattr(self, need) is None:
            raise ValueError(f"{self.type} needs '{need}'")
        return self

    def text(self, override: dict | None = None) -> str:
        vals = {k: getattr(self, k) for k in ("alpha", "c", "a", "depth") if getattr(self, k) is not None}
        vals.update(override or {})
        if self.type in ("halfplane", "line"):
            return self.type
        return f"{self.type}:" + ",".join(f"{k}={v}" for k, v in vals.items())


class SweepConfig(_Strict):
    param: Literal["c", "alpha", "a", "depth"]
    values: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _range(self):
        for v in self.values:
            if self.param == "c" and not 0 <= v < 1:
                raise ValueError(f"sweep value c={v} outside [0, 1)")
            if self.param == "alpha" and not 0 < v < 2:
                raise ValueError(f"sweep value alpha={v} outside (0, 2)")
            if self.param == "a" and not v > 0:
                raise ValueError(f"sweep value a={v} must be positive")
        return self


class QuadratureConfig(_Strict):
    rel_tol: float = Field(1e-6, gt=0)
    abs_tol: float = Field(1e-12, gt=0)
    max_subdivisions: int = Field(4000, ge=16)
    grading_ratio: float = Field(2.0, gt=1)

    def spec(self) -> QuadratureSpec:
        return QuadratureSpec(rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                              max_subdivisions=self.max_subdivisions, grading_ratio=self.grading_ratio)


class WindowConfig(_Strict):
    t_lo: float
    t_hi: float
    samples: int = Field(401, ge=16)

    @model_validator(mode="after")
    def _order(self):
        if not self.t_lo < self.t_hi:
            raise ValueError("window needs t_lo < t_hi")
        return self


class ProbeConfig(_Strict):
    """Probe points ``gamma(t) - d * i * gamma'(t) / |gamma'(t)|`` for every ``t`` and ``d``."""
    t: list[float] = Field(default_factory=lambda: [0.0], min_length=1)
    distances: list[float] = Field(default_factory=lambda: [0.01, 1.0, 100.0], min_length=1)
    side: Literal["exterior", "interior"] = "exterior"

    @field_validator("distances")
    @classmethod
    def _pos(cls, v):
        if any(not d > 0 for d in v):
            raise ValueError("probe distances must be positive")
        return v


def _default_brackets() -> dict:
    return {
        "In/I1": [0.03, 3.0],
        "pull/In": [0.1, 10.0],
        "B/I1": [1.0, 100.0],
        "Bphi/I1": [0.03, 3.0],
    }


class OutputConfig(_Strict):
    dir: str = "reports"
    formats: list[Literal["csv", "json", "svg"]] = Field(default_factory=lambda: ["csv", "json"])
    series: Optional[str] = None


class ExperimentConfig(_Strict):
    kind: Literal[KINDS]  # type: ignore[valid-type]
    id: str = "run"
    domain: DomainConfig = Field(default_factory=DomainConfig)
    domains: list[DomainConfig] = Field(default_factory=list)
    sweep: Optional[SweepConfig] = None
    functions: list[str] = Field(default_factory=lambda: ["pole(w=-1i,k=1,coef=1)"], min_length=1)
    p: list[float] = Field(default_factory=lambda: [2.0], min_length=1)
    n: list[int] = Field(default_factory=lambda: [1], min_length=1)
    eps: list[float] = Field(default_factory=lambda: [0.5], min_length=1)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    window: Optional[WindowConfig] = None
    windows: list[WindowConfig] = Field(default_factory=list)
    probes: ProbeConfig = Field(default_factory=ProbeConfig)
    brackets: dict[str, list[float]] = Field(default_factory=_default_brackets)
    spread_limit: float = Field(100.0, gt=1)
    tail_spread_limit: float = Field(50.0, gt=1)
    weight: Literal["distance", "pullback"] = "distance"
    side: Literal["interior", "exterior"] = "interior"
    box_sizes: list[float] = Field(default_factory=lambda: [2.0 ** k for k in range(-4, 5)], min_length=1)
    lusin_intervals: list[list[float]] = Field(
        default_factory=lambda: [[-1.0, 1.0], [0.0, 1.0], [-0.25, 0.25], [1.0, 3.0], [-4.0, 0.0]])
    refine_tolerance: float = Field(0.05, gt=0)
    sewing_scales: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0], min_length=1)
    min_pole_distance: float = Field(0.1, ge=0)
    with_boundary_norm: bool = False
    jobs: int = Field(1, ge=1)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("p")
    @classmethod
    def _p(cls, v):
        bad = [x for x in v if not (x > 1 and math.isfinite(x))]
        if bad:
            raise ValueError(f"every p must lie in (1, inf); got {bad}")
        return v

    @field_validator("n")
    @classmethod
    def _n(cls, v):
        bad = [x for x in v if x not in (1, 2, 3)]
        if bad:
            raise ValueError(f"every n must be 1, 2 or 3; got {bad}")
        return v

    @field_validator("eps")
    @classmethod
    def _eps(cls, v):
        bad = [x for x in v if not 0 < x < 2]
        if bad:
            raise ValueError(f"every eps must lie in (0, 2); got {bad}")
        return v

    @field_validator("functions")
    @classmethod
    def _functions(cls, v):
        from ..analysis import parse_test_function
        for i, text in enumerate(v):
            try:
                parse_test_function(text)
            except ValueError as exc:
                raise ValueError(f"functions[{i}]: {exc}") from None
        return v

    @field_validator("brackets")
    @classmethod
    def _brackets(cls, v):
        for name, br in v.items():
            if len(br) != 2 or not 0 < br[0] <= br[1]:
                raise ValueError(f"bracket {name!r} must be [lo, hi] with 0 < lo <= hi")
        return v

    @field_validator("box_sizes", "sewing_scales")
    @classmethod
    def _positive(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("values must be positive")
        return v

    @field_validator("lusin_intervals")
    @classmethod
    def _intervals(cls, v):
        for iv in v:
            if len(iv) != 2 or not iv[0] < iv[1]:
                raise ValueError(f"interval {iv} must be [a, b] with a < b")
        return v

    def domain_texts(self) -> list[tuple[dict, str]]:
        """``(sweep parameters, domain text)`` for every domain the run visits."""
        if self.domains:
            return [({}, d.text()) for d in self.domains]
        if self.sweep is None:
            return [({}, self.domain.text())]
        out = []
        for v in self.sweep.values:
            val = int(v) if self.sweep.param == "depth" else v
            out.append(({self.sweep.param: val}, self.domain.text({self.sweep.param: val})))
        return out


def _path(loc) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int) and parts:
            parts[-1] += f"[{item}]"
        elif str(item).startswith(("function-", "literal")):
            continue
        else:
            parts.append(str(item))
    return ".".join(parts)


def parse_config(text: str | dict) -> ExperimentConfig:
    """Validate JSON text (or a dict); raise :class:`ConfigError` listing every violation."""
    if isinstance(text, str):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("", f"invalid JSON: {exc}")]) from None
    else:
        data = text
    if not isinstance(data, dict):
        raise ConfigError([("", "config must be a JSON object")])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = []
        for e in exc.errors():
            msg = e["msg"].removeprefix("Value error, ")
            errors.append((_path(e["loc"]), msg))
        raise ConfigError(errors) from None
