"""Experiment configuration: one JSON file per run, validated before any computation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .function_model import Domain, FunctionSpec, log_spike_family
from .mean_value import SampleSpec
from .pairs import TestFunctionPair, build_pair_corollary, map_from_json


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpecCfg(_Strict):
    kind: str
    params: list[float] = Field(default_factory=list)
    args: list["SpecCfg"] = Field(default_factory=list)

    def as_dict(self) -> dict:
        return self.model_dump()


class DomainCfg(_Strict):
    lo: list[float]
    hi: list[float]
    h: float

    def build(self, h: float | None = None) -> Domain:
        return Domain(len(self.lo), tuple(self.lo), tuple(self.hi), self.h if h is None else h)


class SamplesCfg(_Strict):
    kind: Literal["subgrid", "random", "explicit"]
    r_max: Optional[float] = None
    r_min: Optional[float] = None
    n_radii: int = 4
    stride: int = 1
    count: Optional[int] = None
    points: Optional[list[list[float]]] = None
    exclude: list[list[float]] = Field(default_factory=list)
    margin: float = 0.0

    @model_validator(mode="after")
    def _fields_for_kind(self):
        if self.kind in ("subgrid", "random") and self.r_max is None:
            raise ValueError(f"{self.kind} samples need r_max")
        if self.kind == "random" and (self.count is None or self.r_min is None):
            raise ValueError("random samples need count and r_min")
        if self.kind == "explicit" and not self.points:
            raise ValueError("explicit samples need points [[x1, ..., xn, r], ...]")
        return self

    def build(self, domain: Domain, seed: int = 0) -> SampleSpec:
        if self.kind == "subgrid":
            s = SampleSpec.subgrid(domain, self.r_max, self.n_radii, self.stride, self.r_min)
        elif self.kind == "random":
            s = SampleSpec.random(domain, self.count, self.r_min, self.r_max, seed)
        else:
            s = SampleSpec(tuple((tuple(p[:-1]), p[-1]) for p in self.points))
        if self.exclude:
            s = s.excluding_points(self.exclude, self.margin)
        return s.validate(domain)


class FamilyGenCfg(_Strict):
    kind: Literal["log-spike"] = "log-spike"
    count: int
    seed: int = 0
    a: tuple[float, float] = (1.0, 4.0)
    R: tuple[float, float] = (0.3, 0.8)
    box_lo: list[float] = Field(default_factory=lambda: [0.2, 0.2])
    box_hi: list[float] = Field(default_factory=lambda: [0.8, 0.8])
    avoid_h: Optional[float] = None

    def build(self) -> list[FunctionSpec]:
        return log_spike_family(self.count, self.seed, self.a, self.R, (self.box_lo, self.box_hi), self.avoid_h)


class PairCfg(_Strict):
    phi: SpecCfg
    K: float
    n: int
    p: Optional[float] = None
    psi: Optional[SpecCfg] = None
    s0: Optional[int] = None
    s1: Optional[int] = None
    S_max: float = 200.0

    @model_validator(mode="after")
    def _one_form(self):
        explicit = self.psi is not None or self.s0 is not None or self.s1 is not None
        if self.p is not None and explicit:
            raise ValueError("give either p (corollary form) or psi, s0, s1 (explicit form), not both")
        if self.p is None and not (self.psi is not None and self.s0 is not None and self.s1 is not None):
            raise ValueError("pair needs p, or all of psi, s0, s1")
        return self

    def build(self) -> TestFunctionPair:
        phi = map_from_json(self.phi.as_dict())
        if self.p is not None:
            return build_pair_corollary(phi, self.p, self.K, self.n, self.S_max)
        return TestFunctionPair(phi, map_from_json(self.psi.as_dict()), self.s0, self.s1, self.K, self.n)


class CheckCfg(_Strict):
    K: float = 1.0
    M: Optional[list[float]] = None


class PhiCfg(_Strict):
    t: Optional[list[float]] = None
    t_min: float = 0.0
    t_max: float = 1000.0
    count: int = 101

    def grid(self) -> list[float]:
        if self.t is not None:
            return list(self.t)
        step = (self.t_max - self.t_min) / max(self.count - 1, 1)
        return [self.t_min + k * step for k in range(self.count)]


class BoundCfg(_Strict):
    E_lo: list[float]
    E_hi: list[float]
    C: Optional[float] = None
    s_tilde_1: Optional[int] = None
    dominant: Optional[SpecCfg] = None
    fit_with_E_balls: bool = True


class EnvelopeCfg(_Strict):
    K: Optional[float] = None
    radii_schedule: Optional[list[float]] = None


class RegularizeCfg(_Strict):
    radii_schedule: Optional[list[float]] = None
    lower_nodes: list[list[float]] = Field(default_factory=list)
    delta: float = 0.1


class ExperimentConfig(_Strict):
    domain: Optional[DomainCfg] = None
    function: Optional[SpecCfg] = None
    family: Optional[list[SpecCfg]] = None
    family_generator: Optional[FamilyGenCfg] = None
    pair: Optional[PairCfg] = None
    samples: Optional[SamplesCfg] = None
    check: CheckCfg = Field(default_factory=CheckCfg)
    phi: PhiCfg = Field(default_factory=PhiCfg)
    bound: Optional[BoundCfg] = None
    envelope: EnvelopeCfg = Field(default_factory=EnvelopeCfg)
    regularize: RegularizeCfg = Field(default_factory=RegularizeCfg)
    tol: float = 1e-2
    seed: int = 0

    @model_validator(mode="after")
    def _family_once(self):
        if self.family is not None and self.family_generator is not None:
            raise ValueError("give family or family_generator, not both")
        return self

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if "family" in names and "family" in missing and self.family_generator is not None:
            missing.remove("family")
        if missing:
            raise ValueError(f"config is missing required section(s): {', '.join(missing)}")

    def family_specs(self) -> list[FunctionSpec]:
        if self.family_generator is not None:
            return self.family_generator.build()
        return [FunctionSpec.from_json(s.as_dict()) for s in self.family or []]

    def function_spec(self) -> FunctionSpec:
        return FunctionSpec.from_json(self.function.as_dict())


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate; raises ``ValueError`` (JSON or schema problems) or ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {path}: {exc}") from exc
    return ExperimentConfig.model_validate(data)
