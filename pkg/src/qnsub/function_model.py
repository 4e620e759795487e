"""Domains, extended-real scalar fields and the closed-form function catalog.

Values live in ``[-inf, +inf)``: ``-inf`` is stored explicitly as the IEEE
float ``-inf`` (never a large negative stand-in) and ``+inf`` is rejected
wherever a field is built.  Catalog specs are small immutable trees that
evaluate vectorised over arrays of points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

NEG_INF = -math.inf
POS_INF = math.inf


# ---------------------------------------------------------------------------
# extended reals
# ---------------------------------------------------------------------------

def ext_add(a: float, b: float) -> float:
    """Add two extended reals, refusing the undefined ``+inf + -inf``."""
    if (a == POS_INF and b == NEG_INF) or (a == NEG_INF and b == POS_INF):
        raise ArithmeticError("+inf + -inf is undefined")
    return a + b


def ext_max(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        raise ArithmeticError("NaN is not an extended real")
    return a if a >= b else b


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball in R^n, ``pi^(n/2) / Gamma(n/2 + 1)``."""
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n!r}")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# ---------------------------------------------------------------------------
# domains and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lo, hi]`` carrying a uniform node-centred grid of spacing ``h``."""

    n: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    h: float

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        if len(self.lo) != self.n or len(self.hi) != self.n:
            raise ValueError("corner coordinates must have length n")
        if not self.h > 0:
            raise ValueError("grid spacing h must be positive")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ValueError("need lo_i < hi_i on every axis")
            cells = (b - a) / self.h
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells) or round(cells) < 1:
                raise ValueError(
                    f"(hi - lo)/h = {cells} is not a positive integer on some axis"
                )

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], h: float) -> "Domain":
        return cls(len(lo), tuple(lo), tuple(hi), h)

    @classmethod
    def unit_square(cls, h: float) -> "Domain":
        return cls(2, (0.0, 0.0), (1.0, 1.0), h)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round((b - a) / self.h)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [a + self.h * np.arange(m) for a, m in zip(self.lo, self.shape)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def node(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(a + self.h * i for a, i in zip(self.lo, index))

    def nearest_index(self, x: Sequence[float]) -> tuple[int, ...]:
        idx = []
        for a, m, xi in zip(self.lo, self.shape, x):
            k = int(round((xi - a) / self.h))
            idx.append(min(max(k, 0), m - 1))
        return tuple(idx)

    def is_node(self, x: Sequence[float], rtol: float = 1e-9) -> bool:
        return all(
            abs((xi - a) / self.h - round((xi - a) / self.h)) <= rtol
            for a, xi in zip(self.lo, x)
        )

    def contains(self, x: Sequence[float], slack: float = 1e-12) -> bool:
        return all(a - slack <= xi <= b + slack for a, b, xi in zip(self.lo, self.hi, x))

    def contains_ball(self, x: Sequence[float], r: float, slack: float = 1e-12) -> bool:
        """Whether the closed ball of radius ``r`` about ``x`` lies in the box."""
        s = slack * max(1.0, r)
        return all(a - s <= xi - r and xi + r <= b + s for a, b, xi in zip(self.lo, self.hi, x))

    def distance_to_boundary(self, x: Sequence[float]) -> float:
        return min(min(xi - a, b - xi) for a, b, xi in zip(self.lo, self.hi, x))

    def refine(self, factor: int = 2) -> "Domain":
        return Domain(self.n, self.lo, self.hi, self.h / factor)

    def with_spacing(self, h: float) -> "Domain":
        return Domain(self.n, self.lo, self.hi, h)

    def to_dict(self) -> dict:
        return {"n": self.n, "lo": list(self.lo), "hi": list(self.hi), "h": self.h}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Grid samples of a function ``D -> [-inf, +inf)``.

    The value array is copied and made read-only on construction.
    """

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.domain.shape:
            raise ValueError(f"value shape {vals.shape} != grid shape {self.domain.shape}")
        if np.isnan(vals).any():
            idx = tuple(int(i) for i in np.argwhere(np.isnan(vals))[0])
            raise ValueError(f"NaN at node {idx} ({self.domain.node(idx)})")
        if np.isposinf(vals).any():
            idx = tuple(int(i) for i in np.argwhere(np.isposinf(vals))[0])
            raise ValueError(f"+inf at node {idx} ({self.domain.node(idx)})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def has_neg_inf(self) -> bool:
        return bool(np.isneginf(self.values).any())

    def finite_range(self) -> tuple[float, float] | None:
        fin = self.values[np.isfinite(self.values)]
        if fin.size == 0:
            return None
        return float(fin.min()), float(fin.max())

    def neg_inf_floor(self) -> float:
        """Default stand-in for ``-inf`` inside integrals.

        The minimum finite value minus one dynamic range (or minus one when
        the field is constant on its finite set).
        """
        rng = self.finite_range()
        if rng is None:
            return NEG_INF
        lo, hi = rng
        return lo - (hi - lo if hi > lo else 1.0)

    def value_at(self, x: Sequence[float]) -> float:
        """Field value at ``x``: the node value on nodes, multilinear interpolation otherwise.

        Interpolation returns ``-inf`` whenever a corner with positive weight is ``-inf``.
        """
        d = self.domain
        if not d.contains(x):
            raise ValueError(f"point {tuple(x)} outside the domain")
        if d.is_node(x):
            return float(self.values[d.nearest_index(x)])
        base, frac = [], []
        for a, m, xi in zip(d.lo, d.shape, x):
            t = (xi - a) / d.h
            k = min(max(int(math.floor(t)), 0), m - 2)
            base.append(k)
            frac.append(t - k)
        total = 0.0
        for corner in np.ndindex(*(2,) * d.n):
            wgt = 1.0
            for c, f in zip(corner, frac):
                wgt *= f if c else 1.0 - f
            if wgt == 0.0:
                continue
            v = self.values[tuple(b + c for b, c in zip(base, corner))]
            if v == NEG_INF:
                return NEG_INF
            total += wgt * v
        return total

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return ScalarField(self.domain, func(self.values))

    def positive_part(self) -> "ScalarField":
        return ScalarField(self.domain, np.maximum(self.values, 0.0))

    def maximum(self, other: "ScalarField") -> "ScalarField":
        if other.domain != self.domain:
            raise ValueError("fields live on different grids")
        return ScalarField(self.domain, np.maximum(self.values, other.values))

    def __le__(self, other: "ScalarField") -> bool:
        return bool(np.all(self.values <= other.values))


def truncate_shift(u: ScalarField, M: float) -> ScalarField:
    """``u_M = max(u, -M) + M``; nonnegative everywhere, ``-inf`` maps to 0."""
    if not M >= 0:
        raise ValueError(f"truncation level must be >= 0, got {M}")
    return ScalarField(u.domain, np.maximum(u.values, -M) + M)


# ---------------------------------------------------------------------------
# function catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    """A catalog function: ``kind`` plus real ``params`` and nested ``args``."""

    kind: str
    params: tuple[float, ...] = ()
    args: tuple["FunctionSpec", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "args", tuple(self.args))
        if self.kind not in CATALOG:
            raise ValueError(f"unknown function kind {self.kind!r}")
        CATALOG[self.kind].check(self)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "params": list(self.params)}
        if self.args:
            out["args"] = [a.to_json() for a in self.args]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValueError(f"function spec must be an object with a 'kind': {obj!r}")
        extra = set(obj) - {"kind", "params", "args"}
        if extra:
            raise ValueError(f"unknown keys in function spec: {sorted(extra)}")
        return cls(
            obj["kind"],
            tuple(obj.get("params", ())),
            tuple(cls.from_json(a) for a in obj.get("args", ())),
        )

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return CATALOG[self.kind].evaluate(self, pts)


@dataclass(frozen=True)
class _Entry:
    kind: str
    doc: str
    evaluate: Callable[[FunctionSpec, np.ndarray], np.ndarray]
    check: Callable[[FunctionSpec], None] = field(default=lambda s: None)
    dims: tuple[int, ...] | None = None


CATALOG: dict[str, _Entry] = {}


def _register(kind, doc, dims=None, check=None):
    def deco(fn):
        CATALOG[kind] = _Entry(kind, doc, fn, check or (lambda s: None), dims)
        return fn
    return deco


def _need_args(k):
    def check(s):
        if len(s.args) != k:
            raise ValueError(f"{s.kind} takes exactly {k} argument spec(s)")
    return check


def _center(spec: FunctionSpec, start: int, n: int) -> np.ndarray:
    c = np.array(spec.params[start:], dtype=float)
    if c.size == 0:
        return np.zeros(n)
    if c.size != n:
        raise ValueError(f"{spec.kind}: center has {c.size} coordinates, points have {n}")
    return c


@_register("constant", "c  (params: [c])",
           check=lambda s: None if len(s.params) == 1 else _bad(s, "needs [c]"))
def _constant(s, x):
    return np.full(x.shape[:-1], s.params[0])


@_register("coordinate", "x_i  (params: [axis], 0-based)",
           check=lambda s: None if len(s.params) == 1 and s.params[0] >= 0 else _bad(s, "needs [axis]"))
def _coordinate(s, x):
    return x[..., int(s.params[0])].copy()


@_register("harmonic-polynomial",
           "Re or Im of (x_1 + i x_2)^k, harmonic in every dimension  (params: [k, part], part 0=Re 1=Im)",
           check=lambda s: None if len(s.params) == 2 and s.params[0] >= 0 and s.params[1] in (0, 1)
           else _bad(s, "needs [k >= 0, part in {0,1}]"))
def _harmonic_poly(s, x):
    z = (x[..., 0] + 1j * x[..., 1]) ** int(s.params[0])
    return z.imag if s.params[1] else z.real


@_register("harmonic-exp", "exp(x_1) cos(x_2), harmonic  (params: [])")
def _harmonic_exp(s, x):
    return np.exp(x[..., 0]) * np.cos(x[..., 1])


@_register("log-norm", "log|x - c|, -inf at c  (params: [c...], default origin)")
def _log_norm(s, x):
    d = np.linalg.norm(x - _center(s, 0, x.shape[-1]), axis=-1)
    return np.log(d)


@_register("norm-power", "|x - c|^p for p > 0  (params: [p, c...])",
           check=lambda s: None if s.params and s.params[0] > 0 else _bad(s, "needs p > 0"))
def _norm_power(s, x):
    d = np.linalg.norm(x - _center(s, 1, x.shape[-1]), axis=-1)
    return d ** s.params[0]


@_register("log-spike", "a max(0, log(R/|x - c|)); the pole c is outside its domain  (params: [a, R, c...])",
           check=lambda s: None if len(s.params) >= 2 and s.params[0] >= 0 and s.params[1] > 0
           else _bad(s, "needs a >= 0, R > 0"))
def _log_spike(s, x):
    a, R = s.params[:2]
    d = np.linalg.norm(x - _center(s, 2, x.shape[-1]), axis=-1)
    return a * np.maximum(0.0, np.log(R / d))


@_register("abs-holomorphic-poly",
           "|P(x_1 + i x_2)|, coefficients ascending as re,im pairs  (params: [re0, im0, re1, im1, ...]); n=2 only",
           dims=(2,),
           check=lambda s: None if s.params and len(s.params) % 2 == 0 else _bad(s, "needs re,im pairs"))
def _abs_holo(s, x):
    if x.shape[-1] != 2:
        raise ValueError("abs-holomorphic-poly is defined for n=2 only")
    z = x[..., 0] + 1j * x[..., 1]
    coef = [complex(a, b) for a, b in zip(s.params[0::2], s.params[1::2])]
    return np.abs(np.polyval(coef[::-1], z))


@_register("translate", "f(x - shift)  (params: [shift...], args: [f])", check=_need_args(1))
def _translate(s, x):
    return s.args[0](x - np.asarray(s.params))


@_register("dilate", "f(lambda x)  (params: [lambda > 0], args: [f])",
           check=lambda s: _need_args(1)(s) or (None if len(s.params) == 1 and s.params[0] > 0
                                                else _bad(s, "needs lambda > 0")))
def _dilate(s, x):
    return s.args[0](s.params[0] * x)


@_register("scale", "a f + b  (params: [a, b], args: [f]); a < 0 needs f > -inf",
           check=lambda s: _need_args(1)(s) or (None if len(s.params) == 2 else _bad(s, "needs [a, b]")))
def _scale(s, x):
    a, b = s.params
    v = s.args[0](x)
    if a == 0:
        return np.full(v.shape, b)
    if a < 0 and np.isneginf(v).any():
        raise ValueError("scale with a < 0 would map -inf to +inf")
    return a * v + b


@_register("max", "pointwise max of the argument functions  (args: [f, g, ...])",
           check=lambda s: None if s.args else _bad(s, "needs at least one argument"))
def _max(s, x):
    out = s.args[0](x)
    for g in s.args[1:]:
        out = np.maximum(out, g(x))
    return out


@_register("positive-part", "max(f, 0)  (args: [f])", check=_need_args(1))
def _pos(s, x):
    return np.maximum(s.args[0](x), 0.0)


def _bad(s, msg):
    raise ValueError(f"{s.kind}: {msg}, got params={list(s.params)}")


def catalog_listing(filter_text: str | None = None) -> list[tuple[str, str]]:
    """``(kind, parameter doc)`` rows, optionally filtered by substring of the kind."""
    rows = [(k, e.doc) for k, e in CATALOG.items()]
    if filter_text:
        rows = [r for r in rows if filter_text.lower() in r[0].lower()]
    return rows


def evaluate(spec: FunctionSpec, x: Sequence[float]) -> float:
    """Evaluate ``spec`` at a single point; ``+inf`` or NaN means ``x`` is outside its domain."""
    v = float(spec(np.asarray(x, dtype=float)[None, :])[0])
    if math.isnan(v) or v == POS_INF:
        raise ValueError(f"{spec.kind}: point {tuple(x)} is outside the function's domain")
    return v


def sample_to_grid(spec: FunctionSpec, domain: Domain) -> ScalarField:
    """Node-wise evaluation; rejects ``+inf`` / NaN with the offending node."""
    dims = CATALOG[spec.kind].dims
    if dims is not None and domain.n not in dims:
        raise ValueError(f"{spec.kind} is not defined for n={domain.n}")
    vals = spec(domain.nodes())
    bad = np.isnan(vals) | np.isposinf(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{spec.kind}: value {vals[idx]} at node {idx} {domain.node(idx)}")
    return ScalarField(domain, vals)


def family_fields(specs: Iterable[FunctionSpec], domain: Domain) -> list[ScalarField]:
    return [sample_to_grid(s, domain) for s in specs]


def log_spike_family(count: int, seed: int = 0, a_range: tuple[float, float] = (1.0, 4.0),
                     R_range: tuple[float, float] = (0.3, 0.8),
                     box: tuple[Sequence[float], Sequence[float]] = ((0.2, 0.2), (0.8, 0.8)),
                     avoid_h: float | None = None, min_offset: float = 0.25) -> list[FunctionSpec]:
    """Seeded family ``a max(0, log(R / |x - c|))`` with random ``a``, ``R`` and pole ``c`` in ``box``.

    With ``avoid_h`` set, poles keep at least ``min_offset * avoid_h`` from
    every coordinate hyperplane of the lattice ``avoid_h * Z^n`` (hence from
    every node of that grid and of all coarser dyadic grids).
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    out = []
    while len(out) < count:
        a = rng.uniform(*a_range)
        R = rng.uniform(*R_range)
        c = rng.uniform(lo, hi)
        if avoid_h is not None:
            frac = c / avoid_h
            if np.abs(frac - np.round(frac)).min() <= min_offset:
                continue
        out.append(FunctionSpec("log-spike", (a, R, *c)))
    return out
