"""Monotone test functions phi/psi, their inverses, and the domination-pair conditions.

A pair ``(phi, psi, s0, s1, K, n)`` is admissible when

(i)   phi^-1 and psi^-1 exist above ``min(phi(s1 - s0), psi(s1 - s0))``,
(ii)  ``2K c(s - s0) <= c(s)`` for ``s >= s1``, where ``c = psi^-1 o phi``,
(iii) ``c(s + 1) / c(s)`` stays bounded on ``[s1 + 1, inf)``,
(iv)  ``int_{s1}^inf ds / phi(s - s0)^(1/(n-1))`` converges.

Conditions on infinite rays are checked on a grid up to a cap, with a
log-log trend test on the last decade; verdicts carry the cap they were
verified up to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

DEFAULT_CAP = 200.0
GRID_STEP = 0.25
GROWTH_SLOPE = 0.05
DIVERGENCE_MARGIN = 0.01
BRACKET_CAP = 1e300


# ---------------------------------------------------------------------------
# monotone maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneMap:
    """Nondecreasing map ``[0, +inf] -> [0, +inf]``.

    ``func`` must accept numpy arrays.  ``inverse``, when given, is the
    closed-form generalised inverse ``y -> inf{t : f(t) >= y}``; otherwise
    :func:`inverse_eval` is used.
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "f"
    inverse: Callable[[float], float] | None = None
    strict: bool = True
    cap: float = BRACKET_CAP

    def __call__(self, t):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = self.func(np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def inv(self, y: float) -> float:
        if self.inverse is not None:
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                return float(self.inverse(float(y)))
        return inverse_eval(self, y)


def inverse_eval(f: MonotoneMap, y: float, lo: float = 0.0, hint: float | None = None,
                 tol: float = 1e-12, max_iter: int = 400) -> float:
    """Solve ``f(x) = y`` by bracket expansion then bisection in ``asinh`` coordinates.

    Returns ``x`` with ``|f(x) - y| <= tol * max(1, |y|)``.  Raises
    ``ValueError`` when ``y`` is below ``f(lo)``, when no bracket is found
    below ``f.cap``, or when ``f`` jumps over ``y``.
    """
    if math.isnan(y):
        raise ValueError("cannot invert at NaN")
    if y == math.inf:
        return math.inf
    scale = tol * max(1.0, abs(y))
    f_lo = f(lo)
    if f_lo >= y:
        if f_lo - y <= scale:
            return lo
        raise ValueError(f"{f.name}: y={y} is below the range (f({lo}) = {f_lo})")
    hi = hint if hint is not None and hint > lo else max(1.0, lo + 1.0)
    while f(hi) < y:
        if hi >= f.cap:
            raise ValueError(f"{f.name}: no bracket for y={y} below cap {f.cap}")
        hi = min(f.cap, hi * hi if hi >= 2.0 else hi * 2.0)
    u_lo, u_hi = math.asinh(lo), math.asinh(hi)
    for _ in range(max_iter):
        mid = 0.5 * (u_lo + u_hi)
        if mid <= u_lo or mid >= u_hi:
            break
        t = math.sinh(mid)
        ft = f(t)
        if abs(ft - y) <= scale:
            return t
        if ft < y:
            u_lo = mid
        else:
            u_hi = mid
    x = math.sinh(u_hi)
    if abs(f(x) - y) > 1e-8 * max(1.0, abs(y)):
        raise ValueError(f"{f.name}: value {y} is not attained (f jumps over it near {x})")
    return x


# A small catalog of monotone maps, JSON-addressable like the function specs.

def _pow_inv(a):
    return lambda y: max(y, 0.0) ** (1.0 / a)


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _logplus(t):
    return np.maximum(np.log(t), 0.0)


MAP_CATALOG: dict[str, tuple[str, Callable[..., MonotoneMap]]] = {}


def _map_kind(kind, doc):
    def deco(fn):
        MAP_CATALOG[kind] = (doc, fn)
        return fn
    return deco


@_map_kind("identity", "t")
def _m_identity(params, args):
    return MonotoneMap(lambda t: t, "identity", lambda y: max(y, 0.0))


@_map_kind("power", "t^a, a > 0  (params: [a])")
def _m_power(params, args):
    (a,) = params
    if not a > 0:
        raise ValueError("power map needs a > 0")
    return MonotoneMap(lambda t: t ** a, f"t^{a:g}", _pow_inv(a))


@_map_kind("linear", "c t, c > 0  (params: [c])")
def _m_linear(params, args):
    (c,) = params
    if not c > 0:
        raise ValueError("linear map needs c > 0")
    return MonotoneMap(lambda t: c * t, f"{c:g}t", lambda y: max(y, 0.0) / c)


@_map_kind("exp", "e^t")
def _m_exp(params, args):
    return MonotoneMap(np.exp, "exp", lambda y: max(math.log(y), 0.0) if y > 0 else 0.0)


@_map_kind("exp-power", "exp(t^a), a > 0  (params: [a])")
def _m_exp_power(params, args):
    (a,) = params
    return MonotoneMap(lambda t: np.exp(t ** a), f"exp(t^{a:g})",
                       lambda y: (max(math.log(y), 0.0) if y > 0 else 0.0) ** (1.0 / a))


@_map_kind("log1p", "log(1 + t)")
def _m_log1p(params, args):
    return MonotoneMap(np.log1p, "log1p", lambda y: math.expm1(y) if y > 0 else 0.0)


@_map_kind("log-plus-power", "(log+ t)^a, a > 0  (params: [a])")
def _m_logplus_power(params, args):
    (a,) = params
    return MonotoneMap(lambda t: _logplus(t) ** a, f"(log+ t)^{a:g}",
                       lambda y: _exp(y ** (1.0 / a)) if y > 0 else 0.0)


@_map_kind("compose", "f1(f2(...(t))) applied right to left  (args: [f1, f2, ...])")
def _m_compose(params, args):
    if not args:
        raise ValueError("compose needs at least one map")
    maps = list(args)
    return compose(*maps)


def compose(*maps: MonotoneMap) -> MonotoneMap:
    """``maps[0] o maps[1] o ...``; the inverse is closed-form when every part has one."""
    def fwd(t):
        for m in reversed(maps):
            t = m.func(t)
        return t

    inverse = None
    if all(m.inverse is not None for m in maps):
        def inverse(y):
            for m in maps:
                y = m.inverse(y)
            return y
    return MonotoneMap(fwd, " o ".join(m.name for m in maps), inverse,
                       strict=all(m.strict for m in maps))


def map_from_json(obj) -> MonotoneMap:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError(f"map spec must be an object with a 'kind': {obj!r}")
    extra = set(obj) - {"kind", "params", "args"}
    if extra:
        raise ValueError(f"unknown keys in map spec: {sorted(extra)}")
    kind = obj["kind"]
    if kind not in MAP_CATALOG:
        raise ValueError(f"unknown map kind {kind!r}")
    params = [float(p) for p in obj.get("params", [])]
    args = [map_from_json(a) for a in obj.get("args", [])]
    try:
        m = MAP_CATALOG[kind][1](params, args)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad map spec {obj!r}: {exc}") from exc
    return MonotoneMap(m.func, m.name, m.inverse, m.strict, m.cap)


# ---------------------------------------------------------------------------
# pairs
# ---------------------------------------------------------------------------

@dataclass
class TestFunctionPair:
    """The tuple ``(phi, psi, s0, s1, K, n)``; the validation report is cached on it."""

    __test__ = False  # keep pytest from collecting this class

    phi: MonotoneMap
    psi: MonotoneMap
    s0: int
    s1: int
    K: float
    n: int
    report: "ConditionReport | None" = field(default=None, repr=False, compare=False)
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("s0", "s1"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a natural number, got {v}")
            setattr(self, name, int(v))
        if not self.s0 < self.s1:
            raise ValueError(f"need s0 < s1, got s0={self.s0}, s1={self.s1}")
        if not self.K >= 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")

    def composite(self, s: float) -> float:
        """``(psi^-1 o phi)(s)``."""
        return self.psi.inv(self.phi(s))

    def composite_inverse(self, t: float) -> float:
        """``(phi^-1 o psi)(t)``."""
        return self.phi.inv(self.psi(t))

    def to_json(self) -> dict:
        return {"phi": self.phi.name, "psi": self.psi.name, "s0": self.s0, "s1": self.s1,
                "K": self.K, "n": self.n}


@dataclass
class Verdict:
    condition: str
    passed: bool
    verified_up_to: float | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"condition": self.condition, "passed": self.passed,
                "verified_up_to": self.verified_up_to, **_jsonable(self.details)}


@dataclass
class ConditionReport:
    i: Verdict
    ii: Verdict
    iii: Verdict
    iv: Verdict

    @property
    def passed(self) -> bool:
        return self.i.passed and self.ii.passed and self.iii.passed and self.iv.passed

    @property
    def failed(self) -> list[str]:
        return [v.condition for v in (self.i, self.ii, self.iii, self.iv) if not v.passed]

    def to_json(self) -> dict:
        return {"passed": self.passed, "failed": self.failed,
                "conditions": [v.to_json() for v in (self.i, self.ii, self.iii, self.iv)]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _grid(start: float, stop: float, step: float = GRID_STEP) -> np.ndarray:
    if stop < start:
        return np.array([start])
    return start + step * np.arange(int(math.floor((stop - start) / step + 1e-9)) + 1)


def _trend_slope(s: np.ndarray, ratio: np.ndarray) -> float:
    """Least-squares slope of log(ratio) against log(s) over the last decade."""
    ok = np.isfinite(ratio) & (ratio > 0)
    s, ratio = s[ok], ratio[ok]
    if s.size < 3:
        return 0.0
    sel = s >= s[-1] / 10.0
    if sel.sum() < 3:
        sel = slice(None)
    x, y = np.log(s[sel]), np.log(ratio[sel])
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def check_condition_i(pair: TestFunctionPair, S_max: float = DEFAULT_CAP, samples: int = 400) -> Verdict:
    """Sampled strict increase of phi and psi wherever they exceed ``min(phi(s1-s0), psi(s1-s0))``.

    phi is sampled on ``[0, S_max + 1]``; psi up to the largest argument the
    other conditions feed it, ``c(S_max + 1)``.
    """
    d = pair.s1 - pair.s0
    m = min(pair.phi(d), pair.psi(d))
    t_psi = pair.composite(S_max + 1)
    if not math.isfinite(t_psi):
        t_psi = BRACKET_CAP
    details = {"range_floor": m}
    for label, f, t_hi in (("phi", pair.phi, S_max + 1.0), ("psi", pair.psi, max(t_psi, d + 1.0))):
        ts = np.unique(np.concatenate([
            np.linspace(0.0, min(t_hi, 10.0), samples),
            np.geomspace(min(t_hi, 10.0), t_hi, samples) if t_hi > 10.0 else [],
        ]))
        vals = np.asarray(f(ts), dtype=float)
        if np.isnan(vals).any() or (vals < 0).any():
            return Verdict("i", False, t_hi, {**details, "reason": f"{label} leaves [0, +inf]"})
        above = vals[1:] > m
        flat = above & (vals[1:] <= vals[:-1]) & ~(np.isinf(vals[1:]) & np.isinf(vals[:-1]))
        if flat.any():
            k = int(np.argmax(flat))
            return Verdict("i", False, t_hi, {**details, "reason": f"{label} not strictly increasing",
                                              "first_failure": float(ts[k + 1])})
        if not vals[-1] > m:
            return Verdict("i", False, t_hi, {**details, "reason": f"{label} never exceeds the floor"})
        details[f"{label}_checked_up_to"] = float(t_hi)
    return Verdict("i", True, S_max, details)


def check_condition_ii(pair: TestFunctionPair, S_max: float = DEFAULT_CAP, rtol: float = 1e-10) -> Verdict:
    """``2K c(s - s0) <= c(s)`` on ``s = s1, s1 + 0.25, ..., S_max``."""
    first, worst, last = None, math.inf, None
    for s in _grid(pair.s1, S_max):
        left = 2.0 * pair.K * pair.composite(s - pair.s0)
        right = pair.composite(s)
        last = float(s)
        if right == math.inf:
            continue
        margin = right / left if left > 0 else math.inf
        worst = min(worst, margin)
        if left > right * (1 + rtol):
            first = float(s)
            break
    return Verdict("ii", first is None, last,
                   {"first_violation": first, "min_margin_ratio": worst})


def check_condition_iii(pair: TestFunctionPair, S_max: float = DEFAULT_CAP) -> Verdict:
    """Boundedness of ``c(s + 1) / c(s)`` on ``[s1 + 1, S_max]``, with a growth-trend flag."""
    s_vals, ratios = [], []
    for s in _grid(pair.s1 + 1, S_max):
        num, den = pair.composite(s + 1), pair.composite(s)
        if den == 0:
            raise ValueError(f"(psi^-1 o phi)({s}) = 0; ratio undefined")
        if num == math.inf and den == math.inf:
            break
        s_vals.append(float(s))
        ratios.append(num / den)
        if num == math.inf:
            break
    s_arr, r_arr = np.array(s_vals), np.array(ratios)
    sup = float(r_arr.max()) if r_arr.size else math.nan
    slope = _trend_slope(s_arr, r_arr)
    growing = (not math.isfinite(sup)) or slope > GROWTH_SLOPE
    return Verdict("iii", not growing and r_arr.size > 0, s_vals[-1] if s_vals else None,
                   {"sup_ratio": sup, "trend": "growing" if growing else "stable",
                    "log_log_slope": slope})


# ---------------------------------------------------------------------------
# tail integral
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailIntegral:
    convergent: bool
    value: float
    exponent: float
    s_cut: float
    finite_part: float
    tail_part: float
    evidence: str = ""

    def to_json(self) -> dict:
        return _jsonable(self.__dict__.copy())


def tail_integrand(phi: MonotoneMap, s0: float, n: int) -> Callable[[float], float]:
    power = 1.0 / (n - 1)

    def g(s):
        v = phi(s - s0)
        if v == math.inf:
            return 0.0
        if v <= 0:
            return math.inf
        return v ** -power
    return g


def tail_integral(phi: MonotoneMap, s0: float, n: int, lower: float, s_cut: float = 1e8,
                  rtol: float = 1e-12) -> TailIntegral:
    """``int_lower^inf ds / phi(s - s0)^(1/(n-1))``.

    Adaptive quadrature decade by decade on ``[lower, S]``, ``S = max(s_cut,
    100 * lower)``, plus a power-law tail ``g(S) S / (alpha - 1)`` with
    ``alpha`` the integrand's decay exponent fitted on ``[S/10, S]``.
    ``alpha <= 1.01`` is reported as divergence.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if lower < s0 + 1 - 1e-12:
        raise ValueError(f"lower limit {lower} below s0 + 1 = {s0 + 1}")
    g = tail_integrand(phi, s0, n)
    if g(lower) == math.inf:
        return TailIntegral(False, math.inf, math.nan, lower, math.inf, math.inf,
                            "phi vanishes at the lower limit")
    S = max(s_cut, 100.0 * lower)
    edges = [lower]
    while edges[-1] * 10.0 < S:
        edges.append(edges[-1] * 10.0)
    edges.append(S)
    finite = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=rtol, limit=200)
        if not math.isfinite(val):
            return TailIntegral(False, math.inf, math.nan, S, math.inf, math.inf,
                                f"integrand not integrable on [{a}, {b}]")
        finite += val
    gS, gS10 = g(S), g(S / 10.0)
    if gS == 0.0:
        return TailIntegral(True, finite, math.inf, S, finite, 0.0, "integrand vanishes at the cut")
    alpha = math.log10(gS10 / gS)
    if alpha <= 1.0 + DIVERGENCE_MARGIN:
        return TailIntegral(False, math.inf, alpha, S, finite, math.inf,
                            f"fitted decay exponent {alpha:.6g} <= {1 + DIVERGENCE_MARGIN}")
    tail = gS * S / (alpha - 1.0)
    return TailIntegral(True, finite + tail, alpha, S, finite, tail, f"decay exponent {alpha:.6g}")


def check_condition_iv(pair: TestFunctionPair) -> Verdict:
    res = tail_integral(pair.phi, pair.s0, pair.n, pair.s1)
    return Verdict("iv", res.convergent, None,
                   {"tail_integral": res.value, "decay_exponent": res.exponent,
                    "evidence": res.evidence})


def validate_pair(pair: TestFunctionPair, S_max: float = DEFAULT_CAP) -> ConditionReport:
    """Run conditions (i)-(iv); the report is cached on ``pair.report``."""
    rep = ConditionReport(
        check_condition_i(pair, S_max),
        check_condition_ii(pair, S_max),
        check_condition_iii(pair, S_max),
        check_condition_iv(pair),
    )
    pair.report = rep
    return rep


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def log_composed_psi(phi: MonotoneMap, inner: MonotoneMap) -> MonotoneMap:
    """``psi = phi o log+ o inner`` with its closed-form generalised inverse."""
    phi0 = phi(0.0)

    def fwd(t):
        return phi.func(_logplus(inner.func(t)))

    def inverse(y):
        if y <= phi0:
            return 0.0
        return inner.inv(_exp(phi.inv(y)))

    return MonotoneMap(fwd, f"({phi.name}) o log+ o ({inner.name})", inverse)


def build_pair_corollary(phi: MonotoneMap, p: float, K: float, n: int, S_max: float = DEFAULT_CAP,
                         max_gap: int = 10) -> TestFunctionPair:
    """Pair with ``psi(t) = phi(log+(t^p))`` and the smallest natural ``s0 >= p ln(2K) + 0.1``.

    ``s1 = s0 + 1`` unless validation fails, in which case larger ``s1``
    (up to ``s0 + max_gap``) are tried.
    """
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    if not K >= 1:
        raise ValueError(f"K must be >= 1, got {K}")
    inner = MonotoneMap(lambda t: t ** p, f"t^{p:g}", _pow_inv(p))
    psi = log_composed_psi(phi, inner)
    s0 = max(0, math.ceil(p * math.log(2 * K) + 0.1))
    last = None
    for s1 in range(s0 + 1, s0 + max_gap + 1):
        pair = TestFunctionPair(phi, psi, s0, s1, K, n)
        last = validate_pair(pair, S_max)
        if last.passed:
            return pair
    raise ValueError(f"no admissible (s0, s1) found; last failures: {last.failed if last else '?'}")


def pair_from_theta(phi: MonotoneMap, theta: MonotoneMap, K: float, n: int, s0: int, s1: int) -> TestFunctionPair:
    """The generalised construction ``psi = (phi o log+) o theta``."""
    return TestFunctionPair(phi, log_composed_psi(phi, theta), s0, s1, K, n)


def check_delta2(theta: MonotoneMap, T_max: float = DEFAULT_CAP, t_min: float = 1.0,
                 samples: int = 400) -> Verdict:
    """Doubling check: sup of ``theta^-1(2t) / theta^-1(t)`` over ``[t_min, T_max]``."""
    ts = np.geomspace(t_min, T_max, samples)
    ratios = []
    for t in ts:
        den = theta.inv(t)
        if den <= 0:
            raise ValueError(f"theta^-1({t}) = {den}; ratio undefined")
        ratios.append(theta.inv(2.0 * t) / den)
    r = np.array(ratios)
    sup = float(r.max())
    slope = _trend_slope(ts, r)
    growing = (not math.isfinite(sup)) or slope > GROWTH_SLOPE
    return Verdict("delta2", not growing, float(T_max),
                   {"constant": sup, "trend": "growing" if growing else "stable",
                    "log_log_slope": slope})


def check_remark_b(theta: MonotoneMap, K: float, s0: int, s1: int, S_max: float = DEFAULT_CAP,
                   rtol: float = 1e-10) -> Verdict:
    """``2K theta^-1(e^(s - s0)) <= theta^-1(e^s)`` on ``s = s1, ..., S_max``."""
    first, worst, last = None, math.inf, None
    for s in _grid(s1, S_max):
        left = 2.0 * K * theta.inv(_exp(s - s0))
        right = theta.inv(_exp(s))
        last = float(s)
        worst = min(worst, right / left if left > 0 else math.inf)
        if left > right * (1 + rtol):
            first = float(s)
            break
    return Verdict("remark-b", first is None, last, {"first_violation": first, "min_margin_ratio": worst})
