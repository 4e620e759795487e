"""The auxiliary transform Phi, the local dichotomy, and the uniform bound on a compact set.

For an admissible pair with ``c = psi^-1 o phi`` and tail integral
``T(a) = int_a^inf ds / phi(s - s0)^(1/(n-1))``::

    s3      = max(s1 + 3, c(s1 + 3))
    Phi(t)  = T((phi^-1 o psi)(t) - 2)^(1 - n)      for t >= s3
    Phi(t)  = (t / s3) Phi(s3)                       for 0 <= t < s3

Above the threshold ``c(s~1 + 1)`` a nonnegative member satisfies
``Phi(u(x)) <= C / r^n * int_B(x,r) psi(u)``.  On a compact ``E`` with
``rho0 = dist(E, boundary)`` this yields ``sup_E u <= B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .function_model import Domain, ScalarField
from .mean_value import SampleSpec, ball_integral_values
from .pairs import TestFunctionPair, tail_integral, tail_integrand, validate_pair

CLAMP_EPS = 1e-6


def compute_s3(pair: TestFunctionPair) -> float:
    return max(pair.s1 + 3.0, pair.composite(pair.s1 + 3.0))


class PhiTransform:
    """Phi for one pair, with tail integrals cached at knots ``s0 + 2^j``."""

    def __init__(self, pair: TestFunctionPair):
        rep = pair.report or validate_pair(pair)
        if not rep.passed:
            raise ValueError(f"pair fails condition(s) {rep.failed}; Phi is undefined")
        self.pair = pair
        self.s3 = compute_s3(pair)
        self.a_min = pair.s0 + 1.0 + CLAMP_EPS
        self._g = tail_integrand(pair.phi, pair.s0, pair.n)
        self._knots: dict[int, float] = {}
        self._phi_s3: float | None = None

    def _knot_tail(self, j: int) -> float:
        if j not in self._knots:
            res = tail_integral(self.pair.phi, self.pair.s0, self.pair.n, self.pair.s0 + 2.0 ** j)
            if not res.convergent:
                raise ValueError("tail integral diverges; pair invalid")
            self._knots[j] = res.value
        return self._knots[j]

    def tail(self, a: float) -> float:
        """``T(a)`` for ``a >= s0 + 1``."""
        s0 = self.pair.s0
        if a < s0 + 1 - 1e-12:
            raise ValueError(f"tail lower limit {a} below s0 + 1")
        j = max(0, math.ceil(math.log2(a - s0)))
        if j > 40:
            res = tail_integral(self.pair.phi, s0, self.pair.n, a)
            if not res.convergent:
                raise ValueError("tail integral diverges; pair invalid")
            return res.value
        knot = s0 + 2.0 ** j
        head = 0.0
        if knot > a:
            head, _ = integrate.quad(self._g, a, knot, epsabs=0.0, epsrel=1e-12, limit=200)
        return head + self._knot_tail(j)

    def lower_limit(self, t: float) -> float:
        """``(phi^-1 o psi)(t) - 2``, the tail's lower limit for ``t >= s3``."""
        return self.pair.composite_inverse(t) - 2.0

    def value_flagged(self, t: float) -> tuple[float, bool]:
        """``(Phi(t), clamped)``; ``clamped`` marks a lower limit raised to ``s0 + 1``."""
        if t < 0 or math.isnan(t):
            raise ValueError(f"Phi is defined on [0, inf), got {t}")
        if t < self.s3:
            v3, clamped = self._at_s3()
            return t / self.s3 * v3, clamped
        a = self.lower_limit(t)
        clamped = a < self.a_min
        T = self.tail(max(a, self.a_min))
        if T == 0.0:
            return math.inf, clamped
        return T ** (1 - self.pair.n), clamped

    def _at_s3(self) -> tuple[float, bool]:
        if self._phi_s3 is None:
            a = self.lower_limit(self.s3)
            self._phi_s3 = (self.tail(max(a, self.a_min)) ** (1 - self.pair.n), a < self.a_min)
        return self._phi_s3

    def __call__(self, t: float) -> float:
        return self.value_flagged(t)[0]

    def solve_tail(self, target: float) -> float | None:
        """Lower limit ``a >= s0 + 1`` with ``T(a) = target``; ``None`` when ``target > T(s0 + 1)``."""
        if not target > 0:
            raise ValueError(f"target must be positive, got {target}")
        lo = self.a_min
        t_lo = self.tail(lo)
        if t_lo < target:
            return None
        step = 1.0
        hi = lo + step
        while self.tail(hi) > target:
            step *= 2.0
            hi = lo + step
            if hi > 1e12:
                raise ValueError(f"tail target {target} not reached below a = 1e12")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo <= 1e-14 * max(1.0, hi):
                break
            if self.tail(mid) > target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def inverse(self, y: float) -> float:
        """``Phi^-1(y)`` for ``y >= 0``."""
        if y < 0 or math.isnan(y):
            raise ValueError(f"Phi^-1 needs y >= 0, got {y}")
        if y == 0:
            return 0.0
        v3, _ = self._at_s3()
        if y <= v3:
            return y * self.s3 / v3
        a = self.solve_tail(y ** (1.0 / (1 - self.pair.n)))
        if a is None:
            raise ValueError(f"y = {y} exceeds the range of Phi")
        return self.pair.composite(a + 2.0)


def phi_transform(pair: TestFunctionPair) -> PhiTransform:
    """Cached :class:`PhiTransform` for ``pair``."""
    if "phi" not in pair.cache:
        pair.cache["phi"] = PhiTransform(pair)
    return pair.cache["phi"]


def phi_eval(t: float, pair: TestFunctionPair) -> float:
    return phi_transform(pair)(t)


def invert_phi(y: float, pair: TestFunctionPair) -> float:
    return phi_transform(pair).inverse(y)


# ---------------------------------------------------------------------------
# local dichotomy
# ---------------------------------------------------------------------------

@dataclass
class DichotomyParams:
    """Pair plus the integer ``s~1 >= s3`` and the constant ``C`` (unset until fitted).

    ``s~1`` defaults to ``max(s1 + 2, ceil(s3))``.
    """

    pair: TestFunctionPair
    C: float | None = None
    s_tilde_1: int | None = None
    transform: PhiTransform = field(init=False, repr=False)

    def __post_init__(self):
        self.transform = phi_transform(self.pair)
        s3 = self.transform.s3
        if self.s_tilde_1 is None:
            self.s_tilde_1 = max(self.pair.s1 + 2, math.ceil(s3))
        if int(self.s_tilde_1) != self.s_tilde_1 or self.s_tilde_1 < s3:
            raise ValueError(f"s~1 must be a natural number >= s3 = {s3}, got {self.s_tilde_1}")
        self.s_tilde_1 = int(self.s_tilde_1)
        if self.C is not None and not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")

    @property
    def threshold(self) -> float:
        """Values at or below ``c(s~1 + 1)`` are outside the lemma's scope."""
        return self.pair.composite(self.s_tilde_1 + 1.0)

    @property
    def s_tilde_3(self) -> float:
        return max(self.s_tilde_1 + 3.0, self.pair.composite(self.s_tilde_1 + 3.0))

    def with_C(self, C: float) -> "DichotomyParams":
        return DichotomyParams(self.pair, C, self.s_tilde_1)


@dataclass(frozen=True)
class DichotomyResult:
    kind: str  # "below_threshold", "bounded" or "violated"
    u_x: float
    lhs: float | None = None
    rhs: float | None = None
    integral: float | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _psi_values(pair: TestFunctionPair, u: ScalarField) -> np.ndarray:
    if (u.values < 0).any():
        raise ValueError("the dichotomy applies to nonnegative functions")
    return np.asarray(pair.psi(u.values), dtype=float)


def lemma_dichotomy(u: ScalarField, x: Sequence[float], r: float, params: DichotomyParams,
                    psi_u: np.ndarray | None = None) -> DichotomyResult:
    """Classify ``u(x)`` against the threshold and, above it, test ``Phi(u(x)) <= C r^-n int psi(u)``."""
    if params.C is None:
        raise ValueError("C is not set; fit it first")
    ux = u.value_at(x)
    if ux <= params.threshold:
        return DichotomyResult("below_threshold", ux)
    vals = _psi_values(params.pair, u) if psi_u is None else psi_u
    J = ball_integral_values(u.domain, vals, x, r)
    if J == math.inf:
        raise ValueError(f"integral of psi(u) over B({tuple(x)}, {r}) is infinite")
    lhs = params.transform(ux)
    rhs = params.C / r ** u.domain.n * J
    kind = "bounded" if lhs <= rhs * (1 + 1e-12) else "violated"
    return DichotomyResult(kind, ux, lhs, rhs, J)


@dataclass
class CFit:
    C: float
    ratios: np.ndarray
    n_constrained: int
    n_below: int
    n_infinite: int

    @property
    def unconstrained(self) -> bool:
        return self.n_constrained == 0

    def summary(self) -> dict:
        r = self.ratios
        return {
            "C": self.C if math.isfinite(self.C) else "inf",
            "unconstrained": self.unconstrained,
            "n_constrained": self.n_constrained,
            "n_below_threshold": self.n_below,
            "n_infinite_integral": self.n_infinite,
            "ratio_quantiles": ([float(q) for q in np.quantile(r, [0.0, 0.5, 0.9, 1.0])]
                                if r.size else []),
        }


def fit_constant_C(family: Sequence[ScalarField], samples: SampleSpec, params: DichotomyParams) -> CFit:
    """Smallest ``C`` making every above-threshold sample bounded.

    Each sample contributes ``Phi(u(x)) r^n / int_B psi(u)``; ``C`` is the
    maximum.  A sample with zero integral forces ``C = inf``.
    """
    if any((u.values < 0).any() for u in family):
        raise ValueError("the dichotomy applies to nonnegative functions")
    ratios, below, infinite = [], 0, 0
    phi = params.transform
    thr = params.threshold
    n = params.pair.n
    for u in family:
        vals = None
        cache: dict[float, float] = {}
        for x, r in samples:
            ux = u.value_at(x)
            if ux <= thr:
                below += 1
                continue
            if vals is None:
                vals = _psi_values(params.pair, u)
            J = ball_integral_values(u.domain, vals, x, r)
            if J == math.inf:
                infinite += 1
                continue
            if ux not in cache:
                cache[ux] = phi(ux)
            ratios.append(cache[ux] * r ** n / J if J > 0 else math.inf)
    arr = np.array(ratios, dtype=float)
    C = float(arr.max()) if arr.size else 0.0
    return CFit(C, arr, int(arr.size), below, infinite)


# ---------------------------------------------------------------------------
# compact set and the uniform bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompactSetup:
    """A closed box ``E`` strictly inside the grid's domain, and its ``rho0 / 2`` inflation ``E1``."""

    domain: Domain
    E_lo: tuple[float, ...]
    E_hi: tuple[float, ...]

    def __post_init__(self):
        lo, hi = tuple(map(float, self.E_lo)), tuple(map(float, self.E_hi))
        if len(lo) != self.domain.n or len(hi) != self.domain.n:
            raise ValueError("E has the wrong dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("E must have lo <= hi on every axis")
        object.__setattr__(self, "E_lo", lo)
        object.__setattr__(self, "E_hi", hi)
        if not self.rho0 > 0:
            raise ValueError("E must lie strictly inside the domain")

    @property
    def rho0(self) -> float:
        d = self.domain
        return min(min(a - l, u - b) for a, b, l, u in zip(self.E_lo, self.E_hi, d.lo, d.hi))

    def node_mask(self) -> np.ndarray:
        """Nodes lying in ``E``."""
        h = self.domain.h
        masks = [(ax >= a - 1e-9 * h) & (ax <= b + 1e-9 * h)
                 for ax, a, b in zip(self.domain.axes(), self.E_lo, self.E_hi)]
        out = masks[0]
        for m in masks[1:]:
            out = np.multiply.outer(out, m)
        return out.astype(bool)

    def e_nodes(self) -> list[tuple[float, ...]]:
        idx = np.argwhere(self.node_mask())
        return [self.domain.node(tuple(i)) for i in idx]

    def e1_weights(self) -> np.ndarray:
        """Fraction of each node's cell lying in ``E1``, using the ball stencil's subsample points.

        Any ball ``B(x, rho0 / 2)`` with ``x`` in ``E`` gets cell weights no
        larger than these, so ball integrals of nonnegative data are dominated.
        """
        d = self.domain
        n, h = d.n, d.h
        m = 4 if n == 2 else 3
        sub = ((np.arange(m) + 0.5) / m - 0.5) * h
        offs = np.stack(np.meshgrid(*([sub] * n), indexing="ij"), axis=-1).reshape(-1, n)
        lim = (0.5 * self.rho0) ** 2 * (1 + 1e-12)
        pts = d.nodes()[..., None, :] + offs  # (..., m^n, n)
        gap = np.maximum(np.maximum(np.array(self.E_lo) - pts, pts - np.array(self.E_hi)), 0.0)
        return ((gap ** 2).sum(-1) <= lim).mean(-1)

    def integrate_E1(self, values: np.ndarray) -> float:
        w = self.e1_weights()
        hot = w > 0
        v = values[hot]
        if np.isposinf(v).any():
            return math.inf
        return float(np.sum(w[hot] * v)) * self.domain.h ** self.domain.n

    def sup_on_E(self, u: ScalarField) -> float:
        return float(u.values[self.node_mask()].max())

    def to_json(self) -> dict:
        return {"E_lo": list(self.E_lo), "E_hi": list(self.E_hi), "rho0": self.rho0}


@dataclass(frozen=True)
class BoundResult:
    bound: float
    s_tilde_3: float
    a_star: float | None
    rhs: float
    branch: str  # "s~3" or "tail"

    def to_json(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else "inf")
                for k, v in self.__dict__.items()}


def family_bound(params: DichotomyParams, rho0: float, psi_F_integral: float) -> BoundResult:
    """``B = max(s~3, c(a*))`` where ``T(a* - 2) = [C (2 / rho0)^n I]^(1/(1-n))``.

    ``I`` is ``int_E1 psi(F)``.  When the target exceeds every attainable
    tail value, no value above ``s~3`` is possible and ``B = s~3``.
    """
    if params.C is None:
        raise ValueError("C is not set; fit it first")
    if not rho0 > 0:
        raise ValueError(f"rho0 must be positive, got {rho0}")
    if not (psi_F_integral >= 0 and math.isfinite(psi_F_integral)):
        raise ValueError(f"integral of psi(F) over E1 must be finite and nonnegative, got {psi_F_integral}")
    n = params.pair.n
    st3 = params.s_tilde_3
    R = params.C * (2.0 / rho0) ** n * psi_F_integral
    if R == 0:
        return BoundResult(st3, st3, None, R, "s~3")
    lower = params.transform.solve_tail(R ** (1.0 / (1 - n)))
    if lower is None:
        return BoundResult(st3, st3, None, R, "s~3")
    a_star = lower + 2.0
    top = params.pair.composite(a_star)
    if top > st3:
        return BoundResult(top, st3, a_star, R, "tail")
    return BoundResult(st3, st3, a_star, R, "s~3")
