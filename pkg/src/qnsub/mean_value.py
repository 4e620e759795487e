"""Solid-ball averages on grids and the mean-value inequality checkers.

Ball integrals use the node-centred cell sum.  Cells wholly inside the
ball get weight 1, cells wholly outside get 0, and cells cut by the sphere
get the fraction of a 4x4 (n=2) or 3x3x3 (n=3) midpoint sub-sample lying
in the closed ball.  Averages divide by the discrete ball volume
``sum(weights) * h**n`` so constants are reproduced exactly; for centres
on grid nodes the weights are symmetric under every axis reflection, so
affine functions are reproduced exactly as well.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .function_model import NEG_INF, Domain, ScalarField, truncate_shift, unit_ball_volume

MIN_RADIUS_CELLS = 2.0


def _subsample_count(n: int) -> int:
    return 4 if n == 2 else 3


@lru_cache(maxsize=512)
def _stencil(n: int, r_cells: float, offset: tuple[float, ...]) -> tuple[tuple[int, ...], np.ndarray]:
    """Weights for the unit-spacing ball of radius ``r_cells`` centred at ``offset``.

    ``offset`` is the centre relative to node 0 in cell units.  Returns the
    index of the stencil's first node and the dense weight box.
    """
    start = tuple(int(math.floor(o - r_cells - 0.5)) for o in offset)
    stop = tuple(int(math.ceil(o + r_cells + 0.5)) for o in offset)
    axes = [np.arange(a, b + 1, dtype=float) - o for a, b, o in zip(start, stop, offset)]
    rel = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # node minus centre
    near = np.maximum(np.abs(rel) - 0.5, 0.0)
    far = np.abs(rel) + 0.5
    dmin = np.sqrt((near ** 2).sum(-1))
    dmax = np.sqrt((far ** 2).sum(-1))
    w = np.where(dmax <= r_cells, 1.0, 0.0)
    cut = (dmin < r_cells) & (dmax > r_cells)
    if cut.any():
        m = _subsample_count(n)
        sub = (np.arange(m) + 0.5) / m - 0.5
        pts = np.stack(np.meshgrid(*([sub] * n), indexing="ij"), axis=-1).reshape(-1, n)
        centres = rel[cut]
        d2 = ((centres[:, None, :] + pts[None, :, :]) ** 2).sum(-1)
        w[cut] = (d2 <= r_cells * r_cells).mean(axis=1)
    w.setflags(write=False)
    return start, w


def ball_stencil(domain: Domain, x: Sequence[float], r: float) -> tuple[tuple[slice, ...], np.ndarray]:
    """Slices into the field array and the matching fractional cell weights."""
    h = domain.h
    base = domain.nearest_index(x)
    off = tuple(round((xi - a) / h - b, 12) for xi, a, b in zip(x, domain.lo, base))
    start, w = _stencil(domain.n, round(r / h, 12), off)
    slices, trims = [], []
    for s, b, m, size in zip(start, base, domain.shape, w.shape):
        i0, i1 = b + s, b + s + size
        lo_trim, hi_trim = max(0, -i0), max(0, i1 - m)
        slices.append(slice(i0 + lo_trim, i1 - hi_trim))
        trims.append(slice(lo_trim, size - hi_trim))
    return tuple(slices), w[tuple(trims)]


@dataclass(frozen=True)
class BallMean:
    integral: float
    volume: float
    touched_neg_inf: bool

    @property
    def average(self) -> float:
        return self.integral / self.volume


def _check_ball(domain: Domain, x, r):
    if len(x) != domain.n:
        raise ValueError(f"centre {tuple(x)} has wrong dimension for n={domain.n}")
    if not domain.contains_ball(x, r):
        raise ValueError(f"closed ball B({tuple(x)}, {r}) is not inside the domain")
    if r < MIN_RADIUS_CELLS * domain.h * (1 - 1e-12):
        raise ValueError(f"radius {r} below the resolvable minimum 2h = {2 * domain.h}")


def ball_mean(u: ScalarField, x: Sequence[float], r: float, floor: float | None = None) -> BallMean:
    """Integral and discrete volume of ``u`` over ``B(x, r)``.

    ``-inf`` nodes contribute ``floor`` (default ``u.neg_inf_floor()``) and
    the result records that the ball touched them.
    """
    _check_ball(u.domain, x, r)
    slices, w = ball_stencil(u.domain, x, r)
    vals = u.values[slices]
    hn = u.domain.h ** u.domain.n
    volume = float(w.sum()) * hn
    neg = np.isneginf(vals)
    touched = bool((neg & (w > 0)).any())
    if neg.any():
        fl = u.neg_inf_floor() if floor is None else floor
        if fl == NEG_INF:
            return BallMean(NEG_INF, volume, touched)
        vals = np.where(neg, fl, vals)
    return BallMean(float(np.sum(w * vals)) * hn, volume, touched)


def ball_average(u: ScalarField, x: Sequence[float], r: float, floor: float | None = None) -> float:
    """``(1 / |B|) * integral of u over B(x, r)`` by fractional cell quadrature."""
    return ball_mean(u, x, r, floor).average


def ball_integral(u: ScalarField, x: Sequence[float], r: float) -> float:
    return ball_mean(u, x, r).integral


def ball_integral_values(domain: Domain, values: np.ndarray, x: Sequence[float], r: float) -> float:
    """Ball integral of a raw node array that may hold ``+inf`` (e.g. ``psi(u)`` after overflow)."""
    _check_ball(domain, x, r)
    slices, w = ball_stencil(domain, x, r)
    vals = values[slices]
    hot = w > 0
    if np.isposinf(vals[hot]).any():
        return math.inf
    return float(np.sum(w[hot] * vals[hot])) * domain.h ** domain.n


# ---------------------------------------------------------------------------
# sample sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSpec:
    """Admissible ``(centre, radius)`` pairs: every closed ball lies in the domain."""

    samples: tuple[tuple[tuple[float, ...], float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "samples",
            tuple((tuple(float(c) for c in x), float(r)) for x, r in self.samples),
        )
        for _, r in self.samples:
            if not r > 0:
                raise ValueError("sample radii must be positive")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def validate(self, domain: Domain) -> "SampleSpec":
        for x, r in self.samples:
            _check_ball(domain, x, r)
        return self

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for _, r in self.samples])

    @classmethod
    def subgrid(cls, domain: Domain, r_max: float, n_radii: int = 4, stride: int = 1,
                r_min: float | None = None) -> "SampleSpec":
        """Centres on every ``stride``-th node at least ``r_max`` from the boundary,
        radii geometric from ``r_min`` (default 2h) to ``r_max``."""
        h = domain.h
        r_min = MIN_RADIUS_CELLS * h if r_min is None else r_min
        if r_max < r_min:
            raise ValueError(f"r_max={r_max} is below r_min={r_min}")
        radii = np.geomspace(r_min, r_max, n_radii) if n_radii > 1 else np.array([r_max])
        axes = []
        for a, b in zip(domain.lo, domain.hi):
            k0 = int(math.ceil((r_max - 1e-12) / h))
            k1 = int(math.floor((b - a - r_max + 1e-12) / h))
            axes.append([a + k * h for k in range(k0, k1 + 1, stride)])
        if any(not ax for ax in axes):
            raise ValueError("no node lies r_max away from the boundary")
        centres = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, domain.n)
        return cls(tuple((tuple(c), float(r)) for c in centres for r in radii))

    @classmethod
    def random(cls, domain: Domain, count: int, r_min: float, r_max: float, seed: int = 0,
               keep: Callable[[tuple[float, ...], float], bool] | None = None,
               max_tries: int = 100_000) -> "SampleSpec":
        """``count`` random node-centred balls with radius uniform in ``[r_min, r_max]``."""
        rng = np.random.default_rng(seed)
        h = domain.h
        out = []
        tries = 0
        while len(out) < count:
            tries += 1
            if tries > max_tries:
                raise ValueError("could not draw enough admissible samples")
            r = float(rng.uniform(r_min, r_max))
            x = []
            for a, b in zip(domain.lo, domain.hi):
                k0 = int(math.ceil((r - 1e-12) / h))
                k1 = int(math.floor((b - a - r + 1e-12) / h))
                if k1 < k0:
                    break
                x.append(a + h * int(rng.integers(k0, k1 + 1)))
            else:
                xt = tuple(x)
                if keep is None or keep(xt, r):
                    out.append((xt, r))
        return cls(tuple(out))

    def excluding_points(self, points: Iterable[Sequence[float]], margin: float = 0.0) -> "SampleSpec":
        """Drop samples whose closed ball (grown by ``margin``) contains one of ``points``."""
        pts = [np.asarray(p, float) for p in points]
        kept = tuple(
            (x, r) for x, r in self.samples
            if all(np.linalg.norm(np.asarray(x) - p) > r + margin for p in pts)
        )
        return SampleSpec(kept)

    def to_json(self) -> list:
        return [{"x": list(x), "r": r} for x, r in self.samples]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def passes(lhs: float, rhs: float, tol: float) -> bool:
    """Sign-aware hybrid test ``lhs <= rhs + tol * max(1, |lhs|, |rhs|)``."""
    if lhs == NEG_INF:
        return True
    if rhs == NEG_INF:
        return False
    return lhs <= rhs + tol * max(1.0, abs(lhs), abs(rhs))


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == NEG_INF:
        return NEG_INF
    if rhs > 0:
        return lhs / rhs
    if rhs < 0:
        return lhs / rhs if lhs != 0 else 0.0
    return math.inf if lhs > 0 else (0.0 if lhs == 0 else NEG_INF)


@dataclass(frozen=True)
class SampleRecord:
    x: tuple[float, ...]
    r: float
    lhs: float
    mean: float
    rhs: float
    ratio: float
    passed: bool
    M: float | None = None
    neg_inf_touched: bool = False


def minimal_K(pairs: Iterable[tuple[float, float]]) -> float:
    """Smallest ``K >= 1`` with ``lhs <= K * mean`` for every pair, ``inf`` if none exists."""
    lo, hi = 1.0, math.inf
    for lhs, mean in pairs:
        if lhs == NEG_INF:
            continue
        if mean > 0:
            lo = max(lo, lhs / mean)
        elif mean < 0:
            hi = min(hi, lhs / mean)
        elif lhs > 0:
            return math.inf
    return lo if lo <= hi else math.inf


@dataclass
class ViolationReport:
    """Per-sample left/right sides of a mean-value inequality with a summary."""

    label: str
    K: float
    tol: float
    records: list[SampleRecord] = field(default_factory=list)

    @property
    def failures(self) -> list[SampleRecord]:
        return [rec for rec in self.records if not rec.passed]

    @property
    def n_failures(self) -> int:
        return len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def worst_ratio(self) -> float:
        return max((rec.ratio for rec in self.records), default=NEG_INF)

    @property
    def worst(self) -> SampleRecord | None:
        """Record with the largest normalised excess ``(lhs - rhs) / max(1, |lhs|, |rhs|)``."""
        def excess(rec):
            if rec.lhs == NEG_INF:
                return NEG_INF
            if rec.rhs == NEG_INF:
                return math.inf
            return (rec.lhs - rec.rhs) / max(1.0, abs(rec.lhs), abs(rec.rhs))
        return max(self.records, key=excess, default=None)

    @property
    def fitted_K(self) -> float:
        return minimal_K((rec.lhs, rec.mean) for rec in self.records)

    @property
    def neg_inf_flagged(self) -> int:
        return sum(rec.neg_inf_touched for rec in self.records)

    def summary(self) -> dict:
        radii = [rec.r for rec in self.records]
        worst = self.worst
        return {
            "label": self.label,
            "K": self.K,
            "tol": self.tol,
            "n_samples": len(self.records),
            "n_failures": self.n_failures,
            "worst_ratio": self.worst_ratio,
            "fitted_min_K": self.fitted_K,
            "neg_inf_touched": self.neg_inf_flagged,
            "worst": None if worst is None else _record_json(worst),
            "coverage": {
                "r_min": min(radii, default=None),
                "r_max": max(radii, default=None),
                "note": "finite sample of balls; necessary, not sufficient",
            },
        }

    def to_csv(self, fh=None) -> str | None:
        buf = fh if fh is not None else io.StringIO()
        n = len(self.records[0].x) if self.records else 0
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(n)]
                        + ["r", "lhs", "rhs", "ratio", "pass", "M", "neg_inf_touched"])
        for rec in self.records:
            writer.writerow([_fmt(c) for c in rec.x]
                            + [_fmt(rec.r), _fmt(rec.lhs), _fmt(rec.rhs), _fmt(rec.ratio),
                               int(rec.passed), "" if rec.M is None else _fmt(rec.M),
                               int(rec.neg_inf_touched)])
        return buf.getvalue() if fh is None else None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_record_json(rec)) + "\n" for rec in self.records)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf"
    return v


def _record_json(rec: SampleRecord) -> dict:
    d = asdict(rec)
    d["x"] = list(rec.x)
    return {k: _json_float(v) for k, v in d.items()}


# ---------------------------------------------------------------------------
# checkers
# ---------------------------------------------------------------------------

def _records(u: ScalarField, K: float, samples: SampleSpec, tol: float, M=None,
             lhs_field: ScalarField | None = None):
    out = []
    lhs_field = u if lhs_field is None else lhs_field
    for x, r in samples:
        lhs = lhs_field.value_at(x)
        bm = ball_mean(u, x, r)
        mean = bm.average
        rhs = K * mean if mean != NEG_INF else NEG_INF
        out.append(SampleRecord(x, r, lhs, mean, rhs, _ratio(lhs, rhs), passes(lhs, rhs, tol),
                                M, bm.touched_neg_inf))
    return out


def check_qns_ns(u: ScalarField, K: float, samples: SampleSpec, tol: float = 1e-2) -> ViolationReport:
    """Check ``u(x) <= K * mean_B(x,r) u`` on every sample (the narrow-sense inequality)."""
    if not K >= 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    rep = ViolationReport("qns-ns", K, tol)
    rep.records = _records(u, K, samples, tol)
    return rep


def check_mean_inequality(lhs_field: ScalarField, mean_field: ScalarField, K: float, samples: SampleSpec,
                          tol: float = 1e-2, label: str = "mean-inequality") -> ViolationReport:
    """Check ``lhs_field(x) <= K * mean_B(x,r) mean_field`` on every sample."""
    if lhs_field.domain != mean_field.domain:
        raise ValueError("fields live on different grids")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    rep = ViolationReport(label, K, tol)
    rep.records = _records(mean_field, K, samples, tol, lhs_field=lhs_field)
    return rep


def check_qns_truncations(u: ScalarField, K: float, M_list: Sequence[float], samples: SampleSpec,
                          tol: float = 1e-2) -> ViolationReport:
    """Run the narrow-sense check on every truncation ``u_M = max(u, -M) + M``."""
    if not K >= 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    if not M_list:
        raise ValueError("M_list must be nonempty")
    if any(not M >= 0 for M in M_list):
        raise ValueError("truncation levels must be >= 0")
    rep = ViolationReport("qns-truncations", K, tol)
    for M in M_list:
        rep.records.extend(_records(truncate_shift(u, M), K, samples, tol, M=float(M)))
    return rep


def estimate_min_K(u: ScalarField, samples: SampleSpec) -> float:
    """Smallest constant consistent with the samples for a nonnegative field.

    ``max(1, sup u(x) / mean)`` over samples with positive mean; ``inf`` when
    some sample has ``u(x) > 0`` but zero mean.
    """
    if (u.values < 0).any():
        raise ValueError("estimate_min_K needs a nonnegative field; use check_qns_truncations "
                         "for signed functions")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    K = 1.0
    for x, r in samples:
        lhs = u.value_at(x)
        mean = ball_average(u, x, r)
        if mean > 0:
            K = max(K, lhs / mean)
        elif lhs > 0:
            return math.inf
    return K


def domar_class_constant(A: float, n: int) -> float:
    """QNS constant ``nu_n * A**(n + 1)`` of Domar's class K(A, n)."""
    if not A >= 1:
        raise ValueError(f"A must be >= 1, got {A}")
    return unit_ball_volume(n) * A ** (n + 1)
