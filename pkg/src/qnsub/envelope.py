"""Sup-envelopes of families, their upper regularization, and the checks built on them.

The grid regularization :func:`usc_regularize` raises a node only when the
one-sided limits along every coordinate ray agree on a value above it.  In
that case the node is a removable downward defect, so its limsup is the
consensus of those limits.  Isolated upward spikes are already upper
semicontinuous and are left alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .function_model import ScalarField
from .mean_value import (SampleSpec, ViolationReport, ball_integral, check_mean_inequality, check_qns_ns)
from .phi_bound import BoundResult, CompactSetup

MAX_SWEEPS = 16


def family_sup(members: Sequence[ScalarField]) -> ScalarField:
    """Node-wise ``max(u+)`` over the family."""
    if not members:
        raise ValueError("empty family")
    dom = members[0].domain
    if any(u.domain != dom for u in members[1:]):
        raise ValueError("family members live on different grids")
    w = np.maximum(members[0].values, 0.0)
    for u in members[1:]:
        w = np.maximum(w, u.values)
    return ScalarField(dom, w)


def default_schedule(h: float) -> list[float]:
    return [8 * h, 4 * h, 2 * h, h]


def _check_schedule(w: ScalarField, schedule: Sequence[float]) -> list[float]:
    sched = [float(r) for r in schedule]
    if not sched:
        raise ValueError("empty radii schedule")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError(f"radii schedule must be strictly decreasing: {sched}")
    h = w.domain.h
    if sched[-1] < h * (1 - 1e-12):
        raise ValueError(f"smallest window radius {sched[-1]} is below the spacing {h}")
    extent = min(b - a for a, b in zip(w.domain.lo, w.domain.hi))
    if sched[0] >= extent:
        raise ValueError(f"window radius {sched[0]} is coarser than the domain (extent {extent})")
    return sched


def window_sup(values: np.ndarray, h: float, rho: float) -> np.ndarray:
    """Sup over the closed window ``|y - x| <= rho`` (grid nodes, centre included)."""
    k = int(math.floor(rho / h + 1e-9))
    n = values.ndim
    offs = np.arange(-k, k + 1)
    grids = np.meshgrid(*([offs] * n), indexing="ij")
    foot = sum(g.astype(float) ** 2 for g in grids) <= (rho / h) ** 2 * (1 + 1e-12)
    return ndimage.maximum_filter(values, footprint=foot, mode="constant", cval=-np.inf)


def _shift(a: np.ndarray, axis: int, k: int) -> np.ndarray:
    """``out[i] = a[i + k]`` along ``axis``; positions without data are NaN."""
    out = np.full(a.shape, np.nan)
    m = a.shape[axis]
    if abs(k) >= m:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[axis], dst[axis] = slice(k, None), slice(0, m - k)
    else:
        src[axis], dst[axis] = slice(0, m + k), slice(-k, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _ray_statistics(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Consensus ray limit ``lam`` and curvature allowance ``tau`` at every node."""
    lam = np.full(v.shape, np.inf)
    curv = np.zeros(v.shape)
    have_ray = np.zeros(v.shape, dtype=bool)
    have_curv = np.zeros(v.shape, dtype=bool)
    with np.errstate(invalid="ignore"):
        for ax in range(v.ndim):
            for sgn in (1, -1):
                a, b, c = (_shift(v, ax, sgn * k) for k in (1, 2, 3))
                ok = ~np.isnan(a) & ~np.isnan(b)
                e = np.where(np.isneginf(a) | np.isneginf(b), -np.inf, 2 * a - b)
                lam = np.where(ok, np.minimum(lam, e), lam)
                have_ray |= ok
                okc = ok & ~np.isnan(c)
                d2 = a - 2 * b + c
                d2 = np.where(np.isneginf(a) | np.isneginf(b) | np.isneginf(c), np.inf, np.abs(d2))
                curv = np.where(okc, np.maximum(curv, d2), curv)
                have_curv |= okc
    lam = np.where(have_ray, lam, -np.inf)
    tau = np.where(have_curv, 2.0 * curv, np.inf)
    return lam, tau


def usc_regularize(w: ScalarField, radii_schedule: Sequence[float] | None = None) -> ScalarField:
    """Grid upper regularization ``w*`` with ``w* >= w``.

    A node is raised when the linear extrapolations ``2 w(x + h d) - w(x + 2h d)``
    along all ``2n`` coordinate rays exceed ``w(x)`` by more than twice the
    largest second difference seen on those rays.  The new value is the
    smallest of those extrapolations, capped by the infimum over the schedule
    of the closed-window sup.  Sweeps repeat until nothing moves, so the
    result is a fixed point.  ``-inf`` nodes are never raised: a grid cannot
    tell a pole from a defect.
    """
    h = w.domain.h
    sched = _check_schedule(w, default_schedule(h) if radii_schedule is None else radii_schedule)
    v = w.values.copy()
    cap = np.full(v.shape, np.inf)
    for rho in sched:
        cap = np.minimum(cap, window_sup(w.values, h, rho))
    for _ in range(MAX_SWEEPS):
        lam, tau = _ray_statistics(v)
        slack = 1e-12 * np.maximum(1.0, np.maximum(np.abs(v), np.abs(np.where(np.isfinite(lam), lam, 0.0))))
        with np.errstate(invalid="ignore"):
            flag = np.isfinite(v) & np.isfinite(lam) & (lam > v + tau + slack)
        if not flag.any():
            break
        v = np.where(flag, np.maximum(v, np.minimum(lam, cap)), v)
    return ScalarField(w.domain, v)


@dataclass
class FamilyEnvelope:
    members: list[ScalarField]
    w: ScalarField
    w_star: ScalarField
    radii_schedule: list[float]

    @classmethod
    def build(cls, members: Sequence[ScalarField], radii_schedule: Sequence[float] | None = None) -> "FamilyEnvelope":
        w = family_sup(members)
        sched = list(radii_schedule) if radii_schedule is not None else default_schedule(w.domain.h)
        return cls(list(members), w, usc_regularize(w, sched), sched)

    def summary(self) -> dict:
        diff = self.w_star.values != self.w.values
        return {"members": len(self.members), "radii_schedule": self.radii_schedule,
                "w_max": float(self.w.values.max()), "w_star_max": float(self.w_star.values.max()),
                "raised_nodes": int(diff.sum())}


@dataclass
class EnvelopeReport:
    """Inequality (w on the left) and the final inequality (w* on the left), sample by sample."""

    final: ViolationReport
    first: ViolationReport | None = None

    @property
    def ok(self) -> bool:
        return self.final.ok and (self.first is None or self.first.ok)

    def first_subset_of_final(self) -> bool:
        """Every sample failing with ``w`` on the left also fails with ``w*`` on the left."""
        if self.first is None:
            return True
        bad_final = {(tuple(r.x), r.r) for r in self.final.failures}
        return all((tuple(r.x), r.r) in bad_final for r in self.first.failures)

    def summary(self) -> dict:
        out = {"ok": self.ok, "w_star": self.final.summary()}
        if self.first is not None:
            out["w"] = self.first.summary()
            out["w_failures_subset_of_w_star_failures"] = self.first_subset_of_final()
        return out


def check_envelope_qns(w_star: ScalarField, K: float, samples: SampleSpec, tol: float = 1e-2,
                       w: ScalarField | None = None) -> EnvelopeReport:
    """``w*(x) <= K mean w*`` per sample; with ``w`` given, also ``w(x) <= K mean w*``."""
    if (w_star.values < 0).any():
        raise ValueError("w* must be nonnegative")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    final = check_mean_inequality(w_star, w_star, K, samples, tol, label="envelope-w*")
    first = None
    if w is not None:
        first = check_mean_inequality(w, w_star, K, samples, tol, label="envelope-w")
    return EnvelopeReport(final, first)


@dataclass(frozen=True)
class FatouRecord:
    x: tuple[float, ...]
    r: float
    window_sup: float
    enlarged: float

    @property
    def passed(self) -> bool:
        return self.window_sup <= self.enlarged * (1 + 1e-12) + 1e-300


def fatou_window_check(w_star: ScalarField, samples: SampleSpec, rho: float) -> list[FatouRecord]:
    """``max_{|y - x| <= rho} int_B(y,r) w*  <=  int_B(x, r + rho) w*`` over grid nodes ``y``.

    Samples whose enlarged ball leaves the domain are skipped.
    """
    dom = w_star.domain
    k = int(math.floor(rho / dom.h + 1e-9))
    out = []
    for x, r in samples:
        if not dom.contains_ball(x, r + rho):
            continue
        base = np.array(dom.nearest_index(x))
        best = -math.inf
        for off in np.ndindex(*([2 * k + 1] * dom.n)):
            step = np.array(off) - k
            if (step ** 2).sum() * dom.h ** 2 > rho ** 2 * (1 + 1e-12):
                continue
            y = tuple(xi + s * dom.h for xi, s in zip(x, step))
            if not dom.contains_ball(y, r):
                continue
            best = max(best, ball_integral(w_star, y, r))
        out.append(FatouRecord(tuple(x), r, best, ball_integral(w_star, x, r + rho)))
    return out


@dataclass
class RegularizationReport:
    precondition: ViolationReport
    u_star: ScalarField
    dominates: bool
    n_differ: int
    fraction_differ: float
    post: ViolationReport

    @property
    def ok(self) -> bool:
        return self.dominates and self.post.ok

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "precondition_ok": self.precondition.ok,
            "precondition_failures": self.precondition.n_failures,
            "u_star_dominates_u": self.dominates,
            "nodes_changed": self.n_differ,
            "fraction_changed": self.fraction_differ,
            "post": self.post.summary(),
        }


def nearly_subharmonic_regularization_check(u: ScalarField, radii_schedule: Sequence[float] | None,
                                            samples: SampleSpec, tol: float = 1e-2) -> RegularizationReport:
    """Regularize ``u`` and report ``u* >= u``, how many nodes moved, and the ``K = 1`` check on ``u*``.

    The ``K = 1`` precondition on ``u`` is evaluated and reported, never assumed.
    """
    pre = check_qns_ns(u, 1.0, samples, tol)
    u_star = usc_regularize(u, radii_schedule)
    dominates = bool((u_star.values >= u.values).all())
    differ = int((u_star.values != u.values).sum())
    post = check_qns_ns(u_star, 1.0, samples, tol)
    return RegularizationReport(pre, u_star, dominates, differ, differ / u.domain.size, post)


def local_bound_report(family: Sequence[ScalarField], setup: CompactSetup, bound: BoundResult | float | None,
                       psi_F_integral: float | None = None) -> dict:
    """Compare ``sup_E w`` with the theoretical bound.

    A non-finite ``psi_F_integral`` means the domination hypothesis fails;
    the report says so and asserts nothing.
    """
    w = family_sup(family)
    if w.domain != setup.domain:
        raise ValueError("E is set up on a different grid than the family")
    emp = setup.sup_on_E(w)
    out = {"empirical_sup": emp, "rho0": setup.rho0, "psi_F_integral": psi_F_integral}
    if psi_F_integral is not None and not math.isfinite(psi_F_integral):
        out.update(hypothesis_ok=False, bound=None, passed=False,
                   note="integral of psi(F) over E1 is not finite; no bound is asserted")
        return out
    if bound is None:
        raise ValueError("no bound supplied")
    B = bound.bound if isinstance(bound, BoundResult) else float(bound)
    out.update(hypothesis_ok=True, bound=B if math.isfinite(B) else "inf", passed=bool(emp <= B * (1 + 1e-9)))
    return out
