"""``qnsub`` command line.

Exit codes: 0 pass, 1 mathematical violation, 2 usage or configuration error.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from pathlib import Path

import click
import numpy as np

from .config import ExperimentConfig, load_config
from .envelope import (FamilyEnvelope, check_envelope_qns, family_sup, local_bound_report,
                       nearly_subharmonic_regularization_check)
from .function_model import FunctionSpec, ScalarField, catalog_listing, family_fields, sample_to_grid
from .mean_value import (SampleSpec, check_qns_ns, check_qns_truncations, estimate_min_K)
from .pairs import validate_pair
from .phi_bound import CompactSetup, DichotomyParams, family_bound, fit_constant_C, phi_transform

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class ConfigError(click.UsageError):
    exit_code = EXIT_USAGE


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n", encoding="utf-8")


def _write_grid_csv(path: Path, field: ScalarField) -> None:
    nodes = field.domain.nodes().reshape(-1, field.domain.n)
    vals = field.values.reshape(-1)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i + 1}" for i in range(field.domain.n)] + ["value"])
        for p, v in zip(nodes, vals):
            wr.writerow([format(float(c), ".17g") for c in p] + [format(float(v), ".17g")])


class Run:
    """Shared state of one command: validated config, output directory, overrides."""

    def __init__(self, config_path, out, resolution, tol, seed):
        if config_path is None:
            raise ConfigError("--config is required for this command")
        try:
            self.cfg: ExperimentConfig = load_config(config_path)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.resolution = resolution
        self.tol = self.cfg.tol if tol is None else tol
        self.seed = self.cfg.seed if seed is None else seed

    def domain(self, refine: int = 1):
        self.cfg.require("domain")
        h = self.cfg.domain.h if self.resolution is None else self.resolution
        return self.cfg.domain.build(h / refine)

    def samples(self, domain) -> SampleSpec:
        self.cfg.require("samples")
        return self.cfg.samples.build(domain, self.seed)

    def family(self, domain) -> list[ScalarField]:
        self.cfg.require("family")
        return family_fields(self.cfg.family_specs(), domain)


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON experiment config.")
    @click.option("--out", default="qnsub-out", show_default=True, type=click.Path(file_okay=False),
                  help="Output directory.")
    @click.option("--resolution", type=float, default=None, help="Override the grid spacing h.")
    @click.option("--tol", type=float, default=None, help="Override the tolerance.")
    @click.option("--seed", type=int, default=None, help="Override the sample seed.")
    @functools.wraps(fn)
    def wrapper(config_path, out, resolution, tol, seed, **kw):
        run = Run(config_path, out, resolution, tol, seed)
        try:
            code = fn(run, **kw)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        click.get_current_context().exit(code)
    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Numerical checks for quasinearly subharmonic functions and their families."""


@main.command()
@click.argument("filter_text", required=False)
def catalog(filter_text):
    """List function kinds (optionally those whose name or doc contains FILTER_TEXT)."""
    for kind, doc in catalog_listing(filter_text):
        click.echo(f"{kind}\t{doc}")


@main.command()
@common_options
def check(run: Run):
    """Mean-value inequality at constant K on the configured function."""
    run.cfg.require("function")
    dom = run.domain()
    u = sample_to_grid(run.cfg.function_spec(), dom)
    S = run.samples(dom)
    K = run.cfg.check.K
    if run.cfg.check.M:
        rep = check_qns_truncations(u, K, run.cfg.check.M, S, run.tol)
    else:
        rep = check_qns_ns(u, K, S, run.tol)
    summary = rep.summary()
    if (u.values >= 0).all():
        summary["estimated_min_K"] = estimate_min_K(u, S)
    (run.out / "check.csv").write_text(rep.to_csv(), encoding="utf-8")
    (run.out / "check.jsonl").write_text(rep.to_jsonl(), encoding="utf-8")
    viol = type(rep)(rep.label, rep.K, rep.tol, rep.failures)
    (run.out / "violations.csv").write_text(viol.to_csv(), encoding="utf-8")
    _write_json(run.out / "check_summary.json", summary)
    click.echo(f"{rep.n_failures} violation(s) in {len(rep.records)} checks at K={K:g}, tol={run.tol:g}")
    return EXIT_OK if rep.ok else EXIT_VIOLATION


@main.command("validate-pair")
@common_options
def validate_pair_cmd(run: Run):
    """Conditions (i)-(iv) for the configured test-function pair."""
    run.cfg.require("pair")
    pair = run.cfg.pair.build()
    rep = pair.report or validate_pair(pair, run.cfg.pair.S_max)
    data = {"pair": pair.to_json(), **rep.to_json()}
    _write_json(run.out / "pair_report.json", data)
    for v in (rep.i, rep.ii, rep.iii, rep.iv):
        click.echo(f"condition ({v.condition}): {'pass' if v.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_VIOLATION


@main.command("build-pair")
@common_options
def build_pair_cmd(run: Run):
    """Build the pair psi(t) = phi(p log+ t) with the smallest admissible s0."""
    run.cfg.require("pair")
    if run.cfg.pair.p is None:
        raise ConfigError("build-pair needs the corollary form {phi, p, K, n}")
    try:
        pair = run.cfg.pair.build()
    except ValueError as exc:
        click.echo(f"no admissible pair: {exc}", err=True)
        return EXIT_VIOLATION
    _write_json(run.out / "pair.json", {"pair": pair.to_json(), **pair.report.to_json()})
    click.echo(f"s0={pair.s0} s1={pair.s1}")
    return EXIT_OK


@main.command()
@common_options
def phi(run: Run):
    """Tabulate Phi over a t-grid."""
    run.cfg.require("pair")
    pair = run.cfg.pair.build()
    P = phi_transform(pair)
    rows = []
    for t in run.cfg.phi.grid():
        v, clamped = P.value_flagged(t)
        rows.append((t, v, clamped))
    with (run.out / "phi.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "Phi", "clamped"])
        for t, v, c in rows:
            wr.writerow([format(t, ".17g"), format(v, ".17g"), int(c)])
    _write_json(run.out / "phi_summary.json",
                {"pair": pair.to_json(), "s3": P.s3, "points": len(rows),
                 "clamped": sum(c for _, _, c in rows)})
    click.echo(f"s3={P.s3:.17g}; {len(rows)} values written")
    return EXIT_OK


@main.command()
@common_options
def bound(run: Run):
    """Fit C, compute the uniform bound on E and compare with the family's sup there."""
    cfg = run.cfg
    cfg.require("pair", "bound")
    dom = run.domain()
    fam = run.family(dom)
    pair = cfg.pair.build()
    setup = CompactSetup(dom, tuple(cfg.bound.E_lo), tuple(cfg.bound.E_hi))
    params = DichotomyParams(pair, None, cfg.bound.s_tilde_1)
    fit_summary = None
    if cfg.bound.C is None:
        S = run.samples(dom)
        if cfg.bound.fit_with_E_balls:
            S = SampleSpec(S.samples + tuple((x, setup.rho0 / 2) for x in setup.e_nodes()))
        fit = fit_constant_C(fam, S, params)
        fit_summary = fit.summary()
        if fit.unconstrained:
            click.echo("no sample exceeds the threshold; C is unconstrained (lower bound 0)")
        if not math.isfinite(fit.C):
            click.echo("fitted C is infinite (a ball integral of psi(u) vanished)", err=True)
            _write_json(run.out / "bound.json", {"fit": fit_summary})
            return EXIT_VIOLATION
        C = fit.C if fit.C > 0 else 1.0
    else:
        C = cfg.bound.C
    params = params.with_C(C)
    w = family_sup(fam)
    if cfg.bound.dominant is not None:
        F = sample_to_grid(FunctionSpec.from_json(cfg.bound.dominant.as_dict()), dom)
        dominates = bool((F.values >= w.values).all())
    else:
        F, dominates = w, True
    I = setup.integrate_E1(np.asarray(pair.psi(np.maximum(F.values, 0.0)), dtype=float))
    if math.isfinite(I):
        res = family_bound(params, setup.rho0, I)
        rep = local_bound_report(fam, setup, res, I)
        bound_val = res.bound
    else:
        res = None
        rep = local_bound_report(fam, setup, None, I)
        bound_val = None
    rep["dominant_dominates_family"] = dominates
    passed = rep["passed"] and dominates
    _write_json(run.out / "bound.json", {
        "pair": pair.to_json(), "C": C, "rho0": setup.rho0, "psi_F_integral": I,
        "threshold": params.threshold, "s_tilde_1": params.s_tilde_1, "s_tilde_3": params.s_tilde_3,
        "bound": bound_val, "bound_detail": res.to_json() if res else None,
        "fit": fit_summary, "report": rep, "passed": passed,
    })
    click.echo(f"sup_E w = {rep['empirical_sup']:.6g}; bound = {bound_val if bound_val is None else format(bound_val, '.6g')}"
               f"; {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_VIOLATION


@main.command()
@common_options
def envelope(run: Run):
    """Envelope w, its regularization w*, and the mean-value check on w*."""
    dom = run.domain()
    fam = run.family(dom)
    S = run.samples(dom)
    env = FamilyEnvelope.build(fam, run.cfg.envelope.radii_schedule)
    K = run.cfg.envelope.K
    if K is None:
        K = max(estimate_min_K(ScalarField(dom, np.maximum(u.values, 0.0)), S) for u in fam)
    rep = check_envelope_qns(env.w_star, K, S, run.tol, w=env.w)
    _write_grid_csv(run.out / "w.csv", env.w)
    _write_grid_csv(run.out / "w_star.csv", env.w_star)
    (run.out / "envelope_check.csv").write_text(rep.final.to_csv(), encoding="utf-8")
    _write_json(run.out / "envelope_summary.json", {"K": K, "envelope": env.summary(), **rep.summary()})
    click.echo(f"{rep.final.n_failures} violation(s) for w* at K={K:.6g}")
    return EXIT_OK if rep.ok else EXIT_VIOLATION


@main.command()
@common_options
def regularize(run: Run):
    """Regularize a function and check the result at K = 1."""
    run.cfg.require("function")
    dom = run.domain()
    u = sample_to_grid(run.cfg.function_spec(), dom)
    rc = run.cfg.regularize
    if rc.lower_nodes:
        v = u.values.copy()
        for p in rc.lower_nodes:
            if not dom.is_node(p):
                raise ConfigError(f"{p} is not a grid node")
            v[dom.nearest_index(p)] -= rc.delta
        u = ScalarField(dom, v)
    S = run.samples(dom)
    rep = nearly_subharmonic_regularization_check(u, rc.radii_schedule, S, run.tol)
    summary = rep.summary()
    if not rc.lower_nodes:
        # the changed fraction should shrink under refinement
        fine = dom.refine(2)
        rep2 = nearly_subharmonic_regularization_check(sample_to_grid(run.cfg.function_spec(), fine),
                                                       None, run.cfg.samples.build(fine, run.seed), run.tol)
        summary["refined"] = {"h": fine.h, "fraction_changed": rep2.fraction_differ}
    _write_grid_csv(run.out / "u_star.csv", rep.u_star)
    _write_json(run.out / "regularize_summary.json", summary)
    if not rep.precondition.ok:
        click.echo(f"precondition fails: {rep.precondition.n_failures} violation(s) of the K=1 check on u")
    click.echo(f"u* changes {rep.n_differ} node(s); post-check {'pass' if rep.post.ok else 'FAIL'}")
    return EXIT_OK if rep.ok and rep.precondition.ok else EXIT_VIOLATION


if __name__ == "__main__":  # pragma: no cover
    main()
