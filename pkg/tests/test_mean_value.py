import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qnsub.function_model import Domain, FunctionSpec, ScalarField, sample_to_grid
from qnsub.mean_value import (SampleSpec, ball_average, ball_integral, ball_mean, check_mean_inequality,
                              check_qns_ns, check_qns_truncations, domar_class_constant, estimate_min_K,
                              minimal_K, passes)

from conftest import const_field, grid

UNIT = Domain.unit_square(1 / 64)


def test_constant_average_is_exact():
    u = const_field(UNIT, 3.25)
    assert ball_average(u, (0.5, 0.5), 0.2) == 3.25
    assert ball_average(u, (0.31, 0.47), 0.13) == pytest.approx(3.25, rel=1e-14)


def test_volume_converges_to_the_ball_volume():
    d = Domain.unit_square(1 / 256)
    bm = ball_mean(const_field(d, 1.0), (0.5, 0.5), 0.3)
    assert bm.volume == pytest.approx(math.pi * 0.09, rel=1e-3)


def test_linear_function_at_a_node():
    u = grid("coordinate", [0], UNIT)
    assert ball_average(u, (0.5, 0.25), 0.2) == pytest.approx(0.5, abs=1e-14)


def test_off_node_centre_against_refined_quadrature():
    coarse = Domain.unit_square(1 / 128)
    fine = coarse.refine(8)
    spec = FunctionSpec("coordinate", (0,))
    a = ball_average(sample_to_grid(spec, coarse), (0.3, 0.4), 0.2)
    oracle = ball_average(sample_to_grid(spec, fine), (0.3, 0.4), 0.2)
    assert abs(oracle - 0.3) < 1e-5
    assert abs(a - oracle) < 1e-3


@pytest.mark.parametrize("n,h", [(2, 1 / 64), (3, 1 / 16)])
def test_norm_squared_average_matches_closed_form(n, h):
    # mean of |y|^2 over B(0, r) is r^2 n / (n + 2)
    d = Domain.box((-1.0,) * n, (1.0,) * n, h)
    u = grid("norm-power", [2.0], d)
    r = 1.0
    assert ball_average(u, (0.0,) * n, r) == pytest.approx(r * r * n / (n + 2), rel=2e-3)


def test_ball_admissibility():
    u = const_field(UNIT, 1.0)
    with pytest.raises(ValueError, match="inside"):
        ball_average(u, (0.1, 0.5), 0.2)
    with pytest.raises(ValueError, match="resolvable"):
        ball_average(u, (0.5, 0.5), UNIT.h)
    with pytest.raises(ValueError):
        ball_average(u, (0.5, 0.5, 0.5), 0.2)


def test_neg_inf_uses_floor_and_is_flagged():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    u = grid("log-norm", [], d)
    bm = ball_mean(u, (0.0, 0.0), 0.5)
    assert bm.touched_neg_inf
    assert math.isfinite(bm.average)
    assert ball_mean(u, (0.5, 0.5), 0.25).touched_neg_inf is False


def test_passes_hybrid_tolerance():
    assert passes(1.0, 1.0, 0.0)
    assert passes(1.005, 1.0, 1e-2)
    assert not passes(1.05, 1.0, 1e-2)
    # across zero the absolute floor of one applies
    assert passes(0.005, -0.004, 1e-2)
    assert not passes(0.02, -0.01, 1e-2)
    assert passes(-math.inf, -5.0, 0.0)


def test_minimal_K_interval_logic():
    assert minimal_K([(1.0, 1.0), (2.0, 1.0)]) == 2.0
    assert minimal_K([(0.5, 1.0)]) == 1.0
    assert minimal_K([(1.0, 0.0)]) == math.inf
    # a negative mean bounds K from above: -3 <= K * (-1) needs K <= 3
    assert minimal_K([(2.0, 1.0), (-3.0, -1.0)]) == 2.0
    assert minimal_K([(4.0, 1.0), (-3.0, -1.0)]) == math.inf


def test_subharmonic_norm_square_passes_and_cone_fails():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    S = SampleSpec.subgrid(d, 0.5, n_radii=3, stride=4)
    assert check_qns_ns(grid("norm-power", [2.0], d), 1.0, S).ok
    # 1 - |x| is superharmonic with a strict maximum at the origin
    peak = ScalarField(d, 1.0 - sample_to_grid(FunctionSpec("norm-power", (1.0,)), d).values)
    rep = check_qns_ns(peak, 1.0, S)
    assert not rep.ok
    assert rep.worst.x == (0.0, 0.0)


def test_truncations_of_log_norm_pass_away_from_origin():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    u = grid("log-norm", [], d)
    S = SampleSpec.subgrid(d, 0.4, n_radii=3, stride=4).excluding_points([(0.0, 0.0)])
    rep = check_qns_truncations(u, 1.0, [0.0, 1.0, 10.0], S)
    assert rep.ok
    assert {r.M for r in rep.records} == {0.0, 1.0, 10.0}


def test_truncation_check_catches_a_superharmonic_signed_function():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    u = ScalarField(d, -sample_to_grid(FunctionSpec("norm-power", (2.0,)), d).values)
    S = SampleSpec(((( 0.0, 0.0), 0.5),))
    assert not check_qns_truncations(u, 1.0, [0.0, 1.0], S).ok


def test_estimate_min_K():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    S = SampleSpec.subgrid(d, 0.5, n_radii=3, stride=4)
    assert estimate_min_K(grid("norm-power", [2.0], d), S) <= 1.0 + 1e-2
    with pytest.raises(ValueError):
        estimate_min_K(grid("coordinate", [0], d), S)
    spike = np.zeros(d.shape)
    spike[d.nearest_index((0, 0))] = 1.0
    K = estimate_min_K(ScalarField(d, spike), S)
    assert K > 10


def test_max_of_members_estimates_below_max_of_estimates():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    S = SampleSpec.random(d, 60, 2 / 32, 0.5, seed=2)
    u = grid("norm-power", [1.5, 0.2, -0.1], d)
    v = grid("abs-holomorphic-poly", [0.3, 0.0, 1.0, 0.5], d)
    w = u.maximum(v)
    assert estimate_min_K(w, S) <= max(estimate_min_K(u, S), estimate_min_K(v, S)) * (1 + 1e-12)


def test_positive_part_does_not_raise_K():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    S = SampleSpec.random(d, 60, 2 / 32, 0.5, seed=5)
    u = grid("norm-power", [2.0, 0.3, 0.3], d)
    assert estimate_min_K(u.positive_part(), S) <= estimate_min_K(u, S) + 1e-12


def test_report_serialisation():
    d = Domain.box((-1, -1), (1, 1), 1 / 32)
    S = SampleSpec(((( 0.0, 0.0), 0.5), ((0.25, 0.25), 0.25)))
    rep = check_qns_ns(grid("norm-power", [2.0], d), 1.0, S)
    lines = rep.to_csv().strip().splitlines()
    assert lines[0].split(",") == ["x1", "x2", "r", "lhs", "rhs", "ratio", "pass", "M", "neg_inf_touched"]
    assert len(lines) == 3
    assert len(rep.to_jsonl().strip().splitlines()) == 2
    s = rep.summary()
    assert s["n_samples"] == 2 and s["n_failures"] == 0


def test_check_mean_inequality_uses_separate_left_side():
    u = const_field(UNIT, 1.0)
    v = const_field(UNIT, 2.0)
    S = SampleSpec(((( 0.5, 0.5), 0.2),))
    assert check_mean_inequality(u, v, 1.0, S).ok
    assert not check_mean_inequality(v, u, 1.0, S).ok


def test_empty_samples_and_bad_K_raise():
    u = const_field(UNIT, 1.0)
    with pytest.raises(ValueError):
        check_qns_ns(u, 1.0, SampleSpec(()))
    with pytest.raises(ValueError):
        check_qns_ns(u, 0.5, SampleSpec(((( 0.5, 0.5), 0.2),)))


def test_domar_class_constant():
    assert domar_class_constant(1.0, 2) == pytest.approx(math.pi)
    assert domar_class_constant(2.0, 3) == pytest.approx(4 * math.pi / 3 * 16)
    with pytest.raises(ValueError):
        domar_class_constant(0.5, 2)


def test_sample_specs_are_admissible_and_seeded():
    d = Domain.unit_square(1 / 64)
    a = SampleSpec.random(d, 30, 0.05, 0.2, seed=9)
    assert a == SampleSpec.random(d, 30, 0.05, 0.2, seed=9)
    assert a.validate(d) is not None
    for x, r in SampleSpec.subgrid(d, 0.2, stride=8):
        assert d.contains_ball(x, r)
    with pytest.raises(ValueError):
        SampleSpec(((( 0.05, 0.5), 0.2),)).validate(d)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 0.3))
def test_average_is_affine_in_the_field(a, b, r):
    u = grid("harmonic-exp", [], UNIT)
    v = ScalarField(UNIT, a * u.values + b)
    x = (0.5, 0.5)
    assert ball_average(v, x, r) == pytest.approx(a * ball_average(u, x, r) + b, abs=1e-10)


@given(st.integers(0, 2 ** 31), st.floats(0.05, 0.3))
def test_average_is_monotone(seed, r):
    rng = np.random.default_rng(seed)
    u = ScalarField(UNIT, rng.normal(size=UNIT.shape))
    v = ScalarField(UNIT, u.values + rng.uniform(0, 1, size=UNIT.shape))
    assert ball_average(u, (0.5, 0.5), r) <= ball_average(v, (0.5, 0.5), r)
    assert ball_integral(v, (0.5, 0.5), r) - ball_integral(u, (0.5, 0.5), r) >= 0
