import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qnsub.pairs import (MAP_CATALOG, MonotoneMap, TestFunctionPair, build_pair_corollary, check_delta2,
                         check_remark_b, compose, inverse_eval, map_from_json, pair_from_theta, tail_integral,
                         validate_pair)

from conftest import power_map

MAP_SPECS = [
    {"kind": "identity"},
    {"kind": "power", "params": [2.5]},
    {"kind": "power", "params": [0.5]},
    {"kind": "linear", "params": [3.0]},
    {"kind": "exp"},
    {"kind": "exp-power", "params": [1.5]},
    {"kind": "log1p"},
    {"kind": "log-plus-power", "params": [2.0]},
    {"kind": "compose", "args": [{"kind": "power", "params": [2]}, {"kind": "log1p"}]},
]


def test_catalog_covers_every_listed_kind():
    assert {s["kind"] for s in MAP_SPECS} == set(MAP_CATALOG)


@pytest.mark.parametrize("spec", MAP_SPECS, ids=lambda s: s["kind"])
@pytest.mark.parametrize("y", [1.5, 7.0, 120.0, 650.0])
def test_closed_form_and_numeric_inverses_agree(spec, y):
    f = map_from_json(spec)
    numeric = MonotoneMap(f.func, f.name)
    x_closed, x_num = f.inv(y), numeric.inv(y)
    assert abs(f(x_num) - y) <= 1e-12 * max(1.0, y)
    assert x_closed == pytest.approx(x_num, rel=1e-9)


def test_inverse_eval_edges():
    f = map_from_json({"kind": "exp"})
    with pytest.raises(ValueError, match="below the range"):
        inverse_eval(f, 0.5)
    assert inverse_eval(f, 1.0) == 0.0
    assert inverse_eval(f, math.inf) == math.inf
    step = MonotoneMap(lambda t: (t >= 1.0) * 1.0 + t, "jump")
    with pytest.raises(ValueError, match="not attained"):
        inverse_eval(step, 1.5)
    capped = MonotoneMap(lambda t: 1.0 - 1.0 / (1.0 + t), "bounded", cap=1e6)
    with pytest.raises(ValueError, match="bracket"):
        inverse_eval(capped, 2.0)


def test_map_spec_errors():
    with pytest.raises(ValueError):
        map_from_json({"kind": "power", "params": [-1]})
    with pytest.raises(ValueError):
        map_from_json({"kind": "nope"})
    with pytest.raises(ValueError):
        map_from_json({"kind": "identity", "extra": 1})


@given(st.floats(1.0, 1e6))
def test_composition_inverse_round_trip(y):
    f = compose(power_map(3.0), map_from_json({"kind": "exp"}), power_map(0.5))
    assert f(f.inv(y)) == pytest.approx(y, rel=1e-9)


def test_tail_integral_closed_forms():
    r = tail_integral(power_map(2.0), 1, 2, 2.0)
    assert r.convergent and abs(r.value - 1.0) < 1e-6
    r = tail_integral(power_map(2.0), 0, 2, 1.0)
    assert r.convergent and abs(r.value - 1.0) < 1e-6
    # n = 3: phi(s) = s^3 gives the integrand s^(-3/2), integral from 1 equal to 2
    r = tail_integral(power_map(3.0), 0, 3, 1.0)
    assert r.convergent and abs(r.value - 2.0) < 1e-6
    assert not tail_integral(power_map(1.0), 0, 2, 1.0).convergent
    # n = 3 halves the exponent: s^2 gives s^(-1), divergent
    assert not tail_integral(power_map(2.0), 0, 3, 1.0).convergent


def test_tail_integral_preconditions():
    with pytest.raises(ValueError):
        tail_integral(power_map(2.0), 1, 2, 1.5)
    with pytest.raises(ValueError):
        tail_integral(power_map(2.0), 0, 1, 1.0)
    zero = MonotoneMap(lambda t: 0.0 * t, "zero")
    assert not tail_integral(zero, 0, 2, 1.0).convergent


@given(st.floats(1.05, 4.0), st.floats(1.0, 20.0))
def test_tail_integral_matches_power_law(q, lower):
    # int_lower^inf s^-q ds = lower^(1-q) / (q - 1)
    r = tail_integral(power_map(q), 0, 2, lower)
    exact = lower ** (1 - q) / (q - 1)
    assert r.convergent
    assert r.value == pytest.approx(exact, rel=1e-6)


def test_tail_integral_is_decreasing_in_lower_limit():
    vals = [tail_integral(power_map(2.0), 1, 2, a).value for a in (2.0, 3.0, 5.0, 20.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_pair_invariants():
    psi = map_from_json({"kind": "log-plus-power", "params": [2]})
    with pytest.raises(ValueError):
        TestFunctionPair(power_map(2), psi, 2, 2, 1.0, 2)
    with pytest.raises(ValueError):
        TestFunctionPair(power_map(2), psi, 1, 2, 0.5, 2)
    with pytest.raises(ValueError):
        TestFunctionPair(power_map(2), psi, 1, 2, 1.0, 1)
    with pytest.raises(ValueError):
        TestFunctionPair(power_map(2), psi, 0.5, 2, 1.0, 2)


def test_example_pair_passes_all_conditions(example_pair):
    rep = validate_pair(example_pair)
    assert rep.passed, rep.to_json()
    assert example_pair.report is rep
    assert rep.iii.details["sup_ratio"] == pytest.approx(math.e, rel=1e-9)
    assert example_pair.composite(3.0) == pytest.approx(math.exp(3.0), rel=1e-12)


def test_each_condition_can_fail():
    psi = map_from_json({"kind": "log-plus-power", "params": [2]})
    # (ii): 2K <= e^s0 fails for K = 10, s0 = 1
    rep = validate_pair(TestFunctionPair(power_map(2), psi, 1, 2, 10.0, 2))
    assert rep.failed == ["ii"]
    assert rep.ii.details["first_violation"] == 2.0
    # (iii): c(s) = exp(s^2) has c(s + 1) / c(s) = e^(2s + 1)
    rep = validate_pair(TestFunctionPair(map_from_json({"kind": "exp-power", "params": [2]}),
                                         map_from_json({"kind": "identity"}), 1, 2, 1.0, 2))
    assert "iii" in rep.failed and rep.iii.details["trend"] == "growing"
    # (iv): phi(s) = s with n = 2
    rep = validate_pair(TestFunctionPair(power_map(1), map_from_json({"kind": "log-plus-power", "params": [1]}),
                                         1, 2, 1.0, 2))
    assert rep.failed == ["iv"]
    # (i): a psi that is flat at height 3 on [3, 4]
    flat = MonotoneMap(lambda t: np.minimum(t, 3.0) + np.maximum(t - 4.0, 0.0), "flat")
    rep = validate_pair(TestFunctionPair(power_map(2), flat, 0, 1, 1.0, 2))
    assert "i" in rep.failed


def test_corollary_s0_selection():
    assert build_pair_corollary(power_map(2), 2.0, 1.0, 2).s0 == 2
    assert build_pair_corollary(power_map(2), 1.0, 4.0, 2).s0 == 3


@given(st.floats(0.5, 8.0), st.floats(1.0, 10.0))
def test_corollary_pairs_satisfy_the_doubling_margin(p, K):
    pair = build_pair_corollary(power_map(2), p, K, 2)
    assert 2 * K <= math.exp(pair.s0 / p)
    assert pair.report.passed
    for s in (pair.s1, pair.s1 + 7.5):
        assert pair.composite(s) == pytest.approx(math.exp(s / p), rel=1e-9)


def test_corollary_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_pair_corollary(power_map(2), 0.0, 1.0, 2)
    with pytest.raises(ValueError):
        build_pair_corollary(power_map(2), 1.0, 0.5, 2)
    with pytest.raises(ValueError):
        build_pair_corollary(power_map(1), 1.0, 1.0, 2)


def test_delta2_and_remark_b():
    sq = power_map(2.0)
    v = check_delta2(sq)
    assert v.passed and abs(v.details["constant"] - math.sqrt(2)) < 1e-9
    assert check_remark_b(sq, 1.0, 2, 3).passed
    assert not check_remark_b(sq, 10.0, 2, 3).passed
    assert not check_delta2(map_from_json({"kind": "log1p"})).passed


def test_theta_construction_gives_admissible_pair():
    theta = power_map(2.0)
    pair = pair_from_theta(power_map(2.0), theta, 1.0, 2, 2, 3)
    rep = validate_pair(pair)
    assert rep.passed, rep.to_json()
    # psi^-1 o phi = theta^-1 o exp
    assert pair.composite(4.0) == pytest.approx(math.exp(2.0), rel=1e-12)
