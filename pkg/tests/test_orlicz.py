import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncergodic.algebra import TraceAlgebra, lp_norm, random_element, random_positive
from ncergodic.channels import random_markov_channel
from ncergodic.errors import DomainError, HypothesisNotMet
from ncergodic.orlicz import (
    OrliczFunction,
    StepFunction,
    bounded_truncation,
    check_hlp,
    check_modular_bound,
    delta2_constant,
    k_decomposition,
    k_functional,
    luxemburg_norm,
    orlicz_norm,
    orlicz_splitting,
    p_convexity_check,
    s_numbers,
    step_orlicz_norm,
    trace_of,
)

from conftest import ALGEBRAS

seeds = st.integers(0, 2**32 - 1)

# Independent root-finding oracle (scipy brentq on (1/l) log(1 + 2/l) = 1).
LLOGL_NORM_DIAG_2_0 = 1.0600903198932103


def test_llogl_norm_of_rank_one_element():
    alg = TraceAlgebra.matrix(2)
    x = alg.element([np.diag([2.0, 0.0])])
    assert orlicz_norm(alg, x, OrliczFunction.llogl()) == pytest.approx(LLOGL_NORM_DIAG_2_0, abs=1e-10)


def test_exp_norm_closed_form():
    # (1/2)(e^(1/l) - 1) = 1 gives l = 1 / log 3
    alg = TraceAlgebra.diagonal(2)
    x = alg.diag([1.0, 0.0])
    assert orlicz_norm(alg, x, OrliczFunction.exp_minus_one()) == pytest.approx(1 / np.log(3), abs=1e-10)


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, 4])
@given(seed=seeds, name=st.sampled_from(sorted(ALGEBRAS)))
def test_power_orlicz_norm_is_lp_norm(p, seed, name):
    alg = ALGEBRAS[name]
    x = random_element(alg, np.random.default_rng(seed))
    assert orlicz_norm(alg, x, OrliczFunction.power(p)) == pytest.approx(lp_norm(alg, x, p), rel=1e-9)


@given(seeds, st.floats(0.01, 100.0), st.sampled_from(["llogl", "exp", "lloglpow:2", "power:3"]))
def test_orlicz_norm_is_homogeneous(seed, c, name):
    alg = ALGEBRAS["M2+C"]
    phi = OrliczFunction.from_name(name)
    x = random_element(alg, np.random.default_rng(seed))
    assert orlicz_norm(alg, x * c, phi) == pytest.approx(c * orlicz_norm(alg, x, phi), rel=1e-9)


@given(seeds, st.sampled_from(["llogl", "exp", "lloglpow:0.5"]))
def test_orlicz_triangle_inequality(seed, name):
    alg = ALGEBRAS["M3"]
    phi = OrliczFunction.from_name(name)
    rng = np.random.default_rng(seed)
    x, y = random_element(alg, rng), random_element(alg, rng)
    assert orlicz_norm(alg, x + y, phi) <= orlicz_norm(alg, x, phi) + orlicz_norm(alg, y, phi) + 1e-9


@given(seeds, st.floats(0.05, 1.0), st.sampled_from(["llogl", "power:2", "lloglpow:2", "exp"]))
def test_modular_bounded_by_norm_on_unit_ball(seed, r, name):
    alg = ALGEBRAS["M2+C"]
    phi = OrliczFunction.from_name(name)
    x = random_positive(alg, np.random.default_rng(seed))
    x = x * (r / orlicz_norm(alg, x, phi))
    rep = check_modular_bound(alg, x, phi)
    assert rep.holds
    assert rep.modular == pytest.approx(trace_of(alg, x, phi))


def test_modular_bound_requires_unit_ball():
    alg = TraceAlgebra.diagonal(2)
    with pytest.raises(HypothesisNotMet):
        check_modular_bound(alg, alg.diag([10.0, 10.0]), OrliczFunction.power(2))


@pytest.mark.parametrize(
    "name", ["power:1", "power:2.5", "llogl", "lloglpow:3", "exp"]
)
def test_from_name_round_trip(name):
    assert OrliczFunction.from_name(name).name == name


@pytest.mark.parametrize("name", ["power", "power:0.5", "llogl:2", "quadratic", "lloglpow:x"])
def test_from_name_rejects(name):
    with pytest.raises(DomainError):
        OrliczFunction.from_name(name)


@pytest.mark.parametrize(
    "func",
    [lambda t: np.sqrt(t), lambda t: t + 1, lambda t: np.minimum(t, 1.0)],
    ids=["concave", "nonzero-at-0", "bounded"],
)
def test_invalid_orlicz_functions(func):
    with pytest.raises(DomainError):
        OrliczFunction("bad", func)


def test_step_function_and_s_numbers():
    alg = TraceAlgebra.diagonal(2)
    f = s_numbers(alg, alg.diag([1.0, -3.0]))
    assert f.breakpoints.tolist() == [0.0, 0.5, 1.0]
    assert f.values.tolist() == [3.0, 1.0]
    assert f(0.5) == 1.0 and f(0.49) == 3.0 and f(2.0) == 0.0
    assert f.integral(0.75) == pytest.approx(1.75)
    assert k_functional(alg, alg.diag([3.0, 1.0]), 0.75) == pytest.approx(1.75)


def test_step_function_validation():
    with pytest.raises(DomainError):
        StepFunction([0, 1, 2], [1.0, 2.0])
    with pytest.raises(DomainError):
        StepFunction([1, 2], [1.0])
    merged = StepFunction.from_masses([1.0, 1.0, 2.0], [0.25, 0.25, 0.5])
    assert merged.breakpoints.tolist() == [0.0, 0.5, 1.0]


def test_step_orlicz_norm_matches_algebra_norm():
    alg = TraceAlgebra.diagonal(4)
    x = alg.diag([4.0, 1.0, 0.5, 0.0])
    phi = OrliczFunction.llogl()
    assert step_orlicz_norm(s_numbers(alg, x), phi) == pytest.approx(orlicz_norm(alg, x, phi), rel=1e-12)
    assert luxemburg_norm([0.0], [1.0], phi) == 0.0


@given(seeds, st.floats(0.05, 0.95))
def test_k_decomposition_attains_k_functional(seed, t):
    alg = ALGEBRAS["M2+C"]
    x = random_element(alg, np.random.default_rng(seed))
    y, z, value = k_decomposition(alg, x, t)
    assert (y + z - x).norm() < 1e-10 * (1 + x.norm())
    assert value == pytest.approx(k_functional(alg, x, t), rel=1e-9)


@given(seeds, st.sampled_from(["llogl", "power:2", "lloglpow:2"]))
def test_hlp_transfer_for_markov_images(seed, name):
    rng = np.random.default_rng(seed)
    alg = ALGEBRAS["M3"]
    T = random_markov_channel(alg, rng)
    x = random_element(alg, rng)
    assert check_hlp(s_numbers(alg, T(x)), s_numbers(alg, x), OrliczFunction.from_name(name)).holds


def test_hlp_rejects_non_majorized_pair():
    f = StepFunction([0, 1], [2.0])
    g = StepFunction([0, 1], [1.0])
    with pytest.raises(HypothesisNotMet):
        check_hlp(f, g, OrliczFunction.power(2))


@pytest.mark.parametrize(
    "name, p, convex",
    [("power:3", 3, True), ("power:3", 2, True), ("power:2", 2, True), ("power:1", 1.5, False), ("power:2", 3, False)],
)
def test_p_convexity_verdicts(name, p, convex):
    assert OrliczFunction.from_name(name).is_p_convex(p) is convex


def test_llogl_p_convexity_breaks_at_large_arguments():
    # (t log(1 + t))^(9/10) turns concave far out; the window below 1e3 is convex.
    phi = OrliczFunction.llogl()
    rep = p_convexity_check(phi, 10 / 9)
    assert not rep.convex
    assert rep.witness > 1e3
    assert phi.is_p_convex(10 / 9, np.geomspace(1e-6, 1e3, 2000))


@pytest.mark.parametrize("name, constant", [("power:2", 4.0), ("power:3", 8.0), ("llogl", 4.0)])
def test_delta2_constants(name, constant):
    rep = delta2_constant(OrliczFunction.from_name(name))
    assert rep.bounded
    assert rep.constant == pytest.approx(constant, rel=1e-4)


def test_exp_fails_delta2():
    assert not OrliczFunction.exp_minus_one().delta2.bounded


def test_splitting_quadratic():
    alg = TraceAlgebra.diagonal(3)
    x = alg.diag([0.3, 2.0, 5.0])
    res = orlicz_splitting(alg, x, 1.0, OrliczFunction.power(2), 2)
    assert res.constant == pytest.approx(1.0)
    assert res.margin >= -1e-10
    assert [b[0, 0].real for b in res.small_part.blocks] == [0.3, 0.0, 0.0]


def test_splitting_needs_p_convexity():
    alg = TraceAlgebra.diagonal(2)
    with pytest.raises(HypothesisNotMet):
        orlicz_splitting(alg, alg.diag([1.0, 2.0]), 1.0, OrliczFunction.power(1), 2)


def test_bounded_truncation():
    alg = TraceAlgebra.diagonal(3)
    x = alg.diag([0.0, 2.0, 5.0])
    assert [b[0, 0].real for b in bounded_truncation(alg, x, 3).blocks] == [0.0, 2.0, 0.0]
