import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncergodic.algebra import TraceAlgebra, haar_unitary, random_element, random_positive, trace
from ncergodic.channels import certify_markov, identity_channel, permutation_automorphism, unitary_conjugation
from ncergodic.errors import DomainError
from ncergodic.harness.scenarios import builtin_scenario
from ncergodic.orlicz import OrliczFunction
from ncergodic.spherical import (
    DirectSum,
    bau_certificate,
    cesaro_average,
    cesaro_operators,
    check_diagonal_identity,
    check_relation_even,
    check_s1sq_identity,
    converge_even_spheres,
    direct_sum_contraction_check,
    direct_sum_T,
    even_fixed_expectation,
    involution_U,
    partial_spherical,
    spherical_avg_bruteforce,
    spherical_avg_recursive,
    spherical_components,
    spherical_operators,
)
from ncergodic.words import Action, Alphabet, free_group_chain, uniform_semigroup_chain

seeds = st.integers(0, 2**32 - 1)


def two_point():
    alg = TraceAlgebra.diagonal(2)
    act = Action(Alphabet.group(2), {1: permutation_automorphism(alg, [1, 0]), 2: identity_channel(alg)})
    return alg, act, free_group_chain(2)


def unitary_action(seed, m=2, n=3):
    rng = np.random.default_rng(seed)
    alg = TraceAlgebra.matrix(n)
    act = Action(Alphabet.group(m), {g: unitary_conjugation(alg, [haar_unitary(n, rng)]) for g in range(1, m + 1)})
    return alg, act, free_group_chain(m), rng


def uniform_sphere_oracle(act, m, n, x):
    """Plain average over reduced words, enumerated independently of the package."""
    letters = [a for a in range(-m, m + 1) if a]
    total, count = np.zeros(x.algebra.dim, dtype=complex), 0
    for w in itertools.product(letters, repeat=n):
        if any(b == -a for a, b in zip(w, w[1:])):
            continue
        v = x.vec()
        for a in w:
            v = act[a].matrix @ v
        total, count = total + v, count + 1
    return total / count


# Hand enumeration: S_n diag(1, 0) for the swap/identity pair.
@pytest.mark.parametrize(
    "n, expected", [(0, (1, 0)), (1, (0.5, 0.5)), (2, (1 / 3, 2 / 3)), (3, (0.5, 0.5)), (4, (5 / 9, 4 / 9))]
)
def test_two_point_spheres(n, expected):
    alg, act, chain = two_point()
    x = alg.diag([1.0, 0.0])
    for s in (spherical_avg_recursive(act, chain, n, x), spherical_avg_bruteforce(act, chain, n, x)):
        assert [b[0, 0].real for b in s.blocks] == pytest.approx(expected, abs=1e-15)


@given(seeds, st.sampled_from([2, 3]), st.integers(1, 4))
def test_recursive_matches_independent_enumeration(seed, m, n):
    alg, act, chain, rng = unitary_action(seed, m, 2)
    x = random_element(alg, rng)
    fast = spherical_avg_recursive(act, chain, n, x)
    assert np.abs(fast.vec() - uniform_sphere_oracle(act, m, n, x)).max() <= 1e-10


@given(seeds, st.integers(1, 5))
def test_components_sum_to_average(seed, n):
    alg, act, chain, rng = unitary_action(seed)
    x = random_element(alg, rng)
    comps = spherical_components(act, chain, n, x)
    total = sum((c.vec() for c in comps.values()), np.zeros(alg.dim))
    assert np.abs(total - spherical_avg_recursive(act, chain, n, x).vec()).max() <= 1e-12
    for a, c in comps.items():
        assert np.abs(c.vec() - partial_spherical(act, chain, n, a, x).vec()).max() <= 1e-12


def test_zeroth_components_follow_convention():
    alg, act, chain = two_point()
    x = alg.diag([1.0, 3.0])
    comps = spherical_components(act, chain, 0, x)
    assert all((c - x * 0.25).norm() == 0 for c in comps.values())


def test_semigroup_spheres():
    alg = TraceAlgebra.diagonal(3)
    act = Action(Alphabet.semigroup(2), {
        1: permutation_automorphism(alg, [1, 2, 0]), 2: permutation_automorphism(alg, [0, 2, 1])
    })
    chain = uniform_semigroup_chain(2)
    x = alg.diag([1.0, 0.0, 0.0])
    for n in range(4):
        a = spherical_avg_recursive(act, chain, n, x)
        b = spherical_avg_bruteforce(act, chain, n, x)
        assert (a - b).norm() <= 1e-12


@given(seeds)
def test_direct_sum_contraction(seed):
    alg, act, chain, rng = unitary_action(seed)
    space = DirectSum(alg, chain)
    samples = [space.element([random_positive(alg, rng) for _ in space.letters]) for _ in range(5)]
    samples += [space.element([random_element(alg, rng) for _ in space.letters]) for _ in range(5)]
    rep = direct_sum_contraction_check(act, chain, samples)
    assert rep.holds and rep.samples == 10


def test_direct_sum_T_is_markov():
    _, act, chain, _ = unitary_action(1)
    assert certify_markov(direct_sum_T(act, chain)).markov


def test_involution_properties():
    alg, act, chain = two_point()
    U = involution_U(act, chain).matrix
    assert np.array_equal(U @ U, np.eye(U.shape[0]))
    with pytest.raises(DomainError):
        involution_U(Action(Alphabet.semigroup(1), {1: identity_channel(alg)}), uniform_semigroup_chain(1))


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("m", [2, 3])
def test_even_radius_relations(seed, m):
    _, act, chain, _ = unitary_action(seed, m)
    rep = check_relation_even(act, chain, 5)
    assert rep.first.max_residual <= 1e-9
    assert rep.second_minus.max_residual <= 1e-9
    assert rep.vanishing_sign == "-"


def test_relations_need_two_generators():
    _, act, chain, _ = unitary_action(0, 1)
    with pytest.raises(DomainError):
        check_relation_even(act, chain, 2)


@pytest.mark.parametrize("m", [2, 3])
def test_sphere_recursions(m):
    _, act, chain, _ = unitary_action(7, m)
    quad, step = check_s1sq_identity(act, chain, 4)
    assert quad.max_residual <= 1e-9 and step.max_residual <= 1e-9
    assert sorted(step.residuals) == list(range(2, 9))


def test_diagonal_identity():
    alg, act, chain, rng = unitary_action(3)
    rep = check_diagonal_identity(act, chain, random_element(alg, rng), 6)
    assert rep.holds and rep.max_residual <= 1e-10


def test_operators_are_markov_and_consistent():
    alg, act, chain, rng = unitary_action(5)
    S = spherical_operators(act, chain, 4)
    A = cesaro_operators(act, chain, 4)
    x = random_element(alg, rng)
    assert (S[3](x) - spherical_avg_recursive(act, chain, 3, x)).norm() <= 1e-12
    avg, _ = cesaro_average(act, chain, 4, x)
    assert (A[3](x) - avg).norm() <= 1e-12
    assert all(certify_markov(T).markov for T in S + A)


def test_two_point_limit_is_trace():
    alg, act, chain = two_point()
    x = alg.diag([1.0, 0.0])
    E = even_fixed_expectation(act)
    assert [b[0, 0].real for b in E(x).blocks] == pytest.approx([0.5, 0.5])
    rep = converge_even_spheres(act, chain, x, 20, [OrliczFunction.llogl()])
    errs = rep.column("err_l2")
    assert errs[0] == pytest.approx(1 / 6)  # S_2 = diag(1/3, 2/3)
    assert np.all(np.diff(errs) <= 1e-15)
    assert rep.eventually_below() and rep.first_below() is not None


@pytest.mark.parametrize("name, first", [("permutation8", 12), ("free_rotation3", 11)])
def test_builtin_convergence_radius(name, first):
    sc = builtin_scenario(name)
    rep = converge_even_spheres(sc.action, sc.chain, sc.x, 14)
    assert rep.first_below("err_l2", 1e-6) == first


def test_convergence_csv_format():
    alg, act, chain = two_point()
    rep = converge_even_spheres(act, chain, alg.diag([1.0, 0.0]), 3, [OrliczFunction.power(2)])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n,err_inf,err_l2,err_power:2"
    assert len(lines) == 4
    assert "rows: 3" in rep.summary()


def test_bau_certificate_respects_budget():
    alg = TraceAlgebra.diagonal(4)
    limit = alg.zeros()
    seq = [alg.diag([1.0 / n, 0, 0, 1e-3 / n]) for n in range(1, 6)]
    cert = bau_certificate(alg, seq, limit, 0.25)
    assert cert.defect <= 0.25
    assert cert.residual == pytest.approx(1e-3)
    assert trace(alg, alg.identity() - cert.projection).real == pytest.approx(cert.defect)
    assert bau_certificate(alg, seq, limit, 0.25, target=10.0).defect == 0.0
