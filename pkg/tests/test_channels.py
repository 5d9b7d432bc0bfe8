import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncergodic.algebra import (
    Subalgebra,
    TraceAlgebra,
    conditional_expectation,
    haar_unitary,
    inner,
    random_element,
    random_unitary,
)
from ncergodic.channels import (
    ChannelOperator,
    Factorization,
    certify_markov,
    choi_matrix,
    convex_combination,
    dunford_schwartz_check,
    factorized_channel,
    identity_channel,
    kadison_check,
    permutation_automorphism,
    random_markov_channel,
    rota_sequence,
    trace_replacement,
    transpose_map,
    unitary_conjugation,
)
from ncergodic.errors import DomainError, HypothesisNotMet, InvariantError, StructuralError
from ncergodic.harness.scenarios import nested_expectation_model
from ncergodic.orlicz import OrliczFunction

from conftest import ALGEBRAS

seeds = st.integers(0, 2**32 - 1)


def test_transpose_is_positive_but_not_cp():
    T = transpose_map(TraceAlgebra.matrix(2))
    assert T.choi_min_eigenvalue == pytest.approx(-1.0)
    assert not T.is_completely_positive
    assert T.is_positive
    assert T.is_markov
    rep = certify_markov(T)
    assert rep.markov and not rep.all_flags


def test_transpose_is_not_automorphism():
    assert not transpose_map(TraceAlgebra.matrix(3)).is_automorphism


@pytest.mark.parametrize("name", sorted(ALGEBRAS))
def test_standard_maps_are_markov(name):
    alg = ALGEBRAS[name]
    for T in (identity_channel(alg), trace_replacement(alg), random_markov_channel(alg, np.random.default_rng(1))):
        assert certify_markov(T).all_flags, T.label


def test_non_unital_map_flagged():
    alg = TraceAlgebra.diagonal(2)
    T = identity_channel(alg) * 0.5
    rep = certify_markov(T)
    assert not rep.unital and not rep.trace_preserving and rep.positive


@given(seeds, st.sampled_from(sorted(ALGEBRAS)))
def test_adjoint_pairing(seed, name):
    alg = ALGEBRAS[name]
    rng = np.random.default_rng(seed)
    T = ChannelOperator(alg, alg, rng.normal(size=(alg.dim, alg.dim)))
    x, y = random_element(alg, rng), random_element(alg, rng)
    assert inner(alg, T(x), y) == pytest.approx(inner(alg, x, T.adjoint()(y)))
    assert T.adjoint().adjoint() is T


@given(seeds)
def test_unitary_conjugation_is_automorphism(seed):
    rng = np.random.default_rng(seed)
    alg = ALGEBRAS["M2+C"]
    u = random_unitary(alg, rng)
    T = unitary_conjugation(alg, u)
    x = random_element(alg, rng)
    assert (T(x) - u @ x @ u.H).norm() < 1e-12 * (1 + x.norm())
    assert T.is_automorphism
    assert (T.adjoint() @ T).distance(identity_channel(alg)) < 1e-12


def test_permutation_automorphism_moves_points():
    alg = TraceAlgebra.diagonal(3)
    T = permutation_automorphism(alg, [1, 2, 0])
    y = T(alg.diag([1.0, 2.0, 3.0]))
    assert [b[0, 0].real for b in y.blocks] == [3.0, 1.0, 2.0]
    with pytest.raises(DomainError):
        permutation_automorphism(TraceAlgebra.diagonal(2, [0.3, 0.7]), [1, 0])


@pytest.mark.parametrize(
    "make",
    [
        lambda alg: unitary_conjugation(alg, [np.array([[1.0, 1.0], [0, 1.0]])]),
        lambda alg: convex_combination([identity_channel(alg)], [0.5]),
        lambda alg: ChannelOperator(alg, alg, np.eye(3)),
    ],
    ids=["non-unitary", "bad-weights", "bad-shape"],
)
def test_constructor_rejections(make):
    with pytest.raises((DomainError, StructuralError)):
        make(TraceAlgebra.matrix(2))


def test_composition_order():
    alg = TraceAlgebra.diagonal(3)
    a = permutation_automorphism(alg, [1, 0, 2])
    b = permutation_automorphism(alg, [0, 2, 1])
    x = alg.diag([1.0, 2.0, 3.0])
    assert ((a @ b)(x) - a(b(x))).norm() == 0.0
    with pytest.raises(StructuralError):
        a @ identity_channel(TraceAlgebra.matrix(2))


def test_choi_blocks_of_identity():
    blocks = choi_matrix(identity_channel(TraceAlgebra(((2, 0.25), (1, 0.5)))))
    assert len(blocks) == 4
    assert min(b[3] for b in blocks) >= -1e-12


@given(seeds)
def test_dunford_schwartz_for_random_markov(seed):
    rng = np.random.default_rng(seed)
    alg = ALGEBRAS["M3"]
    T = random_markov_channel(alg, rng)
    rep = dunford_schwartz_check(T, [random_element(alg, rng) for _ in range(5)], [OrliczFunction.llogl()])
    assert rep.holds and rep.samples == 5


def test_dunford_schwartz_detects_expansion():
    alg = TraceAlgebra.diagonal(2)
    rep = dunford_schwartz_check(identity_channel(alg) * 2.0, [alg.diag([1.0, 0.5])])
    assert not rep.holds


@given(seeds)
def test_kadison_schwarz(seed):
    rng = np.random.default_rng(seed)
    alg = ALGEBRAS["M2+C"]
    assert kadison_check(random_markov_channel(alg, rng), [random_element(alg, rng) for _ in range(4)]).holds


def test_kadison_requires_cp():
    with pytest.raises(HypothesisNotMet):
        kadison_check(transpose_map(TraceAlgebra.matrix(2)), [])


def test_factorization_gives_mixture_of_conjugations():
    rng = np.random.default_rng(3)
    alg = TraceAlgebra.matrix(2)
    anc = TraceAlgebra.diagonal(2)
    u1, u2 = haar_unitary(2, rng), haar_unitary(2, rng)
    f = Factorization(alg, anc, alg.tensor(anc).element([u1, u2]))
    T = factorized_channel(f)
    expected = convex_combination([unitary_conjugation(alg, [u1]), unitary_conjugation(alg, [u2])], [0.5, 0.5])
    assert T.distance(expected) < 1e-12
    assert f.enlarged.dims == (2, 2)


def test_factorization_needs_normalized_ancilla():
    alg = TraceAlgebra.matrix(2)
    anc = TraceAlgebra(((1, 1.0), (1, 1.0)))
    with pytest.raises(DomainError):
        Factorization(alg, anc, alg.tensor(anc).identity())


@pytest.mark.parametrize("N", [1, 4, 8])
def test_rota_for_conditional_expectation(N):
    alg = TraceAlgebra.matrix(3)
    units = [alg.element([np.diag(e)]) for e in np.eye(3)]
    E = conditional_expectation(Subalgebra.from_spanning(alg, units))
    x = random_element(alg, np.random.default_rng(N))
    res = rota_sequence(E, x, N)
    for n in range(1, N + 1):
        assert (res.mirrored[n] - E(x)).norm() <= 1e-12
        assert (res.forward[n] - E(x)).norm() <= 1e-12
    assert (res.mirrored[0] - x).norm() == 0


@given(seeds)
def test_rota_for_automorphism(seed):
    rng = np.random.default_rng(seed)
    alg = ALGEBRAS["M2+C"]
    T = unitary_conjugation(alg, random_unitary(alg, rng))
    x = random_element(alg, rng)
    res = rota_sequence(T, x, 8)
    assert max((m - x).norm() for m in res.mirrored) <= 1e-12 * (1 + x.norm())
    assert max(res.increments) <= 1e-12 * (1 + x.norm())


def test_rota_nested_model():
    model = nested_expectation_model(3, 8)
    x = random_element(model.T.domain, np.random.default_rng(0))
    res = rota_sequence(model.T, x, 8, model.E, model.nested)
    assert max(res.expectation_residuals) <= 1e-9
    assert certify_markov(model.T).markov


def test_rota_detects_wrong_nesting():
    model = nested_expectation_model(3, 4)
    x = random_element(model.T.domain, np.random.default_rng(0))
    wrong = [identity_channel(model.T.domain)] * 4
    with pytest.raises(InvariantError):
        rota_sequence(model.T, x, 4, model.E, wrong)
