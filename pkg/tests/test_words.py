import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncergodic.algebra import TraceAlgebra
from ncergodic.channels import identity_channel, permutation_automorphism, transpose_map, unitary_conjugation
from ncergodic.errors import DomainError, ResourceError, StructuralError
from ncergodic.words import (
    Action,
    Alphabet,
    SphereChain,
    free_group_chain,
    is_strictly_irreducible,
    markov_measure,
    sphere,
    sphere_size,
    uniform_semigroup_chain,
    weighted_words,
    word_operator,
)


@pytest.mark.parametrize(
    "kind, m, n, size",
    [("group", 2, 0, 1), ("group", 2, 1, 4), ("group", 2, 6, 972), ("group", 3, 4, 6 * 125),
     ("semigroup", 2, 5, 32), ("semigroup", 3, 3, 27)],
)
def test_sphere_sizes(kind, m, n, size):
    alph = Alphabet(kind, m)
    assert sphere_size(alph, n) == size
    words = list(sphere(alph, n))
    assert len(words) == size == len(set(words))
    assert all(alph.is_reduced(w) for w in words)


@pytest.mark.parametrize("m, n", [(1, 3), (2, 3), (3, 2)])
def test_sphere_matches_filtered_product(m, n):
    alph = Alphabet.group(m)
    oracle = [w for w in itertools.product(alph.letters, repeat=n) if all(b != -a for a, b in zip(w, w[1:]))]
    assert list(sphere(alph, n)) == oracle


@given(st.lists(st.sampled_from([-2, -1, 1, 2]), max_size=12))
def test_reduction_is_idempotent_and_reduced(word):
    alph = Alphabet.group(2)
    r = alph.reduce(word)
    assert alph.is_reduced(r)
    assert alph.reduce(r) == r
    assert alph.reduce(list(word) + [-a for a in reversed(word)]) == ()


def test_alphabet_errors():
    with pytest.raises(DomainError):
        Alphabet("monoid", 2)
    with pytest.raises(DomainError):
        Alphabet.semigroup(2).inverse(1)
    with pytest.raises(DomainError):
        Alphabet.group(2).is_reduced([3])


@pytest.mark.parametrize("chain", [free_group_chain(2), free_group_chain(3), uniform_semigroup_chain(3)], ids=str)
@pytest.mark.parametrize("n", [1, 2, 4])
def test_weighted_words_form_probability(chain, n):
    pairs = list(weighted_words(chain, n))
    assert sum(w for _, w in pairs) == pytest.approx(1.0)
    for word, w in pairs:
        assert w == pytest.approx(markov_measure(chain, word))


def test_free_group_measure_is_uniform_on_sphere():
    chain = free_group_chain(2)
    assert markov_measure(chain, (1, 2, 2)) == pytest.approx(1 / 36)
    assert markov_measure(chain, (1, -1)) == 0.0


def test_weighted_words_guard_is_eager():
    with pytest.raises(ResourceError):
        weighted_words(free_group_chain(3), 20)
    with pytest.raises(DomainError):
        weighted_words(free_group_chain(2), 0)


@pytest.mark.parametrize(
    "P, p",
    [
        ([[0.5, 0.5], [0.5, 0.5]], [0.7, 0.3]),
        ([[1.2, -0.2], [0.5, 0.5]], [0.5, 0.5]),
        ([[0.5, 0.4], [0.5, 0.5]], [0.5, 0.5]),
        ([[1.0]], [1.0]),
    ],
    ids=["not-stationary", "negative", "not-stochastic", "wrong-shape"],
)
def test_invalid_chains(P, p):
    with pytest.raises((DomainError, StructuralError)):
        SphereChain(Alphabet.semigroup(2), P, p)


def test_chain_from_matrix_finds_stationary_vector():
    chain = SphereChain.from_matrix(Alphabet.semigroup(2), [[0.9, 0.1], [0.3, 0.7]])
    assert np.allclose(chain.stationary, [0.75, 0.25])
    assert chain.transition(1, 2) == pytest.approx(0.1)
    assert np.allclose(chain.mixing_weights.sum(axis=0), 1.0)


def test_strict_irreducibility_probe():
    assert is_strictly_irreducible(free_group_chain(2))
    assert is_strictly_irreducible(uniform_semigroup_chain(2))
    cycle = SphereChain(Alphabet.semigroup(3), np.roll(np.eye(3), 1, axis=1), np.full(3, 1 / 3))
    assert not is_strictly_irreducible(cycle)


def test_action_fills_inverses():
    alg = TraceAlgebra.diagonal(3)
    a = permutation_automorphism(alg, [1, 2, 0])
    act = Action(Alphabet.group(1), {1: a})
    assert (act[-1] @ act[1]).distance(identity_channel(alg)) == 0.0
    assert act.stack.shape == (2, alg.dim, alg.dim)


def test_action_rejections():
    alg = TraceAlgebra.matrix(2)
    u = unitary_conjugation(alg, [np.array([[0, 1.0], [1.0, 0]])])
    with pytest.raises(DomainError):
        Action(Alphabet.group(1), {1: transpose_map(alg)})
    with pytest.raises(DomainError):
        Action(Alphabet.group(1), {1: u, -1: identity_channel(alg)})
    with pytest.raises(DomainError):
        Action(Alphabet.group(2), {1: u})
    with pytest.raises(DomainError):
        Action(Alphabet.group(1), {1: transpose_map(alg)}, automorphisms=False)
    semi = Action(Alphabet.semigroup(1), {1: transpose_map(alg)}, automorphisms=False)
    assert not semi.automorphisms


def test_word_operator_order():
    alg = TraceAlgebra.diagonal(3)
    act = Action(Alphabet.group(2), {
        1: permutation_automorphism(alg, [1, 0, 2]),
        2: permutation_automorphism(alg, [0, 2, 1]),
    })
    x = alg.diag([1.0, 2.0, 3.0])
    assert (word_operator(act, (1, 2))(x) - act[2](act[1](x))).norm() == 0.0
    assert word_operator(act, ()).distance(identity_channel(alg)) == 0.0
