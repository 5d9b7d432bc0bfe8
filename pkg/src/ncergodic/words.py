"""Alphabets, reduced words, sphere enumeration and Markov chains on letters."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DomainError, ResourceError, StructuralError

WORD_GUARD = 1_000_000
STOCHASTIC_TOL = 1e-12

Word = tuple[int, ...]


@dataclass(frozen=True)
class Alphabet:
    """Letters ``-m..-1, 1..m`` (``kind="group"``) or ``1..m`` (``kind="semigroup"``)."""

    kind: str
    m: int

    def __post_init__(self):
        if self.kind not in ("group", "semigroup"):
            raise DomainError(f"unknown alphabet kind {self.kind!r}")
        if self.m < 1:
            raise DomainError("m must be >= 1")

    @classmethod
    def group(cls, m: int) -> "Alphabet":
        return cls("group", m)

    @classmethod
    def semigroup(cls, m: int) -> "Alphabet":
        return cls("semigroup", m)

    @property
    def is_group(self) -> bool:
        return self.kind == "group"

    @cached_property
    def letters(self) -> tuple[int, ...]:
        pos = tuple(range(1, self.m + 1))
        if self.is_group:
            return tuple(range(-self.m, 0)) + pos
        return pos

    @cached_property
    def index(self) -> dict[int, int]:
        return {a: k for k, a in enumerate(self.letters)}

    def __len__(self):
        return len(self.letters)

    def inverse(self, letter: int) -> int:
        if not self.is_group:
            raise DomainError("semigroup letters have no inverses")
        return -letter

    def is_reduced(self, word: Sequence[int]) -> bool:
        if any(a not in self.index for a in word):
            raise DomainError(f"{tuple(word)} is not a word over {self.letters}")
        if not self.is_group:
            return True
        return all(b != -a for a, b in zip(word, word[1:]))

    def reduce(self, word: Sequence[int]) -> Word:
        """Free reduction (cancel adjacent ``i, -i``)."""
        out: list[int] = []
        for a in word:
            if out and self.is_group and out[-1] == -a:
                out.pop()
            else:
                out.append(a)
        return tuple(out)


def sphere_size(alphabet: Alphabet, n: int) -> int:
    if n < 0:
        raise DomainError("radius must be nonnegative")
    if n == 0:
        return 1
    k = len(alphabet)
    if alphabet.is_group:
        return k * (k - 1) ** (n - 1)
    return k**n


def sphere(alphabet: Alphabet, n: int) -> Iterator[Word]:
    """Reduced words of length ``n`` in lexicographic order of letter index."""
    if n < 0:
        raise DomainError("radius must be nonnegative")
    letters = alphabet.letters
    group = alphabet.is_group

    def extend(prefix: tuple[int, ...]):
        if len(prefix) == n:
            yield prefix
            return
        for a in letters:
            if group and prefix and prefix[-1] == -a:
                continue
            yield from extend(prefix + (a,))

    return extend(())


# -- Markov chains on letters -------------------------------------------------


class SphereChain:
    """Row-stochastic matrix on the letters with a strictly positive stationary vector."""

    def __init__(self, alphabet: Alphabet, P, stationary):
        P = np.array(P, dtype=float)
        p = np.array(stationary, dtype=float)
        k = len(alphabet)
        if P.shape != (k, k) or p.shape != (k,):
            raise StructuralError(f"chain needs a {k}x{k} matrix and a length-{k} vector")
        if P.min() < 0:
            raise DomainError("transition probabilities must be nonnegative")
        if np.abs(P.sum(axis=1) - 1).max() > STOCHASTIC_TOL:
            raise DomainError("rows must sum to 1")
        if p.min() <= 0:
            raise DomainError("stationary probabilities must be positive")
        if abs(p.sum() - 1) > STOCHASTIC_TOL:
            raise DomainError("stationary vector must sum to 1")
        if np.abs(p @ P - p).max() > STOCHASTIC_TOL:
            raise DomainError("vector is not stationary for the matrix")
        P.setflags(write=False)
        p.setflags(write=False)
        self.alphabet = alphabet
        self.P = P
        self.stationary = p

    def __repr__(self):
        return f"SphereChain({self.alphabet.kind}, m={self.alphabet.m})"

    @classmethod
    def from_matrix(cls, alphabet: Alphabet, P) -> "SphereChain":
        """Chain with the stationary vector computed from the left eigenvector for 1."""
        P = np.asarray(P, dtype=float)
        w, v = np.linalg.eig(P.T)
        k = int(np.argmin(np.abs(w - 1)))
        if abs(w[k] - 1) > 1e-10:
            raise DomainError("matrix has no eigenvalue 1")
        p = np.real(v[:, k])
        p = p / p.sum()
        return cls(alphabet, P, p)

    def transition(self, i: int, j: int) -> float:
        idx = self.alphabet.index
        return float(self.P[idx[i], idx[j]])

    def initial(self, i: int) -> float:
        return float(self.stationary[self.alphabet.index[i]])

    @cached_property
    def mixing_weights(self) -> np.ndarray:
        """``C[i, j] = p_i p_ij / p_j``, the coefficient of component ``i`` in output ``j``."""
        p = self.stationary
        C = p[:, None] * self.P / p[None, :]
        C.setflags(write=False)
        return C


def free_group_chain(m: int) -> SphereChain:
    """Uniform non-backtracking walk on ``-m..-1, 1..m``."""
    if m < 1:
        raise DomainError("m must be >= 1")
    alph = Alphabet.group(m)
    k = 2 * m
    P = np.full((k, k), 1.0 / (k - 1))
    for i, a in enumerate(alph.letters):
        P[i, alph.index[-a]] = 0.0
    return SphereChain(alph, P, np.full(k, 1.0 / k))


def uniform_semigroup_chain(m: int) -> SphereChain:
    alph = Alphabet.semigroup(m)
    return SphereChain(alph, np.full((m, m), 1.0 / m), np.full(m, 1.0 / m))


def markov_measure(chain: SphereChain, word: Sequence[int]) -> float:
    """``p_{i1} p_{i1 i2} ... p_{i(n-1) in}``."""
    if len(word) == 0:
        raise DomainError("the measure is defined on nonempty words")
    idx = chain.alphabet.index
    try:
        ks = [idx[a] for a in word]
    except KeyError as exc:
        raise DomainError(f"letter {exc.args[0]} not in the alphabet") from exc
    out = chain.stationary[ks[0]]
    for a, b in zip(ks, ks[1:]):
        out *= chain.P[a, b]
    return float(out)


def weighted_words(chain: SphereChain, n: int, guard: int | None = WORD_GUARD) -> Iterator[tuple[Word, float]]:
    """Words of length ``n >= 1`` with positive measure, depth-first.

    Raises :class:`ResourceError` before enumerating when the number of
    candidate words exceeds ``guard`` (``None`` disables the guard).
    """
    if n < 1:
        raise DomainError("radius must be >= 1")
    k = len(chain.alphabet)
    support = int(np.count_nonzero(chain.P > 0))
    estimate = k * (support / k) ** (n - 1)
    if guard is not None and estimate > guard:
        raise ResourceError(f"sphere of radius {n} has about {estimate:.3g} words (guard {guard})")
    return _enumerate_weighted(chain, n)


def _enumerate_weighted(chain: SphereChain, n: int) -> Iterator[tuple[Word, float]]:
    letters = chain.alphabet.letters
    P, p = chain.P, chain.stationary

    def extend(word, last, weight):
        if len(word) == n:
            yield word, weight
            return
        for j, a in enumerate(letters):
            w = weight * P[last, j]
            if w > 0:
                yield from extend(word + (a,), j, w)

    for i, a in enumerate(letters):
        yield from extend((a,), i, p[i])


def is_strictly_irreducible(chain: SphereChain, horizon: int = 64) -> bool:
    """Whether some power ``(P P^t)^n`` with ``n <= horizon`` is entrywise positive."""
    Q = chain.P @ chain.P.T
    support = Q > 0
    acc = support.copy()
    for _ in range(horizon):
        if acc.all():
            return True
        acc = (acc.astype(int) @ support.astype(int)) > 0
    return bool(acc.all())


# -- actions ---------------------------------------------------------------------


class Action:
    """Maps indexed by letters.

    For a group alphabet, maps for negative letters may be omitted and are
    then taken to be the adjoints (inverses) of the positive ones; any
    supplied inverse must agree with the adjoint to 1e-10. Every map must be
    a trace-preserving *-automorphism unless ``automorphisms=False``, which
    (for semigroup alphabets only) admits general Markov maps instead.
    """

    def __init__(self, alphabet: Alphabet, maps: Mapping[int, "object"], automorphisms: bool = True):
        if not automorphisms and alphabet.is_group:
            raise DomainError("group actions must consist of automorphisms")
        maps = dict(maps)
        pos = [a for a in alphabet.letters if a > 0]
        missing = [a for a in pos if a not in maps]
        if missing:
            raise DomainError(f"no map for letters {missing}")
        first = maps[pos[0]]
        alg = first.domain
        for a in alphabet.letters:
            if alphabet.is_group and a < 0:
                inv = maps[-a].adjoint()
                if a in maps:
                    if maps[a].distance(inv) > 1e-10:
                        raise DomainError(f"map for {a} is not the inverse of the map for {-a}")
                else:
                    maps[a] = inv
            T = maps[a]
            if T.domain != alg or T.codomain != alg:
                raise StructuralError("all maps must act on one algebra")
            if automorphisms and not T.is_automorphism:
                raise DomainError(f"map for letter {a} is not a *-automorphism")
            if not automorphisms and not T.is_markov:
                raise DomainError(f"map for letter {a} is not a Markov map")
            if not T.is_trace_preserving:
                raise DomainError(f"map for letter {a} does not preserve the trace")
        extra = set(maps) - set(alphabet.letters)
        if extra:
            raise DomainError(f"maps given for letters outside the alphabet: {sorted(extra)}")
        self.alphabet = alphabet
        self.algebra = alg
        self.maps = {a: maps[a] for a in alphabet.letters}
        self.automorphisms = automorphisms

    def __getitem__(self, letter: int):
        return self.maps[letter]

    @cached_property
    def stack(self) -> np.ndarray:
        """Coordinate matrices in alphabet order, shape ``(|I|, D, D)``."""
        s = np.stack([self.maps[a].matrix for a in self.alphabet.letters])
        s.setflags(write=False)
        return s


def word_operator(action: Action, word: Sequence[int]):
    """``alpha_w``; the first letter acts first. The empty word gives the identity."""
    from .channels import ChannelOperator

    alg = action.algebra
    M = np.eye(alg.dim, dtype=complex)
    for a in word:
        if a not in action.maps:
            raise DomainError(f"no map for letter {a}")
        M = action.maps[a].matrix @ M
    return ChannelOperator(alg, alg, M, label="alpha" + "".join(f"[{a}]" for a in word))
