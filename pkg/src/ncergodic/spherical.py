"""Spherical and Cesaro averages of a letter action, two ways.

``spherical_avg_bruteforce`` sums over every word of the sphere and is the
reference. ``spherical_avg_recursive`` iterates a single Markov operator on
the direct sum of copies of the algebra indexed by the letters, which costs
``O(n |I|^2)`` map applications instead of ``O(|I| (|I|-1)^(n-1))``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import (
    AlgElement,
    TraceAlgebra,
    conditional_expectation,
    fixed_point_subalgebra,
    lp_norm,
    trace,
)
from .channels import ChannelOperator
from .errors import DomainError, InvariantError, StructuralError
from .orlicz import OrliczFunction, orlicz_norm
from .words import WORD_GUARD, Action, SphereChain, weighted_words

IDENTITY_TOL = 1e-9


def _check_pair(action: Action, chain: SphereChain):
    if action.alphabet != chain.alphabet:
        raise StructuralError("action and chain use different alphabets")


# -- direct sums -------------------------------------------------------------


class DirectSum:
    """Copies of ``algebra`` indexed by the letters, copy ``i`` weighted by ``p_i``.

    ``total`` is the same space as one :class:`TraceAlgebra`; its ``p``-norm is
    ``(sum_i p_i ||x_i||_p^p)^(1/p)``.
    """

    def __init__(self, algebra: TraceAlgebra, chain: SphereChain):
        self.algebra = algebra
        self.chain = chain
        self.letters = chain.alphabet.letters
        self.total = algebra.direct_sum(chain.stationary)

    def __eq__(self, other):
        return isinstance(other, DirectSum) and self.algebra == other.algebra and self.chain is other.chain

    def __hash__(self):
        return hash((self.algebra, id(self.chain)))

    def element(self, components: Sequence[AlgElement]) -> "DirectSumElement":
        return DirectSumElement(self, components)

    def diagonal(self, x: AlgElement) -> "DirectSumElement":
        """The tuple ``(x, ..., x)``."""
        return DirectSumElement(self, [x] * len(self.letters))

    def from_vector(self, v: np.ndarray) -> "DirectSumElement":
        D = self.algebra.dim
        return DirectSumElement(self, [self.algebra.from_vector(v[k * D:(k + 1) * D]) for k in range(len(self.letters))])


class DirectSumElement:
    __slots__ = ("space", "components")

    def __init__(self, space: DirectSum, components: Sequence[AlgElement]):
        if len(components) != len(space.letters):
            raise StructuralError("one component per letter required")
        for c in components:
            if c.algebra != space.algebra:
                raise StructuralError("components must lie in the common algebra")
        self.space = space
        self.components = tuple(components)

    def __getitem__(self, letter: int) -> AlgElement:
        return self.components[self.space.chain.alphabet.index[letter]]

    def __add__(self, other):
        return DirectSumElement(self.space, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return DirectSumElement(self.space, [a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, c):
        return DirectSumElement(self.space, [a * c for a in self.components])

    __rmul__ = __mul__

    def vec(self) -> np.ndarray:
        return np.concatenate([c.vec() for c in self.components])

    def as_element(self) -> AlgElement:
        return self.space.total.from_vector(self.vec())

    def norm(self, p: float) -> float:
        return lp_norm(self.space.total, self.as_element(), p)

    def is_positive(self) -> bool:
        return all(c.is_positive() for c in self.components)


# -- the direct-sum operator and the involution ------------------------------


def direct_sum_T(action: Action, chain: SphereChain) -> ChannelOperator:
    """``T(x)_j = sum_i (p_i p_ij / p_j) alpha_j(x_i)`` on ``DirectSum(...).total``."""
    _check_pair(action, chain)
    space = DirectSum(action.algebra, chain)
    C = chain.mixing_weights
    A = action.stack
    k, D = len(space.letters), action.algebra.dim
    M = np.zeros((k * D, k * D), dtype=complex)
    for j in range(k):
        for i in range(k):
            if C[i, j] != 0:
                M[j * D:(j + 1) * D, i * D:(i + 1) * D] = C[i, j] * A[j]
    T = ChannelOperator(space.total, space.total, M, label="T")
    T.space = space
    return T


def apply_direct_sum(T: ChannelOperator, x: DirectSumElement) -> DirectSumElement:
    return x.space.from_vector(T.matrix @ x.vec())


def involution_U(action: Action, chain: SphereChain) -> ChannelOperator:
    """``U(y)_j = alpha_j(y_{-j})``.

    Checks ``U^2 = id`` (to 1e-14, exactly for permutation actions) and
    ``U T U = T*`` (to 1e-10) on coordinate matrices.
    """
    _check_pair(action, chain)
    alph = chain.alphabet
    if not alph.is_group:
        raise DomainError("the involution needs a group alphabet")
    space = DirectSum(action.algebra, chain)
    A = action.stack
    k, D = len(alph), action.algebra.dim
    M = np.zeros((k * D, k * D), dtype=complex)
    for j, a in enumerate(alph.letters):
        i = alph.index[-a]
        M[j * D:(j + 1) * D, i * D:(i + 1) * D] = A[j]
    U = ChannelOperator(space.total, space.total, M, label="U")
    U.space = space
    sq = np.abs(M @ M - np.eye(k * D)).max()
    if sq > 1e-14:
        raise InvariantError(f"U^2 differs from the identity by {sq:.3e}")
    T = direct_sum_T(action, chain)
    d = np.abs(M @ T.matrix @ M - T.adjoint().matrix).max()
    if d > 1e-10:
        raise InvariantError(f"UTU differs from T* by {d:.3e}")
    return U


# -- averages ------------------------------------------------------------------


def spherical_avg_bruteforce(
    action: Action, chain: SphereChain, n: int, x: AlgElement, guard: int | None = WORD_GUARD
) -> AlgElement:
    """``S_n x = sum_{|w| = n} mu(w) alpha_w(x)`` by enumerating the sphere."""
    return _bruteforce(action, chain, n, x, None, guard)


def partial_spherical(
    action: Action, chain: SphereChain, n: int, i: int, x: AlgElement, guard: int | None = WORD_GUARD
) -> AlgElement:
    """``S_n^(i) x``: the part of the sphere sum over words ending in ``i``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if i not in chain.alphabet.index:
        raise DomainError(f"letter {i} not in the alphabet")
    return _bruteforce(action, chain, n, x, i, guard)


def _bruteforce(action, chain, n, x, last, guard):
    _check_pair(action, chain)
    if n < 0:
        raise DomainError("n must be >= 0")
    if n == 0:
        return x
    words = weighted_words(chain, n, guard)
    mats = action.maps
    v0 = x.vec()
    acc = np.zeros_like(v0)
    for word, weight in words:
        if last is not None and word[-1] != last:
            continue
        v = v0
        for a in word:
            v = mats[a].matrix @ v
        acc = acc + weight * v
    return x.algebra.from_vector(acc)


def _step(A: np.ndarray, C: np.ndarray, X: np.ndarray) -> np.ndarray:
    """One application of the direct-sum operator to stacked components.

    ``X`` has shape ``(|I|, D)`` (vectors) or ``(|I|, D, K)`` (matrices).
    """
    mix = np.tensordot(C.T, X, axes=1)
    if X.ndim == 2:
        return np.einsum("jab,jb->ja", A, mix)
    return np.einsum("jab,jbc->jac", A, mix)


def diagonal_iterates(action: Action, chain: SphereChain, n: int, x: AlgElement) -> np.ndarray:
    """``T^k (x, ..., x)`` for ``k = 0..n`` as an array ``(n+1, |I|, D)``."""
    _check_pair(action, chain)
    if n < 0:
        raise DomainError("n must be >= 0")
    A, C = action.stack, chain.mixing_weights
    X = np.tile(x.vec(), (len(chain.alphabet), 1))
    out = [X]
    for _ in range(n):
        X = _step(A, C, X)
        out.append(X)
    return np.stack(out)


def spherical_avg_recursive(action: Action, chain: SphereChain, n: int, x: AlgElement) -> AlgElement:
    """``S_n x`` as ``sum_j p_j T^n(x, ..., x)_j``."""
    X = diagonal_iterates(action, chain, n, x)[-1]
    return x.algebra.from_vector(chain.stationary @ X)


def spherical_components(action: Action, chain: SphereChain, n: int, x: AlgElement) -> dict[int, AlgElement]:
    """``S_n^(j) x = p_j T^n(x, ..., x)_j`` for every letter (``S_0^(j) = p_j x``)."""
    X = diagonal_iterates(action, chain, n, x)[-1]
    p = chain.stationary
    return {a: x.algebra.from_vector(p[k] * X[k]) for k, a in enumerate(chain.alphabet.letters)}


def cesaro_average(
    action: Action, chain: SphereChain, n: int, x: AlgElement
) -> tuple[AlgElement, dict[int, AlgElement]]:
    """``A_n x = (1/n) sum_{k<n} S_k x`` and its components ``A_n^(j) x``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    X = diagonal_iterates(action, chain, n - 1, x).mean(axis=0)
    p = chain.stationary
    comps = {a: x.algebra.from_vector(p[k] * X[k]) for k, a in enumerate(chain.alphabet.letters)}
    return x.algebra.from_vector(p @ X), comps


def spherical_operators(action: Action, chain: SphereChain, n_max: int) -> list[ChannelOperator]:
    """Coordinate matrices of ``S_0, ..., S_{n_max}`` via the recursion."""
    _check_pair(action, chain)
    alg = action.algebra
    A, C, p = action.stack, chain.mixing_weights, chain.stationary
    X = np.tile(np.eye(alg.dim, dtype=complex), (len(chain.alphabet), 1, 1))
    out = []
    for k in range(n_max + 1):
        if k:
            X = _step(A, C, X)
        out.append(ChannelOperator(alg, alg, np.tensordot(p, X, axes=1), label=f"S{k}"))
    return out


def cesaro_operators(action: Action, chain: SphereChain, n_max: int) -> list[ChannelOperator]:
    """``A_1, ..., A_{n_max}``."""
    S = spherical_operators(action, chain, n_max - 1)
    acc = np.zeros_like(S[0].matrix)
    out = []
    for k, Sk in enumerate(S, start=1):
        acc = acc + Sk.matrix
        out.append(ChannelOperator(Sk.domain, Sk.domain, acc / k, label=f"A{k}"))
    return out


# -- identity checks ------------------------------------------------------------


@dataclass
class IdentityReport:
    name: str
    residuals: dict[int, float] = field(default_factory=dict)
    tol: float = IDENTITY_TOL

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def holds(self) -> bool:
        return self.max_residual <= self.tol


@dataclass
class RelationReport:
    first: IdentityReport
    second_minus: IdentityReport
    second_plus: IdentityReport

    @property
    def vanishing_sign(self) -> str | None:
        """Which sign convention of the second identity vanishes, if any."""
        if self.second_minus.holds and not self.second_plus.holds:
            return "-"
        if self.second_plus.holds and not self.second_minus.holds:
            return "+"
        if self.second_plus.holds and self.second_minus.holds:
            return "both"
        return None


def _maxabs(M: np.ndarray) -> float:
    return float(np.abs(M).max(initial=0.0))


def check_relation_even(action: Action, chain: SphereChain, N: int) -> RelationReport:
    """Operator identities linking ``(T*)^n T^n`` and ``U T^(2n-1)``, ``n = 1..N``.

    First identity::

        (T*)^n T^n = (2m-2)/(2m-1) U T^(2n-1) + 1/(2m-1) (T*)^(n-1) T^(n-1)

    Second identity, reported under both signs ``s = -1, +1``::

        T^(2n-1) = (2m-1)/(2m-2) U (T*)^n T^n + s/(2m-2) U (T*)^(n-1) T^(n-1)
    """
    m = chain.alphabet.m
    if not chain.alphabet.is_group:
        raise DomainError("the even-radius identities need a group alphabet")
    if m < 2:
        raise DomainError("the even-radius identities need m >= 2 (their coefficients divide by 2m-2)")
    if N < 1:
        raise DomainError("N must be >= 1")
    T = direct_sum_T(action, chain).matrix
    Ts = direct_sum_T(action, chain).adjoint().matrix
    U = involution_U(action, chain).matrix
    eye = np.eye(T.shape[0])
    Tp = [eye]  # T^k
    for _ in range(2 * N):
        Tp.append(T @ Tp[-1])
    Tsp = [eye]
    for _ in range(N):
        Tsp.append(Ts @ Tsp[-1])
    rep = RelationReport(
        IdentityReport("relation-1"), IdentityReport("relation-2 (-)"), IdentityReport("relation-2 (+)")
    )
    a, b = (2 * m - 2) / (2 * m - 1), 1 / (2 * m - 1)
    c, d = (2 * m - 1) / (2 * m - 2), 1 / (2 * m - 2)
    for n in range(1, N + 1):
        G = Tsp[n] @ Tp[n]
        G1 = Tsp[n - 1] @ Tp[n - 1]
        rep.first.residuals[n] = _maxabs(G - (a * U @ Tp[2 * n - 1] + b * G1))
        rep.second_minus.residuals[n] = _maxabs(Tp[2 * n - 1] - (c * U @ G - d * U @ G1))
        rep.second_plus.residuals[n] = _maxabs(Tp[2 * n - 1] - (c * U @ G + d * U @ G1))
    return rep


def check_s1sq_identity(
    action: Action, chain: SphereChain, N: int, recursion_range: Sequence[int] = range(2, 9)
) -> tuple[IdentityReport, IdentityReport]:
    """Quadratic and one-step sphere recursions at the operator level.

    Checks ``S_1^2 S_{2n} = l^2 S_{2n+2} + (2m-1)/(2m^2) S_{2n} + 1/(4m^2) S_{2n-2}``
    for ``n = 1..N`` and ``S_1 S_n = l S_{n+1} + (1-l) S_{n-1}`` for ``n`` in
    ``recursion_range``, with ``l = (2m-1)/(2m)``.
    """
    m = chain.alphabet.m
    if N < 1:
        raise DomainError("N must be >= 1")
    top = max(2 * N + 2, max(recursion_range, default=0) + 1)
    S = [s.matrix for s in spherical_operators(action, chain, top)]
    lam = (2 * m - 1) / (2 * m)
    quad = IdentityReport("s1-squared")
    for n in range(1, N + 1):
        rhs = lam**2 * S[2 * n + 2] + (2 * m - 1) / (2 * m * m) * S[2 * n] + S[2 * n - 2] / (4 * m * m)
        quad.residuals[n] = _maxabs(S[1] @ S[1] @ S[2 * n] - rhs)
    step = IdentityReport("one-step")
    for n in recursion_range:
        step.residuals[n] = _maxabs(S[1] @ S[n] - lam * S[n + 1] - (1 - lam) * S[n - 1])
    return quad, step


def check_diagonal_identity(
    action: Action, chain: SphereChain, x: AlgElement, N: int, guard: int | None = WORD_GUARD
) -> IdentityReport:
    """``T^n(x, ..., x)_j = S_n^(j) x / p_j`` against sphere enumeration, ``n = 1..N``."""
    X = diagonal_iterates(action, chain, N, x)
    rep = IdentityReport("diagonal", tol=1e-10)
    p = chain.stationary
    for n in range(1, N + 1):
        worst = 0.0
        for k, a in enumerate(chain.alphabet.letters):
            ref = partial_spherical(action, chain, n, a, x, guard).vec() / p[k]
            worst = max(worst, _maxabs(X[n, k] - ref))
        rep.residuals[n] = worst
    return rep


@dataclass(frozen=True)
class ContractionReport:
    samples: int
    max_ratio: dict[float, float]
    positivity_preserved: bool

    @property
    def holds(self) -> bool:
        return self.positivity_preserved and all(r <= 1 + 1e-10 for r in self.max_ratio.values())


def direct_sum_contraction_check(
    action: Action,
    chain: SphereChain,
    samples: Sequence[DirectSumElement],
    ps: Sequence[float] = (1, 2, 4, np.inf),
) -> ContractionReport:
    """Largest ``||T y||_p / ||y||_p`` over samples and whether positivity survives."""
    T = direct_sum_T(action, chain)
    ratios = {p: 0.0 for p in ps}
    positive = True
    count = 0
    for y in samples:
        ty = apply_direct_sum(T, y)
        count += 1
        for p in ps:
            ny = y.norm(p)
            if ny > 0:
                ratios[p] = max(ratios[p], ty.norm(p) / ny)
        if y.is_positive() and not ty.is_positive():
            positive = False
    return ContractionReport(count, ratios, positive)


# -- limits and convergence --------------------------------------------------------


def even_fixed_expectation(action: Action) -> ChannelOperator:
    """Conditional expectation onto the fixed points of all two-letter products."""
    if not action.automorphisms:
        raise DomainError("the even-word fixed algebra needs an automorphism action")
    alg = action.algebra
    letters = action.alphabet.letters
    pairs = [action[g] @ action[h] for g in letters for h in letters]
    E = conditional_expectation(fixed_point_subalgebra(pairs, alg))
    E.label = "E2"
    for P in pairs:
        d = E.distance(E @ P)
        if d > IDENTITY_TOL:
            raise InvariantError(f"E2 is not invariant under a two-letter product ({d:.3e})")
    tr = alg.gram * alg.identity().vec()
    if np.abs(tr @ E.matrix - tr).max() > IDENTITY_TOL:
        raise InvariantError("E2 does not preserve the trace")
    return E


@dataclass
class Certificate:
    projection: AlgElement
    defect: float
    residual: float


@dataclass
class ConvergenceReport:
    """Errors ``||S_2n x - E2 x||`` per even radius ``2n``."""

    orlicz_names: list[str]
    rows: list[tuple[int, float, float, list[float]]] = field(default_factory=list)
    target: float = 1e-6
    certificate: Certificate | None = None

    @property
    def header(self) -> list[str]:
        return ["n", "err_inf", "err_l2"] + [f"err_{name}" for name in self.orlicz_names]

    def column(self, name: str) -> np.ndarray:
        k = self.header.index(name)
        flat = [[r[0], r[1], r[2], *r[3]] for r in self.rows]
        return np.array([row[k] for row in flat], dtype=float)

    def first_below(self, column: str = "err_l2", target: float | None = None) -> int | None:
        """Smallest ``n`` whose error is at most the target."""
        target = self.target if target is None else target
        for n, v in zip(self.column("n"), self.column(column)):
            if v <= target:
                return int(n)
        return None

    def eventually_below(self, column: str = "err_l2", target: float | None = None) -> bool:
        """Whether the last row's error is at most the target."""
        target = self.target if target is None else target
        return bool(self.rows) and float(self.column(column)[-1]) <= target

    def nonincreasing_from(self, column: str = "err_l2", tol: float = 1e-12) -> int | None:
        """Smallest ``n`` from which the error never increases by more than ``tol``."""
        vals, ns = self.column(column), self.column("n")
        start = None
        for k in range(len(vals)):
            if start is None:
                start = k
            if k and vals[k] > vals[k - 1] + tol:
                start = k
        return None if start is None else int(ns[start])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for n, e_inf, e_2, extra in self.rows:
            w.writerow([str(n)] + ["%.17g" % v for v in (e_inf, e_2, *extra)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def summary(self) -> str:
        lines = [f"rows: {len(self.rows)}", f"target: {self.target:g}"]
        for col in self.header[1:]:
            lines.append(f"{col}: first n below target = {self.first_below(col)}")
        if self.certificate is not None:
            c = self.certificate
            lines.append(f"certificate: defect={c.defect:.6g} residual={c.residual:.6g}")
        return "\n".join(lines)


def converge_even_spheres(
    action: Action,
    chain: SphereChain,
    x: AlgElement,
    N: int,
    orlicz: Sequence[OrliczFunction] = (),
    target: float = 1e-6,
    certificate_eps: float | None = None,
) -> ConvergenceReport:
    """Tabulate the distance of ``S_2n x`` to ``E2 x`` for ``n = 1..N``.

    With ``certificate_eps`` set, also searches a projection ``e`` with
    ``tau(1 - e) <= eps`` on which the corner errors are smallest.
    """
    if not chain.alphabet.is_group:
        raise DomainError("even spheres need a group alphabet")
    if N < 1:
        raise DomainError("N must be >= 1")
    alg = action.algebra
    E = even_fixed_expectation(action)
    limit = E(x)
    X = diagonal_iterates(action, chain, 2 * N, x)
    p = chain.stationary
    rep = ConvergenceReport([phi.name for phi in orlicz], target=target)
    seq = []
    for n in range(1, N + 1):
        s = alg.from_vector(p @ X[2 * n])
        seq.append(s)
        d = s - limit
        rep.rows.append((n, d.norm(), lp_norm(alg, d, 2), [orlicz_norm(alg, d, phi) for phi in orlicz]))
    if certificate_eps is not None:
        rep.certificate = bau_certificate(alg, seq, limit, certificate_eps, target=target)
    return rep


def bau_certificate(
    alg: TraceAlgebra,
    sequence: Sequence[AlgElement],
    limit: AlgElement,
    eps: float,
    target: float | None = None,
) -> Certificate:
    """Projection ``e`` with ``tau(1 - e) <= eps`` and small corners ``e (x_n - x) e``.

    Candidates are ``1`` minus the span of the top eigenvectors of
    ``H = sum_n 2^-n |x_n - x|^2``. Among those within the trace budget the
    one with the smallest ``sup_n ||e (x_n - x) e||`` wins, ties going to
    the larger trace. ``e = 1`` is returned outright when the uniform error
    already meets ``target``. The search is heuristic: the result is a valid
    certificate but not necessarily the best one.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    diffs = [s - limit for s in sequence]
    one = alg.identity()

    def sup_corner(e: AlgElement) -> float:
        return max(((e @ d @ e).norm() for d in diffs), default=0.0)

    full = sup_corner(one)
    if target is not None and full <= target:
        return Certificate(one, 0.0, full)
    H = alg.zeros()
    for n, d in enumerate(diffs, start=1):
        H = H + (d.H @ d) * 2.0**-n
    # eigenvectors of all blocks, largest eigenvalue first
    vecs = []
    for k, (blk, w) in enumerate(zip(H.blocks, alg.weights)):
        lam, V = np.linalg.eigh((blk + blk.conj().T) / 2)
        vecs += [(lam[i], k, V[:, i], w) for i in range(lam.size)]
    vecs.sort(key=lambda t: -t[0])
    best = Certificate(one, 0.0, full)
    removed = [np.zeros((n, n), dtype=complex) for n in alg.dims]
    defect = 0.0
    for lam, k, v, w in vecs:
        if defect + w > eps + 1e-15:
            break
        removed[k] = removed[k] + np.outer(v, v.conj())
        defect += w
        e = one - alg.element(removed)
        r = sup_corner(e)
        if r < best.residual - 1e-14 * max(1.0, full):
            best = Certificate(e, defect, r)
    return best
