"""Operator families with a three-term recursion, their averages, and power averages."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .algebra import KERNEL_CUTOFF, AlgElement, TraceAlgebra, lp_norm
from .channels import ChannelOperator, certify_markov, identity_channel
from .errors import DomainError, HypothesisNotMet, InvariantError, ResourceError, StructuralError
from .spherical import DirectSum, direct_sum_T
from .words import Action, SphereChain, is_strictly_irreducible

RECURSION_TOL = 1e-10


@dataclass
class ChebyshevFamily:
    """``T_0 = id``, ``T_1`` given, ``T_1 T_n = lam T_{n+1} + (1 - lam) T_{n-1}``."""

    first: ChannelOperator
    lam: float
    members: list[ChannelOperator]
    recursion_residuals: list[float] = field(default_factory=list)
    commutation_residuals: list[float] = field(default_factory=list)
    markov_flags: list[bool] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.members) - 1

    @property
    def markov_preserved(self) -> bool:
        return all(self.markov_flags)

    def __getitem__(self, n: int) -> ChannelOperator:
        if n > self.horizon:
            raise ResourceError(f"member {n} beyond the generated horizon {self.horizon}")
        return self.members[n]


def chebyshev_family(T1: ChannelOperator, lam: float, N: int, certify: bool = True) -> ChebyshevFamily:
    """Generate ``T_0..T_N`` from ``T_{n+1} = (T_1 T_n - (1 - lam) T_{n-1}) / lam``.

    Each member is certified as a Markov map when ``certify`` is set; the
    recursion alone does not guarantee positivity, so the outcome is recorded
    rather than assumed.
    """
    if not 0.5 < lam < 1:
        raise DomainError("lam must lie in (1/2, 1)")
    if T1.domain != T1.codomain:
        raise StructuralError("T_1 must be an endomorphism")
    if N < 1:
        raise DomainError("N must be >= 1")
    I = identity_channel(T1.domain)
    mats = [I.matrix, T1.matrix]
    for _ in range(1, N):
        mats.append((T1.matrix @ mats[-1] - (1 - lam) * mats[-2]) / lam)
    members = [ChannelOperator(T1.domain, T1.domain, M, label=f"T{k}") for k, M in enumerate(mats)]
    fam = ChebyshevFamily(T1, lam, members)
    for n in range(1, N):
        r = T1.matrix @ mats[n] - lam * mats[n + 1] - (1 - lam) * mats[n - 1]
        fam.recursion_residuals.append(float(np.abs(r).max()))
    for M in mats:
        fam.commutation_residuals.append(float(np.abs(T1.matrix @ M - M @ T1.matrix).max()))
    if certify:
        fam.markov_flags = [certify_markov(T).markov for T in members]
    return fam


def mn_operator(family: ChebyshevFamily, n: int) -> ChannelOperator:
    """``M_n = (T_0 + ... + T_n) / (n + 1)``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if n > family.horizon:
        raise ResourceError(f"n = {n} beyond the generated horizon {family.horizon}")
    M = sum(T.matrix for T in family.members[: n + 1]) / (n + 1)
    return ChannelOperator(family.first.domain, family.first.domain, M, label=f"M{n}")


def mn_average(family: ChebyshevFamily, n: int, x: AlgElement) -> AlgElement:
    return mn_operator(family, n)(x)


def domination_estimate(
    family: ChebyshevFamily,
    dominating: Callable[[int, AlgElement], AlgElement],
    x: AlgElement,
    n: int,
    support_cutoff: float = 1e-12,
) -> float:
    """Smallest ``c >= 0`` with ``M_n x <= c D_{3n} x``, where ``D_k = dominating(k, .)``.

    Computed as the top generalized eigenvalue of the pair on the support of
    ``D_{3n} x``. Returns ``inf`` when ``M_n x`` has weight outside that support.
    """
    if not x.is_positive():
        raise DomainError("x must be positive")
    a = mn_average(family, n, x)
    b = dominating(3 * n, x)
    if b.algebra != a.algebra:
        raise StructuralError("both averages must live in one algebra")
    c = 0.0
    for ab, bb in zip(a.blocks, b.blocks):
        ab = (ab + ab.conj().T) / 2
        bb = (bb + bb.conj().T) / 2
        beta, V = np.linalg.eigh(bb)
        scale = max(1.0, float(np.abs(beta).max(initial=0.0)))
        keep = beta > support_cutoff * scale
        W = V[:, ~keep]
        if W.size and np.abs(W.conj().T @ ab).max() > 1e-10:
            return np.inf
        if not keep.any():
            continue
        Vs = V[:, keep] / np.sqrt(beta[keep])[None, :]
        c = max(c, float(np.linalg.eigvalsh(Vs.conj().T @ ab @ Vs).max()))
    return c


# -- lattice supremum bounds ----------------------------------------------------


def linf_plus_bounds(alg: TraceAlgebra, sequence: Sequence[AlgElement], p: float) -> tuple[float, float]:
    """Bounds for ``inf{||a||_p : a >= x_n for all n}`` over positive ``x_n``.

    ``lower = max_n ||x_n||_p`` and ``upper = ||sum_n x_n||_p``.
    """
    if not sequence:
        raise DomainError("empty sequence")
    for x in sequence:
        if not x.is_positive():
            raise DomainError("every term must be positive")
    lower = max(lp_norm(alg, x, p) for x in sequence)
    total = sequence[0]
    for x in sequence[1:]:
        total = total + x
    upper = lp_norm(alg, total, p)
    if lower > upper * (1 + 1e-12) + 1e-15:
        raise InvariantError("lower bound exceeds upper bound")
    return lower, upper


def commuting_sup_norm(alg: TraceAlgebra, sequence: Sequence[AlgElement], p: float) -> float:
    """Exact value for diagonal families: the ``p``-norm of the entrywise maximum."""
    diag = []
    for x in sequence:
        for b in x.blocks:
            if np.abs(b - np.diag(np.diag(b))).max(initial=0.0) > 1e-12:
                raise DomainError("commuting_sup_norm needs diagonal elements")
        diag.append(np.concatenate([np.real(np.diag(b)) for b in x.blocks]))
    top = np.max(np.stack(diag), axis=0)
    sup = alg.diag(top)
    return lp_norm(alg, sup, p)


# -- power averages ---------------------------------------------------------------


def mean_ergodic_projection(T: ChannelOperator) -> ChannelOperator:
    """Trace-orthogonal projection onto ``{x : T x = x}``.

    For an ``L^2`` contraction this is the limit of the averages of powers.
    """
    if T.domain != T.codomain:
        raise StructuralError("needs an endomorphism")
    alg = T.domain
    s = np.sqrt(alg.gram)
    K = T.matrix * s[:, None] / s[None, :] - np.eye(alg.dim)
    _, sv, vh = np.linalg.svd(K)
    null = vh[sv <= KERNEL_CUTOFF].conj().T
    P = null @ null.conj().T
    return ChannelOperator(alg, alg, P / s[:, None] * s[None, :], label=f"P[{T.label}]")


@dataclass
class PowerAverageReport:
    average: AlgElement
    limit: AlgElement
    fixed_residual: float
    distances: list[float]

    @property
    def fitted_constant(self) -> float:
        """``max_k k ||avg_k - limit||_2``."""
        return max((k * d for k, d in enumerate(self.distances, start=1)), default=0.0)

    def nonincreasing_from(self, tol: float = 1e-12) -> int:
        start = 1
        for k in range(1, len(self.distances)):
            if self.distances[k] > self.distances[k - 1] + tol:
                start = k + 1
        return start


def semigroup_power_average(T: ChannelOperator, x: AlgElement, n: int) -> PowerAverageReport:
    """``(1/n) sum_{j<n} T^j x`` together with its limit and the ``1/n`` fit."""
    if n < 1:
        raise DomainError("n must be >= 1")
    alg = T.domain
    limit = mean_ergodic_projection(T)(x)
    v, acc = x.vec(), np.zeros_like(x.vec())
    distances = []
    lv = limit.vec()
    for k in range(1, n + 1):
        acc = acc + v
        v = T.matrix @ v
        d = alg.from_vector(acc / k - lv)
        distances.append(lp_norm(alg, d, 2))
    avg = alg.from_vector(acc / n)
    return PowerAverageReport(avg, limit, (T(limit) - limit).norm(), distances)


@dataclass
class MergeReport:
    fixed_residual: float
    pairwise: float
    invariance: float
    norms: list[float]

    @property
    def norm_spread(self) -> float:
        return max(self.norms) - min(self.norms)

    @property
    def holds(self) -> bool:
        return self.pairwise <= 1e-8 and self.invariance <= 1e-8 and self.norm_spread <= 1e-8


def merge_limits_check(
    action: Action,
    chain: SphereChain,
    components: Sequence[AlgElement] | Mapping[int, AlgElement],
    horizon: int = 64,
    p: float = 2,
) -> MergeReport:
    """Check that a fixed tuple of the direct-sum operator has equal invariant components."""
    if p < 2:
        raise DomainError("the merging argument uses a strictly convex norm, p >= 2")
    letters = chain.alphabet.letters
    if isinstance(components, Mapping):
        components = [components[a] for a in letters]
    space = DirectSum(action.algebra, chain)
    tup = space.element(components)
    T = direct_sum_T(action, chain)
    fixed = float(np.abs(T.matrix @ tup.vec() - tup.vec()).max())
    if fixed > 1e-9:
        raise HypothesisNotMet(f"tuple is not fixed by T (residual {fixed:.3e})")
    if not is_strictly_irreducible(chain, horizon):
        raise HypothesisNotMet("chain fails the strict irreducibility probe")
    alg = action.algebra
    norms = [lp_norm(alg, c, p) for c in components]
    pairwise = max(lp_norm(alg, a - b, 2) for a in components for b in components)
    ref = components[0]
    invariance = max(lp_norm(alg, action[a](ref) - ref, 2) for a in letters)
    return MergeReport(fixed, pairwise, invariance, norms)
