"""Markov operators on tracial algebras.

A :class:`ChannelOperator` is a linear map between two
:class:`~ncergodic.algebra.TraceAlgebra` instances stored as a dense matrix
on coordinate space. Property flags are computed on first access and cached.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .algebra import (
    AlgElement,
    TraceAlgebra,
    lp_norm,
    random_element,
    random_positive,
    trace,
)
from .errors import DomainError, HypothesisNotMet, InvariantError, StructuralError

FLAG_TOL = 1e-10
MULTIPLICATIVE_TOL = 1e-9


class ChannelOperator:
    """Linear map ``domain -> codomain`` acting on coordinate vectors."""

    def __init__(
        self,
        domain: TraceAlgebra,
        codomain: TraceAlgebra,
        matrix: np.ndarray,
        label: str = "T",
    ):
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (codomain.dim, domain.dim):
            raise StructuralError(
                f"matrix shape {matrix.shape} != ({codomain.dim}, {domain.dim})"
            )
        matrix.setflags(write=False)
        self.domain = domain
        self.codomain = codomain
        self.matrix = matrix
        self.label = label
        self._flags: dict[str, object] = {}
        self._lock = threading.RLock()
        self._adjoint: ChannelOperator | None = None

    def __repr__(self):
        return f"ChannelOperator({self.label!r}, {self.domain.dims} -> {self.codomain.dims})"

    @classmethod
    def from_function(
        cls,
        domain: TraceAlgebra,
        codomain: TraceAlgebra,
        f: Callable[[AlgElement], AlgElement],
        label: str = "T",
    ) -> "ChannelOperator":
        """Tabulate a linear function on the matrix units of ``domain``."""
        cols = [f(e).vec() for e in domain.basis()]
        return cls(domain, codomain, np.stack(cols, axis=1), label=label)

    # -- application and algebra of maps ---------------------------------

    def __call__(self, x: AlgElement) -> AlgElement:
        if x.algebra != self.domain:
            raise StructuralError(f"{self.label}: element is not in the domain")
        return self.codomain.from_vector(self.matrix @ x.vec())

    def __matmul__(self, other: "ChannelOperator") -> "ChannelOperator":
        """Composition ``self o other`` (``other`` is applied first)."""
        if other.codomain != self.domain:
            raise StructuralError("cannot compose: codomain/domain mismatch")
        return ChannelOperator(
            other.domain, self.codomain, self.matrix @ other.matrix, f"{self.label}{other.label}"
        )

    def __add__(self, other: "ChannelOperator") -> "ChannelOperator":
        self._same_shape(other)
        return ChannelOperator(self.domain, self.codomain, self.matrix + other.matrix, f"({self.label}+{other.label})")

    def __sub__(self, other: "ChannelOperator") -> "ChannelOperator":
        self._same_shape(other)
        return ChannelOperator(self.domain, self.codomain, self.matrix - other.matrix, f"({self.label}-{other.label})")

    def __mul__(self, c) -> "ChannelOperator":
        return ChannelOperator(self.domain, self.codomain, self.matrix * c, f"{c}*{self.label}")

    __rmul__ = __mul__

    def _same_shape(self, other):
        if other.domain != self.domain or other.codomain != self.codomain:
            raise StructuralError("maps act between different algebras")

    def power(self, n: int) -> "ChannelOperator":
        if self.domain != self.codomain:
            raise StructuralError("power needs an endomorphism")
        if n < 0:
            raise DomainError("negative power")
        return ChannelOperator(
            self.domain, self.domain, np.linalg.matrix_power(self.matrix, n), f"{self.label}^{n}"
        )

    def adjoint(self) -> "ChannelOperator":
        """Adjoint for ``<x, y> = tau(y* x)`` on both sides; ``T.adjoint().adjoint() is T``."""
        with self._lock:
            if self._adjoint is None:
                g_in, g_out = self.domain.gram, self.codomain.gram
                A = self.matrix.conj().T * g_out[None, :] / g_in[:, None]
                adj = ChannelOperator(self.codomain, self.domain, A, f"{self.label}*")
                adj._adjoint = self
                self._adjoint = adj
            return self._adjoint

    def distance(self, other: "ChannelOperator") -> float:
        """Max-entry distance of coordinate matrices."""
        self._same_shape(other)
        return float(np.abs(self.matrix - other.matrix).max(initial=0.0))

    # -- cached flags ----------------------------------------------------

    def _flag(self, name: str, compute: Callable[[], object]):
        with self._lock:
            if name not in self._flags:
                self._flags[name] = compute()
            return self._flags[name]

    @property
    def is_unital(self) -> bool:
        def compute():
            one_out = self.codomain.identity().vec()
            return bool(np.abs(self.matrix @ self.domain.identity().vec() - one_out).max() <= FLAG_TOL)

        return self._flag("unital", compute)

    @property
    def is_trace_preserving(self) -> bool:
        def compute():
            # tau(T(e)) for every matrix unit e versus tau(e)
            tr_out = self.codomain.gram * self.codomain.identity().vec()
            tr_in = self.domain.gram * self.domain.identity().vec()
            return bool(np.abs(tr_out @ self.matrix - tr_in).max() <= FLAG_TOL)

        return self._flag("trace_preserving", compute)

    @property
    def choi_min_eigenvalue(self) -> float:
        return self._flag("choi_min", lambda: min(lam for *_, lam in choi_matrix(self)))

    @property
    def is_completely_positive(self) -> bool:
        return self.choi_min_eigenvalue >= -FLAG_TOL

    @property
    def positivity_witness(self) -> float:
        """Smallest eigenvalue of ``T(v v*)`` found over unit vectors ``v``."""
        return self._flag("positivity", lambda: _min_output_eigenvalue(self))

    @property
    def is_positive(self) -> bool:
        if self.is_completely_positive:
            return True
        return self.positivity_witness >= -FLAG_TOL

    @property
    def is_self_adjoint(self) -> bool:
        if self.domain != self.codomain:
            return False
        return self._flag(
            "self_adjoint",
            lambda: bool(np.abs(self.matrix - self.adjoint().matrix).max() <= FLAG_TOL),
        )

    @property
    def is_automorphism(self) -> bool:
        return self._flag("automorphism", lambda: _check_automorphism(self))

    @property
    def is_markov(self) -> bool:
        return self.is_unital and self.is_trace_preserving and self.is_positive


def _check_automorphism(T: ChannelOperator) -> bool:
    if T.domain != T.codomain or not T.is_unital:
        return False
    if np.linalg.matrix_rank(T.matrix, tol=1e-9) < T.domain.dim:
        return False
    rng = np.random.default_rng(20240917)
    for _ in range(3):
        x = random_element(T.domain, rng)
        y = random_element(T.domain, rng)
        scale = 1 + x.norm() * y.norm()
        if (T(x @ y) - T(x) @ T(y)).norm() > MULTIPLICATIVE_TOL * scale:
            return False
        if (T(x.H) - T(x).H).norm() > MULTIPLICATIVE_TOL * scale:
            return False
    return True


def choi_matrix(T: ChannelOperator) -> list[tuple[int, int, np.ndarray, float]]:
    """Choi matrices per (domain block, codomain block) pair.

    Returns ``(a, b, C_ab, min_eig)`` with
    ``C_ab = sum_ij E_ij (x) T(E_ij)_b`` for matrix units of domain block ``a``.
    ``T`` is completely positive iff every ``C_ab`` is positive semidefinite.
    """
    out = []
    for a, na in enumerate(T.domain.dims):
        cols = T.domain.block_slice(a)
        for b, nb in enumerate(T.codomain.dims):
            rows = T.codomain.block_slice(b)
            Tab = T.matrix[rows, cols].reshape(nb, nb, na, na)  # [k, l, i, j]
            C = Tab.transpose(2, 0, 3, 1).reshape(na * nb, na * nb)
            C = (C + C.conj().T) / 2
            out.append((a, b, C, float(np.linalg.eigvalsh(C).min())))
    return out


def _min_output_eigenvalue(T: ChannelOperator, restarts: int = 6) -> float:
    """Search for ``min_v lambda_min(T(v v*))`` over unit vectors of each domain block."""
    rng = np.random.default_rng(7)
    best = np.inf
    for a, na in enumerate(T.domain.dims):

        def f(params, a=a, na=na):
            v = params[:na] + 1j * params[na:]
            v = v / max(np.linalg.norm(v), 1e-300)
            blocks = [np.zeros((n, n), dtype=complex) for n in T.domain.dims]
            blocks[a] = np.outer(v, v.conj())
            y = T(T.domain.element(blocks))
            return float(min(np.linalg.eigvalsh((b + b.conj().T) / 2).min() for b in y.blocks))

        starts = [np.concatenate([e, np.zeros(na)]) for e in np.eye(na)]
        starts += [rng.normal(size=2 * na) for _ in range(restarts)]
        for s in starts:
            val = f(s)
            if na > 1:
                res = minimize(f, s, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 2000})
                val = min(val, float(res.fun))
            best = min(best, val)
    return best


# -- constructors ---------------------------------------------------------


def identity_channel(alg: TraceAlgebra) -> ChannelOperator:
    return ChannelOperator(alg, alg, np.eye(alg.dim), label="id")


def unitary_conjugation(alg: TraceAlgebra, u: AlgElement | Sequence[np.ndarray], label: str = "Ad") -> ChannelOperator:
    """``Ad_u(x) = u x u*`` for a blockwise unitary ``u``."""
    blocks = u.blocks if isinstance(u, AlgElement) else [np.asarray(b, dtype=complex) for b in u]
    if len(blocks) != len(alg.blocks):
        raise StructuralError("unitary must have one block per algebra block")
    for b in blocks:
        if np.abs(b @ b.conj().T - np.eye(b.shape[0])).max() > 1e-10:
            raise DomainError("conjugating matrix is not unitary")
    M = np.zeros((alg.dim, alg.dim), dtype=complex)
    for k, b in enumerate(blocks):
        s = alg.block_slice(k)
        # row-major vec(u x u*) = (u kron conj(u)) vec(x)
        M[s, s] = np.kron(b, b.conj())
    return ChannelOperator(alg, alg, M, label=label)


def permutation_automorphism(alg: TraceAlgebra, perm: Sequence[int], label: str = "sigma") -> ChannelOperator:
    """Automorphism moving block ``k`` to block ``perm[k]``.

    Permuted blocks must share dimension and weight, so the trace is
    preserved. On a diagonal algebra this is the classical push-forward
    ``x -> x o perm^{-1}``.
    """
    perm = list(perm)
    if sorted(perm) != list(range(len(alg.blocks))):
        raise DomainError(f"{perm} is not a permutation of the blocks")
    M = np.zeros((alg.dim, alg.dim))
    for k, target in enumerate(perm):
        if alg.blocks[k] != alg.blocks[target]:
            raise DomainError("permutation mixes blocks of different dimension or weight")
        src, dst = alg.block_slice(k), alg.block_slice(target)
        M[dst, src] = np.eye(alg.dims[k] ** 2)
    return ChannelOperator(alg, alg, M, label=label)


def transpose_map(alg: TraceAlgebra) -> ChannelOperator:
    return ChannelOperator.from_function(
        alg, alg, lambda x: alg.element([b.T for b in x.blocks]), label="transpose"
    )


def trace_replacement(alg: TraceAlgebra) -> ChannelOperator:
    """``x -> tau(x) / tau(1) * 1``."""
    one = alg.identity()
    return ChannelOperator.from_function(
        alg, alg, lambda x: one * (trace(alg, x) / alg.unit_trace), label="tau"
    )


def convex_combination(maps: Sequence[ChannelOperator], weights: Sequence[float], label: str = "mix") -> ChannelOperator:
    weights = np.asarray(weights, dtype=float)
    if len(maps) != len(weights) or len(maps) == 0:
        raise StructuralError("one weight per map required")
    if weights.min() < 0 or abs(weights.sum() - 1) > 1e-12:
        raise DomainError("weights must be a probability vector")
    M = sum(w * T.matrix for w, T in zip(weights, maps))
    first = maps[0]
    for T in maps[1:]:
        first._same_shape(T)
    return ChannelOperator(first.domain, first.codomain, M, label=label)


def random_markov_channel(alg: TraceAlgebra, rng: np.random.Generator, terms: int = 3) -> ChannelOperator:
    """Random convex combination of unitary conjugations (unital, CP, trace-preserving)."""
    from .algebra import random_unitary

    maps = [unitary_conjugation(alg, random_unitary(alg, rng)) for _ in range(terms)]
    w = rng.dirichlet(np.ones(terms))
    w = w / w.sum()
    return convex_combination(maps, w, label="R")


# -- certification --------------------------------------------------------


@dataclass(frozen=True)
class MarkovReport:
    unital: bool
    trace_preserving: bool
    positive: bool
    completely_positive: bool
    choi_min_eigenvalue: float
    contraction_inf: bool
    contraction_l1: bool

    @property
    def markov(self) -> bool:
        return self.unital and self.trace_preserving and self.positive

    @property
    def all_flags(self) -> bool:
        return all(
            (self.unital, self.trace_preserving, self.positive, self.completely_positive,
             self.contraction_inf, self.contraction_l1)
        )


def certify_markov(T: ChannelOperator) -> MarkovReport:
    """Unitality, trace preservation, positivity, CP and contraction flags.

    For a positive map the operator-norm bound is ``||T(1)||`` (Russo-Dye)
    and the L1 bound is ``||T*(1)||`` (duality), so both contractions are
    read off the images of the unit.
    """
    positive = T.is_positive
    t1 = T(T.domain.identity()).norm()
    ts1 = T.adjoint()(T.codomain.identity()).norm()
    return MarkovReport(
        unital=T.is_unital,
        trace_preserving=T.is_trace_preserving,
        positive=positive,
        completely_positive=T.is_completely_positive,
        choi_min_eigenvalue=T.choi_min_eigenvalue,
        contraction_inf=positive and t1 <= 1 + FLAG_TOL,
        contraction_l1=positive and ts1 <= 1 + FLAG_TOL,
    )


@dataclass
class DunfordSchwartzReport:
    samples: int
    max_inf_ratio: float = 0.0
    max_l1_ratio: float = 0.0
    max_majorization_excess: float = 0.0
    max_orlicz_excess: dict[str, float] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        tol = 1e-10
        return (
            self.max_inf_ratio <= 1 + tol
            and self.max_l1_ratio <= 1 + tol
            and self.max_majorization_excess <= tol
            and all(v <= tol for v in self.max_orlicz_excess.values())
        )


def dunford_schwartz_check(
    T: ChannelOperator,
    samples: Iterable[AlgElement],
    orlicz: Sequence = (),
) -> DunfordSchwartzReport:
    """Sampled Dunford-Schwartz inequalities and their interpolation consequences.

    Checks ``||Tx||_inf <= ||x||_inf``, ``||Tx||_1 <= ||x||_1``, the
    majorization ``int_0^t mu(Tx) <= int_0^t mu(x)`` at every breakpoint and
    ``||Tx||_Phi <= ||x||_Phi`` for each Orlicz function in ``orlicz``.
    Excess values are relative to the size of ``x``.
    """
    from .orlicz import orlicz_norm, s_numbers

    rep = DunfordSchwartzReport(samples=0)
    rep.max_orlicz_excess = {phi.name: 0.0 for phi in orlicz}
    A, B = T.domain, T.codomain
    for x in samples:
        y = T(x)
        rep.samples += 1
        ninf, n1 = lp_norm(A, x, np.inf), lp_norm(A, x, 1)
        if ninf > 0:
            rep.max_inf_ratio = max(rep.max_inf_ratio, lp_norm(B, y, np.inf) / ninf)
        if n1 > 0:
            rep.max_l1_ratio = max(rep.max_l1_ratio, lp_norm(B, y, 1) / n1)
        f, g = s_numbers(B, y), s_numbers(A, x)
        ts = np.union1d(f.breakpoints, g.breakpoints)
        excess = max(f.integral(t) - g.integral(t) for t in ts)
        rep.max_majorization_excess = max(rep.max_majorization_excess, excess / max(n1, 1e-300))
        for phi in orlicz:
            nx = orlicz_norm(A, x, phi)
            if nx > 0:
                ex = (orlicz_norm(B, y, phi) - nx) / nx
                rep.max_orlicz_excess[phi.name] = max(rep.max_orlicz_excess[phi.name], ex)
    return rep


@dataclass(frozen=True)
class KadisonReport:
    samples: int
    worst_min_eigenvalue: float

    @property
    def holds(self) -> bool:
        return self.worst_min_eigenvalue >= -1e-9


def kadison_check(T: ChannelOperator, samples: Iterable[AlgElement]) -> KadisonReport:
    """Checks ``T(x)* T(x) <= T(x* x)`` on samples for unital CP ``T``."""
    if not (T.is_unital and T.is_completely_positive):
        raise HypothesisNotMet("Kadison-Schwarz check needs a unital completely positive map")
    worst, count = np.inf, 0
    for x in samples:
        tx = T(x)
        d = T(x.H @ x) - tx.H @ tx
        worst = min(worst, float(d.eigvalsh().min()))
        count += 1
    return KadisonReport(count, worst)


# -- factorizations ------------------------------------------------------


@dataclass(frozen=True)
class Factorization:
    """Dilation data ``T = E_hat o Ad_u o iota`` through ``algebra (x) ancilla``.

    ``iota(x) = x (x) 1`` and ``E_hat = id (x) tau_ancilla`` with the
    ancilla trace normalized; ``unitary`` lives in the tensor product.
    """

    algebra: TraceAlgebra
    ancilla: TraceAlgebra
    unitary: AlgElement

    def __post_init__(self):
        if not self.ancilla.normalized:
            raise DomainError("ancilla trace must be normalized")
        if self.unitary.algebra != self.enlarged:
            raise StructuralError("unitary does not live in algebra (x) ancilla")

    @property
    def enlarged(self) -> TraceAlgebra:
        return self.algebra.tensor(self.ancilla)

    @property
    def ancilla_dim(self) -> int:
        return self.ancilla.dim

    def embedding(self) -> ChannelOperator:
        R = self.enlarged

        def iota(x: AlgElement) -> AlgElement:
            return R.element([np.kron(xb, np.eye(a)) for xb in x.blocks for a in self.ancilla.dims])

        return ChannelOperator.from_function(self.algebra, R, iota, label="iota")

    def expectation(self) -> ChannelOperator:
        R = self.enlarged
        anc = self.ancilla

        def e_hat(z: AlgElement) -> AlgElement:
            out, pos = [], 0
            for n in self.algebra.dims:
                acc = np.zeros((n, n), dtype=complex)
                for a, v in anc.blocks:
                    zb = z.blocks[pos].reshape(n, a, n, a)
                    acc = acc + v * np.einsum("iaja->ij", zb)
                    pos += 1
                out.append(acc)
            return self.algebra.element(out)

        return ChannelOperator.from_function(R, self.algebra, e_hat, label="E_hat")


def factorized_channel(f: Factorization) -> ChannelOperator:
    """Compose ``E_hat o Ad_u o iota`` and certify the Markov flags."""
    ad = unitary_conjugation(f.enlarged, f.unitary, label="Ad_u")
    T = f.expectation() @ ad @ f.embedding()
    T = ChannelOperator(f.algebra, f.algebra, T.matrix, label="T_f")
    T.factorization = f
    rep = certify_markov(T)
    if not (rep.markov and rep.completely_positive):
        raise DomainError(f"factorization does not define a Markov operator: {rep}")
    return T


# -- Rota alternating sequence ------------------------------------------


@dataclass
class RotaResult:
    forward: list[AlgElement]      # T^n (T*)^n x, n = 0..N
    mirrored: list[AlgElement]     # (T*)^n T^n x, n = 0..N
    increments: list[float]        # ||A_{n+1} x - A_n x||_inf for the mirrored sequence
    expectation_residuals: list[float] = field(default_factory=list)


def rota_sequence(
    T: ChannelOperator,
    x: AlgElement,
    N: int,
    expectation: ChannelOperator | None = None,
    nested: Sequence[ChannelOperator] | None = None,
    tol: float = 1e-9,
) -> RotaResult:
    """Iterate ``T^n (T*)^n x`` and ``(T*)^n T^n x`` for ``n = 0..N``.

    When ``expectation`` and ``nested = [E_1, ..., E_N]`` are supplied, the
    identity ``(T*)^n T^n x = E(E_n x)`` is checked at every ``n >= 1`` and a
    mismatch above ``tol`` raises :class:`InvariantError`.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if T.domain != T.codomain:
        raise StructuralError("Rota sequence needs an endomorphism")
    Ts = T.adjoint()
    A, At = T.matrix, Ts.matrix
    v = x.vec()
    fwd, mir = [v], [v]
    down, up = v, v  # (T*)^n x and T^n x
    alg = T.domain
    powers_up, powers_down = [v], [v]
    for _ in range(N):
        down = At @ down
        up = A @ up
        powers_down.append(down)
        powers_up.append(up)
    for n in range(1, N + 1):
        f = powers_down[n]
        m = powers_up[n]
        for _ in range(n):
            f = A @ f
            m = At @ m
        fwd.append(f)
        mir.append(m)
    forward = [alg.from_vector(f) for f in fwd]
    mirrored = [alg.from_vector(m) for m in mir]
    increments = [(mirrored[n + 1] - mirrored[n]).norm() for n in range(N)]
    res = RotaResult(forward, mirrored, increments)
    if expectation is not None and nested is not None:
        if len(nested) < N:
            raise DomainError("need one nested expectation per n")
        for n in range(1, N + 1):
            target = expectation(nested[n - 1](x))
            r = (mirrored[n] - target).norm()
            res.expectation_residuals.append(r)
            if r > tol:
                raise InvariantError(f"(T*)^{n} T^{n} x differs from E(E_{n} x) by {r:.3e}")
    return res
