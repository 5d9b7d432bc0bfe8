"""Finite-dimensional tracial von Neumann algebras.

An algebra is a direct sum of full matrix blocks ``M_{n_1} + ... + M_{n_K}``
with the faithful trace ``tau(x) = sum_k w_k Tr(x_k)``. Elements are stored
blockwise; the flattened *coordinate space* concatenates the row-major
entries of all blocks and carries the inner product ``<x, y> = tau(y* x)``,
whose Gram matrix is diagonal (``w_k`` repeated ``n_k**2`` times).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, InvariantError, StructuralError

if TYPE_CHECKING:
    from .channels import ChannelOperator

NORMALIZATION_TOL = 1e-12
SELF_ADJOINT_TOL = 1e-10
POSITIVITY_TOL = 1e-10
EIGEN_MERGE_TOL = 1e-10
KERNEL_CUTOFF = 1e-9
CLOSURE_TOL = 1e-9
ORTHONORMAL_TOL = 1e-10


@dataclass(frozen=True)
class TraceAlgebra:
    """Direct sum of matrix blocks with a weighted trace.

    ``blocks`` is a sequence of ``(block_dim, weight)`` pairs. With
    ``normalized=True`` the trace of the unit must equal one.
    """

    blocks: tuple[tuple[int, float], ...]
    normalized: bool = False

    def __post_init__(self):
        blocks = tuple((int(n), float(w)) for n, w in self.blocks)
        if not blocks:
            raise StructuralError("an algebra needs at least one block")
        for n, w in blocks:
            if n < 1:
                raise DomainError(f"block dimension must be >= 1, got {n}")
            if not (w > 0 and np.isfinite(w)):
                raise DomainError(f"block weight must be positive, got {w}")
        object.__setattr__(self, "blocks", blocks)
        if self.normalized:
            total = sum(n * w for n, w in blocks)
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise DomainError(f"normalized algebra has tau(1) = {total!r}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def matrix(cls, n: int, normalized: bool = True) -> "TraceAlgebra":
        """``M_n`` with the normalized (default) or standard trace."""
        return cls(((n, 1.0 / n if normalized else 1.0),), normalized=normalized)

    @classmethod
    def diagonal(cls, n_points: int, weights: Sequence[float] | None = None) -> "TraceAlgebra":
        """Commutative algebra of functions on ``n_points`` points."""
        if weights is None:
            weights = [1.0 / n_points] * n_points
        if len(weights) != n_points:
            raise StructuralError("one weight per point required")
        normalized = abs(sum(weights) - 1.0) <= NORMALIZATION_TOL
        return cls(tuple((1, w) for w in weights), normalized=normalized)

    def tensor(self, other: "TraceAlgebra") -> "TraceAlgebra":
        """Tensor product; block ``(b, c)`` has dim ``n_b a_c`` and weight ``w_b v_c``."""
        blocks = tuple((n * a, w * v) for n, w in self.blocks for a, v in other.blocks)
        return TraceAlgebra(blocks, normalized=self.normalized and other.normalized)

    def direct_sum(self, weights: Sequence[float]) -> "TraceAlgebra":
        """``len(weights)`` copies of this algebra, copy ``i`` scaled by ``weights[i]``."""
        blocks = tuple((n, p * w) for p in weights for n, w in self.blocks)
        normalized = self.normalized and abs(sum(weights) - 1.0) <= NORMALIZATION_TOL
        return TraceAlgebra(blocks, normalized=normalized)

    # -- structure --------------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.blocks)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for _, w in self.blocks)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        out, pos = [], 0
        for n in self.dims:
            out.append(pos)
            pos += n * n
        out.append(pos)
        return tuple(out)

    @property
    def dim(self) -> int:
        """Dimension of the coordinate space."""
        return self.offsets[-1]

    @cached_property
    def gram(self) -> np.ndarray:
        """Diagonal of the Gram matrix of ``<x, y> = tau(y* x)``."""
        g = np.concatenate([np.full(n * n, w) for n, w in self.blocks])
        g.setflags(write=False)
        return g

    @property
    def unit_trace(self) -> float:
        return float(sum(n * w for n, w in self.blocks))

    def block_slice(self, k: int) -> slice:
        return slice(self.offsets[k], self.offsets[k + 1])

    # -- elements ---------------------------------------------------------

    def element(self, blocks: Sequence[np.ndarray]) -> "AlgElement":
        return AlgElement(self, blocks)

    def from_vector(self, v: np.ndarray) -> "AlgElement":
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise StructuralError(f"expected coordinate vector of length {self.dim}, got {v.shape}")
        return AlgElement(
            self,
            [v[self.block_slice(k)].reshape(n, n) for k, n in enumerate(self.dims)],
        )

    def identity(self) -> "AlgElement":
        return AlgElement(self, [np.eye(n) for n in self.dims])

    def zeros(self) -> "AlgElement":
        return AlgElement(self, [np.zeros((n, n)) for n in self.dims])

    def scalar(self, c: complex) -> "AlgElement":
        return self.identity() * c

    def diag(self, values: Sequence[complex]) -> "AlgElement":
        """Element whose diagonal entries, read across blocks in order, are ``values``."""
        values = list(values)
        if len(values) != sum(self.dims):
            raise StructuralError(f"need {sum(self.dims)} diagonal values, got {len(values)}")
        blocks, pos = [], 0
        for n in self.dims:
            blocks.append(np.diag(np.asarray(values[pos:pos + n], dtype=complex)))
            pos += n
        return AlgElement(self, blocks)

    def basis(self) -> list["AlgElement"]:
        """Matrix units, in coordinate order."""
        eye = np.eye(self.dim)
        return [self.from_vector(eye[i]) for i in range(self.dim)]


class AlgElement:
    """Immutable element of a :class:`TraceAlgebra`."""

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: TraceAlgebra, blocks: Sequence[np.ndarray]):
        blocks = tuple(np.array(b, dtype=complex) for b in blocks)
        if len(blocks) != len(algebra.blocks):
            raise StructuralError(
                f"algebra has {len(algebra.blocks)} blocks, element has {len(blocks)}"
            )
        for b, n in zip(blocks, algebra.dims):
            if b.shape != (n, n):
                raise StructuralError(f"block shape {b.shape} does not match dim {n}")
            b.setflags(write=False)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "blocks", blocks)

    def __setattr__(self, name, value):
        raise AttributeError("AlgElement is immutable")

    def __repr__(self):
        return f"AlgElement(dims={self.algebra.dims}, blocks={[b.tolist() for b in self.blocks]})"

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "AlgElement"):
        if not isinstance(other, AlgElement):
            return NotImplemented
        if other.algebra != self.algebra:
            raise StructuralError("elements belong to different algebras")
        return None

    def __add__(self, other):
        if isinstance(other, AlgElement):
            self._check(other)
            return AlgElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, AlgElement):
            self._check(other)
            return AlgElement(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])
        return NotImplemented

    def __neg__(self):
        return AlgElement(self.algebra, [-a for a in self.blocks])

    def __mul__(self, c):
        if isinstance(c, AlgElement):
            return NotImplemented
        return AlgElement(self.algebra, [a * c for a in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, c):
        return AlgElement(self.algebra, [a / c for a in self.blocks])

    def __matmul__(self, other):
        if isinstance(other, AlgElement):
            self._check(other)
            return AlgElement(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])
        return NotImplemented

    @property
    def H(self) -> "AlgElement":
        """Adjoint ``x*``."""
        return AlgElement(self.algebra, [a.conj().T for a in self.blocks])

    def vec(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    # -- predicates -------------------------------------------------------

    def is_self_adjoint(self, tol: float = SELF_ADJOINT_TOL) -> bool:
        return all(np.abs(b - b.conj().T).max(initial=0.0) <= tol for b in self.blocks)

    def eigvalsh(self) -> np.ndarray:
        """All eigenvalues (with multiplicity, unweighted) of the hermitian part."""
        return np.concatenate([np.linalg.eigvalsh(_herm(b)) for b in self.blocks])

    def is_positive(self, tol: float = POSITIVITY_TOL) -> bool:
        return self.is_self_adjoint() and self.eigvalsh().min() >= -tol

    def norm(self) -> float:
        """Operator norm."""
        return float(max(np.linalg.norm(b, 2) for b in self.blocks))

    def allclose(self, other: "AlgElement", tol: float = 1e-10) -> bool:
        self._check(other)
        return (self - other).norm() <= tol

    # -- functional calculus ---------------------------------------------

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> "AlgElement":
        """``f(x)`` for self-adjoint ``x``; ``f`` acts on arrays of eigenvalues."""
        if not self.is_self_adjoint():
            raise DomainError("functional calculus requires a self-adjoint element")
        out = []
        for b in self.blocks:
            lam, v = np.linalg.eigh(_herm(b))
            out.append((v * np.asarray(f(lam), dtype=complex)) @ v.conj().T)
        return AlgElement(self.algebra, out)

    def abs(self) -> "AlgElement":
        """``|x| = (x* x)^{1/2}`` via the singular value decomposition."""
        out = []
        for b in self.blocks:
            _, s, vh = np.linalg.svd(b)
            out.append((vh.conj().T * s) @ vh)
        return AlgElement(self.algebra, out)


def _herm(b: np.ndarray) -> np.ndarray:
    return (b + b.conj().T) / 2


def _check_member(alg: TraceAlgebra, x: AlgElement):
    if not isinstance(x, AlgElement) or x.algebra != alg:
        raise StructuralError("element does not belong to the given algebra")


def trace(alg: TraceAlgebra, x: AlgElement) -> complex:
    """``tau(x) = sum_k w_k Tr(x_k)``."""
    _check_member(alg, x)
    return complex(sum(w * np.trace(b) for w, b in zip(alg.weights, x.blocks)))


def inner(alg: TraceAlgebra, x: AlgElement, y: AlgElement) -> complex:
    """``<x, y> = tau(y* x)``."""
    _check_member(alg, x)
    _check_member(alg, y)
    return complex(np.vdot(y.vec() * alg.gram, x.vec()))


def lp_norm(alg: TraceAlgebra, x: AlgElement, p: float) -> float:
    """``||x||_p = tau(|x|^p)^{1/p}``; ``p = inf`` gives the operator norm."""
    _check_member(alg, x)
    if not p >= 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p}")
    svals = [np.linalg.svd(b, compute_uv=False) for b in x.blocks]
    if np.isinf(p):
        return float(max(s.max(initial=0.0) for s in svals))
    total = sum(w * np.sum(s ** p) for w, s in zip(alg.weights, svals))
    return float(total ** (1.0 / p))


# -- spectral calculus ----------------------------------------------------


def spectral_decomposition(x: AlgElement) -> list[tuple[float, AlgElement]]:
    """Eigenvalues (ascending, merged within 1e-10) with their spectral projections."""
    if not x.is_self_adjoint():
        raise DomainError("spectral decomposition requires a self-adjoint element")
    alg = x.algebra
    entries = []  # (eigenvalue, block index, eigenvector)
    for k, b in enumerate(x.blocks):
        lam, v = np.linalg.eigh(_herm(b))
        entries.extend((float(l), k, v[:, i]) for i, l in enumerate(lam))
    entries.sort(key=lambda e: e[0])

    clusters: list[list] = []
    for e in entries:
        if clusters and e[0] - clusters[-1][-1][0] <= EIGEN_MERGE_TOL:
            clusters[-1].append(e)
        else:
            clusters.append([e])

    out = []
    for cl in clusters:
        blocks = [np.zeros((n, n), dtype=complex) for n in alg.dims]
        for _, k, v in cl:
            blocks[k] = blocks[k] + np.outer(v, v.conj())
        out.append((float(np.mean([e[0] for e in cl])), AlgElement(alg, blocks)))
    return out


_INTERVAL_RE = re.compile(r"^\s*([\[(])\s*([^,]+?)\s*,\s*([^\])]+?)\s*([\])])\s*$")


@dataclass(frozen=True)
class Interval:
    """Real interval with open or closed ends, e.g. ``Interval.parse("(0, 2]")``."""

    lo: float
    hi: float
    closed_lo: bool = False
    closed_hi: bool = True

    @classmethod
    def parse(cls, text: str) -> "Interval":
        m = _INTERVAL_RE.match(text)
        if not m:
            raise DomainError(f"cannot parse interval {text!r}")
        lb, lo, hi, rb = m.groups()
        return cls(float(lo), float(hi), lb == "[", rb == "]")

    def contains(self, lam: np.ndarray, tol: float = EIGEN_MERGE_TOL) -> np.ndarray:
        lam = np.asarray(lam)
        above = lam >= self.lo - tol if self.closed_lo else lam > self.lo + tol
        below = lam <= self.hi + tol if self.closed_hi else lam < self.hi - tol
        return above & below


def spectral_projection(x: AlgElement, interval: Interval | str) -> AlgElement:
    """Sum of the spectral projections of ``x`` with eigenvalue in ``interval``."""
    if isinstance(interval, str):
        interval = Interval.parse(interval)
    return x.apply(lambda lam: interval.contains(lam).astype(float))


def half_projection(b: AlgElement, alg: TraceAlgebra, return_inverse: bool = False):
    """``e = chi_[1/2, 1](b)`` and its trace defect ``tau(1 - e)``.

    For ``0 <= b <= 1`` the defect is at most ``2 tau(1 - b)``. With
    ``return_inverse`` also returns ``b_minus`` with ``||b_minus|| <= 2`` and
    ``e = b b_minus``.
    """
    _check_member(alg, b)
    if not b.is_self_adjoint():
        raise DomainError("half_projection needs a self-adjoint element")
    lam = b.eigvalsh()
    if lam.min() < -POSITIVITY_TOL or lam.max() > 1 + POSITIVITY_TOL:
        raise DomainError("half_projection needs 0 <= b <= 1")
    e = spectral_projection(b, Interval(0.5, 1.0, True, True))
    one = alg.identity()
    defect = trace(alg, one - e).real
    bound = 2 * trace(alg, one - b).real
    if defect > bound + 1e-10:
        raise InvariantError(f"tau(1-e) = {defect} exceeds 2 tau(1-b) = {bound}")
    if not return_inverse:
        return e, defect
    half = Interval(0.5, np.inf, True, True)
    b_minus = b.apply(lambda l: np.where(half.contains(l), 1.0 / np.maximum(l, 0.5), 0.0))
    return e, defect, b_minus


# -- subalgebras and conditional expectations ------------------------------


def _to_orthonormal(alg: TraceAlgebra, v: np.ndarray) -> np.ndarray:
    """Coordinates -> coordinates in which the trace inner product is Euclidean."""
    s = np.sqrt(alg.gram)
    return v * (s if v.ndim == 1 else s[:, None])


def _from_orthonormal(alg: TraceAlgebra, v: np.ndarray) -> np.ndarray:
    s = np.sqrt(alg.gram)
    return v / (s if v.ndim == 1 else s[:, None])


class Subalgebra:
    """Unital *-subalgebra given by a trace-orthonormal basis.

    The constructor certifies orthonormality, the unit, and closure under
    adjoint and product; failures raise :class:`DomainError`.
    """

    def __init__(self, parent: TraceAlgebra, basis: Sequence[AlgElement]):
        self.parent = parent
        self.basis = tuple(basis)
        if not self.basis:
            raise DomainError("a unital subalgebra has at least one basis element")
        for b in self.basis:
            _check_member(parent, b)
        B = np.stack([b.vec() for b in self.basis], axis=1)
        self._onb = _to_orthonormal(parent, B)
        gram = self._onb.conj().T @ self._onb
        if np.abs(gram - np.eye(len(self.basis))).max() > ORTHONORMAL_TOL:
            raise DomainError("basis is not orthonormal for tau(y* x)")
        self._validate_closure()

    @classmethod
    def from_spanning(cls, parent: TraceAlgebra, elements: Iterable[AlgElement]) -> "Subalgebra":
        """Orthonormalize a spanning set (rank cutoff 1e-9) and certify it."""
        V = np.stack([_to_orthonormal(parent, e.vec()) for e in elements], axis=1)
        u, s, _ = np.linalg.svd(V, full_matrices=False)
        rank = int(np.sum(s > KERNEL_CUTOFF * max(1.0, s.max(initial=0.0))))
        return cls(parent, [parent.from_vector(_from_orthonormal(parent, u[:, i])) for i in range(rank)])

    @classmethod
    def whole(cls, parent: TraceAlgebra) -> "Subalgebra":
        eye = np.eye(parent.dim)
        return cls(parent, [parent.from_vector(_from_orthonormal(parent, eye[i])) for i in range(parent.dim)])

    @property
    def dim(self) -> int:
        return len(self.basis)

    def residual(self, x: AlgElement) -> float:
        """Trace-norm 2 distance from ``x`` to the subalgebra."""
        v = _to_orthonormal(self.parent, x.vec())
        r = v - self._onb @ (self._onb.conj().T @ v)
        return float(np.linalg.norm(r))

    def contains(self, x: AlgElement, tol: float = CLOSURE_TOL) -> bool:
        return self.residual(x) <= tol

    def _validate_closure(self):
        if not self.contains(self.parent.identity()):
            raise DomainError("subalgebra does not contain the unit")
        for b in self.basis:
            if not self.contains(b.H):
                raise DomainError("subalgebra is not closed under adjoint")
        for a in self.basis:
            for b in self.basis:
                if not self.contains(a @ b):
                    raise DomainError("subalgebra is not closed under product")

    def projection_matrix(self) -> np.ndarray:
        """Coordinate matrix of the trace-orthogonal projection."""
        P = self._onb @ self._onb.conj().T
        s = np.sqrt(self.parent.gram)
        return P * (1.0 / s)[:, None] * s[None, :]


def fixed_point_subalgebra(maps: Sequence["ChannelOperator"], alg: TraceAlgebra) -> Subalgebra:
    """Joint fixed points ``{x : alpha(x) = x for all alpha in maps}``.

    Each map must be a *-automorphism of ``alg``. The fixed space is the
    common kernel of ``alpha - id`` (singular-value cutoff 1e-9).
    """
    if not maps:
        return Subalgebra.whole(alg)
    rows = []
    s = np.sqrt(alg.gram)
    for T in maps:
        if T.domain != alg or T.codomain != alg:
            raise StructuralError("map does not act on the given algebra")
        if not T.is_automorphism:
            raise DomainError(f"map {T.label!r} is not a *-automorphism")
        A = T.matrix * s[:, None] / s[None, :]
        rows.append(A - np.eye(alg.dim))
    K = np.vstack(rows)
    _, sv, vh = np.linalg.svd(K)
    sv = np.concatenate([sv, np.zeros(alg.dim - sv.size)])
    null = vh[sv <= KERNEL_CUTOFF].conj().T
    basis = [alg.from_vector(_from_orthonormal(alg, null[:, i])) for i in range(null.shape[1])]
    return Subalgebra(alg, basis)


def conditional_expectation(sub: Subalgebra) -> "ChannelOperator":
    """Trace-preserving conditional expectation onto ``sub``."""
    from .channels import ChannelOperator

    if not isinstance(sub, Subalgebra):
        raise DomainError("conditional_expectation needs a Subalgebra")
    alg = sub.parent
    E = ChannelOperator(alg, alg, sub.projection_matrix(), label="E")
    P = E.matrix
    tr = alg.gram * alg.identity().vec()
    failures = []
    if np.abs(P @ P - P).max() > CLOSURE_TOL:
        failures.append("idempotent")
    if np.abs(P - E.adjoint().matrix).max() > CLOSURE_TOL:
        failures.append("self-adjoint")
    if np.abs(P @ alg.identity().vec() - alg.identity().vec()).max() > CLOSURE_TOL:
        failures.append("unital")
    if np.abs(tr @ P - tr).max() > CLOSURE_TOL:
        failures.append("trace-preserving")
    rng = np.random.default_rng(0)
    x = random_element(alg, rng)
    a, b = sub.basis[rng.integers(sub.dim)], sub.basis[rng.integers(sub.dim)]
    scale = 1 + a.norm() * b.norm() * x.norm()
    if (E(a @ x @ b) - a @ E(x) @ b).norm() > CLOSURE_TOL * scale:
        failures.append("bimodule")
    p = random_positive(alg, rng)
    if E(p).eigvalsh().min() < -CLOSURE_TOL * (1 + p.norm()):
        failures.append("positive")
    if failures:
        raise InvariantError(f"conditional expectation fails: {', '.join(failures)}")
    return E


# -- random sampling ------------------------------------------------------


def random_element(alg: TraceAlgebra, rng: np.random.Generator) -> AlgElement:
    return AlgElement(
        alg,
        [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for n in alg.dims],
    )


def random_self_adjoint(alg: TraceAlgebra, rng: np.random.Generator) -> AlgElement:
    x = random_element(alg, rng)
    return (x + x.H) / 2


def random_positive(alg: TraceAlgebra, rng: np.random.Generator) -> AlgElement:
    x = random_element(alg, rng)
    return x.H @ x


def random_effect(alg: TraceAlgebra, rng: np.random.Generator) -> AlgElement:
    """Random ``b`` with ``0 <= b <= 1``."""
    out = []
    for n in alg.dims:
        u = haar_unitary(n, rng)
        out.append((u * rng.uniform(size=n)) @ u.conj().T)
    return AlgElement(alg, out)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_unitary(alg: TraceAlgebra, rng: np.random.Generator) -> AlgElement:
    return AlgElement(alg, [haar_unitary(n, rng) for n in alg.dims])
