"""Orlicz functions, generalized singular numbers and Orlicz norms.

Singular-number functions are represented as right-continuous
nonincreasing :class:`StepFunction` objects. Everything that depends on a
test grid (convexity, doubling constant, splitting constant) reports the
grid point that decided the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .algebra import AlgElement, Interval, TraceAlgebra, _check_member, spectral_projection, trace
from .errors import DomainError, HypothesisNotMet, InvariantError, NumericError

DEFAULT_GRID = (1e-6, 1e6, 4000)
CONVEXITY_TOL = 1e-10
ORLICZ_RTOL = 1e-12
ORLICZ_MAX_ITER = 200


def log_grid(lo: float = DEFAULT_GRID[0], hi: float = DEFAULT_GRID[1], n: int = DEFAULT_GRID[2]) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def slope_differences(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Differences of consecutive divided-difference slopes.

    Nonnegative everywhere iff the piecewise-linear interpolant of
    ``(t, y)`` is convex, whatever the spacing of ``t``.
    """
    slopes = np.diff(y) / np.diff(t)
    return np.diff(slopes)


@dataclass(frozen=True)
class ConvexityReport:
    convex: bool
    worst: float
    witness: float


class OrliczFunction:
    """Convex nondecreasing ``Phi`` on ``[0, inf)`` with ``Phi(0) = 0``.

    ``func`` must accept numpy arrays. Construction validates the function on
    the default log grid and raises :class:`DomainError` on failure.
    """

    def __init__(
        self,
        name: str,
        func: Callable[[np.ndarray], np.ndarray],
        inverse: Callable[[np.ndarray], np.ndarray] | None = None,
        validate: bool = True,
    ):
        self.name = name
        self._func = func
        self.inverse = inverse
        if validate:
            self._validate()

    def __repr__(self):
        return f"OrliczFunction({self.name!r})"

    def __call__(self, t):
        with np.errstate(over="ignore"):
            return self._func(np.asarray(t, dtype=float))

    def _validate(self):
        if abs(float(self(0.0))) > 1e-300:
            raise DomainError(f"{self.name}: Phi(0) must be 0")
        t = log_grid()
        y = self(t)
        finite = np.isfinite(y)
        tf, yf = t[finite], y[finite]
        if np.any(np.diff(yf) < -1e-12 * np.maximum(1.0, np.abs(yf[1:]))):
            raise DomainError(f"{self.name}: not nondecreasing on the test grid")
        d = slope_differences(tf, yf)
        scale = np.maximum(1e-300, np.abs(np.diff(yf) / np.diff(tf))[1:])
        if np.any(d < -1e-12 * np.maximum(1.0, scale)):
            raise DomainError(f"{self.name}: not convex on the test grid")
        if not (y[-1] > 1 and y[-1] > y[len(y) // 2]):
            raise DomainError(f"{self.name}: does not grow to infinity on the test grid")

    # -- derived functions -----------------------------------------------

    def root(self, p: float) -> Callable[[np.ndarray], np.ndarray]:
        """``t -> Phi(t) ** (1/p)``."""
        return lambda t: np.power(self(t), 1.0 / p)

    def compose_sqrt(self) -> "OrliczFunction":
        """``t -> Phi(sqrt(t))``; an Orlicz function when ``Phi`` is 2-convex."""
        return OrliczFunction(f"{self.name}@sqrt", lambda t: self(np.sqrt(t)))

    @cached_property
    def delta2(self) -> "Delta2Report":
        return delta2_constant(self)

    def is_p_convex(self, p: float, grid: np.ndarray | None = None) -> bool:
        return p_convexity_check(self, p, grid).convex

    # -- factories ---------------------------------------------------------

    @classmethod
    def power(cls, p: float) -> "OrliczFunction":
        if p < 1:
            raise DomainError("t**p is an Orlicz function only for p >= 1")
        return cls(f"power:{p:g}", lambda t: np.power(t, p), inverse=lambda s: np.power(s, 1.0 / p))

    @classmethod
    def llogl(cls) -> "OrliczFunction":
        """``t log(1 + t)``."""
        return cls("llogl", lambda t: t * np.log1p(t))

    @classmethod
    def lloglpow(cls, s: float) -> "OrliczFunction":
        """``t log(1 + t) ** s``."""
        if s < 0:
            raise DomainError("exponent must be nonnegative")
        return cls(f"lloglpow:{s:g}", lambda t: t * np.power(np.log1p(t), s))

    @classmethod
    def exp_minus_one(cls) -> "OrliczFunction":
        return cls("exp", np.expm1, inverse=np.log1p)

    @classmethod
    def from_name(cls, spec: str) -> "OrliczFunction":
        """Parse ``power:p``, ``llogl``, ``lloglpow:s`` or ``exp``."""
        head, _, arg = spec.strip().partition(":")
        try:
            if head == "power" and arg:
                return cls.power(float(arg))
            if head == "llogl" and not arg:
                return cls.llogl()
            if head == "lloglpow" and arg:
                return cls.lloglpow(float(arg))
            if head == "exp" and not arg:
                return cls.exp_minus_one()
        except ValueError as exc:
            raise DomainError(f"bad Orlicz function {spec!r}: {exc}") from exc
        raise DomainError(f"unknown Orlicz function {spec!r}")


# -- step functions --------------------------------------------------------


class StepFunction:
    """Right-continuous nonincreasing step function on ``[0, inf)``.

    ``values[i]`` is taken on ``[breakpoints[i], breakpoints[i+1])`` and the
    function vanishes from ``breakpoints[-1]`` on.
    """

    def __init__(self, breakpoints, values):
        b = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1:
            raise DomainError("need len(breakpoints) == len(values) + 1")
        if b.size and b[0] != 0:
            raise DomainError("first breakpoint must be 0")
        if np.any(np.diff(b) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise DomainError("values must be nonnegative and nonincreasing")
        self.breakpoints = b
        self.values = v
        b.setflags(write=False)
        v.setflags(write=False)

    def __repr__(self):
        return f"StepFunction({self.breakpoints.tolist()}, {self.values.tolist()})"

    @classmethod
    def from_masses(cls, values, masses) -> "StepFunction":
        """Decreasing rearrangement of ``values`` carrying the given masses."""
        values = np.asarray(values, dtype=float)
        masses = np.asarray(masses, dtype=float)
        order = np.argsort(-values, kind="stable")
        v, m = values[order], masses[order]
        keep = m > 0
        v, m = v[keep], m[keep]
        # merge equal values so breakpoints stay strictly increasing
        merged_v, merged_m = [], []
        for val, mass in zip(v, m):
            if merged_v and abs(merged_v[-1] - val) <= 1e-15 * max(1.0, abs(val)):
                merged_m[-1] += mass
            else:
                merged_v.append(val)
                merged_m.append(mass)
        return cls(np.concatenate([[0.0], np.cumsum(merged_m)]), merged_v)

    @property
    def total_measure(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        padded = np.concatenate([self.values, [0.0]])
        out = padded[np.clip(idx, 0, self.values.size)]
        return float(out) if out.ndim == 0 else out

    def integral(self, t: float) -> float:
        """``int_0^t f(s) ds``."""
        if t <= 0:
            return 0.0
        lengths = np.clip(np.minimum(self.breakpoints[1:], t) - self.breakpoints[:-1], 0.0, None)
        return float(lengths @ self.values)

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> "StepFunction":
        """``f o self`` for a nondecreasing ``f`` with ``f(0) = 0``."""
        return StepFunction(self.breakpoints, np.asarray(f(self.values), dtype=float))


def _singular_data(alg: TraceAlgebra, x: AlgElement) -> tuple[np.ndarray, np.ndarray]:
    """Singular values of every block and the trace mass of each."""
    _check_member(alg, x)
    vals, masses = [], []
    for b, w in zip(x.blocks, alg.weights):
        s = np.linalg.svd(b, compute_uv=False)
        vals.append(s)
        masses.append(np.full(s.size, w))
    return np.concatenate(vals), np.concatenate(masses)


def s_numbers(alg: TraceAlgebra, x: AlgElement) -> StepFunction:
    """Generalized singular numbers ``t -> mu_t(x)``."""
    vals, masses = _singular_data(alg, x)
    return StepFunction.from_masses(vals, masses)


def k_functional(alg: TraceAlgebra, x: AlgElement, t: float) -> float:
    """``int_0^t mu_s(x) ds``."""
    if t <= 0:
        raise DomainError("t must be positive")
    return s_numbers(alg, x).integral(t)


def k_decomposition(alg: TraceAlgebra, x: AlgElement, t: float) -> tuple[AlgElement, AlgElement, float]:
    """Minimizing split ``x = y + z`` for ``tau(|y|) + t ||z||_inf``.

    Thresholds the singular values at ``mu_t(x)``: ``y`` keeps the excess
    above the level and ``z`` the part below it, both with the phases of
    ``x``. Returns ``(y, z, tau(|y|) + t ||z||_inf)``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    level = s_numbers(alg, x)(t)
    ys, zs = [], []
    for b in x.blocks:
        W, s, Vh = np.linalg.svd(b)
        ys.append((W * np.maximum(s - level, 0.0)) @ Vh)
        zs.append((W * np.minimum(s, level)) @ Vh)
    y, z = alg.element(ys), alg.element(zs)
    value = trace(alg, y.abs()).real + t * z.norm()
    return y, z, float(value)


# -- Hardy-Littlewood-Polya -------------------------------------------------


@dataclass(frozen=True)
class HLPReport:
    max_violation: float
    witness: float
    breakpoints: int

    @property
    def holds(self) -> bool:
        return self.max_violation <= 1e-10


def _union_breakpoints(f: StepFunction, g: StepFunction) -> np.ndarray:
    return np.union1d(f.breakpoints, g.breakpoints)[1:]


def check_hlp(f: StepFunction, g: StepFunction, phi: OrliczFunction, tol: float = 1e-10) -> HLPReport:
    """Check ``int_0^t Phi(f) <= int_0^t Phi(g)`` given ``int_0^t f <= int_0^t g``.

    Both sides are piecewise linear in ``t`` between the merged breakpoints,
    so checking at the breakpoints covers every ``t``. The violation is
    relative to ``max(1, int_0^t Phi(g))``. A failed majorization hypothesis
    raises :class:`HypothesisNotMet`.
    """
    ts = _union_breakpoints(f, g)
    for t in ts:
        gi = g.integral(t)
        if f.integral(t) > gi + tol * max(1.0, gi):
            raise HypothesisNotMet(f"majorization fails at t={t:.6g}")
    pf, pg = f.apply(phi), g.apply(phi)
    worst, witness = -np.inf, 0.0
    for t in ts:
        rhs = pg.integral(t)
        v = (pf.integral(t) - rhs) / max(1.0, rhs)
        if v > worst:
            worst, witness = v, float(t)
    return HLPReport(max(worst, 0.0) if ts.size else 0.0, witness, int(ts.size))


# -- Orlicz norms -------------------------------------------------------------


def _modular(values: np.ndarray, masses: np.ndarray, phi: OrliczFunction, lam: float) -> float:
    out = float(masses @ phi(values / lam))
    if np.isnan(out):
        raise NumericError(f"{phi.name} produced NaN")
    return out


def luxemburg_norm(values, masses, phi: OrliczFunction) -> float:
    """``inf{lam > 0 : sum masses * Phi(values / lam) <= 1}`` by bisection."""
    values = np.abs(np.asarray(values, dtype=float))
    masses = np.asarray(masses, dtype=float)
    keep = (values > 0) & (masses > 0)
    values, masses = values[keep], masses[keep]
    if values.size == 0:
        return 0.0
    top = float(values.max())
    hi = top
    for _ in range(ORLICZ_MAX_ITER):
        if _modular(values, masses, phi, hi) <= 1:
            break
        hi *= 2
    else:
        raise NumericError("no feasible upper bracket for the Orlicz norm")
    lo = hi / 2
    for _ in range(ORLICZ_MAX_ITER):
        m = _modular(values, masses, phi, lo)
        if m > 1:
            break
        if not np.isfinite(m):
            raise NumericError(f"{phi.name} is not finite near the bracket")
        hi, lo = lo, lo / 2
    else:
        raise NumericError("no infeasible lower bracket for the Orlicz norm")
    for _ in range(ORLICZ_MAX_ITER):
        if hi - lo <= ORLICZ_RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if _modular(values, masses, phi, mid) <= 1:
            hi = mid
        else:
            lo = mid
    return hi


def orlicz_norm(alg: TraceAlgebra, x: AlgElement, phi: OrliczFunction) -> float:
    """``||x||_Phi = inf{lam > 0 : tau(Phi(|x| / lam)) <= 1}``."""
    vals, masses = _singular_data(alg, x)
    return luxemburg_norm(vals, masses, phi)


def step_orlicz_norm(f: StepFunction, phi: OrliczFunction) -> float:
    """Orlicz norm of a step function on ``[0, inf)`` with Lebesgue measure."""
    return luxemburg_norm(f.values, np.diff(f.breakpoints), phi)


def trace_of(alg: TraceAlgebra, x: AlgElement, phi: OrliczFunction) -> float:
    """``tau(Phi(|x|))``."""
    vals, masses = _singular_data(alg, x)
    return float(masses @ phi(vals))


@dataclass(frozen=True)
class ModularBoundReport:
    modular: float
    norm: float

    @property
    def holds(self) -> bool:
        return self.modular <= self.norm + 1e-10


def check_modular_bound(alg: TraceAlgebra, x: AlgElement, phi: OrliczFunction) -> ModularBoundReport:
    """Check ``tau(Phi(x)) <= ||x||_Phi`` for positive ``x`` in the unit ball."""
    if not x.is_positive():
        raise HypothesisNotMet("x must be positive")
    norm = orlicz_norm(alg, x, phi)
    if norm > 1 + 1e-12:
        raise HypothesisNotMet(f"||x||_Phi = {norm} exceeds 1")
    return ModularBoundReport(trace_of(alg, x, phi), norm)


check_lemma_leq = check_modular_bound


# -- grid diagnostics ------------------------------------------------------


def p_convexity_check(phi: OrliczFunction, p: float, grid: np.ndarray | None = None) -> ConvexityReport:
    """Discrete convexity of ``Phi ** (1/p)`` on a grid (default log grid 1e-6..1e6)."""
    if p <= 0:
        raise DomainError("p must be positive")
    t = log_grid() if grid is None else np.asarray(grid, dtype=float)
    y = phi.root(p)(t)
    finite = np.isfinite(y)
    t, y = t[finite], y[finite]
    d = slope_differences(t, y)
    i = int(np.argmin(d))
    worst = float(d[i])
    return ConvexityReport(worst >= -CONVEXITY_TOL, worst, float(t[i + 1]))


@dataclass(frozen=True)
class Delta2Report:
    constant: float
    witness: float
    bounded: bool


def delta2_constant(phi: OrliczFunction, grid: np.ndarray | None = None) -> Delta2Report:
    """``sup Phi(2t) / Phi(t)`` over a grid.

    Flagged unbounded when the ratio is not finite or still rising at the
    end of the grid.
    """
    t = log_grid() if grid is None else np.asarray(grid, dtype=float)
    base = phi(t)
    keep = base >= 1e-300
    t, base = t[keep], base[keep]
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = phi(2 * t) / base
    finite = np.isfinite(ratio)
    if not finite.all():
        return Delta2Report(np.inf, float(t[~finite][0]), False)
    i = int(np.argmax(ratio))
    tail = ratio[-max(2, ratio.size // 10):]
    rising = tail[-1] > tail[0] * (1 + 1e-6) and i == ratio.size - 1
    return Delta2Report(np.inf if rising else float(ratio[i]), float(t[i]), not rising)


@dataclass(frozen=True)
class SplitResult:
    small_part: AlgElement
    constant: float
    margin: float


def orlicz_splitting(
    alg: TraceAlgebra,
    x: AlgElement,
    delta: float,
    phi: OrliczFunction,
    p: float,
    grid: np.ndarray | None = None,
) -> SplitResult:
    """Split ``x <= x_delta + c * Phi(x) ** (1/p)`` with ``||x_delta|| <= delta/2``.

    ``x_delta = x * chi_[0, delta/2](x)``. The constant is the largest value of
    ``lam / Phi(lam) ** (1/p)`` over grid points ``lam >= delta/2``. The
    p-convexity of ``Phi`` is checked on the part of the grid covering the
    spectrum of ``x`` and ``[0, delta/2]``; failure raises
    :class:`HypothesisNotMet`. ``margin`` is the smallest eigenvalue of the
    right side minus ``x``.
    """
    _check_member(alg, x)
    if delta <= 0:
        raise DomainError("delta must be positive")
    if not x.is_positive():
        raise DomainError("x must be positive")
    half = delta / 2
    top = max(x.norm(), half)
    base = log_grid() if grid is None else np.asarray(grid, dtype=float)
    window = np.union1d(base[base <= top], [half, top])
    conv = p_convexity_check(phi, p, window)
    if not conv.convex:
        raise HypothesisNotMet(
            f"{phi.name} is not {p:g}-convex on [{window[0]:.3g}, {top:.3g}] (worst {conv.worst:.3g} at {conv.witness:.6g})"
        )
    root = phi.root(p)
    lam = np.union1d(base[base >= half], [half])
    denom = root(lam)
    if np.any(~np.isfinite(denom)) or np.any(denom <= 0):
        lam_ok = np.isfinite(denom) & (denom > 0)
        if not lam_ok[0]:
            raise NumericError("Phi ** (1/p) vanishes at delta/2; no finite constant")
        lam, denom = lam[lam_ok], denom[lam_ok]
    c = float(np.max(lam / denom))
    if not np.isfinite(c):
        raise NumericError("no finite splitting constant on the grid")
    small = x.apply(lambda l: np.where(l <= half, l, 0.0))
    rhs_minus_x = x.apply(lambda l: np.where(l <= half, l, 0.0) + c * root(np.maximum(l, 0.0)) - l)
    margin = float(rhs_minus_x.eigvalsh().min())
    if margin < -1e-10:
        raise InvariantError(f"splitting inequality fails by {-margin:.3e}")
    return SplitResult(small, c, margin)


def bounded_truncation(alg: TraceAlgebra, x: AlgElement, n: float) -> AlgElement:
    """``x * chi_(0, n](x)`` for positive ``x``."""
    _check_member(alg, x)
    if not x.is_positive():
        raise DomainError("x must be positive")
    return x @ spectral_projection(x, Interval(0.0, float(n), False, True))
