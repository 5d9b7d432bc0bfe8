"""Acceptance criteria as executable checks.

Each ``criterion_*`` function measures the quantities behind one criterion
and returns a :class:`CriterionResult`; tolerances are keyword arguments so
callers can pin them explicitly.
"""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..algebra import (
    Subalgebra,
    TraceAlgebra,
    conditional_expectation,
    half_projection,
    haar_unitary,
    lp_norm,
    random_effect,
    random_element,
    random_positive,
    trace,
)
from ..cesaro import chebyshev_family, merge_limits_check, mn_operator, semigroup_power_average
from ..channels import (
    certify_markov,
    permutation_automorphism,
    random_markov_channel,
    rota_sequence,
    unitary_conjugation,
)
from ..orlicz import (
    OrliczFunction,
    check_hlp,
    check_modular_bound,
    orlicz_norm,
    p_convexity_check,
    s_numbers,
)
from ..spherical import (
    DirectSum,
    cesaro_operators,
    check_diagonal_identity,
    check_relation_even,
    check_s1sq_identity,
    converge_even_spheres,
    direct_sum_T,
    even_fixed_expectation,
    involution_U,
    spherical_avg_bruteforce,
    spherical_avg_recursive,
    spherical_operators,
)
from ..words import Action, Alphabet, free_group_chain, uniform_semigroup_chain
from .runner import run_experiment
from .scenarios import Scenario, builtin_config, builtin_scenario, nested_expectation_model

BASELINE_SCENARIOS = ("permutation8", "free_rotation3")
IDENTITY_SCENARIOS = ("permutation8", "free_rotation3", "random_markov", "two_point")


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: list[str] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.title} | " + "; ".join(self.details)


def _part(result: CriterionResult, name: str, ok: bool, text: str) -> None:
    result.details.append(f"{name} {'ok' if ok else 'FAILED'} ({text})")
    result.passed = result.passed and ok


# -- criterion 1 --------------------------------------------------------------------


def random_scenario(seed: int, m: int) -> tuple[Action, object]:
    """Random automorphism action on an algebra with total matrix size at most 6."""
    rng = np.random.default_rng(seed)
    shapes = [
        ("points", 2), ("points", 3), ("points", 4), ("points", 6),
        ("matrix", 2), ("matrix", 3), ("blocks", ((2, 0.25), (1, 0.25), (1, 0.25))),
        ("blocks", ((2, 0.2), (2, 0.3))),
    ]
    kind, arg = shapes[int(rng.integers(len(shapes)))]
    if kind == "points":
        alg = TraceAlgebra.diagonal(arg)
        maps = {g: permutation_automorphism(alg, list(rng.permutation(arg))) for g in range(1, m + 1)}
    else:
        alg = TraceAlgebra.matrix(arg) if kind == "matrix" else TraceAlgebra(arg, normalized=True)
        maps = {
            g: unitary_conjugation(alg, [haar_unitary(n, rng) for n in alg.dims]) for g in range(1, m + 1)
        }
    return Action(Alphabet.group(m), maps), rng


def criterion_1(
    scenarios: int = 50, n_max: int = 6, tol: float = 1e-10, min_speedup: float = 50.0, max_runtime: float = 1.0
) -> CriterionResult:
    res = CriterionResult(1, "oracle equivalence and speed", True)
    worst, recursive_time = 0.0, 0.0
    for seed in range(scenarios):
        m = 2 if seed % 2 == 0 else 3
        action, rng = random_scenario(seed, m)
        chain = free_group_chain(m)
        x = random_element(action.algebra, rng)
        for n in range(n_max + 1):
            t = time.perf_counter()
            fast = spherical_avg_recursive(action, chain, n, x)
            recursive_time += time.perf_counter() - t
            slow = spherical_avg_bruteforce(action, chain, n, x)
            worst = max(worst, float(np.abs((fast - slow).vec()).max()))
    _part(res, "deviation", worst <= tol, f"max {worst:.3g} <= {tol:g}")
    sc = builtin_scenario("free_rotation3")
    spherical_avg_recursive(sc.action, sc.chain, 6, sc.x)  # warm caches
    t_fast = min(_timed(lambda: spherical_avg_recursive(sc.action, sc.chain, 6, sc.x)) for _ in range(20))
    t_slow = min(_timed(lambda: spherical_avg_bruteforce(sc.action, sc.chain, 6, sc.x)) for _ in range(3))
    speedup = t_slow / t_fast
    _part(res, "speedup", speedup >= min_speedup, f"{speedup:.0f}x >= {min_speedup:g}x at m=2, n=6")
    _part(res, "runtime", recursive_time < max_runtime, f"recursive total {recursive_time:.3f}s < {max_runtime:g}s")
    res.values.update(deviation=worst, speedup=speedup, runtime=recursive_time)
    return res


def _timed(f) -> float:
    t = time.perf_counter()
    f()
    return time.perf_counter() - t


# -- criterion 2 --------------------------------------------------------------------


def criterion_2(samples: int = 500, tol: float = 1e-10, ps=(1, 2, 4, np.inf)) -> CriterionResult:
    res = CriterionResult(2, "direct-sum contraction", True)
    worst = -np.inf
    positive_ok = True
    for k, name in enumerate(IDENTITY_SCENARIOS):
        sc = builtin_scenario(name)
        T = direct_sum_T(sc.action, sc.chain)
        space = DirectSum(sc.algebra, sc.chain)
        rng = np.random.default_rng(1000 + k)
        for s in range(samples):
            make = random_positive if s % 2 else random_element
            y = space.element([make(sc.algebra, rng) for _ in space.letters])
            ty = space.from_vector(T.matrix @ y.vec())
            for p in ps:
                worst = max(worst, ty.norm(p) - y.norm(p))
            if s % 2 and not ty.is_positive():
                positive_ok = False
    _part(res, "norm excess", worst <= tol, f"max ||Ty||_p - ||y||_p = {worst:.3g} <= {tol:g}")
    _part(res, "positivity", positive_ok, "positive tuples stay positive")
    res.values["excess"] = worst
    return res


# -- criterion 3 --------------------------------------------------------------------


def criterion_3(
    relation_tol: float = 1e-9, diagonal_tol: float = 1e-10, s1sq_tol: float = 1e-9,
    step_tol: float = 1e-9, u_sq_tol: float = 1e-14, utu_tol: float = 1e-10,
) -> CriterionResult:
    res = CriterionResult(3, "operator identities", True)
    rel = diag = quad = step = u_sq = utu = 0.0
    u_sq_perm = 0.0
    for name in IDENTITY_SCENARIOS:
        sc = builtin_scenario(name)
        act, ch = sc.action, sc.chain
        rel = max(rel, check_relation_even(act, ch, 5).first.max_residual)
        diag = max(diag, check_diagonal_identity(act, ch, sc.x, 6).max_residual)
        q, s = check_s1sq_identity(act, ch, 4, range(2, 9))
        quad, step = max(quad, q.max_residual), max(step, s.max_residual)
        U = involution_U(act, ch).matrix
        T = direct_sum_T(act, ch)
        sq = float(np.abs(U @ U - np.eye(U.shape[0])).max())
        u_sq = max(u_sq, sq)
        if sc.config.kind in ("permutation", "two_point"):
            u_sq_perm = max(u_sq_perm, sq)
        utu = max(utu, float(np.abs(U @ T.matrix @ U - T.adjoint().matrix).max()))
    _part(res, "relation (1)", rel <= relation_tol, f"{rel:.3g}")
    _part(res, "diagonal identity", diag <= diagonal_tol, f"{diag:.3g}")
    _part(res, "S1^2 identity", quad <= s1sq_tol, f"{quad:.3g}")
    _part(res, "one-step recursion", step <= step_tol, f"{step:.3g}")
    _part(res, "U^2 = id", u_sq_perm == 0.0 and u_sq <= u_sq_tol, f"permutations {u_sq_perm:.3g}, all {u_sq:.3g}")
    _part(res, "UTU = T*", utu <= utu_tol, f"{utu:.3g}")
    res.values.update(relation=rel, diagonal=diag, s1sq=quad, step=step, u_squared=u_sq, utu=utu)
    return res


# -- criterion 4 --------------------------------------------------------------------


def criterion_4(
    power_tol: float = 1e-9, modular_samples: int = 1000, hlp_pairs: int = 200, max_runtime: float = 10.0
) -> CriterionResult:
    res = CriterionResult(4, "Orlicz suite", True)
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    algs = [TraceAlgebra.matrix(3), TraceAlgebra.diagonal(4), TraceAlgebra(((2, 0.3), (1, 0.4)))]
    dev = 0.0
    for p in (1, 2, 4):
        phi = OrliczFunction.power(p)
        for alg in algs:
            for _ in range(10):
                x = random_element(alg, rng)
                dev = max(dev, abs(orlicz_norm(alg, x, phi) - lp_norm(alg, x, p)))
    _part(res, "power norms", dev <= power_tol, f"max |Orlicz - Lp| = {dev:.3g}")
    phis = [OrliczFunction.llogl(), OrliczFunction.power(2), OrliczFunction.lloglpow(2.0)]
    violations = 0
    for k in range(modular_samples):
        alg = algs[k % len(algs)]
        phi = phis[k % len(phis)]
        x = random_positive(alg, rng)
        x = x * (rng.uniform(0.05, 1.0) / orlicz_norm(alg, x, phi))
        if not check_modular_bound(alg, x, phi).holds:
            violations += 1
    _part(res, "modular bound", violations == 0, f"{violations} violations in {modular_samples}")
    hlp_fail = 0
    for k in range(hlp_pairs):
        alg = algs[k % len(algs)]
        T = random_markov_channel(alg, rng)
        x = random_element(alg, rng)
        if not check_hlp(s_numbers(alg, T(x)), s_numbers(alg, x), phis[k % len(phis)]).holds:
            hlp_fail += 1
    _part(res, "majorization transfer", hlp_fail == 0, f"{hlp_fail} failures in {hlp_pairs}")
    power = p_convexity_check(OrliczFunction.power(3), 3)
    llogl = p_convexity_check(OrliczFunction.llogl(), 10 / 9)
    linear = p_convexity_check(OrliczFunction.power(1), 1.5)
    _part(res, "t^p p-convex", power.convex, f"worst {power.worst:.3g}")
    _part(
        res,
        "t log(1+t) 10/9-convex",
        llogl.convex,
        f"worst slope change {llogl.worst:.3g} at t={llogl.witness:.4g}",
    )
    _part(res, "t not p-convex", not linear.convex, f"worst {linear.worst:.3g}")
    elapsed = time.perf_counter() - t0
    _part(res, "runtime", elapsed < max_runtime, f"{elapsed:.2f}s < {max_runtime:g}s")
    res.values.update(power_dev=dev, modular_violations=violations, hlp_failures=hlp_fail, llogl_worst=llogl.worst)
    return res


# -- criterion 5 --------------------------------------------------------------------


def criterion_5(closed_tol: float = 1e-12, nested_tol: float = 1e-9, N: int = 8) -> CriterionResult:
    res = CriterionResult(5, "Rota sequences", True)
    rng = np.random.default_rng(55)
    alg = TraceAlgebra(((2, 0.25), (1, 0.5)), normalized=True)
    diag_units = [alg.element([np.diag([1.0, 0]), np.zeros((1, 1))]),
                  alg.element([np.diag([0, 1.0]), np.zeros((1, 1))]),
                  alg.element([np.zeros((2, 2)), np.ones((1, 1))])]
    E = conditional_expectation(Subalgebra.from_spanning(alg, diag_units))
    aut = unitary_conjugation(alg, [haar_unitary(n, rng) for n in alg.dims])
    worst_E = worst_aut = 0.0
    for _ in range(5):
        x = random_element(alg, rng)
        r = rota_sequence(E, x, N)
        worst_E = max(worst_E, max((m - E(x)).norm() for m in r.mirrored[1:]))
        r = rota_sequence(aut, x, N)
        worst_aut = max(worst_aut, max((m - x).norm() for m in r.mirrored))
    _part(res, "T = E", worst_E <= closed_tol, f"{worst_E:.3g}")
    _part(res, "T automorphism", worst_aut <= closed_tol, f"{worst_aut:.3g}")
    model = nested_expectation_model(3, N)
    x = random_element(model.T.domain, rng)
    r = rota_sequence(model.T, x, N, model.E, model.nested, tol=np.inf)
    nested = max(r.expectation_residuals)
    _part(res, "nested expectations", nested <= nested_tol, f"{nested:.3g} for n <= {N}")
    res.values.update(expectation=worst_E, automorphism=worst_aut, nested=nested)
    return res


# -- criterion 6 --------------------------------------------------------------------


def _baseline_dir():
    return resources.files("ncergodic.harness").joinpath("baselines")


def load_baseline(name: str) -> tuple[np.ndarray, list[str]]:
    text = _baseline_dir().joinpath(f"{name}_even_spheres.csv").read_text()
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in lines[1:]])
    return data, header


def load_nstar() -> dict[str, int]:
    return json.loads(_baseline_dir().joinpath("nstar.json").read_text())


def even_report(sc: Scenario):
    cfg = sc.config
    orlicz = [OrliczFunction.from_name(n) for n in cfg.orlicz]
    return converge_even_spheres(sc.action, sc.chain, sc.x, cfg.n_max, orlicz, target=cfg.tol["convergence_target"])


def criterion_6(
    target: float = 1e-6, curve_rtol: float = 1e-12, invariance_tol: float = 1e-9,
    fixed_tol: float = 1e-9, merge_tol: float = 1e-8,
) -> CriterionResult:
    res = CriterionResult(6, "empirical convergence", True)
    nstar = load_nstar()
    for name in BASELINE_SCENARIOS:
        sc = builtin_scenario(name)
        rep = even_report(sc)
        first = rep.first_below("err_l2", target)
        ok = first is not None and first <= nstar[name]
        _part(res, f"{name} below {target:g}", ok, f"n = {first}, N* = {nstar[name]}")
        base, header = load_baseline(name)
        cur = np.array([[r[0], r[1], r[2], *r[3]] for r in rep.rows])
        same_shape = header == rep.header and cur.shape == base.shape
        drift = float(np.abs(cur - base).max() / np.abs(base[:, 1:]).max()) if same_shape else np.inf
        _part(res, f"{name} curve", drift <= curve_rtol, f"relative drift {drift:.3g}")
        E = even_fixed_expectation(sc.action)
        lim = E(sc.x)
        letters = sc.action.alphabet.letters
        inv = max((sc.action[g](sc.action[h](lim)) - lim).norm() for g in letters for h in letters)
        _part(res, f"{name} limit invariance", inv <= invariance_tol, f"{inv:.3g}")
        res.values[f"{name}_first"] = float(first) if first is not None else np.inf
        res.values[f"{name}_drift"] = drift
    fixed, merge = 0.0, 0.0
    rot = builtin_scenario("free_rotation3")
    semi = Action(Alphabet.semigroup(2), {1: rot.action[1], 2: rot.action[2]})
    cases = [(semi, uniform_semigroup_chain(2), rot)] + [
        (s.action, s.chain, s) for s in (builtin_scenario(n) for n in BASELINE_SCENARIOS)
    ]
    for action, chain, sc in cases:
        T = direct_sum_T(action, chain)
        space = DirectSum(sc.algebra, chain)
        pa = semigroup_power_average(T, space.diagonal(sc.x).as_element(), 200)
        fixed = max(fixed, pa.fixed_residual)
        comps = space.from_vector(pa.limit.vec()).components
        m = merge_limits_check(action, chain, comps)
        merge = max(merge, m.pairwise, m.invariance, m.norm_spread)
    _part(res, "power-average fixed point", fixed <= fixed_tol, f"{fixed:.3g}")
    _part(res, "component merging", merge <= merge_tol, f"{merge:.3g}")
    res.values.update(fixed=fixed, merge=merge)
    return res


# -- criterion 7 --------------------------------------------------------------------


def criterion_7(flag_tol: float = 1e-10, n_max: int = 6, samples: int = 1000) -> CriterionResult:
    res = CriterionResult(7, "Markov certification", True)
    failures = []
    for name in BASELINE_SCENARIOS:
        sc = builtin_scenario(name)
        ops = spherical_operators(sc.action, sc.chain, n_max) + cesaro_operators(sc.action, sc.chain, n_max)
        m = sc.chain.alphabet.m
        fam = chebyshev_family(ops[1], (2 * m - 1) / (2 * m), n_max)
        ops += [mn_operator(fam, n) for n in range(n_max + 1)]
        for op in ops:
            r = certify_markov(op)
            if not (r.all_flags and r.choi_min_eigenvalue >= -flag_tol):
                failures.append(f"{name}:{op.label}")
    _part(res, "S_n, A_n, M_n", not failures, f"{len(failures)} failing operators" + (f": {failures}" if failures else ""))
    rng = np.random.default_rng(77)
    algs = [TraceAlgebra.matrix(3), TraceAlgebra.diagonal(5), TraceAlgebra(((2, 0.3), (1, 0.4)))]
    worst = -np.inf
    for k in range(samples):
        alg = algs[k % len(algs)]
        b = random_effect(alg, rng)
        _, defect = half_projection(b, alg)
        worst = max(worst, defect - 2 * trace(alg, alg.identity() - b).real)
    _part(res, "half projection", worst <= 1e-10, f"max defect - bound = {worst:.3g} over {samples}")
    res.values["half_projection"] = worst
    return res


# -- criterion 8 --------------------------------------------------------------------


def criterion_8(names=BASELINE_SCENARIOS) -> CriterionResult:
    res = CriterionResult(8, "deterministic runs", True)
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            cfg = builtin_config(name)
            a, b = Path(tmp, name, "a"), Path(tmp, name, "b")
            run_experiment(cfg, a)
            run_experiment(cfg, b)
            files = sorted(p.name for p in a.glob("*.csv"))
            same = bool(files) and all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
            _part(res, name, same, f"{len(files)} CSV files compared")
    return res


SUITES = {
    "identities": (1, 2, 3, 5, 7),
    "orlicz": (4,),
    "convergence": (6, 8),
    "all": (1, 2, 3, 4, 5, 6, 7, 8),
}

CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
}


def run_suite(name: str = "all") -> list[CriterionResult]:
    return [CRITERIA[k]() for k in SUITES[name]]
