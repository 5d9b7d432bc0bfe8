"""Experiment orchestration: checks, convergence tables and the run summary."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..algebra import half_projection, lp_norm, random_effect, random_element, trace
from ..cesaro import chebyshev_family, merge_limits_check, mean_ergodic_projection, mn_operator
from ..channels import certify_markov, rota_sequence
from ..errors import HypothesisNotMet, ResourceError
from ..orlicz import OrliczFunction
from ..spherical import (
    DirectSum,
    cesaro_operators,
    check_diagonal_identity,
    check_relation_even,
    check_s1sq_identity,
    converge_even_spheres,
    diagonal_iterates,
    direct_sum_contraction_check,
    direct_sum_T,
    even_fixed_expectation,
    involution_U,
    spherical_avg_bruteforce,
    spherical_avg_recursive,
    spherical_operators,
)
from ..words import WORD_GUARD, Alphabet, sphere_size
from .config import ScenarioConfig
from .scenarios import Scenario, build_scenario

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


@dataclass
class Check:
    phase: str
    name: str
    passed: bool
    value: float | None = None
    hard: bool = True
    detail: str = ""


@dataclass
class RunReport:
    scenario: dict
    version: str = __version__
    checks: list[Check] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, phase, name, passed, value=None, hard=True, detail=""):
        self.checks.append(Check(phase, name, bool(passed), None if value is None else float(value), hard, detail))

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.hard and not c.passed]

    @property
    def exit_code(self) -> int:
        return EXIT_CHECK if self.failures else EXIT_OK

    def summary(self) -> str:
        lines = [f"ncergodic {self.version}", f"scenario: {json.dumps(self.scenario, sort_keys=True)}"]
        for c in self.checks:
            status = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
            val = "" if c.value is None else f" value={c.value:.6g}"
            det = f" ({c.detail})" if c.detail else ""
            lines.append(f"[{status}] {c.phase}/{c.name}{val}{det}")
        lines += [f"note: {n}" for n in self.notes]
        for k, v in self.artifacts.items():
            lines.append(f"artifact {k}: {v}")
        for k, v in self.timings.items():
            lines.append(f"time {k}: {v:.3f}s")
        lines.append(f"failures: {len(self.failures)}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "version": self.version,
                "checks": [c.__dict__ for c in self.checks],
                "artifacts": self.artifacts,
                "timings": self.timings,
                "notes": self.notes,
                "exit_code": self.exit_code,
            },
            indent=2,
            sort_keys=True,
        )


def _fmt(v: float) -> str:
    return "%.17g" % v


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([str(row[0])] + [_fmt(v) for v in row[1:]])
    path.write_text(buf.getvalue())


def oracle_guard(cfg: ScenarioConfig, guard: int = WORD_GUARD) -> None:
    """Refuse brute-force radii whose spheres exceed ``guard`` words."""
    radius = min(cfg.n_max, cfg.oracle_radius)
    size = sphere_size(Alphabet.group(cfg.m), radius)
    if size > guard:
        raise ResourceError(f"oracle sphere of radius {radius} has {size} words (guard {guard})")


# -- phases -----------------------------------------------------------------------------


def _phase_certification(sc: Scenario, rep: RunReport, radius: int) -> None:
    tol = sc.config.tol["flags"]
    for a in sc.action.alphabet.letters:
        r = certify_markov(sc.action[a])
        rep.add("certification", f"alpha[{a}] markov", r.all_flags, r.choi_min_eigenvalue)
    E = even_fixed_expectation(sc.action)
    r = certify_markov(E)
    rep.add("certification", "E2 markov", r.all_flags, r.choi_min_eigenvalue)
    for k, S in enumerate(spherical_operators(sc.action, sc.chain, radius)):
        r = certify_markov(S)
        rep.add("certification", f"S{k} markov", r.all_flags and r.choi_min_eigenvalue >= -tol, r.choi_min_eigenvalue)
    for k, A in enumerate(cesaro_operators(sc.action, sc.chain, radius), start=1):
        r = certify_markov(A)
        rep.add("certification", f"A{k} markov", r.all_flags, r.choi_min_eigenvalue)
    rng = np.random.default_rng(sc.config.seed if sc.config.seed is not None else 0)
    worst = -np.inf
    one = sc.algebra.identity()
    for _ in range(200):
        b = random_effect(sc.algebra, rng)
        _, defect = half_projection(b, sc.algebra)
        worst = max(worst, defect - 2 * trace(sc.algebra, one - b).real)
    rep.add("certification", "half projection defect", worst <= 1e-10, worst)


def _phase_identities(sc: Scenario, rep: RunReport, radius: int, oracle: bool) -> None:
    tol = sc.config.tol
    act, ch, x = sc.action, sc.chain, sc.x
    if oracle:
        dev = max(
            float(np.abs((spherical_avg_recursive(act, ch, n, x) - spherical_avg_bruteforce(act, ch, n, x)).vec()).max())
            for n in range(radius + 1)
        )
        rep.add("identities", "recursive vs brute force", dev <= tol["oracle"], dev)
        d = check_diagonal_identity(act, ch, x, radius)
        rep.add("identities", "diagonal identity", d.max_residual <= tol["oracle"], d.max_residual)
    else:
        rep.notes.append("brute-force oracle skipped (--no-oracle)")
    if ch.alphabet.m >= 2:
        r = check_relation_even(act, ch, min(5, radius))
        rep.add("identities", "relation (1)", r.first.max_residual <= tol["identity"], r.first.max_residual)
        rep.add(
            "identities",
            "relation (2) sign",
            r.vanishing_sign == "-",
            r.second_minus.max_residual,
            hard=False,
            detail=f"vanishing sign {r.vanishing_sign}; '+' residual {r.second_plus.max_residual:.3g}",
        )
    else:
        rep.add("identities", "relation (1)", True, hard=False, detail="skipped: needs m >= 2")
    quad, step = check_s1sq_identity(act, ch, min(4, radius))
    rep.add("identities", "S1 squared identity", quad.max_residual <= tol["identity"], quad.max_residual)
    rep.add("identities", "one-step recursion", step.max_residual <= tol["identity"], step.max_residual)
    U = involution_U(act, ch)
    T = direct_sum_T(act, ch)
    sq = float(np.abs(U.matrix @ U.matrix - np.eye(U.domain.dim)).max())
    rep.add("identities", "U squared", sq <= 1e-14, sq)
    sym = float(np.abs(U.matrix @ T.matrix @ U.matrix - T.adjoint().matrix).max())
    rep.add("identities", "UTU = T*", sym <= 1e-10, sym)
    rng = np.random.default_rng((sc.config.seed or 0) + 1)
    space = DirectSum(sc.algebra, ch)
    tuples = [space.element([random_element(sc.algebra, rng) for _ in space.letters]) for _ in range(100)]
    c = direct_sum_contraction_check(act, ch, tuples)
    worst = max(c.max_ratio.values())
    rep.add("identities", "direct-sum contraction", worst <= 1 + tol["contraction"], worst)


def _phase_even(sc: Scenario, rep: RunReport, out: Path, orlicz: list[OrliczFunction]) -> None:
    cfg = sc.config
    conv = converge_even_spheres(sc.action, sc.chain, sc.x, cfg.n_max, orlicz, target=cfg.tol["convergence_target"])
    path = out / "even_spheres.csv"
    conv.write_csv(path)
    rep.artifacts["even_spheres"] = str(path)
    n_star = conv.first_below("err_l2")
    rep.add(
        "even_spheres",
        "error below target",
        n_star is not None,
        conv.column("err_l2")[-1],
        hard=False,
        detail=f"first n = {n_star}",
    )
    E = even_fixed_expectation(sc.action)
    lim = E(sc.x)
    letters = sc.action.alphabet.letters
    inv = max((sc.action[g](sc.action[h](lim)) - lim).norm() for g in letters for h in letters)
    rep.add("even_spheres", "limit invariance", inv <= cfg.tol["identity"], inv)


def _phase_cesaro(sc: Scenario, rep: RunReport, out: Path) -> None:
    cfg = sc.config
    act, ch, x, alg = sc.action, sc.chain, sc.x, sc.algebra
    T = direct_sum_T(act, ch)
    space = DirectSum(alg, ch)
    P = mean_ergodic_projection(T)
    limit_tuple = space.from_vector(P.matrix @ space.diagonal(x).vec())
    limit = alg.from_vector(sum(p * c.vec() for p, c in zip(ch.stationary, limit_tuple.components)))
    X = diagonal_iterates(act, ch, cfg.n_max - 1, x)
    acc = np.zeros(alg.dim, dtype=complex)
    rows = []
    for n in range(1, cfg.n_max + 1):
        acc = acc + ch.stationary @ X[n - 1]
        d = alg.from_vector(acc / n) - limit
        rows.append([n, d.norm(), lp_norm(alg, d, 2)])
    path = out / "cesaro.csv"
    _write_rows(path, ["n", "err_inf", "err_l2"], rows)
    rep.artifacts["cesaro"] = str(path)
    m = ch.alphabet.m
    S = spherical_operators(act, ch, 1)[1]
    fam = chebyshev_family(S, (2 * m - 1) / (2 * m), min(cfg.n_max, 8))
    rep.add("cesaro", "family recursion", max(fam.recursion_residuals, default=0.0) <= 1e-10, max(fam.recursion_residuals, default=0.0))
    rep.add("cesaro", "family members markov", fam.markov_preserved)
    ok = all(certify_markov(mn_operator(fam, n)).all_flags for n in range(fam.horizon + 1))
    rep.add("cesaro", "M_n markov", ok)


def _phase_rota(sc: Scenario, rep: RunReport, out: Path) -> None:
    cfg = sc.config
    S1 = spherical_operators(sc.action, sc.chain, 1)[1]
    res = rota_sequence(S1, sc.x, cfg.n_max)
    rows = [[n, inc] for n, inc in enumerate(res.increments)]
    path = out / "rota.csv"
    _write_rows(path, ["n", "increment_inf"], rows)
    rep.artifacts["rota"] = str(path)
    rep.add("rota", "increments recorded", len(rows) == cfg.n_max, hard=False)


def _phase_semigroup(sc: Scenario, rep: RunReport, out: Path) -> None:
    from ..cesaro import semigroup_power_average

    cfg = sc.config
    T = direct_sum_T(sc.action, sc.chain)
    space = DirectSum(sc.algebra, sc.chain)
    pa = semigroup_power_average(T, space.diagonal(sc.x).as_element(), cfg.n_max)
    path = out / "semigroup.csv"
    _write_rows(path, ["n", "dist_l2"], [[k, d] for k, d in enumerate(pa.distances, start=1)])
    rep.artifacts["semigroup"] = str(path)
    rep.add("semigroup", "limit fixed by T", pa.fixed_residual <= cfg.tol["fixed_point"], pa.fixed_residual)
    comps = space.from_vector(pa.limit.vec()).components
    try:
        m = merge_limits_check(sc.action, sc.chain, comps)
    except HypothesisNotMet as exc:
        rep.add("semigroup", "component merging", True, hard=False, detail=f"skipped: {exc}")
        return
    worst = max(m.pairwise, m.invariance, m.norm_spread)
    rep.add("semigroup", "component merging", worst <= cfg.tol["merge"], worst)


def run_experiment(cfg: ScenarioConfig, out_dir: str | Path | None = None, oracle: bool = True) -> RunReport:
    """Run the configured phases in order and write CSVs and the summary to ``out_dir``."""
    if oracle:
        oracle_guard(cfg)
    rep = RunReport(cfg.to_dict())
    t0 = time.perf_counter()
    sc = build_scenario(cfg)
    rep.timings["build"] = time.perf_counter() - t0
    out = Path(out_dir or cfg.output_dir or "ncergodic-out")
    out.mkdir(parents=True, exist_ok=True)
    orlicz = [OrliczFunction.from_name(n) for n in cfg.orlicz]
    radius = min(cfg.n_max, cfg.oracle_radius)
    phases = {
        "certification": lambda: _phase_certification(sc, rep, radius),
        "identities": lambda: _phase_identities(sc, rep, radius, oracle),
        "even_spheres": lambda: _phase_even(sc, rep, out, orlicz),
        "cesaro": lambda: _phase_cesaro(sc, rep, out),
        "rota": lambda: _phase_rota(sc, rep, out),
        "semigroup": lambda: _phase_semigroup(sc, rep, out),
    }
    for name in phases:
        if name in cfg.runs:
            t = time.perf_counter()
            phases[name]()
            rep.timings[name] = time.perf_counter() - t
    (out / "summary.txt").write_text(rep.summary() + "\n")
    (out / "report.json").write_text(rep.to_json() + "\n")
    rep.artifacts["summary"] = str(out / "summary.txt")
    return rep
