"""Concrete actions used by the runner, the verifier and the tests."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..algebra import (
    AlgElement,
    Subalgebra,
    TraceAlgebra,
    conditional_expectation,
    haar_unitary,
    random_positive,
)
from ..channels import ChannelOperator, identity_channel, permutation_automorphism, unitary_conjugation
from ..errors import ConfigError, NCErgodicError
from ..words import Action, SphereChain, free_group_chain
from .config import ScenarioConfig

ROTATION_COS, ROTATION_SIN = 3 / 5, 4 / 5


@dataclass
class Scenario:
    config: ScenarioConfig
    algebra: TraceAlgebra
    action: Action
    chain: SphereChain
    x: AlgElement
    samples: list[AlgElement] = field(default_factory=list)

    def fingerprint(self) -> str:
        """Hash of every number defining the scenario."""
        h = hashlib.sha256()
        for a in self.action.alphabet.letters:
            h.update(np.ascontiguousarray(self.action[a].matrix).tobytes())
        h.update(self.chain.P.tobytes())
        for s in [self.x, *self.samples]:
            h.update(s.vec().tobytes())
        return h.hexdigest()


def rotation_x(c: float = ROTATION_COS, s: float = ROTATION_SIN) -> np.ndarray:
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rotation_z(c: float = ROTATION_COS, s: float = ROTATION_SIN) -> np.ndarray:
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def build_algebra(spec: dict) -> TraceAlgebra:
    if not isinstance(spec, dict) or len(spec) == 0:
        raise ConfigError("algebra: expected an object with points, matrix or blocks")
    try:
        if set(spec) == {"points"}:
            return TraceAlgebra.diagonal(int(spec["points"]))
        if set(spec) == {"matrix"}:
            return TraceAlgebra.matrix(int(spec["matrix"]))
        if set(spec) <= {"blocks", "normalized"} and "blocks" in spec:
            blocks = tuple((int(n), float(w)) for n, w in spec["blocks"])
            return TraceAlgebra(blocks, normalized=bool(spec.get("normalized", False)))
    except NCErgodicError as exc:
        raise ConfigError(f"algebra: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"algebra: {exc}") from exc
    raise ConfigError(f"algebra: unrecognized keys {sorted(spec)}")


def _parse_entry(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where}: entries must be numbers or [re, im] pairs")


def _parse_unitaries(cfg: ScenarioConfig, alg: TraceAlgebra) -> list[list[np.ndarray]]:
    if cfg.unitaries is None or len(cfg.unitaries) != cfg.m:
        raise ConfigError(f"unitaries: expected {cfg.m} generators")
    out = []
    for g, blocks in enumerate(cfg.unitaries):
        if len(blocks) != len(alg.blocks):
            raise ConfigError(f"unitaries[{g}]: expected {len(alg.blocks)} blocks")
        mats = []
        for b, (rows, n) in enumerate(zip(blocks, alg.dims)):
            where = f"unitaries[{g}][{b}]"
            try:
                M = np.array([[_parse_entry(v, where) for v in row] for row in rows], dtype=complex)
            except TypeError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            if M.shape != (n, n):
                raise ConfigError(f"{where}: expected shape {(n, n)}, got {M.shape}")
            if np.abs(M @ M.conj().T - np.eye(n)).max() > 1e-10:
                raise ConfigError(f"{where}: not unitary within 1e-10")
            mats.append(M)
        out.append(mats)
    return out


def _permutation_action(cfg: ScenarioConfig, alg: TraceAlgebra) -> dict[int, ChannelOperator]:
    if cfg.permutations is None or len(cfg.permutations) != cfg.m:
        raise ConfigError(f"permutations: expected {cfg.m} permutations")
    maps = {}
    for g, perm in enumerate(cfg.permutations):
        if sorted(perm) != list(range(len(alg.blocks))):
            raise ConfigError(f"permutations[{g}]: not a permutation of 0..{len(alg.blocks) - 1}")
        maps[g + 1] = permutation_automorphism(alg, perm, label=f"a{g + 1}")
    return maps


def build_scenario(cfg: ScenarioConfig, samples: int = 8) -> Scenario:
    """Algebra, automorphism action, free-group chain and sample elements."""
    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    if cfg.kind == "two_point":
        if cfg.m != 2:
            raise ConfigError("m: the two-point scenario has m = 2")
        if cfg.algebra and build_algebra(cfg.algebra) != TraceAlgebra.diagonal(2):
            raise ConfigError("algebra: the two-point scenario lives on two points")
        alg = TraceAlgebra.diagonal(2)
        maps = {1: permutation_automorphism(alg, [1, 0], "swap"), 2: identity_channel(alg)}
    elif cfg.kind == "permutation":
        alg = build_algebra(cfg.algebra or {"points": 8})
        if any(n != 1 for n in alg.dims):
            raise ConfigError("algebra: permutation scenarios need a diagonal algebra")
        maps = _permutation_action(cfg, alg)
    elif cfg.kind == "free_rotation":
        alg = build_algebra(cfg.algebra or {"matrix": 3})
        if alg.dims != (3,):
            raise ConfigError("algebra: the free rotation scenario acts on one 3x3 block")
        if cfg.m != 2:
            raise ConfigError("m: the free rotation scenario has m = 2")
        maps = {
            1: unitary_conjugation(alg, [rotation_x()], "Rx"),
            2: unitary_conjugation(alg, [rotation_z()], "Rz"),
        }
    elif cfg.kind == "custom_unitaries":
        alg = build_algebra(cfg.algebra)
        maps = {g + 1: unitary_conjugation(alg, u, f"a{g + 1}") for g, u in enumerate(_parse_unitaries(cfg, alg))}
    elif cfg.kind == "random_markov":
        alg = build_algebra(cfg.algebra or {"matrix": 2})
        maps = {
            g + 1: unitary_conjugation(alg, [haar_unitary(n, rng) for n in alg.dims], f"a{g + 1}")
            for g in range(cfg.m)
        }
    else:  # pragma: no cover - rejected by the config
        raise ConfigError(f"kind: {cfg.kind!r}")
    try:
        action = Action(free_group_chain(cfg.m).alphabet, maps)
    except NCErgodicError as exc:
        raise ConfigError(f"action: {exc}") from exc
    chain = free_group_chain(cfg.m)
    x = random_positive(alg, rng)
    x = x / x.norm()
    extra = [random_positive(alg, rng) for _ in range(samples)]
    return Scenario(cfg, alg, action, chain, x, extra)


# -- builtin registry --------------------------------------------------------------


def _scenario_dir():
    return resources.files("ncergodic.harness").joinpath("scenarios")


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in _scenario_dir().iterdir() if p.name.endswith(".json"))


def builtin_config(name: str) -> ScenarioConfig:
    path = _scenario_dir().joinpath(f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"no builtin scenario named {name!r}")
    return ScenarioConfig.from_dict(json.loads(path.read_text()))


def builtin_scenario(name: str) -> Scenario:
    return build_scenario(builtin_config(name))


# -- nested expectations from a tensor shift -------------------------------------------


def _pauli_basis() -> list[np.ndarray]:
    return [
        np.eye(2, dtype=complex),
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]


def _kron_all(mats) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for M in mats:
        out = np.kron(out, M)
    return out


def factor_expectation(K: int, trivial: set[int]) -> ChannelOperator:
    """Expectation of ``M_2^(x)K`` onto elements acting trivially on the given factors."""
    alg = TraceAlgebra.matrix(2**K)
    paulis = _pauli_basis()
    basis = []
    for idx in itertools.product(range(4), repeat=K):
        if any(idx[k] != 0 for k in trivial):
            continue
        basis.append(alg.element([_kron_all(paulis[i] for i in idx)]))
    return conditional_expectation(Subalgebra(alg, basis))


def tensor_shift(K: int) -> ChannelOperator:
    """Automorphism of ``M_2^(x)K`` moving tensor factor ``k`` to ``k + 1 mod K``."""
    alg = TraceAlgebra.matrix(2**K)
    dim = 2**K
    P = np.zeros((dim, dim))
    for idx in itertools.product(range(2), repeat=K):
        src = int("".join(map(str, idx)), 2)
        moved = tuple(idx[(k - 1) % K] for k in range(K))
        P[int("".join(map(str, moved)), 2), src] = 1.0
    return unitary_conjugation(alg, [P], label="shift")


@dataclass
class NestedModel:
    """``T = E_0 o shift`` with ``(T*)^n T^n = E o E_n`` for the listed expectations."""

    T: ChannelOperator
    E: ChannelOperator
    nested: list[ChannelOperator]


def nested_expectation_model(K: int = 3, N: int = 8) -> NestedModel:
    """Rota realization on ``M_2^(x)K``.

    ``E_0`` forgets tensor factor 0, so ``T = E_0 o shift`` satisfies
    ``(T*)^n T^n = E_n``, the expectation forgetting factors ``-1..-n mod K``,
    and ``E`` is the identity.
    """
    shift = tensor_shift(K)
    T = factor_expectation(K, {0}) @ shift
    T.label = "T"
    cache = {}
    nested = []
    for n in range(1, N + 1):
        forget = frozenset((-k) % K for k in range(1, n + 1))
        if forget not in cache:
            cache[forget] = factor_expectation(K, set(forget))
        nested.append(cache[forget])
    return NestedModel(T, identity_channel(T.domain), nested)
