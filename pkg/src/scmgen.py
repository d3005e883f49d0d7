"""Structural causal model generation: one sampled function per graph edge pattern.

The model is additive: ``X_i(t) = sum_j f_ij(X_j(t - s)) + N_i(t)``.  Functions are stored per
lag-0-anchored pattern, so every lag-replicated copy of an edge shares the same
``FunctionSpec`` (time invariance).
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from src.config import FunctionConfig, VarType
from src.errors import NonFiniteInputError
from src.graphgen import EdgePattern, TimeSeriesCausalGraph
from src.seeding import make_rng

logger = logging.getLogger(__name__)

LINEAR_RANGE = (0.2, 0.8)
MONOTONIC_AMPLITUDE_RANGE = (0.5, 2.0)
MONOTONIC_SLOPE_RANGE = (0.5, 2.0)
PERIODIC_AMPLITUDE_RANGE = (0.5, 2.0)
PERIODIC_FREQUENCY_RANGE = (0.5, 2.0)
NOISE_AR_RANGE = (0.2, 0.9)

STABILITY_TARGET = 0.95
MAX_STABILITY_ROUNDS = 100


class FunctionKind(str, Enum):
    IDENTITY = "identity"
    LINEAR = "linear"
    MONOTONIC = "monotonic"
    PERIODIC = "periodic"


class MonotonicFamily(str, Enum):
    TANH = "tanh"
    SQRT = "sqrt"


@dataclass(frozen=True)
class FunctionSpec:
    """A univariate dependency.

    ``params`` holds ``(beta,)`` for linear, ``(a, b)`` for monotonic and ``(a, b, c)`` for
    periodic functions; identity has none.
    """

    kind: FunctionKind
    params: Tuple[float, ...] = ()
    family: Optional[MonotonicFamily] = None

    @classmethod
    def identity(cls) -> "FunctionSpec":
        return cls(FunctionKind.IDENTITY)

    @classmethod
    def linear(cls, beta: float) -> "FunctionSpec":
        return cls(FunctionKind.LINEAR, (float(beta),))

    @classmethod
    def monotonic(cls, family: Union[MonotonicFamily, str], a: float, b: float) -> "FunctionSpec":
        return cls(FunctionKind.MONOTONIC, (float(a), float(b)), MonotonicFamily(family))

    @classmethod
    def periodic(cls, a: float, b: float, c: float) -> "FunctionSpec":
        return cls(FunctionKind.PERIODIC, (float(a), float(b), float(c)))

    @property
    def coefficient(self) -> float:
        if self.kind is not FunctionKind.LINEAR:
            raise AttributeError(f"{self.kind.value} function has no linear coefficient")
        return self.params[0]


def _signed_uniform(rng: np.random.Generator, bounds: Tuple[float, float]) -> float:
    magnitude = rng.uniform(*bounds)
    return magnitude if rng.random() < 0.5 else -magnitude


def sample_function(function_config: FunctionConfig, rng: np.random.Generator) -> FunctionSpec:
    index = rng.choice(len(function_config.functions), p=np.asarray(function_config.prob_functions, dtype=float))
    kind = FunctionKind(function_config.functions[int(index)].value)
    if kind is FunctionKind.LINEAR:
        return FunctionSpec.linear(_signed_uniform(rng, LINEAR_RANGE))
    if kind is FunctionKind.MONOTONIC:
        family = MonotonicFamily.TANH if rng.random() < 0.5 else MonotonicFamily.SQRT
        a = _signed_uniform(rng, MONOTONIC_AMPLITUDE_RANGE)
        b = rng.uniform(*MONOTONIC_SLOPE_RANGE)
        return FunctionSpec.monotonic(family, a, b)
    a = rng.uniform(*PERIODIC_AMPLITUDE_RANGE)
    b = rng.uniform(*PERIODIC_FREQUENCY_RANGE)
    c = rng.uniform(0.0, 2.0 * math.pi)
    return FunctionSpec.periodic(a, b, c)


def eval_function(spec: FunctionSpec, x):
    """Evaluate ``spec`` at ``x`` (a float or a numpy array)."""
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError(f"cannot evaluate {spec.kind.value} function at non-finite input")
    if spec.kind is FunctionKind.IDENTITY:
        return x
    if spec.kind is FunctionKind.LINEAR:
        return spec.params[0] * x
    if spec.kind is FunctionKind.MONOTONIC:
        a, b = spec.params
        if spec.family is MonotonicFamily.TANH:
            return a * np.tanh(b * x)
        return a * np.sign(x) * np.sqrt(np.abs(b * x))
    a, b, c = spec.params
    return a * np.sin(b * x + c)


@dataclass(frozen=True)
class StructuralCausalModel:
    graph: TimeSeriesCausalGraph
    functions: Mapping[EdgePattern, FunctionSpec]
    noise_ar: Mapping[int, FunctionSpec]

    def function_for(self, parent: int, lag: int, child: int) -> FunctionSpec:
        return self.functions[EdgePattern(parent, lag, child)]

    @property
    def is_linear(self) -> bool:
        return all(spec.kind in (FunctionKind.LINEAR, FunctionKind.IDENTITY) for spec in self.functions.values())


def _non_noise_indices(graph: TimeSeriesCausalGraph) -> Tuple[int, ...]:
    return tuple(v.index for v in graph.variables if v.var_type is not VarType.NOISE)


def lag_matrices(scm: StructuralCausalModel) -> np.ndarray:
    """Stack ``B[s][child, parent]`` of linear coefficients among non-noise variables."""
    indices = _non_noise_indices(scm.graph)
    position = {variable: k for k, variable in enumerate(indices)}
    matrices = np.zeros((scm.graph.max_lag + 1, len(indices), len(indices)))
    for pattern, spec in scm.functions.items():
        if spec.kind is FunctionKind.LINEAR and pattern.parent in position:
            matrices[pattern.lag, position[pattern.child], position[pattern.parent]] += spec.params[0]
    return matrices


def companion_spectral_radius(scm: StructuralCausalModel) -> float:
    """Spectral radius of the companion form of the linear part of ``scm``.

    Instantaneous coefficients are folded in through ``(I - B0)^-1``; ``B0`` is nilpotent
    because the lag-0 subgraph is acyclic.
    """
    matrices = lag_matrices(scm)
    max_lag, m = matrices.shape[0] - 1, matrices.shape[1]
    if max_lag == 0 or m == 0:
        return 0.0
    resolvent = np.linalg.inv(np.eye(m) - matrices[0])
    companion = np.zeros((m * max_lag, m * max_lag))
    for s in range(1, max_lag + 1):
        companion[:m, (s - 1) * m:s * m] = resolvent @ matrices[s]
    if max_lag > 1:
        companion[m:, :-m] = np.eye(m * (max_lag - 1))
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def _stabilize(scm: StructuralCausalModel) -> StructuralCausalModel:
    radius = companion_spectral_radius(scm)
    rounds = 0
    while radius >= 1.0 and rounds < MAX_STABILITY_ROUNDS:
        factor = STABILITY_TARGET / radius
        logger.warning("Linear part unstable (spectral radius %.4f); rescaling coefficients by %.4f", radius, factor)
        functions = {
            pattern: FunctionSpec.linear(spec.params[0] * factor) if spec.kind is FunctionKind.LINEAR else spec
            for pattern, spec in scm.functions.items()
        }
        scm = replace(scm, functions=functions)
        radius = companion_spectral_radius(scm)
        rounds += 1
    return scm


def generate_scm(function_config: FunctionConfig, graph: TimeSeriesCausalGraph, seed: int) -> StructuralCausalModel:
    rng = make_rng(seed)
    functions: Dict[EdgePattern, FunctionSpec] = {}
    noise_ar: Dict[int, FunctionSpec] = {}
    by_child: Dict[int, list] = {}
    for pattern in graph.patterns:
        by_child.setdefault(pattern.child, []).append(pattern)

    for variable in graph.variables:
        parents = by_child.get(variable.index, [])
        if variable.var_type is VarType.NOISE:
            # a noise variable can only depend on its own previous value
            if parents:
                noise_ar[variable.index] = FunctionSpec.linear(rng.uniform(*NOISE_AR_RANGE))
            continue
        for pattern in parents:
            if graph.variables[pattern.parent].var_type is VarType.NOISE:
                functions[pattern] = FunctionSpec.identity()
            else:
                functions[pattern] = sample_function(function_config, rng)

    scm = _stabilize(StructuralCausalModel(graph=graph, functions=functions, noise_ar=noise_ar))
    logger.debug("Generated SCM with %d functions and %d noise autoregressions", len(functions), len(noise_ar))
    return scm
