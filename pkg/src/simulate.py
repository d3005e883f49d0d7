"""Time series simulation from a structural causal model.

For each ``(num_samples, seed)`` pair of the runtime config a fresh generator is seeded, one
noise series is drawn per noise variable (variance first, then distribution), noise
autoregression is applied, and the non-noise variables are evaluated in topological order of
the lag-0 graph for every time step from ``max_lag`` on.  Rows before ``max_lag`` stay zero
and are trimmed unless ``keep_warmup`` is set.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from src.config import DataGenerationConfig, NoiseConfig, NoiseDistribution, RuntimeConfig, VarType, require_valid
from src.errors import NumericalDivergenceError
from src.graphgen import VariableInfo, topological_order
from src.scmgen import FunctionKind, FunctionSpec, StructuralCausalModel, eval_function
from src.seeding import make_rng

logger = logging.getLogger(__name__)

STUDENT_T_DOF = 5
DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class NoiseDraw:
    variable: int
    distribution: NoiseDistribution
    variance: float
    values: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    columns: Tuple[VariableInfo, ...]
    seed: int
    num_samples: int
    noise_draws: Tuple[NoiseDraw, ...] = field(default=(), repr=False, compare=False)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=self.names)


def _draw(distribution: NoiseDistribution, variance: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if distribution is NoiseDistribution.GAUSSIAN:
        return rng.normal(0.0, math.sqrt(variance), n)
    if distribution is NoiseDistribution.LAPLACE:
        return rng.laplace(0.0, math.sqrt(variance / 2.0), n)
    if distribution is NoiseDistribution.STUDENTS_T:
        scale = math.sqrt(variance * (STUDENT_T_DOF - 2) / STUDENT_T_DOF)
        return rng.standard_t(STUDENT_T_DOF, n) * scale
    half_width = math.sqrt(3.0 * variance)
    return rng.uniform(-half_width, half_width, n)


def sample_noise(noise_config: NoiseConfig, n: int, rng: np.random.Generator, variable: int = 0) -> NoiseDraw:
    """Draw ``n`` IID noise values with population variance equal to the realized variance."""
    if n < 1:
        raise ValueError("noise series length must be at least 1")
    if isinstance(noise_config.noise_variance, tuple):
        variance = float(rng.uniform(*noise_config.noise_variance))
    else:
        variance = float(noise_config.noise_variance)
    choice = rng.choice(len(noise_config.distributions), p=np.asarray(noise_config.prob_distributions, dtype=float))
    distribution = NoiseDistribution(noise_config.distributions[int(choice)])
    return NoiseDraw(variable, distribution, variance, _draw(distribution, variance, n, rng))


def apply_noise_ar(scm: StructuralCausalModel, noise_series: Dict[int, np.ndarray]) -> Dict[int, np.ndarray]:
    """``N(t) <- N(t) + f(N(t-1))`` for t >= 1, in place, for every autoregressive noise variable."""
    for variable, spec in sorted(scm.noise_ar.items()):
        if variable not in noise_series:
            continue
        if spec.kind is not FunctionKind.LINEAR:
            raise ValueError("noise autoregression must be linear")
        series = noise_series[variable]
        series[:] = lfilter([1.0], [1.0, -spec.params[0]], series)
    return noise_series


@dataclass(frozen=True)
class _ChildPlan:
    variable: int
    linear_vars: np.ndarray
    linear_lags: np.ndarray
    linear_coefs: np.ndarray
    nonlinear: Tuple[Tuple[int, int, FunctionSpec], ...]


def _build_plan(scm: StructuralCausalModel) -> List[_ChildPlan]:
    order = [
        node.variable for node in topological_order(scm.graph)
        if node.lag == 0 and node.var_type is not VarType.NOISE
    ]
    by_child: Dict[int, list] = {}
    for pattern, spec in sorted(scm.functions.items()):
        by_child.setdefault(pattern.child, []).append((pattern, spec))

    plan = []
    for child in order:
        linear, nonlinear = [], []
        for pattern, spec in by_child.get(child, []):
            if spec.kind is FunctionKind.IDENTITY:
                linear.append((pattern.parent, pattern.lag, 1.0))
            elif spec.kind is FunctionKind.LINEAR:
                linear.append((pattern.parent, pattern.lag, spec.params[0]))
            else:
                nonlinear.append((pattern.parent, pattern.lag, spec))
        plan.append(_ChildPlan(
            variable=child,
            linear_vars=np.array([v for v, _, _ in linear], dtype=int),
            linear_lags=np.array([s for _, s, _ in linear], dtype=int),
            linear_coefs=np.array([c for _, _, c in linear], dtype=float),
            nonlinear=tuple(nonlinear),
        ))
    return plan


def _simulate_one(scm: StructuralCausalModel, plan: List[_ChildPlan], noise_config: NoiseConfig,
                  runtime_config: RuntimeConfig, num_samples: int, seed: int) -> Dataset:
    graph = scm.graph
    max_lag = graph.max_lag
    warmup = 0 if runtime_config.keep_warmup else max_lag
    skip = warmup + runtime_config.burn_in
    total = num_samples + skip

    rng = make_rng(seed)
    values = np.zeros((total, graph.m_total))
    draws = []
    for variable in graph.variables:
        if variable.var_type is VarType.NOISE:
            draws.append(sample_noise(noise_config, total, rng, variable=variable.index))
    series = apply_noise_ar(scm, {d.variable: d.values.copy() for d in draws})
    for variable, noise in series.items():
        values[:, variable] = noise

    for t in range(max_lag, total):
        for child in plan:
            value = values[t - child.linear_lags, child.linear_vars] @ child.linear_coefs
            for parent, lag, spec in child.nonlinear:
                value += eval_function(spec, values[t - lag, parent])
            values[t, child.variable] = value
        if not np.all(np.abs(values[t]) <= DIVERGENCE_LIMIT):
            raise NumericalDivergenceError(
                f"simulation diverged at t={t} (seed {seed}); |value| exceeded {DIVERGENCE_LIMIT:g}"
            )

    columns = graph.variables
    if runtime_config.return_observed_data_only:
        columns = tuple(v for v in columns if v.observed)
    values = values[skip:, [c.index for c in columns]]
    logger.debug("Simulated dataset: seed=%d rows=%d columns=%d", seed, values.shape[0], values.shape[1])
    return Dataset(values=values, columns=tuple(columns), seed=int(seed), num_samples=int(num_samples),
                   noise_draws=tuple(draws))


def generate_dataset(scm: StructuralCausalModel, noise_config: NoiseConfig,
                     runtime_config: RuntimeConfig) -> List[Dataset]:
    plan = _build_plan(scm)
    datasets = [
        _simulate_one(scm, plan, noise_config, runtime_config, num_samples, seed)
        for num_samples, seed in zip(runtime_config.num_samples, runtime_config.data_generating_seeds)
    ]
    logger.info("Generated %d dataset(s) from SCM with %d variables", len(datasets), scm.graph.m_total)
    return datasets


def regenerate(scm: StructuralCausalModel, config: DataGenerationConfig,
               noise_override: Optional[NoiseConfig] = None,
               runtime_override: Optional[RuntimeConfig] = None) -> List[Dataset]:
    """Re-simulate a stored SCM, replacing only the noise and/or runtime settings.

    Overrides are partial: only their set fields replace the stored config's values.
    """
    noise = config.noise_config
    if noise_override is not None:
        noise = noise.model_copy(update=noise_override.model_dump(exclude_unset=True))
    runtime = config.runtime_config
    if runtime_override is not None:
        update = runtime_override.model_dump(exclude_unset=True)
        if "num_samples" in update and "data_generating_seeds" not in update:
            update["data_generating_seeds"] = list(range(len(update["num_samples"])))
        runtime = runtime.model_copy(update=update)
    merged = require_valid(config.model_copy(update={"noise_config": noise, "runtime_config": runtime}))
    return generate_dataset(scm, merged.noise_config, merged.runtime_config)
