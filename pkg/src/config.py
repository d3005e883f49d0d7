"""Hierarchical data-generation configuration.

A ``DataGenerationConfig`` is read from a YAML document as a *partial* configuration
(every field optional, unknown keys rejected), completed from a complexity preset and then
validated.  Validation never raises: it returns a ``ValidationReport`` whose findings name the
offending field and the rule it breaks.
"""
import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt, ValidationError

from src.errors import ConfigSyntaxError, TypeMismatchError, UnknownKeyError, ValidationFailed

logger = logging.getLogger(__name__)

Probability = Annotated[float, Field(ge=0.0, le=1.0)]

PROBABILITY_TOLERANCE = 1e-9


class Complexity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class VarType(str, Enum):
    TARGET = "target"
    FEATURE = "feature"
    LATENT = "latent"
    NOISE = "noise"

    @property
    def observed(self) -> bool:
        return self in (VarType.TARGET, VarType.FEATURE)


class FunctionType(str, Enum):
    LINEAR = "linear"
    MONOTONIC = "monotonic"
    PERIODIC = "periodic"


class NoiseDistribution(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    STUDENTS_T = "students_t"
    UNIFORM = "uniform"


class _PartialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CausalGraphConfig(_PartialConfig):
    num_targets: Optional[NonNegativeInt] = None
    num_features: Optional[NonNegativeInt] = None
    num_latent: Optional[NonNegativeInt] = None
    include_noise: Optional[bool] = None
    min_lag: Optional[NonNegativeInt] = None
    max_lag: Optional[NonNegativeInt] = None
    prob_edge: Optional[Probability] = None
    # None means "use prob_edge"
    prob_target_parent: Optional[Probability] = None
    prob_feature_parent: Optional[Probability] = None
    prob_latent_parent: Optional[Probability] = None
    max_target_parents: Optional[NonNegativeInt] = None
    max_feature_parents: Optional[NonNegativeInt] = None
    max_latent_parents: Optional[NonNegativeInt] = None
    max_target_children: Optional[NonNegativeInt] = None
    max_feature_children: Optional[NonNegativeInt] = None
    max_latent_children: Optional[NonNegativeInt] = None
    max_parents_per_variable: Optional[NonNegativeInt] = None
    prob_target_autoregressive: Optional[Probability] = None
    prob_feature_autoregressive: Optional[Probability] = None
    prob_latent_autoregressive: Optional[Probability] = None
    prob_noise_autoregressive: Optional[Probability] = None
    allow_latent_direct_target_cause: Optional[bool] = None
    allow_target_direct_target_cause: Optional[bool] = None

    def prob_parent(self, var_type: VarType) -> float:
        value = getattr(self, f"prob_{var_type.value}_parent")
        return self.prob_edge if value is None else value

    def max_parents(self, var_type: VarType) -> int:
        return getattr(self, f"max_{var_type.value}_parents")

    def max_children(self, var_type: VarType) -> int:
        return getattr(self, f"max_{var_type.value}_children")

    def prob_autoregressive(self, var_type: VarType) -> float:
        return getattr(self, f"prob_{var_type.value}_autoregressive")


class FunctionConfig(_PartialConfig):
    functions: Optional[List[FunctionType]] = None
    prob_functions: Optional[List[Probability]] = None


class NoiseConfig(_PartialConfig):
    distributions: Optional[List[NoiseDistribution]] = None
    prob_distributions: Optional[List[Probability]] = None
    noise_variance: Optional[Union[float, Tuple[float, float]]] = None

    @property
    def variance_range(self) -> Tuple[float, float]:
        if isinstance(self.noise_variance, tuple):
            return self.noise_variance
        return (self.noise_variance, self.noise_variance)


class RuntimeConfig(_PartialConfig):
    num_samples: Optional[List[PositiveInt]] = None
    data_generating_seeds: Optional[List[NonNegativeInt]] = None
    return_observed_data_only: Optional[bool] = None
    keep_warmup: Optional[bool] = None
    burn_in: Optional[NonNegativeInt] = None


class DataGenerationConfig(_PartialConfig):
    complexity: Optional[Complexity] = None
    graph_config: CausalGraphConfig = Field(default_factory=CausalGraphConfig)
    function_config: FunctionConfig = Field(default_factory=FunctionConfig)
    noise_config: NoiseConfig = Field(default_factory=NoiseConfig)
    runtime_config: RuntimeConfig = Field(default_factory=RuntimeConfig)


SECTIONS = ("graph_config", "function_config", "noise_config", "runtime_config")

# Fields whose None value is meaningful after completion.
OPTIONAL_FIELDS = frozenset(
    {
        "graph_config.prob_target_parent",
        "graph_config.prob_feature_parent",
        "graph_config.prob_latent_parent",
    }
)


def _graph_preset(targets, features, latent, min_lag, max_lag, prob_edge, cap, per_variable,
                  prob_ar, prob_noise_ar, allow_latent, allow_target) -> Dict[str, Any]:
    preset = {
        "num_targets": targets,
        "num_features": features,
        "num_latent": latent,
        "include_noise": True,
        "min_lag": min_lag,
        "max_lag": max_lag,
        "prob_edge": prob_edge,
        "max_parents_per_variable": per_variable,
        "prob_noise_autoregressive": prob_noise_ar,
        "allow_latent_direct_target_cause": allow_latent,
        "allow_target_direct_target_cause": allow_target,
    }
    for var_type in ("target", "feature", "latent"):
        preset[f"prob_{var_type}_parent"] = None
        preset[f"max_{var_type}_parents"] = cap
        preset[f"max_{var_type}_children"] = cap
        preset[f"prob_{var_type}_autoregressive"] = prob_ar
    return preset


def _runtime_preset() -> Dict[str, Any]:
    return {
        "num_samples": [1000],
        "data_generating_seeds": [0],
        "return_observed_data_only": True,
        "keep_warmup": False,
        "burn_in": 0,
    }


COMPLEXITY_PRESETS: Dict[Complexity, Dict[str, Dict[str, Any]]] = {
    Complexity.LOW: {
        "graph_config": _graph_preset(1, 3, 0, 1, 2, 0.2, 2, 1, 0.1, 0.0, False, False),
        "function_config": {"functions": ["linear"], "prob_functions": [1.0]},
        "noise_config": {
            "distributions": ["gaussian"],
            "prob_distributions": [1.0],
            "noise_variance": 0.01,
        },
        "runtime_config": _runtime_preset(),
    },
    Complexity.MEDIUM: {
        "graph_config": _graph_preset(1, 5, 1, 1, 5, 0.3, 3, 1, 0.3, 0.1, True, False),
        "function_config": {"functions": ["linear", "monotonic"], "prob_functions": [0.8, 0.2]},
        "noise_config": {
            "distributions": ["gaussian", "laplace"],
            "prob_distributions": [0.8, 0.2],
            "noise_variance": (0.01, 0.05),
        },
        "runtime_config": _runtime_preset(),
    },
    Complexity.HIGH: {
        "graph_config": _graph_preset(2, 10, 2, 0, 5, 0.4, 4, 2, 0.5, 0.3, True, True),
        "function_config": {
            "functions": ["linear", "monotonic", "periodic"],
            "prob_functions": [0.5, 0.3, 0.2],
        },
        "noise_config": {
            "distributions": ["gaussian", "laplace", "students_t", "uniform"],
            "prob_distributions": [0.4, 0.2, 0.2, 0.2],
            "noise_variance": (0.01, 0.1),
        },
        "runtime_config": _runtime_preset(),
    },
}


def _error_location(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _config_from_mapping(raw: Dict[str, Any]) -> DataGenerationConfig:
    try:
        return DataGenerationConfig.model_validate(raw)
    except ValidationError as e:
        errors = e.errors()
        unknown = [_error_location(err) for err in errors if err["type"] == "extra_forbidden"]
        if unknown:
            raise UnknownKeyError(f"unknown config key(s): {', '.join(unknown)}") from e
        details = "; ".join(f"{_error_location(err)}: {err['msg']}" for err in errors)
        raise TypeMismatchError(details) from e


def parse_config(document: str) -> DataGenerationConfig:
    """Parse a YAML config document into a partial configuration."""
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as e:
        raise ConfigSyntaxError(f"malformed config document: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigSyntaxError("config document must be a mapping at the top level")
    return _config_from_mapping(raw)


def load_config(path: Union[str, Path]) -> DataGenerationConfig:
    path = Path(path)
    logger.debug("Loading config from %s", path)
    return parse_config(path.read_text(encoding="utf-8"))


def serialize_config(config: DataGenerationConfig) -> str:
    """Canonical YAML form: every field, declaration order, explicit nulls."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False, default_flow_style=False)


def apply_overrides(config: DataGenerationConfig, overrides: Dict[str, Any]) -> DataGenerationConfig:
    """Return ``config`` with the nested ``overrides`` mapping layered on top of its set fields."""
    merged = config.model_dump(exclude_unset=True)
    for key, value in (overrides or {}).items():
        if key in SECTIONS and isinstance(value, dict):
            merged.setdefault(key, {}).update(value)
        else:
            merged[key] = value
    return _config_from_mapping(merged)


def apply_complexity_defaults(
    partial: DataGenerationConfig,
    complexity: Optional[Union[Complexity, str]] = None,
) -> DataGenerationConfig:
    """Fill every unset field from the complexity preset; user-set fields always win."""
    if complexity is None:
        complexity = partial.complexity or Complexity.MEDIUM
    complexity = Complexity(complexity)
    preset = copy.deepcopy(COMPLEXITY_PRESETS[complexity])
    user = partial.model_dump(exclude_unset=True)

    runtime_user = user.get("runtime_config", {})
    if runtime_user.get("num_samples") is not None and "data_generating_seeds" not in runtime_user:
        preset["runtime_config"]["data_generating_seeds"] = list(range(len(runtime_user["num_samples"])))

    merged: Dict[str, Any] = {"complexity": complexity}
    for section in SECTIONS:
        merged[section] = {**preset[section], **user.get(section, {})}
    return DataGenerationConfig.model_validate(merged)


@dataclass(frozen=True)
class Finding:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


@dataclass
class ValidationReport:
    findings: List[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, field_name: str, rule: str) -> None:
        self.findings.append(Finding(field_name, rule))


def _check_categorical(report: ValidationReport, section: str, names_field: str, probs_field: str,
                       names: Optional[list], probs: Optional[list]) -> None:
    if names is None or probs is None:
        return
    if not names:
        report.add(f"{section}.{names_field}", "must not be empty")
    if len(set(names)) != len(names):
        report.add(f"{section}.{names_field}", "contains duplicates")
    if len(probs) != len(names):
        report.add(f"{section}.{probs_field}",
                   f"length {len(probs)} does not match {len(names)} {names_field}")
    total = sum(probs)
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        report.add(f"{section}.{probs_field}", f"probabilities sum to {total:g} ≠ 1")


def validate(config: DataGenerationConfig) -> ValidationReport:
    """Check every type invariant of a default-complete configuration."""
    report = ValidationReport()
    if config.complexity is None:
        report.add("complexity", "is unset")
    for section in SECTIONS:
        sub = getattr(config, section)
        for name in type(sub).model_fields:
            qualified = f"{section}.{name}"
            if getattr(sub, name) is None and qualified not in OPTIONAL_FIELDS:
                report.add(qualified, "is unset")

    graph = config.graph_config
    if graph.min_lag is not None and graph.max_lag is not None and graph.min_lag > graph.max_lag:
        report.add("graph_config.min_lag", "min_lag > max_lag")
    if graph.num_targets is not None and graph.num_features is not None:
        if graph.num_targets + graph.num_features < 1:
            report.add("graph_config.num_features", "num_targets + num_features must be at least 1")

    functions = config.function_config
    _check_categorical(report, "function_config", "functions", "prob_functions",
                       functions.functions, functions.prob_functions)

    noise = config.noise_config
    _check_categorical(report, "noise_config", "distributions", "prob_distributions",
                       noise.distributions, noise.prob_distributions)
    if noise.noise_variance is not None:
        lo, hi = noise.variance_range
        if lo > hi:
            report.add("noise_config.noise_variance", "range has lo > hi")
        if lo <= 0:
            report.add("noise_config.noise_variance", "variance must be strictly positive")

    runtime = config.runtime_config
    if runtime.num_samples is not None:
        if not runtime.num_samples:
            report.add("runtime_config.num_samples", "must not be empty")
        if runtime.data_generating_seeds is not None and len(runtime.data_generating_seeds) != len(runtime.num_samples):
            report.add("runtime_config.data_generating_seeds",
                       f"length {len(runtime.data_generating_seeds)} does not match "
                       f"{len(runtime.num_samples)} num_samples")
    return report


def require_valid(config: DataGenerationConfig) -> DataGenerationConfig:
    report = validate(config)
    if not report.ok:
        for finding in report.findings:
            logger.error("Invalid config: %s", finding)
        raise ValidationFailed(report)
    return config
