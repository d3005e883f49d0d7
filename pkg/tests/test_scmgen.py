import math

import numpy as np
import pytest

from src.config import Complexity, FunctionConfig, VarType
from src.errors import NonFiniteInputError
from src.graphgen import EdgePattern, TimeSeriesCausalGraph, VariableInfo, generate_graph
from src.scmgen import (
    NOISE_AR_RANGE,
    FunctionKind,
    FunctionSpec,
    MonotonicFamily,
    StructuralCausalModel,
    _stabilize,
    companion_spectral_radius,
    eval_function,
    generate_scm,
    sample_function,
)


def test_sampled_parameters_stay_in_range(rng):
    config = FunctionConfig(functions=["linear", "monotonic", "periodic"], prob_functions=[0.4, 0.3, 0.3])
    kinds = set()
    for _ in range(2000):
        spec = sample_function(config, rng)
        kinds.add(spec.kind)
        if spec.kind is FunctionKind.LINEAR:
            assert 0.2 <= abs(spec.coefficient) <= 0.8
        elif spec.kind is FunctionKind.MONOTONIC:
            a, b = spec.params
            assert spec.family in (MonotonicFamily.TANH, MonotonicFamily.SQRT)
            assert 0.5 <= abs(a) <= 2.0 and 0.5 <= b <= 2.0
        else:
            a, b, c = spec.params
            assert 0.5 <= a <= 2.0 and 0.5 <= b <= 2.0 and 0.0 <= c < 2 * math.pi
    assert kinds == {FunctionKind.LINEAR, FunctionKind.MONOTONIC, FunctionKind.PERIODIC}


def test_linear_only_config_gives_linear_functions(rng):
    config = FunctionConfig(functions=["linear"], prob_functions=[1.0])
    assert all(sample_function(config, rng).kind is FunctionKind.LINEAR for _ in range(200))


def test_eval_function_examples():
    assert eval_function(FunctionSpec.identity(), 1.5) == 1.5
    assert eval_function(FunctionSpec.linear(-0.5), 2.0) == -1.0
    assert eval_function(FunctionSpec.monotonic("tanh", 2.0, 1.0), 0.0) == 0.0
    assert eval_function(FunctionSpec.monotonic("sqrt", 1.0, 4.0), -1.0) == pytest.approx(-2.0)
    assert eval_function(FunctionSpec.periodic(1.0, 1.0, 0.0), math.pi / 2) == pytest.approx(1.0)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(eval_function(FunctionSpec.monotonic("tanh", 1.5, 0.5), x), 1.5 * np.tanh(0.5 * x))


@pytest.mark.parametrize("family", list(MonotonicFamily))
def test_monotonic_functions_are_monotonic(family):
    x = np.linspace(-5, 5, 201)
    increasing = eval_function(FunctionSpec.monotonic(family, 1.2, 0.7), x)
    decreasing = eval_function(FunctionSpec.monotonic(family, -1.2, 0.7), x)
    assert np.all(np.diff(increasing) >= 0)
    assert np.all(np.diff(decreasing) <= 0)


@pytest.mark.parametrize("value", [math.nan, math.inf, np.array([0.0, -math.inf])])
def test_eval_rejects_non_finite_input(value):
    with pytest.raises(NonFiniteInputError):
        eval_function(FunctionSpec.linear(0.3), value)


def test_coefficient_only_on_linear():
    with pytest.raises(AttributeError):
        FunctionSpec.periodic(1.0, 1.0, 0.0).coefficient


@pytest.mark.parametrize("complexity", list(Complexity))
def test_every_edge_gets_a_function(make_config, complexity):
    config = make_config(complexity, graph_config={"prob_noise_autoregressive": 0.5})
    graph = generate_graph(config.graph_config, seed=5)
    scm = generate_scm(config.function_config, graph, seed=6)
    noise = {v.index for v in graph.variables if v.var_type is VarType.NOISE}
    expected = {p for p in graph.patterns if p.child not in noise}
    assert set(scm.functions) == expected
    for pattern, spec in scm.functions.items():
        if pattern.parent in noise:
            assert spec.kind is FunctionKind.IDENTITY
        else:
            assert spec.kind is not FunctionKind.IDENTITY
    ar_noise = {p.child for p in graph.patterns if p.child in noise}
    assert set(scm.noise_ar) == ar_noise
    for spec in scm.noise_ar.values():
        assert NOISE_AR_RANGE[0] <= spec.coefficient <= NOISE_AR_RANGE[1]


def test_scm_generation_is_deterministic(make_config):
    config = make_config(Complexity.HIGH)
    graph = generate_graph(config.graph_config, seed=1)
    first = generate_scm(config.function_config, graph, seed=9)
    second = generate_scm(config.function_config, graph, seed=9)
    assert dict(first.functions) == dict(second.functions)
    assert dict(first.noise_ar) == dict(second.noise_ar)
    assert first.function_for(*next(iter(first.functions))) == next(iter(first.functions.values()))


def _two_variable_model(ar: float, lag0: float = 0.0) -> StructuralCausalModel:
    variables = (VariableInfo(0, "X1", VarType.FEATURE), VariableInfo(1, "X2", VarType.FEATURE))
    functions = {EdgePattern(1, 1, 0): FunctionSpec.linear(ar)}
    if lag0:
        functions[EdgePattern(0, 0, 1)] = FunctionSpec.linear(lag0)
    graph = TimeSeriesCausalGraph.from_patterns(variables, 1, functions)
    return StructuralCausalModel(graph=graph, functions=functions, noise_ar={})


def test_companion_radius_folds_in_instantaneous_effects():
    # X1(t) = a X2(t-1), X2(t) = b X1(t)  =>  X2(t) = ab X2(t-1)
    assert companion_spectral_radius(_two_variable_model(0.5, 0.8)) == pytest.approx(0.4)
    assert companion_spectral_radius(_two_variable_model(0.5)) == pytest.approx(0.0)


def test_stabilize_rescales_explosive_linear_part():
    variables = (VariableInfo(0, "X1", VarType.FEATURE),)
    functions = {EdgePattern(0, 1, 0): FunctionSpec.linear(1.6)}
    graph = TimeSeriesCausalGraph.from_patterns(variables, 1, functions)
    scm = _stabilize(StructuralCausalModel(graph=graph, functions=functions, noise_ar={}))
    assert companion_spectral_radius(scm) == pytest.approx(0.95)
    assert scm.function_for(0, 1, 0).coefficient == pytest.approx(0.95)


@pytest.mark.parametrize("seed", range(25))
def test_generated_models_are_stable(make_config, seed):
    config = make_config(Complexity.HIGH, graph_config={"prob_edge": 0.8},
                         function_config={"functions": ["linear"], "prob_functions": [1.0]})
    graph = generate_graph(config.graph_config, seed)
    scm = generate_scm(config.function_config, graph, seed + 1000)
    assert companion_spectral_radius(scm) < 1.0
    assert scm.is_linear
