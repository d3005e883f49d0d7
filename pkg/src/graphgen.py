"""Random Full Time Graph generation and its collapse to a Summary Graph.

Nodes of a Full Time Graph are ``(variable, lag)`` pairs, lag 0 being the present.  The
generator decides edges on *patterns*: edges anchored at a lag-0 child,
``X_j(t - s) -> X_i(t)``.  Every pattern is then replicated down the lag axis
(``X_j(t - s - k) -> X_i(t - k)``) so the graph is time invariant by construction, and the
caps checked on patterns bound the parent/child counts of every node.
"""
import logging
from collections import Counter, deque
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Tuple

import networkx as nx

from src.config import CausalGraphConfig, VarType
from src.errors import ConfigError, CycleError
from src.seeding import make_rng

logger = logging.getLogger(__name__)

_NAME_PREFIX = {VarType.TARGET: "Y", VarType.FEATURE: "X", VarType.LATENT: "U"}


@dataclass(frozen=True)
class VariableInfo:
    index: int
    name: str
    var_type: VarType

    @property
    def observed(self) -> bool:
        return self.var_type.observed


@dataclass(frozen=True, order=True)
class NodeId:
    variable: int
    var_type: VarType
    lag: int

    def __str__(self) -> str:
        return f"{self.variable}(t-{self.lag})" if self.lag else f"{self.variable}(t)"


class EdgePattern(NamedTuple):
    """A lag-0-anchored edge ``parent(t - lag) -> child(t)``."""

    parent: int
    lag: int
    child: int


@dataclass(frozen=True)
class TimeSeriesCausalGraph:
    variables: Tuple[VariableInfo, ...]
    max_lag: int
    edges: FrozenSet[Tuple[NodeId, NodeId]]

    @classmethod
    def from_patterns(cls, variables: Iterable[VariableInfo], max_lag: int,
                      patterns: Iterable[EdgePattern]) -> "TimeSeriesCausalGraph":
        variables = tuple(variables)
        edges = set()
        for pattern in patterns:
            parent_type = variables[pattern.parent].var_type
            child_type = variables[pattern.child].var_type
            for k in range(max_lag - pattern.lag + 1):
                edges.add((NodeId(pattern.parent, parent_type, pattern.lag + k),
                           NodeId(pattern.child, child_type, k)))
        return cls(variables=variables, max_lag=max_lag, edges=frozenset(edges))

    @property
    def m_total(self) -> int:
        return len(self.variables)

    @property
    def observed_variables(self) -> Tuple[VariableInfo, ...]:
        return tuple(v for v in self.variables if v.observed)

    def node(self, variable: int, lag: int) -> NodeId:
        return NodeId(variable, self.variables[variable].var_type, lag)

    @cached_property
    def patterns(self) -> Tuple[EdgePattern, ...]:
        found = {EdgePattern(p.variable, p.lag - c.lag, c.variable) for p, c in self.edges if c.lag == 0}
        return tuple(sorted(found))

    @cached_property
    def _adjacency(self) -> Tuple[Dict[NodeId, List[NodeId]], Dict[NodeId, List[NodeId]]]:
        parents: Dict[NodeId, List[NodeId]] = {}
        children: Dict[NodeId, List[NodeId]] = {}
        for parent, child in sorted(self.edges):
            parents.setdefault(child, []).append(parent)
            children.setdefault(parent, []).append(child)
        return parents, children

    def parents(self, node: NodeId) -> List[NodeId]:
        return list(self._adjacency[0].get(node, ()))

    def children(self, node: NodeId) -> List[NodeId]:
        return list(self._adjacency[1].get(node, ()))

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(
            NodeId(v.index, v.var_type, lag) for v in self.variables for lag in range(self.max_lag + 1)
        )
        graph.add_edges_from(sorted(self.edges))
        return graph


@dataclass(frozen=True)
class SummaryGraph:
    nodes: Tuple[int, ...]
    edges: FrozenSet[Tuple[int, int]]


def node_count(graph_config: CausalGraphConfig) -> int:
    base = graph_config.num_targets + graph_config.num_features + graph_config.num_latent
    return (1 + int(graph_config.include_noise)) * base * (1 + graph_config.max_lag)


def build_variables(graph_config: CausalGraphConfig) -> Tuple[VariableInfo, ...]:
    """Targets, features and latents in that order, then one noise variable per each of them."""
    variables: List[VariableInfo] = []
    for var_type, count in ((VarType.TARGET, graph_config.num_targets),
                            (VarType.FEATURE, graph_config.num_features),
                            (VarType.LATENT, graph_config.num_latent)):
        for k in range(count):
            variables.append(VariableInfo(len(variables), f"{_NAME_PREFIX[var_type]}{k + 1}", var_type))
    if graph_config.include_noise:
        for source in list(variables):
            variables.append(VariableInfo(len(variables), f"N_{source.name}", VarType.NOISE))
    return tuple(variables)


def _candidate_parents(child: VariableInfo, non_noise: List[VariableInfo], graph_config: CausalGraphConfig,
                       instantaneous: nx.DiGraph) -> List[Tuple[int, int]]:
    candidates = []
    for parent in non_noise:
        if parent.index == child.index:
            continue
        if child.var_type is VarType.TARGET:
            if parent.var_type is VarType.LATENT and not graph_config.allow_latent_direct_target_cause:
                continue
            if parent.var_type is VarType.TARGET and not graph_config.allow_target_direct_target_cause:
                continue
        for lag in range(graph_config.min_lag, graph_config.max_lag + 1):
            # a lag-0 edge parent -> child must not close a cycle through child
            if lag == 0 and nx.has_path(instantaneous, child.index, parent.index):
                continue
            candidates.append((parent.index, lag))
    return candidates


def _check_graph_config(graph_config: CausalGraphConfig) -> None:
    missing = [name for name, value in graph_config if value is None and not name.endswith("_parent")]
    if missing:
        raise ConfigError(f"graph config is not default-complete: {', '.join(missing)} unset")
    if graph_config.min_lag > graph_config.max_lag:
        raise ConfigError("min_lag > max_lag")
    if graph_config.num_targets + graph_config.num_features < 1:
        raise ConfigError("at least one target or feature is required")


def generate_graph(graph_config: CausalGraphConfig, seed: int) -> TimeSeriesCausalGraph:
    """Draw a random Full Time Graph; a pure function of ``(graph_config, seed)``."""
    _check_graph_config(graph_config)
    rng = make_rng(seed)
    variables = build_variables(graph_config)
    non_noise = [v for v in variables if v.var_type is not VarType.NOISE]
    noise = [v for v in variables if v.var_type is VarType.NOISE]
    max_lag = graph_config.max_lag

    patterns = set()
    for noise_var, source in zip(noise, non_noise):
        patterns.add(EdgePattern(noise_var.index, 0, source.index))

    parent_count: Counter = Counter()
    child_count: Counter = Counter()
    if max_lag > 0:
        for variable in variables:
            if not rng.random() < graph_config.prob_autoregressive(variable.var_type):
                continue
            if variable.var_type is VarType.NOISE:
                patterns.add(EdgePattern(variable.index, 1, variable.index))
                continue
            # the self-edge counts as both a parent and a child of the variable
            if (parent_count[variable.index] < graph_config.max_parents(variable.var_type)
                    and child_count[variable.index] < graph_config.max_children(variable.var_type)):
                patterns.add(EdgePattern(variable.index, 1, variable.index))
                parent_count[variable.index] += 1
                child_count[variable.index] += 1

    instantaneous = nx.DiGraph()
    instantaneous.add_nodes_from(v.index for v in non_noise)
    per_variable_cap = graph_config.max_parents_per_variable

    for child in non_noise:
        candidates = _candidate_parents(child, non_noise, graph_config, instantaneous)
        queue = deque(candidates[i] for i in rng.permutation(len(candidates)))
        from_variable: Counter = Counter()
        prob_edge = graph_config.prob_parent(child.var_type)
        while parent_count[child.index] < graph_config.max_parents(child.var_type) and queue:
            parent_index, lag = queue.popleft()
            add_edge = rng.random() < prob_edge
            parent_type = variables[parent_index].var_type
            if (add_edge
                    and child_count[parent_index] < graph_config.max_children(parent_type)
                    and from_variable[parent_index] < per_variable_cap):
                patterns.add(EdgePattern(parent_index, lag, child.index))
                parent_count[child.index] += 1
                child_count[parent_index] += 1
                from_variable[parent_index] += 1
                if lag == 0:
                    instantaneous.add_edge(parent_index, child.index)
                if from_variable[parent_index] >= per_variable_cap:
                    queue = deque(c for c in queue if c[0] != parent_index)

    graph = TimeSeriesCausalGraph.from_patterns(variables, max_lag, patterns)
    logger.debug("Generated graph: %d variables, %d patterns, %d edges",
                 graph.m_total, len(graph.patterns), len(graph.edges))
    return graph


def summary_graph(fg: TimeSeriesCausalGraph) -> SummaryGraph:
    return SummaryGraph(
        nodes=tuple(range(fg.m_total)),
        edges=frozenset((parent.variable, child.variable) for parent, child in fg.edges),
    )


def topological_order(fg: TimeSeriesCausalGraph) -> List[NodeId]:
    """Parents before children; ties broken by (lag descending, variable ascending)."""
    try:
        return list(nx.lexicographical_topological_sort(fg.to_networkx(), key=lambda n: (-n.lag, n.variable)))
    except nx.NetworkXUnfeasible as e:
        raise CycleError("full time graph contains a cycle") from e
