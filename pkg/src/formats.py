"""Line-oriented graph / SCM / prediction documents and dataset CSV files.

A graph document looks like::

    tsbench-graph 1
    m_total 4
    max_lag 2
    variable 0 Y1 target observed
    edge 1 1 0 0 directed

SCM documents append ``function`` and ``noise_ar`` records.  Prediction files are graph
documents too; an ``undirected`` flag on a lag-0 edge marks an unoriented pair.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import pandas as pd

from src.config import NoiseDistribution, VarType
from src.errors import ParseError
from src.graphgen import EdgePattern, NodeId, TimeSeriesCausalGraph, VariableInfo
from src.metrics import LinkSet
from src.scmgen import FunctionKind, FunctionSpec, MonotonicFamily, StructuralCausalModel
from src.simulate import Dataset, NoiseDraw

logger = logging.getLogger(__name__)

GRAPH_HEADER = "tsbench-graph 1"
PathLike = Union[str, Path]


def _graph_lines(graph: TimeSeriesCausalGraph) -> List[str]:
    lines = [GRAPH_HEADER, f"m_total {graph.m_total}", f"max_lag {graph.max_lag}"]
    for v in graph.variables:
        lines.append(f"variable {v.index} {v.name} {v.var_type.value} {'observed' if v.observed else 'hidden'}")
    for parent, child in sorted(graph.edges, key=lambda e: (e[0].variable, e[0].lag, e[1].variable, e[1].lag)):
        lines.append(f"edge {parent.variable} {parent.lag} {child.variable} {child.lag} directed")
    return lines


def dump_graph(graph: TimeSeriesCausalGraph) -> str:
    return "\n".join(_graph_lines(graph)) + "\n"


def _records(text: str) -> Iterator[Tuple[int, List[str]]]:
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield number, line.split()


def _int(token: str, number: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"line {number}: expected an integer, got {token!r}") from None


def _float(token: str, number: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"line {number}: expected a number, got {token!r}") from None


class _GraphDocument:
    """Parsed header, variables and raw edge records of a graph document."""

    def __init__(self, text: str):
        self.m_total: Optional[int] = None
        self.max_lag: Optional[int] = None
        self.variables: Dict[int, VariableInfo] = {}
        self.edges: List[Tuple[int, int, int, int, bool]] = []
        self.rest: List[Tuple[int, List[str]]] = []

        records = list(_records(text))
        if not records or " ".join(records[0][1]) != GRAPH_HEADER:
            raise ParseError(f"missing '{GRAPH_HEADER}' header")
        for number, fields in records[1:]:
            kind = fields[0]
            if kind == "m_total" and len(fields) == 2:
                self.m_total = _int(fields[1], number)
            elif kind == "max_lag" and len(fields) == 2:
                self.max_lag = _int(fields[1], number)
            elif kind == "variable" and len(fields) == 5:
                self._add_variable(number, fields)
            elif kind == "edge" and len(fields) == 6:
                self._add_edge(number, fields)
            elif kind in ("function", "noise_ar"):
                self.rest.append((number, fields))
            else:
                raise ParseError(f"line {number}: unrecognized record {' '.join(fields)!r}")
        if self.m_total is None or self.max_lag is None:
            raise ParseError("graph document lacks m_total or max_lag")
        if sorted(self.variables) != list(range(self.m_total)):
            raise ParseError(f"expected variables 0..{self.m_total - 1}, got {sorted(self.variables)}")

    def _add_variable(self, number: int, fields: List[str]) -> None:
        index = _int(fields[1], number)
        try:
            var_type = VarType(fields[3])
        except ValueError:
            raise ParseError(f"line {number}: unknown variable type {fields[3]!r}") from None
        if fields[4] not in ("observed", "hidden") or (fields[4] == "observed") != var_type.observed:
            raise ParseError(f"line {number}: observed flag {fields[4]!r} contradicts type {var_type.value}")
        if index in self.variables:
            raise ParseError(f"line {number}: duplicate variable {index}")
        self.variables[index] = VariableInfo(index, fields[2], var_type)

    def _add_edge(self, number: int, fields: List[str]) -> None:
        pv, pl, cv, cl = (_int(token, number) for token in fields[1:5])
        if fields[5] not in ("directed", "undirected"):
            raise ParseError(f"line {number}: direction flag must be 'directed' or 'undirected'")
        undirected = fields[5] == "undirected"
        if pl < cl:
            raise ParseError(f"line {number}: edge points backwards in time")
        if undirected and pl != cl:
            raise ParseError(f"line {number}: only lag-0 edges may be undirected")
        self.edges.append((pv, pl, cv, cl, undirected))

    def graph(self) -> TimeSeriesCausalGraph:
        variables = tuple(self.variables[k] for k in range(self.m_total))
        edges = set()
        for pv, pl, cv, cl, undirected in self.edges:
            if undirected:
                raise ParseError("a ground-truth graph cannot contain undirected edges")
            if not (0 <= pv < self.m_total and 0 <= cv < self.m_total) or cl < 0 or pl > self.max_lag:
                raise ParseError(f"edge {pv} {pl} {cv} {cl} lies outside the graph")
            edges.add((NodeId(pv, variables[pv].var_type, pl), NodeId(cv, variables[cv].var_type, cl)))
        return TimeSeriesCausalGraph(variables=variables, max_lag=self.max_lag, edges=frozenset(edges))


def load_graph_text(text: str) -> TimeSeriesCausalGraph:
    return _GraphDocument(text).graph()


def load_links_text(text: str, l_max: int) -> LinkSet:
    """Project a graph or prediction document onto its observed variables.

    Lag-replicated copies of an edge collapse onto one ``(i, j, s)`` link.
    """
    document = _GraphDocument(text)
    observed = [document.variables[k] for k in range(document.m_total) if document.variables[k].observed]
    position = {v.index: k for k, v in enumerate(observed)}
    links, undirected = set(), set()
    for pv, pl, cv, cl, is_undirected in document.edges:
        if pv not in document.variables or cv not in document.variables:
            raise ParseError(f"edge {pv} {pl} {cv} {cl} references an unknown variable")
        if pv not in position or cv not in position:
            continue
        i, j, s = position[pv], position[cv], pl - cl
        if is_undirected:
            undirected.add(frozenset((i, j)))
        else:
            links.add((i, j, s))
    return LinkSet(m=len(observed), l_max=l_max, links=frozenset(links),
                   undirected_contemporaneous=frozenset(undirected), names=tuple(v.name for v in observed))


def dump_links(links: LinkSet) -> str:
    """A prediction document over ``links.m`` observed variables."""
    names = links.names or tuple(f"X{k + 1}" for k in range(links.m))
    lines = [GRAPH_HEADER, f"m_total {links.m}", f"max_lag {links.l_max}"]
    lines += [f"variable {k} {name} feature observed" for k, name in enumerate(names)]
    lines += [f"edge {i} {s} {j} 0 directed" for i, j, s in sorted(links.links)]
    lines += [f"edge {min(p)} 0 {max(p)} 0 undirected" for p in sorted(links.undirected_contemporaneous, key=sorted)]
    return "\n".join(lines) + "\n"


def _function_line(pattern: EdgePattern, spec: FunctionSpec) -> str:
    params = list(spec.params) + [0.0] * (3 - len(spec.params))
    family = spec.family.value if spec.family is not None else "-"
    return (f"function {pattern.parent} {pattern.lag} {pattern.child} {spec.kind.value} {family} "
            + " ".join(repr(float(p)) for p in params))


def dump_scm(scm: StructuralCausalModel) -> str:
    lines = _graph_lines(scm.graph)
    lines += [_function_line(pattern, spec) for pattern, spec in sorted(scm.functions.items())]
    lines += [f"noise_ar {variable} {spec.params[0]!r}" for variable, spec in sorted(scm.noise_ar.items())]
    return "\n".join(lines) + "\n"


_PARAM_COUNT = {FunctionKind.IDENTITY: 0, FunctionKind.LINEAR: 1, FunctionKind.MONOTONIC: 2, FunctionKind.PERIODIC: 3}


def load_scm_text(text: str) -> StructuralCausalModel:
    document = _GraphDocument(text)
    graph = document.graph()
    known = set(graph.patterns)
    functions: Dict[EdgePattern, FunctionSpec] = {}
    noise_ar: Dict[int, FunctionSpec] = {}
    for number, fields in document.rest:
        if fields[0] == "noise_ar":
            if len(fields) != 3:
                raise ParseError(f"line {number}: noise_ar needs a variable and a coefficient")
            noise_ar[_int(fields[1], number)] = FunctionSpec.linear(_float(fields[2], number))
            continue
        if len(fields) != 9:
            raise ParseError(f"line {number}: function records have 8 fields")
        pattern = EdgePattern(*(_int(token, number) for token in fields[1:4]))
        if pattern not in known:
            raise ParseError(f"line {number}: function for missing edge {tuple(pattern)}")
        try:
            kind = FunctionKind(fields[4])
            family = None if fields[5] == "-" else MonotonicFamily(fields[5])
        except ValueError:
            raise ParseError(f"line {number}: unknown function kind or family") from None
        params = tuple(_float(token, number) for token in fields[6:9])[:_PARAM_COUNT[kind]]
        functions[pattern] = FunctionSpec(kind, params, family)
    return StructuralCausalModel(graph=graph, functions=functions, noise_ar=noise_ar)


def _read(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e


def save_graph(graph: TimeSeriesCausalGraph, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_graph(graph), encoding="utf-8")
    return path


def load_graph(path: PathLike) -> TimeSeriesCausalGraph:
    return load_graph_text(_read(path))


def save_scm(scm: StructuralCausalModel, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_scm(scm), encoding="utf-8")
    return path


def load_scm(path: PathLike) -> StructuralCausalModel:
    return load_scm_text(_read(path))


def save_links(links: LinkSet, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_links(links), encoding="utf-8")
    return path


def load_links(path: PathLike, l_max: int) -> LinkSet:
    return load_links_text(_read(path), l_max)


def sidecar_path(csv_path: PathLike) -> Path:
    return Path(csv_path).with_suffix(".json")


def save_dataset(dataset: Dataset, path: PathLike, scm_file: Optional[str] = None) -> Path:
    """Write ``dataset`` as CSV plus a JSON sidecar with its provenance."""
    path = Path(path)
    dataset.to_frame().to_csv(path, index=False, lineterminator="\n")
    meta = {
        "seed": dataset.seed,
        "num_samples": dataset.num_samples,
        "columns": [{"name": c.name, "type": c.var_type.value, "observed": c.observed} for c in dataset.columns],
        "noise_draws": [
            {"variable": d.variable, "distribution": d.distribution.value, "variance": d.variance}
            for d in dataset.noise_draws
        ],
        "scm_file": scm_file,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("Wrote dataset %s (%d rows)", path, len(dataset.values))
    return path


def load_dataset(path: PathLike) -> Dataset:
    """Read a dataset CSV; without a sidecar every column is taken as an observed feature."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read dataset {path}: {e}") from e
    values = frame.to_numpy(dtype=float)
    sidecar = sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        # sidecar variable indices refer to the generating SCM, so columns are re-indexed here
        columns = tuple(VariableInfo(k, c["name"], VarType(c["type"])) for k, c in enumerate(meta["columns"]))
        if [c.name for c in columns] != list(frame.columns):
            raise ParseError(f"{sidecar} does not match the columns of {path}")
        draws = tuple(
            NoiseDraw(d["variable"], NoiseDistribution(d["distribution"]), d["variance"], values=None) for d in meta.get("noise_draws", [])
        )
        return Dataset(values=values, columns=columns, seed=int(meta["seed"]),
                       num_samples=int(meta["num_samples"]), noise_draws=draws)
    columns = tuple(VariableInfo(k, str(name), VarType.FEATURE) for k, name in enumerate(frame.columns))
    return Dataset(values=values, columns=columns, seed=0, num_samples=len(values))
