"""Experiment sweeps: generate SCMs per sweep point, run methods, score and aggregate.

Every run is addressed by ``(point, index)``.  Its graph, SCM, data and feature-count seeds are
derived from the experiment's master seed, so any run can be regenerated on its own.  With a
work directory each run leaves its artifacts and a JSON record under ``runs/<run_id>/``; a
record whose provenance digest matches is reused instead of recomputed.

External methods are given as ``name=directory`` and must provide one prediction document per
run at ``<directory>/point<PP>/scm<IIII>.txt``.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt, ValidationError, field_validator

from src.config import Complexity, DataGenerationConfig, apply_complexity_defaults, apply_overrides, require_valid
from src.errors import ConfigSyntaxError, ExportError, MissingPredictionError, TsBenchError, TypeMismatchError
from src.formats import load_links, save_dataset, save_graph, save_links, save_scm
from src.granger import GrangerParams, discover
from src.graphgen import generate_graph
from src.metrics import GraphScore, LinkSet, expand_undirected, score_graph
from src.scmgen import generate_scm
from src.seeding import Stage, derive_seed, make_rng
from src.simulate import generate_dataset

logger = logging.getLogger(__name__)

GRANGER = "granger"
BUILTIN_METHODS = (GRANGER,)
METRICS = ("f1", "shd", "ntp", "nfp", "nfn", "tpr", "fpr", "fnr")
COUNTS = ("tp", "fp", "fn", "tn", "universe")
SWEEP_GRID = (1.0, 0.75, 0.5, 0.25, 0.0)
IID_SAMPLE_GRID = (100, 250, 500, 1000)
LATENT_GRID = (0, 5, 10, 15, 20)
FEATURE_RANGE = (4, 14)
DEFAULT_L_MAX = 5


class ExperimentName(str, Enum):
    CAUSAL_SUFFICIENCY = "causal_sufficiency"
    NON_LINEAR = "non_linear"
    INSTANTANEOUS = "instantaneous"
    IID = "iid"
    NON_GAUSSIAN_NOISE = "non_gaussian_noise"
    CUSTOM = "custom"


class Scale(str, Enum):
    PAPER = "paper"
    DESK = "desk"

    @classmethod
    def _missing_(cls, value):
        # "full" names the large scale too
        if value == "full":
            return cls.PAPER
        return None


SCALES = {Scale.PAPER: (200, 1000), Scale.DESK: (25, 500)}
SCALE_CHOICES = [s.value for s in Scale] + ["full"]


class SweepPoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str
    value: Optional[float] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: ExperimentName
    sweep: List[SweepPoint] = Field(min_length=1)
    scm_count: PositiveInt
    samples_per_dataset: PositiveInt
    master_seed: NonNegativeInt = 0
    methods: List[str] = Field(default_factory=lambda: [GRANGER])
    l_max: NonNegativeInt = DEFAULT_L_MAX
    complexity: Complexity = Complexity.MEDIUM
    base_overrides: Dict[str, Any] = Field(default_factory=dict)
    granger: GrangerParams = Field(default_factory=GrangerParams)
    # inclusive range of feature counts drawn per SCM; None keeps the config's num_features
    feature_count_range: Optional[Tuple[PositiveInt, PositiveInt]] = None

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: List[str]) -> List[str]:
        for entry in methods:
            if "=" not in entry and entry not in BUILTIN_METHODS:
                raise ValueError(f"unknown method {entry!r}; use one of {BUILTIN_METHODS} or name=directory")
        return methods


class MethodScore(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    method: str
    scores: Optional[Dict[str, float]] = None
    error: Optional[str] = None


class RunRecord(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    point: int
    point_label: str
    index: int
    graph_seed: int
    scm_seed: int
    data_seed: int
    provenance: str
    config: Dict[str, Any]
    error: Optional[str] = None
    results: List[MethodScore] = Field(default_factory=list)

    @property
    def run_id(self) -> str:
        return run_id(self.point, self.index)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    runs: Tuple[RunRecord, ...]

    def raw_frame(self) -> pd.DataFrame:
        rows = []
        for run in self.runs:
            for result in run.results:
                row = {"run_id": run.run_id, "point": run.point, "point_label": run.point_label,
                       "index": run.index, "method": result.method, "error": result.error or ""}
                for name in COUNTS + METRICS:
                    row[name] = (result.scores or {}).get(name, np.nan)
                rows.append(row)
        columns = ["run_id", "point", "point_label", "index", "method", "error", *COUNTS, *METRICS]
        return pd.DataFrame(rows, columns=columns)

    @property
    def aggregates(self) -> pd.DataFrame:
        return aggregate(self.raw_frame())


def run_id(point: int, index: int) -> str:
    return f"point{point:02d}-scm{index:04d}"


def _method_parts(entry: str) -> Tuple[str, Optional[Path]]:
    if "=" in entry:
        name, directory = entry.split("=", 1)
        return name, Path(directory)
    return entry, None


def prediction_path(directory: Path, point: int, index: int) -> Path:
    return directory / f"point{point:02d}" / f"scm{index:04d}.txt"


# --- presets -----------------------------------------------------------------------------------

_LINEAR = {"functions": ["linear"], "prob_functions": [1.0]}
_GAUSSIAN = {"distributions": ["gaussian"], "prob_distributions": [1.0]}


def _fraction_label(name: str, q: float) -> str:
    return f"{name}={q:g}"


def preset_experiments(scale: Union[Scale, str] = Scale.DESK, master_seed: int = 0) -> List[ExperimentSpec]:
    """The five assumption-violation sweeps at paper (full) or desk scale."""
    scm_count, samples = SCALES[Scale(scale)]
    common = dict(scm_count=scm_count, samples_per_dataset=samples, master_seed=master_seed, l_max=DEFAULT_L_MAX)
    sufficient = {"num_targets": 1, "num_latent": 0}

    causal_sufficiency = ExperimentSpec(
        name=ExperimentName.CAUSAL_SUFFICIENCY,
        sweep=[SweepPoint(label=f"latent={k}", value=k, overrides={"graph_config": {"num_latent": k}})
               for k in LATENT_GRID],
        base_overrides={"graph_config": {"num_targets": 0, "num_features": 10},
                        "function_config": _LINEAR, "noise_config": _GAUSSIAN},
        **common,
    )
    non_linear = ExperimentSpec(
        name=ExperimentName.NON_LINEAR,
        sweep=[SweepPoint(label=_fraction_label("linear", q), value=q, overrides={"function_config": {
            "functions": ["linear", "monotonic", "periodic"],
            "prob_functions": [q, (1 - q) / 2, (1 - q) / 2],
        }}) for q in SWEEP_GRID],
        base_overrides={"graph_config": sufficient, "noise_config": _GAUSSIAN},
        feature_count_range=FEATURE_RANGE,
        **common,
    )
    instantaneous = ExperimentSpec(
        name=ExperimentName.INSTANTANEOUS,
        sweep=[SweepPoint(label=f"min_lag={lag}", value=lag, overrides={"graph_config": {"min_lag": lag}})
               for lag in (1, 0)],
        base_overrides={"graph_config": sufficient, "function_config": _LINEAR, "noise_config": _GAUSSIAN},
        feature_count_range=FEATURE_RANGE,
        **common,
    )
    iid = ExperimentSpec(
        name=ExperimentName.IID,
        sweep=[SweepPoint(label=f"samples={n}", value=n, overrides={"runtime_config": {"num_samples": [n]}})
               for n in IID_SAMPLE_GRID],
        base_overrides={"graph_config": {**sufficient, "min_lag": 0, "max_lag": 0},
                        "function_config": _LINEAR, "noise_config": _GAUSSIAN},
        feature_count_range=FEATURE_RANGE,
        **common,
    )
    non_gaussian = ExperimentSpec(
        name=ExperimentName.NON_GAUSSIAN_NOISE,
        sweep=[SweepPoint(label=_fraction_label("gaussian", q), value=q, overrides={"noise_config": {
            "distributions": ["gaussian", "laplace", "students_t", "uniform"],
            "prob_distributions": [q, (1 - q) / 3, (1 - q) / 3, (1 - q) / 3],
        }}) for q in SWEEP_GRID],
        base_overrides={"graph_config": sufficient, "function_config": _LINEAR},
        feature_count_range=FEATURE_RANGE,
        **common,
    )
    return [causal_sufficiency, non_linear, instantaneous, iid, non_gaussian]


def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpec:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigSyntaxError(f"malformed experiment spec {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigSyntaxError("experiment spec must be a mapping at the top level")
    raw.setdefault("name", ExperimentName.CUSTOM.value)
    try:
        return ExperimentSpec.model_validate(raw)
    except ValidationError as e:
        raise TypeMismatchError(str(e)) from e


# --- single runs -------------------------------------------------------------------------------

def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = {key: dict(value) if isinstance(value, dict) else value for key, value in base.items()}
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def build_run_config(spec: ExperimentSpec, point: int, index: int) -> DataGenerationConfig:
    """The complete config of run ``(point, index)``: preset, then base, size, runtime and point overrides."""
    overrides = _merge(spec.base_overrides, {"runtime_config": {
        "num_samples": [spec.samples_per_dataset],
        "data_generating_seeds": [derive_seed(spec.master_seed, point, index, Stage.DATA)],
    }})
    if spec.feature_count_range is not None:
        low, high = spec.feature_count_range
        size_rng = make_rng(derive_seed(spec.master_seed, point, index, Stage.SIZE))
        overrides = _merge(overrides, {"graph_config": {"num_features": int(size_rng.integers(low, high + 1))}})
    overrides = _merge(overrides, spec.sweep[point].overrides)
    partial = apply_overrides(DataGenerationConfig(), overrides)
    return require_valid(apply_complexity_defaults(partial, spec.complexity))


def _provenance(spec: ExperimentSpec, config: DataGenerationConfig, seeds: Tuple[int, int]) -> str:
    payload = {
        "config": config.model_dump(mode="json"),
        "seeds": list(seeds),
        "methods": spec.methods,
        "l_max": spec.l_max,
        "granger": spec.granger.model_dump(mode="json"),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _score_dict(score: GraphScore) -> Dict[str, float]:
    return {name: float(value) for name, value in score.as_dict().items()}


@dataclass(frozen=True)
class _RunTask:
    spec: ExperimentSpec
    point: int
    index: int
    work_dir: Optional[Path] = None


def _execute_run(task: _RunTask) -> RunRecord:
    spec, point, index = task.spec, task.point, task.index
    graph_seed = derive_seed(spec.master_seed, point, index, Stage.GRAPH)
    scm_seed = derive_seed(spec.master_seed, point, index, Stage.SCM)
    try:
        config = build_run_config(spec, point, index)
    except (TsBenchError, ValueError) as e:
        logger.warning("Run %s has an invalid config: %s", run_id(point, index), e)
        return RunRecord(
            point=point, point_label=spec.sweep[point].label, index=index,
            graph_seed=graph_seed, scm_seed=scm_seed,
            data_seed=derive_seed(spec.master_seed, point, index, Stage.DATA),
            provenance="", config={}, error=f"{type(e).__name__}: {e}",
        )
    record = RunRecord(
        point=point, point_label=spec.sweep[point].label, index=index,
        graph_seed=graph_seed, scm_seed=scm_seed,
        data_seed=config.runtime_config.data_generating_seeds[0],
        provenance=_provenance(spec, config, (graph_seed, scm_seed)),
        config=config.model_dump(mode="json"),
    )

    run_dir = task.work_dir / "runs" / record.run_id if task.work_dir is not None else None
    record_file = run_dir / "record.json" if run_dir is not None else None
    if record_file is not None and record_file.exists():
        stored = RunRecord.model_validate_json(record_file.read_text(encoding="utf-8"))
        if stored.provenance == record.provenance:
            logger.debug("Reusing completed run %s", record.run_id)
            return stored
        logger.info("Provenance changed for %s; recomputing", record.run_id)

    try:
        graph = generate_graph(config.graph_config, graph_seed)
        scm = generate_scm(config.function_config, graph, scm_seed)
        dataset = generate_dataset(scm, config.noise_config, config.runtime_config)[0]
        truth = LinkSet.from_graph(graph, spec.l_max)
    except (TsBenchError, np.linalg.LinAlgError) as e:
        logger.warning("Run %s failed during generation: %s", record.run_id, e)
        record.error = f"{type(e).__name__}: {e}"
        return _store(record, record_file)

    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        save_graph(graph, run_dir / "graph.txt")
        save_scm(scm, run_dir / "scm.txt")
        save_dataset(dataset, run_dir / "data.csv", scm_file="scm.txt")
        save_links(truth, run_dir / "truth.txt")

    for entry in spec.methods:
        name, directory = _method_parts(entry)
        try:
            if directory is None:
                pred = discover(dataset, spec.granger, l_max=spec.l_max)
            else:
                path = prediction_path(directory, point, index)
                if not path.exists():
                    raise MissingPredictionError(f"no prediction file {path}")
                pred = load_links(path, spec.l_max)
            score = score_graph(truth, expand_undirected(pred))
            record.results.append(MethodScore(method=name, scores=_score_dict(score)))
        except (TsBenchError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning("Run %s, method %s failed: %s", record.run_id, name, e)
            record.results.append(MethodScore(method=name, error=f"{type(e).__name__}: {e}"))
    return _store(record, record_file)


def _store(record: RunRecord, record_file: Optional[Path]) -> RunRecord:
    if record_file is not None:
        record_file.parent.mkdir(parents=True, exist_ok=True)
        record_file.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return record


def run_experiment(spec: ExperimentSpec, work_dir: Optional[Union[str, Path]] = None,
                   workers: int = 1) -> ExperimentResult:
    """Run every ``(point, index)`` of ``spec``; results are ordered by run identifier."""
    for entry in spec.methods:
        _, directory = _method_parts(entry)
        if directory is not None and not directory.is_dir():
            raise MissingPredictionError(f"prediction directory {directory} does not exist")

    work_dir = Path(work_dir) if work_dir is not None else None
    tasks = [_RunTask(spec, point, index, work_dir)
             for point in range(len(spec.sweep)) for index in range(spec.scm_count)]
    logger.info("Running experiment %s: %d point(s) x %d SCM(s) with %s",
                spec.name.value, len(spec.sweep), spec.scm_count, spec.methods or "no methods")
    if workers > 1:
        with Pool(processes=workers) as pool:
            records = pool.map(_execute_run, tasks)
    else:
        records = [_execute_run(task) for task in tasks]

    failed = sum(1 for r in records if r.error)
    if failed:
        logger.warning("%d of %d run(s) failed before scoring", failed, len(records))
    return ExperimentResult(spec=spec, runs=tuple(sorted(records, key=lambda r: (r.point, r.index))))


# --- aggregation and export --------------------------------------------------------------------

def aggregate(raw: pd.DataFrame) -> pd.DataFrame:
    """Mean, standard error (ddof=1) and count per point, method and metric over successful runs."""
    columns = ["point", "point_label", "method", "metric", "mean", "stderr", "count"]
    if raw.empty:
        return pd.DataFrame(columns=columns)
    long = raw.melt(id_vars=["point", "point_label", "method"], value_vars=list(METRICS), var_name="metric")
    grouped = long.groupby(["point", "point_label", "method", "metric"], sort=True)["value"]
    table = grouped.agg(mean="mean", stderr="sem", count="count").reset_index()
    return table[columns]


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_results(result: ExperimentResult, out_dir: Union[str, Path], pdf: bool = False) -> Dict[str, str]:
    """Write per-metric tables, raw scores and a digest manifest; return ``{file: sha256}``."""
    out_dir = Path(out_dir)
    written: List[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        raw = result.raw_frame()
        raw_path = out_dir / "raw_scores.csv"
        raw.to_csv(raw_path, index=False, lineterminator="\n")
        written.append(raw_path)

        table = aggregate(raw)
        if not table.empty:
            labels = [p.label for p in result.spec.sweep]
            for metric in METRICS:
                wide = metric_table(table, metric, labels)
                path = out_dir / f"{metric}.csv"
                wide.to_csv(path, lineterminator="\n")
                written.append(path)

        if pdf:
            from src.report import build_experiment_pdf

            path = out_dir / "report.pdf"
            path.write_bytes(build_experiment_pdf(result))
            written.append(path)

        manifest = {path.name: _digest(path) for path in sorted(written)}
        (out_dir / "manifest.json").write_text(
            json.dumps({"experiment": result.spec.name.value, "files": manifest}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise ExportError(f"cannot write results to {out_dir}: {e}") from e
    logger.info("Exported %d file(s) to %s", len(manifest), out_dir)
    return manifest


def metric_table(table: pd.DataFrame, metric: str, labels: Sequence[str]) -> pd.DataFrame:
    """Rows are sweep points, columns ``<method>_mean`` / ``<method>_stderr``."""
    subset = table[table["metric"] == metric]
    wide = subset.pivot(index="point", columns="method", values=["mean", "stderr"])
    wide.columns = [f"{method}_{stat}" for stat, method in wide.columns]
    wide = wide[sorted(wide.columns)]
    wide.index = [labels[int(point)] for point in wide.index]
    wide.index.name = "point"
    return wide


def score_external(truth_file: Union[str, Path], prediction_file: Union[str, Path], l_max: int) -> GraphScore:
    """Score a prediction document against a ground-truth graph document."""
    truth = load_links(truth_file, l_max)
    pred = load_links(prediction_file, l_max)
    return score_graph(truth, expand_undirected(pred))
