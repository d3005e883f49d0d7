"""Config -> graph -> SCM -> datasets, the three-step generation flow."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Union

from src.config import Complexity, DataGenerationConfig, apply_complexity_defaults, require_valid
from src.graphgen import TimeSeriesCausalGraph, generate_graph
from src.scmgen import StructuralCausalModel, generate_scm
from src.seeding import Stage, derive_seed
from src.simulate import Dataset, generate_dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationResult:
    config: DataGenerationConfig
    graph: TimeSeriesCausalGraph
    scm: StructuralCausalModel
    datasets: List[Dataset]


def generate(config: DataGenerationConfig, seed: int,
             complexity: Optional[Union[Complexity, str]] = None) -> GenerationResult:
    """Complete ``config`` from its complexity preset, validate it and run every stage.

    Graph and SCM seeds are derived from ``seed``; dataset seeds come from the runtime config.
    """
    config = require_valid(apply_complexity_defaults(config, complexity))
    graph = generate_graph(config.graph_config, derive_seed(seed, 0, 0, Stage.GRAPH))
    scm = generate_scm(config.function_config, graph, derive_seed(seed, 0, 0, Stage.SCM))
    datasets = generate_dataset(scm, config.noise_config, config.runtime_config)
    logger.info("Pipeline finished: %d variables, %d edge patterns, %d dataset(s)",
                graph.m_total, len(graph.patterns), len(datasets))
    return GenerationResult(config=config, graph=graph, scm=scm, datasets=datasets)
