"""Scoring of predicted lagged causal graphs against ground truth.

Links are ``(i, j, s)`` triples meaning ``X_i(t - s) -> X_j(t)`` over ``m`` observed
variables and lags ``0..l_max``; the universe excludes instantaneous self-links.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Dict, FrozenSet, Iterator, Optional, Tuple

from src.errors import InvalidLinkError, LagOverflowError, UniverseMismatchError
from src.graphgen import TimeSeriesCausalGraph

logger = logging.getLogger(__name__)

Link = Tuple[int, int, int]


def link_universe_size(m: int, l_max: int) -> int:
    return (l_max + 1) * m * m - m


def max_dag_links(m: int, l_max: int) -> int:
    return l_max * m * m + m * (m - 1) // 2


def iter_link_universe(m: int, l_max: int) -> Iterator[Link]:
    for i, j, s in product(range(m), range(m), range(l_max + 1)):
        if s > 0 or i != j:
            yield (i, j, s)


@dataclass(frozen=True)
class LinkSet:
    m: int
    l_max: int
    links: FrozenSet[Link] = frozenset()
    undirected_contemporaneous: FrozenSet[FrozenSet[int]] = frozenset()
    names: Optional[Tuple[str, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(tuple(link) for link in self.links))
        object.__setattr__(self, "undirected_contemporaneous",
                           frozenset(frozenset(pair) for pair in self.undirected_contemporaneous))
        for i, j, s in self.links:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise InvalidLinkError(f"link ({i}, {j}, {s}) references a variable outside 0..{self.m - 1}")
            if s < 0:
                raise InvalidLinkError(f"link ({i}, {j}, {s}) has a negative lag")
            if s > self.l_max:
                raise LagOverflowError(f"link ({i}, {j}, {s}) exceeds l_max={self.l_max}")
            if s == 0 and i == j:
                raise InvalidLinkError(f"instantaneous self-link on variable {i}")
        for pair in self.undirected_contemporaneous:
            if len(pair) != 2 or not all(0 <= v < self.m for v in pair):
                raise InvalidLinkError(f"invalid undirected pair {sorted(pair)}")

    @classmethod
    def from_graph(cls, graph: TimeSeriesCausalGraph, l_max: int) -> "LinkSet":
        """Project a Full Time Graph onto its observed variables.

        Edges touching a latent or noise variable are dropped, not transitively closed.
        Observed variables are re-indexed ``0..m-1`` in variable order.
        """
        observed = graph.observed_variables
        position = {v.index: k for k, v in enumerate(observed)}
        links = {
            (position[p.parent], position[p.child], p.lag)
            for p in graph.patterns
            if p.parent in position and p.child in position
        }
        return cls(m=len(observed), l_max=l_max, links=frozenset(links), names=tuple(v.name for v in observed))


def expand_undirected(pred: LinkSet) -> LinkSet:
    """Turn each undirected lag-0 pair into both directed lag-0 links."""
    links = set(pred.links)
    for pair in pred.undirected_contemporaneous:
        i, j = sorted(pair)
        links.add((i, j, 0))
        links.add((j, i, 0))
    return LinkSet(m=pred.m, l_max=pred.l_max, links=frozenset(links), names=pred.names)


@dataclass(frozen=True)
class GraphScore:
    tp: int
    fp: int
    fn: int
    tn: int
    universe: int
    f1: float
    shd: float
    ntp: float
    nfp: float
    nfn: float
    tpr: float
    fpr: float
    fnr: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _ratio(numerator: float, denominator: float, undefined: float = 0.0) -> float:
    return numerator / denominator if denominator > 0 else undefined


def score_graph(truth: LinkSet, pred: LinkSet, *, empty_f1_undefined: bool = False) -> GraphScore:
    if truth.m != pred.m or truth.l_max != pred.l_max:
        raise UniverseMismatchError(
            f"truth universe (m={truth.m}, l_max={truth.l_max}) differs from "
            f"prediction universe (m={pred.m}, l_max={pred.l_max})"
        )
    for link_set in (truth, pred):
        overflow = [link for link in link_set.links if link[2] > truth.l_max]
        if overflow:
            raise LagOverflowError(f"links {sorted(overflow)} exceed l_max={truth.l_max}")
    if pred.undirected_contemporaneous:
        pred = expand_undirected(pred)

    universe = link_universe_size(truth.m, truth.l_max)
    tp = len(truth.links & pred.links)
    fp = len(pred.links - truth.links)
    fn = len(truth.links - pred.links)
    tn = universe - tp - fp - fn
    undefined = math.nan if empty_f1_undefined else 0.0
    logger.debug("Scored graph: tp=%d fp=%d fn=%d universe=%d", tp, fp, fn, universe)

    ntp = _ratio(tp, universe)
    nfp = _ratio(fp, universe)
    nfn = _ratio(fn, universe)
    return GraphScore(
        tp=tp, fp=fp, fn=fn, tn=tn, universe=universe,
        f1=_ratio(tp, tp + (fp + fn) / 2.0, undefined),
        shd=nfp + nfn,
        ntp=ntp, nfp=nfp, nfn=nfn,
        tpr=_ratio(ntp, ntp + nfn, undefined),
        fpr=_ratio(fp, fp + tn),
        fnr=_ratio(fn, fn + tp),
    )
