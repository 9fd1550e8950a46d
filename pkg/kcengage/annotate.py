"""
Dataset-construction math: concept ranking, transcript fragmentation,
engagement labels and timestamp re-basing.
"""

import csv
import dataclasses
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import NamedTuple, Self

import numpy as np
import numpy.typing as npt

from . import settings
from .events import EngagementEvent, FragmentId
from .models import DataError, KcEngageError, MalformedRowError

logger = logging.getLogger(__name__)

SENTENCE_BREAKS = (". ", "! ", "? ", "\n")
ANNOTATION_COLUMNS = (
    "fragment_id",
    "rank",
    "kc_id",
    "pagerank",
    "pagerank_norm",
    "cosine",
    "combined",
)


class UnknownConceptError(KcEngageError):
    pass


class DegenerateGraphError(KcEngageError):
    pass


class ZeroVectorError(KcEngageError):
    pass


class EmptyAnnotationsError(KcEngageError):
    pass


class NonPositiveDurationError(KcEngageError):
    pass


class EmptyInputError(KcEngageError):
    pass


@dataclasses.dataclass(frozen=True, slots=True)
class ConceptLinkGraph:
    concepts: tuple[int, ...]
    inlinks: Mapping[int, frozenset[int]]
    total_count: int

    def __post_init__(self) -> None:
        known = set(self.concepts)
        for c, links in self.inlinks.items():
            if c not in known or not links <= known:
                msg = f"inlinks of concept {c} reference unknown concepts"
                raise UnknownConceptError(msg)
        if self.total_count < max(len(known), 2):
            msg = f"total_count {self.total_count} below {len(known)} concepts"
            raise DegenerateGraphError(msg)

    @classmethod
    def from_edges(
        cls, edges: Iterable[tuple[int, int]], total_count: int | None = None
    ) -> Self:
        """Build from (concept, inlinking concept) pairs.

        Without ``total_count`` the article universe is every id seen.
        """
        inlinks: dict[int, set[int]] = defaultdict(set)
        concepts: set[int] = set()
        for concept, source in edges:
            inlinks[concept].add(source)
            concepts.update((concept, source))
        return cls(
            concepts=tuple(sorted(concepts)),
            inlinks={c: frozenset(links) for c, links in inlinks.items()},
            total_count=total_count if total_count is not None else len(concepts),
        )

    def links(self, concept: int) -> frozenset[int]:
        if concept not in self.inlinks and concept not in self.concepts:
            msg = f"concept {concept} is not in the link graph"
            raise UnknownConceptError(msg)
        return self.inlinks.get(concept, frozenset())


class WeightedGraph(NamedTuple):
    nodes: tuple[int, ...]
    # symmetric, zero diagonal
    weights: npt.NDArray[np.float64]


class PageRankResult(NamedTuple):
    scores: dict[int, float]
    converged: bool
    iterations: int


class ConceptAnnotation(NamedTuple):
    kc_id: int
    pagerank: float
    cosine: float
    combined: float
    pagerank_norm: float


class WatchRecord(NamedTuple):
    watch_seconds: float
    duration_seconds: float


class CandidateRow(NamedTuple):
    fragment: FragmentId
    kc_id: int
    pagerank: float
    cosine: float


def semantic_relatedness(g: ConceptLinkGraph, c: int, c2: int) -> float:
    """Inlink-overlap distance; 0 for identical inlinks, inf when disjoint."""
    a, b = g.links(c), g.links(c2)
    if not a or not b or not (common := len(a & b)):
        return math.inf
    small, large = sorted((len(a), len(b)))
    denominator = math.log(g.total_count) - math.log(small)
    if denominator <= 0.0:
        msg = f"|W|={g.total_count} does not exceed inlink count {small}"
        raise DegenerateGraphError(msg)
    return (math.log(large) - math.log(common)) / denominator


def build_semantic_graph(
    g: ConceptLinkGraph, candidates: Sequence[int]
) -> WeightedGraph:
    nodes = tuple(sorted(set(candidates)))
    weights = np.zeros((len(nodes), len(nodes)))
    for i, a in enumerate(nodes):
        for j in range(i + 1, len(nodes)):
            sr = semantic_relatedness(g, a, nodes[j])
            if math.isfinite(sr):
                weights[i, j] = weights[j, i] = math.exp(-sr)
    return WeightedGraph(nodes, weights)


def pagerank(
    graph: WeightedGraph,
    damping: float | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
) -> PageRankResult:
    damping = settings.annotate.damping if damping is None else damping
    tol = settings.annotate.tol if tol is None else tol
    max_iter = settings.annotate.max_iter if max_iter is None else max_iter
    if not (n := len(graph.nodes)):
        return PageRankResult({}, converged=True, iterations=0)
    transition = _transition_matrix(graph.weights)
    ranks = np.full(n, 1.0 / n)
    converged = False
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        updated = (1.0 - damping) / n + damping * (ranks @ transition)
        delta = float(np.abs(updated - ranks).sum())
        ranks = updated
        if delta < tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "pagerank not converged after %d iterations over %d nodes", iterations, n
        )
    ranks /= ranks.sum()
    scores = {node: float(r) for node, r in zip(graph.nodes, ranks, strict=True)}
    return PageRankResult(scores, converged, iterations)


def _transition_matrix(weights: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    n = weights.shape[0]
    out = weights.sum(axis=1, keepdims=True)
    # dangling rows spread their mass uniformly
    return np.where(out > 0.0, weights / np.where(out > 0.0, out, 1.0), 1.0 / n)


def tfidf_cosine(
    doc_a: Mapping[str, float], doc_b: Mapping[str, float], idf: Mapping[str, float]
) -> float:
    terms = sorted(doc_a.keys() | doc_b.keys())
    weights = np.array([idf.get(t, 0.0) for t in terms])
    if (weights < 0.0).any():
        msg = "idf values must be non-negative"
        raise ValueError(msg)
    a = np.array([doc_a.get(t, 0.0) for t in terms]) * weights
    b = np.array([doc_b.get(t, 0.0) for t in terms]) * weights
    norm_a, norm_b = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        msg = "document has no weighted terms"
        raise ZeroVectorError(msg)
    return min(1.0, max(0.0, float(a @ b) / (norm_a * norm_b)))


def rank_concepts(
    annotations: Iterable[tuple[int, float, float]],
    top_n: int | None = None,
    pagerank_weight: float | None = None,
    *,
    normalize: bool | None = None,
) -> list[ConceptAnnotation]:
    top_n = settings.app.top_n if top_n is None else top_n
    if top_n < 1:
        msg = f"top_n must be at least 1, got {top_n}"
        raise ValueError(msg)
    w = pagerank_weight
    if w is None:
        w = settings.annotate.pagerank_weight
    if normalize is None:
        normalize = settings.annotate.normalize_pagerank
    rows = list(annotations)
    if not rows:
        msg = "no concepts to rank"
        raise EmptyAnnotationsError(msg)
    pr = np.array([r[1] for r in rows], dtype=np.float64)
    if normalize:
        spread = float(pr.max() - pr.min())
        pr_norm = (pr - pr.min()) / spread if spread > 0.0 else np.ones_like(pr)
    else:
        pr_norm = pr
    ranked = [
        ConceptAnnotation(
            kc_id=kc_id,
            pagerank=pagerank_score,
            cosine=cosine,
            combined=w * float(norm) + (1.0 - w) * cosine,
            pagerank_norm=float(norm),
        )
        for (kc_id, pagerank_score, cosine), norm in zip(rows, pr_norm, strict=True)
    ]
    ranked.sort(key=lambda a: (-a.combined, a.kc_id))
    return ranked[:top_n]


def annotate_fragments(
    rows: Iterable[CandidateRow],
    top_n: int | None = None,
    graph: ConceptLinkGraph | None = None,
) -> dict[FragmentId, list[ConceptAnnotation]]:
    """Rank each fragment's candidate concepts.

    With a link graph the supplied pagerank scores are replaced by PageRank
    over the fragment's own candidate set.
    """
    by_fragment: dict[FragmentId, dict[int, CandidateRow]] = defaultdict(dict)
    for row in rows:
        by_fragment[row.fragment][row.kc_id] = row
    result: dict[FragmentId, list[ConceptAnnotation]] = {}
    for fragment in sorted(by_fragment):
        candidates = by_fragment[fragment]
        if graph is not None:
            scores = pagerank(build_semantic_graph(graph, list(candidates))).scores
            triples = [(c, scores[c], r.cosine) for c, r in candidates.items()]
        else:
            triples = [(c, r.pagerank, r.cosine) for c, r in candidates.items()]
        result[fragment] = rank_concepts(triples, top_n)
    logger.info("%d fragments annotated", len(result))
    return result


def fragment_transcript(text: str, target_chars: int | None = None) -> list[str]:
    target = settings.annotate.target_chars if target_chars is None else target_chars
    if target < 1:
        msg = f"target_chars must be at least 1, got {target}"
        raise ValueError(msg)
    fragments: list[str] = []
    pos = 0
    while len(text) - pos > target:
        cut = pos + _split_point(text[pos : pos + target])
        fragments.append(text[pos:cut])
        pos = cut
    if pos < len(text):
        fragments.append(text[pos:])
    return fragments


def _split_point(window: str) -> int:
    """Cut offset inside a full window: sentence end, then space, then hard."""
    start = len(window) - max(1, len(window) // 10)
    best = max(
        (
            i + len(sep)
            for sep in SENTENCE_BREAKS
            if (i := window.rfind(sep, start)) >= 0
        ),
        default=0,
    )
    if best:
        return best
    for i in range(len(window) - 1, start - 1, -1):
        if window[i].isspace():
            return i + 1
    return len(window)


def label_engagement(
    w: WatchRecord, threshold: float | None = None
) -> tuple[float, int]:
    if threshold is None:
        threshold = settings.annotate.engagement_threshold
    if w.duration_seconds <= 0.0:
        msg = f"duration must be positive, got {w.duration_seconds}"
        raise NonPositiveDurationError(msg)
    if w.watch_seconds < 0.0:
        msg = f"watch time must be non-negative, got {w.watch_seconds}"
        raise ValueError(msg)
    normalized = min(1.0, w.watch_seconds / w.duration_seconds)
    return normalized, int(normalized >= threshold)


def rebase_timestamps(events: Sequence[EngagementEvent]) -> list[EngagementEvent]:
    if not events:
        msg = "no events to re-base"
        raise EmptyInputError(msg)
    t0 = min(e.timestamp for e in events)
    return [e.with_timestamp(e.timestamp - t0) for e in events]


def load_candidates(path: Path) -> list[CandidateRow]:
    """Read ``fragment_id,kc_id,pagerank,cosine`` rows.

    ``fragment_id`` is written ``lecture/video/part``; a header row is skipped.
    """
    rows: list[CandidateRow] = []
    for row_no, fields in _read_csv(path):
        if row_no == 1 and fields[0].strip() == "fragment_id":
            continue
        if len(fields) != 4:  # noqa: PLR2004
            raise MalformedRowError(row_no, f"expected 4 columns, got {len(fields)}")
        try:
            lecture, video, part = (int(p) for p in fields[0].strip().split("/"))
            kc_id = int(fields[1])
            pr, cos = float(fields[2]), float(fields[3])
        except ValueError:
            reason = f"unparsable candidate {fields!r}"
            raise MalformedRowError(row_no, reason) from None
        rows.append(CandidateRow(FragmentId(lecture, video, part), kc_id, pr, cos))
    return rows


def load_link_graph(path: Path, total_count: int | None = None) -> ConceptLinkGraph:
    edges: list[tuple[int, int]] = []
    for row_no, fields in _read_csv(path):
        if row_no == 1 and fields[0].strip() == "concept_id":
            continue
        try:
            concept, inlink = int(fields[0]), int(fields[1])
        except (ValueError, IndexError):
            raise MalformedRowError(row_no, f"unparsable link {fields!r}") from None
        edges.append((concept, inlink))
    return ConceptLinkGraph.from_edges(edges, total_count)


def write_annotations(
    annotations: Mapping[FragmentId, Sequence[ConceptAnnotation]], path: Path
) -> None:
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(ANNOTATION_COLUMNS)
            for fragment, ranked in annotations.items():
                for rank, a in enumerate(ranked, start=1):
                    writer.writerow((
                        str(fragment),
                        rank,
                        a.kc_id,
                        repr(a.pagerank),
                        repr(a.pagerank_norm),
                        repr(a.cosine),
                        repr(a.combined),
                    ))
    except OSError as e:
        msg = f"cannot write {path}: {e.strerror}"
        raise DataError(msg) from e


def _read_csv(path: Path) -> Iterable[tuple[int, list[str]]]:
    try:
        with path.open(encoding="utf-8", newline="") as f:
            rows = [(n, r) for n, r in enumerate(csv.reader(f), start=1) if r]
    except OSError as e:
        msg = f"cannot read {path}: {e.strerror}"
        raise DataError(msg) from e
    return rows
