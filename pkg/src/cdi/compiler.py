"""Compile proposition sets into coherence graphs with a chat model.

The model is asked for pairwise consistency ratings on a 0-10 scale and
answers with a Python-style edge list such as
``[('p2', 'p3', 0), ('p2', 'p5', 10)]``. Ratings map linearly onto
weights in [-1, 1].
"""

from __future__ import annotations

import ast
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .backends import Backend
from .errors import AllSamplesFailed, BackendError, PropositionError, ResponseParseError
from .graph import CoherenceGraph, label_key
from .propositions import Proposition, PropositionFile, check_unique, format_propositions

log = logging.getLogger(__name__)

INSTRUCTIONS = (
    "Imagine that you are a perfectly objective arbitrator with impeccable "
    "judgment and integrity. In response to a prompt of the form "
    "'buildCoherence: ' below followed by a list of labeled propositions, "
    "please do the following: First, determine which pairs of propositions "
    "are substantively related. Second, for each related pair of propositions, "
    "determine their logical relationship, assuming that at least one is true, "
    "whether or not either actually is. I want you to ignore the truth, falsity "
    "or basis in fact of either claim. Third, based on your determination just "
    "above, numerically rate the relative consistency of the two propositions. "
    "Do not pay attention to or comment on the truth or basis in fact of "
    "either proposition independent of the other. Your rating of relative "
    "consistency should be on a scale from 0 to 10, with a value of 0 for a "
    "pair of propositions that are not at all consistent and a value of 10 for "
    "a pair of propositions that are totally consistent. I cannot emphasize "
    "enough that for your rating, I want you to ignore the truth or basis in "
    "fact of either proposition, since anything that is not consistent with "
    "reality cannot be true. If you determine that propositions are unrelated "
    "despite previously determining otherwise, omit that pair. To be clear, a "
    "pair of false but consistent claims should also be rated a 10. Meanwhile, "
    "a pair of propositions of which one is true and the other is false, should "
    "be rated a 0. Finally, construct a NetworkX graph where propositions "
    "are vertices and edges correspond to substantively related pairs of "
    "propositions, with weights given by the consistency ratings just above. "
    "Only return the edge list with proposition labels for vertices. i.e., "
    "return responses in this format (here 'p2', 'p3', 'p4', and 'p5' are "
    "labels): "
    "[('p2', 'p3', 0), ('p2', 'p5', 10), ('p3', 'p4', 9), ('p3', 'p5', 2)]. "
    "Order vertices (in edges) and edges (in the graph) lexicographically."
)

COMMAND = "buildCoherence: "

MIN_RATING, MAX_RATING = 0, 10


@dataclass(frozen=True)
class RatedEdge:
    u: str
    v: str
    rating: int

    def __post_init__(self):
        if not label_key(self.u) < label_key(self.v):
            raise ResponseParseError(f"edge ({self.u}, {self.v}) is not ordered u < v")
        if not MIN_RATING <= self.rating <= MAX_RATING:
            raise ResponseParseError(f"rating {self.rating} outside {MIN_RATING}-{MAX_RATING}")


def build_prompt(propositions: PropositionFile | Iterable[Proposition]) -> str:
    if isinstance(propositions, PropositionFile):
        propositions = propositions.propositions
    props = list(propositions)
    if not props:
        raise PropositionError("cannot build a prompt from an empty proposition set")
    props = check_unique(props)
    if len(props) < 2:
        raise PropositionError("need at least two propositions")
    return f"{INSTRUCTIONS}\n\n{COMMAND}\n{format_propositions(props)}"


_LIST = re.compile(r"\[[^\[\]]*\]", re.S)


def _as_edge_list(candidate: str):
    try:
        value = ast.literal_eval(candidate)
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        return None
    if not isinstance(value, list):
        return None
    if all(isinstance(t, tuple) and len(t) == 3 for t in value):
        return value
    return None


def parse_rated_edges(response: str, known_labels: Iterable[str]) -> list[RatedEdge]:
    """Pull the first well-formed ``[(u, v, rating), ...]`` list out of ``response``.

    Prose and code fences around the list are ignored. Edges come back with
    ``u < v`` in natural label order, sorted.
    """
    known = set(known_labels)
    triples = None
    for m in _LIST.finditer(response):
        triples = _as_edge_list(m.group(0))
        if triples is not None:
            break
    if triples is None:
        raise ResponseParseError("no edge list found in response", raw=response)

    edges: dict[tuple[str, str], RatedEdge] = {}
    for u, v, r in triples:
        if not isinstance(u, str) or not isinstance(v, str):
            raise ResponseParseError(f"edge labels must be strings: {(u, v, r)!r}", raw=response)
        for lab in (u, v):
            if lab not in known:
                raise ResponseParseError(f"unknown label {lab!r}", raw=response)
        if u == v:
            raise ResponseParseError(f"self-loop on {u!r}", raw=response)
        if isinstance(r, bool) or not isinstance(r, (int, float)) or r != int(r):
            raise ResponseParseError(f"rating must be an integer: {(u, v, r)!r}", raw=response)
        r = int(r)
        if not MIN_RATING <= r <= MAX_RATING:
            raise ResponseParseError(f"rating {r} for ({u}, {v}) outside 0-10", raw=response)
        if label_key(v) < label_key(u):
            u, v = v, u
        if (u, v) in edges:
            raise ResponseParseError(f"duplicate pair ({u}, {v})", raw=response)
        edges[(u, v)] = RatedEdge(u, v, r)
    return [edges[k] for k in sorted(edges, key=lambda k: (label_key(k[0]), label_key(k[1])))]


def format_rated_edges(edges: Iterable[RatedEdge]) -> str:
    return "[" + ", ".join(f"({e.u!r}, {e.v!r}, {e.rating})" for e in edges) + "]"


def rating_to_weight(rating: int) -> float:
    """Map a 0-10 consistency rating onto [-1, 1]: 0 -> -1, 5 -> 0, 10 -> 1."""
    if isinstance(rating, bool) or not MIN_RATING <= rating <= MAX_RATING:
        raise ValueError(f"rating {rating!r} outside {MIN_RATING}-{MAX_RATING}")
    # single rounding step: each rating lands on the float nearest its decimal weight
    return (rating - 5) / 5


def edges_to_graph(labels: Iterable[str], edges: Iterable[RatedEdge]) -> CoherenceGraph:
    return CoherenceGraph(labels, [(e.u, e.v, rating_to_weight(e.rating)) for e in edges])


def _labels_of(propositions) -> tuple[list[Proposition], list[str]]:
    if isinstance(propositions, PropositionFile):
        propositions = propositions.propositions
    props = list(propositions)
    return props, [p.id for p in props]


def compile_graph(propositions, backend: Backend, *, sample: int = 0, parse_retries: int = 0) -> CoherenceGraph:
    """One prompt round-trip, parsed into a graph over exactly the input labels.

    A parse failure is not retried unless ``parse_retries`` > 0; retries
    reuse the same sample slot.
    """
    props, labels = _labels_of(propositions)
    prompt = build_prompt(props)
    for attempt in range(parse_retries + 1):
        response = backend.complete(prompt, sample)
        try:
            return edges_to_graph(labels, parse_rated_edges(response, labels))
        except ResponseParseError:
            if attempt == parse_retries:
                raise
            log.warning("sample %d: unparseable response, retrying", sample)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class SampleFailure:
    sample: int
    error: str
    raw: str | None = None


@dataclass
class SampleBatch:
    graphs: list[CoherenceGraph] = field(default_factory=list)
    samples: list[int] = field(default_factory=list)  # sample index of each graph
    failures: list[SampleFailure] = field(default_factory=list)


def sample_graphs(
    propositions,
    backend: Backend,
    n: int,
    *,
    max_workers: int = 1,
    min_successes: int = 1,
    parse_retries: int = 0,
) -> SampleBatch:
    """Draw ``n`` independent compiled graphs, in sample order.

    Individual failures are recorded and the batch continues; fewer than
    ``min_successes`` good samples raises :class:`AllSamplesFailed`.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    props, _ = _labels_of(propositions)

    def one(i):
        try:
            return compile_graph(props, backend, sample=i, parse_retries=parse_retries)
        except (BackendError, ResponseParseError) as exc:
            return SampleFailure(i, f"{type(exc).__name__}: {exc}", getattr(exc, "raw", None))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]

    batch = SampleBatch()
    for i, res in enumerate(results):
        if isinstance(res, SampleFailure):
            log.warning("sample %d failed: %s", i, res.error)
            batch.failures.append(res)
        else:
            batch.graphs.append(res)
            batch.samples.append(i)
    if len(batch.graphs) < min_successes:
        raise AllSamplesFailed(batch.failures)
    return batch
