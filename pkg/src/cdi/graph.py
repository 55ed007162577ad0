"""Coherence graphs, cuts, and the coherence objective.

A coherence graph is an undirected weighted graph over proposition labels
with weights in [-1, 1]. Positive weights mark consistent pairs, negative
weights inconsistent ones, and a missing pair reads as weight 0.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import DocumentError, GraphError

# Coherence values are rounded so that cut values which agree as decimal sums
# also agree as floats; ties between cuts are first-class.
COHERENCE_DECIMALS = 12

_DIGITS = re.compile(r"(\d+)")


def label_key(label: str) -> tuple:
    """Natural sort key: ``p2`` sorts before ``p10``."""
    parts = _DIGITS.split(label)
    return tuple(int(p) if i % 2 else p for i, p in enumerate(parts))


def part_key(part: Iterable[str]) -> tuple:
    """Ordering on vertex subsets: smaller cardinality first, then labels."""
    keys = sorted(label_key(x) for x in part)
    return (len(keys), tuple(keys))


def sort_labels(labels: Iterable[str]) -> list[str]:
    return sorted(labels, key=label_key)


def _round_coherence(value: float) -> float:
    return round(value, COHERENCE_DECIMALS) + 0.0


class CoherenceGraph:
    """Immutable symmetric weighted graph over an ordered list of labels.

    Edges are stored once per unordered pair, keyed in label order. An
    explicitly stored zero-weight edge is kept (it renders differently) but
    contributes nothing to any computation.
    """

    __slots__ = ("_labels", "_index", "_weights")

    def __init__(self, labels: Iterable[str], edges: Iterable[tuple[str, str, float]] = ()):
        labels = tuple(labels)
        index: dict[str, int] = {}
        for i, lab in enumerate(labels):
            if not isinstance(lab, str) or not lab:
                raise GraphError(f"labels must be non-empty strings, got {lab!r}")
            if lab in index:
                raise GraphError(f"duplicate label {lab!r}")
            index[lab] = i
        weights: dict[tuple[str, str], float] = {}
        for u, v, w in edges:
            if u not in index or v not in index:
                missing = u if u not in index else v
                raise GraphError(f"edge ({u}, {v}) references unknown label {missing!r}")
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            w = float(w)
            if not math.isfinite(w) or not -1.0 <= w <= 1.0:
                raise GraphError(f"weight {w} on ({u}, {v}) is outside [-1, 1]")
            key = (u, v) if index[u] < index[v] else (v, u)
            if key in weights:
                raise GraphError(f"duplicate edge {key}")
            weights[key] = w
        ordered = sorted(weights, key=lambda k: (index[k[0]], index[k[1]]))
        self._labels = labels
        self._index = MappingProxyType(index)
        self._weights = MappingProxyType({k: weights[k] for k in ordered})

    @classmethod
    def from_matrix(cls, labels: Iterable[str], matrix, *, keep_zeros: bool = False) -> "CoherenceGraph":
        labels = list(labels)
        a = np.asarray(matrix, dtype=float)
        n = len(labels)
        if a.shape != (n, n):
            raise GraphError(f"matrix shape {a.shape} does not match {n} labels")
        if not np.array_equal(a, a.T):
            raise GraphError("matrix is not symmetric")
        edges = [
            (labels[i], labels[j], float(a[i, j]))
            for i in range(n)
            for j in range(i + 1, n)
            if keep_zeros or a[i, j] != 0.0
        ]
        return cls(labels, edges)

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def n(self) -> int:
        return len(self._labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise GraphError(f"unknown label {label!r}") from None

    def weight(self, u: str, v: str) -> float:
        iu, iv = self.index(u), self.index(v)
        key = (u, v) if iu < iv else (v, u)
        return self._weights.get(key, 0.0)

    def edges(self) -> list[tuple[str, str, float]]:
        return [(u, v, w) for (u, v), w in self._weights.items()]

    @property
    def weights(self) -> Mapping[tuple[str, str], float]:
        return self._weights

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for (u, v), w in self._weights.items():
            i, j = self._index[u], self._index[v]
            a[i, j] = a[j, i] = w
        return a

    def scaled(self, factor: float) -> "CoherenceGraph":
        return CoherenceGraph(self._labels, [(u, v, w * factor) for u, v, w in self.edges()])

    def check_part(self, part: Iterable[str]) -> frozenset[str]:
        part = frozenset(part)
        unknown = sorted(part - set(self._labels))
        if unknown:
            raise GraphError(f"unknown labels in part: {unknown}")
        return part

    def __eq__(self, other):
        if not isinstance(other, CoherenceGraph):
            return NotImplemented
        return self._labels == other._labels and dict(self._weights) == dict(other._weights)

    def __hash__(self):
        return hash((self._labels, tuple(self._weights.items())))

    def __repr__(self):
        return f"CoherenceGraph(n={self.n}, edges={len(self._weights)})"


@dataclass(frozen=True)
class Cut:
    """A bipartition given by its rejected part; the accepted part is the rest."""

    rejected: frozenset
    coherence: float

    def accepted(self, labels: Iterable[str]) -> frozenset:
        return frozenset(labels) - self.rejected

    def rejected_sorted(self) -> list[str]:
        return sort_labels(self.rejected)


def coherence(graph: CoherenceGraph, part: Iterable[str]) -> float:
    """Negative total weight of the edges with exactly one endpoint in ``part``."""
    part = graph.check_part(part)
    crossing = [w for (u, v), w in graph.weights.items() if (u in part) != (v in part)]
    return _round_coherence(-math.fsum(crossing))


def l1_distance(g1: CoherenceGraph, g2: CoherenceGraph) -> float:
    """Sum of absolute weight differences over all unordered pairs."""
    if set(g1.labels) != set(g2.labels):
        raise GraphError("graphs have different label sets")
    w1 = {frozenset(k): w for k, w in g1.weights.items()}
    w2 = {frozenset(k): w for k, w in g2.weights.items()}
    return math.fsum(abs(w1.get(k, 0.0) - w2.get(k, 0.0)) for k in w1.keys() | w2.keys())


# -- documents ---------------------------------------------------------------


def graph_to_dict(graph: CoherenceGraph) -> dict:
    return {
        "labels": list(graph.labels),
        "edges": [{"u": u, "v": v, "w": w} for u, v, w in graph.edges()],
    }


def graph_from_dict(doc) -> CoherenceGraph:
    if not isinstance(doc, dict) or "labels" not in doc or "edges" not in doc:
        raise DocumentError("graph document needs 'labels' and 'edges'")
    labels, edges = doc["labels"], doc["edges"]
    if not isinstance(labels, list) or not isinstance(edges, list):
        raise DocumentError("'labels' and 'edges' must be lists")
    triples = []
    for rec in edges:
        if not isinstance(rec, dict) or set(rec) != {"u", "v", "w"}:
            raise DocumentError(f"edge record must have exactly u, v, w: {rec!r}")
        w = rec["w"]
        if isinstance(w, bool) or not isinstance(w, (int, float)):
            raise DocumentError(f"edge weight must be a number: {rec!r}")
        triples.append((rec["u"], rec["v"], w))
    try:
        return CoherenceGraph(labels, triples)
    except GraphError as exc:
        raise DocumentError(str(exc)) from exc


def serialize(graph: CoherenceGraph) -> str:
    # json writes floats with repr(), which round-trips exactly.
    return json.dumps(graph_to_dict(graph), indent=2) + "\n"


def parse(text: str) -> CoherenceGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"graph document is not valid JSON: {exc}") from exc
    return graph_from_dict(doc)


def _fmt_weight(w: float) -> str:
    return f"{w:+.2f}".rstrip("0").rstrip(".") if w else "0"


def to_dot(graph: CoherenceGraph, cut: Cut | Iterable[str] | None = None, name: str = "coherence") -> str:
    """Render as Graphviz DOT.

    Positive edges are solid blue, negative edges dashed red, explicit zero
    edges dotted gray. Vertices in the rejected part of ``cut`` are shaded.
    """
    rejected = None
    if cut is not None:
        rejected = cut.rejected if isinstance(cut, Cut) else graph.check_part(cut)
    lines = [f"graph {json.dumps(name)} {{", "  node [shape=circle];"]
    if rejected is not None:
        for lab in graph.labels:
            if lab in rejected:
                lines.append(f'  {json.dumps(lab)} [style=filled, fillcolor="gray75", group="rejected"];')
            else:
                lines.append(f'  {json.dumps(lab)} [group="accepted"];')
    else:
        for lab in graph.labels:
            lines.append(f"  {json.dumps(lab)};")
    for u, v, w in graph.edges():
        if w > 0:
            style, color = "solid", "blue"
        elif w < 0:
            style, color = "dashed", "red"
        else:
            style, color = "dotted", "gray"
        width = 1.0 + 2.0 * abs(w)
        attrs = f'label="{_fmt_weight(w)}", style={style}, color={color}, penwidth={width:.2f}'
        if rejected is not None and (u in rejected) != (v in rejected):
            attrs += ", constraint=false"
        lines.append(f"  {json.dumps(u)} -- {json.dumps(v)} [{attrs}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
