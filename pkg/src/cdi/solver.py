"""Constrained max-coherence cuts: exhaustive ranking and simulated annealing.

Maximizing coherence is MAX-CUT on the negated adjacency matrix. Exact mode
scores every bipartition once (a part and its complement are the same
bipartition) in vectorized chunks. Constraints pin labels to the accepted or
rejected side and require exactly one member of each exclusive pair to be
accepted.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConstraintError, DocumentError, SolverLimitError
from .graph import COHERENCE_DECIMALS, CoherenceGraph, Cut, coherence, part_key, sort_labels

log = logging.getLogger(__name__)

EXACT_CAP = 24
_CHUNK = 1 << 16


@dataclass(frozen=True)
class ConstraintSet:
    pinned_accepted: frozenset = frozenset()
    pinned_rejected: frozenset = frozenset()
    exclusive_pairs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pinned_accepted", frozenset(self.pinned_accepted))
        object.__setattr__(self, "pinned_rejected", frozenset(self.pinned_rejected))
        object.__setattr__(self, "exclusive_pairs", tuple(tuple(p) for p in self.exclusive_pairs))
        both = self.pinned_accepted & self.pinned_rejected
        if both:
            raise ConstraintError(f"labels pinned to both sides: {sort_labels(both)}")
        for pair in self.exclusive_pairs:
            if len(pair) != 2 or pair[0] == pair[1]:
                raise ConstraintError(f"exclusive pair needs two distinct labels: {pair!r}")

    @property
    def has_pins(self) -> bool:
        return bool(self.pinned_accepted or self.pinned_rejected)

    @property
    def labels(self) -> set:
        out = set(self.pinned_accepted) | set(self.pinned_rejected)
        for a, b in self.exclusive_pairs:
            out |= {a, b}
        return out

    def is_empty(self) -> bool:
        return not self.has_pins and not self.exclusive_pairs

    def satisfied_by(self, rejected: Iterable[str]) -> bool:
        rejected = set(rejected)
        if self.pinned_accepted & rejected or not self.pinned_rejected <= rejected:
            return False
        return all((a in rejected) != (b in rejected) for a, b in self.exclusive_pairs)

    def to_dict(self) -> dict:
        return {
            "accept": sort_labels(self.pinned_accepted),
            "reject": sort_labels(self.pinned_rejected),
            "exclusive": [list(p) for p in self.exclusive_pairs],
        }

    @classmethod
    def from_dict(cls, doc) -> "ConstraintSet":
        if not isinstance(doc, dict) or set(doc) - {"accept", "reject", "exclusive"}:
            raise DocumentError("constraints document takes keys 'accept', 'reject', 'exclusive'")
        try:
            return cls(doc.get("accept", []), doc.get("reject", []), doc.get("exclusive", []))
        except TypeError as exc:
            raise DocumentError(f"malformed constraints: {exc}") from exc

    def merged(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(
            self.pinned_accepted | other.pinned_accepted,
            self.pinned_rejected | other.pinned_rejected,
            self.exclusive_pairs + tuple(p for p in other.exclusive_pairs if p not in self.exclusive_pairs),
        )


NO_CONSTRAINTS = ConstraintSet()


def constraints_from_propositions(propositions, exclusive_pairs=(), pin=("fact", "belief", "detail")) -> ConstraintSet:
    """Pin every non-hypothesis proposition to the accepted side."""
    props = getattr(propositions, "propositions", propositions)
    return ConstraintSet([p.id for p in props if p.category in pin], (), exclusive_pairs)


def load_constraints(text: str) -> ConstraintSet:
    try:
        return ConstraintSet.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise DocumentError(f"constraints file is not valid JSON: {exc}") from exc


# -- feasibility -------------------------------------------------------------


@dataclass
class _Blocks:
    """Vertices grouped into blocks that must flip together.

    Exclusive pairs force their two members onto opposite sides, so each
    connected component of the pair graph is 2-colored; ``parity[i]`` is the
    vertex's color within its block. ``fixed[b]`` is the forced side of the
    block's color-0 vertices (1 = rejected) or None if the block is free.
    """

    block: list[int]
    parity: list[int]
    members: list[list[int]] = field(default_factory=list)
    fixed: list[int | None] = field(default_factory=list)


def _blocks(graph: CoherenceGraph, constraints: ConstraintSet) -> _Blocks:
    n = graph.n
    unknown = sorted(constraints.labels - set(graph.labels))
    if unknown:
        raise ConstraintError(f"constraints mention unknown labels: {unknown}")
    parent = list(range(n))
    par = [0] * n  # parity relative to parent

    def find(i):
        if parent[i] == i:
            return i, 0
        root, p = find(parent[i])
        parent[i] = root
        par[i] ^= p
        return root, par[i]

    for a, b in constraints.exclusive_pairs:
        ia, ib = graph.index(a), graph.index(b)
        ra, pa = find(ia)
        rb, pb = find(ib)
        if ra == rb:
            if pa == pb:
                raise ConstraintError(f"exclusive pairs force {a} and {b} onto the same side and opposite sides")
            continue
        parent[rb] = ra
        par[rb] = pa ^ pb ^ 1

    roots = {}
    block, parity = [0] * n, [0] * n
    for i in range(n):
        r, p = find(i)
        block[i] = roots.setdefault(r, len(roots))
        parity[i] = p
    out = _Blocks(block, parity, [[] for _ in roots], [None] * len(roots))
    for i in range(n):
        out.members[block[i]].append(i)

    for lab in constraints.pinned_accepted | constraints.pinned_rejected:
        i = graph.index(lab)
        side = 1 if lab in constraints.pinned_rejected else 0
        want = side ^ parity[i]
        b = block[i]
        if out.fixed[b] is not None and out.fixed[b] != want:
            raise ConstraintError(f"pin on {lab} conflicts with other pins through exclusive pairs")
        out.fixed[b] = want
    return out


def check_satisfiable(graph: CoherenceGraph, constraints: ConstraintSet) -> None:
    _blocks(graph, constraints)


# -- canonical orientation ---------------------------------------------------


def orient(labels: Iterable[str], part: Iterable[str], constraints: ConstraintSet = NO_CONSTRAINTS) -> frozenset | None:
    """Choose which side of a bipartition is the rejected one.

    With pins, the side that satisfies them (None if neither does). Without
    pins, the smaller side, ties broken by natural label order.
    """
    labels = frozenset(labels)
    part = frozenset(part)
    comp = labels - part
    if constraints.has_pins:
        for cand in (part, comp):
            if not (constraints.pinned_accepted & cand) and constraints.pinned_rejected <= cand:
                return cand if constraints.satisfied_by(cand) else None
        return None
    if constraints.exclusive_pairs and not constraints.satisfied_by(part):
        return None
    return part if part_key(part) <= part_key(comp) else comp


def rank_key(cut: Cut) -> tuple:
    return (-cut.coherence, part_key(cut.rejected))


@dataclass(frozen=True)
class RankedCuts:
    cuts: tuple
    exhaustive: bool
    total: int | None = None  # number of feasible bipartitions, when known

    def __len__(self):
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)

    def __getitem__(self, i):
        return self.cuts[i]


# -- exact enumeration -------------------------------------------------------


def _bit_masks(graph: CoherenceGraph, labels: Iterable[str]) -> int:
    m = 0
    for lab in labels:
        m |= 1 << graph.index(lab)
    return m


def enumerate_cuts(
    graph: CoherenceGraph,
    constraints: ConstraintSet = NO_CONSTRAINTS,
    limit: int | None = 100,
    *,
    allow_trivial: bool = True,
    cap: int = EXACT_CAP,
    keep_ties: bool = False,
) -> RankedCuts:
    """Score every bipartition and return the best ``limit`` feasible cuts.

    Bipartitions are indexed by bitmasks over all but the last label (the
    last label is never in the indexed part), so each is visited once.
    Ranking is by coherence descending, then smaller rejected part, then
    natural label order. ``allow_trivial=False`` drops the cut with an
    empty side. ``keep_ties`` extends the list past ``limit`` with every cut
    tied with the last one kept.
    """
    n = graph.n
    if n > cap:
        raise SolverLimitError(f"{n} vertices exceeds the exact-mode cap of {cap}; use annealing")
    check_satisfiable(graph, constraints)
    if n == 0:
        raise ConstraintError("graph has no vertices")
    labels = graph.labels
    a = graph.matrix()
    rowsum = a.sum(axis=1)
    full = (1 << n) - 1

    acc = _bit_masks(graph, constraints.pinned_accepted)
    rej = _bit_masks(graph, constraints.pinned_rejected)
    pairs = [(graph.index(x), graph.index(y)) for x, y in constraints.exclusive_pairs]
    total_masks = 1 << (n - 1)
    shifts = np.arange(n, dtype=np.uint64)

    kept_masks: list[np.ndarray] = []
    kept_vals: list[np.ndarray] = []
    feasible = 0
    for start in range(0, total_masks, _CHUNK):
        m = np.arange(start, min(start + _CHUNK, total_masks), dtype=np.uint64)
        bits = ((m[:, None] >> shifts[None, :]) & np.uint64(1)).astype(float)
        crossing = bits @ rowsum - np.einsum("ij,ij->i", bits @ a, bits)
        # orientation: rejected is either the indexed part m or its complement
        if constraints.has_pins:
            as_part = ((m & np.uint64(acc)) == 0) & ((m & np.uint64(rej)) == np.uint64(rej))
            comp = np.uint64(full) ^ m
            as_comp = ((comp & np.uint64(acc)) == 0) & ((comp & np.uint64(rej)) == np.uint64(rej))
            ok = as_part | as_comp
            rejected = np.where(as_part, m, comp)
        else:
            ok = np.ones(len(m), dtype=bool)
            rejected = m
        for i, j in pairs:
            ok &= bits[:, i] != bits[:, j]
        if not allow_trivial:
            ok &= (m != 0)
        feasible += int(ok.sum())
        vals = np.round(-crossing[ok], COHERENCE_DECIMALS) + 0.0
        rejected = rejected[ok]
        if limit is not None and len(vals) > limit:
            # keep everything tied with the limit-th best so ties rank exactly
            thresh = np.partition(vals, len(vals) - limit)[len(vals) - limit]
            sel = vals >= thresh
            vals, rejected = vals[sel], rejected[sel]
        kept_masks.append(rejected)
        kept_vals.append(vals)

    if feasible == 0:
        raise ConstraintError("no bipartition satisfies the constraints")
    masks = np.concatenate(kept_masks)
    vals = np.concatenate(kept_vals)
    if limit is not None and len(vals) > limit:
        thresh = np.partition(vals, len(vals) - limit)[len(vals) - limit]
        sel = vals >= thresh
        masks, vals = masks[sel], vals[sel]

    cuts = []
    for mask, val in zip(masks.tolist(), vals.tolist()):
        part = frozenset(labels[i] for i in range(n) if (mask >> i) & 1)
        if not constraints.has_pins:
            part = orient(labels, part)
        cuts.append(Cut(part, float(val)))
    cuts.sort(key=rank_key)
    if limit is not None and len(cuts) > limit:
        last = cuts[limit - 1].coherence
        cuts = [c for i, c in enumerate(cuts) if i < limit or (keep_ties and c.coherence == last)]
    return RankedCuts(tuple(cuts), exhaustive=True, total=feasible)


def optimal_cuts(graph: CoherenceGraph, constraints: ConstraintSet = NO_CONSTRAINTS, **kw) -> list[Cut]:
    """Every cut that attains the maximum coherence, in rank order."""
    ranked = enumerate_cuts(graph, constraints, limit=1, keep_ties=True, **kw)
    best = ranked[0].coherence
    return [c for c in ranked if c.coherence == best]


# -- annealing ---------------------------------------------------------------


@dataclass(frozen=True)
class AnnealParams:
    restarts: int = 8
    sweeps: int = 200
    t_start: float = 2.0
    t_end: float = 0.01


def anneal_max_cut(
    graph: CoherenceGraph,
    constraints: ConstraintSet = NO_CONSTRAINTS,
    params: AnnealParams = AnnealParams(),
    seed: int = 0,
) -> Cut:
    """Simulated annealing over constraint-respecting moves.

    A move flips one free block: a single unconstrained vertex, or a whole
    group tied together by exclusive pairs (flipping it swaps which member of
    each pair is accepted). Pinned blocks never move, so every visited state
    is feasible. Returns the best state seen across all restarts.
    """
    blocks = _blocks(graph, constraints)
    n = graph.n
    if n == 0:
        raise ConstraintError("graph has no vertices")
    a = graph.matrix()
    rng = np.random.default_rng(seed)
    free = [b for b in range(len(blocks.members)) if blocks.fixed[b] is None]
    members = [np.array(m) for m in blocks.members]
    parity = np.array(blocks.parity)

    def state_for(block_side):
        # x[i] = 1 means vertex i is in the rejected part
        x = np.empty(n, dtype=int)
        for b, side in enumerate(block_side):
            x[members[b]] = side ^ parity[members[b]]
        return x

    best_x, best_val = None, -math.inf
    scale = float(np.abs(a).sum(axis=1).max()) or 1.0
    for r in range(params.restarts):
        side = [blocks.fixed[b] if blocks.fixed[b] is not None else int(rng.integers(2)) for b in range(len(members))]
        x = state_for(side)
        s = (1 - 2 * x).astype(float)
        h = a @ s
        val = -0.25 * (a.sum() - s @ h)  # coherence = -crossing weight
        if val > best_val:
            best_x, best_val = x.copy(), val
        if not free:
            break
        steps = params.sweeps * len(free)
        temps = scale * np.geomspace(params.t_start, params.t_end, steps)
        picks = rng.integers(len(free), size=steps)
        us = rng.random(steps)
        for t, k, u in zip(temps.tolist(), picks.tolist(), us.tolist()):
            idx = members[free[k]]
            if len(idx) == 1:
                i = idx[0]
                delta = -s[i] * h[i]
            else:
                sb = s[idx]
                # coherence change of flipping the block: -sum_{i in B, j not in B} w_ij s_i s_j
                delta = -float(sb @ (h[idx] - a[np.ix_(idx, idx)] @ sb))
            if delta >= 0 or u < math.exp(delta / t):
                if len(idx) == 1:
                    h -= (2 * s[i]) * a[:, i]
                    s[i] = -s[i]
                else:
                    h -= 2 * a[:, idx] @ sb
                    s[idx] = -sb
                val += delta
                if val > best_val + 1e-12:
                    best_x, best_val = ((1 - s) / 2).astype(int), val
    rejected = frozenset(graph.labels[i] for i in range(n) if best_x[i])
    if not constraints.has_pins:
        rejected = orient(graph.labels, rejected)
    return Cut(rejected, coherence(graph, rejected))


# -- acceptance / rejection --------------------------------------------------


def accepted_rejected(cut: Cut, constraints: ConstraintSet, graph: CoherenceGraph) -> tuple[frozenset, frozenset]:
    """Split a cut into (accepted, rejected) label sets.

    The side holding the pinned-accepted labels is accepted. Without pins the
    smaller side (natural label order on ties) is rejected.
    """
    labels = frozenset(graph.labels)
    part = graph.check_part(cut.rejected)
    comp = labels - part
    if constraints.has_pins:
        cands = [
            r for r in (part, comp)
            if not (constraints.pinned_accepted & r) and constraints.pinned_rejected <= r
        ]
        if not cands:
            raise ConstraintError("cut splits the pinned labels across both sides")
        rejected = cands[0]
    else:
        rejected = orient(labels, part)
    if not all((x in rejected) != (y in rejected) for x, y in constraints.exclusive_pairs):
        raise ConstraintError("cut violates an exclusive pair")
    return labels - rejected, rejected


# -- cuts documents ----------------------------------------------------------


def cuts_to_dict(graph: CoherenceGraph, ranked: RankedCuts, constraints: ConstraintSet = NO_CONSTRAINTS) -> dict:
    return {
        "labels": list(graph.labels),
        "exhaustive": ranked.exhaustive,
        "feasible_total": ranked.total,
        "constraints": constraints.to_dict(),
        "cuts": [
            {
                "rank": i,
                "rejected": c.rejected_sorted(),
                "accepted": sort_labels(c.accepted(graph.labels)),
                "coherence": c.coherence,
            }
            for i, c in enumerate(ranked, 1)
        ],
    }


def cuts_from_dict(doc) -> tuple[list[str], RankedCuts, ConstraintSet]:
    try:
        labels = list(doc["labels"])
        cuts = tuple(Cut(frozenset(c["rejected"]), float(c["coherence"])) for c in doc["cuts"])
        constraints = ConstraintSet.from_dict(doc.get("constraints") or {})
        exhaustive = bool(doc.get("exhaustive", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed cuts document: {exc}") from exc
    unknown = set().union(*(c.rejected for c in cuts)) - set(labels) if cuts else set()
    if unknown:
        raise DocumentError(f"cuts mention unknown labels: {sort_labels(unknown)}")
    return labels, RankedCuts(cuts, exhaustive, doc.get("feasible_total")), constraints
