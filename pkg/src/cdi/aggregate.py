"""Elementwise-median aggregation of sampled graphs and convergence profiling."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import GraphError
from .graph import CoherenceGraph

DEFAULT_TRIALS = 200


def _check_labels(samples: Sequence[CoherenceGraph]) -> tuple[str, ...]:
    if not samples:
        raise GraphError("need at least one sample graph")
    labels = samples[0].labels
    ref = set(labels)
    for i, g in enumerate(samples[1:], 1):
        if set(g.labels) != ref:
            raise GraphError(f"sample {i} has a different label set")
    return labels


def _pair_vectors(samples: Sequence[CoherenceGraph], labels: Sequence[str]) -> np.ndarray:
    """Stack upper-triangle weight vectors, one row per sample (absent = 0)."""
    n = len(labels)
    iu = np.triu_indices(n, k=1)
    rows = []
    for g in samples:
        a = np.zeros((n, n))
        for u, v, w in g.edges():
            i, j = labels.index(u), labels.index(v)
            a[i, j] = a[j, i] = w
        rows.append(a[iu])
    return np.vstack(rows) if rows else np.zeros((0, len(iu[0])))


def _vector_to_graph(labels: Sequence[str], vec: np.ndarray) -> CoherenceGraph:
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    edges = [(labels[i], labels[j], float(w)) for i, j, w in zip(iu, ju, vec) if w != 0.0]
    return CoherenceGraph(labels, edges)


def median_graph(samples: Sequence[CoherenceGraph]) -> CoherenceGraph:
    """Per-pair median weight across samples; pairs with median 0 are dropped.

    With an even number of samples the two central values are averaged.
    """
    labels = list(_check_labels(samples))
    if len(samples) == 1:
        return _vector_to_graph(labels, _pair_vectors(samples, labels)[0])
    return _vector_to_graph(labels, np.median(_pair_vectors(samples, labels), axis=0))


@dataclass
class ConvergenceProfile:
    """L1 distances from medians of random n-subsets to the median of all N.

    ``distances[k]`` holds the trial distances for subset size ``k + 1``.
    """

    N: int
    distances: list[np.ndarray]
    trials: int
    seed: int | None = None
    exhaustive: bool = False

    @property
    def sizes(self) -> list[int]:
        return list(range(1, len(self.distances) + 1))

    def summary(self) -> list[dict]:
        out = []
        for n, d in zip(self.sizes, self.distances):
            q = np.quantile(d, [0.0, 0.25, 0.5, 0.75, 1.0])
            out.append({"n": n, "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]})
        return out

    def medians(self) -> list[float]:
        return [float(np.median(d)) for d in self.distances]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "trial", "distance"])
        for n, d in zip(self.sizes, self.distances):
            for t, x in enumerate(d):
                w.writerow([n, t, repr(float(x))])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["n", "min", "q1", "median", "q3", "max"]
        w.writerow(cols)
        for row in self.summary():
            w.writerow([row["n"]] + [repr(float(row[c])) for c in cols[1:]])
        return buf.getvalue()


def convergence_profile(
    samples: Sequence[CoherenceGraph],
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    *,
    exhaustive: bool = False,
) -> ConvergenceProfile:
    """Distance distribution of subsample medians, for n = 1..N.

    Each trial draws n distinct samples uniformly; trials are independent
    draws with their own RNG stream derived from ``(seed, n, trial)``.
    With ``exhaustive`` every n-subset is used once instead.
    """
    labels = list(_check_labels(samples))
    N = len(samples)
    if N < 2:
        raise GraphError("convergence profile needs at least two samples")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    vecs = _pair_vectors(samples, labels)
    full = np.median(vecs, axis=0)

    def dist(idx) -> float:
        sub = vecs[list(idx)]
        med = sub[0] if len(sub) == 1 else np.median(sub, axis=0)
        return math.fsum(np.abs(med - full))

    distances = []
    for n in range(1, N + 1):
        if exhaustive:
            d = [dist(c) for c in itertools.combinations(range(N), n)]
        else:
            d = []
            for t in range(trials):
                rng = np.random.default_rng([seed, n, t])
                d.append(dist(np.sort(rng.choice(N, size=n, replace=False))))
        distances.append(np.asarray(d, dtype=float))
    return ConvergenceProfile(N, distances, trials, seed, exhaustive)


class SampleSizeChoice(NamedTuple):
    n: int
    converged: bool


def first_below(medians: Sequence[float], fraction: float = 0.10) -> SampleSizeChoice:
    """Smallest n whose median distance is below ``fraction`` of the n = 1 value."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if not medians:
        raise ValueError("empty profile")
    baseline = medians[0]
    if baseline == 0:
        return SampleSizeChoice(1, True)
    for n, m in enumerate(medians, 1):
        if m < fraction * baseline:
            return SampleSizeChoice(n, True)
    return SampleSizeChoice(len(medians), False)


def pick_sample_size(profile: ConvergenceProfile, fraction: float = 0.10) -> SampleSizeChoice:
    return first_below(profile.medians(), fraction)
