"""Acceptance criteria AC1-AC9, one or more tests each.

Test names start with ``test_acN_`` so the summary hook in conftest can
print one PASS/FAIL line per criterion.
"""

import hashlib
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

from cdi.aggregate import convergence_profile, first_below, median_graph
from cdi.backends import Cassette, ReplayBackend
from cdi.cli import cli
from cdi.compiler import INSTRUCTIONS, build_prompt, compile_graph, parse_rated_edges, rating_to_weight
from cdi.gibbs import EnergySpectrum, calibration_residual, gibbs_weights, solve_beta
from cdi.graph import CoherenceGraph, coherence, parse
from cdi.outcomes import OutcomeSpace, mixture, table_from_rejection, uniform_weights
from cdi.propositions import load_propositions
from cdi.solver import ConstraintSet, anneal_max_cut, enumerate_cuts, optimal_cuts

TRIANGLE = CoherenceGraph(["a", "b", "c"], [("a", "b", 1.0), ("a", "c", -1.0), ("b", "c", -1.0)])


def random_graph(rng, n, weights=(-1.0, -0.5, 0.0, 0.5, 1.0), density=0.7):
    labels = [f"p{i + 1}" for i in range(n)]
    edges = [
        (labels[i], labels[j], float(rng.choice(weights)))
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    ]
    return CoherenceGraph(labels, edges)


# -- AC1 ---------------------------------------------------------------------


def test_ac1_triangle_coherence_values():
    assert coherence(TRIANGLE, {"a", "c"}) == 0
    assert coherence(TRIANGLE, {"c"}) == 2


def test_ac1_triangle_unique_optimum_under_1ms():
    best = optimal_cuts(TRIANGLE)
    assert [set(c.rejected) for c in best] == [{"c"}]
    assert best[0].coherence == 2
    timings = []
    for _ in range(20):
        t0 = time.perf_counter()
        coherence(TRIANGLE, {"a", "c"})
        coherence(TRIANGLE, {"c"})
        optimal_cuts(TRIANGLE)
        timings.append(time.perf_counter() - t0)
    assert min(timings) < 1e-3


# -- AC2 ---------------------------------------------------------------------


def _num(label):
    return int(label[1:])


def _canon(labels, part):
    """Smaller side by (size, natural order); independent of the solver's helpers."""
    part = frozenset(part)
    comp = frozenset(labels) - part
    key = lambda p: (len(p), sorted(map(_num, p)))
    return min(part, comp, key=key)


def _brute_force(graph):
    labels = graph.labels
    seen = {}
    for r in range(len(labels) + 1):
        for part in itertools.combinations(labels, r):
            c = _canon(labels, part)
            if c in seen:
                continue
            crossing = sum(graph.weight(u, v) for u in c for v in labels if v not in c)
            seen[c] = round(-crossing, 9)
    return seen


def _rank(items):
    return sorted(items, key=lambda pc: (-pc[1], len(pc[0]), sorted(map(_num, pc[0]))))


def _as_pairs(ranked):
    return [(frozenset(c.rejected), round(c.coherence, 9)) for c in ranked]


def test_ac2_exact_solver_matches_brute_force_and_post_filter():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(2, 13))
        g = random_graph(rng, n)
        oracle = _rank(_brute_force(g).items())
        got = enumerate_cuts(g, limit=2 ** (n - 1))
        assert got.exhaustive
        assert _as_pairs(got) == oracle

        labels = list(g.labels)
        rng.shuffle(labels)
        n_pins = int(rng.integers(1, max(2, n - 1)))
        pins, free = labels[:n_pins], labels[n_pins:]
        accept = {p for p in pins if rng.random() < 0.6}
        reject = set(pins) - accept
        pair = tuple(free[:2]) if len(free) >= 2 else ()
        cons = ConstraintSet(accept, reject, [pair] if pair else [])

        def ok(rej):
            if accept & rej or not reject <= rej:
                return False
            return not pair or (pair[0] in rej) != (pair[1] in rej)

        filtered = []
        for part, val in oracle:
            comp = frozenset(g.labels) - part
            for side in (part, comp):
                if ok(side):
                    filtered.append((side, val))
                    break
        got_c = enumerate_cuts(g, cons, limit=2 ** (n - 1))
        assert _as_pairs(got_c) == _rank(filtered)
    assert time.perf_counter() - t0 < 30


# -- AC3 ---------------------------------------------------------------------


def test_ac3_annealer_matches_exact_optimum():
    rng = np.random.default_rng(99)
    hits = 0
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(2, 13)))
        hits += anneal_max_cut(g, seed=0).coherence == optimal_cuts(g)[0].coherence
    assert hits >= 99


# -- AC4 ---------------------------------------------------------------------


def test_ac4_median_minimizes_absolute_deviation():
    rng = np.random.default_rng(4)
    grid = np.arange(-100, 101) / 100
    labels = ["p1", "p2", "p3"]
    pairs = [("p1", "p2"), ("p1", "p3"), ("p2", "p3")]
    violations = 0
    for trial in range(50):
        m = int(rng.integers(1, 16))
        if trial % 2:
            values = rng.integers(0, 11, size=(m, 3)) / 5 - 1
        else:
            values = rng.uniform(-1, 1, size=(m, 3))
        samples = [CoherenceGraph(labels, [(u, v, float(w)) for (u, v), w in zip(pairs, row)]) for row in values]
        med = median_graph(samples)
        for k, (u, v) in enumerate(pairs):
            w = values[:, k]
            cost = lambda x: float(np.abs(x - w).sum())
            best_grid = min(cost(x) for x in grid)
            if cost(med.weight(u, v)) > best_grid + 1e-12:
                violations += 1
    assert violations == 0


# -- AC5 ---------------------------------------------------------------------


def test_ac5_beta_closed_form_residual_and_uniform_limit():
    spec = EnergySpectrum((0.0, 1.0, 1.0, 1.0))
    beta = solve_beta(spec, 1)
    assert abs(beta - math.log(9)) < 1e-9
    assert abs(calibration_residual(spec, 1, beta)) < 1e-10
    w = gibbs_weights(spec, 0.0)
    assert max(abs(x - 0.25) for x in w) < 1e-12


# -- AC6 ---------------------------------------------------------------------


@pytest.fixture
def outcome_space(data_dir):
    return OutcomeSpace.loads((data_dir / "graphs" / "toy_large_alt.outcomes.json").read_text())


def test_ac6_single_cut_tables(outcome_space):
    q, h, z = Fraction(1, 4), Fraction(1, 2), Fraction(0)
    t5 = table_from_rejection(set(), outcome_space)
    t6 = table_from_rejection({"p16"}, outcome_space)
    t7 = table_from_rejection({"p16", "p17"}, outcome_space)
    cells = [("no", "no"), ("no", "yes"), ("yes", "no"), ("yes", "yes")]
    assert [t5[c] for c in cells] == [q, q, q, q]
    assert [t6[c] for c in cells] == [z, z, h, h]
    assert [t7[c] for c in cells] == [z, z, 1, z]


def test_ac6_uniform_mixture_over_tied_optima(outcome_space, data_dir):
    g = parse((data_dir / "graphs" / "toy_large_alt.json").read_text())
    cons = ConstraintSet.from_dict(json.loads((data_dir / "graphs" / "toy_large_alt.constraints.json").read_text()))
    best = optimal_cuts(g, cons)
    assert [set(c.rejected) for c in best] == [set(), {"p16"}, {"p16", "p17"}]
    tables = [table_from_rejection(c.rejected, outcome_space) for c in best]
    mix = mixture(tables, uniform_weights(3))
    cells = [("no", "no"), ("no", "yes"), ("yes", "no"), ("yes", "yes")]
    assert [mix[c] for c in cells] == [Fraction(1, 12), Fraction(1, 12), Fraction(7, 12), Fraction(1, 4)]
    assert [f"{float(mix[c]):.3f}" for c in cells] == ["0.083", "0.083", "0.583", "0.250"]


# -- AC7 ---------------------------------------------------------------------

# sha256 of the instruction table's rows joined by single spaces
INSTRUCTIONS_SHA256 = "3fb74cc9157192be1562fad4100187b72aa65db784281425f9f83884ad255a70"


def test_ac7_prompt_contains_instruction_text(data_dir):
    assert hashlib.sha256(INSTRUCTIONS.encode()).hexdigest() == INSTRUCTIONS_SHA256
    prompt = build_prompt(load_propositions(data_dir / "propositions" / "toy.md"))
    assert prompt.startswith(INSTRUCTIONS)
    assert "buildCoherence: " in prompt


def test_ac7_example_list_parses_to_four_edges():
    start = INSTRUCTIONS.index("[(")
    example = INSTRUCTIONS[start : INSTRUCTIONS.index(")]", start) + 2]
    edges = parse_rated_edges(example, ["p2", "p3", "p4", "p5"])
    assert [e.rating for e in edges] == [0, 10, 9, 2]
    assert [rating_to_weight(e.rating) for e in edges] == [-1.0, 1.0, 0.8, -0.6]


# -- AC8 ---------------------------------------------------------------------


def test_ac8_identical_samples_give_zero_distances():
    g = CoherenceGraph(["p1", "p2", "p3"], [("p1", "p2", 0.6), ("p2", "p3", -0.4)])
    prof = convergence_profile([g] * 5, trials=20, seed=1)
    assert all((d == 0).all() for d in prof.distances)


def test_ac8_pair_distances_match_exhaustive_enumeration():
    labels = ["p1", "p2", "p3"]
    rows = [(1.0, -0.2, 0.4), (0.6, 0.0, -1.0), (0.2, 0.8, 0.4), (-0.4, 0.6, 1.0)]
    pairs = [("p1", "p2"), ("p1", "p3"), ("p2", "p3")]
    samples = [CoherenceGraph(labels, [(u, v, w) for (u, v), w in zip(pairs, r)]) for r in rows]
    full = [sorted(col) for col in zip(*rows)]
    full_med = [(c[1] + c[2]) / 2 for c in full]
    expected = sorted(
        sum(abs((rows[i][k] + rows[j][k]) / 2 - full_med[k]) for k in range(3))
        for i, j in itertools.combinations(range(4), 2)
    )
    prof = convergence_profile(samples, exhaustive=True)
    assert np.allclose(sorted(prof.distances[1]), expected, atol=1e-12)
    assert len(prof.distances[1]) == 6


def test_ac8_stopping_rule_on_synthetic_profile():
    choice = first_below([10, 4, 0.9, 0.2, 0], 0.10)
    assert choice.n == 3 and choice.converged


# -- AC9 ---------------------------------------------------------------------


def test_ac9_cassette_replay_compile_is_deterministic(data_dir):
    props = load_propositions(data_dir / "propositions" / "toy.md")
    backend = ReplayBackend(Cassette.load(data_dir / "cassettes" / "toy.json"))
    first = [compile_graph(props, backend, sample=i) for i in range(15)]
    second = [compile_graph(props, backend, sample=i) for i in range(15)]
    assert first == second


def _run_pipeline(runner, data_dir, run):
    props = data_dir / "propositions" / "toy.md"
    steps = [
        ["compile", str(props), "--cassette", str(data_dir / "cassettes" / "toy.json"), "--out", str(run)],
        ["solve", str(run / "median.json"), "--props", str(props),
         "--constraints", str(data_dir / "graphs" / "toy.constraints.json")],
        ["report", str(run)],
    ]
    for args in steps:
        res = runner.invoke(cli, args)
        assert res.exit_code == 0, res.output
    return {p.relative_to(run): p.read_bytes() for p in sorted(run.rglob("*")) if p.is_file()}


def test_ac9_pipeline_artifacts_are_byte_identical(tmp_path, data_dir):
    runner = CliRunner()
    a = _run_pipeline(runner, data_dir, tmp_path / "first" / "run")
    b = _run_pipeline(runner, data_dir, tmp_path / "second" / "run")
    assert len([k for k in a if k.parts[0] == "samples"]) == 15
    assert {"median.json", "cuts.json", "report.md", "optimal_cut.dot"} <= {str(k) for k in a}
    assert a.keys() == b.keys()
    assert [str(k) for k in a if a[k] != b[k]] == []
