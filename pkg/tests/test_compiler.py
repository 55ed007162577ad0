import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdi.backends import Cassette, ReplayBackend, request_digest
from cdi.compiler import (
    COMMAND,
    INSTRUCTIONS,
    RatedEdge,
    build_prompt,
    compile_graph,
    format_rated_edges,
    parse_rated_edges,
    rating_to_weight,
    sample_graphs,
)
from cdi.errors import AllSamplesFailed, BackendError, PropositionError, ResponseParseError
from cdi.propositions import Proposition, load_propositions

EXAMPLE = "[('p2', 'p3', 0), ('p2', 'p5', 10), ('p3', 'p4', 9), ('p3', 'p5', 2)]"
LABELS = ["p2", "p3", "p4", "p5"]
PROPS = [Proposition(lab, f"claim {lab}") for lab in LABELS]


class Scripted:
    """Backend returning canned responses; ``Exception`` entries are raised."""

    def __init__(self, responses):
        self.responses = responses
        self.calls = []

    def complete(self, prompt, sample=0):
        self.calls.append(sample)
        r = self.responses[sample % len(self.responses)] if isinstance(self.responses, list) else self.responses
        if isinstance(r, Exception):
            raise r
        return r


def test_prompt_for_toy_fixture(data_dir):
    prompt = build_prompt(load_propositions(data_dir / "propositions" / "toy.md"))
    head, body = prompt.rsplit(COMMAND, 1)
    assert head.startswith(INSTRUCTIONS)
    assert "# Facts/beliefs" in body
    assert sum(1 for line in body.splitlines() if line.startswith("- p")) == 8


def test_prompt_ends_with_propositions():
    prompt = build_prompt([Proposition("p1", "one"), Proposition("p2", "two")])
    assert prompt.rstrip().endswith("- p1: one\n- p2: two")
    assert prompt.index(COMMAND) < prompt.index("- p1: one")


@pytest.mark.parametrize("props", [[], [Proposition("p1", "a"), Proposition("p1", "b")], [Proposition("p1", "a")]])
def test_prompt_preconditions(props):
    with pytest.raises(PropositionError):
        build_prompt(props)


def test_parse_example_line():
    edges = parse_rated_edges(EXAMPLE, LABELS)
    assert [(e.u, e.v, e.rating) for e in edges] == [("p2", "p3", 0), ("p2", "p5", 10), ("p3", "p4", 9), ("p3", "p5", 2)]


def test_parse_empty_list():
    assert parse_rated_edges("[]", LABELS) == []


def test_parse_tolerates_prose_and_fences():
    text = f"Sure! Here you go:\n```python\n{EXAMPLE}\n```\nHope that helps [really]."
    assert len(parse_rated_edges(text, LABELS)) == 4


def test_parse_normalizes_orientation():
    (e,) = parse_rated_edges("[('p10', 'p9', 7)]", ["p9", "p10"])
    assert (e.u, e.v) == ("p9", "p10")


@pytest.mark.parametrize(
    "text",
    [
        "[('p1', 'p1', 5)]",
        "[('p2', 'p9', 5)]",
        "[('p2', 'p3', 11)]",
        "[('p2', 'p3', -1)]",
        "[('p2', 'p3', 4.5)]",
        "[('p2', 'p3', 4), ('p3', 'p2', 5)]",
        "I cannot rate these propositions.",
    ],
)
def test_parse_errors_carry_raw_response(text):
    with pytest.raises(ResponseParseError) as info:
        parse_rated_edges(text, LABELS + ["p1"])
    assert info.value.raw == text


ratings = st.integers(0, 10)
pairs = st.sampled_from([(a, b) for i, a in enumerate(LABELS) for b in LABELS[i + 1 :]])


@given(st.dictionaries(pairs, ratings))
def test_parse_is_idempotent_on_formatted_output(d):
    edges = [RatedEdge(u, v, r) for (u, v), r in d.items()]
    once = parse_rated_edges(format_rated_edges(edges), LABELS)
    assert parse_rated_edges(format_rated_edges(once), LABELS) == once
    assert {(e.u, e.v): e.rating for e in once} == d


def test_rating_to_weight():
    assert rating_to_weight(0) == -1.0
    assert rating_to_weight(10) == 1.0
    assert rating_to_weight(5) == 0.0
    weights = [rating_to_weight(r) for r in range(11)]
    assert weights == [-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    assert all(a < b for a, b in zip(weights, weights[1:]))
    for r in (-1, 11, True):
        with pytest.raises(ValueError):
            rating_to_weight(r)


def test_compile_graph_with_mock():
    g = compile_graph(PROPS, Scripted(EXAMPLE))
    assert g.labels == tuple(LABELS)
    assert [w for *_, w in g.edges()] == [-1.0, 1.0, 0.8, -0.6]


def test_compile_graph_prose_only():
    with pytest.raises(ResponseParseError):
        compile_graph(PROPS, Scripted("no idea"))


def test_parse_retries_reuse_sample_slot():
    calls = iter(["garbage", EXAMPLE])
    backend = Scripted(None)
    backend.complete = lambda prompt, sample=0: next(calls)
    assert len(compile_graph(PROPS, backend, parse_retries=1).edges()) == 4


def test_compile_graph_cassette_replay_is_deterministic():
    prompt = build_prompt(PROPS)
    cassette = Cassette()
    cassette.append(request_digest(prompt, 0), EXAMPLE)
    backend = ReplayBackend(cassette)
    assert compile_graph(PROPS, backend) == compile_graph(PROPS, backend)


def test_sample_graphs_single():
    batch = sample_graphs(PROPS, Scripted(EXAMPLE), 1)
    assert len(batch.graphs) == 1 and batch.failures == []


def test_sample_graphs_from_toy_cassette(data_dir):
    props = load_propositions(data_dir / "propositions" / "toy.md")
    backend = ReplayBackend(Cassette.load(data_dir / "cassettes" / "toy.json"))
    batch = sample_graphs(props, backend, 15)
    assert batch.samples == list(range(15))
    assert batch.graphs == [compile_graph(props, backend, sample=i) for i in range(15)]


def test_sample_graphs_records_individual_failure():
    backend = Scripted([EXAMPLE, BackendError("request failed after 3 attempts"), EXAMPLE])
    batch = sample_graphs(PROPS, backend, 3)
    assert len(batch.graphs) == 2 and batch.samples == [0, 2]
    assert [f.sample for f in batch.failures] == [1]


def test_sample_graphs_concurrent_keeps_order():
    responses = [f"[('p2', 'p3', {r})]" for r in range(8)]
    batch = sample_graphs(PROPS, Scripted(responses), 8, max_workers=4)
    assert [g.weight("p2", "p3") for g in batch.graphs] == [rating_to_weight(r) for r in range(8)]


def test_sample_graphs_all_failed():
    with pytest.raises(AllSamplesFailed):
        sample_graphs(PROPS, Scripted("nothing"), 3)
