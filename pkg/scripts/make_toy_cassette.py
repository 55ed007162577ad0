"""Regenerate the bundled toy cassette: 15 synthetic model responses for toy.md.

Each response re-rates the reference toy graph with small seeded jitter, so
the median of the 15 samples stays close to it. Run from the repo root:

    python3 scripts/make_toy_cassette.py
"""

import random
from pathlib import Path

from cdi.backends import Cassette, request_digest
from cdi.compiler import build_prompt
from cdi.graph import parse
from cdi.propositions import load_propositions

DATA = Path(__file__).resolve().parents[1] / "src" / "cdi" / "data"
SAMPLES = 15


def synthetic_response(graph, rng: random.Random) -> str:
    tuples = []
    for u, v, w in graph.edges():
        if rng.random() < 0.08:
            continue
        rating = round(5 + 5 * w) + rng.choice((-1, 0, 0, 0, 1))
        tuples.append((u, v, min(10, max(0, rating))))
    body = "[" + ", ".join(f"('{u}', '{v}', {r})" for u, v, r in tuples) + "]"
    if rng.random() < 0.3:
        return f"Here is the coherence list:\n```python\n{body}\n```"
    return body


def main():
    props = load_propositions(DATA / "propositions" / "toy.md")
    graph = parse((DATA / "graphs" / "toy.json").read_text())
    prompt = build_prompt(props)
    rng = random.Random(20241)
    cassette = Cassette()
    for i in range(SAMPLES):
        cassette.append(request_digest(prompt, i), synthetic_response(graph, rng), sample=i)
    cassette.save(DATA / "cassettes" / "toy.json")


if __name__ == "__main__":
    main()
