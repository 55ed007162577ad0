"""Joint outcome tables implied by rejected hypotheses, and their mixtures.

Each hypothesis asserts one value on one binary outcome axis (for example
"Fix?" = "no"). Rejecting a hypothesis rules out every cell carrying its
asserted value; the surviving cells share probability uniformly.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence

from .errors import DocumentError, OutcomeError

MIXTURE_TOL = 1e-9


@dataclass(frozen=True)
class OutcomeSpace:
    axes: tuple  # ((name, (value0, value1)), ...)
    assertions: dict  # hypothesis label -> (axis name, value)

    def __post_init__(self):
        axes = tuple((str(name), tuple(values)) for name, values in self.axes)
        names = [a for a, _ in axes]
        if len(set(names)) != len(names):
            raise OutcomeError("duplicate axis name")
        for name, values in axes:
            if len(values) != 2 or values[0] == values[1]:
                raise OutcomeError(f"axis {name!r} needs exactly two distinct values")
        lookup = dict(axes)
        seen = {}
        assertions = {}
        for label, (axis, value) in self.assertions.items():
            if axis not in lookup or value not in lookup[axis]:
                raise OutcomeError(f"{label} asserts unknown outcome {axis}={value}")
            if (axis, value) in seen:
                raise OutcomeError(f"{seen[(axis, value)]} and {label} both assert {axis}={value}")
            seen[(axis, value)] = label
            assertions[label] = (axis, value)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "assertions", assertions)

    @property
    def axis_names(self) -> list[str]:
        return [a for a, _ in self.axes]

    def cells(self) -> list[tuple]:
        return list(itertools.product(*(values for _, values in self.axes)))

    def to_dict(self) -> dict:
        return {
            "axes": [{"name": a, "values": list(v)} for a, v in self.axes],
            "assertions": {k: list(v) for k, v in self.assertions.items()},
        }

    @classmethod
    def from_dict(cls, doc) -> "OutcomeSpace":
        try:
            axes = [(a["name"], a["values"]) for a in doc["axes"]]
            assertions = {k: tuple(v) for k, v in doc["assertions"].items()}
        except (KeyError, TypeError, AttributeError) as exc:
            raise DocumentError(f"malformed outcome space: {exc}") from exc
        return cls(tuple(axes), assertions)

    @classmethod
    def loads(cls, text: str) -> "OutcomeSpace":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DocumentError(f"outcome space is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class JointTable:
    axes: tuple  # axis names, in cell-tuple order
    probabilities: dict  # cell tuple -> Fraction or float

    def __getitem__(self, cell):
        return self.probabilities[tuple(cell)]

    def total(self):
        values = list(self.probabilities.values())
        if all(isinstance(v, Fraction) for v in values):
            return sum(values, Fraction(0))
        return float(sum(float(v) for v in values))

    def as_floats(self) -> dict:
        return {c: float(p) for c, p in self.probabilities.items()}

    def to_csv(self, decimals: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.axes, "probability"])
        for cell, p in self.probabilities.items():
            value = f"{float(p):.{decimals}f}" if decimals is not None else _exact(p)
            w.writerow([*cell, value])
        return buf.getvalue()

    def format(self, decimals: int = 3) -> str:
        """Two-axis grid in the style "rows x columns"; other shapes list cells."""
        if len(self.axes) != 2:
            return "\n".join(f"{cell}: {float(p):.{decimals}f}" for cell, p in self.probabilities.items())
        rows = list(dict.fromkeys(c[0] for c in self.probabilities))
        cols = list(dict.fromkeys(c[1] for c in self.probabilities))
        out = [f"{self.axes[0]} \\ {self.axes[1]} | " + " | ".join(cols)]
        for r in rows:
            out.append(f"{r} | " + " | ".join(f"{float(self.probabilities[(r, c)]):.{decimals}f}" for c in cols))
        return "\n".join(out)


def _exact(p) -> str:
    return str(p) if isinstance(p, Fraction) else repr(float(p))


def table_from_rejection(rejected: Iterable[str], space: OutcomeSpace, *, ignore_unknown: bool = False) -> JointTable:
    """Uniform distribution over the cells not excluded by a rejected hypothesis.

    Labels without an assertion are an error unless ``ignore_unknown`` (a
    rejected fact or detail says nothing about the outcome axes).
    """
    rejected = set(rejected)
    unknown = rejected - set(space.assertions)
    if unknown and not ignore_unknown:
        raise OutcomeError(f"rejected labels without an outcome assertion: {sorted(unknown)}")
    excluded = [space.assertions[lab] for lab in rejected if lab in space.assertions]
    names = space.axis_names
    cells = space.cells()
    alive = [c for c in cells if not any(c[names.index(axis)] == value for axis, value in excluded)]
    if not alive:
        raise OutcomeError(f"rejecting {sorted(rejected)} excludes every outcome")
    p = Fraction(1, len(alive))
    return JointTable(tuple(names), {c: (p if c in alive else Fraction(0)) for c in cells})


def mixture(tables: Sequence[JointTable], weights: Sequence[Real]) -> JointTable:
    """Cellwise weighted average.

    Weights must be non-negative and sum to 1 within 1e-9 (they are then
    renormalized). All-rational inputs give an exact rational result.
    """
    if not tables or len(tables) != len(weights):
        raise OutcomeError("need one weight per table")
    first = tables[0]
    for t in tables[1:]:
        if t.axes != first.axes or list(t.probabilities) != list(first.probabilities):
            raise OutcomeError("tables have different cell structures")
    if any(w < 0 for w in weights):
        raise OutcomeError("mixture weights must be non-negative")
    exact = all(isinstance(w, (int, Fraction)) for w in weights) and all(
        isinstance(p, Fraction) for t in tables for p in t.probabilities.values()
    )
    if exact:
        ws = [Fraction(w) for w in weights]
        total = sum(ws, Fraction(0))
        if total != 1:
            raise OutcomeError(f"mixture weights sum to {total}, not 1")
        probs = {c: sum((w * t.probabilities[c] for w, t in zip(ws, tables)), Fraction(0)) for c in first.probabilities}
        return JointTable(first.axes, probs)
    total = float(sum(float(w) for w in weights))
    if abs(total - 1.0) > MIXTURE_TOL:
        raise OutcomeError(f"mixture weights sum to {total}, not 1")
    ws = [float(w) / total for w in weights]
    probs = {c: sum(w * float(t.probabilities[c]) for w, t in zip(ws, tables)) for c in first.probabilities}
    return JointTable(first.axes, probs)


def uniform_weights(k: int) -> list[Fraction]:
    return [Fraction(1, k)] * k


def tables_csv(tables: Sequence[JointTable], ranks: Sequence[int] | None = None) -> str:
    """Per-cut tables stacked into one CSV keyed by rank."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not tables:
        return ""
    w.writerow(["rank", *tables[0].axes, "probability"])
    ranks = ranks or range(1, len(tables) + 1)
    for r, t in zip(ranks, tables):
        for cell, p in t.probabilities.items():
            w.writerow([r, *cell, _exact(p)])
    return buf.getvalue()
