"""Command-line pipeline: compile -> solve -> analyze -> report.

Artifacts are plain files in a run directory::

    run/
      propositions.md  prompt.txt
      samples/sample_00.json ...   median.json
      convergence.csv  convergence_summary.csv  convergence.json
      cuts.json
      analysis.json  gibbs.csv  kde.csv
      tables.csv  mixture_counting.csv  mixture_gibbs.csv
      report.md  graph.dot  optimal_cut.dot

Exit codes: 0 success, 1 domain error (unsatisfiable constraints, no energy
gap, backend failure), 2 usage or I/O error.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .aggregate import DEFAULT_TRIALS, convergence_profile, median_graph, pick_sample_size
from .backends import DEFAULT_BASE_URL, DEFAULT_MODEL, Cassette, ChatBackend, RecordingBackend, ReplayBackend
from .compiler import build_prompt, sample_graphs
from .errors import CDIError, DocumentError, PropositionError
from .gibbs import analyze_spectrum, kde_csv, spectrum_from_cuts
from .graph import CoherenceGraph, Cut, parse, serialize, sort_labels, to_dot
from .outcomes import OutcomeSpace, mixture, table_from_rejection, tables_csv, uniform_weights
from .propositions import format_propositions, load_propositions
from .solver import (
    EXACT_CAP,
    NO_CONSTRAINTS,
    AnnealParams,
    RankedCuts,
    accepted_rejected,
    anneal_max_cut,
    constraints_from_propositions,
    cuts_from_dict,
    cuts_to_dict,
    enumerate_cuts,
    load_constraints,
)

log = logging.getLogger("cdi")

EXIT_DOMAIN = 1
EXIT_USAGE = 2

GRAPH_FILES = ("median.json", "graph.json")


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DocumentError, PropositionError) as exc:
            _fail(str(exc), EXIT_USAGE)
        except CDIError as exc:
            _fail(str(exc), EXIT_DOMAIN)
        except OSError as exc:
            _fail(f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc), EXIT_USAGE)

    return wrapper


def fmt_part(labels) -> str:
    labels = sort_labels(labels)
    return "{" + ", ".join(labels) + "}" if labels else "∅"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(path: Path, doc) -> None:
    _write(path, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def read_graph(path: Path) -> CoherenceGraph:
    return parse(Path(path).read_text(encoding="utf-8"))


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def cli(verbose):
    """Coherence-driven inference over LLM-compiled coherence graphs."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("props", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@handle_errors
def prompt(props):
    """Print the graph-building prompt for a proposition file."""
    click.echo(build_prompt(load_propositions(props)), nl=False)


def _backend(cassette, record, backend_url, model, temperature):
    if cassette is not None and not record:
        return ReplayBackend(Cassette.load(cassette))
    live = ChatBackend(base_url=backend_url, model=model, temperature=temperature)
    if record:
        if cassette is None:
            raise click.UsageError("--record needs --cassette PATH")
        existing = Cassette.load(cassette) if Path(cassette).exists() else Cassette()
        return RecordingBackend(live, existing, cassette)
    return live


@cli.command("compile")
@click.argument("props", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True, help="Run directory.")
@click.option("--n", "n", type=click.IntRange(min=1), default=15, show_default=True, help="Number of sampled graphs.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=DEFAULT_TRIALS, show_default=True, help="Subsamples per size.")
@click.option("--fraction", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.10, show_default=True)
@click.option("--cassette", type=click.Path(dir_okay=False, path_type=Path), help="Replay responses from this cassette.")
@click.option("--record", is_flag=True, help="Query the live backend and record into --cassette.")
@click.option("--backend-url", default=DEFAULT_BASE_URL, show_default=True)
@click.option("--model", default=DEFAULT_MODEL, show_default=True)
@click.option("--temperature", type=float, default=None, help="Omitted from requests unless set.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@handle_errors
def compile_cmd(props, out_dir, n, seed, trials, fraction, cassette, record, backend_url, model, temperature, workers):
    """Sample N graphs for PROPS, take their median, and profile convergence."""
    if cassette is not None and not record and not cassette.exists():
        raise click.BadParameter(f"cassette not found: {cassette}", param_hint="--cassette")
    pf = load_propositions(props)
    backend = _backend(cassette, record, backend_url, model, temperature)
    batch = sample_graphs(pf, backend, n, max_workers=workers)

    _write(out_dir / "propositions.md", format_propositions(pf))
    _write(out_dir / "prompt.txt", build_prompt(pf))
    for i, g in zip(batch.samples, batch.graphs):
        _write(out_dir / "samples" / f"sample_{i:02d}.json", serialize(g))
    if batch.failures:
        _dump_json(out_dir / "failures.json", [dataclasses.asdict(f) for f in batch.failures])
    med = median_graph(batch.graphs)
    _write(out_dir / "median.json", serialize(med))

    summary = {"requested": n, "succeeded": len(batch.graphs), "failed": [f.sample for f in batch.failures]}
    if len(batch.graphs) >= 2:
        profile = convergence_profile(batch.graphs, trials=trials, seed=seed)
        choice = pick_sample_size(profile, fraction)
        _write(out_dir / "convergence.csv", profile.to_csv())
        _write(out_dir / "convergence_summary.csv", profile.summary_csv())
        summary.update(
            trials=trials,
            seed=seed,
            fraction=fraction,
            median_distance=profile.medians(),
            chosen_n=choice.n,
            converged=choice.converged,
        )
    else:
        summary.update(chosen_n=len(batch.graphs), converged=None)
    _dump_json(out_dir / "convergence.json", summary)

    click.echo(f"{len(batch.graphs)}/{n} samples compiled; median graph has {len(med.edges())} edges")
    if batch.failures:
        click.echo(f"failed samples: {', '.join(str(f.sample) for f in batch.failures)}")
    if summary.get("converged") is not None:
        verdict = "converged" if summary["converged"] else "NOT converged"
        click.echo(f"L1 stopping rule ({fraction:g}): n = {summary['chosen_n']} ({verdict})")
    click.echo(f"wrote {out_dir}")


def _load_solve_constraints(constraints_file, props_file):
    constraints = NO_CONSTRAINTS
    if props_file is not None:
        constraints = constraints_from_propositions(load_propositions(props_file))
    if constraints_file is not None:
        constraints = constraints.merged(load_constraints(Path(constraints_file).read_text(encoding="utf-8")))
    return constraints


def describe_optimum(ranked: RankedCuts) -> str:
    best = ranked[0].coherence
    top = [c for c in ranked if c.coherence == best]
    if ranked.exhaustive and ranked.total is not None and len(top) == ranked.total:
        return f"all {ranked.total} bipartitions tie at coherence {best:g}"
    if len(top) == 1:
        return f"optimal cut has smaller part {fmt_part(top[0].rejected)} (coherence {best:g})"
    more = "" if len(top) < len(ranked) or not ranked.exhaustive else " (at least; raise --top-k to see all)"
    parts = ", ".join(fmt_part(c.rejected) for c in top)
    return f"{len(top)} equally optimal cuts{more} (coherence {best:g}) have smaller parts {parts}"


@cli.command()
@click.argument("graph_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--constraints", "constraints_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--props", "props_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Pin this file's facts, beliefs and details to the accepted side.")
@click.option("--top-k", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--anneal", is_flag=True, help="Use simulated annealing instead of exact enumeration.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-trivial", is_flag=True, help="Exclude the cut that rejects nothing.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), help="Default: cuts.json next to the graph.")
@handle_errors
def solve(graph_file, constraints_file, props_file, top_k, anneal, seed, no_trivial, out_file):
    """Rank the most coherent cuts of GRAPH_FILE."""
    graph = read_graph(graph_file)
    constraints = _load_solve_constraints(constraints_file, props_file)
    if anneal:
        cut = anneal_max_cut(graph, constraints, AnnealParams(), seed=seed)
        ranked = RankedCuts((cut,), exhaustive=False)
    else:
        if graph.n > EXACT_CAP:
            _fail(
                f"{graph.n} vertices exceeds the exact-mode cap of {EXACT_CAP}; "
                "rerun with --anneal for an approximate answer",
                EXIT_DOMAIN,
            )
        ranked = enumerate_cuts(graph, constraints, top_k, allow_trivial=not no_trivial)
    out_file = out_file or graph_file.parent / "cuts.json"
    _dump_json(out_file, cuts_to_dict(graph, ranked, constraints))

    click.echo(describe_optimum(ranked))
    if constraints.has_pins:
        acc, rej = accepted_rejected(ranked[0], constraints, graph)
        click.echo(f"rejected: {fmt_part(rej)}")
        click.echo(f"accepted: {fmt_part(acc)}")
    click.echo(f"wrote {out_file}")


@cli.command()
@click.argument("cuts_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", "k", type=click.IntRange(min=1), help="Number of sufficiently coherent cuts (default: KDE suggestion).")
@click.option("--beta", type=click.FloatRange(min=0), help="Force the inverse temperature.")
@click.option("--bandwidth", type=click.FloatRange(min=0, min_open=True), help="KDE bandwidth (default: Silverman).")
@click.option("--m", "m", type=click.IntRange(min=2), help="Use only the m best cuts in the file.")
@click.option("--outcomes", "outcomes_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), help="Default: the cuts file's directory.")
@handle_errors
def analyze(cuts_file, k, beta, bandwidth, m, outcomes_file, out_dir):
    """Gibbs-weight the ranked cuts and, given an outcome space, mix their tables."""
    doc = json.loads(Path(cuts_file).read_text(encoding="utf-8"))
    labels, ranked, _ = cuts_from_dict(doc)
    cuts = list(ranked)[: m or len(ranked)]
    if len(cuts) < 2:
        raise DocumentError("need at least two cuts to analyze")
    out_dir = out_dir or cuts_file.parent
    spectrum = spectrum_from_cuts(cuts)
    result = analyze_spectrum(spectrum, k, beta=beta, bandwidth=bandwidth)

    _write(out_dir / "gibbs.csv", result.to_csv())
    try:
        _write(out_dir / "kde.csv", kde_csv(spectrum, bandwidth))
    except CDIError:
        pass
    analysis = {
        "N": spectrum.N,
        "K": result.K,
        "beta": result.beta,
        "threshold": result.threshold,
        "bandwidth": result.bandwidth,
        "cuts": [
            {"rank": i, "rejected": c.rejected_sorted(), "energy": e, "weight": w}
            for i, (c, e, w) in enumerate(zip(cuts, result.energies, result.weights), 1)
        ],
    }
    click.echo(f"N = {spectrum.N}, K = {result.K}, beta = {result.beta:.6g}")
    for row in analysis["cuts"][: (result.K or 0) + 1]:
        click.echo(f"  rank {row['rank']}: smaller part {fmt_part(row['rejected'])} weight {row['weight']:.3f}")

    if outcomes_file is not None:
        space = OutcomeSpace.loads(Path(outcomes_file).read_text(encoding="utf-8"))
        tables, ranks, weights, skipped = [], [], [], []
        for i, (c, w) in enumerate(zip(cuts, result.weights), 1):
            try:
                tables.append(table_from_rejection(c.rejected, space, ignore_unknown=True))
            except CDIError:
                skipped.append(i)
                continue
            ranks.append(i)
            weights.append(w)
        if not tables:
            raise CDIError("every cut rejects contradictory outcomes")
        _write(out_dir / "tables.csv", tables_csv(tables, ranks))
        gibbs_total = sum(weights)
        gibbs_mix = mixture(tables, [w / gibbs_total for w in weights])
        _write(out_dir / "mixture_gibbs.csv", gibbs_mix.to_csv())
        analysis["outcomes"] = {"skipped_contradictory": skipped, "gibbs_mass_used": gibbs_total}
        if result.K:
            top = [t for r, t in zip(ranks, tables) if r <= result.K]
            counting = mixture(top, uniform_weights(len(top)))
            _write(out_dir / "mixture_counting.csv", counting.to_csv())
            analysis["outcomes"]["counting"] = {"|".join(c): str(p) for c, p in counting.probabilities.items()}
            click.echo(f"\ncounting-measure mixture over the {len(top)} most coherent cuts:")
            click.echo(counting.format())
        analysis["outcomes"]["gibbs"] = {"|".join(c): float(p) for c, p in gibbs_mix.probabilities.items()}
        click.echo("\nGibbs-measure mixture:")
        click.echo(gibbs_mix.format())
        if skipped:
            click.echo(f"skipped contradictory cuts at ranks {skipped}")
    _dump_json(out_dir / "analysis.json", analysis)
    click.echo(f"wrote {out_dir}")


# -- report ------------------------------------------------------------------


def _absent(what: str, how: str) -> str:
    return f"_Absent: no {what} found (run `{how}`)._\n"


def _find_graph(run_dir: Path) -> Path | None:
    for name in GRAPH_FILES:
        if (run_dir / name).is_file():
            return run_dir / name
    return None


def build_report(run_dir: Path) -> str:
    graph_path = _find_graph(run_dir)
    if graph_path is None:
        raise DocumentError(
            f"{run_dir} has no graph; required: {' or '.join(GRAPH_FILES)} "
            "(optional: cuts.json, analysis.json, convergence.json, propositions.md)"
        )
    graph = read_graph(graph_path)
    props = None
    if (run_dir / "propositions.md").is_file():
        props = load_propositions(run_dir / "propositions.md")
    lines = [f"# Coherence-driven inference report: {run_dir.name}", ""]

    lines += ["## Propositions", ""]
    if props is not None:
        lines.append(format_propositions(props))
    else:
        lines.append(_absent("propositions.md", "cdi compile"))

    lines += ["## Graph", ""]
    pos = sum(1 for *_, w in graph.edges() if w > 0)
    neg = sum(1 for *_, w in graph.edges() if w < 0)
    lines.append(f"{graph.n} propositions, {len(graph.edges())} edges ({pos} consistent, {neg} inconsistent). "
                 f"Rendering: `graph.dot`.\n")
    lines.append("| u | v | weight |\n|---|---|---|")
    lines += [f"| {u} | {v} | {w:+.2f} |" for u, v, w in graph.edges()]
    lines.append("")
    _write(run_dir / "graph.dot", to_dot(graph))

    lines += ["## Convergence", ""]
    conv = run_dir / "convergence.json"
    if conv.is_file():
        c = json.loads(conv.read_text(encoding="utf-8"))
        lines.append(f"{c['succeeded']}/{c['requested']} samples compiled.")
        if c.get("converged") is None:
            lines.append("Too few samples for a convergence profile.\n")
        else:
            verdict = "converged" if c["converged"] else "did NOT converge"
            meds = ", ".join(f"{x:.3g}" for x in c["median_distance"])
            lines.append(f"Median L1 distance to the full median by subsample size: {meds}.")
            lines.append(f"Stopping rule (below {c['fraction']:g} of the n = 1 value): n = {c['chosen_n']}, {verdict}.\n")
    else:
        lines.append(_absent("convergence.json", "cdi compile"))

    lines += ["## Cuts", ""]
    cuts_path = run_dir / "cuts.json"
    if cuts_path.is_file():
        _, ranked, constraints = cuts_from_dict(json.loads(cuts_path.read_text(encoding="utf-8")))
        lines.append(describe_optimum(ranked) + ".\n")
        lines.append("| rank | rejected (smaller part) | coherence |\n|---|---|---|")
        lines += [f"| {i} | {fmt_part(c.rejected)} | {c.coherence:g} |" for i, c in enumerate(ranked, 1)]
        lines.append("")
        _write(run_dir / "optimal_cut.dot", to_dot(graph, ranked[0], name="optimal_cut"))
        if constraints.has_pins or constraints.exclusive_pairs:
            acc, rej = accepted_rejected(ranked[0], constraints, graph)
            lines.append(f"Pinned accepted: {fmt_part(constraints.pinned_accepted)}.")
            if constraints.exclusive_pairs:
                pairs = ", ".join(fmt_part(p) for p in constraints.exclusive_pairs)
                lines.append(f"Exactly one accepted in each of: {pairs}.")
            lines.append(f"\n**Accepted:** {fmt_part(acc)}\n\n**Rejected:** {fmt_part(rej)}\n")
            if props is not None:
                hyps = set(props.by_category("hypothesis"))
                lines.append(f"Accepted hypotheses: {fmt_part(acc & hyps)}. Rejected hypotheses: {fmt_part(rej & hyps)}.\n")
    else:
        lines.append(_absent("cuts.json", "cdi solve"))

    lines += ["## Gibbs analysis", ""]
    an_path = run_dir / "analysis.json"
    if an_path.is_file():
        a = json.loads(an_path.read_text(encoding="utf-8"))
        lines.append(f"N = {a['N']} cuts, K = {a['K']}, beta = {a['beta']:.6g}.\n")
        lines.append("| rank | rejected | energy | weight |\n|---|---|---|---|")
        lines += [f"| {r['rank']} | {fmt_part(r['rejected'])} | {r['energy']:g} | {r['weight']:.3f} |" for r in a["cuts"]]
        lines.append("")
        if "outcomes" in a:
            o = a["outcomes"]
            if "counting" in o:
                lines.append("Counting-measure mixture over the K most coherent cuts:\n")
                lines += [f"- {cell}: {float(Fraction(p)):.3f} ({p})" for cell, p in o["counting"].items()]
                lines.append("")
            lines.append("Gibbs-measure mixture:\n")
            lines += [f"- {cell}: {p:.3f}" for cell, p in o["gibbs"].items()]
            lines.append("")
    else:
        lines.append(_absent("analysis.json", "cdi analyze"))
    return "\n".join(lines).rstrip() + "\n"


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@handle_errors
def report(run_dir):
    """Write report.md and DOT renderings for a run directory."""
    _write(run_dir / "report.md", build_report(run_dir))
    click.echo(f"wrote {run_dir / 'report.md'}")


def main():
    cli()


if __name__ == "__main__":
    main()
