"""Command-line surface.

Verbs: validate | score | ensemble | eval | compare | analyze | fetch.
Every command takes --config; score tables land in the output directory as
{name}.scores.json, reports as delimited files plus PNG figures. Exit codes:
0 success, 2 validation/data error, 3 transport error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .client import RetryPolicy, populate_store
from .config import REPORT_FORMATS, RunConfig, load_config
from .dataset import (
    AUX_TEXT,
    AuxQueryFile,
    Dataset,
    parse_aux_samples,
    parse_aux_text,
    parse_dataset,
    parse_gold,
)
from .ensemble import ensemble_tables
from .errors import TransportError, ValidationError, VwsdError
from .metrics import (
    confusion,
    evaluate,
    gold_similarities,
    mean_sim_stats,
    roundtrip_stats,
    sim_gap_quadrants,
)
from .report import (
    markdown_table,
    slug,
    write_confusion_report,
    write_meansim_report,
    write_metrics_report,
    write_roundtrip_report,
)
from .scoring import ScoreTable, coverage_check, score_system, table_from_json, table_to_json
from .store import EmbeddingStore, load_store_file, save_store_binary, save_store_jsonl


@dataclass
class RunContext:
    config: RunConfig
    dataset: Dataset
    store: EmbeddingStore
    aux: list[AuxQueryFile]


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None


def load_context(config: RunConfig, need_gold: bool = False) -> RunContext:
    dataset = parse_dataset(_read_text(config.dataset), config.split)
    if config.gold is not None:
        dataset = parse_gold(_read_text(config.gold), dataset)
    elif need_gold:
        raise ValidationError("this command needs gold labels; set 'gold' in the config")
    store = EmbeddingStore()
    for store_path in config.stores:
        try:
            part = load_store_file(store_path)
        except FileNotFoundError:
            raise ValidationError(f"store file not found: {store_path}") from None
        store.merge_from(part)
    aux = []
    for decl in config.aux:
        text = _read_text(decl.path)
        parsed = (
            parse_aux_text(text, decl.tag)
            if decl.kind == AUX_TEXT
            else parse_aux_samples(text, decl.tag)
        )
        parsed.validate_against(dataset)
        aux.append(parsed)
    return RunContext(config=config, dataset=dataset, store=store, aux=aux)


def compute_table(ctx: RunContext, name: str, jobs: int) -> ScoreTable:
    """Score a system, or a whole ensemble by scoring its members first."""
    for spec in ctx.config.systems:
        if spec.name == name:
            return score_system(ctx.dataset, spec, ctx.store, ctx.aux, jobs=jobs)
    for ens in ctx.config.ensembles:
        if ens.name == name:
            members = [compute_table(ctx, m, jobs) for m in ens.members]
            return ensemble_tables(members, ens)
    raise ValidationError(f"unknown system or ensemble {name!r}")


def _score_path(out: Path, name: str) -> Path:
    return out / f"{slug(name)}.scores.json"


def _formats(args, config: RunConfig) -> tuple[str, ...]:
    return tuple(args.format) if args.format else config.formats


def _jobs(args, config: RunConfig) -> int:
    return args.jobs if args.jobs else config.jobs


def _out(args, config: RunConfig) -> Path:
    return Path(args.out) if args.out else config.out


def _figures(args, config: RunConfig) -> bool:
    return False if args.no_figures else config.figures


def cmd_validate(args) -> int:
    config = load_config(args.config)
    try:
        ctx = load_context(config)
    except VwsdError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    report = coverage_check(ctx.store, ctx.dataset, list(config.systems), ctx.aux)
    if not report.ok:
        for line in report.summary_lines():
            print(line, file=sys.stderr)
        print(
            f"invalid: {len(report.missing_entries)} missing store entries, "
            f"{len(report.missing_aux_rows)} missing aux rows",
            file=sys.stderr,
        )
        return 2
    print(
        f"ok: {len(ctx.dataset)} instances, {ctx.store.entry_count()} store entries, "
        f"{len(config.systems)} systems, {len(config.ensembles)} ensembles",
        file=sys.stderr,
    )
    return 0


def cmd_score(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config)
    spec = config.system(args.system)
    table = score_system(ctx.dataset, spec, ctx.store, ctx.aux, jobs=_jobs(args, config))
    out = _out(args, config)
    out.mkdir(parents=True, exist_ok=True)
    path = _score_path(out, spec.name)
    path.write_text(table_to_json(table), encoding="utf-8")
    print(path)
    return 0


def cmd_ensemble(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config)
    ens = config.ensemble(args.ensemble)
    table = compute_table(ctx, ens.name, _jobs(args, config))
    out = _out(args, config)
    out.mkdir(parents=True, exist_ok=True)
    path = _score_path(out, ens.name)
    path.write_text(table_to_json(table), encoding="utf-8")
    print(path)
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config, need_gold=True)
    jobs = _jobs(args, config)
    tables: list[ScoreTable] = []
    for path in args.scores or []:
        tables.append(table_from_json(_read_text(Path(path))))
    for name in args.names or (list(config.names) if not args.scores else []):
        tables.append(compute_table(ctx, name, jobs))
    if not tables:
        raise ValidationError("nothing to evaluate")
    reports = [evaluate(t, ctx.dataset) for t in tables]
    out = _out(args, config)
    written = write_metrics_report(
        out, reports, formats=_formats(args, config), figures=_figures(args, config)
    )
    print(
        markdown_table(
            ["System", "n", "Hit rate", "MRR"],
            [[r.system, str(r.n), f"{r.hit_rate_2dp:.2f}", f"{r.mrr_2dp:.2f}"]
             for r in reports],
        ),
        end="",
    )
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config, need_gold=True)
    jobs = _jobs(args, config)
    table_a = compute_table(ctx, args.system_a, jobs)
    table_b = compute_table(ctx, args.system_b, jobs)
    report = confusion(table_a, table_b, ctx.dataset)
    written = write_confusion_report(
        _out(args, config), report,
        formats=_formats(args, config), figures=_figures(args, config),
    )
    print(
        f"{report.system_a} correct/incorrect vs {report.system_b}: "
        f"{report.counts[0][0]} {report.counts[0][1]} / "
        f"{report.counts[1][0]} {report.counts[1][1]} (n={report.n})"
    )
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_analyze_mean_sim(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config, need_gold=True)
    table = compute_table(ctx, args.system, _jobs(args, config))
    mean_gold, mean_all = mean_sim_stats(table, ctx.dataset)
    written = write_meansim_report(
        _out(args, config), table.system, mean_gold, mean_all,
        formats=_formats(args, config), figures=_figures(args, config),
    )
    print(f"{table.system}: sim(text, gold)={mean_gold:.4f} sim(text, all)={mean_all:.4f}")
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_analyze_sim_gap(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config, need_gold=True)
    jobs = _jobs(args, config)
    table_a = compute_table(ctx, args.system_a, jobs)
    table_b = compute_table(ctx, args.system_b, jobs)
    report = sim_gap_quadrants(
        table_a,
        table_b,
        gold_similarities(table_a, ctx.dataset),
        gold_similarities(table_b, ctx.dataset),
        ctx.dataset,
    )
    written = write_confusion_report(
        _out(args, config), report,
        formats=_formats(args, config), figures=_figures(args, config),
        stem=f"simgap_{slug(report.system_a)}_vs_{slug(report.system_b)}",
    )
    print(f"quadrant counts {report.counts}, means {report.quadrant_means}")
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_analyze_roundtrip(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config, need_gold=True)
    table = compute_table(ctx, args.system, _jobs(args, config))
    aux = next((a for a in ctx.aux if a.tag == args.pairs_tag), None)
    if aux is None:
        raise ValidationError(f"no aux file with tag {args.pairs_tag!r}")
    if aux.kind != AUX_TEXT:
        raise ValidationError(f"aux {args.pairs_tag!r} is not a text file")
    pairs = {}
    for inst in ctx.dataset.instances:
        round_tripped = aux.text_for(inst.id)
        if round_tripped is None:
            raise ValidationError(
                f"aux {args.pairs_tag!r}: no round-trip row for instance {inst.id}"
            )
        pairs[inst.id] = (inst.full_phrase, round_tripped)
    report = roundtrip_stats(pairs, table, ctx.dataset)
    written = write_roundtrip_report(
        _out(args, config), report,
        formats=_formats(args, config), figures=_figures(args, config),
    )
    def show(m):
        return "-" if m is None else f"{m:.4f}"
    print(
        f"{report.system}: identical {report.identical_count} "
        f"(mean sim {show(report.identical_mean_sim)}), different "
        f"{report.different_count} (mean sim {show(report.different_mean_sim)})"
    )
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_fetch(args) -> int:
    config = load_config(args.config)
    ctx = load_context(config)
    endpoint = args.endpoint or os.environ.get("VWSD_ENDPOINT") or config.endpoint
    if not endpoint:
        raise ValidationError(
            "no embedding service endpoint: pass --endpoint, set VWSD_ENDPOINT, "
            "or add 'endpoint' to the config"
        )
    policy = RetryPolicy(retries=args.retries)
    before = ctx.store.entry_count()
    merged = populate_store(
        endpoint, ctx.dataset, list(config.systems), ctx.aux, ctx.store,
        policy=policy, token=args.token, max_in_flight=args.jobs or config.jobs,
    )
    out_path = Path(args.store_out) if args.store_out else _out(args, config) / "fetched.embs"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if out_path.suffix == ".jsonl":
        out_path.write_text(save_store_jsonl(merged), encoding="utf-8")
    else:
        out_path.write_bytes(save_store_binary(merged))
    print(f"fetched {merged.entry_count() - before} entries -> {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vwsd",
        description="Rank candidate images per (target word, context phrase) "
                    "instance over precomputed embedding stores.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run configuration (TOML)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--format", action="append", choices=REPORT_FORMATS,
                       help="report format, repeatable (overrides config)")
        p.add_argument("--jobs", type=int, help="worker threads (overrides config)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    p = sub.add_parser("validate", help="check dataset, stores, aux files and coverage")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="score one system, write its score table")
    common(p)
    p.add_argument("system", help="system name from the config")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ensemble", help="combine member systems, write the score table")
    common(p)
    p.add_argument("ensemble", help="ensemble name from the config")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="hit rate and MRR per system/ensemble")
    common(p)
    p.add_argument("names", nargs="*",
                   help="systems/ensembles to evaluate (default: all)")
    p.add_argument("--scores", action="append",
                   help="evaluate an existing score-table JSON file, repeatable")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="2x2 correctness confusion between two systems")
    common(p)
    p.add_argument("system_a")
    p.add_argument("system_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="similarity and round-trip analyses")
    analyze_sub = p.add_subparsers(dest="analysis", required=True)

    pa = analyze_sub.add_parser("mean-sim", help="mean cosine to gold vs all candidates")
    common(pa)
    pa.add_argument("system")
    pa.set_defaults(func=cmd_analyze_mean_sim)

    pa = analyze_sub.add_parser("sim-gap",
                                help="confusion counts with gold-similarity gap means")
    common(pa)
    pa.add_argument("system_a")
    pa.add_argument("system_b")
    pa.set_defaults(func=cmd_analyze_sim_gap)

    pa = analyze_sub.add_parser("roundtrip",
                                help="round-trip translation partition statistics")
    common(pa)
    pa.add_argument("system")
    pa.add_argument("--pairs-tag", required=True,
                    help="text aux tag holding the round-tripped phrases")
    pa.set_defaults(func=cmd_analyze_roundtrip)

    p = sub.add_parser("fetch", help="fill store gaps from an embedding service")
    common(p)
    p.add_argument("--endpoint", help="service URL (or VWSD_ENDPOINT, or config)")
    p.add_argument("--store-out", help="where to write the merged store "
                                       "(.jsonl for JSONL, anything else binary)")
    p.add_argument("--token", help="bearer token passed through to the service")
    p.add_argument("--retries", type=int, default=3)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except VwsdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
