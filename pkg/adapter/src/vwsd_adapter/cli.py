"""Adapter CLI: serve | export-store | export-contexts | export-translations |
export-samples.

The default registry serves deterministic stub encoders so the whole tool
chain runs offline; pass --space NAME:DIM:norm|raw to reshape it.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .exporters import (
    export_contexts,
    export_sd_samples,
    export_store,
    export_translations,
    read_dataset_rows,
)
from .generators import context_generator, translator_from_name
from .registry import ModelRegistry, stub_registry
from .service import serve_embed


def _registry_from_args(args) -> ModelRegistry:
    if not args.space:
        return stub_registry()
    spaces = {}
    for decl in args.space:
        try:
            name, dim, mode = decl.split(":")
            spaces[name] = (int(dim), mode == "norm")
            if mode not in ("norm", "raw"):
                raise ValueError
        except ValueError:
            raise SystemExit(
                f"bad --space {decl!r}: expected NAME:DIM:norm or NAME:DIM:raw"
            ) from None
    return stub_registry(spaces)


def cmd_serve(args) -> int:
    serve_embed(_registry_from_args(args), port=args.port, host=args.host)
    return 0


def cmd_export_store(args) -> int:
    rows = read_dataset_rows(args.dataset)
    n = export_store(
        rows,
        _registry_from_args(args),
        space=args.store_space,
        out_path=args.out,
        aux_text_paths=args.aux_text or [],
        include_phrases=not args.no_phrases,
    )
    print(f"wrote {n} entries -> {args.out}")
    return 0


def cmd_export_contexts(args) -> int:
    rows = read_dataset_rows(args.dataset)
    generator = context_generator(args.generator)
    n = export_contexts(rows, generator, args.out)
    print(f"wrote {n} context rows -> {args.out}")
    return 0


def cmd_export_translations(args) -> int:
    rows = read_dataset_rows(args.dataset)
    translator = translator_from_name(args.translator, lossy_every=args.lossy_every)
    n = export_translations(
        rows, translator, args.language, args.out, args.roundtrip_out
    )
    print(f"wrote {n} translation rows -> {args.out} / {args.roundtrip_out}")
    return 0


def cmd_export_samples(args) -> int:
    rows = read_dataset_rows(args.dataset)
    n = export_sd_samples(
        rows,
        _registry_from_args(args),
        spaces=args.sample_space,
        n_samples=args.n_samples,
        store_path=args.store_out,
        aux_path=args.aux_out,
        manifest_path=args.manifest_out,
        seed=args.seed,
    )
    print(f"embedded samples for {n} instances -> {args.store_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vwsd-adapter",
        description="Embedding service and batch exporters for the vwsd engine.",
    )
    parser.add_argument("--space", action="append", metavar="NAME:DIM:norm|raw",
                        help="registry space, repeatable (default: stub spaces)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the /embed HTTP service")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-store", help="embed a dataset into one space")
    p.add_argument("--dataset", required=True)
    p.add_argument("--store-space", required=True, metavar="SPACE")
    p.add_argument("--out", required=True)
    p.add_argument("--aux-text", action="append", metavar="TSV",
                   help="also embed texts of this aux file, repeatable")
    p.add_argument("--no-phrases", action="store_true",
                   help="skip the dataset phrases (images and aux texts only)")
    p.set_defaults(func=cmd_export_store)

    p = sub.add_parser("export-contexts", help="generate context sentences")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generator", default="k2t-2",
                   help="k2t-1 | k2t-2 | k2t-3 (greedy templates)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_contexts)

    p = sub.add_parser("export-translations",
                       help="translate phrases and compute round trips")
    p.add_argument("--dataset", required=True)
    p.add_argument("--language", default="zh")
    p.add_argument("--translator", default="stub", help="stub | http")
    p.add_argument("--lossy-every", type=int,
                   help="stub only: mark every n-th word as lossy")
    p.add_argument("--out", required=True)
    p.add_argument("--roundtrip-out", required=True)
    p.set_defaults(func=cmd_export_translations)

    p = sub.add_parser("export-samples",
                       help="generate and embed diffusion samples per instance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sample-space", action="append", required=True, metavar="SPACE")
    p.add_argument("--n-samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store-out", required=True)
    p.add_argument("--aux-out", required=True)
    p.add_argument("--manifest-out", required=True)
    p.set_defaults(func=cmd_export_samples)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, LookupError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
