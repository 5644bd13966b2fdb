"""Command-line front end; flags mirror the ExportJob fields."""

import argparse
import sys

from . import export
from .jobs import ExportJob


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encx",
        description="export contextual term and passage vectors from a "
                    "pretrained encoder checkpoint")
    parser.add_argument("--model", required=True,
                        help="checkpoint identifier or local path")
    parser.add_argument("--mode", required=True,
                        help="iso, aoc, or semb-parts")
    parser.add_argument("--layer", type=int, default=None,
                        help="hidden-state layer; default last, 0 is the "
                             "embedding output")
    parser.add_argument("--tau", type=int, default=60,
                        help="context cap per term for aoc")
    parser.add_argument("--max-seq-len", type=int, default=128)
    parser.add_argument("--vocab", help="one term per line")
    parser.add_argument("--corpus", help="one sentence per line")
    parser.add_argument("--parts",
                        help="<doc_id>\\t<position>\\t<text> lines")
    parser.add_argument("--family", default="masked-lm",
                        help="checkpoint family for semb-parts: "
                             "masked-lm or sentence")
    parser.add_argument("--output", required=True)
    return parser


def run(job: ExportJob) -> str:
    job.validate()
    encoder = export.Encoder(job.model_id)
    if job.mode == "iso":
        result = export.export_iso(job, encoder)
        summary = f"wrote {result.written} vectors"
        if result.skipped:
            summary += f", skipped {len(result.skipped)} over-length terms"
    elif job.mode == "aoc":
        result = export.export_aoc(job, encoder)
        summary = (f"wrote {result.written} vectors, "
                   f"{len(result.fallback)} terms need a fallback")
    else:
        result = export.export_text_parts(job, encoder)
        summary = f"wrote {result.records} records for {result.parts} parts"
    return summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(model_id=args.model, mode=args.mode, output=args.output,
                    layer=args.layer, tau=args.tau,
                    max_seq_len=args.max_seq_len, vocabulary=args.vocab,
                    corpus=args.corpus, parts=args.parts, family=args.family)
    try:
        print(run(job))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
