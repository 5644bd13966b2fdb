"""Command line front end.

Subcommands cover the full workflow: ``align`` learns an orthogonal map
between two embedding spaces, ``rank`` produces run files at document,
segment, or sentence granularity, ``rerank`` merges replacement scores
into an existing run, ``eval`` scores runs against judgments, ``finetune``
trains the linear adapter (optionally cross-validated into a leak-free
run), ``analyze positions`` histograms where top-ranked parts sit inside
documents, ``stats`` reports collection size and slowdown factors, and
``convert`` moves vector stores between the text and binary containers.

Conventions shared by every subcommand:

* outputs are written atomically (temp file in the target directory,
  then rename), so a failure never leaves a partial file behind;
* relative output paths are placed under ``$CLIRKIT_OUTPUT_DIR`` when
  that variable is set;
* ``--config FILE`` supplies ``key=value`` defaults for any long option
  of the subcommand; explicit flags win over the file;
* every random choice is seeded and the seed is echoed in the report.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
from typing import Sequence

import numpy as np

from . import __version__, corpus, embeddings, evaluation, finetune, \
    projection, retrieval

log = logging.getLogger(__name__)


def _resolve_output(path: str) -> str:
    base = os.environ.get("CLIRKIT_OUTPUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


@contextlib.contextmanager
def _atomic(path: str):
    """Yield a temp path that replaces ``path`` only on success."""
    final = _resolve_output(path)
    directory = os.path.dirname(final) or "."
    fd, tmp = tempfile.mkstemp(prefix=".clirkit-", dir=directory)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, final)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _emit(text: str, output: str | None) -> None:
    """Write a report to ``output`` atomically, or to stdout."""
    if not text.endswith("\n"):
        text += "\n"
    if output is None:
        sys.stdout.write(text)
        return
    with _atomic(output) as tmp:
        with open(tmp, "w", encoding="utf-8") as handle:
            handle.write(text)


def _write_store(store: embeddings.EmbeddingStore, path: str,
                 fmt: str) -> None:
    with _atomic(path) as tmp:
        if fmt == "binary":
            embeddings.write_embeddings_binary(store, tmp)
        else:
            embeddings.write_embeddings_text(store, tmp)


def _read_config(path: str) -> list[str]:
    """Turn ``key=value`` lines into a flag list, comments ignored."""
    flags: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().replace("_", "-")
            if not key:
                raise ValueError(f"{path}: line {lineno}: empty key")
            flags.extend([f"--{key}", value.strip()])
    return flags


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file flags in right after the subcommand, so flags
    given on the command line override the file (last value wins)."""
    if "--config" not in argv and not any(
            a.startswith("--config=") for a in argv):
        return argv
    out: list[str] = []
    path = None
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file argument")
            path = argv[i + 1]
            i += 2
            continue
        if arg.startswith("--config="):
            path = arg.split("=", 1)[1]
            i += 1
            continue
        out.append(arg)
        i += 1
    if not out:
        raise ValueError("--config given without a subcommand")
    return [out[0]] + _read_config(path) + out[1:]


def _require(args: argparse.Namespace, names: Sequence[str],
             reason: str) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        flags = ", ".join(f"--{n}" for n in missing)
        raise ValueError(f"{reason} requires {flags}")


# ---------------------------------------------------------------- align

def _cmd_align(args: argparse.Namespace) -> int:
    src = embeddings.read_embeddings(args.src)
    tgt = embeddings.read_embeddings(args.tgt)
    pairs = projection.parse_dictionary(args.dict)
    kept, dropped = projection.filter_dictionary(pairs, src, tgt)
    if not kept:
        raise ValueError("no trainable pairs")
    if args.method == "proc-b":
        w = projection.proc_b(src, tgt, kept, iterations=args.iterations)
    else:
        x_s, x_t = projection.assemble_matrices(kept, src, tgt)
        w = projection.procrustes(x_s, x_t)
    x_s, x_t = projection.assemble_matrices(kept, src, tgt)
    before = projection.alignment_residual(x_s, x_t, np.eye(src.dim))
    after = projection.alignment_residual(x_s, x_t, w)
    with _atomic(args.output) as tmp:
        finetune.save_adapter(tmp, w)
    if args.project_out:
        _write_store(projection.project(src, w), args.project_out,
                     args.format)
    lines = [
        f"# align method={args.method} iterations="
        f"{args.iterations if args.method == 'proc-b' else 1}",
        f"pairs_kept={len(kept)}",
        f"pairs_dropped={len(dropped)}",
        f"residual_before={before:.6f}",
        f"residual_after={after:.6f}",
        f"orthogonality_error={projection.orthogonality_error(w):.2e}",
    ]
    _emit("\n".join(lines), args.report)
    return 0


# ----------------------------------------------------------------- rank

def _doc_parts(collection: corpus.Collection,
               store: embeddings.EmbeddingStore, granularity: str,
               window: int, stride: int) -> dict[str, list[np.ndarray]]:
    """Represent each document as IDF-weighted vectors of its parts."""
    if granularity not in ("segment", "sentence"):
        raise ValueError("parts need --granularity segment or sentence")
    stats = collection.stats
    parts: dict[str, list[np.ndarray]] = {}
    for doc in collection.documents:
        if granularity == "segment":
            spans = [seg.span for seg in doc.segments(window, stride)]
        else:
            spans = list(doc.sentence_spans)
        parts[doc.id] = [
            retrieval.embed_document(doc.tokens[a:b], store, stats)
            for a, b in spans]
    return parts


def _load_parts(args: argparse.Namespace,
                reason: str) -> dict[str, list[np.ndarray]]:
    if args.parts_emb:
        return retrieval.parts_from_store(
            embeddings.read_embeddings(args.parts_emb))
    _require(args, ["docs", "doc-emb"], reason)
    collection = corpus.read_collection(args.docs)
    store = embeddings.read_embeddings(args.doc_emb)
    return _doc_parts(collection, store, args.granularity, args.window,
                      args.stride)


def _cmd_rank(args: argparse.Namespace) -> int:
    queries = corpus.read_queries(args.queries)
    results: dict[str, list[retrieval.Scored]] = {}

    if args.scorer == "qlm":
        if args.granularity != "document":
            raise ValueError("the language model scorer ranks whole "
                             "documents only")
        _require(args, ["docs"], "--scorer qlm")
        collection = corpus.read_collection(args.docs)
        for query_id, tokens in queries:
            results[query_id] = retrieval.rank_qlm(tokens, collection,
                                                   mu=args.mu)
    elif args.granularity == "document":
        _require(args, ["docs", "query-emb", "doc-emb"],
                 "--granularity document")
        collection = corpus.read_collection(args.docs)
        q_store = embeddings.read_embeddings(args.query_emb)
        d_store = embeddings.read_embeddings(args.doc_emb)
        doc_vecs = {doc.id: retrieval.embed_document(doc.tokens, d_store,
                                                     collection.stats)
                    for doc in collection.documents}
        for query_id, tokens in queries:
            qvec = retrieval.embed_query(tokens, q_store)
            results[query_id] = retrieval.rank(qvec, doc_vecs)
    else:
        _require(args, ["query-emb"], f"--granularity {args.granularity}")
        q_store = embeddings.read_embeddings(args.query_emb)
        parts = _load_parts(args, f"--granularity {args.granularity} "
                                  f"without --parts-emb")
        for query_id, tokens in queries:
            qvec = retrieval.embed_query(tokens, q_store)
            ranked = retrieval.rank_localized(qvec, parts, args.k)
            results[query_id] = [(doc, score) for doc, score, _ in ranked]

    with _atomic(args.output) as tmp:
        retrieval.write_run(tmp, results, args.tag)
    return 0


# --------------------------------------------------------------- rerank

def _cmd_rerank(args: argparse.Namespace) -> int:
    run = retrieval.read_run(args.run)
    scores = retrieval.read_scores(args.scores)
    merged = {
        query_id: retrieval.rerank_merge(ranked, scores.get(query_id, {}),
                                         args.top)
        for query_id, ranked in run.items()}
    with _atomic(args.output) as tmp:
        retrieval.write_run(tmp, merged, args.tag)
    return 0


# ----------------------------------------------------------------- eval

def _cmd_eval(args: argparse.Namespace) -> int:
    run = retrieval.read_run(args.run)
    qrels = evaluation.parse_qrels(args.qrels)
    map_a, per_a = evaluation.mean_average_precision(run, qrels)

    lines = [f"# eval run={args.run} qrels={args.qrels} "
             f"alpha={args.alpha} bonferroni_m={args.bonferroni_m}"]
    records = []
    if args.compare is None:
        width = max([len(q) for q in per_a] + [len("query")])
        lines.append(f"{'query':<{width}}  ap")
        for query_id in sorted(per_a):
            lines.append(f"{query_id:<{width}}  {per_a[query_id]:.4f}")
            records.append({"query_id": query_id,
                            "ap": round(per_a[query_id], 6)})
        lines.append(f"map={map_a:.4f}")
        records.append({"map": round(map_a, 6)})
    else:
        run_b = retrieval.read_run(args.compare)
        if set(run) != set(run_b):
            difference = sorted(set(run) ^ set(run_b))
            raise ValueError("runs cover different query sets; a paired "
                             f"test needs identical queries: {difference}")
        map_b, per_b = evaluation.mean_average_precision(run_b, qrels)
        order = sorted(per_a)
        report = evaluation.paired_ttest(
            [per_a[q] for q in order], [per_b[q] for q in order],
            num_comparisons=args.bonferroni_m, alpha=args.alpha)
        width = max([len(q) for q in order] + [len("query")])
        lines.append(f"{'query':<{width}}  ap_a    ap_b")
        for query_id in order:
            lines.append(f"{query_id:<{width}}  {per_a[query_id]:.4f}  "
                         f"{per_b[query_id]:.4f}")
            records.append({"query_id": query_id,
                            "ap": round(per_a[query_id], 6),
                            "ap_b": round(per_b[query_id], 6)})
        lines.extend([
            f"map_a={map_a:.4f}",
            f"map_b={map_b:.4f}",
            f"t={report.t_statistic:.6f}",
            f"p={report.p_value:.6f}",
            f"df={report.df}",
            f"corrected_alpha={report.corrected_alpha:.6g}",
            f"significant={str(report.significant).lower()}",
            f"degenerate={str(report.degenerate).lower()}",
        ])
        records.append({"map": round(map_a, 6), "map_b": round(map_b, 6),
                        "t": report.t_statistic, "p": report.p_value,
                        "significant": report.significant})
    _emit("\n".join(lines), args.output)
    if args.json:
        _emit("\n".join(json.dumps(r) for r in records), args.json)
    return 0


# ------------------------------------------------------------- finetune

def _read_pairs(path: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected <query_id>\\t<doc_id>")
            pairs.append((fields[0], fields[1]))
    return pairs


def _pair_matrices(pairs, q_store, d_store, q_path, d_path):
    rows_q, rows_d = [], []
    for query_id, doc_id in pairs:
        if query_id not in q_store:
            raise ValueError(f"query {query_id!r} missing from {q_path}")
        if doc_id not in d_store:
            raise ValueError(f"document {doc_id!r} missing from {d_path}")
        rows_q.append(q_store.vector(query_id).astype(np.float64))
        rows_d.append(d_store.vector(doc_id).astype(np.float64))
    return np.stack(rows_q), np.stack(rows_d)


def _cmd_finetune(args: argparse.Namespace) -> int:
    q_store = embeddings.read_embeddings(args.query_vecs)
    d_store = embeddings.read_embeddings(args.doc_vecs)
    pairs = _read_pairs(args.pairs)
    if not pairs:
        raise ValueError("no training pairs")
    queries, docs = _pair_matrices(pairs, q_store, d_store, args.query_vecs,
                                   args.doc_vecs)

    lines = [f"# finetune seed={args.seed} epochs={args.epochs} "
             f"batch={args.batch} learning_rate={args.learning_rate} "
             f"scale={args.scale} pairs={len(pairs)} folds={args.folds}"]

    if args.folds > 1:
        query_ids = sorted({query_id for query_id, _ in pairs})
        assignment = finetune.kfold_split(query_ids, args.folds,
                                          seed=args.seed)
        merged_run: dict[str, list[retrieval.Scored]] = {}
        lines.append("fold  queries  train_loss  heldout_loss")
        for fold, (train_ids, test_ids) in enumerate(
                finetune.fold_partitions(assignment, args.folds), start=1):
            train_idx = [i for i, (q, _) in enumerate(pairs)
                         if q in set(train_ids)]
            test_idx = [i for i, (q, _) in enumerate(pairs)
                        if q in set(test_ids)]
            if len(train_idx) < 2 or len(test_idx) < 2:
                raise ValueError("folds too small for in-batch negatives; "
                                 "reduce --folds")
            adapter, history = finetune.train_adapter(
                queries[train_idx], docs[train_idx], scale=args.scale,
                learning_rate=args.learning_rate, epochs=args.epochs,
                batch_size=args.batch, seed=args.seed)
            heldout = finetune.mnrl_batch_loss(
                queries[test_idx], docs[test_idx], scale=args.scale,
                adapter=adapter)
            lines.append(f"{fold:>4}  {len(test_ids):>7}  "
                         f"{history[-1]:>10.6f}  {heldout:>12.6f}")
            with _atomic(f"{args.adapter_out}.fold{fold}") as tmp:
                finetune.save_adapter(tmp, adapter)
            if args.run_out:
                adapted_docs = {
                    token: d_store.vector(token).astype(np.float64)
                    @ adapter.T for token in d_store.vocab_order}
                for query_id in test_ids:
                    qvec = q_store.vector(query_id).astype(
                        np.float64) @ adapter.T
                    merged_run[query_id] = retrieval.rank(qvec, adapted_docs)
        if args.run_out:
            ordered = {q: merged_run[q] for q in sorted(merged_run)}
            with _atomic(args.run_out) as tmp:
                retrieval.write_run(tmp, ordered, args.tag)

    adapter, history = finetune.train_adapter(
        queries, docs, scale=args.scale, learning_rate=args.learning_rate,
        epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    lines.append("epoch  loss")
    for epoch, loss in enumerate(history, start=1):
        lines.append(f"{epoch:>5}  {loss:.6f}")
    lines.append(f"final_loss={history[-1]:.6f}")

    with _atomic(args.adapter_out) as tmp:
        finetune.save_adapter(tmp, adapter)
    _emit("\n".join(lines), args.report)
    return 0


# -------------------------------------------------------------- analyze

def _cmd_analyze(args: argparse.Namespace) -> int:
    queries = corpus.read_queries(args.queries)
    q_store = embeddings.read_embeddings(args.query_emb)
    parts = _load_parts(args, "analyze positions without --parts-emb")
    num_docs = len(parts)
    num_parts = sum(len(vecs) for vecs in parts.values())

    per_query_positions = []
    for query_id, tokens in queries:
        qvec = retrieval.embed_query(tokens, q_store)
        ranked_parts = retrieval.rank_parts(qvec, parts)
        per_query_positions.append(
            [position for _, position, _ in ranked_parts[:args.top]])
    histogram = evaluation.position_histogram(per_query_positions,
                                              top_n=args.top)
    lines = [
        f"# analyze positions granularity={args.granularity} "
        f"window={args.window} stride={args.stride} top={args.top}",
        f"documents={num_docs}",
        f"parts={num_parts}",
        f"slowdown_factor={num_parts / num_docs:.4f}",
        evaluation.format_histogram(histogram),
    ]
    _emit("\n".join(lines), args.output)
    return 0


# ---------------------------------------------------------------- stats

def _cmd_stats(args: argparse.Namespace) -> int:
    collection = corpus.read_collection(args.docs)
    parts = collection.part_count(args.granularity, args.window, args.stride)
    factor = collection.slowdown_factor(args.granularity, args.window,
                                        args.stride)
    lines = [
        f"# stats granularity={args.granularity} window={args.window} "
        f"stride={args.stride}",
        f"tokens={collection.total_tokens}",
        f"vocabulary={len(collection.term_counts)}",
        "documents  parts  factor",
        f"{len(collection):>9}  {parts:>5}  {factor:.4f}",
    ]
    _emit("\n".join(lines), args.output)
    return 0


# -------------------------------------------------------------- convert

def _cmd_convert(args: argparse.Namespace) -> int:
    store = embeddings.read_embeddings(args.input, limit=args.limit)
    _write_store(store, args.output, args.to)
    return 0


# ----------------------------------------------------------------- main

def _add_parts_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--docs", help="<doc_id>\\t<text> collection")
    p.add_argument("--doc-emb", help="term vectors for document terms")
    p.add_argument("--parts-emb",
                   help="precomputed part vectors keyed doc_id\\x01position")
    p.add_argument("--granularity",
                   choices=["document", "segment", "sentence"],
                   default="document")
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--stride", type=int, default=42)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clirkit",
        description="cross-lingual retrieval toolkit")
    parser.add_argument("--version", action="version",
                        version=f"clirkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="learn an orthogonal alignment")
    p.add_argument("--src", required=True, help="source embedding store")
    p.add_argument("--tgt", required=True, help="target embedding store")
    p.add_argument("--dict", required=True, help="translation pairs")
    p.add_argument("--method", choices=["procrustes", "proc-b"],
                   default="procrustes")
    p.add_argument("--iterations", type=int, default=2,
                   help="proc-b solve rounds (1 = plain solve)")
    p.add_argument("--output", required=True,
                   help="projection matrix, binary container")
    p.add_argument("--project-out",
                   help="also write the projected source store here")
    p.add_argument("--format", choices=["text", "binary"], default="binary",
                   help="container for --project-out")
    p.add_argument("--report", help="write the report here, not stdout")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("rank", help="rank documents for queries")
    p.add_argument("--queries", required=True)
    p.add_argument("--query-emb")
    _add_parts_options(p)
    p.add_argument("--scorer", choices=["embedding", "qlm"],
                   default="embedding")
    p.add_argument("--k", type=int, default=1,
                   help="parts averaged per document")
    p.add_argument("--mu", type=float, default=1000.0,
                   help="language model smoothing mass")
    p.add_argument("--tag", default="clirkit")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("rerank", help="reorder the head of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--scores", required=True,
                   help="<query_id>\\t<doc_id>\\t<score> lines")
    p.add_argument("--top", type=int, default=100,
                   help="window size to reorder")
    p.add_argument("--tag", default="clirkit-rerank")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("eval", help="score a run against judgments")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--compare", help="second run for a paired t test")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bonferroni-m", type=int,
                   default=evaluation.DEFAULT_COMPARISONS,
                   help="comparison count dividing alpha")
    p.add_argument("--json", help="also write per-query records here")
    p.add_argument("--output", help="write the report here, not stdout")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("finetune", help="train the linear adapter")
    p.add_argument("--query-vecs", required=True)
    p.add_argument("--doc-vecs", required=True)
    p.add_argument("--pairs", required=True,
                   help="<query_id>\\t<doc_id> positives")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--scale", type=float, default=finetune.DEFAULT_SCALE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=1,
                   help=">1 cross-validates: per-fold adapters plus a "
                        "leak-free merged run")
    p.add_argument("--run-out",
                   help="with --folds: merged held-out run file")
    p.add_argument("--tag", default="clirkit-adapted")
    p.add_argument("--adapter-out", required=True)
    p.add_argument("--report", help="write the report here, not stdout")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("analyze", help="where matches land inside documents")
    p.add_argument("aspect", choices=["positions"])
    p.add_argument("--queries", required=True)
    p.add_argument("--query-emb", required=True)
    _add_parts_options(p)
    p.add_argument("--top", type=int, default=100,
                   help="parts pooled per query")
    p.add_argument("--output", help="write the report here, not stdout")
    p.set_defaults(func=_cmd_analyze, granularity="segment")

    p = sub.add_parser("stats", help="collection size and slowdown factor")
    p.add_argument("--docs", required=True)
    p.add_argument("--granularity", choices=["segment", "sentence"],
                   default="segment")
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--stride", type=int, default=42)
    p.add_argument("--output", help="write the report here, not stdout")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("convert", help="convert between vector containers")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--to", choices=["text", "binary"], required=True)
    p.add_argument("--limit", type=int, default=None,
                   help="load only the first N vectors")
    p.set_defaults(func=_cmd_convert)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        argv = _expand_config(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
