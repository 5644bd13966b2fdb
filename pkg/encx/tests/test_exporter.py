"""Exporter behaviour, checked against direct model calls and against
the consumer package that reads the containers."""

import warnings

import numpy as np
import pytest
import torch
from transformers import AutoModel, AutoTokenizer

from clirkit.embeddings import read_embeddings_binary
from clirkit.retrieval import parts_from_store

from encx.cli import main
from encx.export import (Encoder, export_aoc, export_iso, export_text_parts,
                         read_parts_file)
from encx.jobs import ExportJob

CORPUS = [
    "i ate a fresh apple",
    "we like apple juice",
    "the ripe apple fell",
    "i ate a banana",
    "we press banana and kiwi juice",
]
VOCAB = ["apple", "banana", "kiwi", "orange", "pear"]


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines),
                    encoding="utf-8")


def manual_context(checkpoint, words, term, layer):
    """Reference vector: encode one sentence directly and mean-pool the
    subwords of the term's first occurrence at the given layer."""
    tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    model = AutoModel.from_pretrained(checkpoint)
    model.eval()
    enc = tokenizer(words, is_split_into_words=True, return_tensors="pt")
    with torch.no_grad():
        states = model(**enc, output_hidden_states=True).hidden_states[layer]
    word = words.index(term)
    rows = [states[0, i].numpy() for i, w in enumerate(enc.word_ids(0))
            if w == word]
    return np.mean(rows, axis=0, dtype=np.float64)


def load_strict(path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return read_embeddings_binary(str(path))


def test_iso_shapes_and_core_compatibility(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple", "banana", "kiwi"])
    job = ExportJob(model_id=checkpoint, mode="iso", vocabulary=str(vocab),
                    output=str(tmp_path / "iso.emb"))
    result = export_iso(job)
    assert result.written == 3
    assert not result.skipped
    store = load_strict(tmp_path / "iso.emb")
    assert list(store.vocab_order) == ["apple", "banana", "kiwi"]
    assert store.dim == 32


def test_iso_twenty_terms_deterministic_across_runs(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple", "banana", "kiwi", "orange", "pear",
                        "juice", "fresh", "ripe", "apfel", "birne",
                        "saft", "jabuka", "sok", "frisch", "bananas",
                        "apples", "kiwis", "oranges", "pears", "ate"])
    first = tmp_path / "one.emb"
    second = tmp_path / "two.emb"
    export_iso(ExportJob(model_id=checkpoint, mode="iso",
                         vocabulary=str(vocab), output=str(first)))
    export_iso(ExportJob(model_id=checkpoint, mode="iso",
                         vocabulary=str(vocab), output=str(second)))
    assert first.read_bytes() == second.read_bytes()
    assert len(load_strict(first)) == 20


def test_iso_single_subword_term_equals_hidden_state(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple"])
    out = tmp_path / "iso.emb"
    export_iso(ExportJob(model_id=checkpoint, mode="iso",
                         vocabulary=str(vocab), output=str(out), layer=2))
    tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    model = AutoModel.from_pretrained(checkpoint)
    model.eval()
    enc = tokenizer("apple", return_tensors="pt")
    with torch.no_grad():
        states = model(**enc, output_hidden_states=True).hidden_states[2]
    expected = states[0, 1].numpy()  # position 0 is the start token
    got = load_strict(out).vector("apple")
    assert np.allclose(got, expected.astype(np.float32), atol=1e-6)


def test_iso_layers_give_different_vectors(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple"])
    shallow = tmp_path / "l0.emb"
    deep = tmp_path / "l2.emb"
    export_iso(ExportJob(model_id=checkpoint, mode="iso",
                         vocabulary=str(vocab), output=str(shallow), layer=0))
    export_iso(ExportJob(model_id=checkpoint, mode="iso",
                         vocabulary=str(vocab), output=str(deep), layer=2))
    assert not np.allclose(load_strict(shallow).vector("apple"),
                           load_strict(deep).vector("apple"), atol=1e-3)


def test_iso_over_length_term_skipped_with_warning(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    # budget is max_seq_len minus the two boundary tokens; "bananas"
    # splits into ban ##ana ##s, one piece too many
    write_lines(vocab, ["apple", "bananas"])
    out = tmp_path / "iso.emb"
    job = ExportJob(model_id=checkpoint, mode="iso", vocabulary=str(vocab),
                    output=str(out), max_seq_len=4)
    with pytest.warns(UserWarning, match="bananas"):
        result = export_iso(job)
    assert result.skipped == ["bananas"]
    assert list(load_strict(out).vocab_order) == ["apple"]


def fruit_world(tmp_path, checkpoint, tau):
    vocab = tmp_path / "v.txt"
    corpus = tmp_path / "c.txt"
    write_lines(vocab, VOCAB)
    write_lines(corpus, CORPUS)
    out = tmp_path / "aoc.emb"
    job = ExportJob(model_id=checkpoint, mode="aoc", vocabulary=str(vocab),
                    corpus=str(corpus), output=str(out), tau=tau)
    return job, out


def test_aoc_respects_context_cap_exactly(checkpoint, tmp_path):
    job, out = fruit_world(tmp_path, checkpoint, tau=2)
    result = export_aoc(job)
    occurrences = {"apple": 3, "banana": 2, "kiwi": 1, "orange": 0,
                   "pear": 0}
    for term, available in occurrences.items():
        assert result.contexts_used[term] == min(available, 2), term

    # the vector must be the average of the first two contexts only
    expected = np.mean([manual_context(checkpoint, CORPUS[0].split(),
                                       "apple", 2),
                        manual_context(checkpoint, CORPUS[1].split(),
                                       "apple", 2)], axis=0)
    got = load_strict(out).vector("apple")
    assert np.allclose(got, expected.astype(np.float32), atol=1e-5)


def test_aoc_single_context_term_equals_that_context(checkpoint, tmp_path):
    job, out = fruit_world(tmp_path, checkpoint, tau=60)
    export_aoc(job)
    expected = manual_context(checkpoint, CORPUS[4].split(), "kiwi", 2)
    got = load_strict(out).vector("kiwi")
    assert np.allclose(got, expected.astype(np.float32), atol=1e-5)


def test_aoc_absent_terms_are_listed_for_fallback(checkpoint, tmp_path):
    job, out = fruit_world(tmp_path, checkpoint, tau=2)
    result = export_aoc(job)
    assert result.fallback == ["orange", "pear"]
    listed = (tmp_path / "aoc.emb.fallback").read_text(
        encoding="utf-8").splitlines()
    assert listed == ["orange", "pear"]
    store = load_strict(out)
    assert "orange" not in store
    assert "pear" not in store
    assert list(store.vocab_order) == ["apple", "banana", "kiwi"]


def test_aoc_empty_corpus_is_an_error(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    corpus = tmp_path / "c.txt"
    write_lines(vocab, ["apple"])
    corpus.write_text("\n   \n", encoding="utf-8")
    job = ExportJob(model_id=checkpoint, mode="aoc", vocabulary=str(vocab),
                    corpus=str(corpus), output=str(tmp_path / "o.emb"))
    with pytest.raises(ValueError, match="empty corpus"):
        export_aoc(job)


def test_parts_masked_lm_emits_term_and_boundary_states(checkpoint,
                                                        tmp_path):
    parts = tmp_path / "p.tsv"
    parts.write_text("d1\t1\tapple juice\nd2\t3\tbanana\n",
                     encoding="utf-8")
    out = tmp_path / "parts.emb"
    result = export_text_parts(
        ExportJob(model_id=checkpoint, mode="semb-parts", parts=str(parts),
                  output=str(out), max_seq_len=64))
    # 2 terms + start/end for d1, 1 term + start/end for d2
    assert (result.parts, result.records) == (2, 7)
    store = load_strict(out)
    assert list(store.vocab_order) == [
        "d1\x011\x011", "d1\x011\x012", "d1\x011\x01start", "d1\x011\x01end",
        "d2\x013\x011", "d2\x013\x01start", "d2\x013\x01end"]
    assert store.dim == 32


def test_parts_first_subword_is_exported(checkpoint, tmp_path):
    parts = tmp_path / "p.tsv"
    parts.write_text("d1\t1\tbanana\n", encoding="utf-8")
    out = tmp_path / "parts.emb"
    export_text_parts(ExportJob(model_id=checkpoint, mode="semb-parts",
                                parts=str(parts), output=str(out),
                                max_seq_len=64, layer=2))
    tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    model = AutoModel.from_pretrained(checkpoint)
    model.eval()
    enc = tokenizer(["banana"], is_split_into_words=True,
                    return_tensors="pt")
    with torch.no_grad():
        states = model(**enc, output_hidden_states=True).hidden_states[2][0]
    store = load_strict(out)
    # banana = ban ##ana; the term record is ban's state, not the mean
    assert np.allclose(store.vector("d1\x011\x011"),
                       states[1].numpy().astype(np.float32), atol=1e-6)
    assert np.allclose(store.vector("d1\x011\x01start"),
                       states[0].numpy().astype(np.float32), atol=1e-6)
    assert np.allclose(store.vector("d1\x011\x01end"),
                       states[3].numpy().astype(np.float32), atol=1e-6)


def test_parts_sentence_family_keys_load_as_core_parts(checkpoint,
                                                       tmp_path):
    parts = tmp_path / "p.tsv"
    parts.write_text("d1\t1\tapple juice\nd1\t2\tfresh kiwi\n"
                     "d2\t1\tapple juice\n", encoding="utf-8")
    out = tmp_path / "parts.emb"
    result = export_text_parts(
        ExportJob(model_id=checkpoint, mode="semb-parts", parts=str(parts),
                  output=str(out), family="sentence", max_seq_len=64))
    assert (result.parts, result.records) == (3, 3)
    grouped = parts_from_store(load_strict(out))
    assert sorted(grouped) == ["d1", "d2"]
    assert len(grouped["d1"]) == 2
    # identical texts encode identically
    assert np.array_equal(grouped["d1"][0], grouped["d2"][0])


def test_parts_truncate_at_max_seq_len(checkpoint, tmp_path):
    parts = tmp_path / "p.tsv"
    parts.write_text("d1\t1\t" + " ".join(["apple"] * 300) + "\n",
                     encoding="utf-8")
    out = tmp_path / "parts.emb"
    result = export_text_parts(
        ExportJob(model_id=checkpoint, mode="semb-parts", parts=str(parts),
                  output=str(out), max_seq_len=64))
    # 64 positions hold the two boundary tokens plus 62 one-piece terms
    assert result.records == 64
    store = load_strict(out)
    assert "d1\x011\x0162" in store
    assert "d1\x011\x0163" not in store


def test_parts_unknown_family_names_the_supported_ones(checkpoint,
                                                       tmp_path):
    parts = tmp_path / "p.tsv"
    parts.write_text("d1\t1\tapple\n", encoding="utf-8")
    job = ExportJob(model_id=checkpoint, mode="semb-parts",
                    parts=str(parts), output=str(tmp_path / "o.emb"),
                    family="gru")
    with pytest.raises(ValueError) as err:
        export_text_parts(job)
    assert "masked-lm" in str(err.value) and "sentence" in str(err.value)


def test_parts_file_syntax_errors_name_the_line(tmp_path):
    bad = tmp_path / "p.tsv"
    bad.write_text("d1\t1\tok\nd2\tnot_a_number\ttext\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        read_parts_file(str(bad))
    dup = tmp_path / "dup.tsv"
    dup.write_text("d1\t1\tok\nd1\t1\tagain\n", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate part d1:1"):
        read_parts_file(str(dup))


def test_layer_must_lie_within_checkpoint_depth(checkpoint, tmp_path):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple"])
    job = ExportJob(model_id=checkpoint, mode="iso", vocabulary=str(vocab),
                    output=str(tmp_path / "o.emb"), layer=7)
    with pytest.raises(ValueError, match="outside checkpoint depth"):
        export_iso(job)


def test_job_validation_names_missing_inputs():
    with pytest.raises(ValueError, match="vocabulary"):
        ExportJob(model_id="m", mode="iso", output="o").validate()
    with pytest.raises(ValueError, match="corpus"):
        ExportJob(model_id="m", mode="aoc", output="o",
                  vocabulary="v").validate()
    with pytest.raises(ValueError, match="parts"):
        ExportJob(model_id="m", mode="semb-parts", output="o").validate()
    with pytest.raises(ValueError, match="max_seq_len"):
        ExportJob(model_id="m", mode="semb-parts", output="o", parts="p",
                  max_seq_len=100).validate()
    with pytest.raises(ValueError, match="unknown mode"):
        ExportJob(model_id="m", mode="pool", output="o").validate()


def test_cli_round_trip_and_error_exit(checkpoint, tmp_path, capsys):
    vocab = tmp_path / "v.txt"
    write_lines(vocab, ["apple", "banana"])
    out = tmp_path / "iso.emb"
    code = main(["--model", checkpoint, "--mode", "iso",
                 "--vocab", str(vocab), "--output", str(out)])
    assert code == 0
    assert "wrote 2 vectors" in capsys.readouterr().out
    assert len(load_strict(out)) == 2

    code = main(["--model", checkpoint, "--mode", "aoc",
                 "--vocab", str(vocab), "--output", str(out)])
    assert code == 2
    assert capsys.readouterr().err.startswith("error: ")
