import json

import pytest

from stochrank.data import (
    CandidateResponse,
    CorpusFormatError,
    DialogueInstance,
    load_corpus,
    save_corpus,
    tokenize,
    truncate_candidates,
)

from conftest import make_instance


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def record(inst_id="q0", k=10):
    return {
        "id": inst_id,
        "context": ["hello there", "how can i help"],
        "candidates": [
            {"id": f"{inst_id}-r{j}", "text": f"text number {j}", "provenance": "ground_truth" if j == 0 else "sampled_random"}
            for j in range(k)
        ],
        "labels": [1] + [0] * (k - 1),
    }


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("Hello, World! it's fine") == ["hello", "world", "it", "s", "fine"]


def test_load_well_formed(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record(f"q{i}") for i in range(3)])
    corpus = load_corpus(path)
    assert len(corpus) == 3
    assert all(inst.k == 10 for inst in corpus)
    assert [inst.id for inst in corpus] == ["q0", "q1", "q2"]


def test_load_label_length_mismatch(tmp_path):
    rec = record("bad")
    rec["labels"] = rec["labels"][:-1]
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record("q0"), rec])
    with pytest.raises(CorpusFormatError, match="line 2"):
        load_corpus(path)


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_corpus(path) == []


def test_load_duplicate_id(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record("q0"), record("q0")])
    with pytest.raises(CorpusFormatError, match="duplicate instance id"):
        load_corpus(path)


def test_load_requires_single_relevant(tmp_path):
    rec = record("q0")
    rec["labels"][1] = 1
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [rec])
    with pytest.raises(CorpusFormatError, match="relevant"):
        load_corpus(path)
    assert len(load_corpus(path, require_single_relevant=False)) == 1


def test_roundtrip_byte_identical(tmp_path, small_corpus):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(small_corpus, p1)
    save_corpus(load_corpus(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_candidate_invariants():
    with pytest.raises(ValueError, match="empty"):
        CandidateResponse(id="x", text="")
    with pytest.raises(ValueError, match="provenance"):
        CandidateResponse(id="x", text="hi", provenance="nope")


def test_duplicate_candidate_ids_rejected():
    c = CandidateResponse(id="dup", text="hi")
    with pytest.raises(ValueError, match="duplicate"):
        DialogueInstance(id="q", context=("a",), candidates=(c, c), labels=(1, 0))


def test_truncate_drop_relevant():
    inst = make_instance(texts=[f"resp {j}" for j in range(10)], rel=3)
    out = truncate_candidates(inst, set(range(10)) - {3})
    assert out.k == 9
    assert sum(out.labels) == 0
    assert inst.k == 10  # original untouched


def test_truncate_drop_nonrelevant():
    inst = make_instance(texts=[f"resp {j}" for j in range(10)], rel=3)
    out = truncate_candidates(inst, set(range(10)) - {0})
    assert out.k == 9 and sum(out.labels) == 1


def test_truncate_identity_and_errors():
    inst = make_instance()
    assert truncate_candidates(inst, set(range(inst.k))) == inst
    with pytest.raises(ValueError):
        truncate_candidates(inst, set())
    with pytest.raises(ValueError):
        truncate_candidates(inst, {0, 99})


def test_truncate_composes_as_intersection():
    inst = make_instance(texts=[f"resp {j}" for j in range(10)], rel=0)
    once = truncate_candidates(inst, {0, 1, 2, 3, 4})
    # indices shift after the first truncation: positions 0..4 hold originals 0..4
    twice = truncate_candidates(once, {0, 2, 4})
    direct = truncate_candidates(inst, {0, 2, 4})
    assert twice == direct


def test_loaded_instances_have_single_relevant(small_corpus, tmp_path):
    path = tmp_path / "c.jsonl"
    save_corpus(small_corpus, path)
    for inst in load_corpus(path):
        assert sum(inst.labels) == 1
