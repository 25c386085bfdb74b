import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgtransfer.data import BBox, Dataset, make_image
from sgtransfer.scorer import (FrequencyBaseline, ScoreError, ScoreTable, fit_frequency_baseline,
                               load_external_scores, score_annotated, write_scores_binary, write_scores_jsonl)


@pytest.fixture
def horse_world(vocab):
    man, horse = vocab.object_index("man"), vocab.object_index("horse")
    riding, on = vocab.predicate_index("riding"), vocab.predicate_index("on")
    box = lambda: [(man, BBox(0, 0, 4, 4)), (horse, BBox(2, 2, 8, 8))]
    images = [make_image(f"r{i}", box(), [(0, 1, riding)]) for i in range(3)]
    images.append(make_image("o", box(), [(0, 1, on)]))
    return Dataset(vocab, tuple(images))


def test_fit_counts(horse_world, vocab):
    m = fit_frequency_baseline(horse_world)
    row = m.counts[(vocab.object_index("man"), vocab.object_index("horse"))]
    assert row[vocab.predicate_index("riding")] == 3
    assert row[vocab.predicate_index("on")] == 1
    assert row.sum() == 4


def test_score_pair_arithmetic(horse_world, vocab):
    m = fit_frequency_baseline(horse_world, alpha=0, beta=0)
    v = m.score_pair(vocab.object_index("man"), vocab.object_index("horse"))
    assert v[vocab.predicate_index("riding")] == pytest.approx(0.75)
    assert v[vocab.predicate_index("on")] == pytest.approx(0.25)
    assert v[0] == 0


def test_beta_halves_mass(horse_world, vocab):
    pair = (vocab.object_index("man"), vocab.object_index("horse"))
    v0 = fit_frequency_baseline(horse_world, alpha=0, beta=0).score_pair(*pair)
    v5 = fit_frequency_baseline(horse_world, alpha=0, beta=0.5).score_pair(*pair)
    assert v5[0] == 0.5
    np.testing.assert_allclose(v5[1:], v0[1:] / 2)


def test_unseen_pair_uniform(horse_world, vocab):
    m = fit_frequency_baseline(horse_world, alpha=1, beta=0.1)
    v = m.score_pair(vocab.object_index("cup"), vocab.object_index("kite"))
    np.testing.assert_allclose(v[1:], 0.9 / vocab.num_predicates)


def test_empty_train_uniform(vocab):
    m = fit_frequency_baseline(Dataset(vocab, ()), alpha=1, beta=0)
    np.testing.assert_allclose(m.score_pair(0, 1)[1:], 1 / vocab.num_predicates)


def test_alpha_zero_unseen_pair_errors(horse_world):
    m = fit_frequency_baseline(horse_world, alpha=0)
    with pytest.raises(ScoreError, match="undefined"):
        m.score_pair(5, 6)


@pytest.mark.parametrize("alpha, beta", [(-1, 0.1), (1, 1.0), (1, -0.1)])
def test_bad_hyperparameters(horse_world, alpha, beta):
    with pytest.raises(ValueError):
        fit_frequency_baseline(horse_world, alpha, beta)


@given(st.lists(st.integers(0, 20), min_size=5, max_size=5), st.floats(0, 5), st.floats(0, 0.99))
def test_score_pair_normalized_and_majority(counts, alpha, beta):
    row = np.array([0] + counts)
    m = FrequencyBaseline({(0, 0): row}, 5, alpha, beta)
    if alpha == 0 and sum(counts) == 0:
        return
    v = m.score_pair(0, 0)
    assert abs(v.sum() - 1) < 1e-9 and np.all(v >= 0)
    assert np.array_equal(v, m.score_pair(0, 0))
    if beta == 0:
        assert int(np.argmax(v[1:])) == int(np.argmax(row[1:]))


def test_score_annotated_cardinality_and_values(vocab):
    man, bike, horse = (vocab.object_index(n) for n in ("man", "bike", "horse"))
    on, near = vocab.predicate_index("on"), vocab.predicate_index("near")
    objs = [(man, BBox(0, 0, 2, 2)), (bike, BBox(1, 1, 3, 3)), (horse, BBox(5, 5, 9, 9))]
    d = Dataset(vocab, (
        make_image("a", objs, [(0, 1, on), (0, 1, near), (1, 0, on)]),
        make_image("b", objs, [(0, 2, on), (2, 1, near)]),
    ))
    m = fit_frequency_baseline(d)
    table = score_annotated(d, m)
    assert len(table) == 4
    for key in table:
        cls = d.image(key[0]).pair_classes(key[1], key[2])
        np.testing.assert_array_equal(table[key], m.score_pair(*cls))


def _table(vocab, d):
    return score_annotated(d, fit_frequency_baseline(d))


@pytest.mark.parametrize("writer", [write_scores_jsonl, write_scores_binary])
def test_dump_round_trip(writer, horse_world, vocab, tmp_path):
    t = _table(vocab, horse_world)
    writer(t, tmp_path / "s")
    again = load_external_scores(tmp_path / "s", vocab)
    assert list(again) == list(t)
    for k in t:
        assert np.array_equal(again[k], t[k])


def _dump_one(tmp_path, vec):
    p = tmp_path / "s.jsonl"
    p.write_text(json.dumps({"image_id": "a", "subj": 0, "obj": 1, "scores": vec}) + "\n")
    return p


def test_missing_na_slot_rejected(vocab, tmp_path):
    vec = [1 / vocab.num_predicates] * vocab.num_predicates
    with pytest.raises(ScoreError, match="length"):
        load_external_scores(_dump_one(tmp_path, vec), vocab)


def test_negative_entry_rejected(vocab, tmp_path):
    vec = [0.0] * vocab.score_dim
    vec[1], vec[2] = 1.5, -0.5
    with pytest.raises(ScoreError, match="negative"):
        load_external_scores(_dump_one(tmp_path, vec), vocab)


def test_unnormalized_rejected(vocab, tmp_path):
    vec = [0.0] * vocab.score_dim
    vec[1] = 1 + 2e-6
    with pytest.raises(ScoreError, match="sums"):
        load_external_scores(_dump_one(tmp_path, vec), vocab)
    vec[1] = 1 + 5e-7
    assert len(load_external_scores(_dump_one(tmp_path, vec), vocab)) == 1


def test_fingerprint_mismatch(horse_world, vocab, tmp_path):
    t = _table(vocab, horse_world)
    write_scores_binary(t, tmp_path / "s.bin")
    raw = bytearray((tmp_path / "s.bin").read_bytes())
    raw[8] = ord("0") if raw[8] != ord("0") else ord("1")
    (tmp_path / "s.bin").write_bytes(bytes(raw))
    with pytest.raises(ScoreError, match="fingerprint"):
        load_external_scores(tmp_path / "s.bin", vocab)


def test_binary_header_layout(horse_world, vocab, tmp_path):
    t = _table(vocab, horse_world)
    write_scores_binary(t, tmp_path / "s.bin")
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:4] == b"SGSC"
    assert struct.unpack_from("<I", raw, 4) == (1,)
    assert raw[8:72].rstrip(b"\0").decode() == vocab.fingerprint()
    assert struct.unpack_from("<IQ", raw, 72) == (vocab.score_dim, len(t))


def test_external_dump_missing_key_lists_pairs(horse_world, vocab):
    t = _table(vocab, horse_world)
    partial = ScoreTable({k: t[k] for k in list(t)[:2]}, t.fingerprint, t.dim)
    with pytest.raises(ScoreError, match="missing scores for 2 pairs"):
        score_annotated(horse_world, partial)


def test_external_dump_wrong_length(vocab):
    with pytest.raises(ScoreError):
        ScoreTable({("a", 0, 1): [0.5, 0.5]}, vocab.fingerprint(), vocab.score_dim)
