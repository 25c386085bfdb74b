import hashlib
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from sgtransfer.data import (BBox, Dataset, DatasetError, TripletType, Vocab, build_triplet_index,
                             index_from_counts, iou, load_dataset, load_vocab, make_image, write_dataset,
                             write_vocab)

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_FILES = ["empty.jsonl", "single.jsonl", "unsorted.jsonl", "provenance.jsonl", "duplicates.jsonl"]


def canonicalize(path) -> bytes:
    """Independent canonical form: float boxes, explicit provenance, first of duplicate
    relations kept, images sorted by id, compact sorted-key JSON."""
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        objects = [{"box": [float(v) for v in o["box"]], "class": o["class"]} for o in rec.get("objects", [])]
        seen, relations = set(), []
        for r in rec.get("relations", []):
            key = (r["subj"], r["obj"], r["predicate"])
            if key in seen:
                continue
            seen.add(key)
            relations.append({"obj": r["obj"], "predicate": r["predicate"],
                              "provenance": r.get("provenance", "original"), "subj": r["subj"]})
        records.append({"image_id": rec["image_id"], "objects": objects, "relations": relations})
    records.sort(key=lambda r: r["image_id"])
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records).encode()


@pytest.fixture
def fixture_vocab():
    return load_vocab(FIXTURES / "vocab.txt")


@pytest.mark.parametrize("name", FIXTURE_FILES)
def test_round_trip_matches_canonicalizer(name, fixture_vocab, tmp_path):
    d = load_dataset(FIXTURES / name, fixture_vocab)
    out = tmp_path / "out.jsonl"
    write_dataset(d, out)
    assert out.read_bytes() == canonicalize(FIXTURES / name)
    assert load_dataset(out, fixture_vocab) == d


@pytest.mark.parametrize("name", FIXTURE_FILES)
def test_writes_are_deterministic(name, fixture_vocab, tmp_path):
    d = load_dataset(FIXTURES / name, fixture_vocab)
    digests = []
    for i in range(2):
        write_dataset(d, tmp_path / f"{i}.jsonl")
        digests.append(hashlib.sha256((tmp_path / f"{i}.jsonl").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_empty_file(fixture_vocab):
    assert len(load_dataset(FIXTURES / "empty.jsonl", fixture_vocab).images) == 0


def test_provenance_preserved(fixture_vocab, tmp_path):
    d = load_dataset(FIXTURES / "provenance.jsonl", fixture_vocab)
    write_dataset(d, tmp_path / "p.jsonl")
    provs = [r.provenance for r in load_dataset(tmp_path / "p.jsonl", fixture_vocab).images[0].relations]
    assert provs == ["internal:on", "external", "original"]


def test_duplicates_collapse(fixture_vocab):
    d = load_dataset(FIXTURES / "duplicates.jsonl", fixture_vocab)
    assert [r.predicate for r in d.image("d").relations] == [1, 4]


def test_degenerate_box_names_image(fixture_vocab, tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"image_id": "img7", "objects": [{"class": "man", "box": [3, 0, 3, 5]}], "relations": []}\n')
    with pytest.raises(DatasetError, match="img7.*degenerate box"):
        load_dataset(p, fixture_vocab)


def test_parse_error_has_line_number(fixture_vocab, tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"image_id": "a", "objects": [], "relations": []}\n{nope\n')
    with pytest.raises(DatasetError, match=r"bad.jsonl:2"):
        load_dataset(p, fixture_vocab)


@pytest.mark.parametrize("rel, msg", [
    ('{"subj": 0, "obj": 0, "predicate": "on"}', "subj == obj"),
    ('{"subj": 0, "obj": 5, "predicate": "on"}', "missing object"),
    ('{"subj": 0, "obj": 1, "predicate": "jumping"}', "unknown predicate"),
    ('{"subj": 0, "obj": 1, "predicate": "on", "provenance": "magic"}', "provenance"),
])
def test_invalid_relations_rejected(rel, msg, fixture_vocab, tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"image_id": "x", "objects": [{"class": "man", "box": [0,0,1,1]}, '
                 '{"class": "cup", "box": [0,0,2,2]}], "relations": [' + rel + ']}\n')
    with pytest.raises(DatasetError, match=msg):
        load_dataset(p, fixture_vocab)


def test_duplicate_image_ids_rejected(fixture_vocab, tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"image_id": "x", "objects": [], "relations": []}\n' * 2)
    with pytest.raises(DatasetError, match="duplicate image_id"):
        load_dataset(p, fixture_vocab)


def test_vocab_round_trip(fixture_vocab, tmp_path):
    write_vocab(fixture_vocab, tmp_path / "v.txt")
    again = load_vocab(tmp_path / "v.txt")
    assert again == fixture_vocab
    assert again.fingerprint() == fixture_vocab.fingerprint()
    assert again.predicate_index("on") == 1


def test_vocab_rejects_duplicates():
    with pytest.raises(DatasetError):
        Vocab(("a", "a"), ("p",))


def test_manifest_line_skipped(fixture_vocab, tmp_path):
    d = load_dataset(FIXTURES / "single.jsonl", fixture_vocab)
    write_dataset(d, tmp_path / "m.jsonl", manifest={"k_i": 70})
    again, manifest = load_dataset(tmp_path / "m.jsonl", fixture_vocab, with_manifest=True)
    assert again == d and manifest == {"k_i": 70}


# --- iou ---------------------------------------------------------------------

def test_iou_examples():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(20, 20, 30, 30)) == 0.0
    assert iou(a, BBox(5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-12)
    assert iou(a, BBox(10, 0, 20, 10)) == 0.0


boxes = st.builds(lambda x, y, w, h: BBox(x, y, x + w, y + h),
                  st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 30), st.floats(0.01, 30))


@given(boxes, boxes)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == 1.0


# --- triplet index -------------------------------------------------------------

def _relations_world(vocab):
    man, bike = vocab.object_index("man"), vocab.object_index("bike")
    riding, on = vocab.predicate_index("riding"), vocab.predicate_index("on")
    images = []
    for i in range(3):
        images.append(make_image(f"r{i}", [(man, BBox(0, 0, 2, 2)), (bike, BBox(1, 1, 3, 3))], [(0, 1, riding)]))
    images.append(make_image("o0", [(man, BBox(0, 0, 2, 2)), (bike, BBox(1, 1, 3, 3))], [(0, 1, on)]))
    return Dataset(vocab, tuple(images))


def test_triplet_counts(vocab):
    idx = build_triplet_index(_relations_world(vocab))
    man, bike = vocab.object_index("man"), vocab.object_index("bike")
    riding = vocab.predicate_index("riding")
    assert idx.n(TripletType(man, riding, bike)) == 3
    assert idx.n(TripletType(man, vocab.predicate_index("on"), bike)) == 1
    assert idx.predicate_totals[riding] == 3
    assert not idx.exists(TripletType(bike, riding, man))


def test_empty_index(vocab):
    idx = build_triplet_index(Dataset(vocab, ()))
    assert idx.count == {} and idx.predicate_totals == {}


def test_index_permutation_invariant(vocab):
    d = _relations_world(vocab)
    rng = random.Random(3)
    imgs = list(d.images)
    for _ in range(5):
        rng.shuffle(imgs)
        shuffled = []
        for img in imgs:
            rels = [(r.subj, r.obj, r.predicate) for r in img.relations]
            rng.shuffle(rels)
            shuffled.append(make_image(img.image_id, [(o.class_id, o.box) for o in img.objects], rels))
        assert build_triplet_index(Dataset(vocab, tuple(shuffled))) == build_triplet_index(d)


@settings(max_examples=50)
@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(1, 4), st.integers(0, 3)), st.integers(0, 9)))
def test_index_totals_consistent(raw):
    idx = index_from_counts({TripletType(*k): v for k, v in raw.items()})
    for t, n in idx.count.items():
        assert n >= 1 and idx.exists(t)
    for p, total in idx.predicate_totals.items():
        assert total == sum(n for t, n in idx.count.items() if t.p == p)
