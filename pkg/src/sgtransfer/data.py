"""Corpus model, triplet indexing, geometry and canonical JSONL I/O."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

NA = 0
ORIGINAL = "original"
EXTERNAL = "external"
INTERNAL_PREFIX = "internal:"


class DatasetError(ValueError):
    """Raised for malformed or invariant-violating dataset input."""


@dataclass(frozen=True)
class Vocab:
    """Object and predicate class names.

    Object class ``i`` is ``object_classes[i]``. Predicate ``p`` (``p >= 1``)
    is ``predicate_classes[p - 1]``; index 0 of every score vector is NA.
    """

    object_classes: tuple[str, ...]
    predicate_classes: tuple[str, ...]

    def __post_init__(self):
        for kind, names in (("object", self.object_classes), ("predicate", self.predicate_classes)):
            for name in names:
                if not name or name != name.strip():
                    raise DatasetError(f"invalid {kind} class name {name!r}")
            dupes = [n for n, c in Counter(names).items() if c > 1]
            if dupes:
                raise DatasetError(f"duplicate {kind} class names: {sorted(dupes)}")
        object.__setattr__(self, "_obj_index", {n: i for i, n in enumerate(self.object_classes)})
        object.__setattr__(
            self, "_pred_index", {n: i + 1 for i, n in enumerate(self.predicate_classes)}
        )

    @property
    def num_predicates(self) -> int:
        return len(self.predicate_classes)

    @property
    def score_dim(self) -> int:
        return len(self.predicate_classes) + 1

    def object_index(self, name: str) -> int:
        try:
            return self._obj_index[name]
        except KeyError:
            raise DatasetError(f"unknown object class {name!r}") from None

    def predicate_index(self, name: str) -> int:
        try:
            return self._pred_index[name]
        except KeyError:
            raise DatasetError(f"unknown predicate {name!r}") from None

    def predicate_name(self, p: int) -> str:
        if p < 1 or p > len(self.predicate_classes):
            raise DatasetError(f"predicate index {p} out of range")
        return self.predicate_classes[p - 1]

    def to_text(self) -> str:
        lines = ["[objects]", *self.object_classes, "[predicates]", *self.predicate_classes]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def load_vocab(path) -> Vocab:
    """Read a vocab sidecar: an ``[objects]`` section then a ``[predicates]`` section,
    one name per line."""
    sections: dict[str, list[str]] = {"[objects]": [], "[predicates]": []}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line in sections:
                current = line
                continue
            if current is None:
                raise DatasetError(f"{path}:{lineno}: name before any section header")
            sections[current].append(line)
    return Vocab(tuple(sections["[objects]"]), tuple(sections["[predicates]"]))


def write_vocab(vocab: Vocab, path) -> None:
    Path(path).write_text(vocab.to_text(), encoding="utf-8")


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise DatasetError(f"non-finite box {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DatasetError(f"degenerate box {vals}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union on real-valued coordinates (no pixel quantization)."""
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    return inter / ((a.area + b.area) - inter)


@dataclass(frozen=True)
class ObjectInstance:
    object_id: int
    class_id: int
    box: BBox


@dataclass(frozen=True)
class RelationInstance:
    rel_id: int
    subj: int
    obj: int
    predicate: int
    # "original", "external", or "internal:<source predicate name>"
    provenance: str = ORIGINAL

    @property
    def is_original(self) -> bool:
        return self.provenance == ORIGINAL


@dataclass(frozen=True)
class Image:
    image_id: str
    objects: tuple[ObjectInstance, ...]
    relations: tuple[RelationInstance, ...]

    def pair_classes(self, subj: int, obj: int) -> tuple[int, int]:
        return self.objects[subj].class_id, self.objects[obj].class_id


@dataclass(frozen=True)
class TripletType:
    c_s: int
    p: int
    c_o: int


@dataclass(frozen=True)
class Dataset:
    vocab: Vocab
    images: tuple[Image, ...]

    def __post_init__(self):
        # stored sorted so equality and serialization ignore input order
        object.__setattr__(self, "images", tuple(sorted(self.images, key=lambda im: im.image_id)))
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise DatasetError(f"duplicate image_id {img.image_id!r}")
            seen.add(img.image_id)
            _validate_image(img, self.vocab)
        object.__setattr__(self, "_by_id", {img.image_id: img for img in self.images})

    def image(self, image_id: str) -> Image:
        return self._by_id[image_id]

    def __contains__(self, image_id) -> bool:
        return image_id in self._by_id

    def sorted_images(self) -> list[Image]:
        return list(self.images)

    def iter_relations(self) -> Iterator[tuple[Image, RelationInstance]]:
        """Relations in canonical (image_id, rel_id) order."""
        for img in self.sorted_images():
            for rel in img.relations:
                yield img, rel

    @property
    def num_relations(self) -> int:
        return sum(len(img.relations) for img in self.images)

    def predicate_counts(self) -> list[int]:
        """Instance count per predicate index; slot 0 (NA) is always 0."""
        counts = [0] * self.vocab.score_dim
        for img in self.images:
            for rel in img.relations:
                counts[rel.predicate] += 1
        return counts

    def annotated_pairs(self) -> list[tuple[str, int, int]]:
        """Sorted ordered pairs carrying at least one relation."""
        keys = {(img.image_id, r.subj, r.obj) for img in self.images for r in img.relations}
        return sorted(keys)


def _validate_image(img: Image, vocab: Vocab) -> None:
    n_obj = len(img.objects)
    n_cls = len(vocab.object_classes)
    for i, ob in enumerate(img.objects):
        if ob.object_id != i:
            raise DatasetError(f"image {img.image_id!r}: object ids must be dense, got {ob.object_id} at {i}")
        if not 0 <= ob.class_id < n_cls:
            raise DatasetError(f"image {img.image_id!r}: object {i} has invalid class {ob.class_id}")
    quads = set()
    for i, rel in enumerate(img.relations):
        if rel.rel_id != i:
            raise DatasetError(f"image {img.image_id!r}: relation ids must be dense, got {rel.rel_id} at {i}")
        if not (0 <= rel.subj < n_obj and 0 <= rel.obj < n_obj):
            raise DatasetError(f"image {img.image_id!r}: relation {i} references a missing object")
        if rel.subj == rel.obj:
            raise DatasetError(f"image {img.image_id!r}: relation {i} has subj == obj")
        if not 1 <= rel.predicate <= vocab.num_predicates:
            raise DatasetError(f"image {img.image_id!r}: relation {i} has invalid predicate {rel.predicate}")
        quad = (rel.subj, rel.obj, rel.predicate)
        if quad in quads:
            raise DatasetError(f"image {img.image_id!r}: duplicate relation {quad}")
        quads.add(quad)
        if not (rel.provenance in (ORIGINAL, EXTERNAL) or rel.provenance.startswith(INTERNAL_PREFIX)):
            raise DatasetError(f"image {img.image_id!r}: unknown provenance {rel.provenance!r}")


def make_image(image_id: str, objects: Iterable[tuple[int, BBox]],
               relations: Iterable[tuple[int, int, int] | tuple[int, int, int, str]]) -> Image:
    """Build an image assigning dense ids; exact duplicate relations collapse to the first."""
    objs = tuple(ObjectInstance(i, c, b) for i, (c, b) in enumerate(objects))
    rels = []
    seen = set()
    for r in relations:
        subj, obj, pred = r[0], r[1], r[2]
        prov = r[3] if len(r) > 3 else ORIGINAL
        if (subj, obj, pred) in seen:
            continue
        seen.add((subj, obj, pred))
        rels.append(RelationInstance(len(rels), subj, obj, pred, prov))
    return Image(str(image_id), objs, tuple(rels))


# ---------------------------------------------------------------------------
# JSONL I/O
# ---------------------------------------------------------------------------

def _dumps(record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def image_record(img: Image, vocab: Vocab) -> dict:
    return {
        "image_id": img.image_id,
        "objects": [
            {"class": vocab.object_classes[o.class_id], "box": [float(v) for v in o.box.as_list()]}
            for o in img.objects
        ],
        "relations": [
            {
                "subj": r.subj,
                "obj": r.obj,
                "predicate": vocab.predicate_name(r.predicate),
                "provenance": r.provenance,
            }
            for r in img.relations
        ],
    }


def _parse_image(rec, vocab: Vocab, where: str) -> Image:
    if not isinstance(rec, dict) or "image_id" not in rec:
        raise DatasetError(f"{where}: record must be an object with image_id")
    extra = set(rec) - {"image_id", "objects", "relations"}
    if extra:
        raise DatasetError(f"{where}: unknown keys {sorted(extra)}")
    image_id = rec["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise DatasetError(f"{where}: image_id must be a non-empty string")
    objects = []
    for k, o in enumerate(rec.get("objects", [])):
        try:
            box = o["box"]
            if len(box) != 4:
                raise DatasetError("box must have 4 coordinates")
            objects.append((vocab.object_index(o["class"]), BBox(*(float(v) for v in box))))
        except (DatasetError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{where}: image {image_id!r} object {k}: {exc}") from None
    relations = []
    for k, r in enumerate(rec.get("relations", [])):
        try:
            subj, obj = r["subj"], r["obj"]
            if not (isinstance(subj, int) and isinstance(obj, int)):
                raise DatasetError("subj/obj must be integers")
            prov = r.get("provenance", ORIGINAL)
            if prov.startswith(INTERNAL_PREFIX):
                vocab.predicate_index(prov[len(INTERNAL_PREFIX):])
            relations.append((subj, obj, vocab.predicate_index(r["predicate"]), prov))
        except (DatasetError, KeyError, TypeError, AttributeError) as exc:
            raise DatasetError(f"{where}: image {image_id!r} relation {k}: {exc}") from None
    try:
        img = make_image(image_id, objects, relations)
        _validate_image(img, vocab)
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    return img


def read_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None


def load_dataset(path, vocab: Vocab, *, with_manifest: bool = False):
    """Load and validate a JSONL dataset.

    A leading ``{"manifest": ...}`` line (written for enhanced datasets) is
    skipped, or returned alongside the dataset when ``with_manifest``.
    """
    images = []
    manifest = None
    for lineno, rec in read_jsonl(path):
        if isinstance(rec, dict) and set(rec) == {"manifest"}:
            if images or manifest is not None:
                raise DatasetError(f"{path}:{lineno}: manifest must be the first line")
            manifest = rec["manifest"]
            continue
        images.append(_parse_image(rec, vocab, f"{path}:{lineno}"))
    try:
        d = Dataset(vocab, tuple(images))
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    return (d, manifest) if with_manifest else d


def dataset_lines(d: Dataset) -> list[str]:
    return [_dumps(image_record(img, d.vocab)) for img in d.sorted_images()]


def write_dataset(d: Dataset, path, manifest: dict | None = None) -> None:
    """Write canonical JSONL: sorted keys, images sorted by id, shortest-repr floats."""
    lines = dataset_lines(d)
    if manifest is not None:
        lines.insert(0, _dumps({"manifest": manifest}))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def dataset_digest(d: Dataset) -> str:
    h = hashlib.sha256()
    for line in dataset_lines(d):
        h.update(line.encode("utf-8") + b"\n")
    return h.hexdigest()


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Triplet index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TripletIndex:
    """N(t) for every triplet type present, plus per-predicate totals.

    Absent keys have N = 0 and I = 0.
    """

    count: dict[TripletType, int]
    predicate_totals: dict[int, int]
    _by_pair: dict[tuple[int, int], dict[int, int]] = field(repr=False, compare=False, default_factory=dict)

    def n(self, t: TripletType) -> int:
        return self.count.get(t, 0)

    def exists(self, t: TripletType) -> bool:
        return t in self.count

    def types(self) -> list[TripletType]:
        return sorted(self.count, key=lambda t: (t.c_s, t.p, t.c_o))

    def predicates_for_pair(self, c_s: int, c_o: int) -> dict[int, int]:
        """Predicate -> N for every existing type on the class pair."""
        return self._by_pair.get((c_s, c_o), {})

    def attraction(self, t: TripletType) -> Fraction:
        """Count-weighted attraction factor N(t) / sum of N over types sharing t.p."""
        n = self.count.get(t, 0)
        if n == 0:
            raise KeyError(f"attraction undefined for absent triplet type {t}")
        return Fraction(n, self.predicate_totals[t.p])


def build_triplet_index(d: Dataset) -> TripletIndex:
    count: Counter = Counter()
    for img in d.images:
        for rel in img.relations:
            c_s, c_o = img.pair_classes(rel.subj, rel.obj)
            count[TripletType(c_s, rel.predicate, c_o)] += 1
    return index_from_counts(count)


def index_from_counts(count) -> TripletIndex:
    count = {t: int(n) for t, n in count.items() if n > 0}
    totals: dict[int, int] = defaultdict(int)
    by_pair: dict[tuple[int, int], dict[int, int]] = defaultdict(dict)
    for t, n in count.items():
        totals[t.p] += n
        by_pair[(t.c_s, t.c_o)][t.p] = n
    return TripletIndex(count, dict(totals), dict(by_pair))
