"""Merge transfer plans into an enhanced dataset and report on the result."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .data import EXTERNAL, INTERNAL_PREFIX, Dataset, DatasetError, Image, make_image
from .external import ExternalPlan
from .internal import InternalPlan


@dataclass(frozen=True)
class EnhancedDataset:
    dataset: Dataset
    manifest: dict = field(default_factory=dict)
    collisions: int = 0


def merge(d: Dataset, ip: InternalPlan | None, ep: ExternalPlan | None,
          manifest: dict | None = None) -> EnhancedDataset:
    """Relabel moved relations in place and append external additions.

    A move that would duplicate an existing (subj, obj, predicate) relation is
    dropped in favour of the existing one and counted as a collision.
    """
    vocab = d.vocab
    moves = {}
    for m in (ip.moves if ip else []):
        if m.image_id not in d:
            raise DatasetError(f"internal plan references unknown image {m.image_id!r}")
        rels = d.image(m.image_id).relations
        if not 0 <= m.rel_id < len(rels):
            raise DatasetError(f"internal plan references unknown relation {m.image_id!r}/{m.rel_id}")
        rel = rels[m.rel_id]
        if (rel.subj, rel.obj, rel.predicate) != (m.subj, m.obj, m.src):
            raise DatasetError(f"internal plan move {m.image_id!r}/{m.rel_id} does not match the dataset")
        if (m.image_id, m.rel_id) in moves:
            raise DatasetError(f"relation {m.image_id!r}/{m.rel_id} moved twice")
        moves[(m.image_id, m.rel_id)] = m

    additions: dict[str, list] = {}
    for a in (ep.additions if ep else []):
        if a.image_id not in d:
            raise DatasetError(f"external plan references unknown image {a.image_id!r}")
        additions.setdefault(a.image_id, []).append(a)

    collisions = 0
    images = []
    for img in d.images:
        taken = {(r.subj, r.obj, r.predicate) for r in img.relations if (img.image_id, r.rel_id) not in moves}
        rels = []
        for r in img.relations:
            m = moves.get((img.image_id, r.rel_id))
            if m is None:
                rels.append((r.subj, r.obj, r.predicate, r.provenance))
                continue
            if (r.subj, r.obj, m.tgt) in taken:
                collisions += 1
                continue
            taken.add((r.subj, r.obj, m.tgt))
            rels.append((r.subj, r.obj, m.tgt, INTERNAL_PREFIX + vocab.predicate_name(m.src)))
        annotated = {(r.subj, r.obj) for r in img.relations}
        for a in sorted(additions.get(img.image_id, []), key=lambda a: (a.subj, a.obj, a.predicate)):
            if (a.subj, a.obj) in annotated:
                raise DatasetError(f"external addition on annotated pair {img.image_id!r} ({a.subj}, {a.obj})")
            rels.append((a.subj, a.obj, a.predicate, EXTERNAL))
        images.append(_rebuild(img, rels))
    out = Dataset(vocab, tuple(images))
    if out.num_relations != d.num_relations + sum(len(v) for v in additions.values()) - collisions:
        raise AssertionError("relation bookkeeping broke during merge")
    return EnhancedDataset(out, dict(manifest or {}), collisions)


def _rebuild(img: Image, rels) -> Image:
    before = len(rels)
    new = make_image(img.image_id, [(o.class_id, o.box) for o in img.objects], rels)
    if len(new.relations) != before:
        raise DatasetError(f"merge produced duplicate relations in image {img.image_id!r}")
    return new


@dataclass(frozen=True)
class DistributionBin:
    index: int
    predicates: tuple
    before: int
    after: int

    @property
    def log_before(self):
        return math.log10(self.before) if self.before > 0 else None

    @property
    def log_after(self):
        return math.log10(self.after) if self.after > 0 else None


def distribution_report(before: Dataset, after: Dataset, bins: int = 10) -> list:
    """Predicates ranked by original frequency, split into equal-width rank bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if before.vocab != after.vocab:
        raise DatasetError("distribution report needs a shared vocab")
    cb, ca = before.predicate_counts(), after.predicate_counts()
    P = before.vocab.num_predicates
    ranked = sorted(range(1, P + 1), key=lambda p: (-cb[p], p))
    groups = [[] for _ in range(bins)]
    for r, p in enumerate(ranked):
        groups[r * bins // P].append(p)
    return [
        DistributionBin(i, tuple(g), sum(cb[p] for p in g), sum(ca[p] for p in g))
        for i, g in enumerate(groups)
    ]


def distribution_tsv(rows, vocab) -> str:
    lines = ["bin\tpredicates\tcount_before\tcount_after\tlog10_before\tlog10_after"]
    fmt = lambda x: "" if x is None else f"{x:.6f}"
    for b in rows:
        names = ",".join(vocab.predicate_name(p) for p in b.predicates)
        lines.append(f"{b.index}\t{names}\t{b.before}\t{b.after}\t{fmt(b.log_before)}\t{fmt(b.log_after)}")
    return "\n".join(lines) + "\n"


def transfer_pair_report(ip: InternalPlan, vocab, top_n: int | None = None) -> list:
    """(general, informative, moved count) predicate pairs, most transferred first."""
    counts = Counter((vocab.predicate_name(m.src), vocab.predicate_name(m.tgt)) for m in ip.moves)
    rows = sorted(((s, t, n) for (s, t), n in counts.items()), key=lambda r: (-r[2], r[0], r[1]))
    return rows if top_n is None else rows[:top_n]


def additions_by_predicate(ep: ExternalPlan, vocab) -> list:
    counts = Counter(a.predicate for a in ep.additions)
    return [(vocab.predicate_name(p), counts[p]) for p in sorted(counts)]
