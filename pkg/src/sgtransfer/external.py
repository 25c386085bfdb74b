"""External transfer: label missed relations among unannotated overlapping pairs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .data import Dataset, Image, TripletIndex
from .internal import cut_size
from .scorer import ScoreError, ScoreTable


@dataclass(frozen=True)
class NACandidate:
    image_id: str
    subj: int
    obj: int
    c_s: int
    c_o: int
    na_score: float | None = None
    assigned_predicate: int | None = None

    @property
    def key(self):
        return (self.image_id, self.subj, self.obj)


@dataclass(frozen=True)
class Addition:
    image_id: str
    subj: int
    obj: int
    predicate: int
    na_score: float


@dataclass
class ExternalPlan:
    additions: list
    excluded_head_predicates: frozenset
    stats: dict = field(default_factory=dict)


def _image_candidates(img: Image) -> list:
    n = len(img.objects)
    if n < 2:
        return []
    boxes = np.array([o.box.as_list() for o in img.objects], dtype=np.float64)
    overlap = kernels.pairwise_iou(boxes) > 0
    np.fill_diagonal(overlap, False)
    for rel in img.relations:
        overlap[rel.subj, rel.obj] = False
    subj, obj = np.nonzero(overlap)
    return [
        NACandidate(img.image_id, int(s), int(o), img.objects[s].class_id, img.objects[o].class_id)
        for s, o in zip(subj, obj)
    ]


def enumerate_na(d: Dataset, workers: int = 1) -> list:
    """Ordered, unannotated object pairs with strictly positive IoU, sorted by key."""
    images = d.sorted_images()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(_image_candidates, images))
    else:
        chunks = [_image_candidates(img) for img in images]
    out = [c for chunk in chunks for c in chunk]
    out.sort(key=lambda c: c.key)
    return out


def candidate_targets(c: NACandidate, idx: TripletIndex) -> frozenset:
    """Predicates forming an existing triplet type with the candidate's class pair."""
    return frozenset(idx.predicates_for_pair(c.c_s, c.c_o))


def assign_label(c: NACandidate, v, tar) -> int | None:
    """Highest-scoring predicate within ``tar``; ties go to the lower index. None if tar is empty."""
    if not tar:
        return None
    return min(tar, key=lambda p: (-float(v[p]), p))


def head_predicates(idx: TripletIndex, num_predicates: int, head_exclude: int) -> frozenset:
    """The ``head_exclude`` most frequent predicates by instance count, ties to lower index."""
    ranked = sorted(range(1, num_predicates + 1), key=lambda p: (-idx.predicate_totals.get(p, 0), p))
    return frozenset(ranked[:head_exclude])


def build_external_plan(cands, scores: ScoreTable, idx: TripletIndex, k_e=100,
                        head_exclude: int = 15, num_predicates: int | None = None) -> ExternalPlan:
    """Label candidates, drop head-class labels, rank by NA score ascending and keep the top k_e%."""
    if head_exclude < 0:
        raise ValueError("head_exclude must be >= 0")
    cut_size(k_e, 0)
    if num_predicates is None:
        num_predicates = scores.dim - 1
    missing = [c.key for c in cands if c.key not in scores]
    if missing:
        raise ScoreError(f"missing scores for {len(missing)} NA candidates, first {missing[0]}")
    head = head_predicates(idx, num_predicates, head_exclude)

    labeled, no_target, excluded = [], 0, 0
    for c in cands:
        v = scores[c.key]
        p = assign_label(c, v, candidate_targets(c, idx))
        if p is None:
            no_target += 1
            continue
        if p in head:
            excluded += 1
            continue
        labeled.append(replace(c, na_score=float(v[0]), assigned_predicate=p))
    labeled.sort(key=lambda c: (c.na_score, c.image_id, c.subj, c.obj))
    keep = cut_size(k_e, len(labeled))
    additions = [Addition(c.image_id, c.subj, c.obj, c.assigned_predicate, c.na_score) for c in labeled[:keep]]
    additions.sort(key=lambda a: (a.image_id, a.subj, a.obj))
    stats = {
        "candidates": len(cands),
        "empty_target": no_target,
        "head_excluded": excluded,
        "eligible": len(labeled),
        "kept": keep,
    }
    return ExternalPlan(additions, head, stats)
