"""Internal transfer: relabel general predicate annotations as informative ones.

For every annotated triplet type the model's average score vector selects the
confusing predicates, the attraction factor keeps only the more general ones,
and the matching instances become candidates for relabeling to the type's
predicate. Each instance keeps at most one target (highest attraction) and
each target keeps the top share of its candidates by score.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import Dataset, TripletIndex, TripletType
from .scorer import ScoreError, ScoreTable


@dataclass(frozen=True)
class AggregatedScores:
    mean: dict  # TripletType -> np.ndarray
    count: dict  # TripletType -> int

    def __contains__(self, t):
        return t in self.mean


def aggregate_scores(d: Dataset, s: ScoreTable) -> AggregatedScores:
    """Mean score vector per triplet type over its annotated instances."""
    members = defaultdict(list)
    for img, rel in d.iter_relations():
        key = (img.image_id, rel.subj, rel.obj)
        if key not in s:
            raise ScoreError(f"missing score for annotated pair {key}")
        c_s, c_o = img.pair_classes(rel.subj, rel.obj)
        members[TripletType(c_s, rel.predicate, c_o)].append(s[key])
    mean, count = {}, {}
    for t, vecs in members.items():
        m = np.stack(vecs).mean(axis=0)
        m.setflags(write=False)
        mean[t] = m
        count[t] = len(vecs)
    return AggregatedScores(mean, count)


def confusion_set(agg: AggregatedScores, t: TripletType) -> frozenset:
    """Predicates (never NA) whose aggregated score on t strictly beats t's own predicate."""
    if t not in agg.mean:
        raise KeyError(f"triplet type {t} has no aggregated scores")
    v = agg.mean[t]
    own = v[t.p]
    return frozenset(int(p) for p in np.nonzero(v[1:] > own)[0] + 1)


def attraction(idx: TripletIndex, t: TripletType) -> Fraction:
    return idx.attraction(t)


def transfer_sources(t: TripletType, pc, idx: TripletIndex) -> frozenset:
    """Members of the confusion set whose own type exists and is less attractive than t."""
    a_t = idx.attraction(t)
    out = set()
    for p in pc:
        src = TripletType(t.c_s, p, t.c_o)
        if idx.exists(src) and idx.attraction(src) < a_t:
            out.add(p)
    return frozenset(out)


def collect_candidates(d: Dataset, t: TripletType, ps) -> list:
    """Original-provenance instances on t's class pair whose predicate is a transfer source."""
    if not ps:
        return []
    out = []
    for img, rel in d.iter_relations():
        if not rel.is_original or rel.predicate not in ps:
            continue
        if img.pair_classes(rel.subj, rel.obj) == (t.c_s, t.c_o):
            out.append((img.image_id, rel.rel_id))
    return out


@dataclass(frozen=True)
class TransferRule:
    target: TripletType
    confusion: frozenset
    sources: frozenset
    target_attraction: Fraction
    source_attraction: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Move:
    image_id: str
    rel_id: int
    subj: int
    obj: int
    src: int
    tgt: int
    tgt_score: float


@dataclass
class InternalPlan:
    moves: list
    # TripletType -> (conflict-resolved candidates, moved)
    diagnostics: dict = field(default_factory=dict)
    rules: dict = field(default_factory=dict)

    def move_keys(self):
        return {(m.image_id, m.rel_id) for m in self.moves}


def transfer_rules(agg: AggregatedScores, idx: TripletIndex) -> dict:
    rules = {}
    for t in sorted(agg.mean, key=lambda t: (t.c_s, t.p, t.c_o)):
        pc = confusion_set(agg, t)
        ps = transfer_sources(t, pc, idx)
        rules[t] = TransferRule(
            t, pc, ps, idx.attraction(t),
            {p: idx.attraction(TripletType(t.c_s, p, t.c_o)) for p in sorted(ps)},
        )
    return rules


def _resolve(d: Dataset, s: ScoreTable, idx: TripletIndex, agg: AggregatedScores | None = None):
    """Rules plus each target's conflict-resolved candidate list (unsorted)."""
    if agg is None:
        agg = aggregate_scores(d, s)
    rules = transfer_rules(agg, idx)
    # class pair -> source predicate -> list of candidate target types
    by_source = defaultdict(lambda: defaultdict(list))
    for t, rule in rules.items():
        for p in rule.sources:
            by_source[(t.c_s, t.c_o)][p].append(t)

    assigned = defaultdict(list)
    for img, rel in d.iter_relations():
        if not rel.is_original:
            continue
        pair = img.pair_classes(rel.subj, rel.obj)
        targets = by_source.get(pair, {}).get(rel.predicate)
        if not targets:
            continue
        best = min(targets, key=lambda t: (-rules[t].target_attraction, t.p))
        assigned[best].append((img, rel))
    return rules, assigned


def _ranked(s: ScoreTable, t: TripletType, members):
    scored = [(float(s[(img.image_id, rel.subj, rel.obj)][t.p]), img, rel) for img, rel in members]
    scored.sort(key=lambda x: (-x[0], x[1].image_id, x[2].rel_id))
    return scored


def _move(t, score, img, rel) -> Move:
    return Move(img.image_id, rel.rel_id, rel.subj, rel.obj, rel.predicate, t.p, score)


def cut_size(percent, n: int) -> int:
    """floor(percent / 100 * n), exact for decimal percentages."""
    pct = Fraction(str(percent))
    if not 0 <= pct <= 100:
        raise ValueError(f"percentage must lie in [0, 100], got {percent}")
    return math.floor(pct * n / 100)


def build_plan(d: Dataset, s: ScoreTable, idx: TripletIndex, k_i=70) -> InternalPlan:
    """Fixed-percentage internal transfer: keep the top k_i% of each target's candidates."""
    cut_size(k_i, 0)
    rules, assigned = _resolve(d, s, idx)
    moves, diag = [], {}
    for t in sorted(assigned, key=lambda t: (t.c_s, t.p, t.c_o)):
        ranked = _ranked(s, t, assigned[t])
        keep = cut_size(k_i, len(ranked))
        moves.extend(_move(t, sc, img, rel) for sc, img, rel in ranked[:keep])
        diag[t] = (len(ranked), keep)
    moves.sort(key=lambda m: (m.image_id, m.rel_id))
    return InternalPlan(moves, diag, rules)


def build_plan_adaptive(d: Dataset, s: ScoreTable, idx: TripletIndex, k: float = 0.0) -> InternalPlan:
    """Per-target threshold: move x iff score_x[p] > mean + k * std over t's own instances.

    The spread is the population standard deviation.
    """
    rules, assigned = _resolve(d, s, idx)
    own = defaultdict(list)
    for img, rel in d.iter_relations():
        c_s, c_o = img.pair_classes(rel.subj, rel.obj)
        own[TripletType(c_s, rel.predicate, c_o)].append(float(s[(img.image_id, rel.subj, rel.obj)][rel.predicate]))
    moves, diag = [], {}
    for t in sorted(assigned, key=lambda t: (t.c_s, t.p, t.c_o)):
        vals = np.asarray(own[t])
        mu = float(vals.mean())
        sigma = float(vals.std()) if len(vals) > 1 else 0.0
        threshold = mu + k * sigma
        ranked = _ranked(s, t, assigned[t])
        kept = [(sc, img, rel) for sc, img, rel in ranked if sc > threshold]
        moves.extend(_move(t, sc, img, rel) for sc, img, rel in kept)
        diag[t] = (len(ranked), len(kept))
    moves.sort(key=lambda m: (m.image_id, m.rel_id))
    return InternalPlan(moves, diag, rules)


def confusion_matrix(agg: AggregatedScores, c_s: int, c_o: int):
    """Rows: annotated predicates on the class pair; columns: aggregated scores (NA first)."""
    types = sorted((t for t in agg.mean if (t.c_s, t.c_o) == (c_s, c_o)), key=lambda t: t.p)
    if not types:
        return [], np.zeros((0, 0))
    return [t.p for t in types], np.stack([agg.mean[t] for t in types])


def write_confusion_csv(agg: AggregatedScores, vocab, c_s: int, c_o: int, path) -> None:
    rows, mat = confusion_matrix(agg, c_s, c_o)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["annotated", "NA", *vocab.predicate_classes])
        for p, vec in zip(rows, mat):
            w.writerow([vocab.predicate_name(p), *(f"{x:.6f}" for x in vec)])
