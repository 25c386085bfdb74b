"""Predicate-classification metrics.

Two families, all reported as percentages:

* recall: R@K, mR@K and their harmonic mean F@K;
* accuracy: Acc@K, mAcc@K, F-Acc@K and the Non-Zero class count.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset
from .scorer import ScoreTable


def harmonic_f(micro: float, macro: float) -> float:
    if micro + macro == 0:
        return 0.0
    return 2.0 * micro * macro / (micro + macro)


@dataclass
class KMetrics:
    k: int
    micro: float
    macro: float
    f: float
    non_zero: int | None = None
    per_predicate: dict = field(default_factory=dict)  # predicate -> (hits, total)


@dataclass
class MetricReport:
    family: str  # "recall" or "accuracy"
    by_k: dict  # k -> KMetrics

    def row(self, k: int) -> tuple:
        m = self.by_k[k]
        vals = (round(m.micro, 2), round(m.macro, 2), round(m.f, 2))
        return vals + ((m.non_zero,) if m.non_zero is not None else ())

    def to_json(self, vocab) -> dict:
        names = ("R", "mR", "F") if self.family == "recall" else ("Acc", "mAcc", "F-Acc")
        out = {"family": self.family, "k": {}}
        for k, m in sorted(self.by_k.items()):
            entry = {names[0]: round(m.micro, 2), names[1]: round(m.macro, 2), names[2]: round(m.f, 2)}
            if m.non_zero is not None:
                entry["Non-Zero"] = m.non_zero
            entry["per_predicate"] = {
                vocab.predicate_name(p): {"hits": h, "total": t, "value": round(100.0 * h / t, 2)}
                for p, (h, t) in sorted(m.per_predicate.items())
            }
            out["k"][str(k)] = entry
        return out

    def to_tsv(self, vocab) -> str:
        names = ("R", "mR", "F") if self.family == "recall" else ("Acc", "mAcc", "F-Acc")
        head = ["K", *names] + (["Non-Zero"] if self.family == "accuracy" else [])
        lines = ["\t".join(head)]
        for k in sorted(self.by_k):
            lines.append("\t".join([str(k)] + [f"{x:.2f}" if isinstance(x, float) else str(x) for x in self.row(k)]))
        lines.append("")
        lines.append("K\tpredicate\thits\ttotal\tvalue")
        for k in sorted(self.by_k):
            for p, (h, t) in sorted(self.by_k[k].per_predicate.items()):
                lines.append(f"{k}\t{vocab.predicate_name(p)}\t{h}\t{t}\t{100.0 * h / t:.2f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        parts = []
        for k in sorted(self.by_k):
            m = self.by_k[k]
            if self.family == "recall":
                parts.append(f"R@{k} {m.micro:.2f}  mR@{k} {m.macro:.2f}  F@{k} {m.f:.2f}")
            else:
                parts.append(f"top-{k}: Acc {m.micro:.2f}  mAcc {m.macro:.2f}  F-Acc {m.f:.2f}  Non-Zero {m.non_zero}")
        return "\n".join(parts)


def _macro(per_pred: dict) -> float:
    vals = [h / t for h, t in per_pred.values() if t > 0]
    return 100.0 * float(np.mean(vals)) if vals else 0.0


def recall_family(test: Dataset, scores: ScoreTable, ks=(20, 50, 100), graph_constraint: bool = True) -> MetricReport:
    """R@K / mR@K / F@K for predicate classification.

    With the graph constraint each annotated pair contributes only its best
    non-NA predicate. Predictions rank by score, ties by (subj, obj, predicate).
    R@K averages per-image recall; mR@K averages per-predicate recall pooled
    over images.
    """
    scores.require(test.annotated_pairs())
    ks = sorted(set(int(k) for k in ks))
    per_image = {k: [] for k in ks}
    per_pred = {k: defaultdict(lambda: [0, 0]) for k in ks}
    for img in test.sorted_images():
        if not img.relations:
            continue
        pairs = sorted({(r.subj, r.obj) for r in img.relations})
        preds = []
        for s, o in pairs:
            v = scores[(img.image_id, s, o)]
            if graph_constraint:
                p = int(np.argmax(v[1:])) + 1
                preds.append((-float(v[p]), s, o, p))
            else:
                preds.extend((-float(v[p]), s, o, p) for p in range(1, len(v)))
        preds.sort()
        gt = [(r.subj, r.obj, r.predicate) for r in img.relations]
        for k in ks:
            top = {(s, o, p) for _, s, o, p in preds[:k]}
            hit = 0
            for triple in gt:
                ok = triple in top
                hit += ok
                cell = per_pred[k][triple[2]]
                cell[0] += ok
                cell[1] += 1
            per_image[k].append(hit / len(gt))
    by_k = {}
    for k in ks:
        micro = 100.0 * float(np.mean(per_image[k])) if per_image[k] else 0.0
        pp = {p: tuple(v) for p, v in per_pred[k].items()}
        macro = _macro(pp)
        by_k[k] = KMetrics(k, micro, macro, harmonic_f(micro, macro), None, pp)
    return MetricReport("recall", by_k)


def accuracy_family(test: Dataset, scores: ScoreTable, ks=(1, 5, 10)) -> MetricReport:
    """Acc@K / mAcc@K / F-Acc@K / Non-Zero.

    Each ground-truth relation is correct at K when its predicate is among the
    K highest non-NA scores of its pair, ties to the lower index.
    """
    scores.require(test.annotated_pairs())
    ks = sorted(set(int(k) for k in ks))
    keys, labels = [], []
    for img, rel in test.iter_relations():
        keys.append((img.image_id, rel.subj, rel.obj))
        labels.append(rel.predicate)
    labels = np.asarray(labels, dtype=np.int64)
    ranks = kernels.label_ranks(scores.matrix(keys), labels) if keys else np.zeros(0, dtype=np.int64)
    by_k = {}
    for k in ks:
        hits = ranks < k
        pp = {}
        for p in np.unique(labels):
            mask = labels == p
            pp[int(p)] = (int(hits[mask].sum()), int(mask.sum()))
        micro = 100.0 * float(hits.mean()) if len(hits) else 0.0
        macro = _macro(pp)
        non_zero = sum(1 for h, _ in pp.values() if h > 0)
        by_k[k] = KMetrics(k, micro, macro, harmonic_f(micro, macro), non_zero, pp)
    return MetricReport("accuracy", by_k)


def write_report(report: MetricReport, vocab, tsv_path=None, json_path=None, manifest=None) -> None:
    if tsv_path:
        text = report.to_tsv(vocab)
        if manifest is not None:
            text = "# manifest: " + json.dumps(manifest, sort_keys=True) + "\n" + text
        with open(tsv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    if json_path:
        payload = report.to_json(vocab)
        if manifest is not None:
            payload["manifest"] = manifest
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
