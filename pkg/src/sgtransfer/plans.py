"""JSONL serialization of transfer plans.

Every plan file starts with a ``{"manifest": ...}`` line followed by one
record per move/addition and one diagnostic record per target (internal) or
a single stats record (external).
"""

from __future__ import annotations

import json

from .data import DatasetError, TripletType, Vocab, read_jsonl
from .external import Addition, ExternalPlan
from .internal import InternalPlan, Move


def _dump(rec) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def internal_plan_lines(plan: InternalPlan, vocab: Vocab, manifest: dict | None = None) -> list:
    name = vocab.predicate_name
    lines = [_dump({"manifest": manifest or {}})]
    for m in plan.moves:
        lines.append(_dump({
            "kind": "move", "image_id": m.image_id, "rel_id": m.rel_id, "subj": m.subj, "obj": m.obj,
            "src": name(m.src), "tgt": name(m.tgt), "tgt_score": m.tgt_score,
        }))
    for t, (n, kept) in sorted(plan.diagnostics.items(), key=lambda kv: (kv[0].c_s, kv[0].p, kv[0].c_o)):
        rule = plan.rules.get(t)
        lines.append(_dump({
            "kind": "target",
            "target": [vocab.object_classes[t.c_s], name(t.p), vocab.object_classes[t.c_o]],
            "sources": sorted(name(p) for p in rule.sources) if rule else [],
            "candidates": n, "moved": kept,
        }))
    return lines


def write_internal_plan(plan: InternalPlan, vocab: Vocab, path, manifest: dict | None = None) -> None:
    _write(path, internal_plan_lines(plan, vocab, manifest))


def load_internal_plan(path, vocab: Vocab) -> tuple[InternalPlan, dict]:
    moves, diag, manifest = [], {}, {}
    for lineno, rec in read_jsonl(path):
        try:
            if "manifest" in rec:
                manifest = rec["manifest"]
            elif rec["kind"] == "move":
                moves.append(Move(rec["image_id"], int(rec["rel_id"]), int(rec["subj"]), int(rec["obj"]),
                                  vocab.predicate_index(rec["src"]), vocab.predicate_index(rec["tgt"]),
                                  float(rec["tgt_score"])))
            elif rec["kind"] == "target":
                c_s, p, c_o = rec["target"]
                t = TripletType(vocab.object_index(c_s), vocab.predicate_index(p), vocab.object_index(c_o))
                diag[t] = (int(rec["candidates"]), int(rec["moved"]))
            else:
                raise DatasetError(f"unknown record kind {rec['kind']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad plan record: {exc}") from None
    return InternalPlan(moves, diag), manifest


def external_plan_lines(plan: ExternalPlan, vocab: Vocab, manifest: dict | None = None) -> list:
    name = vocab.predicate_name
    lines = [_dump({"manifest": manifest or {}})]
    for a in plan.additions:
        lines.append(_dump({
            "kind": "addition", "image_id": a.image_id, "subj": a.subj, "obj": a.obj,
            "predicate": name(a.predicate), "na_score": a.na_score,
        }))
    lines.append(_dump({
        "kind": "stats", **plan.stats,
        "excluded_head_predicates": sorted(name(p) for p in plan.excluded_head_predicates),
    }))
    return lines


def write_external_plan(plan: ExternalPlan, vocab: Vocab, path, manifest: dict | None = None) -> None:
    _write(path, external_plan_lines(plan, vocab, manifest))


def load_external_plan(path, vocab: Vocab) -> tuple[ExternalPlan, dict]:
    additions, stats, head, manifest = [], {}, frozenset(), {}
    for lineno, rec in read_jsonl(path):
        try:
            if "manifest" in rec:
                manifest = rec["manifest"]
            elif rec["kind"] == "addition":
                additions.append(Addition(rec["image_id"], int(rec["subj"]), int(rec["obj"]),
                                          vocab.predicate_index(rec["predicate"]), float(rec["na_score"])))
            elif rec["kind"] == "stats":
                stats = {k: v for k, v in rec.items() if k not in ("kind", "excluded_head_predicates")}
                head = frozenset(vocab.predicate_index(n) for n in rec.get("excluded_head_predicates", []))
            else:
                raise DatasetError(f"unknown record kind {rec['kind']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad plan record: {exc}") from None
    return ExternalPlan(additions, head, stats), manifest
