"""Command-line entry point.

Every subcommand is a thin wrapper over library calls; every artifact it
writes carries a manifest of the parameters and input fingerprints.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .benchmark import SplitConfig, SynthConfig, build_split, load_blocklist, synth_generate
from .data import (DatasetError, build_triplet_index, file_fingerprint, load_dataset, load_vocab,
                   write_dataset, write_vocab)
from .evaluation import accuracy_family, recall_family, write_report
from .external import enumerate_na
from .integration import (additions_by_predicate, distribution_report, distribution_tsv, merge,
                          transfer_pair_report)
from .internal import aggregate_scores, write_confusion_csv
from .pipeline import PROFILES, base_manifest, external_plan, internal_plan, kernel_backend, source_description
from .plans import load_external_plan, load_internal_plan, write_external_plan, write_internal_plan
from .scorer import (ScoreError, fit_frequency_baseline, load_external_scores, score_annotated, score_pairs,
                     write_scores_binary, write_scores_jsonl)

CONFIG_ENV = "SGTRANSFER_CONFIG"
DEFAULTS = {"k_i": 70, "k_e": 100, "head_exclude": 15, "alpha": 1.0, "beta": 0.1, "workers": 1}


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, 2)


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _config() -> dict:
    cfg = dict(DEFAULTS)
    path = os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {path}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CLIError(f"unknown config keys {sorted(unknown)}")
        cfg.update(loaded)
    return cfg


def _resolve(args, *names) -> dict:
    cfg = _config()
    if getattr(args, "profile", None):
        cfg.update(PROFILES[args.profile])
    for n in names:
        v = getattr(args, n, None)
        if v is not None:
            cfg[n] = v
    return {n: cfg[n] for n in names}


def _vocab(args):
    path = args.vocab or str(Path(args.data).with_name("vocab.txt"))
    if not Path(path).exists():
        raise CLIError(f"vocab file not found: {path}")
    return load_vocab(path), path


def _inputs(*paths) -> dict:
    return {str(p): file_fingerprint(p) for p in paths if p}


def _source(args, d, params):
    if getattr(args, "scores", None):
        return load_external_scores(args.scores, d.vocab)
    train = load_dataset(args.train, d.vocab) if getattr(args, "train", None) else d
    return fit_frequency_baseline(train, params["alpha"], params["beta"])


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest_comment(manifest) -> str:
    return "# manifest: " + json.dumps(manifest, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_stats(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    idx = build_triplet_index(d)
    counts = d.predicate_counts()
    out = {
        "images": len(d.images),
        "objects": sum(len(i.objects) for i in d.images),
        "relations": d.num_relations,
        "triplet_types": len(idx.count),
        "predicates_present": sum(1 for c in counts[1:] if c > 0),
        "predicate_counts": {vocab.predicate_name(p): counts[p] for p in range(1, vocab.score_dim)},
        "kernel_backend": kernel_backend(),
    }
    print(json.dumps(out, sort_keys=True, indent=1))


def cmd_score(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    params = _resolve(args, "alpha", "beta")
    source = _source(args, d, params)
    keys = set(d.annotated_pairs())
    if args.include_na:
        keys |= {c.key for c in enumerate_na(d)}
    table = score_pairs(d, keys, source)
    (write_scores_binary if args.binary else write_scores_jsonl)(table, args.out)
    print(f"scored {len(table)} pairs")


def cmd_internal(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    params = _resolve(args, "k_i", "alpha", "beta")
    source = _source(args, d, params)
    plan = internal_plan(d, source, params["k_i"], args.adaptive_k)
    manifest = base_manifest("internal", k_i=params["k_i"], adaptive_k=args.adaptive_k,
                             scorer=source_description(source))
    manifest["inputs"] = _inputs(args.data, vpath, args.scores, args.train)
    write_internal_plan(plan, vocab, args.out, manifest)
    if args.confusion_dir:
        Path(args.confusion_dir).mkdir(parents=True, exist_ok=True)
        agg = aggregate_scores(d, score_annotated(d, source))
        for c_s, c_o in sorted({(t.c_s, t.c_o) for t in agg.mean}):
            name = f"{vocab.object_classes[c_s]}__{vocab.object_classes[c_o]}.csv"
            write_confusion_csv(agg, vocab, c_s, c_o, Path(args.confusion_dir) / name)
    print(f"internal moves: {len(plan.moves)}")


def cmd_external(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    params = _resolve(args, "k_e", "head_exclude", "alpha", "beta", "workers")
    source = _source(args, d, params)
    plan = external_plan(d, source, params["k_e"], params["head_exclude"], workers=params["workers"])
    manifest = base_manifest("external", k_e=params["k_e"], head_exclude=params["head_exclude"],
                             scorer=source_description(source))
    manifest["inputs"] = _inputs(args.data, vpath, args.scores, args.train)
    write_external_plan(plan, vocab, args.out, manifest)
    if args.summary:
        rows = "".join(f"{n}\t{c}\n" for n, c in additions_by_predicate(plan, vocab))
        _write_text(args.summary, _manifest_comment(manifest) + "predicate\tadditions\n" + rows)
    print(f"external additions: {len(plan.additions)}")


def cmd_merge(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    ip = load_internal_plan(args.internal_plan, vocab)[0] if args.internal_plan else None
    ep = load_external_plan(args.external_plan, vocab)[0] if args.external_plan else None
    manifest = base_manifest("merge")
    manifest["inputs"] = _inputs(args.data, vpath, args.internal_plan, args.external_plan)
    enhanced = merge(d, ip, ep, manifest)
    enhanced.manifest["collisions"] = enhanced.collisions
    write_dataset(enhanced.dataset, args.out, enhanced.manifest)
    print(f"relations: {d.num_relations} -> {enhanced.dataset.num_relations} (collisions {enhanced.collisions})")


def cmd_evaluate(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    if not args.scores and not args.train:
        raise CLIError("evaluate needs --scores or --train")
    params = _resolve(args, "alpha", "beta")
    source = _source(args, d, params)
    table = score_annotated(d, source)
    if args.family == "recall":
        ks = args.k or [20, 50, 100]
        report = recall_family(d, table, ks, graph_constraint=not args.no_graph_constraint)
    else:
        ks = args.k or [1, 5, 10]
        report = accuracy_family(d, table, ks)
    manifest = base_manifest("evaluate", family=args.family, k=sorted(ks),
                             graph_constraint=not args.no_graph_constraint, scorer=source_description(source))
    manifest["inputs"] = _inputs(args.data, vpath, args.scores, args.train)
    write_report(report, vocab, args.tsv, args.json, manifest)
    print(report.to_text())


def cmd_split(args):
    vocab, vpath = _vocab(args)
    d = load_dataset(args.data, vocab)
    cfg = SplitConfig(
        train_fraction=args.train_fraction, val_image_count=args.val_images,
        min_test_per_predicate=args.min_test, min_train_per_predicate=args.min_train,
        blocklist=load_blocklist(args.blocklist) if args.blocklist else (), seed=args.seed,
    )
    res = build_split(d, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = base_manifest("split", train_fraction=cfg.train_fraction, val_images=cfg.val_image_count,
                             min_test=cfg.min_test_per_predicate, min_train=cfg.min_train_per_predicate,
                             seed=cfg.seed)
    manifest["inputs"] = _inputs(args.data, vpath, args.blocklist)
    manifest["stats"] = res.stats
    manifest["dropped"] = res.dropped
    for name, part in (("train", res.train), ("val", res.val), ("test", res.test)):
        write_dataset(part, out / f"{name}.jsonl", dict(manifest, part=name))
    write_vocab(vocab, out / "vocab.txt")
    print(json.dumps(res.stats, sort_keys=True))


def cmd_synth(args):
    cfg = SynthConfig(
        num_images=args.images, num_object_classes=args.object_classes, num_predicates=args.predicates,
        zipf_exponent=args.zipf, ambiguity_probability=args.ambiguity, deletion_probability=args.deletion,
        seed=args.seed,
    )
    corpus = synth_generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = base_manifest("synth", images=cfg.num_images, object_classes=cfg.num_object_classes,
                             predicates=cfg.num_predicates, zipf=cfg.zipf_exponent,
                             ambiguity=cfg.ambiguity_probability, deletion=cfg.deletion_probability,
                             seed=cfg.seed)
    write_vocab(corpus.dataset.vocab, out / "vocab.txt")
    write_dataset(corpus.dataset, out / "corpus.jsonl", manifest)
    write_dataset(corpus.truth, out / "truth.jsonl", dict(manifest, part="truth"))
    print(f"wrote {len(corpus.dataset.images)} images to {out}")


def cmd_report(args):
    vocab, vpath = _vocab(args)
    if args.kind == "distribution":
        if not args.after:
            raise CLIError("distribution report needs --after")
        before = load_dataset(args.data, vocab)
        after = load_dataset(args.after, vocab)
        text = distribution_tsv(distribution_report(before, after, args.bins), vocab)
        inputs = _inputs(args.data, args.after)
    else:
        if not args.internal_plan:
            raise CLIError("pairs report needs --internal-plan")
        ip, _ = load_internal_plan(args.internal_plan, vocab)
        rows = transfer_pair_report(ip, vocab, args.top_n)
        text = "general\tinformative\tmoved\n" + "".join(f"{s}\t{t}\t{n}\n" for s, t, n in rows)
        inputs = _inputs(args.internal_plan)
    manifest = base_manifest("report", kind=args.kind, bins=args.bins, top_n=args.top_n)
    manifest["inputs"] = inputs
    text = _manifest_comment(manifest) + text
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgtransfer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sgtransfer {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, data_help="dataset JSONL"):
        sp.add_argument("--data", required=True, help=data_help)
        sp.add_argument("--vocab", help="vocab sidecar (default: vocab.txt next to --data)")

    def scorer_args(sp):
        sp.add_argument("--scores", help="external score dump (JSONL or binary)")
        sp.add_argument("--train", help="fit the frequency baseline on this dataset instead of --data")
        sp.add_argument("--alpha", type=float, help="baseline Laplace smoothing (default 1.0)")
        sp.add_argument("--beta", type=float, help="baseline NA prior (default 0.1)")

    def profile_args(sp):
        sp.add_argument("--profile", choices=sorted(PROFILES), help="vg50: kI=70, head 15; vg1800: kI=90, head 0")
        sp.add_argument("--workers", type=int, help="parallel workers; outputs do not depend on it")

    sp = sub.add_parser("stats", help="corpus statistics")
    data_args(sp)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("score", help="write a score dump for annotated (and NA) pairs")
    data_args(sp)
    scorer_args(sp)
    sp.add_argument("--include-na", action="store_true", help="also score overlapping unannotated pairs")
    sp.add_argument("--binary", action="store_true", help="write the binary dump variant")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("internal", help="build an internal transfer plan")
    data_args(sp)
    scorer_args(sp)
    profile_args(sp)
    sp.add_argument("--kI", dest="k_i", type=float, help="percentage of candidates moved per target")
    sp.add_argument("--adaptive-k", type=float, help="use the mean + k*std threshold instead of --kI")
    sp.add_argument("--confusion-dir", help="export per class-pair confusion matrices as CSV")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_internal)

    sp = sub.add_parser("external", help="build an external transfer plan")
    data_args(sp)
    scorer_args(sp)
    profile_args(sp)
    sp.add_argument("--kE", dest="k_e", type=float, help="percentage of eligible NA pairs labeled")
    sp.add_argument("--head-exclude", type=int, help="skip the N most frequent predicates")
    sp.add_argument("--summary", help="TSV of additions per predicate")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_external)

    sp = sub.add_parser("merge", help="apply plans to produce the enhanced dataset")
    data_args(sp)
    sp.add_argument("--internal-plan")
    sp.add_argument("--external-plan")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("evaluate", help="predicate-classification metrics")
    data_args(sp, "test dataset JSONL")
    scorer_args(sp)
    sp.add_argument("--family", choices=("recall", "accuracy"), default="recall")
    sp.add_argument("--k", type=int, action="append", help="cutoff (repeatable)")
    sp.add_argument("--no-graph-constraint", action="store_true")
    sp.add_argument("--tsv")
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("split", help="constrained train/val/test split")
    data_args(sp)
    sp.add_argument("--blocklist", help="newline-delimited predicate names to remove")
    sp.add_argument("--train-fraction", type=float, default=0.70)
    sp.add_argument("--val-images", type=int, default=5000)
    sp.add_argument("--min-test", type=int, default=5)
    sp.add_argument("--min-train", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("synth", help="generate a synthetic long-tailed corpus with truth sidecar")
    sp.add_argument("--images", type=int, default=1000)
    sp.add_argument("--object-classes", type=int, default=24)
    sp.add_argument("--predicates", type=int, default=40)
    sp.add_argument("--zipf", type=float, default=1.5)
    sp.add_argument("--ambiguity", type=float, default=0.5)
    sp.add_argument("--deletion", type=float, default=0.3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("report", help="distribution change or transfer-pair ranking")
    sp.add_argument("kind", choices=("distribution", "pairs"))
    sp.add_argument("--data", required=True, help="original dataset (distribution) or any dataset path for vocab lookup")
    sp.add_argument("--vocab")
    sp.add_argument("--after", help="enhanced dataset (distribution)")
    sp.add_argument("--bins", type=int, default=10)
    sp.add_argument("--internal-plan")
    sp.add_argument("--top-n", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CLIError, DatasetError, ScoreError, ValueError, KeyError) as exc:
        _fail(type(exc).__name__, str(exc), 1)
    except OSError as exc:
        _fail("io", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
