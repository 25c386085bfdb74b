"""Benchmark construction: constrained image-level splits and synthetic corpora."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import BBox, Dataset, DatasetError, Vocab, make_image

# Image count of the full relation corpus the default validation size refers to.
REFERENCE_IMAGES = 108_077


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.70
    val_image_count: int = 5000
    min_test_per_predicate: int = 5
    min_train_per_predicate: int = 1
    blocklist: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if min(self.val_image_count, self.min_test_per_predicate, self.min_train_per_predicate) < 0:
            raise ValueError("counts and minima must be >= 0")


@dataclass
class SplitResult:
    train: Dataset
    val: Dataset
    test: Dataset
    filtered: Dataset
    dropped: dict = field(default_factory=dict)  # predicate -> reason
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def _strip(d: Dataset, keep_predicate) -> Dataset:
    images = []
    for img in d.images:
        rels = [(r.subj, r.obj, r.predicate, r.provenance) for r in img.relations if keep_predicate(r.predicate)]
        images.append(make_image(img.image_id, [(o.class_id, o.box) for o in img.objects], rels))
    return Dataset(d.vocab, tuple(images))


def load_blocklist(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


def build_split(corpus: Dataset, cfg: SplitConfig = SplitConfig()) -> SplitResult:
    """70/30-style image split with per-predicate test/train minima.

    Predicates that cannot meet the minima even in principle are dropped up
    front. Remaining shortfalls are repaired greedily by moving images between
    train and test without breaking any predicate that already meets its
    minima; whatever is still short afterwards is dropped.
    """
    vocab = corpus.vocab
    blocked = {vocab.predicate_index(n) for n in cfg.blocklist}
    dropped = {p: "blocklist" for p in sorted(blocked)}
    base = _strip(corpus, lambda p: p not in blocked)

    totals = Counter(r.predicate for img in base.images for r in img.relations)
    need = cfg.min_test_per_predicate + cfg.min_train_per_predicate
    for p in sorted(totals):
        if totals[p] < need:
            dropped[p] = "too_few_instances"
    active = {p for p in totals if p not in dropped}
    if totals and not active:
        raise DatasetError("split infeasible: no predicate can satisfy the per-predicate minima")

    ids = sorted(img.image_id for img in base.images)
    rng = np.random.default_rng(cfg.seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_trainval = int(round(cfg.train_fraction * n))
    if n >= REFERENCE_IMAGES:
        n_val = cfg.val_image_count
    else:
        n_val = int(round(cfg.val_image_count * n / REFERENCE_IMAGES))
    n_val = min(n_val, max(n_trainval - 1, 0))
    val_ids = set(order[n_trainval - n_val:n_trainval])
    train_ids = set(order[:n_trainval - n_val])
    test_ids = set(order[n_trainval:])

    per_image = {img.image_id: Counter(r.predicate for r in img.relations if r.predicate in active)
                 for img in base.images}
    train_c = Counter()
    test_c = Counter()
    for i in train_ids:
        train_c.update(per_image[i])
    for i in test_ids:
        test_c.update(per_image[i])

    min_te, min_tr = cfg.min_test_per_predicate, cfg.min_train_per_predicate
    ok_train = lambda: {p for p in active if train_c[p] >= min_tr}
    ok_test = lambda: {p for p in active if test_c[p] >= min_te}
    rarest = sorted(active, key=lambda p: (totals[p], p))
    moved = 0

    for p in rarest:
        while test_c[p] < min_te:
            guard = ok_train()
            options = [
                i for i in train_ids
                if per_image[i][p] > 0 and all(train_c[q] - c >= min_tr for q, c in per_image[i].items() if q in guard)
            ]
            if not options:
                break
            pick = min(options, key=lambda i: (-per_image[i][p], i))
            train_ids.remove(pick)
            test_ids.add(pick)
            train_c.subtract(per_image[pick])
            test_c.update(per_image[pick])
            moved += 1
    for p in rarest:
        while train_c[p] < min_tr:
            guard = ok_test()
            options = [
                i for i in test_ids
                if per_image[i][p] > 0 and all(test_c[q] - c >= min_te for q, c in per_image[i].items() if q in guard)
            ]
            if not options:
                break
            pick = min(options, key=lambda i: (-per_image[i][p], i))
            test_ids.remove(pick)
            train_ids.add(pick)
            test_c.subtract(per_image[pick])
            train_c.update(per_image[pick])
            moved += 1

    for p in sorted(active):
        if test_c[p] < min_te or train_c[p] < min_tr:
            dropped[p] = "unsatisfiable_after_repair"
    survivors = {p for p in active if p not in dropped}
    if totals and not survivors:
        raise DatasetError("split infeasible: every predicate failed repair")

    filtered = _strip(base, lambda p: p in survivors)
    part = lambda keep: Dataset(vocab, tuple(img for img in filtered.images if img.image_id in keep))
    stats = {
        "images": n,
        "trainval_pre_repair": n_trainval,
        "val": len(val_ids),
        "train": len(train_ids),
        "test": len(test_ids),
        "images_moved": moved,
        "surviving_predicates": len(survivors),
    }
    return SplitResult(part(train_ids), part(val_ids), part(test_ids), filtered,
                       {vocab.predicate_name(p): r for p, r in sorted(dropped.items())}, stats)


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Long-tailed, ambiguously labeled synthetic scene-graph corpus.

    ``ambiguity`` maps a general predicate index to the informative predicate
    indices it absorbs; when ``None`` the ``num_general`` most frequent
    predicates each absorb a round-robin share of the bottom two thirds.
    """

    num_images: int = 1000
    num_object_classes: int = 24
    num_predicates: int = 40
    zipf_exponent: float = 1.5
    ambiguity: dict | None = None
    ambiguity_probability: float = 0.5
    deletion_probability: float = 0.3
    num_general: int = 4
    general_support: int = 16
    informative_support: int = 2
    other_support: int = 4
    relations_per_image: tuple = (2, 6)
    distractors_per_image: tuple = (0, 3)
    image_size: float = 100.0
    seed: int = 0

    def __post_init__(self):
        for name in ("ambiguity_probability", "deletion_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.num_predicates < 1 or self.num_object_classes < 1:
            raise ValueError("need at least one predicate and one object class")
        for g, kids in self.resolved_ambiguity().items():
            if g in kids:
                raise ValueError(f"predicate {g} cannot be its own informative child")

    def resolved_ambiguity(self) -> dict:
        if self.ambiguity is not None:
            return {int(g): frozenset(int(k) for k in kids) for g, kids in self.ambiguity.items()}
        P = self.num_predicates
        generals = list(range(1, min(self.num_general, P) + 1))
        if not generals:
            return {}
        first_child = max(len(generals) + 1, P // 3 + 1)
        out = {g: set() for g in generals}
        for j, p in enumerate(range(first_child, P + 1)):
            out[generals[j % len(generals)]].add(p)
        return {g: frozenset(k) for g, k in out.items()}


@dataclass
class SynthCorpus:
    dataset: Dataset
    truth: Dataset
    parent: dict  # informative predicate -> general predicate


def synth_vocab(cfg: SynthConfig) -> Vocab:
    return Vocab(
        tuple(f"obj{c:03d}" for c in range(cfg.num_object_classes)),
        tuple(f"pred{p:03d}" for p in range(1, cfg.num_predicates + 1)),
    )


def _supports(cfg: SynthConfig, amb: dict, rng) -> dict:
    C = cfg.num_object_classes
    all_pairs = [(a, b) for a in range(C) for b in range(C)]
    pick = lambda k: [all_pairs[i] for i in rng.choice(len(all_pairs), size=min(k, len(all_pairs)), replace=False)]
    parent = {k: g for g, kids in amb.items() for k in kids}
    support = {}
    for g in sorted(amb):
        support[g] = pick(cfg.general_support)
    for p in range(1, cfg.num_predicates + 1):
        if p in support:
            continue
        if p in parent:
            # one pair shared with the general parent, the rest its own
            pool = support[parent[p]]
            shared = [pool[int(rng.integers(len(pool)))]] if cfg.informative_support > 0 else []
            support[p] = shared + pick(max(cfg.informative_support - 1, 0))
        else:
            support[p] = pick(cfg.other_support)
    return support


def _box_pair(rng, size):
    w, h = rng.uniform(0.1 * size, 0.4 * size, 2)
    x, y = rng.uniform(0, size - w), rng.uniform(0, size - h)
    subj = BBox(float(x), float(y), float(x + w), float(y + h))
    # object box overlaps the subject box by construction
    w2, h2 = rng.uniform(0.1 * size, 0.4 * size, 2)
    cx = rng.uniform(subj.x1 + 0.1 * w, subj.x2 - 0.1 * w)
    cy = rng.uniform(subj.y1 + 0.1 * h, subj.y2 - 0.1 * h)
    obj = BBox(float(cx - w2 / 2), float(cy - h2 / 2), float(cx + w2 / 2), float(cy + h2 / 2))
    return subj, obj


def synth_generate(cfg: SynthConfig) -> SynthCorpus:
    """Generate (annotated corpus, ground truth).

    True predicates follow a Zipf law over predicate rank. Informative
    instances are annotated with their general parent with probability
    ``ambiguity_probability``; each true relation is then deleted from the
    annotation with probability ``deletion_probability``.
    """
    amb = cfg.resolved_ambiguity()
    parent = {k: g for g, kids in amb.items() for k in kids}
    rng = np.random.default_rng(cfg.seed)
    support = _supports(cfg, amb, rng)
    ranks = np.arange(1, cfg.num_predicates + 1, dtype=np.float64)
    weights = ranks ** -cfg.zipf_exponent
    weights /= weights.sum()
    lo, hi = cfg.relations_per_image
    dlo, dhi = cfg.distractors_per_image

    annotated, truth = [], []
    width = len(str(max(cfg.num_images - 1, 0)))
    for i in range(cfg.num_images):
        r = np.random.default_rng([cfg.seed, i])
        objects, true_rels, ann_rels = [], [], []
        for _ in range(int(r.integers(lo, hi + 1))):
            p = int(r.choice(cfg.num_predicates, p=weights)) + 1
            c_s, c_o = support[p][int(r.integers(len(support[p])))]
            sb, ob = _box_pair(r, cfg.image_size)
            s_id, o_id = len(objects), len(objects) + 1
            objects += [(c_s, sb), (c_o, ob)]
            true_rels.append((s_id, o_id, p))
            shown = parent[p] if p in parent and r.random() < cfg.ambiguity_probability else p
            if r.random() >= cfg.deletion_probability:
                ann_rels.append((s_id, o_id, shown))
        for _ in range(int(r.integers(dlo, dhi + 1))):
            w, h = r.uniform(0.05 * cfg.image_size, 0.3 * cfg.image_size, 2)
            x, y = r.uniform(0, cfg.image_size - w), r.uniform(0, cfg.image_size - h)
            objects.append((int(r.integers(cfg.num_object_classes)), BBox(float(x), float(y), float(x + w), float(y + h))))
        image_id = f"img{i:0{width}d}"
        annotated.append(make_image(image_id, objects, ann_rels))
        truth.append(make_image(image_id, objects, true_rels))
    vocab = synth_vocab(cfg)
    return SynthCorpus(Dataset(vocab, tuple(annotated)), Dataset(vocab, tuple(truth)), parent)
