import random

import numpy as np
import pytest

from sgtransfer.data import BBox, Dataset, Vocab, make_image
from sgtransfer.scorer import ScoreTable

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_vocab(num_classes, num_preds):
    return Vocab(tuple(f"c{i}" for i in range(num_classes)), tuple(f"p{i}" for i in range(1, num_preds + 1)))


@pytest.fixture
def vocab():
    return Vocab(
        ("man", "bike", "horse", "kite", "beach", "cup", "table", "motorcycle"),
        ("on", "riding", "sitting_on", "standing_on", "flying", "holding", "near"),
    )


def random_world(seed, max_images=10, max_classes=8, max_preds=6):
    """Small random dataset plus dyadic score vectors for every ordered pair.

    Scores are multiples of 1/16 summing to exactly 1 so averages and ties
    are exact in floating point.
    """
    rng = random.Random(seed)
    C = rng.randint(1, max_classes)
    P = rng.randint(1, max_preds)
    vocab = make_vocab(C, P)
    images = []
    for i in range(rng.randint(1, max_images)):
        objs = []
        for _ in range(rng.randint(0, 6)):
            x, y = rng.randint(0, 12), rng.randint(0, 12)
            objs.append((rng.randrange(C), BBox(x, y, x + rng.randint(1, 6), y + rng.randint(1, 6))))
        rels = []
        if len(objs) >= 2:
            for _ in range(rng.randint(0, 8)):
                s, o = rng.sample(range(len(objs)), 2)
                rels.append((s, o, rng.randint(1, P)))
        images.append(make_image(f"im{i}", objs, rels))
    d = Dataset(vocab, tuple(images))
    entries = {}
    for img in d.images:
        n = len(img.objects)
        for s in range(n):
            for o in range(n):
                if s != o:
                    w = [0] * (P + 1)
                    for _ in range(16):
                        w[rng.randrange(P + 1)] += 1
                    entries[(img.image_id, s, o)] = np.array(w, dtype=float) / 16.0
    return d, ScoreTable(entries, vocab.fingerprint(), vocab.score_dim)


def as_plain(d):
    """Dataset -> oracle tuples."""
    return [
        (img.image_id, [(o.class_id, tuple(o.box.as_list())) for o in img.objects],
         [(r.rel_id, r.subj, r.obj, r.predicate, r.is_original) for r in img.relations])
        for img in d.images
    ]


def plain_scores(table):
    return {k: [float(x) for x in table[k]] for k in table}
