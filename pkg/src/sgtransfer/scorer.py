"""Per-pair predicate score vectors.

Scores come either from an external dump (JSONL or a binary variant) or from
the built-in pair-conditional frequency baseline. Column 0 is always NA.
"""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .data import Dataset, DatasetError, Vocab, read_jsonl

NORM_TOL = 1e-6

PairKey = tuple  # (image_id, subj, obj)


class ScoreError(ValueError):
    pass


def validate_vector(values, dim: int, where: str = "") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    prefix = f"{where}: " if where else ""
    if v.shape != (dim,):
        raise ScoreError(f"{prefix}score vector has length {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ScoreError(f"{prefix}score vector has non-finite entries")
    if np.any(v < 0):
        raise ScoreError(f"{prefix}score vector has negative entries")
    if abs(float(v.sum()) - 1.0) > NORM_TOL:
        raise ScoreError(f"{prefix}score vector sums to {float(v.sum())!r}, not 1")
    return v


class ScoreTable(Mapping):
    """Immutable map (image_id, subj, obj) -> score vector, tagged with a vocab fingerprint."""

    def __init__(self, entries: Mapping, fingerprint: str, dim: int):
        self.fingerprint = fingerprint
        self.dim = dim
        self._data = {}
        for key, vec in entries.items():
            v = validate_vector(vec, dim, f"pair {key}")
            v.setflags(write=False)
            self._data[(str(key[0]), int(key[1]), int(key[2]))] = v

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(sorted(self._data))

    def __len__(self):
        return len(self._data)

    def check_vocab(self, vocab: Vocab) -> None:
        if self.fingerprint != vocab.fingerprint():
            raise ScoreError("score table vocab fingerprint does not match the dataset vocab")

    def require(self, keys: Iterable) -> None:
        missing = [k for k in keys if k not in self._data]
        if missing:
            shown = ", ".join(map(str, missing[:10]))
            more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
            raise ScoreError(f"missing scores for {len(missing)} pairs: {shown}{more}")

    def merged(self, other: "ScoreTable") -> "ScoreTable":
        if other.fingerprint != self.fingerprint or other.dim != self.dim:
            raise ScoreError("cannot merge score tables over different vocabularies")
        entries = dict(self._data)
        entries.update(other._data)
        return ScoreTable(entries, self.fingerprint, self.dim)

    def matrix(self, keys) -> np.ndarray:
        if not keys:
            return np.zeros((0, self.dim))
        return np.stack([self._data[k] for k in keys])


# ---------------------------------------------------------------------------
# Frequency baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyBaseline:
    """Pair-conditional predicate counts with Laplace smoothing and an NA prior."""

    counts: Mapping  # (c_s, c_o) -> int array of length |P|+1, slot 0 unused
    num_predicates: int
    alpha: float = 1.0
    beta: float = 0.1
    fingerprint: str = ""

    def score_pair(self, c_s: int, c_o: int) -> np.ndarray:
        """values[p] = (1 - beta) * (count_p + alpha) / sum_q (count_q + alpha); values[0] = beta."""
        row = self.counts.get((c_s, c_o))
        if row is None:
            row = np.zeros(self.num_predicates + 1, dtype=np.int64)
        smoothed = row[1:].astype(np.float64) + self.alpha
        total = smoothed.sum()
        if total <= 0:
            raise ScoreError(f"undefined distribution for unseen class pair ({c_s}, {c_o}) with alpha=0")
        out = np.empty(self.num_predicates + 1)
        out[0] = self.beta
        out[1:] = (1.0 - self.beta) * (smoothed / total)
        return out


def fit_frequency_baseline(train: Dataset, alpha: float = 1.0, beta: float = 0.1) -> FrequencyBaseline:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    dim = train.vocab.score_dim
    counts = defaultdict(lambda: np.zeros(dim, dtype=np.int64))
    for img in train.images:
        for rel in img.relations:
            counts[img.pair_classes(rel.subj, rel.obj)][rel.predicate] += 1
    frozen = {}
    for k, v in counts.items():
        v.setflags(write=False)
        frozen[k] = v
    return FrequencyBaseline(frozen, train.vocab.num_predicates, float(alpha), float(beta),
                             train.vocab.fingerprint())


def score_pairs(d: Dataset, keys, source) -> ScoreTable:
    """Score the given (image_id, subj, obj) pairs with a baseline or an existing table."""
    fp = d.vocab.fingerprint()
    keys = sorted(keys)
    if isinstance(source, FrequencyBaseline):
        if source.fingerprint and source.fingerprint != fp:
            raise ScoreError("baseline was fit on a different vocabulary")
        cache = {}
        entries = {}
        for key in keys:
            cls = d.image(key[0]).pair_classes(key[1], key[2])
            if cls not in cache:
                cache[cls] = source.score_pair(*cls)
            entries[key] = cache[cls]
        return ScoreTable(entries, fp, d.vocab.score_dim)
    if isinstance(source, ScoreTable):
        source.check_vocab(d.vocab)
        source.require(keys)
        return ScoreTable({k: source[k] for k in keys}, fp, d.vocab.score_dim)
    raise TypeError(f"unsupported score source {type(source).__name__}")


def score_annotated(d: Dataset, source) -> ScoreTable:
    """One score vector per annotated ordered pair."""
    return score_pairs(d, d.annotated_pairs(), source)


# ---------------------------------------------------------------------------
# Score dumps
# ---------------------------------------------------------------------------

BINARY_MAGIC = b"SGSC"
BINARY_VERSION = 1


def write_scores_jsonl(table: ScoreTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"fingerprint": table.fingerprint, "dim": table.dim}, sort_keys=True) + "\n")
        for key in table:
            rec = {"image_id": key[0], "subj": key[1], "obj": key[2],
                   "scores": [float(x) for x in table[key]]}
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def write_scores_binary(table: ScoreTable, path) -> None:
    """Little-endian: magic, u32 version, 64-byte ascii fingerprint, u32 dim, u64 count,
    then per record u32 id length, utf-8 id, u32 subj, u32 obj, dim float64."""
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", BINARY_VERSION))
        fh.write(table.fingerprint.encode("ascii").ljust(64, b"\0"))
        fh.write(struct.pack("<IQ", table.dim, len(table)))
        for key in table:
            raw = key[0].encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", key[1], key[2]))
            fh.write(np.asarray(table[key], dtype="<f8").tobytes())


def _load_binary(path, vocab: Vocab) -> ScoreTable:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != BINARY_MAGIC:
        raise ScoreError(f"{path}: not a binary score dump")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != BINARY_VERSION:
        raise ScoreError(f"{path}: unsupported version {version}")
    fp = buf[8:72].rstrip(b"\0").decode("ascii")
    dim, count = struct.unpack_from("<IQ", buf, 72)
    pos = 84
    entries = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            image_id = buf[pos:pos + n].decode("utf-8")
            pos += n
            subj, obj = struct.unpack_from("<II", buf, pos)
            pos += 8
            vec = np.frombuffer(buf, dtype="<f8", count=dim, offset=pos).astype(np.float64)
            pos += 8 * dim
            entries[(image_id, subj, obj)] = vec
    except (struct.error, ValueError) as exc:
        raise ScoreError(f"{path}: truncated record: {exc}") from None
    if pos != len(buf):
        raise ScoreError(f"{path}: trailing bytes after {count} records")
    return _finish(entries, fp, dim, vocab, path)


def _finish(entries, fp, dim, vocab: Vocab, path) -> ScoreTable:
    if fp is not None and fp != vocab.fingerprint():
        raise ScoreError(f"{path}: vocab fingerprint mismatch")
    if dim is not None and dim != vocab.score_dim:
        raise ScoreError(f"{path}: dump has dim {dim}, vocab needs {vocab.score_dim}")
    return ScoreTable(entries, vocab.fingerprint(), vocab.score_dim)


def load_external_scores(path, vocab: Vocab) -> ScoreTable:
    """Load a JSONL or binary score dump and validate every vector against the vocab."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return _load_binary(path, vocab)
    entries = {}
    fp = dim = None
    try:
        for lineno, rec in read_jsonl(path):
            if "scores" not in rec:
                if entries or fp is not None:
                    raise ScoreError(f"{path}:{lineno}: header must be the first line")
                fp, dim = rec.get("fingerprint"), rec.get("dim")
                continue
            key = (rec["image_id"], rec["subj"], rec["obj"])
            if key in entries:
                raise ScoreError(f"{path}:{lineno}: duplicate pair {key}")
            entries[key] = validate_vector(rec["scores"], vocab.score_dim, f"{path}:{lineno}")
    except (KeyError, TypeError) as exc:
        raise ScoreError(f"{path}: malformed score record: {exc}") from None
    except DatasetError as exc:
        raise ScoreError(str(exc)) from None
    return _finish(entries, fp, dim, vocab, path)
