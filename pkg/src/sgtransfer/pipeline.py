"""End-to-end composition used by both the CLI and library callers."""

from __future__ import annotations

from dataclasses import dataclass

from . import __version__, kernels
from .data import Dataset, TripletIndex, build_triplet_index
from .external import ExternalPlan, build_external_plan, enumerate_na
from .integration import EnhancedDataset, merge
from .internal import InternalPlan, build_plan, build_plan_adaptive
from .scorer import FrequencyBaseline, ScoreTable, score_annotated, score_pairs

TIE_BREAK_POLICY = (
    "conflict: max attraction then lower predicate index; "
    "internal sort: score desc then (image_id, rel_id); "
    "external sort: NA score asc then (image_id, subj, obj); cuts: floor"
)
SIGMA_CONVENTION = "population"
HEAD_FREQUENCY_BASIS = "original dataset"

PROFILES = {
    "vg50": {"k_i": 70, "k_e": 100, "head_exclude": 15},
    "vg1800": {"k_i": 90, "k_e": 100, "head_exclude": 0},
}


def base_manifest(command: str, **params) -> dict:
    return {
        "command": command,
        "tool": "sgtransfer",
        "version": __version__,
        "params": {k: v for k, v in sorted(params.items())},
        "tie_break_policy": TIE_BREAK_POLICY,
        "sigma_convention": SIGMA_CONVENTION,
        "head_frequency_basis": HEAD_FREQUENCY_BASIS,
    }


def source_description(source) -> dict:
    if isinstance(source, FrequencyBaseline):
        return {"kind": "frequency_baseline", "alpha": source.alpha, "beta": source.beta}
    return {"kind": "external_dump", "fingerprint": source.fingerprint}


@dataclass
class TransferResult:
    enhanced: EnhancedDataset
    internal: InternalPlan
    external: ExternalPlan
    index: TripletIndex


def internal_plan(d: Dataset, source, k_i=70, adaptive_k: float | None = None, idx=None) -> InternalPlan:
    idx = idx or build_triplet_index(d)
    scores = score_annotated(d, source)
    if adaptive_k is None:
        return build_plan(d, scores, idx, k_i)
    return build_plan_adaptive(d, scores, idx, adaptive_k)


def external_plan(d: Dataset, source, k_e=100, head_exclude: int = 15, idx=None, workers: int = 1) -> ExternalPlan:
    idx = idx or build_triplet_index(d)
    cands = enumerate_na(d, workers=workers)
    scores = score_pairs(d, [c.key for c in cands], source)
    return build_external_plan(cands, scores, idx, k_e, head_exclude, d.vocab.num_predicates)


def run_transfer(d: Dataset, source, k_i=70, k_e=100, head_exclude: int = 15,
                 adaptive_k: float | None = None, workers: int = 1) -> TransferResult:
    """Internal and external transfer against the same original dataset, then merge."""
    idx = build_triplet_index(d)
    ip = internal_plan(d, source, k_i, adaptive_k, idx)
    ep = external_plan(d, source, k_e, head_exclude, idx, workers)
    manifest = base_manifest(
        "transfer", k_i=k_i, k_e=k_e, head_exclude=head_exclude, adaptive_k=adaptive_k,
        scorer=source_description(source),
    )
    manifest["moves"] = len(ip.moves)
    manifest["additions"] = len(ep.additions)
    enhanced = merge(d, ip, ep, manifest)
    enhanced.manifest["collisions"] = enhanced.collisions
    return TransferResult(enhanced, ip, ep, idx)


def kernel_backend() -> str:
    return kernels.BACKEND


__all__ = [
    "PROFILES", "TransferResult", "base_manifest", "external_plan", "internal_plan",
    "run_transfer", "ScoreTable",
]
