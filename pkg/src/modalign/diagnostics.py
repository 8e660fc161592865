"""Alignment diagnostics: how strongly embeddings cluster by modality.

Within each class, pairs of samples are split into same-modality and
cross-modality pairs; the diagnostics report the mean cosine of each pool
and their difference. A balanced, modality-agnostic space drives the gap
toward zero; a space where samples cluster by modality keeps same-modality
pairs much closer than cross-modality ones, giving a positive gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples
from .vectors import EmbeddingMatrix, normalize_rows


@dataclass(frozen=True)
class AlignmentDiagnostics:
    intra_class_cross_modal_cosine: float
    intra_class_same_modal_cosine: float
    modality_gap: float  # same-modal mean minus cross-modal mean

    def to_report(self) -> dict:
        return {
            "intra_class_cross_modal_cosine": self.intra_class_cross_modal_cosine,
            "intra_class_same_modal_cosine": self.intra_class_same_modal_cosine,
            "modality_gap": self.modality_gap,
        }


def alignment_diagnostics(
    modality_embeddings: dict[str, EmbeddingMatrix],
    modality_categories: dict[str, list[str]],
) -> AlignmentDiagnostics:
    """Mean intra-class cosine split by same- vs. cross-modality pairs.

    Requires at least two modalities, an identical class set in each, and at
    least two samples per class per modality.
    """
    if len(modality_embeddings) < 2:
        raise InsufficientSamples("diagnostics need at least 2 modalities")
    names = sorted(modality_embeddings)
    if set(names) != set(modality_categories):
        raise ValueError("embeddings and categories must cover the same modalities")

    blocks: dict[tuple[str, str], np.ndarray] = {}
    class_sets: dict[str, set[str]] = {}
    for name in names:
        matrix = modality_embeddings[name]
        cats = modality_categories[name]
        if len(cats) != matrix.rows:
            raise ValueError(
                f"modality {name!r}: {len(cats)} categories for {matrix.rows} rows"
            )
        unit = normalize_rows(matrix.vectors)
        class_sets[name] = set(cats)
        order = np.asarray(cats)
        for cat in sorted(class_sets[name]):
            blocks[(name, cat)] = unit[order == cat]

    common = class_sets[names[0]]
    for name in names[1:]:
        if class_sets[name] != common:
            raise InsufficientSamples(
                f"modality {name!r} does not cover the same classes as {names[0]!r}"
            )
    for (name, cat), block in blocks.items():
        if block.shape[0] < 2:
            raise InsufficientSamples(
                f"class {cat!r} has {block.shape[0]} sample(s) in modality {name!r}; need >= 2"
            )

    same_sum = 0.0
    same_count = 0
    cross_sum = 0.0
    cross_count = 0
    for cat in sorted(common):
        for i, a in enumerate(names):
            block_a = blocks[(a, cat)]
            gram = block_a @ block_a.T
            n = block_a.shape[0]
            same_sum += gram.sum() - np.trace(gram)
            same_count += n * (n - 1)
            for b in names[i + 1 :]:
                block_b = blocks[(b, cat)]
                cross = block_a @ block_b.T
                cross_sum += cross.sum()
                cross_count += cross.size

    same_mean = same_sum / same_count
    cross_mean = cross_sum / cross_count
    return AlignmentDiagnostics(
        intra_class_cross_modal_cosine=float(cross_mean),
        intra_class_same_modal_cosine=float(same_mean),
        modality_gap=float(same_mean - cross_mean),
    )
