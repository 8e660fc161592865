"""Deterministic synthetic benchmark bundles for desk-scale experiments.

Each class gets a direction in embedding space; descriptions scatter around
the class direction with Gaussian noise and carry no modality bias (text is
the modality-agnostic anchor). Each visual modality adds its own fixed
offset vector to every sample it emits, which manufactures the clustered-by-
modality geometry that adapter training is supposed to undo.

All randomness flows from one seed through fixed spawn keys per stage, so
adding a modality or more classes never perturbs the draws of existing ones.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .kb import KnowledgeRecord, Source, save_records
from .serialize import atomic_write_text, fixed_json
from .ubem import write_ubem
from .vectors import EmbeddingMatrix

# Spawn-key stage tags for the per-stream generators.
_STAGE_CENTERS = 0
_STAGE_CATEGORY_DESCRIPTIONS = 1
_STAGE_MODALITY_OFFSET = 2
_STAGE_MODALITY_SAMPLES = 3
_STAGE_PAIRED_DESCRIPTIONS = 4


@dataclass(frozen=True)
class SyntheticSpec:
    categories: int = 10
    modalities: int = 2
    samples_per_class: int = 20
    dim: int = 16
    class_separation: float = 1.0
    modality_offset: float = 1.0
    noise_sigma: float = 0.3
    descriptions_per_class: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ("categories", "modalities", "samples_per_class", "dim", "descriptions_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("class_separation", "modality_offset", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class SyntheticBundle:
    """Paths of one generated bundle, all inside `root`."""

    root: Path
    records: Path
    kb_embeddings: Path
    prompts: Path
    labels: Path
    modality_names: tuple[str, ...]
    visual: dict[str, Path]
    pairs: dict[str, Path]
    pipeline_config: Path


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def category_name(g: int) -> str:
    return f"cat{g:03d}"


def modality_name(m: int) -> str:
    return f"mod{m}"


def sample_name(m: int, g: int, i: int) -> str:
    return f"{modality_name(m)}_{category_name(g)}_{i:04d}"


def class_directions(spec: SyntheticSpec) -> np.ndarray:
    """Per-class anchor points, scaled by the class separation."""
    rng = _rng(spec.seed, _STAGE_CENTERS)
    raw = rng.standard_normal((spec.categories, spec.dim))
    units = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return spec.class_separation * units


def modality_offsets(spec: SyntheticSpec) -> np.ndarray:
    """One fixed offset vector per modality, of norm `modality_offset`."""
    out = np.zeros((spec.modalities, spec.dim))
    if spec.modality_offset == 0:
        return out
    for m in range(spec.modalities):
        rng = _rng(spec.seed, _STAGE_MODALITY_OFFSET, m)
        out[m] = spec.modality_offset * _unit(rng.standard_normal(spec.dim))
    return out


def generate_synthetic(spec: SyntheticSpec, out_dir) -> SyntheticBundle:
    """Write a complete bundle: KB files, prompts, per-modality data, labels."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    centers = class_directions(spec)
    offsets = modality_offsets(spec)

    records: list[KnowledgeRecord] = []
    kb_rows: list[np.ndarray] = []

    # Category-level descriptions: class direction plus isotropic noise.
    for g in range(spec.categories):
        rng = _rng(spec.seed, _STAGE_CATEGORY_DESCRIPTIONS, g)
        noise = rng.standard_normal((spec.descriptions_per_class, spec.dim))
        block = centers[g] + spec.noise_sigma * noise
        for i in range(spec.descriptions_per_class):
            records.append(
                KnowledgeRecord(
                    id=f"desc_{category_name(g)}_{i:04d}",
                    category=category_name(g),
                    description=f"synthetic category description {i} for {category_name(g)}",
                    source=Source.LLM_CATEGORY,
                    generator="synthetic",
                )
            )
            kb_rows.append(block[i])

    # Per-sample visual embeddings and their paired descriptions.
    visual_paths: dict[str, Path] = {}
    pair_paths: dict[str, Path] = {}
    labels: list[tuple[str, str]] = []
    modality_names = tuple(modality_name(m) for m in range(spec.modalities))
    for m in range(spec.modalities):
        sample_vectors = []
        sample_ids = []
        for g in range(spec.categories):
            rng_v = _rng(spec.seed, _STAGE_MODALITY_SAMPLES, m, g)
            rng_t = _rng(spec.seed, _STAGE_PAIRED_DESCRIPTIONS, m, g)
            noise_v = rng_v.standard_normal((spec.samples_per_class, spec.dim))
            noise_t = rng_t.standard_normal((spec.samples_per_class, spec.dim))
            for i in range(spec.samples_per_class):
                sid = sample_name(m, g, i)
                sample_ids.append(sid)
                sample_vectors.append(centers[g] + offsets[m] + spec.noise_sigma * noise_v[i])
                records.append(
                    KnowledgeRecord(
                        id=sid,
                        category=category_name(g),
                        description=f"synthetic paired description for {sid}",
                        source=Source.MLLM_DATA,
                        generator="synthetic",
                    )
                )
                kb_rows.append(centers[g] + spec.noise_sigma * noise_t[i])
                labels.append((sid, category_name(g)))

        name = modality_names[m]
        visual_paths[name] = root / f"{name}.ubem"
        pair_paths[name] = root / f"{name}_pairs.jsonl"
        write_ubem(
            visual_paths[name],
            EmbeddingMatrix(np.stack(sample_vectors).astype(np.float32), sample_ids),
        )
        pair_lines = [
            json.dumps({"sample_id": sid, "visual_row": i})
            for i, sid in enumerate(sample_ids)
        ]
        atomic_write_text(pair_paths[name], "\n".join(pair_lines) + "\n")

    records_path = root / "records.jsonl"
    kb_embeddings_path = root / "kb_embeddings.ubem"
    save_records(records_path, records)
    write_ubem(
        kb_embeddings_path,
        EmbeddingMatrix(np.stack(kb_rows).astype(np.float32), [r.id for r in records]),
    )

    prompts_path = root / "prompts.ubem"
    prompt_vectors = np.stack([_unit(centers[g]) for g in range(spec.categories)])
    write_ubem(
        prompts_path,
        EmbeddingMatrix(
            prompt_vectors.astype(np.float32),
            [category_name(g) for g in range(spec.categories)],
        ),
    )

    labels_path = root / "labels.jsonl"
    label_lines = [
        json.dumps({"id": sid, "category": cat}) for sid, cat in labels
    ]
    atomic_write_text(labels_path, "\n".join(label_lines) + "\n")

    config_path = root / "pipeline_config.json"
    # per-category candidate pool: category descriptions plus paired ones
    pool = spec.descriptions_per_class + spec.modalities * spec.samples_per_class
    config = {
        "records": records_path.name,
        "embeddings": kb_embeddings_path.name,
        "prompts": prompts_path.name,
        "labels": labels_path.name,
        "modalities": {
            name: {"visual": visual_paths[name].name, "pairs": pair_paths[name].name}
            for name in modality_names
        },
        "k": min(50, pool),
        "retrieval_ks": [1, 5, 10, 20],
        "train": {
            "temperature": 0.07,
            "learning_rate": 0.01,
            "batch_size": 32,
            "epochs": 15,
            "seed": spec.seed,
            "optimizer": "adam",
            "symmetric_loss": False,
        },
    }
    atomic_write_text(config_path, fixed_json(config))

    bundle_manifest = {
        "spec": asdict(spec),
        "files": {
            "records": records_path.name,
            "kb_embeddings": kb_embeddings_path.name,
            "prompts": prompts_path.name,
            "labels": labels_path.name,
            "pipeline_config": config_path.name,
            "modalities": {
                name: {"visual": visual_paths[name].name, "pairs": pair_paths[name].name}
                for name in modality_names
            },
        },
    }
    atomic_write_text(root / "bundle.json", fixed_json(bundle_manifest))

    return SyntheticBundle(
        root=root,
        records=records_path,
        kb_embeddings=kb_embeddings_path,
        prompts=prompts_path,
        labels=labels_path,
        modality_names=modality_names,
        visual=visual_paths,
        pairs=pair_paths,
        pipeline_config=config_path,
    )
