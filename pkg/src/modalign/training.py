"""Per-modality linear adapters trained against paired text embeddings.

The backbone encoders that produced the input embeddings stay frozen; the
only trainable parameters are one affine map per modality. Adapted rows are
re-normalized before the contrastive loss so training optimizes the same
cosine geometry used at inference. Training is single-threaded and, for a
fixed seed, bit-reproducible.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .contrastive import info_nce_loss
from .errors import (
    DegenerateBatch,
    DimensionMismatch,
    NonFiniteParameter,
    UnknownSample,
    ZeroVector,
)
from .kb import KnowledgeBase
from .optim import SGD, Adam
from .serialize import atomic_write_bytes
from .ubem import read_ubem_stream, write_ubem_stream
from .vectors import ZERO_NORM, EmbeddingMatrix, as_vectors, normalize_rows


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    optimizer: OptimizerKind = OptimizerKind.ADAM
    symmetric_loss: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")


@dataclass
class LinearAdapter:
    """Affine map from a frozen backbone space into the shared text space."""

    weight: np.ndarray  # (dim_out, dim_in)
    bias: np.ndarray  # (dim_out,)
    modality: str = ""

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ValueError(
                f"bias has {self.bias.shape[0]} entries for {self.weight.shape[0]} output dims"
            )

    @property
    def dim_in(self) -> int:
        return self.weight.shape[1]

    @property
    def dim_out(self) -> int:
        return self.weight.shape[0]

    def require_finite(self) -> None:
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise NonFiniteParameter(
                f"adapter {self.modality!r} has NaN/Inf parameters"
            )

    def apply(self, visual) -> EmbeddingMatrix:
        """Map raw embeddings through the adapter and unit-normalize rows."""
        self.require_finite()
        v = np.asarray(as_vectors(visual), dtype=np.float64)
        if v.shape[1] != self.dim_in:
            raise DimensionMismatch(
                f"input dim {v.shape[1]} does not match adapter dim_in {self.dim_in}"
            )
        mapped = v @ self.weight.T + self.bias
        norms = np.linalg.norm(mapped, axis=1)
        bad = np.flatnonzero(norms < ZERO_NORM)
        if bad.size:
            raise ZeroVector(f"adapted row {int(bad[0])} collapsed to norm 0")
        labels = visual.labels if isinstance(visual, EmbeddingMatrix) else None
        return EmbeddingMatrix(mapped / norms[:, None], labels)

    def copy(self) -> "LinearAdapter":
        return LinearAdapter(self.weight.copy(), self.bias.copy(), self.modality)


@dataclass(frozen=True)
class TrainingPair:
    """One sample's raw embedding plus the KB row of its paired description."""

    sample_id: str
    visual_embedding: np.ndarray
    text_row: int


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    passed: bool


def default_adapter(dim_in: int, dim_out: int, seed: int, modality: str = "") -> LinearAdapter:
    """Identity for square maps, otherwise a seeded scaled-Gaussian init."""
    if dim_in == dim_out:
        weight = np.eye(dim_out)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xAD,)))
        weight = rng.standard_normal((dim_out, dim_in)) / np.sqrt(dim_in)
    return LinearAdapter(weight, np.zeros(dim_out), modality)


def make_pairs(
    sample_ids: list[str], visual: EmbeddingMatrix, kb: KnowledgeBase
) -> list[TrainingPair]:
    """Resolve sample ids to paired description rows via the KB pair index."""
    if len(sample_ids) != visual.rows:
        raise ValueError(f"{len(sample_ids)} sample ids for {visual.rows} rows")
    pairs = []
    for i, sample_id in enumerate(sample_ids):
        row = kb.pair_index.get(sample_id)
        if row is None:
            raise UnknownSample(f"no paired description for sample {sample_id!r}")
        pairs.append(TrainingPair(sample_id, visual.vectors[i], row))
    return pairs


def _resolve_batch_arrays(
    pairs: list[TrainingPair], kb: KnowledgeBase
) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise ValueError("pairs must be non-empty")
    dims = {np.asarray(p.visual_embedding).shape for p in pairs}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DimensionMismatch(f"visual embeddings disagree on shape: {sorted(dims)}")
    for p in pairs:
        if not 0 <= p.text_row < kb.size:
            raise UnknownSample(f"text row {p.text_row} out of range for sample {p.sample_id!r}")
        indexed = kb.pair_index.get(p.sample_id)
        if indexed != p.text_row:
            raise UnknownSample(
                f"sample {p.sample_id!r} does not pair with row {p.text_row}"
            )
    visual = np.stack([np.asarray(p.visual_embedding, dtype=np.float64) for p in pairs])
    texts = normalize_rows(kb.embeddings.vectors[[p.text_row for p in pairs]])
    return visual, texts


def _forward_loss(W, b, visual, texts, temperature, symmetric, dtype=np.float64):
    """Forward loss only, in an arbitrary float dtype.

    The finite-difference oracle runs this in extended precision; differences
    of O(1e-10) between two O(1) losses would otherwise drown in float64
    rounding when gradients are tiny (very large temperatures).
    """
    W = np.asarray(W, dtype=dtype)
    b = np.asarray(b, dtype=dtype)
    visual = np.asarray(visual, dtype=dtype)
    texts = np.asarray(texts, dtype=dtype)
    mapped = visual @ W.T + b
    norms = np.sqrt((mapped * mapped).sum(axis=1))
    if (norms < ZERO_NORM).any():
        raise ZeroVector("an adapted row collapsed to norm 0 during training")
    unit = mapped / norms[:, None]
    logits = (unit @ texts.T) / dtype(temperature)
    diag = np.arange(logits.shape[0])

    def mean_cross_entropy(l):
        shifted = l - l.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        return (lse - shifted[diag, diag]).mean()

    loss = mean_cross_entropy(logits)
    if symmetric:
        loss = (loss + mean_cross_entropy(logits.T)) / dtype(2.0)
    return loss


def _forward_backward(W, b, visual, texts, temperature, symmetric):
    """Loss plus analytic gradients w.r.t. the affine parameters.

    Chains the contrastive gradient through row normalization:
    d(a/|a|)/da applied to g is (g - (g.a_hat) a_hat) / |a|.
    """
    mapped = visual @ W.T + b
    norms = np.linalg.norm(mapped, axis=1)
    if (norms < ZERO_NORM).any():
        raise ZeroVector("an adapted row collapsed to norm 0 during training")
    unit = mapped / norms[:, None]
    loss, g_unit = info_nce_loss(unit, texts, temperature, symmetric)
    g_mapped = (g_unit - (g_unit * unit).sum(axis=1, keepdims=True) * unit) / norms[:, None]
    return loss, g_mapped.T @ visual, g_mapped.sum(axis=0)


def train(
    pairs: list[TrainingPair],
    kb: KnowledgeBase,
    config: TrainConfig,
    init: LinearAdapter | None = None,
    modality: str = "",
) -> tuple[LinearAdapter, list[float]]:
    """Fit one adapter by seeded mini-batch contrastive training.

    Returns the trained adapter and the per-epoch mean loss. Inputs are never
    mutated; the caller's `init` adapter, the visual embeddings, and the KB
    all come back untouched.
    """
    visual, texts = _resolve_batch_arrays(pairs, kb)
    if len({p.text_row for p in pairs}) < 2:
        raise DegenerateBatch("all pairs share one description row; no negatives exist")

    n, dim_in = visual.shape
    dim_out = kb.dim
    if init is not None:
        adapter = init.copy()
        adapter.require_finite()
        if adapter.dim_in != dim_in or adapter.dim_out != dim_out:
            raise DimensionMismatch(
                f"init adapter is {adapter.dim_out}x{adapter.dim_in}, "
                f"data needs {dim_out}x{dim_in}"
            )
    else:
        adapter = default_adapter(dim_in, dim_out, config.seed)
    adapter.modality = modality or adapter.modality

    params = [adapter.weight, adapter.bias]
    if config.optimizer == OptimizerKind.ADAM:
        optimizer = Adam(params, config.learning_rate)
    else:
        optimizer = SGD(params, config.learning_rate)

    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue  # a 1-sample tail has no negatives
            loss, grad_w, grad_b = _forward_backward(
                adapter.weight,
                adapter.bias,
                visual[idx],
                texts[idx],
                config.temperature,
                config.symmetric_loss,
            )
            optimizer.step([grad_w, grad_b])
            loss_sum += loss * idx.size
            seen += idx.size
        history.append(loss_sum / seen)
    return adapter, history


def gradient_check_arrays(
    adapter: LinearAdapter,
    visual,
    texts,
    config: TrainConfig,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator; the
    check passes when the worst entry stays under 1e-3.
    """
    adapter.require_finite()
    v = np.asarray(as_vectors(visual), dtype=np.float64)
    z = np.asarray(as_vectors(texts), dtype=np.float64)
    if v.shape[0] < 2:
        raise DegenerateBatch("gradient check needs a batch of >= 2 pairs")
    W = adapter.weight.copy()
    b = adapter.bias.copy()
    _, grad_w, grad_b = _forward_backward(
        W, b, v, z, config.temperature, config.symmetric_loss
    )

    def loss_at(Wp, bp):
        return _forward_loss(
            Wp, bp, v, z, config.temperature, config.symmetric_loss, dtype=np.longdouble
        )

    two_step = np.longdouble(2.0) * np.longdouble(step)
    max_rel = 0.0
    for analytic, param in ((grad_w, W), (grad_b, b)):
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            original = param[ix]
            param[ix] = original + step
            plus = loss_at(W, b)
            param[ix] = original - step
            minus = loss_at(W, b)
            param[ix] = original
            numeric = float((plus - minus) / two_step)
            a = float(analytic[ix])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return GradCheckReport(max_rel, max_rel < 1e-3)


def gradient_check(
    adapter: LinearAdapter,
    batch: list[TrainingPair],
    kb: KnowledgeBase,
    config: TrainConfig,
    step: float = 1e-5,
) -> GradCheckReport:
    """Gradient check over a batch of KB-resolved training pairs."""
    visual, texts = _resolve_batch_arrays(batch, kb)
    return gradient_check_arrays(adapter, visual, texts, config, step)


# --- persistence -----------------------------------------------------------

_CONFIG_KEYS = {
    "temperature": float,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "optimizer": str,
    "symmetric_loss": str,
}

_TRUE_WORDS = {"true", "yes", "1", "on"}
_FALSE_WORDS = {"false", "no", "0", "off"}


def parse_train_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse a key-value config ("key = value" lines, '#' comments)."""
    values: dict = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, value = line.partition(sep)
                break
        else:
            raise ValueError(f"line {line_number}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {line_number}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ValueError(f"line {line_number}: bad value for {key!r}: {value!r}") from None

    if "optimizer" in values:
        try:
            values["optimizer"] = OptimizerKind(values["optimizer"].lower())
        except ValueError:
            raise ValueError(f"optimizer must be one of {[o.value for o in OptimizerKind]}") from None
    if "symmetric_loss" in values:
        word = values["symmetric_loss"].lower()
        if word in _TRUE_WORDS:
            values["symmetric_loss"] = True
        elif word in _FALSE_WORDS:
            values["symmetric_loss"] = False
        else:
            raise ValueError(f"symmetric_loss must be a boolean, got {word!r}")
    return replace(base or TrainConfig(), **values)


def load_train_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_train_config(Path(path).read_text(encoding="utf-8"), base)


def train_config_from_dict(obj: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from parsed JSON (pipeline configs)."""
    values = dict(obj)
    if "optimizer" in values:
        values["optimizer"] = OptimizerKind(str(values["optimizer"]).lower())
    return replace(base or TrainConfig(), **values)


def save_adapter(path, adapter: LinearAdapter) -> None:
    """Adapter file: JSON header line + weight UBEM blob + 1-row bias blob."""
    adapter.require_finite()
    header = {
        "format": "linear-adapter",
        "version": 1,
        "modality": adapter.modality,
        "dim_in": adapter.dim_in,
        "dim_out": adapter.dim_out,
    }
    buf = io.BytesIO()
    buf.write(json.dumps(header, ensure_ascii=False).encode("utf-8"))
    buf.write(b"\n")
    write_ubem_stream(buf, EmbeddingMatrix(adapter.weight.astype(np.float32)))
    write_ubem_stream(buf, EmbeddingMatrix(adapter.bias.astype(np.float32)[None, :]))
    atomic_write_bytes(Path(path), buf.getvalue())


def load_adapter(path) -> LinearAdapter:
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as e:
            raise ValueError(f"bad adapter header: {e.msg}") from e
        if header.get("format") != "linear-adapter" or header.get("version") != 1:
            raise ValueError("not a version-1 adapter file")
        weight = read_ubem_stream(f).vectors
        bias = read_ubem_stream(f).vectors[0]
    if weight.shape != (header["dim_out"], header["dim_in"]) or bias.shape[0] != header["dim_out"]:
        raise ValueError("adapter blob shapes do not match header")
    return LinearAdapter(weight, bias, header.get("modality", ""))
