"""Vector-quantization math and a deterministic factor-4 pooling codec.

No training happens here: stop-gradient terms of the commitment loss are
evaluated as plain values, so the same loss code can later serve a learned
encoder/decoder pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import binio
from .blocks import LocalBlock
from .errors import InvalidArgument

DEFAULT_CODE_DIM = 8
DEFAULT_CODEBOOK_SIZE = 512
DEFAULT_COMMITMENT_WEIGHT = 0.25
COMPRESSION_FACTOR = 4

CODEBOOK_MAGIC = "VQC1"


@dataclass
class Codebook:
    entries: np.ndarray  # (V, C_z) float64

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.size == 0:
            raise InvalidArgument("codebook needs at least one entry")
        self.entries = entries.reshape(len(entries), -1)
        if not np.isfinite(self.entries).all():
            raise InvalidArgument("codebook entries must be finite")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def random(cls, size=DEFAULT_CODEBOOK_SIZE, dim=DEFAULT_CODE_DIM, seed=0) -> "Codebook":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((size, dim)))


@dataclass
class LatentGrid:
    """Dense latent features at (K / 4)^3 cells, channels last."""

    values: np.ndarray  # (R, R, R, C_z) float64
    indices: np.ndarray | None = None  # (R, R, R) int32 code ids, if quantized

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise InvalidArgument("latent values must be (R, R, R, C)")
        r = self.values.shape[0]
        if self.values.shape[1] != r or self.values.shape[2] != r:
            raise InvalidArgument("latent grid must be cubic")

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[3]


def quantize(
    features: LatentGrid,
    codebook: Codebook,
    commitment_weight: float = DEFAULT_COMMITMENT_WEIGHT,
) -> tuple[np.ndarray, LatentGrid, float]:
    """Nearest-entry quantization plus the codebook/commitment loss value.

    Ties in the distance argmin resolve to the lower code index.
    """
    if features.channels != codebook.dim:
        raise InvalidArgument(
            f"feature dim {features.channels} != codebook dim {codebook.dim}"
        )
    flat = features.values.reshape(-1, codebook.dim)
    # Squared Euclidean distance expanded; the |f|^2 term is argmin-neutral.
    d = np.sum(codebook.entries**2, axis=1) - 2.0 * flat @ codebook.entries.T
    idx = np.argmin(d, axis=1)
    zq = codebook.entries[idx]

    diff_sq = np.mean((flat - zq) ** 2)
    codebook_term = diff_sq  # ||sg(E(x)) - z_q||^2 with sg as value copy
    commit_term = commitment_weight * diff_sq  # lambda_c ||E(x) - sg(z_q)||^2
    loss = float(codebook_term + commit_term)

    r = features.resolution
    out = LatentGrid(zq.reshape(features.values.shape), idx.reshape(r, r, r).astype(np.int32))
    return out.indices, out, loss


def state_ce_loss(logits: np.ndarray, target_state: np.ndarray) -> float:
    """Mean 3-way cross entropy; logits are (..., 3), targets in {0, 1, 2}."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target_state)
    if logits.shape[:-1] != target.shape or logits.shape[-1] != 3:
        raise InvalidArgument("logits must be target shape plus a 3-way axis")
    if not np.isfinite(logits).all():
        raise InvalidArgument("logits must be finite")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, target[..., None].astype(np.int64), axis=-1)
    return float(np.mean(lse - picked[..., 0]))


def sdf_l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidArgument("sdf grids must share one shape")
    return float(np.mean(np.abs(pred - target)))


def composite_loss(ce: float, quant: float, l1: float) -> float:
    return float(ce) + float(quant) + float(l1)


def pooling_encode(block: LocalBlock) -> LatentGrid:
    """Per-4^3-cell features: tau frequencies (3 channels) and mean sdf."""
    K = block.resolution
    f = COMPRESSION_FACTOR
    if K % f != 0:
        raise InvalidArgument(f"block resolution {K} not divisible by {f}")
    r = K // f
    cells_state = block.state.reshape(r, f, r, f, r, f)
    sdf = block.sdf if block.sdf is not None else np.zeros_like(block.state, dtype=np.float64)
    cells_sdf = sdf.reshape(r, f, r, f, r, f)

    values = np.empty((r, r, r, 4), dtype=np.float64)
    for tau in range(3):
        values[..., tau] = (cells_state == tau).mean(axis=(1, 3, 5))
    values[..., 3] = cells_sdf.mean(axis=(1, 3, 5))
    return LatentGrid(values)


def pooling_decode(latent: LatentGrid, frame, resolution: int | None = None) -> LocalBlock:
    """Nearest-neighbor upsample; cell state is the majority tau (ties to
    the lower state)."""
    if latent.channels != 4:
        raise InvalidArgument(f"pooling latent needs 4 channels, got {latent.channels}")
    f = COMPRESSION_FACTOR
    K = resolution if resolution is not None else latent.resolution * f
    if K != latent.resolution * f:
        raise InvalidArgument("resolution does not match latent grid")
    state_cells = np.argmax(latent.values[..., :3], axis=-1).astype(np.uint8)
    sdf_cells = latent.values[..., 3]
    state = state_cells.repeat(f, axis=0).repeat(f, axis=1).repeat(f, axis=2)
    sdf = sdf_cells.repeat(f, axis=0).repeat(f, axis=1).repeat(f, axis=2)
    return LocalBlock(frame, K, state, np.zeros_like(state, dtype=np.int32), sdf)


def save_codebook(codebook: Codebook, path: str) -> None:
    with open(path, "wb") as fh:
        binio.write_magic(fh, CODEBOOK_MAGIC)
        binio.write_u32(fh, codebook.size, codebook.dim)
        binio.write_f32(fh, codebook.entries.ravel())


def load_codebook(path: str) -> Codebook:
    with open(path, "rb") as fh:
        binio.read_magic(fh, CODEBOOK_MAGIC, path)
        size, dim = binio.read_u32(fh, 2)
        entries = binio.read_f32(fh, size * dim)
    return Codebook(entries.reshape(size, dim).astype(np.float64))
