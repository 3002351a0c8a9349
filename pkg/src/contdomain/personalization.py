"""Domain-embedding table and attention summary over a user's enabled domains."""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ExpandableTable:
    """Row table whose leading rows can be frozen while new rows are appended.

    Internally the table is a list of row blocks: after an expansion all old
    rows live in one frozen block and the new row is its own trainable block,
    so the optimizer can skip the frozen block wholesale.
    """

    def __init__(self, name: str, values: np.ndarray, trainable: bool = True):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"{name}: table must be 2-D, got shape {values.shape}")
        self.name = name
        self.blocks: List[Tensor] = [Tensor(values.copy(), f"{name}.block0", True)]
        self.block_trainable: List[bool] = [trainable]
        self.frozen_prefix = 0 if trainable else values.shape[0]

    @property
    def n_rows(self) -> int:
        return sum(b.shape[0] for b in self.blocks)

    @property
    def width(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def value(self) -> np.ndarray:
        return np.concatenate([b.value for b in self.blocks], axis=0)

    def row(self, i: int) -> np.ndarray:
        return self.value[i]

    def tensor(self) -> Tensor:
        if len(self.blocks) == 1:
            return self.blocks[0]
        return ad.concat(self.blocks, axis=0)

    def parameters(self) -> List[Tensor]:
        return list(self.blocks)

    def trainable_parameters(self) -> List[Tensor]:
        return [b for b, t in zip(self.blocks, self.block_trainable) if t]

    def freeze(self) -> None:
        self.block_trainable = [False] * len(self.blocks)
        self.frozen_prefix = self.n_rows

    def unfreeze(self) -> None:
        self.block_trainable = [True] * len(self.blocks)
        self.frozen_prefix = 0

    def expand(self, rng: np.random.Generator, freeze_existing: bool = True,
               init_scale: float = 0.1) -> None:
        """Append one row initialized uniform in [-init_scale, init_scale].

        With ``freeze_existing`` (the normal continual path) every existing
        row becomes immutable; otherwise existing rows keep their status.
        """
        k = self.n_rows
        old = np.concatenate([b.value for b in self.blocks], axis=0)
        old_trainable = not freeze_existing and any(self.block_trainable)
        new_row = rng.uniform(-init_scale, init_scale, size=(1, self.width))
        self.blocks = [Tensor(old, f"{self.name}.block0", True),
                       Tensor(new_row, f"{self.name}.row{k}", True)]
        self.block_trainable = [old_trainable, True]
        if freeze_existing:
            self.frozen_prefix = k

    def set_rows(self, values: np.ndarray, frozen_prefix: int) -> None:
        """Restore from a checkpoint: frozen prefix block + one block per trainable row."""
        values = np.asarray(values, dtype=np.float64)
        blocks, trainable = [], []
        if frozen_prefix > 0:
            blocks.append(Tensor(values[:frozen_prefix].copy(), f"{self.name}.block0", True))
            trainable.append(False)
        rest = values[frozen_prefix:]
        if len(rest):
            label = f"{self.name}.block0" if frozen_prefix == 0 else f"{self.name}.row{frozen_prefix}"
            blocks.append(Tensor(rest.copy(), label, True))
            trainable.append(True)
        self.blocks, self.block_trainable = blocks, trainable
        self.frozen_prefix = frozen_prefix


def enabled_mask(enabled: Sequence[Sequence[int]], n_domains: int) -> np.ndarray:
    """0/1 matrix (B, n_domains) marking each sample's enabled domains."""
    mask = np.zeros((len(enabled), n_domains))
    for r, ids in enumerate(enabled):
        for i in ids:
            if not 0 <= i < n_domains:
                raise IndexError(f"enabled domain id {i} outside catalog of {n_domains}")
            mask[r, i] = 1.0
    return mask


def summarize_enabled(h_u: Tensor, mask: np.ndarray, table: Tensor,
                      projection: Optional[Tensor] = None) -> Tensor:
    """Attention-weighted sum of enabled domain embeddings.

    ``h_u`` is (B, d_u); ``mask`` is (B, k); ``table`` is (k, d_s). Scores are
    dot products of the utterance vector (projected to d_s when a projection
    is given) with each row. Rows with nothing enabled summarize to zero.
    """
    if mask.shape[1] != table.shape[0]:
        raise ValueError(f"summarize_enabled: mask covers {mask.shape[1]} domains, "
                         f"table has {table.shape[0]}")
    query = h_u if projection is None else ad.matmul(h_u, projection)
    scores = ad.matmul(query, ad.transpose(table))
    weights = ad.softmax_weights(scores, mask)
    return ad.matmul(weights, table)
