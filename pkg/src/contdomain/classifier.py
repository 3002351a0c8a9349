"""Two-layer head: SELU hidden layer, then per-domain cosine (or dot) scores."""

from __future__ import annotations

from typing import List

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .personalization import ExpandableTable

COSINE = "cosine"
LINEAR = "linear"
MODES = (COSINE, LINEAR)


class HiddenLayer:
    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.weight = Tensor(rng.uniform(-0.1, 0.1, size=(d_in, d_hidden)), "hidden.weight", True)
        self.bias = Tensor(rng.uniform(-0.1, 0.1, size=(d_hidden,)), "hidden.bias", True)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


def forward_hidden(h_u: Tensor, summary: Tensor, layer: HiddenLayer) -> Tensor:
    """SELU(concat(h_u, summary) W + b) for (B, d) inputs."""
    x = ad.concat([h_u, summary], axis=-1)
    if x.shape[-1] != layer.weight.shape[0]:
        raise ValueError(f"forward_hidden: input width {x.shape[-1]} but layer expects "
                         f"{layer.weight.shape[0]}")
    return ad.selu(ad.add(ad.matmul(x, layer.weight), layer.bias))


class PredictionLayer:
    """Rows w_i of the output layer; no bias so cosine scores stay in [-1, 1]."""

    def __init__(self, n_domains: int, d_hidden: int, rng: np.random.Generator,
                 mode: str = COSINE):
        if mode not in MODES:
            raise ValueError(f"unknown prediction mode {mode!r}")
        self.mode = mode
        self.table = ExpandableTable("prediction", rng.uniform(-0.1, 0.1, (n_domains, d_hidden)))

    @property
    def n_domains(self) -> int:
        return self.table.n_rows

    def parameters(self) -> List[Tensor]:
        return self.table.parameters()


def predict_scores(h: Tensor, layer: PredictionLayer) -> Tensor:
    """(B, d_h) hidden vectors -> (B, k) scores."""
    weights = layer.table.tensor()
    if layer.mode == COSINE:
        return ad.cosine_matrix(h, weights)
    return ad.matmul(h, ad.transpose(weights))


def expand_prediction_row(layer: PredictionLayer, rng: np.random.Generator,
                          freeze_existing: bool = True) -> PredictionLayer:
    layer.table.expand(rng, freeze_existing=freeze_existing)
    return layer


def argmax_predict(scores) -> np.ndarray:
    """Index of the max score per row; numpy's argmax already takes the lowest index on ties."""
    s = np.asarray(scores.value if isinstance(scores, Tensor) else scores)
    if s.size == 0:
        raise ValueError("argmax_predict: empty scores")
    return np.argmax(s, axis=-1)
