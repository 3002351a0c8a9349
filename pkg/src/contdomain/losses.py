"""Hinge classification loss, domain-embedding regularizer, and their sum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class HingeThresholds:
    pos: float = 0.5
    neg: float = 0.3

    def __post_init__(self):
        if not 0 < self.pos <= 1:
            raise ValueError(f"positive threshold must be in (0, 1], got {self.pos}")
        if not 0 <= self.neg < 1:
            raise ValueError(f"negative threshold must be in [0, 1), got {self.neg}")
        if self.neg >= self.pos:
            raise ValueError(f"negative threshold {self.neg} must be below positive {self.pos}")


@dataclass(frozen=True)
class DerConfig:
    margin: float = 0.1
    lambda_dsl: float = 5.0
    lambda_norm: float = 0.4

    def __post_init__(self):
        if self.lambda_dsl < 0 or self.lambda_norm < 0:
            raise ValueError("regularizer weights must be nonnegative")


def one_hot(labels: Sequence[int], n: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise IndexError(f"label outside [0, {n})")
    y = np.zeros((labels.size, n))
    y[np.arange(labels.size), labels] = 1.0
    return y


def _as_batch(scores: Tensor) -> Tensor:
    return scores if scores.value.ndim == 2 else ad.reshape(scores, (1, -1))


def hinge_loss(scores: Tensor, labels, th: HingeThresholds) -> Tensor:
    """Hinge loss summed over domains, averaged over the batch.

    ``scores`` is (B, n) with ``labels`` of length B, or a single (n,) vector
    with an int label.
    """
    o = _as_batch(scores)
    y = one_hot(labels, o.shape[1])
    if y.shape[0] != o.shape[0]:
        raise ValueError(f"hinge_loss: {o.shape[0]} score rows but {y.shape[0]} labels")
    pos = ad.mul(Tensor(y), ad.maximum(ad.sub(Tensor(th.pos), o), 0.0))
    neg = ad.mul(Tensor(1.0 - y), ad.maximum(ad.sub(o, Tensor(th.neg)), 0.0))
    return ad.scale(ad.sum(ad.add(pos, neg)), 1.0 / o.shape[0])


def hinge_kink_distance(scores: np.ndarray, labels, th: HingeThresholds) -> float:
    """Smallest distance of any hinge argument from its kink (for gradient checks)."""
    o = np.atleast_2d(scores)
    y = one_hot(labels, o.shape[1]).astype(bool)
    return float(min(np.abs(th.pos - o[y]).min(initial=np.inf),
                     np.abs(o[~y] - th.neg).min(initial=np.inf)))


def log_sigmoid_loss(scores: Tensor, labels) -> Tensor:
    """Per-domain binary log-sigmoid loss on dot-product scores, batch mean."""
    o = _as_batch(scores)
    y = one_hot(labels, o.shape[1])
    # -[y log s(o) + (1-y) log(1-s(o))] = softplus(o) - y*o
    per = ad.sub(ad.softplus(o), ad.mul(Tensor(y), o))
    return ad.scale(ad.sum(per), 1.0 / o.shape[0])


def domain_mean_representation(encodings: np.ndarray) -> np.ndarray:
    """Average utterance vector of one domain, from its (n, d_u) encodings."""
    encodings = np.asarray(encodings, dtype=np.float64)
    if encodings.ndim != 2 or encodings.shape[0] == 0:
        raise ValueError("domain_mean_representation: need a nonempty (n, d) array")
    return encodings.mean(axis=0)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / max(np.linalg.norm(a) * np.linalg.norm(b), ad.COS_EPS))


def similarity_weights(new_mean: np.ndarray, known_means: Sequence[np.ndarray],
                       lambda_dsl: float) -> np.ndarray:
    """lambda_i = lambda_dsl * max(cos(mean_i, new_mean), 0)."""
    return np.array([lambda_dsl * max(_cos(m, new_mean), 0.0) for m in known_means])


def der_loss(t_new: Tensor, known: np.ndarray, lambdas: np.ndarray, cfg: DerConfig) -> Tensor:
    """Domain similarity hinge against frozen rows plus an L2 penalty on ``t_new``.

    ``t_new`` is the trainable embedding, (d_s,) or (1, d_s); ``known`` is the
    (k, d_s) frozen table, ``lambdas`` its k weights.
    """
    row = _as_batch(t_new)
    known = np.atleast_2d(np.asarray(known, dtype=np.float64))
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.shape != (known.shape[0],):
        raise ValueError(f"der_loss: {lambdas.size} weights for {known.shape[0]} known domains")
    norm_term = ad.scale(ad.sum(ad.mul(row, row)), cfg.lambda_norm / 2.0)
    if known.shape[0] == 0:
        return norm_term
    cos = ad.cosine_matrix(row, Tensor(known))
    sim = ad.sum(ad.mul(Tensor(lambdas[None, :]), ad.maximum(ad.sub(Tensor(cfg.margin), cos), 0.0)))
    return ad.add(sim, norm_term)


def total_loss(scores: Tensor, labels, th: HingeThresholds,
               der_term: Optional[Tensor] = None) -> Tensor:
    """Batch-mean hinge loss plus (once per step) the regularizer, when present."""
    loss = hinge_loss(scores, labels, th)
    return loss if der_term is None else ad.add(loss, der_term)
