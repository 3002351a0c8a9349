"""Word embeddings + single-layer bidirectional LSTM utterance encoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

UNK = "<unk>"


@dataclass
class Vocabulary:
    """Dense token index with a reserved unknown-word slot at index 0."""

    index: Dict[str, int] = field(default_factory=lambda: {UNK: 0})

    @classmethod
    def build(cls, utterances: Iterable[Sequence[str]]) -> "Vocabulary":
        vocab = cls()
        for tokens in utterances:
            for tok in tokens:
                if tok not in vocab.index:
                    vocab.index[tok] = len(vocab.index)
        return vocab

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        if not tokens or tokens[0] != UNK:
            raise ValueError("vocabulary token list must start with the UNK token")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        return cls({tok: i for i, tok in enumerate(tokens)})

    @property
    def unk_index(self) -> int:
        return self.index[UNK]

    def __len__(self) -> int:
        return len(self.index)

    def tokens(self) -> List[str]:
        return sorted(self.index, key=self.index.__getitem__)

    def lookup(self, utterance: Sequence[str]) -> List[int]:
        """Map tokens to indices; out-of-vocabulary tokens become UNK."""
        if len(utterance) == 0:
            raise ValueError("cannot encode an empty utterance")
        unk = self.unk_index
        return [self.index.get(tok, unk) for tok in utterance]


tokenize_and_lookup = Vocabulary.lookup


def _uniform(rng: np.random.Generator, shape, scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


class LstmDirection:
    """Weights for one LSTM direction. Gate column order is i, f, o, g."""

    def __init__(self, prefix: str, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.d_hidden = d_hidden
        self.w_in = Tensor(_uniform(rng, (d_in, 4 * d_hidden)), f"{prefix}.w_in", True)
        self.w_rec = Tensor(_uniform(rng, (d_hidden, 4 * d_hidden)), f"{prefix}.w_rec", True)
        self.bias = Tensor(_uniform(rng, (4 * d_hidden,)), f"{prefix}.bias", True)

    def parameters(self) -> List[Tensor]:
        return [self.w_in, self.w_rec, self.bias]

    def run(self, inputs: List[Tensor], mask: np.ndarray) -> Tensor:
        """Final hidden state after consuming ``inputs`` (one (B, d_in) per step).

        ``mask[:, t]`` is 0 past a sequence's end, where the state is carried.
        """
        batch = mask.shape[0]
        d = self.d_hidden
        h = Tensor(np.zeros((batch, d)))
        c = Tensor(np.zeros((batch, d)))
        for t, x in enumerate(inputs):
            z = ad.add(ad.add(ad.matmul(x, self.w_in), ad.matmul(h, self.w_rec)), self.bias)
            i = ad.sigmoid(ad.slice_cols(z, 0, d))
            f = ad.sigmoid(ad.slice_cols(z, d, 2 * d))
            o = ad.sigmoid(ad.slice_cols(z, 2 * d, 3 * d))
            g = ad.tanh(ad.slice_cols(z, 3 * d, 4 * d))
            c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
            h_new = ad.mul(o, ad.tanh(c_new))
            m = mask[:, t:t + 1]
            if m.all():
                h, c = h_new, c_new
            else:
                keep = Tensor(m)
                h = ad.add(h, ad.mul(keep, ad.sub(h_new, h)))
                c = ad.add(c, ad.mul(keep, ad.sub(c_new, c)))
        return h


class Encoder:
    """phi: token indices -> R^{d_u}, concatenating final forward/backward states."""

    def __init__(self, vocab_size: int, d_word: int = 16, d_hidden: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab_size = vocab_size
        self.d_word = d_word
        self.d_hidden = d_hidden
        self.embedding = Tensor(_uniform(rng, (vocab_size, d_word)), "encoder.embedding", True)
        self.forward_lstm = LstmDirection("encoder.fwd", d_word, d_hidden, rng)
        self.backward_lstm = LstmDirection("encoder.bwd", d_word, d_hidden, rng)

    @property
    def d_out(self) -> int:
        return 2 * self.d_hidden

    def parameters(self) -> List[Tensor]:
        return [self.embedding, *self.forward_lstm.parameters(), *self.backward_lstm.parameters()]

    def encode_batch(self, batch: Sequence[Sequence[int]]) -> Tensor:
        """Encode a list of index sequences into a (B, d_u) tensor."""
        if len(batch) == 0:
            raise ValueError("encode_batch: empty batch")
        lengths = np.array([len(seq) for seq in batch])
        if lengths.min() < 1:
            raise ValueError("encode_batch: empty utterance in batch")
        width = int(lengths.max())
        fwd = np.zeros((len(batch), width), dtype=np.int64)
        bwd = np.zeros((len(batch), width), dtype=np.int64)
        for r, seq in enumerate(batch):
            seq = np.asarray(seq, dtype=np.int64)
            if seq.min() < 0 or seq.max() >= self.vocab_size:
                raise IndexError(f"token index out of range for vocabulary of size {self.vocab_size}")
            fwd[r, :len(seq)] = seq
            bwd[r, :len(seq)] = seq[::-1]
        mask = (np.arange(width)[None, :] < lengths[:, None]).astype(np.float64)

        fwd_inputs = [ad.take_rows(self.embedding, fwd[:, t]) for t in range(width)]
        bwd_inputs = [ad.take_rows(self.embedding, bwd[:, t]) for t in range(width)]
        h_f = self.forward_lstm.run(fwd_inputs, mask)
        h_b = self.backward_lstm.run(bwd_inputs, mask)
        return ad.concat([h_f, h_b], axis=1)

    def encode_utterance(self, indices: Sequence[int]) -> np.ndarray:
        return self.encode_batch([indices]).value[0]

    def encode_all(self, batch: Sequence[Sequence[int]], chunk: int = 512) -> np.ndarray:
        """Tape-free encoding of many utterances, returned as a plain array."""
        with ad.no_record():
            parts = [self.encode_batch(batch[i:i + chunk]).value
                     for i in range(0, len(batch), chunk)]
        return np.concatenate(parts, axis=0) if parts else np.zeros((0, self.d_out))
