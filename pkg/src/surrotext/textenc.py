"""Trainable caption encoder: token embeddings, a bidirectional recurrent
pass, and a projection to a fixed-size caption embedding.

The encoder is trained jointly with the surrogate; there is no pretrained
checkpoint. The caption embedding concatenates the forward direction's
final state (frozen at each sequence's end by padding masks) with the
backward direction's state at the first position, then projects to the
output dimension.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import BiLSTM, Linear
from .tokenizer import PAD_ID, Vocabulary
from .validation import require


class TextEncoder:
    def __init__(self, rng: np.random.Generator, vocab_size: int, token_dim: int,
                 hidden: int, out_dim: int, name: str = "text"):
        self.vocab_size = vocab_size
        self.token_dim = token_dim
        self.hidden = hidden
        self.out_dim = out_dim
        bound = 1.0 / np.sqrt(token_dim)
        table = rng.uniform(-bound, bound, size=(vocab_size, token_dim))
        table[PAD_ID] = 0.0
        self.embedding = ad.parameter(table, name=f"{name}.embedding")
        self.rnn = BiLSTM(rng, token_dim, hidden, f"{name}.rnn")
        self.proj = Linear(rng, 2 * hidden, out_dim, f"{name}.proj")

    def encode_batch(self, sequences: Sequence[Sequence[int]]) -> Tensor:
        """Embed a batch of bracketed id sequences into (batch, out_dim)."""
        require(len(sequences) > 0, "empty batch of token sequences")
        lengths = [len(s) for s in sequences]
        require(min(lengths) >= 2, "sequences must contain at least CLS and EOS")
        batch = len(sequences)
        width = max(lengths)

        padded = np.full((batch, width), PAD_ID, dtype=np.intp)
        for i, seq in enumerate(sequences):
            padded[i, :len(seq)] = seq
        valid = np.arange(width)[None, :] < np.asarray(lengths)[:, None]

        steps, masks = [], []
        uniform = bool(valid.all())
        for t in range(width):
            steps.append(ad.embedding_gather(self.embedding, padded[:, t].tolist()))
            # mask tiled to state width: the engine broadcasts rows, not columns
            masks.append(ad.tensor(np.repeat(valid[:, t:t + 1], self.hidden,
                                             axis=1).astype(np.float64)))
        finals = self.rnn.finals(steps, masks=None if uniform else masks)
        return self.proj(finals)

    def params(self) -> dict[str, Tensor]:
        return {self.embedding.name: self.embedding,
                **self.rnn.params(), **self.proj.params()}


def encode_text(text: str, vocab: Vocabulary, encoder: TextEncoder) -> np.ndarray:
    """Single-caption embedding as a plain array (inference convenience)."""
    ids = vocab.encode(text)
    return encoder.encode_batch([ids]).data[0]
