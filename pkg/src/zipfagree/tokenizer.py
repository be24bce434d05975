"""Word-level token vocabulary.

Ids are stable given a lexicon: specials first (PAD=0, BOS=1, EOS=2), then
the function words, then each lexicon line's four surface forms in file
order.  Every sentence is encoded as BOS + words + EOS; batches are
right-padded with PAD.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .lexicon import Lexicon

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
SPECIALS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN)


class UnknownWord(KeyError):
    pass


class UnknownId(KeyError):
    pass


class TokenVocab:
    PAD = 0
    BOS = 1
    EOS = 2

    def __init__(self, lexicon: Lexicon):
        self.words: list[str] = list(SPECIALS) + lexicon.all_words
        self.ids: dict[str, int] = {w: i for i, w in enumerate(self.words)}
        assert len(self.ids) == len(self.words), "vocabulary not bijective"

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """BOS + word ids + EOS; raises UnknownWord on OOV input."""
        ids = [self.BOS]
        for tok in tokens:
            if tok not in self.ids:
                raise UnknownWord(tok)
            ids.append(self.ids[tok])
        ids.append(self.EOS)
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Inverse of encode; strips PAD/BOS/EOS, raises UnknownId."""
        words = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.words):
                raise UnknownId(i)
            if i in (self.PAD, self.BOS, self.EOS):
                continue
            words.append(self.words[i])
        return words

    def encode_batch(self, sentences: Sequence[Sequence[str]]) -> np.ndarray:
        """Encode and right-pad to the batch max length; shape (B, L)."""
        encoded = [self.encode(toks) for toks in sentences]
        max_len = max(len(e) for e in encoded)
        batch = np.full((len(encoded), max_len), self.PAD, dtype=np.int64)
        for row, ids in zip(batch, encoded):
            row[:len(ids)] = ids
        return batch
