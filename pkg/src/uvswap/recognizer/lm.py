"""Phone n-gram language model with Witten-Bell or add-k smoothing.

Sentences are padded with begin/end markers; the end marker is a
predicted token, so every conditional distribution sums to one over
vocabulary + end marker.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from ..errors import UvswapError

BOS = "<s>"
EOS = "</s>"

WITTEN_BELL = "witten-bell"
ADD_K = "add-k"


class EmptyCorpus(UvswapError):
    code = "empty_corpus"


@dataclass
class PhoneLM:
    order: int
    vocab: tuple[str, ...]  # phones only; EOS is implicit
    smoothing: str = WITTEN_BELL
    add_k: float = 0.5
    counts: dict = field(default_factory=dict)  # history tuple -> {word: count}

    def __post_init__(self):
        if self.smoothing not in (WITTEN_BELL, ADD_K):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        self._totals = {h: sum(c.values()) for h, c in self.counts.items()}
        self._types = {h: len(c) for h, c in self.counts.items()}

    @property
    def n_outcomes(self) -> int:
        return len(self.vocab) + 1  # phones + EOS

    def prob(self, word: str, history: tuple[str, ...] = ()) -> float:
        h = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        return self._prob(h, word)

    def logprob(self, word: str, history: tuple[str, ...] = ()) -> float:
        return math.log(self.prob(word, history))

    def _prob(self, h: tuple, word: str) -> float:
        c_h = self._totals.get(h, 0)
        c_hw = self.counts.get(h, {}).get(word, 0)
        if self.smoothing == ADD_K:
            k = self.add_k
            return (c_hw + k) / (c_h + k * self.n_outcomes)
        # Witten-Bell, backing off to the uniform distribution below unigrams
        backoff = 1.0 / self.n_outcomes if not h else self._prob(h[1:], word)
        t_h = self._types.get(h, 0)
        if c_h == 0:
            return backoff
        return (c_hw + t_h * backoff) / (c_h + t_h)

    def sentence_logprob(self, phones: list[str]) -> float:
        tokens = [BOS] * (self.order - 1) + list(phones) + [EOS]
        total = 0.0
        for i in range(self.order - 1, len(tokens)):
            total += self.logprob(tokens[i], tuple(tokens[max(0, i - self.order + 1):i]))
        return total

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "vocab": list(self.vocab),
            "smoothing": self.smoothing,
            "add_k": self.add_k,
            "counts": {" ".join(h): dict(c) for h, c in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhoneLM":
        counts = {
            tuple(h.split(" ")) if h else (): Counter(c)
            for h, c in doc["counts"].items()
        }
        return cls(int(doc["order"]), tuple(doc["vocab"]), doc["smoothing"],
                   float(doc["add_k"]), counts)


def train_lm(transcriptions: list[list[str]], order: int = 2,
             smoothing: str = WITTEN_BELL, add_k: float = 0.5) -> PhoneLM:
    """Count n-grams of all orders up to ``order`` over padded sentences."""
    sentences = [s for s in transcriptions if s]
    if not sentences:
        raise EmptyCorpus("no transcriptions to train on")
    counts: dict[tuple, Counter] = defaultdict(Counter)
    vocab = set()
    for sent in sentences:
        vocab.update(sent)
        tokens = [BOS] * (order - 1) + list(sent) + [EOS]
        for i in range(order - 1, len(tokens)):
            word = tokens[i]
            for length in range(order):
                counts[tuple(tokens[i - length:i])][word] += 1
    return PhoneLM(order, tuple(sorted(vocab)), smoothing, add_k, dict(counts))
