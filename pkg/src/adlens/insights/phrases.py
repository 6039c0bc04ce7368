"""Noun-phrase candidates from tagged tokens.

The pattern is (ADJ|NOUN)*NOUN with length >= 2: within each maximal run of
adjective/noun tokens, the span from the run start to its last noun is
emitted. Words without a lexicon entry count as nouns, so unseen vocabulary
still forms phrases instead of being dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

NOUNISH = ("ADJ", "NOUN")


@dataclass(frozen=True)
class PhraseCandidate:
    span: tuple[int, int]  # token positions [start, end)
    text: str

    @property
    def length(self) -> int:
        return self.span[1] - self.span[0]


class Tagger:
    """Lexicon lookup with a NOUN default for unknown words."""

    def __init__(self, lexicon: dict, default: str = "NOUN"):
        self.lexicon = dict(lexicon)
        self.default = default

    @classmethod
    def from_dataset(cls, dataset) -> "Tagger":
        return cls({w: t for w, t in zip(dataset.vocab, dataset.vocab_tags)})

    def tag(self, word: str) -> str:
        return self.lexicon.get(word, self.default)

    def tag_all(self, words) -> list:
        return [self.tag(w) for w in words]


def extract_phrases(words, tags) -> list[PhraseCandidate]:
    """Maximal adjective/noun spans ending in a noun, two or more tokens long."""
    if len(words) != len(tags):
        raise ValueError(f"{len(words)} words but {len(tags)} tags")
    phrases = []
    start = None
    for idx in range(len(words) + 1):
        inside = idx < len(words) and tags[idx] in NOUNISH
        if inside and start is None:
            start = idx
        elif not inside and start is not None:
            end = idx
            while end > start and tags[end - 1] != "NOUN":
                end -= 1
            if end - start >= 2:
                phrases.append(PhraseCandidate((start, end), " ".join(words[start:end])))
            start = None
    return phrases
