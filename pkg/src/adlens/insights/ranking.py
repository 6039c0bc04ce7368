"""Rank tables: expected attribution per feature key across a domain."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..data.types import DataError
from .phrases import Tagger, extract_phrases


@dataclass(frozen=True)
class RankEntry:
    key: str
    score: float  # mean attribution across occurrences
    support: int  # occurrence count


@dataclass
class RankTable:
    domain: str
    kind: str  # word | phrase | patch_cluster
    entries: list

    def sorted_entries(self) -> list:
        return sorted(self.entries, key=lambda e: (-e.score, -e.support, e.key))

    def score_of(self, key: str) -> float:
        for entry in self.entries:
            if entry.key == key:
                return entry.score
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "kind": self.kind,
            "entries": [
                {"key": e.key, "score": round(float(e.score), 10), "support": e.support}
                for e in self.sorted_entries()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankTable":
        return cls(domain=d["domain"], kind=d["kind"],
                   entries=[RankEntry(e["key"], e["score"], e["support"]) for e in d["entries"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RankTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def word_extractor(dataset):
    """(word, per-occurrence score) pairs from a content's token scores."""

    def extract(content, amap):
        if amap.text is None:
            return []
        return [
            (dataset.vocab[content.tokens[pos]], float(amap.text[pos]))
            for pos in range(min(len(content.tokens), len(amap.text)))
        ]

    return extract


def phrase_extractor(dataset, tagger: Tagger | None = None):
    """(phrase, mean member-token score) pairs for noun-phrase spans."""
    tagger = tagger or Tagger.from_dataset(dataset)

    def extract(content, amap):
        if amap.text is None:
            return []
        length = min(len(content.tokens), len(amap.text))
        words = [dataset.vocab[t] for t in content.tokens[:length]]
        tags = tagger.tag_all(words)
        out = []
        for phrase in extract_phrases(words, tags):
            s, e = phrase.span
            out.append((phrase.text, float(amap.text[s:e].mean())))
        return out

    return extract


def rank_scores(dataset, domain: str, attributor, extractor, kind: str = "word",
                split: str | None = None) -> RankTable:
    """Mean attribution per feature key over every occurrence in the domain."""
    ids = dataset.ids_in_domain(domain, split)
    if not ids:
        raise DataError(f"domain {domain!r} holds no contents" + (f" in split {split!r}" if split else ""))
    sums: dict = {}
    counts: dict = {}
    usable = 0
    for cid in ids:
        content = dataset.contents[cid]
        amap = attributor(content)
        if amap is None:
            continue
        usable += 1
        for key, score in extractor(content, amap):
            sums[key] = sums.get(key, 0.0) + score
            counts[key] = counts.get(key, 0) + 1
    if not usable:
        raise DataError(f"domain {domain!r} has no contents with the required modality")
    entries = [RankEntry(key, sums[key] / counts[key], counts[key]) for key in sorted(sums)]
    return RankTable(domain=domain, kind=kind, entries=entries)


def recommend_text(dataset, domain: str, attributor, k: int = 10, kind: str = "word",
                   tagger: Tagger | None = None, split: str | None = None) -> dict:
    """Top-k and bottom-k keys by rank score; ties prefer higher support, then
    lexicographic order. Returns everything it has (flagged) when short of k."""
    extractor = word_extractor(dataset) if kind == "word" else phrase_extractor(dataset, tagger)
    table = rank_scores(dataset, domain, attributor, extractor, kind=kind, split=split)
    ranked = table.sorted_entries()
    bottom = sorted(table.entries, key=lambda e: (e.score, -e.support, e.key))
    payload = lambda e: {"key": e.key, "score": float(e.score), "support": e.support}
    return {
        "domain": domain,
        "kind": kind,
        "positive": [payload(e) for e in ranked[:k]],
        "negative": [payload(e) for e in bottom[:k]],
        "short": len(ranked) < k,
    }
