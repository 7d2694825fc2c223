"""Deterministic synthetic English-like text with topical long-range structure.

Used when no real corpus is at hand.  Sentences come from a small set of
part-of-speech templates (so trigrams carry real signal) with content
words drawn from document topics, a recency cache of recently used words,
pending associates of recent words (attraction that fades with distance), and a
refractory period that discourages repeating a content word too soon.
Everything is driven by one seeded ``random.Random``.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

FUNCTION = {
    "DET": "the a this that some every its their".split(),
    "PREP": "of in on for with by from to at about after".split(),
    "AUX": "will would has had can could may must".split(),
    "PRON": "he she they it we i you".split(),
    "CONJ": "and but while because although".split(),
    "ADV": "quickly again still often later never soon also".split(),
}

TEMPLATES = [
    "DET ADJ NOUN VERB DET NOUN",
    "DET NOUN VERB PREP DET ADJ NOUN",
    "PRON AUX VERB DET NOUN PREP DET NOUN",
    "DET NOUN PREP DET NOUN VERB ADV",
    "DET ADJ NOUN CONJ DET NOUN VERB DET NOUN",
    "PRON VERB DET NOUN CONJ PRON VERB ADV",
    "DET NOUN AUX VERB PREP NOUN",
    "PREP DET ADJ NOUN PRON VERB DET NOUN",
    "DET NOUN VERB DET ADJ NOUN PREP DET NOUN",
    "PRON AUX ADV VERB DET ADJ NOUN",
]

_ONSETS = "b c d f g h j k l m n p r s t v w z br cl dr fr gr pl st tr sh ch".split()
_VOWELS = "a e i o u ai ea io ou".split()
_CODAS = ["", "", "n", "r", "l", "s", "t", "m", "nd", "rk", "st"]
_SUFFIX = {"NOUN": ["", "a", "on", "er"], "VERB": ["s", "ed", "es"], "ADJ": ["ic", "ous", "al", "y"]}


@dataclass(frozen=True)
class SynthConfig:
    n_tokens: int = 1_500_000
    seed: int = 7
    n_topics: int = 60
    topic_sizes: tuple[int, int, int] = (40, 20, 15)  # nouns, verbs, adjectives per topic
    general_sizes: tuple[int, int, int] = (4000, 1500, 1000)
    p_cache: float = 0.12
    p_topic: float = 0.45
    cache_scale: float = 20.0  # mean look-back (content words) for cache draws
    p_associate: float = 0.5
    assoc_scale: float = 15.0  # decay length (tokens) of the pull toward a pending associate
    p_assoc_emit: float = 0.6
    refractory: float = 12.0  # e-folding length (tokens) of the repeat suppression
    p_topic_switch: float = 0.03
    doc_length: tuple[int, int] = (200, 1500)


def _word_stream(rng: random.Random) -> Iterator[str]:
    seen = set(w for ws in FUNCTION.values() for w in ws)
    while True:
        n = rng.choice((2, 2, 3))
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n)) + rng.choice(_CODAS)
        if w not in seen:
            seen.add(w)
            yield w


def _zipf_weights(n: int, s: float) -> list[float]:
    return list(itertools.accumulate(1.0 / (r + 1) ** s for r in range(n)))


class _Lexicon:
    def __init__(self, cfg: SynthConfig, rng: random.Random):
        words = _word_stream(rng)

        def make(cls: str, n: int) -> list[str]:
            return [next(words) + rng.choice(_SUFFIX[cls]) for _ in range(n)]

        classes = ("NOUN", "VERB", "ADJ")
        self.general = {c: make(c, n) for c, n in zip(classes, cfg.general_sizes)}
        self.general_cw = {c: _zipf_weights(len(v), 1.0) for c, v in self.general.items()}
        self.topics = [{c: make(c, n) for c, n in zip(classes, cfg.topic_sizes)} for _ in range(cfg.n_topics)]
        self.topic_cw = {c: _zipf_weights(n, 0.8) for c, n in zip(classes, cfg.topic_sizes)}
        self.cls_of: dict[str, str] = {}
        self.associate: dict[str, str] = {}
        for c in classes:
            for w in self.general[c]:
                self.cls_of[w] = c
        for topic in self.topics:
            pool = [w for c in classes for w in topic[c]]
            for c in classes:
                for w in topic[c]:
                    self.cls_of[w] = c
                    self.associate[w] = rng.choice(pool)


def generate(cfg: SynthConfig = SynthConfig()) -> Iterator[str]:
    """Yield documents (one string each) until ``cfg.n_tokens`` tokens are produced."""
    rng = random.Random(cfg.seed)
    lex = _Lexicon(cfg, rng)
    last_used: dict[str, int] = {}
    pos = 0
    while pos < cfg.n_tokens:
        topics = rng.sample(range(cfg.n_topics), rng.choice((1, 1, 2)))
        cache: deque[str] = deque(maxlen=200)
        pending: dict[str, int] = {}  # associate -> position of its trigger
        doc_len = rng.randint(*cfg.doc_length)
        sentences = []
        start = pos
        while pos - start < doc_len and pos < cfg.n_tokens:
            if rng.random() < cfg.p_topic_switch:
                topics[rng.randrange(len(topics))] = rng.randrange(cfg.n_topics)
            out = []
            for slot in rng.choice(TEMPLATES).split():
                if slot in FUNCTION:
                    out.append(rng.choice(FUNCTION[slot]))
                else:
                    here = pos + len(out)
                    w = _pending_word(slot, pending, here, lex, cfg, rng)
                    if w is None:
                        w = _content_word(slot, topics, cache, last_used, here, lex, cfg, rng)
                    last_used[w] = here
                    cache.append(w)
                    assoc = lex.associate.get(w)
                    if assoc is not None and assoc != w and rng.random() < cfg.p_associate:
                        cache.append(assoc)
                        pending[assoc] = here
                    out.append(w)
            out[0] = out[0].capitalize()
            sentences.append(" ".join(out) + ".")
            pos += len(out) + 2  # period and sentence boundary tokens
        yield " ".join(sentences)


def _pending_word(cls, pending, pos, lex, cfg, rng) -> str | None:
    for w, t in list(pending.items()):
        age = pos - t
        if age > 6 * cfg.assoc_scale:
            del pending[w]
        elif lex.cls_of.get(w) == cls and rng.random() < cfg.p_assoc_emit * math.exp(-age / cfg.assoc_scale):
            del pending[w]
            return w
    return None


def _content_word(cls, topics, cache, last_used, pos, lex, cfg, rng) -> str:
    for _ in range(6):
        r = rng.random()
        w = None
        if r < cfg.p_cache and cache:
            i = len(cache) - 1 - min(int(rng.expovariate(1.0 / cfg.cache_scale)), len(cache) - 1)
            for j in range(i, max(i - 10, -1), -1):
                if lex.cls_of.get(cache[j]) == cls:
                    w = cache[j]
                    break
        if w is None and r < cfg.p_cache + cfg.p_topic:
            topic = lex.topics[rng.choice(topics)]
            w = rng.choices(topic[cls], cum_weights=lex.topic_cw[cls])[0]
        if w is None:
            w = rng.choices(lex.general[cls], cum_weights=lex.general_cw[cls])[0]
        age = pos - last_used.get(w, -10**9)
        if rng.random() < -math.expm1(-age / cfg.refractory):
            return w
    return w


def write_corpus(path: str | Path, cfg: SynthConfig = SynthConfig()) -> int:
    """Write one document per line; returns the number of documents."""
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in generate(cfg):
            fh.write(doc + "\n")
            n += 1
    return n
