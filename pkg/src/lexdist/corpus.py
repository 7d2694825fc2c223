"""Tokenization, vocabularies, id sequences and n-gram counts.

Everything downstream works on integer ids.  Id 0 is always ``<unk>``.
Sentence ends are marked in-stream by the ``<s>`` token, so n-gram
contexts and trigger windows run across sentence boundaries.
"""

from __future__ import annotations

import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .provenance import is_header

UNK = "<unk>"
BOUNDARY = "<s>"

_INT32_MAX = np.iinfo(np.int32).max


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    split_punct: bool = True
    boundary_token: str | None = BOUNDARY
    sentence_end: str = ".!?"


_WORD_PUNCT = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]", re.UNICODE)


def tokenize(text: str | bytes, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split ``text`` into tokens.

    Bytes are decoded as strict UTF-8.  With ``split_punct`` every
    punctuation character becomes its own token; a boundary token is
    emitted after each sentence-final punctuation mark.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"input is not valid UTF-8: {exc}") from None
    if config.lowercase:
        text = text.lower()
    if config.split_punct:
        raw = _WORD_PUNCT.findall(text)
    else:
        raw = text.split()
    if config.boundary_token is None:
        return raw
    out: list[str] = []
    for tok in raw:
        out.append(tok)
        if tok in config.sentence_end or (not config.split_punct and tok[-1] in config.sentence_end):
            out.append(config.boundary_token)
    return out


@dataclass
class Vocabulary:
    """Word <-> id map.  ``words[0]`` is the unknown-word symbol."""

    words: list[str]
    counts: list[int] | None = None
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.words or self.words[0] != UNK:
            raise CorpusError("vocabulary must start with <unk>")
        self.id_of = {w: i for i, w in enumerate(self.words)}
        if len(self.id_of) != len(self.words):
            raise CorpusError("duplicate words in vocabulary")

    unk_id = 0

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of and word != UNK

    def lookup(self, word: str) -> int:
        return self.id_of.get(word, self.unk_id)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        for lineno, w in enumerate(lines, 1):
            if not w or any(c.isspace() for c in w):
                raise CorpusError(f"{path}:{lineno}: malformed vocabulary entry {w!r}")
        if not lines or lines[0] != UNK:
            raise CorpusError(f"{path}:1: first line must be {UNK}")
        return cls(lines)


def build_vocab(tokens: Iterable[str], min_count: int = 1, max_size: int | None = None) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times, most frequent first.

    Ties in frequency are broken lexicographically.  ``max_size`` bounds
    the number of real words; ``<unk>`` is added on top.
    """
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    freq = Counter(tokens)
    if not freq:
        raise CorpusError("cannot build a vocabulary from an empty token stream")
    freq.pop(UNK, None)
    kept = sorted((w for w, c in freq.items() if c >= min_count), key=lambda w: (-freq[w], w))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary([UNK] + kept, counts=[0] + [freq[w] for w in kept])


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    vocab_size: int
    boundaries: np.ndarray | None = None

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int32)
        object.__setattr__(self, "ids", ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise CorpusError("token id out of range for vocabulary")

    def __len__(self) -> int:
        return int(self.ids.size)

    def slice(self, start: int, stop: int) -> "TokenSequence":
        return TokenSequence(self.ids[start:stop], self.vocab_size)


def encode(tokens: Sequence[str], vocab: Vocabulary) -> TokenSequence:
    ids = np.fromiter((vocab.lookup(t) for t in tokens), dtype=np.int32, count=len(tokens))
    bid = vocab.id_of.get(BOUNDARY)
    boundaries = np.flatnonzero(ids == bid) if bid is not None else None
    return TokenSequence(ids, vocab.size, boundaries)


def decode(seq: TokenSequence | Sequence[int], vocab: Vocabulary) -> list[str]:
    ids = seq.ids if isinstance(seq, TokenSequence) else seq
    return [vocab.words[int(i)] for i in ids]


def _key(cols: Sequence[np.ndarray], V: int) -> np.ndarray:
    key = np.zeros(len(cols[0]), dtype=np.int64)
    for c in cols:
        key = key * V + c.astype(np.int64)
    return key


def _unkey(keys: np.ndarray, V: int, order: int) -> np.ndarray:
    out = np.empty((len(keys), order), dtype=np.int64)
    rest = keys.copy()
    for j in range(order - 1, -1, -1):
        out[:, j] = rest % V
        rest //= V
    return out


def _as_count32(c: np.ndarray) -> np.ndarray:
    if c.size and c.max() > _INT32_MAX:
        raise OverflowError("n-gram count exceeds 32-bit range")
    return c.astype(np.int32)


@dataclass(frozen=True)
class NgramCounts:
    """Sorted n-gram tables.

    Order-n tables are keyed by the integer ``((w1*V)+w2)*V+w3`` (words in
    text order), sorted ascending, with parallel 32-bit count arrays.
    """

    vocab_size: int
    unigram: np.ndarray
    bigram_keys: np.ndarray
    bigram_counts: np.ndarray
    trigram_keys: np.ndarray
    trigram_counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.unigram.sum())

    def keys(self, order: int) -> np.ndarray:
        if order == 1:
            return np.flatnonzero(self.unigram).astype(np.int64)
        return self.bigram_keys if order == 2 else self.trigram_keys

    def counts(self, order: int) -> np.ndarray:
        if order == 1:
            return self.unigram[self.unigram > 0]
        return self.bigram_counts if order == 2 else self.trigram_counts

    def ngrams(self, order: int) -> np.ndarray:
        """(n_types, order) array of word ids for the observed n-grams."""
        return _unkey(self.keys(order), self.vocab_size, order)

    def count(self, *words: int) -> int:
        if len(words) == 1:
            return int(self.unigram[words[0]])
        keys = self.keys(len(words))
        k = _key([np.array([w]) for w in words], self.vocab_size)[0]
        i = np.searchsorted(keys, k)
        if i < len(keys) and keys[i] == k:
            return int(self.counts(len(words))[i])
        return 0

    def as_dicts(self) -> list[dict[tuple[int, ...], int]]:
        out = []
        for order in (1, 2, 3):
            grams = self.ngrams(order)
            out.append({tuple(int(x) for x in g): int(c) for g, c in zip(grams, self.counts(order))})
        return out

    def save(self, prefix: str | Path, vocab: Vocabulary, provenance: str | None = None) -> list[Path]:
        """Write ``<prefix>.{1,2,3}gram`` files of ``w1 w2 w3<TAB>count`` lines."""
        paths = []
        for order in (1, 2, 3):
            path = Path(f"{prefix}.{order}gram")
            with path.open("w", encoding="utf-8") as fh:
                if provenance:
                    fh.write(f"# {provenance}\n")
                for g, c in zip(self.ngrams(order), self.counts(order)):
                    fh.write(" ".join(vocab.words[i] for i in g) + f"\t{c}\n")
            paths.append(path)
        return paths

    @classmethod
    def load(cls, prefix: str | Path, vocab: Vocabulary) -> "NgramCounts":
        V = vocab.size
        unigram = np.zeros(V, dtype=np.int64)
        tables = {}
        for order in (1, 2, 3):
            path = Path(f"{prefix}.{order}gram")
            grams, cnts = [], []
            with path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if lineno == 1 and is_header(line):
                        continue
                    try:
                        left, c = line.rstrip("\n").split("\t")
                        words = left.split(" ")
                        if len(words) != order:
                            raise ValueError
                        ids = [vocab.id_of[w] for w in words]
                        cnt = int(c)
                    except (ValueError, KeyError):
                        raise CorpusError(f"{path}:{lineno}: malformed count line") from None
                    grams.append(ids)
                    cnts.append(cnt)
            g = np.array(grams, dtype=np.int64).reshape(-1, order)
            c = np.array(cnts, dtype=np.int64)
            if order == 1:
                unigram[g[:, 0]] = c
            else:
                keys = _key(g.T, V)
                idx = np.argsort(keys)
                tables[order] = (keys[idx], c[idx])
        return cls(V, _as_count32(unigram), tables[2][0], _as_count32(tables[2][1]),
                   tables[3][0], _as_count32(tables[3][1]))


def _count_range(ids: np.ndarray, V: int, a: int, b: int) -> NgramCounts:
    """Counts of the n-grams that start in ``[a, b)``; they may extend past ``b``."""
    n = len(ids)
    unigram = np.bincount(ids[a:b], minlength=V)
    tables = []
    for order in (2, 3):
        stop = min(b, n - order + 1)
        if stop <= a:
            tables.append((np.zeros(0, np.int64), np.zeros(0, np.int32)))
            continue
        cols = [ids[a + j: stop + j] for j in range(order)]
        keys, cnt = np.unique(_key(cols, V), return_counts=True)
        tables.append((keys, _as_count32(cnt)))
    return NgramCounts(V, _as_count32(unigram), tables[0][0], tables[0][1], tables[1][0], tables[1][1])


def count_ngrams(seq: TokenSequence, shards: int = 1) -> NgramCounts:
    """Count 1-, 2- and 3-grams over the contiguous id stream (no padding).

    With ``shards > 1`` the stream is cut into ranges counted on a thread
    pool; each range owns the n-grams starting inside it, so the merged
    result is identical to the single-pass count.
    """
    ids = seq.ids.astype(np.int64)
    V = seq.vocab_size
    n = len(ids)
    shards = max(1, min(int(shards), n // 10_000 or 1))
    if shards == 1:
        return _count_range(ids, V, 0, n)
    edges = np.linspace(0, n, shards + 1).astype(int)
    with ThreadPoolExecutor(max_workers=shards) as pool:
        parts = list(pool.map(lambda ab: _count_range(ids, V, *ab), zip(edges[:-1], edges[1:])))
    return reduce(merge_counts, parts)


def merge_counts(a: NgramCounts, b: NgramCounts) -> NgramCounts:
    """Sum two count tables (e.g. from corpus shards).

    Counting two separate sequences and merging loses the n-grams that
    span the cut; ``count_ngrams(seq, shards=...)`` avoids that.
    """
    if a.vocab_size != b.vocab_size:
        raise CorpusError("cannot merge counts over different vocabularies")

    def add(k1, c1, k2, c2):
        keys = np.concatenate([k1, k2])
        cnts = np.concatenate([c1, c2]).astype(np.int64)
        u, inv = np.unique(keys, return_inverse=True)
        return u, _as_count32(np.bincount(inv, weights=cnts, minlength=len(u)).astype(np.int64))

    bk, bc = add(a.bigram_keys, a.bigram_counts, b.bigram_keys, b.bigram_counts)
    tk, tc = add(a.trigram_keys, a.trigram_counts, b.trigram_keys, b.trigram_counts)
    uni = _as_count32(a.unigram.astype(np.int64) + b.unigram)
    return NgramCounts(a.vocab_size, uni, bk, bc, tk, tc)


def read_corpus(path: str | Path, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    data = Path(path).read_bytes()
    return tokenize(data, config)
