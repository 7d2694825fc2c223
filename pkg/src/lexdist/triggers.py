"""Trigger-pair selection by mutual information, and distance histograms.

Histogram convention: bin ``k`` counts source/target pairs separated by
exactly ``k + 3`` positions (``k + 2`` intervening words).  Separations of
one and two positions belong to the trigram model and are never recorded.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

from .corpus import BOUNDARY, UNK, CorpusError, TokenSequence, Vocabulary
from .provenance import is_header

log = logging.getLogger(__name__)

MIN_SEPARATION = 3


@dataclass(frozen=True, order=True)
class TriggerPair:
    s: int
    t: int
    mi: float = 0.0
    count: int = 0

    @property
    def is_self(self) -> bool:
        return self.s == self.t

    @property
    def key(self) -> tuple[int, int]:
        return (self.s, self.t)


class TriggerSet(list):
    """Trigger pairs in rank order (MI descending)."""

    def save(self, path: str | Path, vocab: Vocabulary, provenance: str | None = None) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            if provenance:
                fh.write(f"# {provenance}\n")
            for p in self:
                fh.write(f"{vocab.words[p.s]}\t{vocab.words[p.t]}\t{p.mi!r}\t{p.count}\n")

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "TriggerSet":
        out = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if lineno == 1 and is_header(line):
                    continue
                try:
                    s, t, mi, count = line.rstrip("\n").split("\t")
                    out.append(TriggerPair(vocab.id_of[s], vocab.id_of[t], float(mi), int(count)))
                except (ValueError, KeyError):
                    raise CorpusError(f"{path}:{lineno}: malformed trigger line") from None
        return out


@dataclass
class DistanceHistogram:
    counts: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or np.any(self.counts < 0):
            raise ValueError("histogram counts must be a 1-d non-negative array")

    @property
    def N(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def empirical(self) -> np.ndarray:
        return self.counts / max(self.total, 1)

    def save(self, path: str | Path, provenance: str | None = None) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"# N_window={self.N} label={self.label}\n")
            if provenance:
                fh.write(f"# {provenance}\n")
            for k, c in enumerate(self.counts.tolist()):
                fh.write(f"{k}\t{c}\n")

    @classmethod
    def load(cls, path: str | Path) -> "DistanceHistogram":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("# N_window="):
            raise CorpusError(f"{path}:1: missing '# N_window=' header")
        head = lines[0][2:]
        n_part, _, label_part = head.partition(" label=")
        try:
            N = int(n_part.split("=", 1)[1])
        except ValueError:
            raise CorpusError(f"{path}:1: bad N_window") from None
        counts = np.zeros(N, dtype=np.int64)
        for lineno, line in enumerate(lines[1:], 2):
            if line.startswith("#"):
                continue
            try:
                k, c = line.split("\t")
                counts[int(k)] = int(c)
            except (ValueError, IndexError):
                raise CorpusError(f"{path}:{lineno}: malformed histogram line") from None
        return cls(counts, label_part)


# mutual information -------------------------------------------------------

def _mi_table(n, c_s, c_t, c_st):
    """Plug-in MI (nats) of the 2x2 table, elementwise over arrays."""
    n = float(n)
    c_s = np.asarray(c_s, dtype=float)
    c_t = np.asarray(c_t, dtype=float)
    c_st = np.asarray(c_st, dtype=float)
    cells = (
        (c_st, c_s, c_t),
        (c_s - c_st, c_s, n - c_t),
        (c_t - c_st, n - c_s, c_t),
        (n - c_s - c_t + c_st, n - c_s, n - c_t),
    )
    total = np.zeros(np.broadcast(c_s, c_t, c_st).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for x, row, col in cells:
            term = (x / n) * np.log(x * n / (row * col))
            total += np.where(x > 0, term, 0.0)
    return np.maximum(total, 0.0)


def _history_coverage(positions: np.ndarray, n: int, window: int) -> int:
    """Number of positions i in [0, n) whose preceding ``window`` words contain an occurrence."""
    if positions.size == 0:
        return 0
    gaps = np.diff(positions)
    last = min(window, n - 1 - int(positions[-1]))
    return int(np.minimum(gaps, window).sum()) + max(last, 0)


def mutual_information(seq: TokenSequence, s: int, t: int, window: int) -> float:
    """MI between "s is among the previous ``window`` words" and "next word is t".

    Every position of ``seq`` is one event; positions near the start see
    a shorter history.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ids = seq.ids
    n = len(ids)
    ps = np.flatnonzero(ids == s)
    pt = np.flatnonzero(ids == t)
    if n == 0 or ps.size == 0 or pt.size == 0:
        return 0.0
    c_s = _history_coverage(ps, n, window)
    j = np.searchsorted(ps, pt) - 1  # last s strictly before each t
    ok = j >= 0
    c_st = int(np.count_nonzero(pt[ok] - ps[j[ok]] <= window))
    return float(_mi_table(n, c_s, pt.size, c_st))


@numba.njit(cache=True)
def _cooccurrence(cand, window, n_cand):
    """counts[a, b] = #positions whose word is candidate b with candidate a in the history."""
    n = cand.shape[0]
    counts = np.zeros((n_cand, n_cand), dtype=np.int64)
    stamp = np.full(n_cand, -1, dtype=np.int64)
    for i in range(n):
        b = cand[i]
        if b < 0:
            continue
        lo = i - window
        if lo < 0:
            lo = 0
        for j in range(i - 1, lo - 1, -1):
            a = cand[j]
            if a >= 0 and stamp[a] != i:
                stamp[a] = i
                counts[a, b] += 1
    return counts


def extract_triggers(seq: TokenSequence, vocab: Vocabulary, window: int = 400, top_k: int = 1000,
                     min_count: int = 5, max_candidates: int | None = 4000,
                     exclude: Iterable[str] = (UNK, BOUNDARY)) -> TriggerSet:
    """Rank all candidate (s, t) pairs by mutual information and keep the top ``top_k``.

    Candidates are words seen at least ``min_count`` times, limited to
    the ``max_candidates`` most frequent.  Ties in MI are broken by ids.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if window < 1:
        raise ValueError("window must be >= 1")
    ids = seq.ids
    n = len(ids)
    freq = np.bincount(ids, minlength=seq.vocab_size)
    eligible = freq >= min_count
    for w in exclude:
        if w in vocab.id_of:
            eligible[vocab.id_of[w]] = False
    words = np.flatnonzero(eligible)
    if max_candidates is not None and words.size > max_candidates:
        order = np.lexsort((words, -freq[words]))
        words = np.sort(words[order[:max_candidates]])
    if words.size == 0:
        warnings.warn("no words meet min_count; trigger set is empty")
        return TriggerSet()
    index = np.full(seq.vocab_size, -1, dtype=np.int64)
    index[words] = np.arange(words.size)
    cand = index[ids]
    c_st = _cooccurrence(cand, window, words.size)

    order_pos = np.argsort(ids, kind="stable")
    bounds = np.searchsorted(ids[order_pos], words, side="left"), np.searchsorted(ids[order_pos], words, side="right")
    c_s = np.array([_history_coverage(np.sort(order_pos[a:b]), n, window) for a, b in zip(*bounds)])
    c_t = freq[words]

    mi = _mi_table(n, c_s[:, None], c_t[None, :], c_st)
    flat = mi.ravel()
    m = flat.size
    if m < top_k:
        warnings.warn(f"only {m} eligible pairs, fewer than top_k={top_k}")
    kk = min(top_k, m)
    # partial selection then an exact ordering of the survivors
    cut = np.partition(flat, m - kk)[m - kk] if kk < m else -np.inf
    sel = np.flatnonzero(flat >= cut)
    si, ti = np.divmod(sel, words.size)
    s_ids, t_ids = words[si], words[ti]
    order = np.lexsort((t_ids, s_ids, -flat[sel]))[:kk]
    out = TriggerSet()
    for o in order:
        out.append(TriggerPair(int(s_ids[o]), int(t_ids[o]), float(flat[sel[o]]), int(c_st[si[o], ti[o]])))
    log.info("extracted %d trigger pairs from %d candidates", len(out), words.size)
    return out


# distance histograms -----------------------------------------------------

def _positions(ids: np.ndarray, words: np.ndarray) -> dict[int, np.ndarray]:
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    lo = np.searchsorted(sorted_ids, words, side="left")
    hi = np.searchsorted(sorted_ids, words, side="right")
    return {int(w): order[a:b] for w, a, b in zip(words, lo, hi)}


def pair_histogram(ps: np.ndarray, pt: np.ndarray, N_window: int) -> np.ndarray:
    """For each source position, the first target at separation >= 3 within the window."""
    counts = np.zeros(N_window, dtype=np.int64)
    if ps.size == 0 or pt.size == 0:
        return counts
    idx = np.searchsorted(pt, ps + MIN_SEPARATION)
    ok = idx < pt.size
    d = pt[idx[ok]] - ps[ok]
    d = d[d <= N_window + MIN_SEPARATION - 1]
    return np.bincount(d - MIN_SEPARATION, minlength=N_window)


def collect_histogram(seq: TokenSequence, pairs: Sequence[TriggerPair | tuple[int, int]],
                      N_window: int = 400) -> dict[tuple[int, int], DistanceHistogram]:
    if N_window < 3:
        raise ValueError("N_window must be >= 3")
    keys = [(p.s, p.t) if isinstance(p, TriggerPair) else (int(p[0]), int(p[1])) for p in pairs]
    words = np.unique(np.array([w for k in keys for w in k], dtype=np.int64))
    pos = _positions(seq.ids, words)
    return {(s, t): DistanceHistogram(pair_histogram(pos[s], pos[t], N_window), f"{s}->{t}")
            for s, t in keys}


def pool_histograms(histograms: Sequence[DistanceHistogram], label: str = "") -> DistanceHistogram:
    if not histograms:
        raise ValueError("nothing to pool")
    N = histograms[0].N
    if any(h.N != N for h in histograms):
        raise ValueError("cannot pool histograms with different window lengths")
    return DistanceHistogram(np.sum([h.counts for h in histograms], axis=0), label)


def group_by_frequency(pairs: Sequence[TriggerPair], unigram: np.ndarray, n_groups: int) -> list[list[TriggerPair]]:
    """Split pairs into ``n_groups`` bands of roughly equal size by source-word frequency."""
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    ranked = sorted(pairs, key=lambda p: (int(unigram[p.s]), p.s, p.t))
    edges = np.linspace(0, len(ranked), n_groups + 1).round().astype(int)
    return [ranked[a:b] for a, b in zip(edges[:-1], edges[1:]) if b > a]


def rare_self_pool(seq: TokenSequence, max_count: int = 100, min_count: int = 2, N_window: int = 400,
                   exclude: Iterable[int] = (0,)) -> DistanceHistogram:
    """Pooled self-trigger histogram over every word seen ``min_count..max_count`` times."""
    freq = np.bincount(seq.ids, minlength=seq.vocab_size)
    words = np.flatnonzero((freq >= min_count) & (freq <= max_count))
    words = np.setdiff1d(words, np.fromiter(exclude, dtype=np.int64))
    pos = _positions(seq.ids, words)
    total = np.zeros(N_window, dtype=np.int64)
    for w in words:
        total += pair_histogram(pos[int(w)], pos[int(w)], N_window)
    return DistanceHistogram(total, f"self<= {max_count}: {words.size} words")

