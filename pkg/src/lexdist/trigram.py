"""Katz backoff trigram with Good-Turing discounting.

Probabilities and backoff weights are held as log10 values, which is
also how the ARPA-style model file stores them; writing floats with
``repr`` makes a save/load round trip bit-exact.

Notation follows the call signature ``q(w, w1, w2)``: ``w1`` is the
previous word and ``w2`` the one before it, so the text order is
``w2 w1 w``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import NgramCounts, Vocabulary, CorpusError

log = logging.getLogger(__name__)

FORMAT_TAG = "lexdist-trigram v1"


@dataclass(frozen=True)
class KatzConfig:
    k_cut: int = 5
    epsilon: float = 1e-10  # uniform mass mixed into the unigram level
    min_leftover: float = 1e-7  # reserved when no count in a context is discounted


def good_turing_discounts(counts: np.ndarray, k_cut: int) -> tuple[np.ndarray, bool]:
    """Katz discount ratios d_r for r = 0..k_cut+1 (index r).

    Returns ``(d, ok)``; when the count-of-counts make the Good-Turing
    ratios unusable, an absolute-discount fallback is returned with
    ``ok = False``.
    """
    n = np.bincount(counts.astype(np.int64), minlength=k_cut + 2).astype(float)
    d = np.ones(k_cut + 2)
    r = np.arange(1, k_cut + 1)
    ok = n[1] > 0 and np.all(n[1: k_cut + 2] > 0)
    if ok:
        A = (k_cut + 1) * n[k_cut + 1] / n[1]
        gt = ((r + 1) * n[r + 1] / (r * n[r]) - A) / (1 - A) if A < 1 else np.zeros(k_cut)
        ok = bool(np.all((gt > 0) & (gt <= 1)))
        if ok:
            d[1: k_cut + 1] = gt
    if not ok:
        D = n[1] / (n[1] + 2 * n[2]) if n[1] + n[2] > 0 else 0.5
        D = min(max(D, 0.1), 0.9)
        d[1: k_cut + 1] = (r - D) / r
    return d, ok


def _discount(cnt: np.ndarray, d: np.ndarray) -> np.ndarray:
    out = np.ones(len(cnt))
    small = cnt < len(d)
    out[small] = d[cnt[small]]
    return out


def _gather(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # an empty table has no valid index; every lookup misses anyway
    return values[idx] if len(values) else np.zeros(len(idx))


class TrigramModel:
    def __init__(self, vocab: Vocabulary, lp1, bo2, bi_keys, bi_lp, ctx3_keys, bo3, tri_keys, tri_lp,
                 config: KatzConfig = KatzConfig()):
        self.vocab = vocab
        self.V = vocab.size
        self.lp1 = np.asarray(lp1, dtype=float)
        self.bo2 = np.asarray(bo2, dtype=float)
        self.bi_keys = np.asarray(bi_keys, dtype=np.int64)
        self.bi_lp = np.asarray(bi_lp, dtype=float)
        self.ctx3_keys = np.asarray(ctx3_keys, dtype=np.int64)
        self.bo3 = np.asarray(bo3, dtype=float)
        self.tri_keys = np.asarray(tri_keys, dtype=np.int64)
        self.tri_lp = np.asarray(tri_lp, dtype=float)
        self.config = config

    # lookups -------------------------------------------------------------

    @staticmethod
    def _find(keys: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.searchsorted(keys, query)
        idx_c = np.minimum(idx, max(len(keys) - 1, 0))
        hit = (idx < len(keys)) & (keys[idx_c] == query) if len(keys) else np.zeros(len(query), bool)
        return idx_c, hit

    def log10_batch(self, w, w1, w2) -> np.ndarray:
        """Vectorized log10 q(w | w1, w2).  A negative context id means "absent"."""
        V = self.V
        w = np.asarray(w, dtype=np.int64)
        w1 = np.broadcast_to(np.asarray(w1, dtype=np.int64), w.shape)
        w2 = np.broadcast_to(np.asarray(w2, dtype=np.int64), w.shape)
        out = self.lp1[w].copy()
        has1 = w1 >= 0
        w1c = np.where(has1, w1, 0)
        idx, hit = self._find(self.bi_keys, w1c * V + w)
        lp2 = np.where(hit, _gather(self.bi_lp, idx), self.bo2[w1c] + out)
        out = np.where(has1, lp2, out)
        has2 = has1 & (w2 >= 0)
        if has2.any():
            w2c = np.where(has2, w2, 0)
            ctx = w2c * V + w1c
            idx, hit = self._find(self.tri_keys, ctx * V + w)
            cidx, chit = self._find(self.ctx3_keys, ctx)
            bo = np.where(chit, _gather(self.bo3, cidx), 0.0)
            lp3 = np.where(hit, _gather(self.tri_lp, idx), bo + out)
            out = np.where(has2, lp3, out)
        return out

    def _check(self, *ids):
        for i in ids:
            if i is not None and not (0 <= int(i) < self.V):
                raise CorpusError(f"word id {i} outside vocabulary of size {self.V}")

    def log10_q(self, w: int, w1: int | None = None, w2: int | None = None) -> float:
        self._check(w, w1, w2)
        a = -1 if w1 is None else w1
        b = -1 if (w2 is None or w1 is None) else w2
        return float(self.log10_batch(np.array([w]), np.array([a]), np.array([b]))[0])

    def q(self, w: int, w1: int | None = None, w2: int | None = None) -> float:
        return 10.0 ** self.log10_q(w, w1, w2)

    def dist(self, w1: int | None = None, w2: int | None = None) -> np.ndarray:
        """Full conditional distribution over the vocabulary."""
        self._check(w1, w2)
        ws = np.arange(self.V)
        a = -1 if w1 is None else w1
        b = -1 if (w2 is None or w1 is None) else w2
        return 10.0 ** self.log10_batch(ws, np.full(self.V, a), np.full(self.V, b))

    # ARPA-style io -------------------------------------------------------

    def save(self, path: str | Path, provenance: str | None = None) -> None:
        V = self.V
        words = self.vocab.words
        bo3 = dict(zip(self.ctx3_keys.tolist(), self.bo3.tolist()))
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"# {FORMAT_TAG} k_cut={self.config.k_cut} epsilon={self.config.epsilon!r} "
                     f"min_leftover={self.config.min_leftover!r}\n")
            if provenance:
                fh.write(f"# {provenance}\n")
            fh.write("\n\\data\\\n")
            fh.write(f"ngram 1={V}\nngram 2={len(self.bi_keys)}\nngram 3={len(self.tri_keys)}\n")
            fh.write("\n\\1-grams:\n")
            for word, lp, bo in zip(words, self.lp1.tolist(), self.bo2.tolist()):
                fh.write(f"{lp!r}\t{word}\t{bo!r}\n")
            fh.write("\n\\2-grams:\n")
            for k, lp in zip(self.bi_keys.tolist(), self.bi_lp.tolist()):
                u, v = divmod(k, V)
                line = f"{lp!r}\t{words[u]} {words[v]}"
                if k in bo3:
                    line += f"\t{bo3[k]!r}"
                fh.write(line + "\n")
            fh.write("\n\\3-grams:\n")
            for k, lp in zip(self.tri_keys.tolist(), self.tri_lp.tolist()):
                c, w = divmod(k, V)
                u, v = divmod(c, V)
                fh.write(f"{lp!r}\t{words[u]} {words[v]} {words[w]}\n")
            fh.write("\n\\end\\\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrigramModel":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").split("\n")
        config = KatzConfig()
        if lines and lines[0].startswith("#"):
            fields = dict(f.split("=", 1) for f in lines[0].split() if "=" in f)
            config = KatzConfig(int(fields.get("k_cut", 5)), float(fields.get("epsilon", 1e-10)),
                                float(fields.get("min_leftover", 1e-7)))
        section = None
        uni: list[tuple[str, float, float]] = []
        bi: list[tuple[str, str, float, float | None]] = []
        tri: list[tuple[str, str, str, float]] = []
        for lineno, line in enumerate(lines, 1):
            if not line or line.startswith("#") or line.startswith("ngram "):
                continue
            if line.startswith("\\"):
                section = line
                continue
            parts = line.split("\t")
            try:
                if section == "\\1-grams:":
                    uni.append((parts[1], float(parts[0]), float(parts[2])))
                elif section == "\\2-grams:":
                    u, v = parts[1].split(" ")
                    bi.append((u, v, float(parts[0]), float(parts[2]) if len(parts) > 2 else None))
                elif section == "\\3-grams:":
                    u, v, w = parts[1].split(" ")
                    tri.append((u, v, w, float(parts[0])))
                else:
                    raise ValueError
            except (ValueError, IndexError):
                raise CorpusError(f"{path}:{lineno}: malformed model line") from None
        if not uni:
            raise CorpusError(f"{path}: no 1-gram section")
        vocab = Vocabulary([u[0] for u in uni])
        V = vocab.size
        ix = vocab.id_of
        lp1 = np.array([u[1] for u in uni])
        bo2 = np.array([u[2] for u in uni])
        try:
            bi_keys = np.array([ix[u] * V + ix[v] for u, v, _, _ in bi], dtype=np.int64)
            ctx = [(ix[u] * V + ix[v], b) for u, v, _, b in bi if b is not None]
            tri_keys = np.array([(ix[u] * V + ix[v]) * V + ix[w] for u, v, w, _ in tri], dtype=np.int64)
        except KeyError as exc:
            raise CorpusError(f"{path}: n-gram word {exc} missing from the 1-gram section") from None
        bi_lp = np.array([b[2] for b in bi])
        ctx3_keys = np.array([c for c, _ in ctx], dtype=np.int64)
        bo3 = np.array([b for _, b in ctx])
        tri_lp = np.array([t[3] for t in tri])
        for keys in (bi_keys, ctx3_keys, tri_keys):
            if np.any(np.diff(keys) <= 0):
                raise CorpusError(f"{path}: n-gram sections are not in canonical order")
        return cls(vocab, lp1, bo2, bi_keys, bi_lp, ctx3_keys, bo3, tri_keys, tri_lp, config)


def _level(keys: np.ndarray, cnt: np.ndarray, V: int, lower_p: np.ndarray, d: np.ndarray, min_left: float):
    """Discounted probabilities and backoff weights for one order.

    ``keys`` are sorted ``ctx*V + w``; ``lower_p`` is the lower-order
    probability of each entry's word given the shortened context.
    """
    ctx = keys // V
    uctx, start, nseen = np.unique(ctx, return_index=True, return_counts=True)
    cnt = cnt.astype(float)
    ctx_total = np.add.reduceat(cnt, start)
    seg = np.repeat(np.arange(len(uctx)), nseen)
    disc = _discount(cnt.astype(np.int64), d)
    p = disc * cnt / ctx_total[seg]
    left = np.add.reduceat((1 - disc) * cnt, start) / ctx_total
    starved = (left <= 0) & (nseen < V)
    if starved.any():
        p[starved[seg]] *= 1 - min_left
        left[starved] = min_left
    denom = 1.0 - np.add.reduceat(lower_p, start)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(nseen < V, left / denom, 1.0)
    return uctx, p, beta, left, denom, nseen


def train_trigram(counts: NgramCounts, vocab: Vocabulary, config: KatzConfig = KatzConfig()) -> TrigramModel:
    if counts.total == 0:
        raise CorpusError("cannot train a trigram model on empty counts")
    if counts.vocab_size != vocab.size:
        raise CorpusError("counts and vocabulary disagree on size")
    V = vocab.size
    eps = config.epsilon
    p1 = (1 - eps) * counts.unigram.astype(float) / counts.total + eps / V
    lp1 = np.log10(p1)

    bo2 = np.zeros(V)
    bi_keys = counts.bigram_keys
    bi_lp = np.zeros(0)
    if len(bi_keys):
        d2, ok2 = good_turing_discounts(counts.bigram_counts, config.k_cut)
        if not ok2:
            log.warning("bigram count-of-counts unusable for Good-Turing; using absolute-discount fallback")
        lower = p1[bi_keys % V]
        uctx, p2, beta, left, denom, nseen = _level(bi_keys, counts.bigram_counts, V, lower, d2, config.min_leftover)
        beta = _fix_small_denominators(beta, left, denom, nseen, uctx, V, bi_keys, lambda c: p1)
        bi_lp = np.log10(p2)
        bo2[uctx] = np.log10(beta)

    tri_keys = counts.trigram_keys
    ctx3_keys = np.zeros(0, np.int64)
    bo3 = np.zeros(0)
    tri_lp = np.zeros(0)
    if len(tri_keys):
        d3, ok3 = good_turing_discounts(counts.trigram_counts, config.k_cut)
        if not ok3:
            log.warning("trigram count-of-counts unusable for Good-Turing; using absolute-discount fallback")
        partial = TrigramModel(vocab, lp1, bo2, bi_keys, bi_lp, ctx3_keys, bo3, tri_keys, tri_lp, config)
        v = (tri_keys // V) % V
        w = tri_keys % V
        lower = 10.0 ** partial.log10_batch(w, v, -np.ones_like(v))
        uctx, p3, beta, left, denom, nseen = _level(tri_keys, counts.trigram_counts, V, lower, d3, config.min_leftover)
        beta = _fix_small_denominators(beta, left, denom, nseen, uctx, V, tri_keys,
                                       lambda c: partial.dist(int(c % V)))
        tri_lp = np.log10(p3)
        ctx3_keys = uctx
        bo3 = np.log10(beta)
    return TrigramModel(vocab, lp1, bo2, bi_keys, bi_lp, ctx3_keys, bo3, tri_keys, tri_lp, config)


def _fix_small_denominators(beta, left, denom, nseen, uctx, V, keys, lower_dist):
    """Recompute backoff weights whose denominators lost precision.

    ``1 - sum(seen lower probs)`` cancels badly when the seen words hold
    nearly all lower-order mass; sum the unseen words directly instead.
    """
    bad = np.flatnonzero((nseen < V) & (denom < 1e-6))
    for j in bad:
        c = uctx[j]
        lo, hi = np.searchsorted(keys, [c * V, (c + 1) * V])
        mask = np.ones(V, bool)
        mask[keys[lo:hi] % V] = False
        lower = np.asarray(lower_dist(c), dtype=float)
        beta[j] = left[j] / math.fsum(lower[mask])
    return beta
