"""Conditional exponential language model over a trigram default distribution.

    p(w | H) = exp(sum_i lambda_i f_i(H, w) + penalties) q(w | w1, w2) / Z(H)

Feature ``i`` fires when its source word ``s_i`` sits in the history at
a separation of at least three positions and the predicted word is its
target ``t_i``.  An optional fitted distance model adds a fixed log-odds
term that depends on that separation.  Only words that some active
feature targets differ from ``q``, so ``Z(H)`` is a sum over those words.

Histories are chronological sequences of ids, the last element being the
previous word.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CorpusError, TokenSequence
from .distmodel import MixtureParams, mixture_pmf
from .trigram import TrigramModel
from .triggers import MIN_SEPARATION, DistanceHistogram, TriggerPair

log = logging.getLogger(__name__)

LN10 = math.log(10.0)
POLICIES = ("once", "multi")


def distance_penalty(params: MixtureParams, k):
    """Log-ratio of the fitted distance law to the uniform law on the window."""
    out = np.log(np.asarray(mixture_pmf(params, k)) * params.N)
    return out if out.ndim else float(out)


@dataclass
class TriggerFeature:
    pair: TriggerPair
    lam: float = 0.0
    distance: MixtureParams | None = None
    bucket: int | None = None

    @property
    def s(self) -> int:
        return self.pair.s

    @property
    def t(self) -> int:
        return self.pair.t


@dataclass
class TrainReport:
    loglik: list[float] = field(default_factory=list)  # mean log-probability per token, nats
    perplexity: list[float] = field(default_factory=list)
    lambdas: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False


class ExpLM:
    def __init__(self, trigram: TrigramModel, features: Sequence[TriggerFeature] = (), N: int = 400,
                 policy: str = "once"):
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if N < MIN_SEPARATION:
            raise ValueError("history length must be >= 3")
        seen = set()
        for f in features:
            if f.pair.key in seen:
                raise ValueError(f"duplicate trigger pair {f.pair.key}")
            if not math.isfinite(f.lam):
                raise ValueError("feature weights must be finite")
            seen.add(f.pair.key)
        self.trigram = trigram
        self.features = list(features)
        self.N = N
        self.policy = policy
        self.by_source: dict[int, list[int]] = defaultdict(list)
        for i, f in enumerate(self.features):
            self.by_source[f.s].append(i)

    @property
    def V(self) -> int:
        return self.trigram.V

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([f.lam for f in self.features], dtype=float)

    def set_lambdas(self, lam: np.ndarray) -> None:
        for f, x in zip(self.features, lam):
            f.lam = float(x)

    def penalty_table(self) -> np.ndarray:
        """(n_features, N - 2) array of distance penalties by k-index."""
        K = self.N - MIN_SEPARATION + 1
        table = np.zeros((len(self.features), K))
        for i, f in enumerate(self.features):
            if f.distance is not None:
                if f.distance.N < K:
                    raise ValueError(f"distance model support {f.distance.N} shorter than history range {K}")
                table[i] = distance_penalty(f.distance, np.arange(K))
        return table

    # single-history interface ------------------------------------------

    def active_features(self, H: Sequence[int]) -> list[tuple[int, int]]:
        """(feature index, k-index) for each active trigger in history ``H``."""
        H = list(H)[-self.N:]
        L = len(H)
        out = []
        latest: dict[int, list[int]] = defaultdict(list)
        for j in range(L - MIN_SEPARATION, -1, -1):
            w = H[j]
            if w in self.by_source:
                if self.policy == "once" and latest[w]:
                    continue
                latest[w].append(L - j - MIN_SEPARATION)
        for s, ks in latest.items():
            for i in self.by_source[s]:
                out.extend((i, k) for k in ks)
        out.sort()
        return out

    def _context(self, H: Sequence[int]) -> tuple[int, int]:
        w1 = H[-1] if len(H) >= 1 else -1
        w2 = H[-2] if len(H) >= 2 else -1
        return w1, w2

    def _exponents(self, H: Sequence[int]) -> dict[int, float]:
        pen = None
        score: dict[int, float] = defaultdict(float)
        for i, k in self.active_features(H):
            f = self.features[i]
            d = 0.0
            if f.distance is not None:
                if pen is None:
                    pen = {}
                if i not in pen:
                    pen[i] = distance_penalty(f.distance, np.arange(self.N - MIN_SEPARATION + 1))
                d = pen[i][k]
            score[f.t] += f.lam + d
        return score

    def z_norm(self, H: Sequence[int]) -> float:
        w1, w2 = self._context(H)
        score = self._exponents(H)
        if not score:
            return 1.0
        ts = np.fromiter(score, dtype=np.int64)
        q = 10.0 ** self.trigram.log10_batch(ts, w1, w2)
        ex = np.expm1(np.fromiter(score.values(), dtype=float))
        return float(1.0 + math.fsum(ex * q))

    def predict(self, H: Sequence[int], w: int) -> float:
        if not 0 <= w < self.V:
            raise CorpusError(f"word id {w} outside vocabulary")
        w1, w2 = self._context(H)
        score = self._exponents(H)
        q = self.trigram.q(w, w1 if w1 >= 0 else None, w2 if w2 >= 0 else None)
        return math.exp(score.get(w, 0.0)) * q / self.z_norm(H)

    def predict_dist(self, H: Sequence[int]) -> np.ndarray:
        """p(. | H) over the whole vocabulary, summed directly (no closed-form Z)."""
        w1, w2 = self._context(H)
        q = 10.0 ** self.trigram.log10_batch(np.arange(self.V), w1, w2)
        boost = np.zeros(self.V)
        for t, sc in self._exponents(H).items():
            boost[t] = sc
        un = np.exp(boost) * q
        return un / un.sum()

    # corpus-level scoring ---------------------------------------------

    def events(self, seq: TokenSequence, start: int = 0, stop: int | None = None, stride: int = 1) -> "EventTable":
        return EventTable.build(self, seq, start, stop, stride)

    def log_probs(self, seq: TokenSequence, chunk: int = 50_000) -> np.ndarray:
        """ln p(w_i | H_i) for every position, scored block by block to bound memory."""
        lam = self.lambdas
        return np.concatenate([EventTable.build(self, seq, a, a + chunk).log_probs(lam)
                               for a in range(0, len(seq), chunk)] or [np.zeros(0)])

    def perplexity(self, seq: TokenSequence) -> float:
        if len(seq) == 0:
            raise ValueError("cannot compute perplexity of an empty sequence")
        return math.exp(-self.log_probs(seq).mean())

    # io ------------------------------------------------------------------

    def save(self, path: str | Path, trigram_path: str, provenance: str | None = None) -> None:
        words = self.trigram.vocab.words
        doc = {
            "format": "lexdist-explm v1",
            "provenance": provenance,
            "trigram": trigram_path,
            "N": self.N,
            "policy": self.policy,
            "features": [
                {
                    "s": words[f.s], "t": words[f.t], "lambda": f.lam, "bucket": f.bucket,
                    "mi": f.pair.mi, "count": f.pair.count,
                    "distance": None if f.distance is None else
                    {"mu1": f.distance.mu1, "mu2": f.distance.mu2, "alpha": f.distance.alpha, "N": f.distance.N},
                }
                for f in self.features
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, trigram: TrigramModel | None = None) -> "ExpLM":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if doc.get("format") != "lexdist-explm v1":
            raise CorpusError(f"{path}: unrecognized model format {doc.get('format')!r}")
        if trigram is None:
            tp = Path(doc["trigram"])
            trigram = TrigramModel.load(tp if tp.is_absolute() else path.parent / tp)
        ix = trigram.vocab.id_of
        feats = []
        for n, f in enumerate(doc["features"]):
            try:
                dist = f.get("distance")
                feats.append(TriggerFeature(
                    TriggerPair(ix[f["s"]], ix[f["t"]], float(f.get("mi", 0.0)), int(f.get("count", 0))),
                    float(f["lambda"]),
                    None if dist is None else MixtureParams(dist["mu1"], dist["mu2"], dist["alpha"], dist["N"]),
                    f.get("bucket"),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: feature #{n}: {exc}") from None
        return cls(trigram, feats, int(doc["N"]), doc["policy"])


def feature_model(trigram: TrigramModel, pairs: Sequence[TriggerPair], N: int = 400, policy: str = "once",
                  distances: dict[tuple[int, int], MixtureParams] | None = None) -> ExpLM:
    distances = distances or {}
    feats = [TriggerFeature(p, 0.0, distances.get(p.key)) for p in pairs]
    return ExpLM(trigram, feats, N, policy)


def with_distances(model: ExpLM, distances: dict[tuple[int, int], MixtureParams] | None) -> ExpLM:
    """Copy of ``model`` with distance models attached (or removed when ``None``)."""
    feats = [replace(f, distance=None if distances is None else distances.get(f.pair.key)) for f in model.features]
    return ExpLM(model.trigram, feats, model.N, model.policy)


class EventTable:
    """Every (position, active feature occurrence) over a set of positions.

    Occurrences are grouped by (position, target word).  The table is
    fixed for a given set of features and penalties; only the weights
    change during training.
    """

    def __init__(self, positions, actual_lnq, ev_feat, ev_k, ev_pen, g_pos, g_lnq, g_size, actual_group):
        self.positions = positions  # evaluated corpus positions
        self.actual_lnq = actual_lnq  # ln q(w_i | context) for the observed word
        self.ev_feat = ev_feat  # feature of each occurrence, grouped contiguously
        self.ev_k = ev_k  # k-index (separation - 3) of each occurrence
        self.ev_pen = ev_pen  # fixed distance penalty of each occurrence (None: all zero)
        self.g_pos = g_pos  # index into ``positions``
        self.g_lnq = g_lnq  # ln q(target | context)
        self.g_size = g_size  # occurrences in the group: the IIS f# at (H, target)
        self.actual_group = actual_group  # group of the observed word per position, -1 if none

    @property
    def n_events(self) -> int:
        return int(self.ev_feat.size)

    @property
    def g_start(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.g_size)[:-1]]).astype(np.int64)

    @property
    def ev_group(self) -> np.ndarray:
        return np.repeat(np.arange(self.g_size.size, dtype=np.int64), self.g_size)

    @classmethod
    def build(cls, model: ExpLM, seq: TokenSequence, start: int = 0, stop: int | None = None,
              stride: int = 1, chunk: int = 50_000) -> "EventTable":
        """Table for positions ``start, start+stride, ...`` below ``stop``, built chunk by chunk."""
        stop = len(seq) if stop is None else min(stop, len(seq))
        ids = seq.ids.astype(np.int64)
        order = np.argsort(ids, kind="stable")
        src = {}
        sorted_ids = ids[order]
        for s in model.by_source:
            lo, hi = np.searchsorted(sorted_ids, [s, s + 1])
            src[s] = order[lo:hi]
        pen_table = model.penalty_table()
        has_pen = bool(np.any(pen_table))
        step = max(chunk // stride, 1) * stride
        parts = [cls._build_block(model, ids, src, pen_table if has_pen else None, a, min(a + step, stop), start,
                                  stride)
                 for a in range(start, stop, step)]
        return cls.concat(parts) if parts else cls._empty(has_pen)

    @classmethod
    def _empty(cls, has_pen: bool) -> "EventTable":
        z64, z32 = np.zeros(0, np.int64), np.zeros(0, np.int32)
        return cls(z64, np.zeros(0), z32, np.zeros(0, np.int16), np.zeros(0) if has_pen else None, z32, np.zeros(0),
                   z32, z64)

    @classmethod
    def _build_block(cls, model, ids, src, pen_table, a, b, origin, stride) -> "EventTable":
        V = model.V
        n = ids.size
        positions = np.arange(a + (origin - a) % stride, b, stride, dtype=np.int64)
        w1 = np.where(positions >= 1, ids[np.maximum(positions - 1, 0)], -1)
        w2 = np.where(positions >= 2, ids[np.maximum(positions - 2, 0)], -1)
        actual_lnq = model.trigram.log10_batch(ids[positions], w1, w2) * LN10

        f_t = np.array([f.t for f in model.features], dtype=np.int64)
        ev_pos, ev_feat, ev_k = [], [], []
        for s, feats in model.by_source.items():
            pos, k = _source_windows(src[s], n, model.N, model.policy, a, b)
            if stride > 1:
                keep = (pos - origin) % stride == 0
                pos, k = pos[keep], k[keep]
            if pos.size == 0:
                continue
            for i in feats:
                ev_pos.append(pos)
                ev_feat.append(np.full(pos.size, i, dtype=np.int32))
                ev_k.append(k)
        if not ev_pos:
            t = cls._empty(pen_table is not None)
            t.positions, t.actual_lnq = positions, actual_lnq
            t.actual_group = np.full(positions.size, -1, np.int64)
            return t
        ev_pos = np.concatenate(ev_pos)
        ev_feat = np.concatenate(ev_feat)
        ev_k = np.concatenate(ev_k)
        key = ev_pos * V + f_t[ev_feat]
        srt = np.argsort(key, kind="stable")
        key, ev_feat, ev_k = key[srt], ev_feat[srt], ev_k[srt]
        ev_pen = pen_table[ev_feat, ev_k] if pen_table is not None else None
        g_key, g_size = np.unique(key, return_counts=True)
        g_abs, g_t = np.divmod(g_key, V)
        g_lnq = model.trigram.log10_batch(g_t, ids[g_abs - 1], ids[g_abs - 2]) * LN10
        g_pos = ((g_abs - positions[0]) // stride).astype(np.int32)
        a_key = positions * V + ids[positions]
        idx = np.minimum(np.searchsorted(g_key, a_key), g_key.size - 1)
        actual_group = np.where(g_key[idx] == a_key, idx, -1)
        return cls(positions, actual_lnq, ev_feat, ev_k.astype(np.int16), ev_pen, g_pos, g_lnq,
                   g_size.astype(np.int32), actual_group)

    @classmethod
    def concat(cls, tables: Sequence["EventTable"]) -> "EventTable":
        if len(tables) == 1:
            return tables[0]
        pos_off = np.cumsum([0] + [t.positions.size for t in tables])
        grp_off = np.cumsum([0] + [t.g_size.size for t in tables])
        has_pen = any(t.ev_pen is not None for t in tables)
        pens = [t.ev_pen if t.ev_pen is not None else np.zeros(t.n_events) for t in tables]
        return cls(
            np.concatenate([t.positions for t in tables]),
            np.concatenate([t.actual_lnq for t in tables]),
            np.concatenate([t.ev_feat for t in tables]),
            np.concatenate([t.ev_k for t in tables]),
            np.concatenate(pens) if has_pen else None,
            np.concatenate([t.g_pos.astype(np.int64) + o for t, o in zip(tables, pos_off)]),
            np.concatenate([t.g_lnq for t in tables]),
            np.concatenate([t.g_size for t in tables]),
            np.concatenate([np.where(t.actual_group >= 0, t.actual_group + o, -1) for t, o in zip(tables, grp_off)]),
        )

    def group_scores(self, lam: np.ndarray) -> np.ndarray:
        if self.ev_feat.size == 0:
            return np.zeros(0)
        contrib = lam[self.ev_feat]
        if self.ev_pen is not None:
            contrib = contrib + self.ev_pen
        return np.add.reduceat(contrib, self.g_start)

    def log_z(self, S: np.ndarray) -> np.ndarray:
        mass = np.expm1(S) * np.exp(self.g_lnq)
        return np.log1p(np.bincount(self.g_pos, weights=mass, minlength=self.positions.size))

    def group_probs(self, lam: np.ndarray) -> np.ndarray:
        """p(target | H) for every group."""
        S = self.group_scores(lam)
        return np.exp(S + self.g_lnq - self.log_z(S)[self.g_pos])

    def observed_groups(self) -> np.ndarray:
        """Boolean mask of groups whose target is the observed word."""
        mask = np.zeros(self.g_size.size, bool)
        mask[self.actual_group[self.actual_group >= 0]] = True
        return mask

    def log_probs(self, lam: np.ndarray) -> np.ndarray:
        S = self.group_scores(lam)
        lz = self.log_z(S)
        boost = S[np.maximum(self.actual_group, 0)] if S.size else np.zeros(self.positions.size)
        return self.actual_lnq + np.where(self.actual_group >= 0, boost, 0.0) - lz


def _source_windows(P: np.ndarray, n: int, N: int, policy: str, a: int = 0,
                    b: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Positions in ``[a, b)`` where a source occurring at ``P`` is active, with each k-index."""
    b = n if b is None else b
    ends = np.minimum(P + N, n - 1)
    if policy == "once":
        # a later occurrence takes over once it is itself three positions back
        nxt = np.append(P[1:] + MIN_SEPARATION - 1, np.iinfo(np.int64).max)
        ends = np.minimum(ends, nxt)
    lo, hi = np.searchsorted(P, [a - N, b - MIN_SEPARATION + 1])
    P, ends = P[lo:hi], np.minimum(ends[lo:hi], b - 1)
    starts = np.maximum(P + MIN_SEPARATION, a)
    lengths = np.maximum(ends - starts + 1, 0)
    total = int(lengths.sum())
    offset = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    pos = np.repeat(starts, lengths) + offset
    return pos, pos - np.repeat(P, lengths) - MIN_SEPARATION


# training -----------------------------------------------------------------

@dataclass(frozen=True)
class IISConfig:
    max_iter: int = 50
    tol: float = 1e-7  # stop when the mean log-likelihood gain falls below this
    stride: int = 1  # train on every stride-th position
    offset: int = 0


def bucket_features(features: Sequence[TriggerFeature], n_buckets: int, strategy: str = "mi") -> list[TriggerFeature]:
    """Assign features to ``n_buckets`` groups that share one weight.

    ``strategy`` is ``"mi"`` (quantiles of mutual information) or
    ``"count"`` (quantiles of co-occurrence count).
    """
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    if strategy not in ("mi", "count"):
        raise ValueError(f"unknown bucketing strategy {strategy!r}")
    keyf = (lambda f: (-f.pair.mi, f.s, f.t)) if strategy == "mi" else (lambda f: (-f.pair.count, f.s, f.t))
    order = sorted(range(len(features)), key=lambda i: keyf(features[i]))
    out = list(features)
    edges = np.linspace(0, len(order), n_buckets + 1)
    for b in range(n_buckets):
        for r in range(int(round(edges[b])), int(round(edges[b + 1]))):
            out[order[r]] = replace(features[order[r]], bucket=b)
    return out


def _solve_iis(A: np.ndarray, target: np.ndarray, iters: int = 200) -> np.ndarray:
    """Solve sum_m A[b, m] exp(delta_b m) = target_b for every row b (m >= 1)."""
    M = A.shape[1]
    m = np.arange(M, dtype=float)
    logA = np.log(np.where(A > 0, A, 1.0))
    mask = A > 0
    logt = np.log(target)

    def g(d):
        z = np.where(mask, logA + d[:, None] * m[None, :], -np.inf)
        zmax = z.max(axis=1)
        return zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1)) - logt

    lo = np.full(A.shape[0], -1.0)
    hi = np.full(A.shape[0], 1.0)
    for _ in range(60):
        bad = g(lo) > 0
        if not bad.any():
            break
        lo[bad] *= 2
    for _ in range(60):
        bad = g(hi) < 0
        if not bad.any():
            break
        hi[bad] *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        lo = np.where(gm < 0, mid, lo)
        hi = np.where(gm < 0, hi, mid)
        if np.all(hi - lo < 1e-13 * np.maximum(1.0, np.abs(mid))):
            break
    d = 0.5 * (lo + hi)
    # Newton polish on the convex, increasing log-sum-exp equation
    for _ in range(3):
        z = np.where(mask, logA + d[:, None] * m[None, :], -np.inf)
        zmax = z.max(axis=1)
        w = np.exp(z - zmax[:, None])
        slope = (w * m[None, :]).sum(axis=1) / w.sum(axis=1)
        step = g(d) / np.maximum(slope, 1e-300)
        d = np.clip(d - step, lo, hi)
    return d


def iis_train(model: ExpLM, corpus: TokenSequence, config: IISConfig = IISConfig(),
              table: EventTable | None = None) -> TrainReport:
    """Improved Iterative Scaling for the trigger weights; trigram and penalties stay fixed.

    Features that share a bucket share one weight.  Buckets whose
    features never fire on the observed word keep weight 0.
    """
    table = table or model.events(corpus, config.offset, None, config.stride)
    nf = len(model.features)
    bucket_of = np.arange(nf)
    if any(f.bucket is not None for f in model.features):
        labels = [f.bucket if f.bucket is not None else ("solo", i) for i, f in enumerate(model.features)]
        uniq = {lab: j for j, lab in enumerate(dict.fromkeys(labels))}
        bucket_of = np.array([uniq[lab] for lab in labels])
    nb = int(bucket_of.max()) + 1 if nf else 0
    lam_b = np.zeros(nb)
    for i, f in enumerate(model.features):
        lam_b[bucket_of[i]] = f.lam
    ev_b = bucket_of[table.ev_feat] if nf else np.zeros(0, np.int64)
    ev_group = table.ev_group
    emp = np.bincount(ev_b[table.observed_groups()[ev_group]], minlength=nb).astype(float)
    live = emp > 0
    if nb and not live.all():
        log.info("%d of %d weight groups never fire on observed words; frozen at 0", int((~live).sum()), nb)
        lam_b[~live] = 0.0
    M = int(table.g_size.max()) + 1 if table.g_size.size else 1
    T = table.positions.size

    report = TrainReport()
    lp = table.log_probs(lam_b[bucket_of])
    report.loglik.append(float(lp.mean()))
    report.perplexity.append(math.exp(-report.loglik[-1]))
    for it in range(1, config.max_iter + 1):
        if not live.any():
            report.converged = True
            break
        p_g = table.group_probs(lam_b[bucket_of])
        A = np.bincount(ev_b * M + table.g_size[ev_group], weights=p_g[ev_group],
                        minlength=nb * M).reshape(nb, M)
        delta = np.zeros(nb)
        delta[live] = _solve_iis(A[live], emp[live])
        lam_b += delta
        lp = table.log_probs(lam_b[bucket_of])
        report.loglik.append(float(lp.mean()))
        report.perplexity.append(math.exp(-report.loglik[-1]))
        report.iterations = it
        log.info("IIS iteration %d: train perplexity %.4f", it, report.perplexity[-1])
        if report.loglik[-1] - report.loglik[-2] < config.tol:
            report.converged = True
            break
    model.set_lambdas(lam_b[bucket_of])
    report.lambdas = model.lambdas
    log.debug("trained on %d positions, %d events", T, table.n_events)
    return report


def model_expectations(model: ExpLM, table: EventTable) -> tuple[np.ndarray, np.ndarray]:
    """(empirical, model) expected feature counts over the table's positions."""
    nf = len(model.features)
    p_g = table.group_probs(model.lambdas)
    ev_group = table.ev_group
    model_e = np.bincount(table.ev_feat, weights=p_g[ev_group], minlength=nf)
    emp = np.bincount(table.ev_feat[table.observed_groups()[ev_group]], minlength=nf).astype(float)
    return emp, model_e


def residual_histogram(model: ExpLM, table: EventTable, features: Sequence[int] | None = None,
                       label: str = "") -> DistanceHistogram:
    """Distance curve left unexplained by ``model``, for fitting penalties.

    For each k-index: the number of times a feature's target was the
    observed word with its source at that k, divided by the number the
    model expects there.  The ratio is rescaled to integer pseudo-counts
    with the same total as the observed hits, so ``log(N * fitted_pmf(k))``
    estimates the log Bayes factor of distance k given everything else the
    model already knows.  With all weights at zero the reference is the
    trigram alone.
    """
    K = model.N - MIN_SEPARATION + 1
    sel = np.ones(len(model.features), bool)
    if features is not None:
        sel[:] = False
        sel[np.asarray(features, dtype=np.int64)] = True
    ev = sel[table.ev_feat]
    ev_group = table.ev_group[ev]
    k = table.ev_k[ev].astype(np.int64)
    hit = np.bincount(k, weights=table.observed_groups()[ev_group].astype(float), minlength=K)
    expected = np.bincount(k, weights=table.group_probs(model.lambdas)[ev_group], minlength=K)
    ratio = np.divide(hit, expected, out=np.zeros(K), where=expected > 0)
    counts = np.zeros(model.N, dtype=np.int64)
    if ratio.sum() > 0:
        counts[:K] = np.round(ratio / ratio.sum() * hit.sum()).astype(np.int64)
    return DistanceHistogram(counts, label)


def evaluation_rows(results: Sequence[tuple[str, float]]) -> list[tuple[str, float, float | None]]:
    """Attach percent reduction relative to the first (baseline) row."""
    if not results:
        return []
    base = results[0][1]
    return [(name, ppl, None if i == 0 else 100.0 * (base - ppl) / base) for i, (name, ppl) in enumerate(results)]


def write_report(rows, path: str | Path | None = None, provenance: str | None = None) -> str:
    lines = ([f"# {provenance}"] if provenance else []) + ["model\tperplexity\treduction%"]
    for name, ppl, red in rows:
        lines.append(f"{name}\t{ppl:.4f}\t{'---' if red is None else f'{red:.2f}'}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
