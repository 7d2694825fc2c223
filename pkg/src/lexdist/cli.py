"""``lexdist``: stage-by-stage pipeline over a work directory.

Work directory layout::

    manifest.json                stage configs and hashes
    vocab.txt                    one token per line, line number = id
    counts.{1,2,3}gram           n-gram counts of the training split
    trigram.arpa                 Katz backoff trigram
    triggers.tsv                 trigger pairs, MI descending
    hist/<group>.tsv             first-occurrence distance histograms
    hist/<group>.residual.tsv    distance curves left unexplained by a model (penalty fits)
    groups.tsv                   pair -> histogram group
    fits/<name>.fit              fitted distance models
    models/<name>.json           trained exponential models
    eval.tsv                     perplexity table

Exit status: 0 on success, 1 when a check fails, 2 on bad input
(missing file, malformed artifact, invalid parameter).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (CorpusError, NgramCounts, TokenizerConfig, Vocabulary, build_vocab, count_ngrams, encode,
                     read_corpus)
from .distmodel import (DegenerateHistogram, FitReport, MixtureParams, ParameterError, curve_table,
                        default_init, fit_mixture_em)
from .explm import (POLICIES, ExpLM, IISConfig, bucket_features, evaluation_rows, feature_model, iis_train,
                    residual_histogram, write_report)
from .provenance import config_hash, header
from .synth import SynthConfig, write_corpus
from .trigram import KatzConfig, TrigramModel, train_trigram
from .triggers import (DistanceHistogram, TriggerSet, collect_histogram, extract_triggers, group_by_frequency,
                       pool_histograms, rare_self_pool)

log = logging.getLogger("lexdist")


class InputError(Exception):
    """Bad command input; reported with exit status 2."""


def threads() -> int:
    """Worker cap from ``LEXDIST_THREADS`` (default: CPU count)."""
    raw = os.environ.get("LEXDIST_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"LEXDIST_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"LEXDIST_THREADS must be a positive integer, got {raw!r}")
    return n


def _require(*paths: Path) -> None:
    for p in paths:
        if not Path(p).exists():
            raise InputError(f"input not found: {p}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# manifest ------------------------------------------------------------------

def _manifest_path(work: Path) -> Path:
    return work / "manifest.json"


def _read_manifest(work: Path) -> dict:
    path = _manifest_path(work)
    if not path.exists():
        return {"version": __version__, "stages": {}}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _record(work: Path, stage: str, config: dict, outputs: list[Path]) -> str:
    m = _read_manifest(work)
    m["version"] = __version__
    h = config_hash(config)
    m["stages"][stage] = {"config": config, "config_hash": h,
                          "outputs": sorted(str(Path(p).relative_to(work)) for p in outputs)}
    _manifest_path(work).write_text(json.dumps(m, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return h


def _stage(work: Path, stage: str) -> dict:
    m = _read_manifest(work)
    if stage not in m["stages"]:
        raise InputError(f"{_manifest_path(work)}: stage '{stage}' has not been run in this work directory")
    return m["stages"][stage]


# shared loading --------------------------------------------------------------

class Data:
    """Vocabulary, train/test id sequences and trigram of a built work directory."""

    def __init__(self, work: Path, need_trigram: bool = True):
        build = _stage(work, "build")
        cfg = build["config"]
        corpus = Path(cfg["corpus"])
        _require(corpus, work / "vocab.txt")
        if _sha256(corpus) != cfg["corpus_sha256"]:
            raise InputError(f"{corpus}: contents changed since 'build'; re-run build")
        self.work = work
        self.build_hash = build["config_hash"]
        self.vocab = Vocabulary.load(work / "vocab.txt")
        tokens = read_corpus(corpus, TokenizerConfig(**cfg["tokenizer"]))
        n_train = cfg["n_train"]
        self.train = encode(tokens[:n_train], self.vocab)
        self.test = encode(tokens[n_train:], self.vocab)
        self.trigram = None
        if need_trigram:
            _require(work / "trigram.arpa")
            self.trigram = TrigramModel.load(work / "trigram.arpa")
            if self.trigram.vocab.words != self.vocab.words:
                raise InputError(f"{work / 'trigram.arpa'}: vocabulary differs from {work / 'vocab.txt'}")

    def triggers(self) -> TriggerSet:
        _require(self.work / "triggers.tsv")
        return TriggerSet.load(self.work / "triggers.tsv", self.vocab)


# commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(n_tokens=args.tokens, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = write_corpus(out, cfg)
    print(f"wrote {n} documents to {out}")
    return 0


def cmd_build(args) -> int:
    corpus = Path(args.corpus)
    _require(corpus)
    if not 0.0 < args.test_fraction < 1.0:
        raise InputError("--test-fraction must lie in (0, 1)")
    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    tok_cfg = TokenizerConfig()
    t0 = time.perf_counter()
    tokens = read_corpus(corpus, tok_cfg)
    n_train = int(round(len(tokens) * (1.0 - args.test_fraction)))
    if n_train < 3 or len(tokens) - n_train < 1:
        raise InputError(f"{corpus}: too few tokens ({len(tokens)}) to split into train and test")
    train = tokens[:n_train]
    vocab = build_vocab(train, min_count=args.vocab_min_count, max_size=args.max_vocab)
    seq = encode(train, vocab)
    counts = count_ngrams(seq, shards=threads())
    katz = KatzConfig(k_cut=args.k_cut)
    model = train_trigram(counts, vocab, katz)
    config = {
        "corpus": str(corpus.resolve()), "corpus_sha256": _sha256(corpus),
        "tokenizer": {"lowercase": tok_cfg.lowercase, "split_punct": tok_cfg.split_punct,
                      "boundary_token": tok_cfg.boundary_token, "sentence_end": tok_cfg.sentence_end},
        "vocab_min_count": args.vocab_min_count, "max_vocab": args.max_vocab,
        "test_fraction": args.test_fraction, "n_train": n_train, "n_test": len(tokens) - n_train,
        "k_cut": katz.k_cut, "epsilon": katz.epsilon, "min_leftover": katz.min_leftover,
    }
    prov = header("build", config)
    vocab.save(work / "vocab.txt")
    outputs = [work / "vocab.txt", *counts.save(work / "counts", vocab, prov), work / "trigram.arpa"]
    model.save(work / "trigram.arpa", prov)
    _record(work, "build", config, outputs)
    print(f"tokens: train={n_train} test={len(tokens) - n_train}  V={vocab.size}  "
          f"bigrams={counts.bigram_keys.size} trigrams={counts.trigram_keys.size}  "
          f"({time.perf_counter() - t0:.1f}s)")
    return 0


def cmd_check(args) -> int:
    work = Path(args.work)
    _require(work / "trigram.arpa")
    model = TrigramModel.load(work / "trigram.arpa")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    # half the contexts are seen bigrams, half are random id pairs
    seen = model.ctx3_keys
    for i in range(args.contexts):
        if i % 2 == 0 and seen.size:
            w2, w1 = divmod(int(seen[rng.integers(seen.size)]), model.V)
        else:
            w1, w2 = (int(x) for x in rng.integers(model.V, size=2))
        p = model.dist(w1, w2)
        worst = max(worst, abs(float(np.sum(p)) - 1.0))
        if np.any(p <= 0):
            print(f"FAIL: non-positive probability in context ({w1}, {w2})")
            return 1
    ok = worst <= 1e-6
    print(f"{'PASS' if ok else 'FAIL'}: {args.contexts} contexts, max |sum q - 1| = {worst:.3e}")
    return 0 if ok else 1


def cmd_triggers(args) -> int:
    work = Path(args.work)
    data = Data(work, need_trigram=False)
    trig = extract_triggers(data.train, data.vocab, window=args.window, top_k=args.top_k_triggers,
                            min_count=args.min_count, max_candidates=args.max_candidates)
    config = {"build": data.build_hash, "window": args.window, "top_k": args.top_k_triggers,
              "min_count": args.min_count, "max_candidates": args.max_candidates}
    trig.save(work / "triggers.tsv", data.vocab, header("triggers", config))
    _record(work, "triggers", config, [work / "triggers.tsv"])
    n_self = sum(p.is_self for p in trig)
    print(f"{len(trig)} trigger pairs ({n_self} self)")
    for p in trig[: args.show]:
        print(f"  {data.vocab.words[p.s]}\t{data.vocab.words[p.t]}\t{p.mi:.6g}\t{p.count}")
    return 0


def _groups(trig: TriggerSet, unigram: np.ndarray, bands: int) -> dict[str, list]:
    out: dict[str, list] = {}
    for name, members in (("self", [p for p in trig if p.is_self]), ("nonself", [p for p in trig if not p.is_self])):
        if not members:
            continue
        if bands <= 1:
            out[name] = members
        else:
            for b, g in enumerate(group_by_frequency(members, unigram, bands)):
                out[f"{name}.b{b}"] = g
    return out


def _reference_model(data: Data, trig: TriggerSet, name: str | None, window: int, policy: str) -> ExpLM:
    """The model whose unexplained distance curve is measured (trigram alone when ``name`` is None)."""
    if name is None:
        return feature_model(data.trigram, trig, N=window, policy=policy)
    path = _model_path(data.work, name)
    _require(path)
    trained = ExpLM.load(path, data.trigram)
    lam = {f.pair.key: f.lam for f in trained.features}
    model = feature_model(data.trigram, trig, N=trained.N, policy=trained.policy)
    model.set_lambdas([lam.get(f.pair.key, 0.0) for f in model.features])
    return model


def cmd_hist(args) -> int:
    work = Path(args.work)
    data = Data(work)
    trig = data.triggers()
    hdir = work / "hist"
    hdir.mkdir(exist_ok=True)
    unigram = np.bincount(data.train.ids, minlength=data.vocab.size)
    groups = _groups(trig, unigram, args.bands)
    config = {"build": data.build_hash, "triggers": _stage(work, "triggers")["config_hash"],
              "window": args.window, "bands": args.bands, "policy": args.policy, "stride": args.stride,
              "model": None if args.model is None else _sha256(_model_path(work, args.model)),
              "rare_max_count": args.rare_max_count}
    prov = header("hist", config)
    per_pair = collect_histogram(data.train, trig, args.window)
    ref = _reference_model(data, trig, args.model, args.window, args.policy)
    table = ref.events(data.train, 0, None, args.stride)
    index = {f.pair.key: i for i, f in enumerate(ref.features)}
    outputs = []
    with (work / "groups.tsv").open("w", encoding="utf-8") as fh:
        fh.write(f"# {prov}\n")
        for name, members in groups.items():
            for p in members:
                fh.write(f"{data.vocab.words[p.s]}\t{data.vocab.words[p.t]}\t{name}\n")
    outputs.append(work / "groups.tsv")
    for name, members in groups.items():
        h = pool_histograms([per_pair[p.key] for p in members], f"{name} ({len(members)} pairs)")
        h.save(hdir / f"{name}.tsv", prov)
        rh = residual_histogram(ref, table, [index[p.key] for p in members],
                                f"{name} residual vs {args.model or 'trigram'}")
        rh.save(hdir / f"{name}.residual.tsv", prov)
        outputs += [hdir / f"{name}.tsv", hdir / f"{name}.residual.tsv"]
        print(f"{name}: {len(members)} pairs, {h.total} co-occurrences")
    rare = rare_self_pool(data.train, max_count=args.rare_max_count, N_window=args.window)
    rare.save(hdir / "rare_self.tsv", prov)
    outputs.append(hdir / "rare_self.tsv")
    print(f"rare_self: {rare.label}, {rare.total} co-occurrences")
    _record(work, "hist", config, outputs)
    return 0


def _bundled(name: str) -> Path:
    path = resources.files("lexdist") / "data" / f"{name}.tsv"
    if not path.is_file():
        raise InputError(f"no bundled histogram named {name!r}")
    return Path(str(path))


def _parse_init(text: str | None) -> MixtureParams | None:
    if text is None:
        return None
    try:
        mu1, mu2, alpha = (float(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"--init expects mu1,mu2,alpha, got {text!r}") from None
    return MixtureParams(mu1, mu2, alpha)


def cmd_fit(args) -> int:
    paths = [Path(p) for p in args.hist] + [_bundled(b) for b in args.bundled]
    if not paths:
        raise InputError("give at least one histogram file (or --bundled NAME)")
    _require(*paths)
    init = _parse_init(args.init)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        hist = DistanceHistogram.load(path)
        start = default_init(hist) if init is None else MixtureParams(init.mu1, init.mu2, init.alpha, hist.N)
        rep = fit_mixture_em(hist, start, tol=args.tol, max_iter=args.max_iter)
        config = {"hist_sha256": _sha256(path), "tol": args.tol, "max_iter": args.max_iter,
                  "init": [start.mu1, start.mu2, start.alpha]}
        name = path.name[: -len(".tsv")] if path.name.endswith(".tsv") else path.name
        dest = (out_dir or path.parent) / f"{name}.fit"
        rep.save(dest, hist.label, header("fit", config))
        p = rep.params
        print(f"{dest}: mu1={p.mu1:.6g} mu2={p.mu2:.6g} alpha={p.alpha:.6g} loglik={rep.log_likelihood:.9g} "
              f"iterations={rep.iterations} converged={str(rep.converged).lower()}")
        if args.trace:
            print("trace=" + ",".join(f"{x:.12g}" for x in rep.trace))
        monotone = all(b >= a - 1e-12 for a, b in zip(rep.trace, rep.trace[1:]))
        if not monotone:
            print(f"FAIL: log-likelihood trace decreased for {path}")
            return 1
    return 0


def _load_groups(work: Path, vocab: Vocabulary) -> dict[tuple[int, int], str]:
    path = work / "groups.tsv"
    _require(path)
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.startswith("#"):
            continue
        try:
            s, t, g = line.split("\t")
            out[(vocab.id_of[s], vocab.id_of[t])] = g
        except (ValueError, KeyError):
            raise CorpusError(f"{path}:{lineno}: malformed group line") from None
    return out


def _model_path(work: Path, name: str) -> Path:
    p = Path(name)
    return p if p.suffix == ".json" else work / "models" / f"{name}.json"


def cmd_train(args) -> int:
    work = Path(args.work)
    data = Data(work)
    trig = data.triggers()
    if args.top_k_triggers is not None:
        trig = TriggerSet(trig[: args.top_k_triggers])
    distances = None
    fit_hashes = {}
    if args.distance != "none":
        groups = _load_groups(work, data.vocab)
        suffix = ".residual.fit" if args.distance == "residual" else ".fit"
        fits = {}
        distances = {}
        for p in trig:
            g = groups.get(p.key)
            if g is None:
                raise InputError(f"pair ({data.vocab.words[p.s]}, {data.vocab.words[p.t]}) has no histogram group; "
                                 "re-run hist")
            if g not in fits:
                path = work / "fits" / f"{g}{suffix}"
                _require(path)
                fits[g] = FitReport.load(path).params
                fit_hashes[g] = _sha256(path)
            distances[p.key] = fits[g]
    model = feature_model(data.trigram, trig, N=args.window, policy=args.policy, distances=distances)
    if args.init_from:
        start = _reference_model(data, trig, args.init_from, args.window, args.policy)
        model.set_lambdas(start.lambdas)
    if args.buckets:
        model = ExpLM(data.trigram, bucket_features(model.features, args.buckets, args.bucket_strategy),
                      model.N, model.policy)
    cfg = IISConfig(max_iter=args.max_iter, tol=args.tol, stride=args.stride)
    t0 = time.perf_counter()
    rep = iis_train(model, data.train, cfg)
    config = {"build": data.build_hash, "triggers": _stage(work, "triggers")["config_hash"],
              "top_k": len(trig), "window": args.window, "policy": args.policy, "buckets": args.buckets,
              "bucket_strategy": args.bucket_strategy, "distance": args.distance, "fits": fit_hashes,
              "init_from": None if args.init_from is None else _sha256(_model_path(work, args.init_from)),
              "max_iter": args.max_iter, "tol": args.tol, "stride": args.stride}
    mdir = work / "models"
    mdir.mkdir(exist_ok=True)
    dest = mdir / f"{args.name}.json"
    model.save(dest, "../trigram.arpa", header("model", config))
    _record(work, f"train:{args.name}", config, [dest])
    print(f"{dest}: {len(trig)} features, {rep.iterations} IIS iterations, converged={str(rep.converged).lower()}, "
          f"train perplexity {rep.perplexity[0]:.4f} -> {rep.perplexity[-1]:.4f} "
          f"({time.perf_counter() - t0:.1f}s)")
    return 0


def cmd_eval(args) -> int:
    work = Path(args.work)
    data = Data(work)
    seq = data.test if args.split == "test" else data.train
    paths = [_model_path(work, m) for m in args.models]
    _require(*paths)
    results = [("trigram", ExpLM(data.trigram, []).perplexity(seq))]
    for p in paths:
        model = ExpLM.load(p, data.trigram)
        results.append((p.stem, model.perplexity(seq)))
    rows = evaluation_rows(results)
    config = {"build": data.build_hash, "split": args.split,
              "models": {p.stem: _sha256(p) for p in paths}}
    text = write_report(rows, work / "eval.tsv", header("eval", config))
    _record(work, "eval", config, [work / "eval.tsv"])
    sys.stdout.write(text.split("\n", 1)[1])
    return 0


def cmd_dump_curves(args) -> int:
    _require(Path(args.hist), Path(args.fit))
    hist = DistanceHistogram.load(args.hist)
    params = FitReport.load(args.fit).params
    if params.N != hist.N:
        raise InputError(f"{args.fit}: fitted support N={params.N} differs from histogram N={hist.N}")
    table = curve_table(hist, params)
    lines = ["k\tempirical\tfitted"] + [f"{int(k)}\t{e!r}\t{f!r}" for k, e, f in table.tolist()]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# whole pipeline --------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the end-to-end run; each stage is an ordinary CLI call."""

    work: str = "work"
    corpus: str | None = None  # None: generate the synthetic corpus into <work>/corpus.txt
    synth_tokens: int = SynthConfig.n_tokens
    seed: int = SynthConfig.seed
    vocab_min_count: int = 2
    test_fraction: float = 0.1
    window: int = 400
    top_k_triggers: int = 1000
    min_count: int = 5
    policy: str = "once"
    buckets: int = 0
    tol: float = 1e-6
    max_iter: int = 50
    stride: int = 5
    fit_tol: float = 1e-9
    fit_max_iter: int = 1000


def run_pipeline(cfg: PipelineConfig, quiet: bool = False) -> dict[str, float]:
    """synth, build, check, triggers, train, hist, fit, train with distance, eval.

    Returns test perplexity by model name ("trigram", "triggers",
    "triggers+distance").
    """
    work = Path(cfg.work)
    corpus = Path(cfg.corpus) if cfg.corpus else work / "corpus.txt"
    common = ["--window", str(cfg.window), "--policy", cfg.policy]
    iis = ["--tol", repr(cfg.tol), "--max-iter", str(cfg.max_iter), "--stride", str(cfg.stride),
           "--buckets", str(cfg.buckets)]
    w = ["--work", str(work)]
    fit = ["--out-dir", str(work / "fits"), "--tol", repr(cfg.fit_tol), "--max-iter", str(cfg.fit_max_iter)]
    # the fit step lists whatever histograms the hist step produced, so steps are built lazily
    steps = []
    if cfg.corpus is None:
        steps.append(lambda: ["synth", "--out", str(corpus), "--tokens", str(cfg.synth_tokens),
                              "--seed", str(cfg.seed)])
    steps += [
        lambda: ["build", "--corpus", str(corpus), *w, "--vocab-min-count", str(cfg.vocab_min_count),
                 "--test-fraction", repr(cfg.test_fraction)],
        lambda: ["check", *w, "--seed", str(cfg.seed)],
        lambda: ["triggers", *w, "--window", str(cfg.window), "--top-k-triggers", str(cfg.top_k_triggers),
                 "--min-count", str(cfg.min_count), "--show", "0"],
        lambda: ["train", *w, "--name", "triggers", *common, *iis],
        lambda: ["hist", *w, *common, "--model", "triggers", "--stride", str(cfg.stride)],
        lambda: ["fit", *sorted(str(p) for p in (work / "hist").glob("*.tsv")), *fit],
        lambda: ["train", *w, "--name", "triggers+distance", *common, *iis, "--distance", "residual",
                 "--init-from", "triggers"],
        lambda: ["eval", *w, "triggers", "triggers+distance"],
    ]
    for make in steps:
        step = make()
        if not quiet:
            print("$ lexdist " + " ".join(step), flush=True)
        rc = main(step)
        if rc != 0:
            raise RuntimeError(f"stage '{step[0]}' failed with exit status {rc}")
    out = {}
    for line in (work / "eval.tsv").read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or line.startswith("model\t"):
            continue
        name, ppl, _ = line.split("\t")
        out[name] = float(ppl)
    return out


# argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lexdist", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"lexdist {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def work(p):
        p.add_argument("--work", default="work", help="work directory (default: ./work)")

    p = sub.add_parser("synth", help="generate the deterministic synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--tokens", type=int, default=SynthConfig.n_tokens)
    p.add_argument("--seed", type=int, default=SynthConfig.seed)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="vocabulary, n-gram counts and trigram model")
    p.add_argument("--corpus", required=True)
    work(p)
    p.add_argument("--vocab-min-count", type=int, default=2)
    p.add_argument("--max-vocab", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=0.1, help="trailing share of tokens held out")
    p.add_argument("--k-cut", type=int, default=KatzConfig.k_cut)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", help="normalization spot-check of the trigram")
    work(p)
    p.add_argument("--contexts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("triggers", help="extract trigger pairs by mutual information")
    work(p)
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--top-k-triggers", type=int, default=1000)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--max-candidates", type=int, default=4000)
    p.add_argument("--show", type=int, default=10)
    p.set_defaults(func=cmd_triggers)

    p = sub.add_parser("hist", help="pooled distance histograms for self / non-self groups")
    work(p)
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--bands", type=int, default=1, help="split each group into source-frequency bands")
    p.add_argument("--policy", choices=POLICIES, default="once")
    p.add_argument("--model", default=None, help="measure residual curves against this trained model "
                   "(default: the trigram alone)")
    p.add_argument("--stride", type=int, default=5, help="use every stride-th position for residual curves")
    p.add_argument("--rare-max-count", type=int, default=100)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("fit", help="fit the three-parameter distance model by EM")
    p.add_argument("hist", nargs="*")
    p.add_argument("--bundled", action="append", default=[], help="fit a bundled histogram (e.g. 'self_trigger')")
    p.add_argument("--out-dir", default=None, help="default: next to each histogram")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--init", default=None, help="mu1,mu2,alpha")
    p.add_argument("--trace", action="store_true", help="print the log-likelihood trace")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train trigger weights by improved iterative scaling")
    work(p)
    p.add_argument("--name", required=True)
    p.add_argument("--top-k-triggers", type=int, default=None, help="use the first K triggers (default: all)")
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--policy", choices=POLICIES, default="once")
    p.add_argument("--buckets", type=int, default=0, help="tie weights within this many buckets (0: untied)")
    p.add_argument("--bucket-strategy", choices=("mi", "count"), default="mi")
    p.add_argument("--distance", choices=("none", "residual", "first"), default="none",
                   help="attach fixed distance penalties fitted to fits/<group>.residual.fit or fits/<group>.fit")
    p.add_argument("--init-from", default=None, help="start IIS from this model's weights")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--stride", type=int, default=5, help="train on every stride-th position")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="perplexity table against the trigram baseline")
    work(p)
    p.add_argument("models", nargs="*", help="model names under models/ or JSON paths")
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-curves", help="TSV of empirical and fitted distance curves")
    p.add_argument("--hist", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dump_curves)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"lexdist: error: input not found: {exc.filename}", file=sys.stderr)
    except (InputError, CorpusError, ParameterError, DegenerateHistogram, ValueError) as exc:
        print(f"lexdist: error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
