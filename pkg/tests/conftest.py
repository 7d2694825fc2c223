import numpy as np
import pytest

from lexdist.corpus import build_vocab, count_ngrams, encode, tokenize
from lexdist.synth import SynthConfig, generate
from lexdist.trigram import train_trigram

_CRITERIA: dict[int, list[tuple[str, str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    _CRITERIA.setdefault(mark.args[0], []).append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        rows = _CRITERIA[n]
        statuses = {s for _, s, _ in rows}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        detail = " | ".join(f"{name}: {d}" if d else name for name, _, d in rows)
        terminalreporter.write_line(f"criterion {n}: {overall}  ({detail})")


@pytest.fixture(scope="session")
def small_corpus():
    """About 60k tokens of synthetic text: vocab, id sequence and trigram."""
    cfg = SynthConfig(n_tokens=60_000, seed=3)
    toks = tokenize(" ".join(generate(cfg)))
    vocab = build_vocab(toks, min_count=2)
    seq = encode(toks, vocab)
    counts = count_ngrams(seq)
    return vocab, seq, counts, train_trigram(counts, vocab)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
