import json
import subprocess
import sys

import pytest

from lexdist.cli import main, threads
from lexdist.distmodel import FitReport


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus, w = root / "corpus.txt", root / "work"
    assert run("synth", "--out", corpus, "--tokens", 50_000, "--seed", 1) == 0
    assert run("build", "--corpus", corpus, "--work", w) == 0
    assert run("triggers", "--work", w, "--window", 100, "--top-k-triggers", 60, "--max-candidates", 300,
               "--show", 0) == 0
    assert run("train", "--work", w, "--name", "trig", "--window", 100, "--max-iter", 5, "--stride", 2) == 0
    assert run("hist", "--work", w, "--window", 100, "--model", "trig", "--stride", 2) == 0
    fits = sorted((w / "hist").glob("*.tsv"))
    assert run("fit", *fits, "--out-dir", w / "fits", "--max-iter", 300) == 0
    return root, corpus, w


def test_artifacts_written(work):
    _, _, w = work
    for name in ("vocab.txt", "counts.1gram", "counts.2gram", "counts.3gram", "trigram.arpa", "triggers.tsv",
                 "groups.tsv", "hist/self.tsv", "hist/nonself.tsv", "fits/self.fit", "models/trig.json"):
        assert (w / name).exists(), name
    manifest = json.loads((w / "manifest.json").read_text())
    assert {"build", "triggers", "train:trig", "hist"} <= set(manifest["stages"])


def test_artifacts_self_describing(work):
    _, _, w = work
    for name in ("counts.3gram", "triggers.tsv", "groups.tsv"):
        assert (w / name).read_text().startswith("# lexdist ")
    assert "lexdist build version=" in (w / "trigram.arpa").read_text().split("\n", 2)[1]
    assert json.loads((w / "models/trig.json").read_text())["provenance"].startswith("lexdist model version=")


def test_build_idempotent(work, tmp_path):
    _, corpus, w = work
    files = ["vocab.txt", "counts.1gram", "counts.2gram", "counts.3gram", "trigram.arpa"]
    before = {f: (w / f).read_bytes() for f in files}
    w2 = tmp_path / "again"
    assert run("build", "--corpus", corpus, "--work", w2) == 0
    assert {f: (w2 / f).read_bytes() for f in files} == before


def test_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert run("build", "--corpus", missing, "--work", tmp_path / "w") == 2
    assert str(missing) in capsys.readouterr().err
    assert run("fit", tmp_path / "absent.tsv") == 2
    assert "absent.tsv" in capsys.readouterr().err


def test_schema_error_reports_line(work, tmp_path, capsys):
    _, _, w = work
    bad = tmp_path / "bad.tsv"
    lines = (w / "hist/self.tsv").read_text().splitlines()
    lines[5] = "5\tmany"
    bad.write_text("\n".join(lines) + "\n")
    assert run("fit", bad) == 2
    assert "bad.tsv:6" in capsys.readouterr().err
    badfit = tmp_path / "x.fit"
    badfit.write_text((w / "fits/self.fit").read_text().replace("alpha=", "alpha=zz"))
    assert run("dump-curves", "--hist", w / "hist/self.tsv", "--fit", badfit) == 2
    assert "x.fit:" in capsys.readouterr().err


def test_check_passes(work, capsys):
    _, _, w = work
    assert run("check", "--work", w) == 0
    assert capsys.readouterr().out.startswith("PASS")


def test_fit_bundled(tmp_path, capsys):
    assert run("fit", "--bundled", "self_trigger", "--out-dir", tmp_path, "--trace") == 0
    out = capsys.readouterr().out
    assert "converged=true" in out
    trace = [float(x) for x in out.split("trace=")[1].split(",")]
    assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))
    rep = FitReport.load(tmp_path / "self_trigger.fit")
    assert rep.converged and abs(rep.params.alpha - 0.224) < 0.03


def test_eval_zero_triggers(work, capsys):
    _, _, w = work
    assert run("train", "--work", w, "--name", "empty", "--top-k-triggers", 0, "--window", 100) == 0
    assert run("eval", "--work", w, "empty") == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[-1].split("\t")[0] == "empty" and rows[-1].split("\t")[2] == "0.00"
    assert (w / "eval.tsv").read_text().startswith("# lexdist eval")


def test_train_with_distance_and_eval(work, capsys):
    _, _, w = work
    assert run("train", "--work", w, "--name", "dist", "--window", 100, "--distance", "residual",
               "--init-from", "trig", "--max-iter", 3, "--stride", 2) == 0
    model = json.loads((w / "models/dist.json").read_text())
    assert all(f["distance"] is not None for f in model["features"])
    capsys.readouterr()
    assert run("eval", "--work", w, "trig", "dist") == 0
    names = [r.split("\t")[0] for r in capsys.readouterr().out.strip().splitlines()[1:]]
    assert names == ["trigram", "trig", "dist"]


def test_dump_curves(work, tmp_path):
    _, _, w = work
    out = tmp_path / "curve.tsv"
    assert run("dump-curves", "--hist", w / "hist/self.tsv", "--fit", w / "fits/self.fit", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k\tempirical\tfitted" and len(lines) == 101
    emp = [float(l.split("\t")[1]) for l in lines[1:]]
    fit = [float(l.split("\t")[2]) for l in lines[1:]]
    assert abs(sum(emp) - 1) < 1e-9 and abs(sum(fit) - 1) < 1e-9


def test_changed_corpus_detected(work, tmp_path, capsys):
    _, corpus, _ = work
    c2 = tmp_path / "c.txt"
    c2.write_text(corpus.read_text())
    w = tmp_path / "w"
    assert run("build", "--corpus", c2, "--work", w) == 0
    c2.write_text("something else entirely.\n")
    assert run("triggers", "--work", w) == 2
    assert "contents changed" in capsys.readouterr().err


def test_stage_order_enforced(tmp_path, capsys):
    assert run("triggers", "--work", tmp_path) == 2
    assert "build" in capsys.readouterr().err


def test_threads_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("LEXDIST_THREADS", "3")
    assert threads() == 3
    monkeypatch.setenv("LEXDIST_THREADS", "zero")
    corpus = tmp_path / "c.txt"
    corpus.write_text("a b c. " * 100)
    assert run("build", "--corpus", corpus, "--work", tmp_path / "w") == 2
    assert "LEXDIST_THREADS" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lexdist.cli", "fit", str(tmp_path / "missing.tsv")],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "missing.tsv" in res.stderr
