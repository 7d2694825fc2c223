"""Distance-model experiments: sampling recovery and fitted-curve tables.

    python3 scripts/reproduce_fits.py --samples 1000000 --out runs/fits
    python3 scripts/reproduce_fits.py --work runs/default --out runs/fits

Part 1 draws histograms from known mixtures and refits them (repeated
over seeds).  Part 2, when --work points at a finished pipeline run,
writes k / empirical / fitted columns for every histogram with a fit.
"""

import argparse
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lexdist.distmodel import FitReport, MixtureParams, curve_table, fit_mixture_em, sample_histogram
from lexdist.triggers import DistanceHistogram


@dataclass(frozen=True)
class FitExperiment:
    out: str = "runs/fits"
    work: str | None = None
    samples: int = 1_000_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    truths: dict = field(default_factory=lambda: {
        "self": (0.29, 0.0168, 0.224),
        "fast_first_stage": (7.0, 0.0148, 0.253),
    })
    N: int = 400


def recovery(cfg: FitExperiment) -> list[str]:
    rows = ["name\tseed\tmu1\tmu2\talpha\titerations\tconverged"]
    for name, (mu1, mu2, alpha) in cfg.truths.items():
        truth = MixtureParams(mu1, mu2, alpha, cfg.N)
        rows.append(f"{name}\ttruth\t{mu1}\t{mu2}\t{alpha}\t-\t-")
        for seed in cfg.seeds:
            rep = fit_mixture_em(sample_histogram(truth, cfg.samples, np.random.default_rng(seed)))
            p = rep.params
            rows.append(f"{name}\t{seed}\t{p.mu1:.5g}\t{p.mu2:.5g}\t{p.alpha:.4f}\t{rep.iterations}\t{rep.converged}")
    return rows


def curves(cfg: FitExperiment, out: Path) -> list[Path]:
    work = Path(cfg.work)
    written = []
    for fit in sorted((work / "fits").glob("*.fit")):
        hist = work / "hist" / (fit.stem + ".tsv")
        if not hist.exists():
            continue
        table = curve_table(DistanceHistogram.load(hist), FitReport.load(fit).params)
        dest = out / f"{fit.stem}.curve.tsv"
        np.savetxt(dest, table, fmt=["%d", "%.10g", "%.10g"], delimiter="\t", header="k\tempirical\tfitted",
                   comments="")
        written.append(dest)
    return written


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default=FitExperiment.out)
    ap.add_argument("--work", default=None)
    ap.add_argument("--samples", type=int, default=FitExperiment.samples)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(FitExperiment.seeds))
    a = ap.parse_args()
    cfg = dataclasses.replace(FitExperiment(), out=a.out, work=a.work, samples=a.samples, seeds=tuple(a.seeds))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = recovery(cfg)
    (out / "recovery.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print("\n".join(rows))
    if cfg.work:
        for p in curves(cfg, out):
            print("wrote", p)


if __name__ == "__main__":
    main()
