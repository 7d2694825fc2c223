"""End-to-end run: synthetic (or given) corpus -> trigram -> triggers -> distance fits -> trained models.

    python3 scripts/run_pipeline.py --work runs/default
    python3 scripts/run_pipeline.py --work runs/mine --corpus my_text.txt --top-k-triggers 2000

Prints the perplexity table and writes every artifact under --work.
"""

import argparse
import dataclasses
import time

from lexdist.cli import PipelineConfig, run_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    for f in dataclasses.fields(PipelineConfig):
        kind = str if f.name in ("work", "corpus", "policy") else type(f.default)
        ap.add_argument("--" + f.name.replace("_", "-"), type=kind, default=f.default)
    cfg = PipelineConfig(**vars(ap.parse_args()))
    t0 = time.perf_counter()
    ppl = run_pipeline(cfg)
    base = ppl["trigram"]
    print(f"\ncompleted in {time.perf_counter() - t0:.0f}s")
    for name, p in ppl.items():
        print(f"{name:20s} {p:10.3f} {100 * (base - p) / base:7.2f}%")


if __name__ == "__main__":
    main()
