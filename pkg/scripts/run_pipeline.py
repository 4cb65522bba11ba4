#!/usr/bin/env python3
"""Run the whole pipeline end to end into a work directory.

Generates the synthetic benchmark, trains the recognizer, extracts concept
models, synthesizes a demo script, and writes the metrics report. Every stage
goes through the CLI so the artifacts match what `pmc` produces by hand.

    python3 scripts/run_pipeline.py --work runs/demo --epochs 200
"""

import argparse
import json
import sys
import time
from pathlib import Path

from pmc.cli import main as pmc


def run(argv: list[str]) -> None:
    print("$ pmc " + " ".join(argv))
    rc = pmc(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--work", type=Path, default=Path("runs/pipeline"))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--sequences-per-concept", type=int, default=10)
    ap.add_argument("--runs", type=int, default=20, help="generation metric runs")
    args = ap.parse_args()

    work = args.work
    work.mkdir(parents=True, exist_ok=True)
    data = work / "data"
    ckpt = work / "checkpoint.json"
    models = work / "models"

    t0 = time.time()
    run(["gen-data", "--out", str(data), "--seed", "0",
         "--sequences-per-concept", str(args.sequences_per_concept)])
    run(["train", "--data", str(data), "--out", str(ckpt),
         "--epochs", str(args.epochs), "--warmup", str(args.epochs),
         "--seed", str(args.seed), "--log", str(work / "training.jsonl")])
    run(["extract", "--data", str(data), "--model", str(ckpt),
         "--out", str(models)])

    script = work / "script.json"
    script.write_text(json.dumps(
        {"entries": [["jumping_jack", 4], ["squat", 3]], "seed": args.seed}
    ))
    run(["synth", str(script), "--models", str(models),
         "-o", str(work / "synthesized.json")])

    run(["eval", "--data", str(data), "--model", str(ckpt),
         "--models", str(models), "--out", str(work / "report.json"),
         "--runs", str(args.runs), "--runs-out", str(work / "report_runs.jsonl"),
         "--seed", str(args.seed)])

    report = json.loads((work / "report.json").read_text())
    print(f"\ndone in {time.time() - t0:.0f}s — {work / 'report.json'}")
    for key, value in report.items():
        if value is not None:
            print(f"  {key:>8s}: {value:.4f}")


if __name__ == "__main__":
    main()
