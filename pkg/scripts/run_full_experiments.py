#!/usr/bin/env python3
"""Full experiment harness over a licensed treebank (overnight run).

Not part of CI: needs the treebank files plus a real embedding backend (a
running embed-server or a pre-exported archive covering the corpus at the
swept layers).  Steps:

  1. layer sweep on the development set, picking the best layer
  2. evaluation on the test set at that layer (report + score dump)
  3. combine-rule x norm ablation grid on the test set
  4. per-perturbation-subset ablation on the test set
  5. constituent/distituent score bands by span length

Example (a 12-layer base model served on :8331):

    python scripts/run_full_experiments.py \\
        --dev dev.mrg --test test.mrg \\
        --backend http://localhost:8331 --layers 0-12 --workers 8 \\
        --punct-tags ", . : `` '' -LRB- -RRB- -NONE-" --out runs/base
"""

import argparse
import subprocess
import sys
from pathlib import Path


def run(cmd: list[str]) -> None:
    print("+", " ".join(cmd), flush=True)
    subprocess.run(cmd, check=True)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dev", required=True)
    ap.add_argument("--test", required=True)
    ap.add_argument("--backend", required=True, help="http:URL or file:PATH")
    ap.add_argument("--layers", default="0-12")
    ap.add_argument("--workers", default="4")
    ap.add_argument("--punct-tags", default=None)
    ap.add_argument("--out", default="runs/exp")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = [sys.executable, "-m", "distparse.cli"]
    common = ["--backend", args.backend, "--workers", args.workers]
    if args.punct_tags:
        common += ["--punct-tags", args.punct_tags]

    sweep_csv = out / "dev_sweep.csv"
    run(base + ["sweep", "--gold", args.dev, "--layers", args.layers,
                "--report", str(sweep_csv)] + common)
    rows = [
        line.split(",") for line in sweep_csv.read_text().strip().splitlines()[1:]
    ]
    best_layer = max(rows, key=lambda r: float(r[1]))[0]
    print(f"best development layer: {best_layer}")

    run(base + ["evaluate", "--gold", args.test, "--layer", best_layer,
                "--report", str(out / "test_report.json"),
                "--dump-scores", str(out / "test_scores.jsonl")] + common)

    run(base + ["ablate", "--gold", args.test, "--layer", best_layer,
                "--combines", "sumN,Nsum,Nmin,Nmax", "--norms", "sqfro,fro",
                "--report", str(out / "ablate_combine_norm.csv")] + common)

    run(base + ["ablate", "--gold", args.test, "--layer", best_layer,
                "--perturbation-sets", "sub,dc,move;dc,move;sub,move;sub,dc;sub;dc;move",
                "--report", str(out / "ablate_perturbations.csv")] + common)

    run([sys.executable, str(Path(__file__).parent / "distortion_by_length.py"),
         "--dump", str(out / "test_scores.jsonl"), "--gold", args.test,
         "--out", str(out / "length_bands.csv")])
    print(f"all artifacts under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
