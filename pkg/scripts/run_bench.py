"""Run every suite under scripts/suites and write one CSV per suite to results/."""
import argparse
import json
from pathlib import Path

from orienteer.harness import bench, rows_to_csv

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=HERE.parent / "results", type=Path)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--no-timing", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for suite in sorted((HERE / "suites").glob("*.json")):
        rows = bench(json.loads(suite.read_text()), timing=not args.no_timing, workers=args.workers)
        text = rows_to_csv(rows)
        (args.out / f"{suite.stem}.csv").write_text(text)
        print(f"== {suite.stem}\n{text}")


if __name__ == "__main__":
    main()
