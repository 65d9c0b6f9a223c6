"""Run every experiment config under configs/ and print a compact summary."""

import argparse
from pathlib import Path

from neardgd.experiment import load_config, run_experiment, summarize

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("configs", nargs="*", type=Path, help="defaults to configs/*.ini")
    parser.add_argument("--output-root", type=Path, default=ROOT / "out")
    args = parser.parse_args()
    for path in args.configs or sorted((ROOT / "configs").glob("*.ini")):
        cfg = load_config(path)
        out = args.output_root / path.stem
        result = run_experiment(cfg, out)
        print(f"== {path.name} -> {out}")
        for row in summarize(result.traces.values()):
            print(f"  {row['label']:<22} {row['status']:<12} final {row['final_rel_err']:.3e}"
                  f"  plateau {row['plateau']:.3e}  iters@1e-08 {row['iters@1e-08']}")


if __name__ == "__main__":
    main()
