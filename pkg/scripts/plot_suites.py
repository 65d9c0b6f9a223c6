"""Turn trace directories into long-format plot data and, if matplotlib is
installed, one log-scale figure per axis."""

import argparse
from pathlib import Path

from neardgd.accounting import read_trace_csv
from neardgd.experiment import PLOT_AXES, emit_plot_data


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("trace_dirs", nargs="+", type=Path)
    parser.add_argument("--no-figures", action="store_true")
    args = parser.parse_args()
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        plt = None
    for d in args.trace_dirs:
        traces = [read_trace_csv(p) for p in sorted(d.glob("*.csv")) if p.name != "summary.csv"]
        for axis in PLOT_AXES:
            emit_plot_data(traces, axis, d / f"plot_{axis}.csv")
            if plt is None or args.no_figures:
                continue
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for tr in traces:
                x = {"iterations": tr.k, "grad_rounds": tr.grad_rounds, "comm_rounds": tr.comm_rounds,
                     "cost": tr.columns.get("cost", tr.k)}[axis]
                ax.semilogy(x, tr.rel_err, label=tr.label)
            ax.set_xlabel(axis)
            ax.set_ylabel("relative error")
            ax.legend(fontsize=7)
            fig.tight_layout()
            fig.savefig(d / f"plot_{axis}.png", dpi=120)
            plt.close(fig)
        print(f"{d}: plot data for {len(traces)} traces")
    if plt is None:
        print("matplotlib not installed; wrote CSV plot data only")


if __name__ == "__main__":
    main()
