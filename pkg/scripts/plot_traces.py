"""Plot cumulative suboptimality from trace CSVs written by ``oomucb``.

Usage: python scripts/plot_traces.py results/ [--out traces.png]
"""
import argparse
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from oomucb.oom_ucb import read_trace_csv  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("results")
    ap.add_argument("--out", default="traces.png")
    args = ap.parse_args(argv)
    paths = sorted(glob.glob(os.path.join(args.results, "**", "trace_seed*.csv"), recursive=True))
    if not paths:
        raise SystemExit(f"no trace files under {args.results}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in paths:
        tr = read_trace_csv(p)
        ax.plot(tr["k"], tr["cum_subopt"], lw=0.8, alpha=0.6)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("cumulative suboptimality")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out} ({len(paths)} traces)")


if __name__ == "__main__":
    main()
