"""Log-log convergence figure from a converge-run errors.csv."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .csvio import SchemaError, read_table
from .render import new_figure, save

MARKERS = ("o", "s", "^", "d", "v", "*")


def render(errors_csv, out_path, fields=None):
    data = read_table(errors_csv, required=("N", "h", "field", "epsilon"))
    all_fields = list(dict.fromkeys(data["field"]))
    fields = list(fields) if fields else all_fields
    unknown = [f for f in fields if f not in all_fields]
    if unknown:
        raise SchemaError(f"{errors_csv}: no such field(s) {unknown}, "
                          f"file has {all_fields}")
    orders = sorted(set(int(n) for n in data["N"]))

    fig = new_figure(width=4.8 * len(fields), height=4.2)
    axes = fig.subplots(1, len(fields), squeeze=False)[0]
    for ax, field in zip(axes, fields):
        sel_f = data["field"] == field
        for j, N in enumerate(orders):
            sel = sel_f & (data["N"] == N)
            h = data["h"][sel]
            eps = data["epsilon"][sel]
            idx = np.argsort(h)[::-1]
            h, eps = h[idx], eps[idx]
            ax.loglog(h, eps, marker=MARKERS[j % len(MARKERS)],
                      label=f"N = {N}")
            # reference guide line with the optimal slope N + 1
            ref = eps[0] * (h / h[0]) ** (N + 1)
            ax.loglog(h, ref, ls="--", lw=0.8, color="gray")
        ax.set_xlabel("h")
        ax.set_ylabel(r"$L_2$ error")
        ax.set_title(field)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    save(fig, out_path)


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="log-log convergence plot from an errors.csv")
    ap.add_argument("errors_csv")
    ap.add_argument("out_png")
    ap.add_argument("--fields", nargs="*", default=None,
                    help="subset of fields to panel (default: all)")
    args = ap.parse_args(argv)
    try:
        render(args.errors_csv, args.out_png, args.fields)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
