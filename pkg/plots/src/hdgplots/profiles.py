"""Shock-tube profile figure from a run's profiles.csv."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .csvio import SchemaError, read_table
from .render import new_figure, save

DEFAULT_FIELDS = ("rho_i", "rho_e", "T_i", "T_e", "B_y")


def render(profiles_csv, out_path, time=None, fields=DEFAULT_FIELDS):
    data = read_table(profiles_csv, required=("t", "x"))
    missing = [f for f in fields if f not in data]
    if missing:
        raise SchemaError(f"{profiles_csv}: missing profile fields {missing}")
    times = np.unique(data["t"])
    t = times[-1] if time is None else time
    sel = data["t"] == t
    if not sel.any():
        raise SchemaError(f"{profiles_csv}: no rows at t = {t} "
                          f"(available: {times.tolist()})")
    x = data["x"][sel]
    idx = np.argsort(x)

    fig = new_figure(width=6.4, height=1.9 * len(fields))
    axes = fig.subplots(len(fields), 1, sharex=True, squeeze=False)[:, 0]
    for ax, field in zip(axes, fields):
        ax.plot(x[idx], data[field][sel][idx], lw=1.0)
        ax.set_ylabel(field)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("x")
    axes[0].set_title(f"t = {t:g}")
    fig.tight_layout()
    save(fig, out_path)


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="shock-tube profiles from a profiles.csv")
    ap.add_argument("profiles_csv")
    ap.add_argument("out_png")
    ap.add_argument("--time", type=float, default=None,
                    help="profile time to plot (default: latest)")
    ap.add_argument("--fields", nargs="*", default=list(DEFAULT_FIELDS))
    args = ap.parse_args(argv)
    try:
        render(args.profiles_csv, args.out_png, args.time, args.fields)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
