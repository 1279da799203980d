"""Dispersion heatmap |E_y(omega, k)|^2 with analytic branch overlays."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .csvio import SchemaError, read_table
from .render import new_figure, save


def render(spectrum_csv, out_path, theory_csv=None):
    spec = read_table(spectrum_csv, required=("omega", "k", "power"))
    omega = np.unique(spec["omega"])
    k = np.unique(spec["k"])
    if len(omega) < 2 or len(k) < 2:
        raise SchemaError(f"{spectrum_csv}: spectrum grid is degenerate")
    power = np.full((len(omega), len(k)), np.nan)
    iw = np.searchsorted(omega, spec["omega"])
    ik = np.searchsorted(k, spec["k"])
    power[iw, ik] = spec["power"]
    if np.isnan(power).any():
        raise SchemaError(f"{spectrum_csv}: spectrum rows do not tile the "
                          "(omega, k) grid")

    fig = new_figure(width=6.0, height=4.8)
    ax = fig.gca()
    floor = power[power > 0].min() if (power > 0).any() else 1.0
    img = ax.pcolormesh(k, omega, np.log10(np.maximum(power, floor)),
                        shading="nearest", cmap="viridis", rasterized=True)
    fig.colorbar(img, ax=ax, label=r"$\log_{10}$ power")

    if theory_csv is not None:
        th = read_table(theory_csv, required=("branch", "k", "omega"))
        styles = {"L": ("w--", "L branch"), "R": ("w:", "R branch")}
        for branch, (style, label) in styles.items():
            sel = th["branch"] == branch
            if not sel.any():
                continue
            kk, om = th["k"][sel], th["omega"][sel]
            idx = np.argsort(kk)
            ax.plot(kk[idx], om[idx], style, lw=1.0, label=label)
        ax.legend(loc="upper left")

    ax.set_xlim(k[0], k[-1])
    ax.set_ylim(omega[0], omega[-1])
    ax.set_xlabel("k")
    ax.set_ylabel(r"$\omega$")
    fig.tight_layout()
    save(fig, out_path)


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="dispersion heatmap from spectrum.csv (+ theory.csv)")
    ap.add_argument("spectrum_csv")
    ap.add_argument("out_png")
    ap.add_argument("--theory", default=None, help="theory.csv overlay")
    args = ap.parse_args(argv)
    try:
        render(args.spectrum_csv, args.out_png, args.theory)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
