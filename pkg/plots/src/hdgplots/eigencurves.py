"""Eigencurves of the semi-discrete operator with the explicit scheme's
region of absolute stability shaded, plus the source eigenvalues as points."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .csvio import SchemaError, read_table
from .render import new_figure, save

# stability polynomial coefficients R(z), low order first
SCHEMES = {
    "fe": (1.0, 1.0),
    "rk4": (1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0),
}


def stability_mask(scheme, re, im):
    z = re[None, :] + 1j * im[:, None]
    R = np.zeros_like(z)
    for k, c in enumerate(SCHEMES[scheme]):
        R += c * z**k
    return np.abs(R) <= 1.0


def render(out_path, scheme="rk4", curves_csv=None, points_csv=None, dt=1.0):
    if scheme not in SCHEMES:
        raise SchemaError(f"unknown scheme {scheme!r}; have {list(SCHEMES)}")

    curves = points = None
    if curves_csv is not None:
        curves = read_table(curves_csv, required=("N", "kh", "re", "im"))
    if points_csv is not None:
        points = read_table(points_csv, required=("re", "im"))

    # extent: cover the scaled data, at least the stability region
    re_lim, im_lim = [-3.2, 0.8], [-3.2, 3.2]
    for tab in (curves, points):
        if tab is not None and len(tab["re"]):
            re_lim[0] = min(re_lim[0], 1.1 * dt * tab["re"].min())
            re_lim[1] = max(re_lim[1], 1.1 * dt * tab["re"].max() + 0.1)
            im_lim[0] = min(im_lim[0], 1.1 * dt * tab["im"].min())
            im_lim[1] = max(im_lim[1], 1.1 * dt * tab["im"].max())

    fig = new_figure(width=5.4, height=5.4)
    ax = fig.gca()
    re = np.linspace(re_lim[0], re_lim[1], 400)
    im = np.linspace(im_lim[0], im_lim[1], 400)
    ax.contourf(re, im, stability_mask(scheme, re, im).astype(float),
                levels=[0.5, 1.5], colors=["mistyrose"])
    ax.contour(re, im, stability_mask(scheme, re, im).astype(float),
               levels=[0.5], colors=["red"], linewidths=0.8)

    if curves is not None:
        for N in sorted(set(int(n) for n in curves["N"])):
            sel = curves["N"] == N
            ax.plot(dt * curves["re"][sel], dt * curves["im"][sel],
                    ".", ms=1.5, label=f"N = {N}")
    if points is not None:
        ax.plot(dt * points["re"], dt * points["im"], "kx", ms=7,
                label=r"$\lambda_S$")

    ax.axhline(0.0, color="k", lw=0.5)
    ax.axvline(0.0, color="k", lw=0.5)
    ax.set_xlabel(r"Re $\lambda \Delta t$")
    ax.set_ylabel(r"Im $\lambda \Delta t$")
    ax.set_title(f"{scheme} stability region")
    if curves is not None or points is not None:
        ax.legend(loc="upper left", markerscale=4)
    fig.tight_layout()
    save(fig, out_path)


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="eigencurve plot with shaded stability region")
    ap.add_argument("out_png")
    ap.add_argument("--scheme", default="rk4")
    ap.add_argument("--curves", default=None, help="eigencurves.csv")
    ap.add_argument("--points", default=None, help="lambda_s.csv")
    ap.add_argument("--dt", type=float, default=1.0,
                    help="timestep used to scale eigenvalues into the z plane")
    args = ap.parse_args(argv)
    try:
        render(args.out_png, args.scheme, args.curves, args.points, args.dt)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
