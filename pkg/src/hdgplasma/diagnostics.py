"""Error measurement, convergence-order fits, and dispersion analysis.

All functions here operate on completed run data and are pure: L2 errors
against analytic solutions via a fixed high-order quadrature, least-squares
convergence slopes with temporal-floor exclusion, and the 2D space-time
Fourier analysis used to extract wave dispersion branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .basis import gauss_lobatto

# error quadrature: 8-point Gauss-Lobatto per axis per element
_ERR_NQ = 8

# fractional change under refinement below which a level counts as floored
FLOOR_CHANGE = 0.05


@dataclass(frozen=True)
class ErrorReport:
    """Per-field L2 errors of one run at one resolution."""

    epsilon: np.ndarray          # (n_fields,)
    h: float                     # largest element extent
    order: tuple[int, ...]
    model_name: str
    time: float
    field_names: tuple[str, ...]


def l2_error(disc, state, t, analytic=None) -> ErrorReport:
    """Per-field sqrt(int (q_h - q_a)^2 dV) via 8^3 Gauss-Lobatto points.

    ``analytic(x, t)`` defaults to the model's analytic solution; ``x`` is
    ``(3, P)`` and the result ``(n_fields, P)``.
    """
    model = disc.model
    if analytic is None:
        analytic = model.analytic
    if analytic is None:
        raise ValueError(f"model {model.name!r} has no analytic solution")
    mesh = disc.mesh
    xg, wg = gauss_lobatto(_ERR_NQ)
    # per-axis basis values at the error quadrature points
    evals = [disc.bases[d].eval(xg) for d in range(3)]
    E = np.einsum("pa,qb,rc->pqrabc", evals[0], evals[1], evals[2])
    E = E.reshape(_ERR_NQ**3, disc.NB)
    w3 = np.einsum("p,q,r->pqr", wg, wg, wg).ravel() * np.prod(mesh.h / 2.0)

    # physical coordinates of the quadrature points in every element
    ref = np.stack(np.meshgrid(xg, xg, xg, indexing="ij"), axis=0)
    ref = ref.reshape(3, -1)
    x = (mesh.element_centers.T[:, :, None]
         + 0.5 * mesh.h[:, None, None] * ref[:, None, :])

    exact = np.asarray(analytic(x.reshape(3, -1), t), dtype=float)
    exact = exact.reshape(model.n_fields, mesh.n_elems, -1)
    num = np.einsum("efb,pb->fep", state.q, E)
    eps = np.sqrt(np.einsum("fep,p->f", (num - exact) ** 2, w3))
    return ErrorReport(
        epsilon=eps, h=float(mesh.h.max()), order=disc.order,
        model_name=model.name, time=float(t),
        field_names=tuple(model.field_names),
    )


def convergence_order(reports) -> np.ndarray:
    """Least-squares slope of log eps vs log h per field.

    Levels sitting at the temporal error floor (eps changing by less than
    ``FLOOR_CHANGE`` relative under refinement, and everything finer) are
    excluded per field.  Raises when fewer than 3 levels are supplied or
    fewer than 2 usable levels remain.
    """
    reports = sorted(reports, key=lambda r: -r.h)
    hs = np.array([r.h for r in reports])
    if len(reports) < 3 or len(set(hs)) < len(hs):
        raise ValueError("convergence fit needs >= 3 levels with distinct h")
    eps = np.stack([r.epsilon for r in reports])  # (levels, fields)
    slopes = np.empty(eps.shape[1])
    for f in range(eps.shape[1]):
        usable = len(reports)
        for i in range(1, len(reports)):
            change = abs(eps[i - 1, f] - eps[i, f]) / max(eps[i - 1, f], 1e-300)
            if change < FLOOR_CHANGE:
                usable = i
                break
        if usable < 2:
            raise ValueError("fewer than 2 non-floored levels to fit")
        slopes[f] = np.polyfit(np.log(hs[:usable]), np.log(eps[:usable, f]), 1)[0]
    return slopes


def floored_levels(reports) -> np.ndarray:
    """Boolean mask (levels, fields): True where a level sits at the floor."""
    reports = sorted(reports, key=lambda r: -r.h)
    eps = np.stack([r.epsilon for r in reports])
    mask = np.zeros(eps.shape, dtype=bool)
    for f in range(eps.shape[1]):
        for i in range(1, eps.shape[0]):
            change = abs(eps[i - 1, f] - eps[i, f]) / max(eps[i - 1, f], 1e-300)
            if change < FLOOR_CHANGE:
                mask[i:, f] = True
                break
    return mask


# ---------------------------------------------------------------------------
# dispersion analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersionSpectrum:
    """Folded one-sided space-time power spectrum with extracted peaks."""

    k: np.ndarray            # (nk,) wavenumbers >= 0
    omega: np.ndarray        # (nw,) frequencies >= 0
    power: np.ndarray        # (nw, nk); sums to the two-sided total
    peak_k: np.ndarray
    peak_omega: np.ndarray
    peak_power: np.ndarray   # sorted strongest first
    peak_index: np.ndarray   # (npeaks, 2) (omega bin, k bin)


def fourier_dispersion(samples, period, dt_sample, times=None) -> DispersionSpectrum:
    """2D Fourier analysis of uniformly sampled probe data.

    ``samples`` has shape (nt, nx): one spatial trace per time sample.  A
    Hann window is applied in time to reduce leakage.  Both propagation
    directions are folded onto the (k >= 0, omega >= 0) quadrant; peaks are
    3x3 local maxima with power >= 1e-3 of the global maximum.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be 2D (time, space)")
    nt, nx = samples.shape
    if times is not None:
        steps = np.diff(np.asarray(times, dtype=float))
        if not np.allclose(steps, dt_sample, rtol=1e-8, atol=1e-12):
            raise ValueError("non-uniform time sampling")
    window = np.hanning(nt)
    P2 = np.abs(np.fft.fft2(samples * window[:, None])) ** 2

    # fold the two-sided spectrum: each (m, n) bin maps to (|omega|, |k|)
    m = np.arange(nt)
    n = np.arange(nx)
    mf = np.minimum(m, nt - m)
    nf = np.minimum(n, nx - n)
    nw, nk = nt // 2 + 1, nx // 2 + 1
    power = np.zeros((nw, nk))
    np.add.at(power, (mf[:, None], nf[None, :]), P2)

    omega = 2.0 * np.pi * np.arange(nw) / (nt * dt_sample)
    k = 2.0 * np.pi * np.arange(nk) / period

    local_max = ndimage.maximum_filter(power, size=3, mode="nearest") == power
    keep = local_max & (power >= 1e-3 * power.max())
    iw, ik = np.nonzero(keep)
    order = np.argsort(power[iw, ik])[::-1]
    iw, ik = iw[order], ik[order]
    return DispersionSpectrum(
        k=k, omega=omega, power=power,
        peak_k=k[ik], peak_omega=omega[iw], peak_power=power[iw, ik],
        peak_index=np.stack([iw, ik], axis=1),
    )
