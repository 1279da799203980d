"""Batch experiment driver: declarative configs to CSV/checkpoint outputs.

Experiments are described by flat INI-style config files (sections per
concern, every key validated against a schema; unknown keys are rejected).
Each subcommand executes one experiment kind and writes versioned CSV
files whose header line carries the config digest, so identical configs
produce bitwise-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 runtime (solver) failure,
4 I/O failure.  Errors print a machine-readable ``error-category:`` line.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import re
import sys
from pathlib import Path

import numpy as np

from .diagnostics import convergence_order, fourier_dispersion, l2_error
from .hdg import Discretization, HdgSolver, NewtonConfig
from .mesh import build_mesh
from .stability import (RK_SCHEMES, eigencurves, max_stable_dt,
                        source_spectrum, timestep_gain)
from .systems import (DirichletBC, PlasmaParams, TwoFluidState,
                      advection_model, diffusion_model, lr_dispersion,
                      two_fluid_model, wave_model)

CSV_VERSION = "hdgplasma-csv-1"


class ConfigError(Exception):
    category = "config"


class RunError(Exception):
    category = "runtime"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SIDE_KEYS = {"n_i", "n_e", "u_i", "u_e", "ux_i", "ux_e",
              "bx", "by", "bz", "ex", "ey", "ez"}
_JUMP_KEY = re.compile(r"^(left|right)_([a-z_]+)$")

SCHEMA = {
    "experiment": {"kind"},
    "model": {"name", "a", "k", "c", "order_aware_tau",
              "gamma", "m_i", "m_e", "z_i", "z_e", "c_light", "skin",
              "c_h", "c_p", "mu_c", "kappa_c", "r_c", "q_c"},
    "mesh": {"dims", "extents", "periodic"},
    "discretization": {"order"},
    "time": {"dt", "t_end", "scheme"},
    "newton": {"tol", "max_iter", "reuse_jacobian", "line_search"},
    "boundary": {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"},
    "initial": None,  # validated separately (jump primitives)
    "converge": {"meshes", "orders"},
    "stability": {"orders", "h", "samples", "implicit_dt", "schemes",
                  "n_i", "n_e", "u_i", "u_e", "bx", "by", "bz"},
    "output": {"profile_times", "checkpoint_every", "probe_every"},
}

_KINDS = ("converge", "run", "stability", "dispersion")


def load_config(path):
    """Parse and validate a config file; returns (parser, sha256 digest)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    digest = hashlib.sha256(raw).hexdigest()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(raw.decode())
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = SCHEMA[section]
        for key in cp[section]:
            if section == "initial":
                if key in ("kind", "interface"):
                    continue
                m = _JUMP_KEY.match(key)
                if m is None or m.group(2) not in _SIDE_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [initial]")
            elif key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    kind = cp.get("experiment", "kind", fallback=None)
    if kind not in _KINDS:
        raise ConfigError(f"experiment kind must be one of {_KINDS}, got {kind!r}")
    return cp, digest


def _floats(s):
    return [float(tok) for tok in s.split()]


def _ints(s):
    return [int(tok) for tok in s.split()]


def _bools(s):
    out = []
    for tok in s.split():
        if tok.lower() in ("true", "yes", "1"):
            out.append(True)
        elif tok.lower() in ("false", "no", "0"):
            out.append(False)
        else:
            raise ConfigError(f"bad boolean {tok!r}")
    return out


def _fmt(x):
    """Shortest round-trip decimal form; keeps CSV output bitwise stable."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, digest, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(f"# {CSV_VERSION} config-sha256={digest}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _plasma_params(cfg):
    sec = cfg["model"] if "model" in cfg else {}
    kwargs = {}
    for key, attr in (("gamma", "gamma"), ("m_i", "m_i"), ("m_e", "m_e"),
                      ("z_i", "Z_i"), ("z_e", "Z_e"), ("c_light", "c_light"),
                      ("skin", "skin"), ("c_h", "c_h"), ("c_p", "c_p"),
                      ("mu_c", "mu_c"), ("kappa_c", "kappa_c"),
                      ("r_c", "R_c"), ("q_c", "Q_c")):
        if key in sec:
            kwargs[attr] = float(sec[key])
    return PlasmaParams(**kwargs)


def build_model(cfg, order=None):
    sec = cfg["model"]
    name = sec.get("name")
    if name == "advection":
        a = _floats(sec.get("a", "1 0.5 2"))
        return advection_model(a)
    if name == "diffusion":
        return diffusion_model(float(sec.get("k", "1e-2")))
    if name == "wave":
        aware = sec.get("order_aware_tau", "true").lower() in ("true", "yes", "1")
        return wave_model(float(sec.get("c", "1")),
                          order=order if aware else None)
    if name == "two_fluid":
        return two_fluid_model(_plasma_params(cfg), collisional=True)
    if name == "two_fluid_ideal":
        return two_fluid_model(_plasma_params(cfg), collisional=False)
    raise ConfigError(f"unknown model {name!r}")


def _mesh_from_config(cfg):
    sec = cfg["mesh"]
    dims = _ints(sec["dims"])
    ext = _floats(sec["extents"])
    if len(dims) != 3 or len(ext) != 6:
        raise ConfigError("mesh needs 3 dims and 6 extent values")
    periodic = _bools(sec.get("periodic", "true true true"))
    extents = [(ext[0], ext[1]), (ext[2], ext[3]), (ext[4], ext[5])]
    return build_mesh(dims, extents, periodic)


def _newton_config(cfg):
    if "newton" not in cfg:
        return None
    sec = cfg["newton"]
    nc = NewtonConfig()
    if "tol" in sec:
        nc.tol = float(sec["tol"])
    if "max_iter" in sec:
        nc.max_iter = int(sec["max_iter"])
    if "reuse_jacobian" in sec:
        nc.reuse_jacobian = _bools(sec["reuse_jacobian"])[0]
    if "line_search" in sec:
        nc.line_search = _bools(sec["line_search"])[0]
    return nc


def _time_spec(cfg):
    sec = cfg["time"]
    dt = float(sec["dt"])
    t_end = float(sec["t_end"])
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ConfigError("t_end must be an integer number of dt steps")
    return dt, n_steps, sec.get("scheme", "sdirk2")


def _jump_initial(cfg, params):
    """Piecewise-constant two-fluid primitive state split at an interface."""
    sec = cfg["initial"]
    if sec.get("kind") != "jump":
        raise ConfigError(f"unsupported initial kind {sec.get('kind')!r}")
    x0 = float(sec.get("interface", "0"))

    def side_array(side):
        def g(key, default=0.0):
            return float(sec.get(f"{side}_{key}", default))
        st = TwoFluidState.from_primitives(
            params,
            n_i=g("n_i"), n_e=g("n_e"), U_i=g("u_i"), U_e=g("u_e"),
            B=(g("bx"), g("by"), g("bz")), E=(g("ex"), g("ey"), g("ez")),
            u_i=(g("ux_i"), 0.0, 0.0), u_e=(g("ux_e"), 0.0, 0.0),
        )
        return st.collisional_array()

    qL, qR = side_array("left"), side_array("right")

    def ic(x):
        mask = x[0] < x0
        return np.where(mask[None, :], qL[:, None], qR[:, None])

    return ic


def _apply_boundary(model, cfg, ic):
    if "boundary" not in cfg:
        return
    for tag, kind in cfg["boundary"].items():
        if kind != "dirichlet":
            raise ConfigError(f"unsupported boundary kind {kind!r} for {tag}")
        model.boundary[tag] = DirichletBC(state=lambda t, x: ic(x))


def _centroid_values(disc, state):
    """Field values at every element centroid, (n_fields, n_elems)."""
    return disc.eval_state(state, (0.0, 0.0, 0.0))


# collisional field slots used by the run/dispersion reports
_RHO_I, _UI = 0, 4
_RHO_E, _UE = 17, 21
_EY, _BY = 35, 38


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

def run_converge(cfg, outdir, digest):
    meshes = _ints(cfg["converge"]["meshes"])
    orders = _ints(cfg["converge"]["orders"])
    dt, n_steps, scheme = _time_spec(cfg)
    newton = _newton_config(cfg)
    err_rows, slope_rows = [], []
    for N in orders:
        model = build_model(cfg, order=N)
        if model.analytic is None:
            raise ConfigError(f"model {model.name!r} has no analytic solution")
        reports = []
        for nE in meshes:
            mesh = build_mesh((nE,) * 3, [(0.0, 1.0)] * 3, (True,) * 3)
            disc = Discretization(model, mesh, N)
            solver = HdgSolver(disc)
            state = disc.init_state()
            state, t = solver.advance(state, 0.0, dt, n_steps, scheme=scheme,
                                      config=newton)
            rep = l2_error(disc, state, t)
            reports.append(rep)
            for name, eps in zip(rep.field_names, rep.epsilon):
                err_rows.append((model.name, N, nE, rep.h, name, eps))
        slopes = convergence_order(reports)
        for name, slope in zip(model.field_names, slopes):
            slope_rows.append((model.name, N, name, slope))
    write_csv(outdir / "errors.csv", digest,
              ("model", "N", "n_elems", "h", "field", "epsilon"), err_rows)
    write_csv(outdir / "slopes.csv", digest,
              ("model", "N", "field", "slope"), slope_rows)


def _checkpoint(outdir, tag, state, t):
    np.savez(outdir / f"checkpoint_{tag}.npz", q=state.q, u=state.u, t=t,
             lam_x=state.lam[0], lam_y=state.lam[1], lam_z=state.lam[2])


def run_shock_tube(cfg, outdir, digest):
    params = _plasma_params(cfg)
    model = build_model(cfg)
    ic = _jump_initial(cfg, params)
    _apply_boundary(model, cfg, ic)
    mesh = _mesh_from_config(cfg)
    order = _ints(cfg["discretization"]["order"])
    disc = Discretization(model, mesh, order)
    solver = HdgSolver(disc)
    dt, n_steps, scheme = _time_spec(cfg)
    newton = _newton_config(cfg)

    out_sec = cfg["output"] if "output" in cfg else {}
    profile_times = set(_floats(out_sec.get("profile_times", "")))
    ckpt_every = int(out_sec.get("checkpoint_every", "0"))

    state = disc.init_state(ic)
    x = mesh.element_centers[:, 0]
    gm1 = params.gamma - 1.0
    profile_rows, summary_rows = [], []

    def profile(state, t):
        v = _centroid_values(disc, state)
        T_i = params.m_i * gm1 * v[_UI] / v[_RHO_I]
        T_e = params.m_e * gm1 * v[_UE] / v[_RHO_E]
        for j in range(mesh.n_elems):
            profile_rows.append((t, x[j], v[_RHO_I, j], v[_RHO_E, j],
                                 v[_UI, j], v[_UE, j], T_i[j], T_e[j],
                                 v[_BY, j]))

    def summary(step, t, state):
        masses = disc.integrate(state, [_RHO_I, _RHO_E])
        v = _centroid_values(disc, state)
        T_i = params.m_i * gm1 * v[_UI] / v[_RHO_I]
        T_e = params.m_e * gm1 * v[_UE] / v[_RHO_E]
        iters = 0
        if hasattr(state, "stage_reports"):
            iters = max(r.iterations for r in state.stage_reports)
        summary_rows.append((step, t, iters, masses[0], masses[1],
                             float(np.abs(T_i - T_e).max())))

    def callback(step, t, state):
        summary(step, t, state)
        if any(abs(t - pt) < 1e-9 for pt in profile_times):
            profile(state, t)
        if ckpt_every and step and step % ckpt_every == 0:
            _checkpoint(outdir, f"step{step:06d}", state, t)

    outdir.mkdir(parents=True, exist_ok=True)
    try:
        state, t = solver.advance(state, 0.0, dt, n_steps, scheme=scheme,
                                  config=newton, callback=callback)
    except RuntimeError as exc:
        _checkpoint(outdir, "failure", state, float("nan"))
        _flush_shock_outputs(outdir, digest, profile_rows, summary_rows)
        raise RunError(f"implicit step failed: {exc}") from exc
    profile(state, t)
    _checkpoint(outdir, "final", state, t)
    _flush_shock_outputs(outdir, digest, profile_rows, summary_rows)


def _flush_shock_outputs(outdir, digest, profile_rows, summary_rows):
    write_csv(outdir / "profiles.csv", digest,
              ("t", "x", "rho_i", "rho_e", "U_i", "U_e", "T_i", "T_e", "B_y"),
              profile_rows)
    write_csv(outdir / "summary.csv", digest,
              ("step", "t", "newton_iters", "mass_i", "mass_e",
               "max_T_diff"), summary_rows)


def run_dispersion(cfg, outdir, digest):
    params = _plasma_params(cfg)
    model = build_model(cfg)
    ic = _jump_initial(cfg, params)
    _apply_boundary(model, cfg, ic)
    mesh = _mesh_from_config(cfg)
    order = _ints(cfg["discretization"]["order"])
    disc = Discretization(model, mesh, order)
    solver = HdgSolver(disc)
    dt, n_steps, scheme = _time_spec(cfg)
    newton = _newton_config(cfg)
    probe_every = int(cfg["output"].get("probe_every", "1")) \
        if "output" in cfg else 1

    state = disc.init_state(ic)
    x = mesh.element_centers[:, 0]
    samples, times = [], []

    def callback(step, t, state):
        if step % probe_every == 0:
            samples.append(_centroid_values(disc, state)[_EY].copy())
            times.append(t)

    outdir.mkdir(parents=True, exist_ok=True)
    try:
        state, t = solver.advance(state, 0.0, dt, n_steps, scheme=scheme,
                                  config=newton, callback=callback)
    except RuntimeError as exc:
        _checkpoint(outdir, "failure", state, float("nan"))
        raise RunError(f"implicit step failed: {exc}") from exc
    _checkpoint(outdir, "final", state, t)

    samples = np.array(samples)
    period = mesh.extents[0][1] - mesh.extents[0][0]
    write_csv(outdir / "probe.csv", digest,
              ("t",) + tuple(_fmt(xi) for xi in x),
              [(ti,) + tuple(row) for ti, row in zip(times, samples)])

    spec = fourier_dispersion(samples, period, dt * probe_every, times=times)
    rows = [(om, kk, spec.power[i, j])
            for i, om in enumerate(spec.omega)
            for j, kk in enumerate(spec.k)]
    write_csv(outdir / "spectrum.csv", digest, ("omega", "k", "power"), rows)
    write_csv(outdir / "peaks.csv", digest,
              ("omega", "k", "power", "omega_bin", "k_bin"),
              [(om, kk, pw, int(iw), int(ik)) for om, kk, pw, (iw, ik) in
               zip(spec.peak_omega, spec.peak_k, spec.peak_power,
                   spec.peak_index)])

    # theory overlay at the mean background state
    sec = cfg["initial"]

    def mean(key, default=0.0):
        return 0.5 * (float(sec.get(f"left_{key}", default))
                      + float(sec.get(f"right_{key}", default)))

    background = TwoFluidState.from_primitives(
        params, n_i=mean("n_i"), n_e=mean("n_e"),
        U_i=mean("u_i"), U_e=mean("u_e"),
        B=(mean("bx"), mean("by"), mean("bz")))
    theory_rows = []
    for branch, label in ((+1, "L"), (-1, "R")):
        for kk in spec.k[1:]:
            for om in lr_dispersion(kk, params, background, branch=branch):
                if om > 0:
                    theory_rows.append((label, kk, om))
    write_csv(outdir / "theory.csv", digest, ("branch", "k", "omega"),
              theory_rows)


def run_stability(cfg, outdir, digest):
    params = _plasma_params(cfg)
    sec = cfg["stability"]
    state = TwoFluidState.from_primitives(
        params,
        n_i=float(sec["n_i"]), n_e=float(sec["n_e"]),
        U_i=float(sec["u_i"]), U_e=float(sec["u_e"]),
        B=(float(sec.get("bx", "0")), float(sec.get("by", "0")),
           float(sec.get("bz", "0"))))
    orders = _ints(sec["orders"])
    h = float(sec["h"])
    samples = int(sec.get("samples", "257"))
    schemes = sec.get("schemes", "rk4").split()
    for name in schemes:
        if name not in RK_SCHEMES:
            raise ConfigError(f"unknown explicit scheme {name!r}")
    implicit_dt = float(sec.get("implicit_dt", "0")) or None

    spectrum = source_spectrum(state, params)
    write_csv(outdir / "lambda_s.csv", digest, ("re", "im"),
              [(lam.real, lam.imag) for lam in spectrum.lambda_S])

    curve_rows, gain_rows = [], []
    for N in orders:
        curves = eigencurves(state, params, N, h, samples=samples)
        for i, kh in enumerate(curves.kh):
            for lam in curves.eigenvalues[i]:
                curve_rows.append((N, kh, lam.real, lam.imag))
        for scheme in schemes:
            dt_max = max_stable_dt(curves, scheme)
            gain = timestep_gain(implicit_dt, curves, scheme) \
                if implicit_dt else ""
            gain_rows.append((N, scheme, dt_max, implicit_dt or "", gain))
    write_csv(outdir / "eigencurves.csv", digest, ("N", "kh", "re", "im"),
              curve_rows)
    write_csv(outdir / "gains.csv", digest,
              ("N", "scheme", "max_stable_dt", "implicit_dt", "gain"),
              gain_rows)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_RUNNERS = {
    "converge": run_converge,
    "run": run_shock_tube,
    "stability": run_stability,
    "dispersion": run_dispersion,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hdgplasma",
        description="implicit HDG experiment driver (CSV outputs)")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in _KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="BLAS thread cap (needs threadpoolctl)")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized sweeps (recorded only)")
    args = parser.parse_args(argv)

    try:
        cfg, digest = load_config(args.config)
        kind = cfg["experiment"]["kind"]
        if kind != args.command:
            raise ConfigError(
                f"config is a {kind!r} experiment, invoked as {args.command!r}")
        if args.threads and args.threads > 0:
            try:
                import threadpoolctl
                threadpoolctl.threadpool_limits(args.threads)
            except ImportError:
                pass
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _RUNNERS[kind](cfg, outdir, digest)
    except (ConfigError, RunError) as exc:
        print(f"error-category: {exc.category}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2 if exc.category == "config" else 3
    except OSError as exc:
        print("error-category: io", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
