"""Tests for the hdgplots figure scripts.

Every renderer is driven from the checked-in sample CSVs under
``tests/data`` and must be deterministic: rendering the same inputs twice
yields byte-identical image files.
"""

import numpy as np
import pytest

from hdgplots import SchemaError, read_table
from hdgplots import convergence, dispersion, eigencurves, profiles
from hdgplots.csvio import CSV_VERSION

from pathlib import Path

DATA = Path(__file__).parent / "data"

HEADER = f"# {CSV_VERSION} config-sha256={'0' * 64}\n"


def write_csv(path, cols, rows, header=HEADER):
    lines = [header.rstrip("\n"), ",".join(cols)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# CSV contract


def test_read_table_parses_sample():
    tab = read_table(DATA / "errors.csv", required=("N", "h", "epsilon"))
    assert len(tab["h"]) > 0
    assert tab["h"].dtype == np.float64
    assert tab["field"].dtype.kind == "U"


def test_read_table_rejects_missing_version_line(tmp_path):
    p = tmp_path / "bad.csv"
    write_csv(p, ["a", "b"], [[1, 2]], header="a,b\n")
    with pytest.raises(SchemaError, match="version header"):
        read_table(p)


def test_read_table_rejects_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    write_csv(p, ["a", "b"], [[1, 2]])
    with pytest.raises(SchemaError, match="missing columns"):
        read_table(p, required=("a", "c"))


def test_read_table_rejects_ragged_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + "a,b\n1,2\n3\n")
    with pytest.raises(SchemaError, match="expected 2 fields"):
        read_table(p)


def test_read_table_rejects_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(HEADER + "a,b\n")
    with pytest.raises(SchemaError, match="no data rows"):
        read_table(p)


# ---------------------------------------------------------------------------
# renders from the checked-in samples, byte-stable


def render_twice(render, tmp_path):
    paths = [tmp_path / "one.png", tmp_path / "two.png"]
    for p in paths:
        render(p)
    blobs = [p.read_bytes() for p in paths]
    assert len(blobs[0]) > 1000
    assert blobs[0] == blobs[1]


def test_convergence_render_is_byte_stable(tmp_path):
    render_twice(lambda p: convergence.render(DATA / "errors.csv", p),
                 tmp_path)


def test_eigencurves_render_is_byte_stable(tmp_path):
    render_twice(
        lambda p: eigencurves.render(
            p, scheme="rk4", curves_csv=DATA / "eigencurves.csv",
            points_csv=DATA / "lambda_s.csv", dt=6.28e-3),
        tmp_path)


def test_profiles_render_is_byte_stable(tmp_path):
    render_twice(lambda p: profiles.render(DATA / "profiles.csv", p),
                 tmp_path)


def test_dispersion_render_is_byte_stable(tmp_path):
    render_twice(
        lambda p: dispersion.render(DATA / "spectrum.csv", p,
                                    theory_csv=DATA / "theory.csv"),
        tmp_path)


# ---------------------------------------------------------------------------
# script behaviours


def test_main_returns_zero_on_success(tmp_path):
    out = tmp_path / "fig.png"
    assert convergence.main([str(DATA / "errors.csv"), str(out)]) == 0
    assert out.exists()


def test_main_schema_mismatch_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert convergence.main([str(bad), str(tmp_path / "fig.png")]) == 2
    assert "error:" in capsys.readouterr().err


def test_eigencurves_region_only_render(tmp_path):
    out = tmp_path / "region.png"
    assert eigencurves.main([str(out), "--scheme", "fe"]) == 0
    assert out.stat().st_size > 1000


def test_eigencurves_empty_curve_file_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text(HEADER + "N,kh,re,im\n")
    rc = eigencurves.main([str(tmp_path / "fig.png"),
                           "--curves", str(empty)])
    assert rc == 2
    assert "no data rows" in capsys.readouterr().err


def test_eigencurves_unknown_scheme_errors(tmp_path):
    with pytest.raises(SchemaError, match="unknown scheme"):
        eigencurves.render(tmp_path / "fig.png", scheme="ab3")


def test_convergence_unknown_field_errors():
    with pytest.raises(SchemaError, match="no such field"):
        convergence.render(DATA / "errors.csv", "/dev/null",
                           fields=["vorticity"])


def test_convergence_synthetic_power_law_lines(tmp_path):
    # an exact h^2 law must plot as a straight line in log-log; check the
    # figure renders and that the underlying data is a perfect power law
    h = np.array([0.5, 0.25, 0.125, 0.0625])
    eps = 3.0 * h**2
    p = tmp_path / "law.csv"
    write_csv(p, ["model", "N", "n_elems", "h", "field", "epsilon"],
              [["advection", 1, int(round(1 / hi)), hi, "u", ei]
               for hi, ei in zip(h, eps)])
    tab = read_table(p, required=("h", "epsilon"))
    slope = np.polyfit(np.log(tab["h"]), np.log(tab["epsilon"]), 1)[0]
    assert abs(slope - 2.0) < 1e-12
    out = tmp_path / "law.png"
    convergence.render(p, out)
    assert out.stat().st_size > 1000


def test_profiles_missing_time_errors(tmp_path):
    with pytest.raises(SchemaError, match="no rows at t"):
        profiles.render(DATA / "profiles.csv", tmp_path / "fig.png",
                        time=123.0)


def test_dispersion_rejects_partial_grid(tmp_path):
    p = tmp_path / "spec.csv"
    write_csv(p, ["omega", "k", "power"],
              [[0, 0, 1], [0, 1, 1], [1, 0, 1]])
    with pytest.raises(SchemaError, match="do not tile"):
        dispersion.render(p, tmp_path / "fig.png")
