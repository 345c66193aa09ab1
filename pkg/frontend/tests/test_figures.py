from pathlib import Path

import pytest

from flgi_plots.cli import plot_null_cmd, plot_power_cmd
from flgi_plots.figures import (
    SchemaError,
    plot_null,
    plot_power,
    read_power_rows,
)

DATA = Path(__file__).parent / "data"


def test_power_figure_renders_four_panels(tmp_path):
    out = tmp_path / "power.png"
    plot_power(DATA / "demo_power.csv", out=out)
    assert out.exists() and out.stat().st_size > 10_000


def test_power_figure_svg(tmp_path):
    out = tmp_path / "power.svg"
    plot_power(DATA / "demo_power.csv", out=out)
    assert b"<svg" in out.read_bytes()[:300]


def test_rendering_is_idempotent(tmp_path):
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    plot_power(DATA / "demo_power.csv", out=a)
    plot_power(DATA / "demo_power.csv", out=b)
    assert a.read_bytes() == b.read_bytes()
    a_svg = tmp_path / "a.svg"
    b_svg = tmp_path / "b.svg"
    plot_null(DATA / "demo_null.csv", out=a_svg)
    plot_null(DATA / "demo_null.csv", out=b_svg)
    assert a_svg.read_bytes() == b_svg.read_bytes()


def test_input_not_modified(tmp_path):
    src = DATA / "demo_power.csv"
    before = src.read_bytes()
    plot_power(src, out=tmp_path / "x.png")
    assert src.read_bytes() == before


def test_unknown_method_omitted_with_notice(tmp_path, capsys):
    csv_path = tmp_path / "odd.csv"
    csv_path.write_text(
        "scenario_id,method,metric,value,se\n"
        "N40-B2-nz1-p0.60,alloc_prob_flgi,power,0.4,0.01\n"
        "N40-B2-nz1-p0.60,mystery,power,0.5,0.01\n"
    )
    out = tmp_path / "fig.png"
    plot_power(csv_path, out=out)
    assert out.exists()
    assert "mystery" in capsys.readouterr().out


def test_schema_mismatch_is_descriptive(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(SchemaError, match="expected columns"):
        plot_power(bad, out=tmp_path / "x.png")
    with pytest.raises(SchemaError, match="q,prob"):
        plot_null(bad, out=tmp_path / "x.png")


def test_bad_scenario_id_rejected(tmp_path):
    bad = tmp_path / "bad_id.csv"
    bad.write_text(
        "scenario_id,method,metric,value,se\nweird,alloc_prob_flgi,power,0.4,0.01\n"
    )
    with pytest.raises(SchemaError, match="scenario_id"):
        read_power_rows(bad)


def test_null_bar_chart(tmp_path):
    out = tmp_path / "null.png"
    plot_null(DATA / "demo_null.csv", out=out)
    assert out.exists() and out.stat().st_size > 5_000


def test_cli_entry_points(tmp_path):
    out = tmp_path / "p.png"
    plot_power_cmd([str(DATA / "demo_power.csv"), "--out", str(out)])
    assert out.exists()
    out2 = tmp_path / "n.svg"
    plot_null_cmd([str(DATA / "demo_null.csv"), "--out", str(out2)])
    assert out2.exists()
