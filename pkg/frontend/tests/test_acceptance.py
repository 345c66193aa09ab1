"""Secondary acceptance: figures regenerate from CSVs produced by the
simulator's own command-line interface (the only coupling surface)."""

import shutil
import subprocess

import pytest

from flgi_plots.figures import plot_null, plot_power, read_null_rows


def _run(cmd):
    return subprocess.run(cmd, capture_output=True, text=True, timeout=1800)


needs_primary = pytest.mark.skipif(
    shutil.which("flgi") is None, reason="flgi-trials CLI not installed"
)


@needs_primary
def test_power_figure_from_harness_demo_csv(tmp_path):
    out_dir = tmp_path / "demo"
    proc = _run(["flgi", "power", "--demo", "--out", str(out_dir)])
    assert proc.returncode == 0, proc.stderr
    csv_path = out_dir / "results.csv"
    assert csv_path.exists()
    figure = tmp_path / "power_demo.png"
    plot_power(csv_path, out=figure)
    assert figure.exists() and figure.stat().st_size > 10_000
    print(f"\n[ACCEPTANCE-SECONDARY] 4-panel power figure from {csv_path}: PASS")


@needs_primary
def test_null_bar_chart_from_q_null_cli(tmp_path):
    null_csv = tmp_path / "null.csv"
    proc = _run(
        ["flgi", "q-null", "--blocks", "10", "--block-size", "2",
         "--categories", "2", "--exact", "approx", "--out", str(null_csv)]
    )
    assert proc.returncode == 0, proc.stderr
    rows = read_null_rows(null_csv)
    probs = [p for _, p in rows]
    # the equal-success null is symmetric about the midpoint
    for q in range(len(probs)):
        assert abs(probs[q] - probs[len(probs) - 1 - q]) < 1e-6
    figure = tmp_path / "null.svg"
    plot_null(null_csv, out=figure)
    assert figure.exists()
    print(f"\n[ACCEPTANCE-SECONDARY] symmetric null bar chart from {null_csv}: PASS")
