"""Command-line interface.

Every command is a subcommand of the ``flgi`` group and (except ``test``,
whose bare name would shadow the shell builtin) also installs as a standalone
script of the same name.  Thread count for the study drivers comes from the
FLGI_TRIALS_THREADS environment variable unless --threads is given.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np

from . import harness
from .alloc_dist import CategoryState, exact_joint_xy, mc_alloc_prob
from .comparators import FISHER, GLM, comparator_pvalue
from .gittins import build_gittins_table, cached_gittins_table, default_max_count
from .qtest import QNull, QNullConfig, decide, exact_q_null, mc_q_null
from .trial_engine import FLGI, Scenario, replicate


@click.group()
def main():
    """Forward-looking Gittins index trial simulation and allocation-probability
    testing."""


@main.command("gittins-table")
@click.option("--discount", type=float, default=0.99, show_default=True)
@click.option("--horizon", type=int, default=300, show_default=True)
@click.option("--max-count", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gittins_table(discount, horizon, max_count, out):
    """Tabulate Gittins indices and write them as CSV (s,f,index)."""
    table = build_gittins_table(discount, horizon, max_count)
    table.to_csv(out)
    click.echo(f"wrote {out}")


def _parse_state(text: str) -> CategoryState:
    parts = [int(tok) for tok in text.split(",")]
    if len(parts) < 4 or len(parts) % 2:
        raise click.BadParameter("state must be s0,f0,s1,f1[,s2,f2,...]")
    pairs = tuple((parts[i], parts[i + 1]) for i in range(0, len(parts), 2))
    return CategoryState(pairs)


@main.command("alloc-dist")
@click.option("--state", required=True, help="comma-separated counts s0,f0,s1,f1,...")
@click.option("--block-size", type=int, required=True)
@click.option("--categories", type=int, default=1, show_default=True)
@click.option("--exact", "mode_exact", is_flag=True)
@click.option("--mc", "mc_runs", type=int, default=None, help="Monte-Carlo run count")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tested-arm", type=int, default=1, show_default=True)
@click.option("--discount", type=float, default=0.99, show_default=True)
@click.option("--horizon", type=int, default=300, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def alloc_dist_cmd(
    state, block_size, categories, mode_exact, mc_runs, seed, tested_arm,
    discount, horizon, out,
):
    """Exact joint pmf of (X, Y) for one block (CSV x,y,prob), or the
    Monte-Carlo allocation-probability estimate (JSON)."""
    st = _parse_state(state)
    if mode_exact == (mc_runs is not None):
        raise click.UsageError("choose exactly one of --exact or --mc N")
    table = build_gittins_table(
        discount, horizon, max_count=st.total_count() + block_size + 2
    )
    if mode_exact:
        joint = exact_joint_xy(
            st, block_size, categories, table, tested_arm=tested_arm
        )
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "prob"])
            for x in range(block_size + 1):
                for y in range(block_size + 1):
                    writer.writerow([x, y, f"{joint.pmf[x, y]:.12g}"])
    else:
        states = [st] + [
            CategoryState.prior(st.n_arms) for _ in range(categories - 1)
        ]
        est = mc_alloc_prob(
            states, block_size, mc_runs, table, seed, tested_arm=tested_arm
        )
        Path(out).write_text(
            json.dumps(
                {
                    "state": list(map(list, st.counts)),
                    "block_size": block_size,
                    "n_categories": categories,
                    "n_runs": mc_runs,
                    "seed": seed,
                    "tested_arm": tested_arm,
                    "alloc_prob": float(est[0]),
                },
                indent=2,
            )
        )
    click.echo(f"wrote {out}")


@main.command("q-null")
@click.option("--blocks", type=int, required=True)
@click.option("--block-size", type=int, required=True)
@click.option("--categories", type=int, default=1, show_default=True)
@click.option("--p-common", type=float, default=0.5, show_default=True)
@click.option("--exact", "exact_mode", type=click.Choice(["quadrature", "approx"]),
              default=None)
@click.option("--mc", "mc_reps", type=int, default=None)
@click.option("--burn-in", type=int, default=0, show_default=True)
@click.option("--threshold", type=float, default=None, help="default 1/n_arms")
@click.option("--arms", type=int, default=2, show_default=True)
@click.option("--n-mc", type=int, default=1000, show_default=True,
              help="runs per allocation-probability estimate")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--discount", type=float, default=0.99, show_default=True)
@click.option("--horizon", type=int, default=300, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def q_null(blocks, block_size, categories, p_common, exact_mode, mc_reps,
           burn_in, threshold, arms, n_mc, seed, discount, horizon, out):
    """Null pmf of the statistic Q (CSV q,prob plus a .meta.json sidecar)."""
    if (exact_mode is None) == (mc_reps is None):
        raise click.UsageError("choose exactly one of --exact MODE or --mc R")
    cfg = QNullConfig(
        blocks=blocks,
        block_size=block_size,
        n_categories=categories,
        n_arms=arms,
        n_mc=n_mc,
        burn_in=burn_in,
        theta=threshold,
    )
    table = build_gittins_table(
        discount, horizon, default_max_count(blocks * block_size)
    )
    if exact_mode is not None:
        null = exact_q_null(cfg, p_common, table, mode=exact_mode)
    else:
        null = mc_q_null(cfg, p_common, table, reps=mc_reps, seed=seed)
    null.to_csv(out)
    meta = {
        "origin": null.origin,
        "p_common": null.p_common,
        "blocks": null.blocks,
        "block_size": null.block_size,
        "n_categories": null.n_categories,
        "n_arms": null.n_arms,
        "burn_in": null.burn_in,
        "theta": null.theta,
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2))
    click.echo(f"wrote {out}")


def _read_pvalues_or_probs(path: str) -> list[float]:
    values = []
    with open(path) as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            try:
                values.append(float(row[-1]))
            except ValueError:
                continue  # header
    return values


def _load_null(path: str, burn_in, theta) -> QNull:
    pmf = []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "q":
                continue
            pmf.append(float(row[1]))
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    burn_in = meta.get("burn_in", 0) if burn_in is None else burn_in
    theta = meta.get("theta", 0.5) if theta is None else theta
    k_eff = len(pmf) - 1
    return QNull(
        pmf=np.asarray(pmf),
        origin=meta.get("origin", f"file:{path}"),
        p_common=meta.get("p_common", 0.5),
        blocks=meta.get("blocks", k_eff + burn_in),
        block_size=meta.get("block_size", 1),
        n_categories=meta.get("n_categories", 1),
        n_arms=meta.get("n_arms", 2),
        burn_in=burn_in,
        theta=theta,
    )


@main.command("test")
@click.option("--alloc-probs", type=click.Path(exists=True), default=None,
              help="CSV of per-block allocation probabilities (last column)")
@click.option("--null", "null_file", type=click.Path(exists=True), default=None)
@click.option("--method", type=click.Choice([FISHER, GLM]), default=None)
@click.option("--data", type=click.Path(exists=True), default=None,
              help="per-patient CSV category,arm,outcome for --method")
@click.option("--category", type=int, default=0, show_default=True)
@click.option("--tested-arm", type=int, default=1, show_default=True)
@click.option("--pooled", is_flag=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--burn-in", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def test_cmd(alloc_probs, null_file, method, data, category, tested_arm,
             pooled, alpha, burn_in, threshold, seed, out):
    """Run the allocation-probability test (with --alloc-probs and --null) or
    a comparator test (--method on per-patient --data); prints JSON."""
    from .qtest import dichotomize, q_statistic

    if method is not None:
        if data is None:
            raise click.UsageError("--method needs --data")
        rows = np.loadtxt(data, delimiter=",", skiprows=1, ndmin=2)
        record = _RecordShim(rows)
        p = comparator_pvalue(method, record, category, tested_arm, pooled)
        payload = {"method": method, "p_value": p, "reject": p <= alpha,
                   "alpha": alpha}
    else:
        if alloc_probs is None or null_file is None:
            raise click.UsageError("need --alloc-probs and --null (or --method)")
        null = _load_null(null_file, burn_in, threshold)
        probs = _read_pvalues_or_probs(alloc_probs)
        seq = dichotomize(probs, null.theta, null.burn_in)
        decision = decide(q_statistic(seq), null, alpha, seed)
        payload = decision.to_dict()
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text)
    click.echo(text)


class _RecordShim:
    """Adapts a per-patient (category, arm, outcome) array to the record
    interface the comparators consume."""

    def __init__(self, rows: np.ndarray):
        self.patient_category = rows[:, 0].astype(int)
        self.patient_arm = rows[:, 1].astype(int)
        self.patient_outcome = rows[:, 2].astype(int)

    def subgroup_counts(self, category, tested_arm=1, pooled=False):
        mask = (
            np.ones_like(self.patient_category, dtype=bool)
            if pooled
            else self.patient_category == category
        )
        out = []
        for arm in (0, tested_arm):
            arm_mask = mask & (self.patient_arm == arm)
            successes = int(self.patient_outcome[arm_mask].sum())
            out.extend([successes, int(arm_mask.sum()) - successes])
        return tuple(out)


@main.command("simulate")
@click.option("--config", type=click.Path(exists=True), required=True,
              help="scenario JSON")
@click.option("--reps", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--null", "null_file", type=click.Path(exists=True), default=None,
              help="q-null CSV enabling per-rep test decisions")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--traces", is_flag=True, help="write per-replication trace files")
def simulate(config, reps, seed, out, null_file, alpha, traces):
    """Replicate a scenario; write a per-replication summary CSV."""
    scn = Scenario.from_json(Path(config))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = None
    if scn.allocation_rule == FLGI:
        table = cached_gittins_table(
            scn.gittins_discount,
            scn.gittins_horizon,
            default_max_count(scn.n_patients),
        )
    null = _load_null(null_file, None, None) if null_file else None
    from .qtest import dichotomize, q_statistic

    theta = null.theta if null else 1.0 / scn.n_arms
    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["rep", "successes"]
            + [f"arm{a}_count" for a in range(scn.n_arms)]
            + [f"q_cat{z}" for z in range(scn.n_categories)]
        )
        if null:
            header += [f"reject_cat{z}" for z in range(scn.n_categories)]
        writer.writerow(header)
        for i, rec in enumerate(replicate(scn, reps, seed, table=table)):
            qs = [
                q_statistic(
                    dichotomize(rec.alloc_prob_path(z, 1), theta, scn.burn_in)
                )
                for z in range(scn.n_categories)
            ]
            row = (
                [i, rec.total_successes()]
                + rec.arm_counts().tolist()
                + qs
            )
            if null:
                row += [
                    int(decide(q, null, alpha, seed=(seed, i, z)).reject)
                    for z, q in enumerate(qs)
                ]
            writer.writerow(row)
            if traces:
                _write_trace(out_dir, i, rec)
    click.echo(f"wrote {summary_path}")


def _write_trace(out_dir: Path, rep: int, rec) -> None:
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(exist_ok=True)
    scn = rec.scenario
    with open(trace_dir / f"rep{rep:05d}_patients.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient", "block", "category", "arm", "outcome"])
        for i in range(scn.n_patients):
            writer.writerow(
                [i, i // scn.block_size, rec.patient_category[i],
                 rec.patient_arm[i], rec.patient_outcome[i]]
            )
    with open(trace_dir / f"rep{rep:05d}_probs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "category", "arm", "prob"])
        for k in range(scn.n_blocks):
            for z in range(scn.n_categories):
                for a in range(scn.n_arms):
                    writer.writerow([k, z, a, f"{rec.alloc_probs[k, z, a]:.6g}"])


def _grid_from_json(path) -> harness.ExperimentGrid:
    payload = json.loads(Path(path).read_text())
    for key in (
        "p_experimental_values",
        "n_patients_values",
        "n_categories_values",
        "block_size_values",
        "methods",
    ):
        if key in payload:
            payload[key] = tuple(payload[key])
    return harness.ExperimentGrid(**payload)


def _run_grid_command(grid, out, threads, cache_dir):
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = harness.run_power_grid(grid, cache_dir=cache_dir, threads=threads)
    harness.write_results_csv(results, out_dir / "results.csv")
    harness.write_manifest(grid, results, out_dir / "manifest.json")
    click.echo(f"wrote {out_dir / 'results.csv'}")


@main.command("power")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="ExperimentGrid JSON")
@click.option("--demo", is_flag=True, help="run the built-in small demo grid")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--threads", type=int, default=None)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
def power(config, demo, out, threads, cache_dir):
    """Power/type-I study over a scenario grid; writes results.csv + manifest."""
    if demo == (config is not None):
        raise click.UsageError("choose exactly one of --config or --demo")
    grid = harness.demo_grid() if demo else _grid_from_json(config)
    _run_grid_command(grid, out, threads, cache_dir)


@main.command("blocksweep")
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--threads", type=int, default=None)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
def blocksweep(config, out, threads, cache_dir):
    """Power across block sizes (grid JSON with several block_size_values)."""
    grid = _grid_from_json(config)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = harness.run_block_size_sweep(grid, cache_dir=cache_dir, threads=threads)
    harness.write_results_csv(results, out_dir / "results.csv")
    harness.write_manifest(grid, results, out_dir / "manifest.json")
    click.echo(f"wrote {out_dir / 'results.csv'}")


@main.command("multiarm")
@click.option("--scenario", "scenarios", type=int, multiple=True,
              default=(1, 2, 3), show_default=True)
@click.option("--reps", type=int, default=5000, show_default=True)
@click.option("--calibration-reps", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--discount", type=float, default=harness.MULTIARM_DISCOUNT,
              show_default=True)
@click.option("--bonferroni", is_flag=True)
@click.option("--threads", type=int, default=None)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def multiarm(scenarios, reps, calibration_reps, seed, alpha, discount,
             bonferroni, threads, cache_dir, out):
    """Four-arm dose example: derived critical value and scenario powers."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = harness.run_multiarm_example(
        seed=seed,
        reps=reps,
        calibration_reps=calibration_reps,
        alpha=alpha,
        gittins_discount=discount,
        cache_dir=cache_dir,
        threads=threads,
        bonferroni=bonferroni,
        scenarios=tuple(scenarios),
    )
    result["success_rate_note"] = (
        "success = absence of adverse events; study rates 10/19, 16/21, "
        "14/21, 13/19"
    )
    (out_dir / "multiarm.json").write_text(json.dumps(result, indent=2))
    click.echo(f"wrote {out_dir / 'multiarm.json'}")
