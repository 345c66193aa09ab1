"""Benchmark tests run on observed outcomes rather than allocation
probabilities: a one-sided Fisher exact test, a logistic-regression Wald test,
and empirical calibration of their rejection thresholds to a target type-I
error rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError
from .gittins import GittinsTable
from .trial_engine import Scenario, replicate

FISHER = "fisher"
GLM = "glm"

IRLS_MAX_ITER = 50
IRLS_DEVIANCE_TOL = 1e-10
SEPARATION_BETA = 20.0


@dataclass(frozen=True)
class ContingencyTable2x2:
    ctrl_success: int
    ctrl_failure: int
    exp_success: int
    exp_failure: int

    def __post_init__(self):
        counts = (
            self.ctrl_success,
            self.ctrl_failure,
            self.exp_success,
            self.exp_failure,
        )
        if any(c < 0 for c in counts):
            raise ConfigurationError("counts must be nonnegative")
        if sum(counts) == 0:
            raise ConfigurationError("table must contain at least one patient")

    @property
    def n_ctrl(self) -> int:
        return self.ctrl_success + self.ctrl_failure

    @property
    def n_exp(self) -> int:
        return self.exp_success + self.exp_failure

    @property
    def total_successes(self) -> int:
        return self.ctrl_success + self.exp_success

    def has_empty_margin(self) -> bool:
        return (
            self.n_ctrl == 0
            or self.n_exp == 0
            or self.total_successes == 0
            or self.ctrl_failure + self.exp_failure == 0
        )


@dataclass(frozen=True)
class FisherResult:
    p_value: float
    degenerate: bool = False


def fisher_one_sided(table: ContingencyTable2x2) -> FisherResult:
    """Exact hypergeometric tail probability that the experimental arm shows
    at least the observed number of successes given the margins."""
    if table.has_empty_margin():
        return FisherResult(p_value=1.0, degenerate=True)
    total = table.n_ctrl + table.n_exp
    p = float(
        stats.hypergeom.sf(
            table.exp_success - 1, total, table.total_successes, table.n_exp
        )
    )
    return FisherResult(p_value=min(p, 1.0))


@dataclass(frozen=True)
class GlmResult:
    beta0: float
    beta1: float
    p_value: float
    se: float
    converged: bool
    separated: bool

    @property
    def flagged(self) -> bool:
        return self.separated or not self.converged


def _binomial_deviance(y, mu):
    eps = 1e-12
    return -2.0 * float(np.sum(y * np.log(mu + eps) + (1 - y) * np.log(1 - mu + eps)))


def glm_wald(data) -> GlmResult:
    """One-sided Wald test of a positive treatment effect in the logistic
    model logit(P(success)) = b0 + b1 * treated.

    ``data`` holds per-patient (arm, outcome) pairs; any nonzero arm counts as
    treated.  Fitting is iteratively reweighted least squares; separation or
    non-convergence yields a flagged non-rejection instead of an error.
    """
    arr = np.asarray(list(data), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ConfigurationError("data must be a nonempty list of (arm, outcome)")
    treated = (arr[:, 0] != 0).astype(float)
    y = arr[:, 1]
    if treated.min() == treated.max():
        raise ConfigurationError("need at least one patient on each arm")
    x = np.column_stack([np.ones_like(treated), treated])
    beta = np.zeros(2)
    deviance = _binomial_deviance(y, np.full_like(y, 0.5))
    converged = False
    separated = False
    info = np.eye(2)
    for _ in range(IRLS_MAX_ITER):
        eta = np.clip(x @ beta, -30.0, 30.0)
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        info = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(info, x.T @ (y - mu))
        except np.linalg.LinAlgError:
            separated = True
            break
        beta = beta + step
        if abs(beta[1]) > SEPARATION_BETA:
            separated = True
            break
        new_deviance = _binomial_deviance(y, 1.0 / (1.0 + np.exp(-x @ beta)))
        if abs(deviance - new_deviance) < IRLS_DEVIANCE_TOL:
            deviance = new_deviance
            converged = True
            break
        deviance = new_deviance
    if separated or not converged:
        return GlmResult(
            beta0=float(beta[0]),
            beta1=float(beta[1]),
            p_value=1.0,
            se=float("nan"),
            converged=converged,
            separated=separated,
        )
    se = float(np.sqrt(np.linalg.inv(info)[1, 1]))
    z = beta[1] / se
    return GlmResult(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        p_value=float(stats.norm.sf(z)),
        se=se,
        converged=True,
        separated=False,
    )


# ---------------------------------------------------------------------------
# empirical type-I calibration


@dataclass(frozen=True)
class CalibratedThreshold:
    test: str
    threshold: float
    alpha: float
    reps: int

    def rejects(self, p_value: float) -> bool:
        return p_value <= self.threshold


def threshold_from_pvalues(p_values, alpha: float) -> float:
    """Largest observed p-value whose empirical rejection rate stays at or
    below ``alpha``; 0.0 when even the smallest observed p-value overruns."""
    p = np.sort(np.asarray(p_values, dtype=float))
    k = int(np.floor(alpha * p.size))
    if k < 1:
        return 0.0
    candidate = p[k - 1]
    # ties at the candidate can push the realized rate above alpha
    while candidate > 0.0 and np.sum(p <= candidate) > alpha * p.size:
        below = p[p < candidate]
        if below.size == 0:
            return 0.0
        candidate = below[-1]
    return float(candidate)


def comparator_pvalue(
    test: str, record, category: int = 0, tested_arm: int = 1, pooled: bool = False
) -> float:
    """p-value of a comparator test applied to one trial record, restricted
    to the tested subgroup unless ``pooled``."""
    if test == FISHER:
        counts = record.subgroup_counts(category, tested_arm, pooled=pooled)
        return fisher_one_sided(ContingencyTable2x2(*counts)).p_value
    if test == GLM:
        mask = (
            np.ones_like(record.patient_category, dtype=bool)
            if pooled
            else record.patient_category == category
        )
        arm_mask = (record.patient_arm == 0) | (record.patient_arm == tested_arm)
        keep = mask & arm_mask
        arms = (record.patient_arm[keep] == tested_arm).astype(int)
        if arms.size == 0 or arms.min() == arms.max():
            return 1.0  # a subgroup arm is empty: flagged non-rejection
        return glm_wald(np.column_stack([arms, record.patient_outcome[keep]])).p_value
    raise ConfigurationError(f"unknown comparator {test!r}")


def calibrate_threshold(
    test: str,
    null_scenario: Scenario,
    reps: int,
    alpha: float,
    seed,
    table: GittinsTable | None = None,
    category: int = 0,
    tested_arm: int = 1,
    pooled: bool = False,
) -> CalibratedThreshold:
    """Rejection threshold for a comparator such that the null rejection rate
    over ``reps`` simulated trials equals ``alpha`` (from below)."""
    if alpha * reps < 50:
        raise ConfigurationError(
            "calibration needs alpha * reps >= 50 for a stable threshold"
        )
    p_values = [
        comparator_pvalue(test, rec, category, tested_arm, pooled)
        for rec in replicate(null_scenario, reps, seed, table=table)
    ]
    return CalibratedThreshold(
        test=test,
        threshold=threshold_from_pvalues(p_values, alpha),
        alpha=alpha,
        reps=reps,
    )
