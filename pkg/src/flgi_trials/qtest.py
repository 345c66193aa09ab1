"""Superiority test built on per-block allocation probabilities.

Each post-burn-in block contributes a bit: 1 when the tested arm's allocation
probability strictly exceeds the reciprocal of the arm count, 0 otherwise.
The statistic Q sums those bits; its null distribution (equal success
probabilities on all arms) comes from an exact forward recursion over
reachable category states or from Monte-Carlo replication, and the decision
rule is a randomized test that is exact at the nominal level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import simulate_trial_kernel
from .alloc_dist import (
    CategoryState,
    _iter_successors_raw,
    law_for_state,
    point_moments,
    split_raw_moments,
)
from .errors import ConfigurationError, ContractError, ResourceBudgetError
from .gittins import GittinsTable
from .trial_engine import FLGI, Scenario, TrialRecord, rep_seed_sequences

QUADRATURE = "quadrature"
EXPECTATION_APPROX = "approx"
MONTE_CARLO = "monte-carlo"

# exact-recursion guards, in total post-prior patients (blocks * block size)
QUADRATURE_PATIENT_BUDGET = 12
EXPECTATION_PATIENT_BUDGET = 20

DEFAULT_QUAD_TOL = 1e-7


@dataclass(frozen=True)
class AlphaSequence:
    """Dichotomized allocation probabilities for one (category, arm) pair."""

    bits: tuple[int, ...]
    theta: float
    burn_in: int

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ConfigurationError("theta must lie strictly inside (0, 1)")
        if not 0 <= self.burn_in < len(self.bits):
            raise ConfigurationError("burn_in must be < number of blocks")

    def post_burn_in(self) -> tuple[int, ...]:
        return self.bits[self.burn_in :]


def dichotomize(alloc_probs, theta: float, burn_in: int = 0) -> AlphaSequence:
    """Bit per block: 1 iff the allocation probability strictly exceeds
    ``theta``.  Bits are kept for every block; Q later ignores the first
    ``burn_in`` of them."""
    bits = tuple(int(p > theta) for p in np.asarray(alloc_probs, dtype=float))
    return AlphaSequence(bits=bits, theta=theta, burn_in=burn_in)


def q_statistic(seq: AlphaSequence) -> int:
    return int(sum(seq.post_burn_in()))


def state_count(k: int, block_size: int) -> int:
    """Number of potential two-arm category states at the end of block ``k``:
    compositions of up to k*B patients into the four count cells."""
    if k < 0 or block_size < 1:
        raise ConfigurationError("need k >= 0 and block_size >= 1")
    return sum(math.comb(eta + 3, 3) for eta in range(k * block_size + 1))


@dataclass(frozen=True)
class QNullConfig:
    """Design facts the null distribution of Q depends on."""

    blocks: int
    block_size: int
    n_categories: int = 1
    n_arms: int = 2
    tested_arm: int = 1
    category: int = 0
    n_mc: int = 1000
    burn_in: int = 0
    theta: float | None = None  # default: 1 / n_arms
    weights: tuple | None = None

    def __post_init__(self):
        if self.blocks < 1 or self.block_size < 1:
            raise ConfigurationError("blocks and block_size must be >= 1")
        if not 0 <= self.burn_in < self.blocks:
            raise ConfigurationError("burn_in must be < blocks")
        if not 0 <= self.category < self.n_categories:
            raise ConfigurationError("category index out of range")
        if not 0 <= self.tested_arm < self.n_arms:
            raise ConfigurationError("tested_arm out of range")

    @property
    def threshold(self) -> float:
        return 1.0 / self.n_arms if self.theta is None else self.theta

    @property
    def k_eff(self) -> int:
        return self.blocks - self.burn_in

    def category_weight(self) -> float:
        if self.weights is None:
            return 1.0 / self.n_categories
        return float(self.weights[self.category])


@dataclass(frozen=True)
class QNull:
    """Null pmf of Q with the design it was computed for."""

    pmf: np.ndarray  # length k_eff + 1
    origin: str
    p_common: float
    blocks: int
    block_size: int
    n_categories: int
    n_arms: int
    burn_in: int
    theta: float

    def __post_init__(self):
        self.pmf.setflags(write=False)
        if self.pmf.shape != (self.k_eff + 1,):
            raise ConfigurationError("pmf must have k_eff + 1 entries")
        if abs(self.pmf.sum() - 1.0) > 1e-9:
            raise ConfigurationError("null pmf must sum to 1 within 1e-9")

    @property
    def k_eff(self) -> int:
        return self.blocks - self.burn_in

    def tail(self, q: int) -> float:
        """P(Q > q)."""
        if q < 0:
            return 1.0
        if q >= self.k_eff:
            return 0.0
        return float(self.pmf[q + 1 :].sum())

    def p_value(self, q: int) -> float:
        """P(Q >= q)."""
        return self.tail(q - 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("q,prob\n")
            for q, p in enumerate(self.pmf):
                fh.write(f"{q},{p:.12g}\n")


def _exact_recursion(cfg: QNullConfig, p_common, table, mode, quad_tol):
    """Forward recursion over (category state, Q so far).

    Block by block, each state's allocation-probability law is split at the
    threshold; each side's mass transitions the state with the per-patient
    tested-arm probability integrated against that side's raw moments
    (quadrature mode) or evaluated at the side's conditional mean
    (expectation-approximation mode).  Burn-in blocks transition on the full
    law since their bit never reaches Q.
    """
    b = cfg.block_size
    theta = cfg.threshold
    w = cfg.category_weight()
    use_approx = mode == EXPECTATION_APPROX
    moment_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def side_moments(flat: tuple) -> tuple[np.ndarray, np.ndarray]:
        cached = moment_cache.get(flat)
        if cached is None:
            law = law_for_state(
                CategoryState.two_arm(*flat),
                b,
                cfg.n_categories,
                table,
                cfg.n_mc,
                weight=w,
                tested_arm=cfg.tested_arm,
            )
            cached = split_raw_moments(law, theta, b, tol=quad_tol)
            moment_cache[flat] = cached
        return cached

    pmf = np.zeros(cfg.k_eff + 1)
    frontier: dict[tuple, float] = {((1, 1, 1, 1), 0): 1.0}
    for k in range(1, cfg.blocks + 1):
        counted = k > cfg.burn_in
        last = k == cfg.blocks
        nxt: dict[tuple, float] = {}
        for (flat, q), prob in frontier.items():
            below, above = side_moments(flat)
            if last:
                pmf[q] += prob * below[0]
                pmf[q + (1 if counted else 0)] += prob * above[0]
                continue
            if counted:
                branches = ((0, below), (1, above))
            else:
                branches = ((0, below + above),)
            for bit, mom in branches:
                mass = mom[0]
                if mass <= 0.0:
                    continue
                if use_approx:
                    mom = point_moments(mass, mom[1] / mass, b)
                q_next = q + (bit if counted else 0)
                for succ, t_prob in _iter_successors_raw(flat, b, w, p_common, mom):
                    key = (succ, q_next)
                    nxt[key] = nxt.get(key, 0.0) + prob * t_prob
        frontier = nxt
    return np.maximum(pmf, 0.0)


def exact_q_null(
    cfg: QNullConfig,
    p_common: float,
    table: GittinsTable,
    mode: str = EXPECTATION_APPROX,
    patient_budget: int | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> QNull:
    """Exact null pmf of Q under equal success probability ``p_common``.

    Feasible only for small designs; the default budgets cap the total
    post-prior patient count per mode.
    """
    if mode not in (QUADRATURE, EXPECTATION_APPROX):
        raise ConfigurationError(f"unknown exact mode {mode!r}")
    if cfg.n_arms != 2:
        raise ConfigurationError(
            "the exact recursion supports two arms; use mc_q_null for more"
        )
    patients = cfg.blocks * cfg.block_size
    budget = patient_budget
    if budget is None:
        budget = (
            QUADRATURE_PATIENT_BUDGET
            if mode == QUADRATURE
            else EXPECTATION_PATIENT_BUDGET
        )
    if patients > budget:
        raise ResourceBudgetError(
            f"{patients} patients exceed the {mode} budget of {budget}; "
            "estimate the null with mc_q_null instead"
        )
    pmf = _exact_recursion(cfg, p_common, table, mode, quad_tol)
    return QNull(
        pmf=pmf,
        origin=f"exact-{mode}",
        p_common=p_common,
        blocks=cfg.blocks,
        block_size=cfg.block_size,
        n_categories=cfg.n_categories,
        n_arms=cfg.n_arms,
        burn_in=cfg.burn_in,
        theta=cfg.threshold,
    )


def null_scenario(cfg: QNullConfig, p_common: float) -> Scenario:
    """Forward-looking trial with every arm at ``p_common``."""
    probs = tuple(
        tuple(p_common for _ in range(cfg.n_categories)) for _ in range(cfg.n_arms)
    )
    return Scenario(
        n_patients=cfg.blocks * cfg.block_size,
        block_size=cfg.block_size,
        success_probs=probs,
        n_categories=cfg.n_categories,
        n_arms=cfg.n_arms,
        allocation_rule=FLGI,
        mc_runs=cfg.n_mc,
        burn_in=cfg.burn_in,
        category_weights=cfg.weights,
    )


def q_from_record(
    record: TrialRecord, category: int, tested_arm: int, theta: float, burn_in: int
) -> int:
    path = record.alloc_prob_path(category, tested_arm)
    return q_statistic(dichotomize(path, theta, burn_in))


def mc_q_null(
    cfg: QNullConfig,
    p_common: float,
    table: GittinsTable,
    reps: int,
    seed,
) -> QNull:
    """Empirical null pmf of Q from replicated null trials.

    Streams identically to ``trial_engine.replicate`` on the equivalent
    scenario, but skips per-replication record construction.
    """
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    scn = null_scenario(cfg, p_common)
    if not table.covers_trial(scn.n_patients):
        raise ConfigurationError(
            f"table covers counts up to {table.max_count}; the null trials need "
            f"{scn.n_patients + 2}"
        )
    k, n_z, n_arms = scn.n_blocks, scn.n_categories, scn.n_arms
    prior = np.ones((n_z, n_arms, 2), dtype=np.int64)
    alloc = np.empty((k, n_z, n_arms))
    pat_c = np.empty(scn.n_patients, dtype=np.int64)
    pat_a = np.empty(scn.n_patients, dtype=np.int64)
    pat_o = np.empty(scn.n_patients, dtype=np.int64)
    final = np.empty_like(prior)
    weights = scn.weights_array()
    probs = scn.probs_array()
    theta = cfg.threshold
    counts = np.zeros(cfg.k_eff + 1)
    for child in rep_seed_sequences(seed, reps):
        simulate_trial_kernel(
            np.random.default_rng(child),
            prior,
            k,
            scn.block_size,
            scn.mc_runs,
            table.values,
            weights,
            probs,
            True,
            False,
            table.tie_epsilon,
            alloc,
            pat_c,
            pat_a,
            pat_o,
            final,
        )
        path = alloc[cfg.burn_in :, cfg.category, cfg.tested_arm]
        counts[int((path > theta).sum())] += 1
    return QNull(
        pmf=counts / reps,
        origin=f"{MONTE_CARLO}({reps})",
        p_common=p_common,
        blocks=cfg.blocks,
        block_size=cfg.block_size,
        n_categories=cfg.n_categories,
        n_arms=cfg.n_arms,
        burn_in=cfg.burn_in,
        theta=cfg.threshold,
    )


def critical_value(null: QNull, alpha: float) -> tuple[int, float]:
    """Smallest c with P(Q > c) < alpha, and the boundary rejection
    probability gamma that makes the randomized test exactly level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    c_q = null.k_eff
    while c_q > 0 and null.tail(c_q - 1) < alpha:
        c_q -= 1
    tail = null.tail(c_q)
    mass = float(null.pmf[c_q])
    gamma = 0.0 if mass == 0.0 else (alpha - tail) / mass
    return c_q, min(max(gamma, 0.0), 1.0)


@dataclass(frozen=True)
class TestDecision:
    q: int
    c_q: int
    gamma: float
    alpha: float
    reject: bool
    p_value: float

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "c_q": self.c_q,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "reject": self.reject,
            "p_value": self.p_value,
        }


def decide(q: int, null: QNull, alpha: float, seed) -> TestDecision:
    """Randomized level-alpha decision for an observed Q."""
    c_q, gamma = critical_value(null, alpha)
    if q > c_q:
        reject = True
    elif q == c_q and gamma > 0.0:
        reject = bool(np.random.default_rng(seed).random() < gamma)
    else:
        reject = False
    return TestDecision(
        q=q,
        c_q=c_q,
        gamma=gamma,
        alpha=alpha,
        reject=reject,
        p_value=null.p_value(q),
    )


def run_qtest(
    record: TrialRecord,
    category: int,
    tested_arm: int,
    null: QNull,
    alpha: float,
    seed,
) -> TestDecision:
    """Dichotomize the record's allocation probabilities, compute Q, and apply
    the randomized decision rule against ``null``."""
    scn = record.scenario
    mismatches = [
        name
        for name, got, want in [
            ("blocks", scn.n_blocks, null.blocks),
            ("block_size", scn.block_size, null.block_size),
            ("n_categories", scn.n_categories, null.n_categories),
            ("n_arms", scn.n_arms, null.n_arms),
            ("burn_in", scn.burn_in, null.burn_in),
        ]
        if got != want
    ]
    if mismatches:
        raise ContractError(
            f"trial record and null distribution disagree on: {', '.join(mismatches)}"
        )
    q = q_from_record(record, category, tested_arm, null.theta, null.burn_in)
    return decide(q, null, alpha, seed)


def expected_rejection_rate(qs, null: QNull, alpha: float) -> float:
    """Mean rejection probability of the randomized test over observed Q
    values (the boundary randomization averaged out)."""
    c_q, gamma = critical_value(null, alpha)
    qs = np.asarray(qs)
    return float(np.mean((qs > c_q) + gamma * (qs == c_q)))
