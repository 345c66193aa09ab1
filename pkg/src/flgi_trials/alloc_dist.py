"""Distributions of the per-block allocation probability for one biomarker
category.

The allocation probability of a category is the ratio sum(Y_j) / sum(X_j)
over n independent simulated future blocks, where X_j counts the category's
patients in run j and Y_j those allocated to the tested experimental arm.
This module provides the exact single-run joint law of (X, Y) by tree
enumeration, a Monte-Carlo estimator of the ratio, its normal approximation
(CDF/pdf of the run-averaged ratio), and the mixture law of the allocation
probability over reachable states under equal success probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import block_run_tallies
from .errors import (
    ConfigurationError,
    DegenerateDistributionError,
    DomainError,
    ResourceBudgetError,
)
from .gittins import GittinsTable

DEFAULT_N_MC = 1000
DEFAULT_NODE_BUDGET = 10_000_000

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) * _INV_SQRT2PI


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class CategoryState:
    """Prior-inclusive success/failure counts per arm for one category.

    Arm 0 is control; arm 1 (or higher) is experimental.  The uninformative
    unit prior means every count is at least 1.
    """

    counts: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.counts) < 2:
            raise ConfigurationError("a category state needs at least two arms")
        for s, f in self.counts:
            if s < 1 or f < 1 or s != int(s) or f != int(f):
                raise ConfigurationError(
                    f"counts must be integers >= 1 (prior included), got {self.counts}"
                )

    @classmethod
    def prior(cls, n_arms: int = 2) -> "CategoryState":
        return cls(tuple((1, 1) for _ in range(n_arms)))

    @classmethod
    def two_arm(cls, s0: int, f0: int, s1: int, f1: int) -> "CategoryState":
        return cls(((s0, f0), (s1, f1)))

    @property
    def n_arms(self) -> int:
        return len(self.counts)

    def mirror(self) -> "CategoryState":
        """Control and experimental counts swapped (two-arm states only)."""
        if self.n_arms != 2:
            raise ConfigurationError("mirror is defined for two-arm states")
        return CategoryState((self.counts[1], self.counts[0]))

    def with_outcome(self, arm: int, success: bool) -> "CategoryState":
        rows = list(self.counts)
        s, f = rows[arm]
        rows[arm] = (s + 1, f) if success else (s, f + 1)
        return CategoryState(tuple(rows))

    def total_count(self) -> int:
        return sum(s + f for s, f in self.counts)


def states_array(states: list[CategoryState]) -> np.ndarray:
    """(n_z, n_arms, 2) int64 array for the numba kernels."""
    n_arms = states[0].n_arms
    if any(s.n_arms != n_arms for s in states):
        raise ConfigurationError("all categories must have the same arm count")
    return np.array([s.counts for s in states], dtype=np.int64)


def _resolve_weights(n_categories: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n_categories, 1.0 / n_categories)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_categories,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigurationError(
            f"weights must be {n_categories} nonnegative values summing to 1"
        )
    return w


# ---------------------------------------------------------------------------
# exact single-run joint law of (X, Y)


@dataclass(frozen=True)
class JointXY:
    """Exact joint pmf of (patients in category, allocations to the tested
    arm) for a single future block."""

    block_size: int
    n_categories: int
    pmf: np.ndarray  # (B+1, B+1); entry [x, y]
    weight: float  # P(a patient belongs to this category)
    conditional: np.ndarray = field(repr=False, default=None)  # [x, y] = P(Y=y|X=x)

    def __post_init__(self):
        self.pmf.setflags(write=False)
        b = self.block_size
        if self.pmf.shape != (b + 1, b + 1):
            raise ConfigurationError("pmf must be (B+1) x (B+1)")
        if np.any(self.pmf < 0):
            raise ConfigurationError("pmf entries must be nonnegative")
        if abs(self.pmf.sum() - 1.0) > 1e-12:
            raise ConfigurationError("pmf mass must equal 1 within 1e-12")
        if np.any(np.triu(self.pmf, k=1) != 0):
            raise ConfigurationError("pmf must vanish for y > x")
        marg = self.pmf.sum(axis=1)
        expected = np.array(
            [
                math.comb(b, x) * self.weight**x * (1 - self.weight) ** (b - x)
                for x in range(b + 1)
            ]
        )
        if np.max(np.abs(marg - expected)) > 1e-12:
            raise ConfigurationError("X marginal must be Binomial(B, weight)")

    def conditional_given_x(self, x: int) -> np.ndarray:
        return self.conditional[x]


def _argmax_arms(state: CategoryState, table: GittinsTable) -> list[int]:
    values = [table.lookup(s, f) for s, f in state.counts]
    top = max(values)
    return [a for a, v in enumerate(values) if top - v <= table.tie_epsilon]


def exact_joint_xy(
    state: CategoryState,
    block_size: int,
    n_categories: int,
    table: GittinsTable,
    weight: float | None = None,
    tested_arm: int = 1,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> JointXY:
    """Enumerate the allocation/outcome tree for one future block.

    Each in-category patient joins the arm with the highest Gittins index for
    the evolving counts (exact ties split evenly) and succeeds with that arm's
    posterior mean.  The conditional law P(Y = y | X = x) from the tree is
    multiplied by the Binomial(B, weight) law of X.
    """
    if block_size < 1:
        raise ConfigurationError("block_size must be >= 1")
    w = 1.0 / n_categories if weight is None else float(weight)
    if not 0.0 <= w <= 1.0:
        raise ConfigurationError(f"category weight must lie in [0, 1], got {w}")

    conditional = np.zeros((block_size + 1, block_size + 1))
    conditional[0, 0] = 1.0
    layer: dict[tuple, float] = {(state, 0): 1.0}
    nodes = 0
    for x in range(1, block_size + 1):
        nxt: dict[tuple, float] = {}
        for (st, y), prob in layer.items():
            arms = _argmax_arms(st, table)
            share = 1.0 / len(arms)
            for arm in arms:
                s, f = st.counts[arm]
                p_success = s / (s + f)
                dy = 1 if arm == tested_arm else 0
                for success, p_outcome in ((True, p_success), (False, 1.0 - p_success)):
                    if p_outcome == 0.0:
                        continue
                    key = (st.with_outcome(arm, success), y + dy)
                    nxt[key] = nxt.get(key, 0.0) + prob * share * p_outcome
            nodes += len(arms) * 2
            if nodes > node_budget:
                raise ResourceBudgetError(
                    f"exact tree exceeded {node_budget} nodes; "
                    "use the Monte-Carlo estimator mc_alloc_prob instead"
                )
        layer = nxt
        for (_, y), prob in layer.items():
            conditional[x, y] += prob

    x_marginal = np.array(
        [
            math.comb(block_size, x) * w**x * (1 - w) ** (block_size - x)
            for x in range(block_size + 1)
        ]
    )
    pmf = conditional * x_marginal[:, None]
    return JointXY(
        block_size=block_size,
        n_categories=n_categories,
        pmf=pmf,
        weight=w,
        conditional=conditional,
    )


def gi_transition_prob(
    state: CategoryState, kappa: int, outcome: int, table: GittinsTable
) -> float:
    """Probability that ``state`` was reached from its predecessor by
    allocating the previous patient to arm ``kappa`` with the given outcome
    (1 success, 0 failure).

    Zero when the predecessor's index on ``kappa`` loses to another arm, the
    full predecessor posterior probability of the outcome when it wins, and a
    per-tie share of it when indices tie.
    """
    if outcome not in (0, 1):
        raise ConfigurationError("outcome must be 0 or 1")
    s, f = state.counts[kappa]
    pred_s = s - outcome
    pred_f = f - (1 - outcome)
    if pred_s < 1 or pred_f < 1:
        raise DomainError(
            f"removing outcome {outcome} from arm {kappa} of {state.counts} "
            "drops a count below the unit prior"
        )
    gi_pred = table.lookup(pred_s, pred_f)
    others = [
        table.lookup(*state.counts[a]) for a in range(state.n_arms) if a != kappa
    ]
    top_other = max(others)
    if gi_pred < top_other - table.tie_epsilon:
        return 0.0
    posterior = (outcome * s + (1 - outcome) * f - 1) / (s + f - 1)
    if gi_pred > top_other + table.tie_epsilon:
        return posterior
    n_tied = 1 + sum(1 for v in others if abs(v - gi_pred) <= table.tie_epsilon)
    return posterior / n_tied


# ---------------------------------------------------------------------------
# Monte-Carlo estimator (the procedure actually run during a trial)


def mc_alloc_matrix(
    states: list[CategoryState],
    block_size: int,
    n_runs: int,
    table: GittinsTable,
    seed,
    weights=None,
) -> np.ndarray:
    """(n_z, n_arms) matrix of per-arm allocation probabilities, estimated as
    per-arm allocation counts over total category counts across ``n_runs``
    simulated blocks.  Rows of categories never seen in any run are all 0."""
    if n_runs < 1:
        raise ConfigurationError("n_runs must be >= 1")
    arr = states_array(states)
    n_z, n_arms = arr.shape[0], arr.shape[1]
    w = _resolve_weights(n_z, weights)
    gen = np.random.default_rng(seed)
    x_tot = np.zeros(n_z, np.int64)
    y_tot = np.zeros((n_z, n_arms), np.int64)
    block_run_tallies(
        gen, arr, block_size, n_runs, table.values, w, table.tie_epsilon, x_tot, y_tot
    )
    out = np.zeros((n_z, n_arms))
    seen = x_tot > 0
    out[seen] = y_tot[seen] / x_tot[seen, None]
    return out


def mc_alloc_prob(
    states: list[CategoryState],
    block_size: int,
    n_runs: int,
    table: GittinsTable,
    seed,
    weights=None,
    tested_arm: int = 1,
) -> np.ndarray:
    """Per-category allocation probability of the tested arm (length n_z)."""
    return mc_alloc_matrix(states, block_size, n_runs, table, seed, weights)[
        :, tested_arm
    ]


# ---------------------------------------------------------------------------
# moments and the normal approximation of the run-averaged ratio


@dataclass(frozen=True)
class AllocMoments:
    """First and second moments of the single-run (X, Y) law, plus the run
    count used when averaging the ratio."""

    mu_x: float
    mu_y: float
    var_x: float
    var_y: float
    cov: float
    n_mc: int = DEFAULT_N_MC

    def __post_init__(self):
        if self.var_x < -1e-12 or self.var_y < -1e-12:
            raise ConfigurationError("variances must be nonnegative")
        if self.cov**2 > self.var_x * self.var_y + 1e-9:
            raise ConfigurationError("covariance violates Cauchy-Schwarz")
        if not 0.0 <= self.mu_y <= self.mu_x + 1e-12:
            raise ConfigurationError("need 0 <= mu_y <= mu_x")
        if self.n_mc < 1:
            raise ConfigurationError("n_mc must be >= 1")

    @property
    def ratio(self) -> float:
        """mu_y / mu_x, the mode of the approximate ratio distribution."""
        return self.mu_y / self.mu_x if self.mu_x > 0 else 0.0


def moments_from_joint(joint: JointXY, n_mc: int = DEFAULT_N_MC) -> AllocMoments:
    b = joint.block_size
    xs = np.arange(b + 1, dtype=float)
    px = joint.pmf.sum(axis=1)
    py = joint.pmf.sum(axis=0)
    mu_x = float(px @ xs)
    mu_y = float(py @ xs)
    var_x = float(px @ xs**2) - mu_x**2
    var_y = float(py @ xs**2) - mu_y**2
    exy = float(xs @ joint.pmf @ xs)
    return AllocMoments(
        mu_x=mu_x,
        mu_y=mu_y,
        var_x=max(var_x, 0.0),
        var_y=max(var_y, 0.0),
        cov=exy - mu_x * mu_y,
        n_mc=n_mc,
    )


def _denominator(c: float, m: AllocMoments) -> float:
    return m.var_y + c * c * m.var_x - 2.0 * c * m.cov


def alloc_cdf(c: float, m: AllocMoments) -> float:
    """P(allocation probability <= c) under the normal approximation of the
    run sums of X and Y."""
    denom = _denominator(c, m)
    if denom <= 0.0:
        raise DegenerateDistributionError(m.ratio)
    arg = math.sqrt(m.n_mc) * (c * m.mu_x - m.mu_y) / math.sqrt(denom)
    return _norm_cdf(arg)


def alloc_pdf(c: float, m: AllocMoments) -> float:
    """Density of the allocation probability; the derivative of alloc_cdf."""
    denom = _denominator(c, m)
    if denom <= 0.0:
        raise DegenerateDistributionError(m.ratio)
    numer = (
        m.mu_x * m.var_y
        + c * m.mu_y * m.var_x
        - m.mu_y * m.cov
        - c * m.cov * m.mu_x
    )
    arg = math.sqrt(m.n_mc) * (c * m.mu_x - m.mu_y) / math.sqrt(denom)
    return math.sqrt(m.n_mc) * numer / denom**1.5 * _norm_pdf(arg)


# ---------------------------------------------------------------------------
# allocation-probability law objects (normal approximation or point mass)


@dataclass(frozen=True)
class AllocLaw:
    """Law of one state's allocation probability: either the normal-ratio
    approximation or a point mass (used when the state allocates
    deterministically, the substitution for a vanishing denominator)."""

    moments: AllocMoments | None
    point: float | None = None

    @property
    def is_point(self) -> bool:
        return self.point is not None

    def cdf(self, c: float) -> float:
        if self.is_point:
            return 1.0 if c >= self.point else 0.0
        return alloc_cdf(c, self.moments)

    def scale_hint(self) -> float:
        """Rough standard deviation of the ratio, for quadrature splitting."""
        m = self.moments
        r = m.ratio
        spread = m.var_y - 2.0 * r * m.cov + r * r * m.var_x
        return max(math.sqrt(max(spread, 0.0) / m.n_mc) / max(m.mu_x, 1e-12), 1e-9)


def alloc_law(m: AllocMoments) -> AllocLaw:
    """Classify a state's moments: all-control states give a point mass at 0,
    all-tested states at 1, fully deterministic (X, Y) a point at the ratio;
    anything else keeps the normal approximation."""
    if m.mu_x <= 1e-12 or m.mu_y <= 1e-12:
        return AllocLaw(moments=m, point=0.0)
    if m.mu_x - m.mu_y <= 1e-12:
        return AllocLaw(moments=m, point=1.0)
    if m.var_x <= 1e-14 and m.var_y <= 1e-14:
        return AllocLaw(moments=m, point=m.ratio)
    return AllocLaw(moments=m)


def law_for_state(
    state: CategoryState,
    block_size: int,
    n_categories: int,
    table: GittinsTable,
    n_mc: int,
    weight: float | None = None,
    tested_arm: int = 1,
) -> AllocLaw:
    joint = exact_joint_xy(
        state, block_size, n_categories, table, weight=weight, tested_arm=tested_arm
    )
    return alloc_law(moments_from_joint(joint, n_mc))


# ---------------------------------------------------------------------------
# adaptive Simpson quadrature for moments of the law over a threshold split


def _adaptive_simpson(fn, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = fn(lm)
    frm = fn(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _adaptive_simpson(
        fn, a, m, fa, flm, fm, left, tol / 2.0, depth - 1
    ) + _adaptive_simpson(fn, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)


def adaptive_simpson(fn, a, b, tol=1e-7, max_depth=48):
    if b <= a:
        return 0.0
    m = 0.5 * (a + b)
    fa, fm, fb = fn(a), fn(m), fn(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(fn, a, b, fa, fm, fb, whole, tol, max_depth)


def _piecewise_integral(fn, a, b, law: AllocLaw, tol) -> float:
    """Integrate fn over (a, b), pre-splitting around the law's peak so the
    adaptive rule cannot step over a narrow mode."""
    if b <= a:
        return 0.0
    r = law.moments.ratio
    sd = law.scale_hint()
    knots = sorted(
        {a, b, *(min(max(r + k * sd, a), b) for k in (-8.0, -2.0, 0.0, 2.0, 8.0))}
    )
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi > lo:
            total += adaptive_simpson(fn, lo, hi, tol=tol)
    return total


def split_raw_moments(
    law: AllocLaw, theta: float, max_degree: int, tol: float = 1e-7
) -> tuple[np.ndarray, np.ndarray]:
    """Raw moments E[c^m; side] of the allocation probability clamped to
    [0, 1], split by the dichotomization threshold.

    Returns (below, above): ``below[m]`` integrates c^m over {c <= theta} and
    ``above[m]`` over {c > theta}; index 0 carries the side masses, which sum
    to 1 exactly.  Normal-tail mass outside [0, 1] is treated as sitting at
    the nearest endpoint.
    """
    below = np.zeros(max_degree + 1)
    above = np.zeros(max_degree + 1)
    if law.is_point:
        side = below if law.point <= theta else above
        for m in range(max_degree + 1):
            side[m] = law.point**m
        return below, above
    f_theta = law.cdf(theta)
    f_one = law.cdf(1.0)
    below[0] = f_theta
    above[0] = 1.0 - f_theta
    # clamped tails: mass below 0 sits at c = 0 (no m >= 1 contribution),
    # mass above 1 sits at c = 1 and contributes 1^m to every degree
    above[1:] += 1.0 - f_one
    mom = law.moments
    for m in range(1, max_degree + 1):
        fn = lambda c, _m=m: c**_m * alloc_pdf(c, mom)
        below[m] = _piecewise_integral(fn, 0.0, theta, law, tol)
        above[m] += _piecewise_integral(fn, theta, 1.0, law, tol)
    return below, above


# ---------------------------------------------------------------------------
# forward recursion of category states under equal success probabilities


def iter_block_successors(state: CategoryState, block_size, weight, p_common, c_moments):
    """Successor states of one category over one real-trial block, with the
    per-patient tested-arm probability integrated against ``c_moments`` (raw
    moments of the allocation probability; index 0 is the branch mass).

    Two-arm states only: each of the Binomial(B, weight) in-category patients
    joins the tested arm with probability c and succeeds with ``p_common``.
    Yields (successor, probability); probabilities sum to c_moments[0].
    """
    if state.n_arms != 2:
        raise ConfigurationError("exact state recursion supports two arms")
    (s0, f0), (s1, f1) = state.counts
    for flat, prob in _iter_successors_raw(
        (s0, f0, s1, f1), block_size, weight, p_common, c_moments
    ):
        yield CategoryState.two_arm(*flat), prob


def _iter_successors_raw(flat_state, block_size, weight, p_common, c_moments):
    """Hot-path variant of iter_block_successors over flat (s0, f0, s1, f1)
    tuples, skipping dataclass construction."""
    s0, f0, s1, f1 = flat_state
    b = block_size
    for x in range(b + 1):
        p_x = math.comb(b, x) * weight**x * (1.0 - weight) ** (b - x)
        if p_x == 0.0:
            continue
        for y in range(x + 1):
            # E[c^y (1-c)^(x-y)] expanded into raw moments; kept even when a
            # float-noise negative so mass conservation stays structural
            c_factor = sum(
                math.comb(x - y, i) * (-1.0) ** i * c_moments[y + i]
                for i in range(x - y + 1)
            )
            # tolerate signed noise up to the alternating-sum amplification of
            # the per-moment quadrature tolerance
            if c_factor < -1e-5:
                raise ArithmeticError(
                    "moment expansion went negative; quadrature tolerance too loose"
                )
            if c_factor == 0.0:
                continue
            alloc_part = math.comb(x, y) * c_factor
            for ds1 in range(y + 1):
                p1 = (
                    math.comb(y, ds1)
                    * p_common**ds1
                    * (1.0 - p_common) ** (y - ds1)
                )
                for ds0 in range(x - y + 1):
                    p0 = (
                        math.comb(x - y, ds0)
                        * p_common**ds0
                        * (1.0 - p_common) ** (x - y - ds0)
                    )
                    prob = p_x * alloc_part * p1 * p0
                    if prob == 0.0:
                        continue
                    succ = (
                        s0 + ds0,
                        f0 + (x - y - ds0),
                        s1 + ds1,
                        f1 + (y - ds1),
                    )
                    yield succ, prob


def point_moments(mass: float, c_star: float, max_degree: int) -> np.ndarray:
    """Pseudo raw moments mass * c*^m: evaluating the transition polynomial at
    a single representative probability instead of integrating."""
    return mass * np.array([c_star**m for m in range(max_degree + 1)])


# ---------------------------------------------------------------------------
# mixture law over reachable states (equal success probabilities)


@dataclass(frozen=True)
class BlockConfig:
    """Design facts needed to evolve one category's state block by block."""

    block_size: int
    n_categories: int
    n_arms: int = 2
    tested_arm: int = 1
    n_mc: int = DEFAULT_N_MC
    weight: float | None = None  # tested category's weight; default 1/n_categories

    def __post_init__(self):
        if self.block_size < 1 or self.n_categories < 1:
            raise ConfigurationError("block_size and n_categories must be >= 1")
        if not 0 <= self.tested_arm < self.n_arms:
            raise ConfigurationError("tested_arm out of range")

    @property
    def category_weight(self) -> float:
        return (
            1.0 / self.n_categories if self.weight is None else float(self.weight)
        )


@dataclass(frozen=True)
class MixtureNull:
    """Allocation-probability law at the start of a block under equal success
    probabilities: a weighted mixture over reachable states, with the mass of
    deterministic states carried as point masses at 0 and 1."""

    block_index: int
    p_common: float
    states: tuple[CategoryState, ...]
    weights: tuple[float, ...]
    components: tuple[AllocMoments, ...]
    point_mass_at_0: float
    point_mass_at_1: float

    def __post_init__(self):
        total = sum(self.weights) + self.point_mass_at_0 + self.point_mass_at_1
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(
                f"mixture mass must sum to 1 within 1e-9, got {total!r}"
            )

    def cdf(self, c: float) -> float:
        # component tail mass outside [0, 1] is clamped to the endpoints,
        # matching the moment-splitting convention used by the recursion
        if c < 0.0:
            return 0.0
        if c >= 1.0:
            return 1.0
        out = self.point_mass_at_0
        for w, m in zip(self.weights, self.components):
            out += w * alloc_law(m).cdf(c)
        return out


def mixture_null(
    k: int,
    cfg: BlockConfig,
    table: GittinsTable,
    p_common: float,
    state_budget: int = 200_000,
    quad_tol: float = 1e-7,
) -> MixtureNull:
    """Mixture law of the allocation probability at the start of block ``k``
    when every arm shares success probability ``p_common``.

    State weights come from a forward recursion in which each earlier block's
    patients were allocated with that block's (random) allocation probability,
    integrated out against its own law.
    """
    if k < 1:
        raise ConfigurationError("block index must be >= 1")
    if cfg.n_arms != 2:
        raise ConfigurationError("exact mixture supports two arms")
    w = cfg.category_weight
    frontier: dict[tuple, float] = {(1, 1, 1, 1): 1.0}
    law_cache: dict[tuple, AllocLaw] = {}

    def law_of(flat: tuple) -> AllocLaw:
        law = law_cache.get(flat)
        if law is None:
            law = law_for_state(
                CategoryState.two_arm(*flat),
                cfg.block_size,
                cfg.n_categories,
                table,
                cfg.n_mc,
                weight=cfg.weight,
                tested_arm=cfg.tested_arm,
            )
            law_cache[flat] = law
        return law

    for _block in range(1, k):
        nxt: dict[tuple, float] = {}
        for flat, prob in frontier.items():
            law = law_of(flat)
            below, above = split_raw_moments(
                law, 0.5, cfg.block_size, tol=quad_tol
            )
            full = below + above
            for succ, t_prob in _iter_successors_raw(
                flat, cfg.block_size, w, p_common, full
            ):
                nxt[succ] = nxt.get(succ, 0.0) + prob * t_prob
        frontier = nxt
        if len(frontier) > state_budget:
            raise ResourceBudgetError(
                f"state recursion exceeded {state_budget} states; "
                "estimate the null by Monte Carlo instead (qtest.mc_q_null)"
            )

    states: list[CategoryState] = []
    weights: list[float] = []
    comps: list[AllocMoments] = []
    pm0 = 0.0
    pm1 = 0.0
    for flat, prob in sorted(frontier.items()):
        law = law_of(flat)
        if law.is_point and law.point == 0.0:
            pm0 += prob
        elif law.is_point and law.point == 1.0:
            pm1 += prob
        else:
            states.append(CategoryState.two_arm(*flat))
            weights.append(prob)
            comps.append(law.moments)
    return MixtureNull(
        block_index=k,
        p_common=p_common,
        states=tuple(states),
        weights=tuple(weights),
        components=tuple(comps),
        point_mass_at_0=pm0,
        point_mass_at_1=pm1,
    )
