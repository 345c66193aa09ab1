"""Gittins indices for Bernoulli bandit arms with Beta posteriors.

The index of an arm with ``s`` observed successes and ``f`` observed failures
(prior counts included) is the per-period retirement reward that makes an
optimal player indifferent between pulling the arm and retiring.  It is found
by bisection on the retirement reward, with the continuation value computed by
value iteration over the lattice of future posterior counts, truncated at a
configurable depth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigurationError, TableLookupError

DEFAULT_DISCOUNT = 0.99
DEFAULT_HORIZON = 300
DEFAULT_TIE_EPSILON = 1e-9
BISECTION_TOL = 1e-6

# Neighbouring indices differ by far more than the bisection tolerance, so the
# monotone brackets below are widened by this safety margin only.
_BRACKET_MARGIN = 1e-4


class Comparison(enum.Enum):
    A_WINS = "A_wins"
    B_WINS = "B_wins"
    TIE = "Tie"


@dataclass(frozen=True, eq=False)
class GittinsTable:
    """Immutable table of indices for all (s, f) with s, f >= 1, s+f <= max_count.

    ``eq=False`` keeps identity-based hashing so tables can key caches.
    """

    discount: float
    horizon: int
    max_count: int
    values: np.ndarray  # (max_count + 1, max_count + 1), NaN off the triangle
    tie_epsilon: float = DEFAULT_TIE_EPSILON

    def __post_init__(self):
        self.values.setflags(write=False)

    def lookup(self, successes: int, failures: int) -> float:
        if (
            successes < 1
            or failures < 1
            or successes + failures > self.max_count
        ):
            raise TableLookupError(successes, failures, self.max_count)
        return float(self.values[successes, failures])

    def covers_trial(self, n_patients: int) -> bool:
        """True when every state reachable with ``n_patients`` total outcomes
        on top of the unit prior stays inside the table."""
        return self.max_count >= n_patients + 2

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("s,f,index\n")
            for s in range(1, self.max_count):
                for f in range(1, self.max_count - s + 1):
                    fh.write(f"{s},{f},{self.values[s, f]:.10f}\n")


@njit(cache=True)
def _continuation_minus_retire(s, f, beta, horizon, lam, work):
    """Value of pulling once then acting optimally, minus the retirement value.

    ``work`` holds the value function over one depth level of the cone rooted
    at (s, f); entry j corresponds to j successes among the extra pulls.  At
    the truncation depth the arm is valued at max(retire, always-pull), the
    always-pull value being exact for a Beta posterior mean martingale.
    """
    retire = lam / (1.0 - beta)
    inv = 1.0 / (1.0 - beta)
    for j in range(horizon + 1):
        mu = (s + j) / (s + f + horizon)
        v = mu * inv
        work[j] = v if v > retire else retire
    cont_root = -1.0
    for d in range(horizon - 1, -1, -1):
        total = s + f + d
        for j in range(d + 1):
            mu = (s + j) / total
            cont = mu + beta * (mu * work[j + 1] + (1.0 - mu) * work[j])
            if d == 0:
                cont_root = cont
            work[j] = cont if cont > retire else retire
    return cont_root - retire


@njit(cache=True)
def _bisect_index(s, f, beta, horizon, lo, hi, tol, work):
    while hi - lo > tol:
        lam = 0.5 * (lo + hi)
        if _continuation_minus_retire(s, f, beta, horizon, lam, work) > 0.0:
            lo = lam
        else:
            hi = lam
    return 0.5 * (lo + hi)


@njit(cache=True)
def _build_values(max_count, beta, horizon, tol, margin):
    values = np.full((max_count + 1, max_count + 1), np.nan)
    work = np.empty(horizon + 1)
    for f in range(1, max_count):
        for s in range(1, max_count - f + 1):
            mu = s / (s + f)
            lo = mu
            hi = 1.0
            # indices are strictly monotone in s and antitone in f, so the
            # already-computed neighbours bracket the root
            if f >= 2:
                hi = min(1.0, values[s, f - 1] + margin)
            if s >= 2:
                lo = max(lo, values[s - 1, f] - margin)
            values[s, f] = _bisect_index(
                float(s), float(f), beta, horizon, lo, hi, tol, work
            )
    return values


def build_gittins_table(
    discount: float,
    horizon: int = DEFAULT_HORIZON,
    max_count: int = 20,
    tie_epsilon: float = DEFAULT_TIE_EPSILON,
) -> GittinsTable:
    """Tabulate indices for every state with s, f >= 1 and s + f <= max_count."""
    if not 0.0 <= discount < 1.0:
        raise ConfigurationError(f"discount must lie in [0, 1), got {discount}")
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    if max_count < 2:
        raise ConfigurationError(f"max_count must be >= 2, got {max_count}")
    if discount == 0.0:
        # zero discount: the index is exactly the posterior mean
        values = np.full((max_count + 1, max_count + 1), np.nan)
        for s in range(1, max_count):
            for f in range(1, max_count - s + 1):
                values[s, f] = s / (s + f)
    else:
        values = _build_values(
            max_count, discount, horizon, BISECTION_TOL, _BRACKET_MARGIN
        )
    return GittinsTable(
        discount=discount,
        horizon=horizon,
        max_count=max_count,
        values=values,
        tie_epsilon=tie_epsilon,
    )


def gi_compare(
    table: GittinsTable, arm_a: tuple[int, int], arm_b: tuple[int, int]
) -> Comparison:
    """Order two arms by index; near-equal indices are declared a tie and the
    caller is expected to randomize."""
    gi_a = table.lookup(*arm_a)
    gi_b = table.lookup(*arm_b)
    if abs(gi_a - gi_b) <= table.tie_epsilon:
        return Comparison.TIE
    return Comparison.A_WINS if gi_a > gi_b else Comparison.B_WINS


def default_max_count(n_patients: int) -> int:
    """Smallest recommended table size for a trial of ``n_patients``: all
    reachable states plus the unit prior and a small safety margin."""
    return n_patients + 2 + 4


def cached_gittins_table(
    discount: float,
    horizon: int,
    max_count: int,
    cache_dir: str | Path | None = None,
    tie_epsilon: float = DEFAULT_TIE_EPSILON,
) -> GittinsTable:
    """Build a table, reusing an on-disk copy when one exists.

    The cache key is (discount, horizon, max_count); pass ``cache_dir=None``
    to always build from scratch.
    """
    if cache_dir is None:
        return build_gittins_table(discount, horizon, max_count, tie_epsilon)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"gittins_d{discount:.6f}_h{horizon}_m{max_count}.npz"
    path = cache_dir / key
    if path.exists():
        values = np.load(path)["values"]
        return GittinsTable(
            discount=discount,
            horizon=horizon,
            max_count=max_count,
            values=values,
            tie_epsilon=tie_epsilon,
        )
    table = build_gittins_table(discount, horizon, max_count, tie_epsilon)
    np.savez_compressed(path, values=table.values)
    return table
