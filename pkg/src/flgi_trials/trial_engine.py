"""Whole-trial simulation: block-wise arrivals with biomarker categories,
forward-looking-Gittins or equal randomization, Bernoulli outcomes, and a full
per-block record of the allocation probabilities used for inference."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ._kernels import simulate_trial_kernel
from .alloc_dist import BlockConfig, CategoryState, _resolve_weights
from .errors import ConfigurationError
from .gittins import GittinsTable

FLGI = "flgi"
EQUAL = "equal"


@dataclass(frozen=True)
class Scenario:
    """Configuration of one simulated trial."""

    n_patients: int
    block_size: int
    success_probs: tuple  # (n_arms, n_categories) true success probabilities
    n_categories: int = 1
    n_arms: int = 2
    allocation_rule: str = FLGI
    mc_runs: int = 1000
    gittins_discount: float = 0.99
    gittins_horizon: int = 300
    burn_in: int = 2
    category_weights: tuple | None = None
    independent_inference_probs: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.block_size < 1 or self.n_patients % self.block_size != 0:
            raise ConfigurationError(
                "n_patients must be a positive multiple of block_size"
            )
        if self.allocation_rule not in (FLGI, EQUAL):
            raise ConfigurationError(
                f"allocation_rule must be '{FLGI}' or '{EQUAL}'"
            )
        probs = np.asarray(self.success_probs, dtype=float)
        if probs.shape != (self.n_arms, self.n_categories):
            raise ConfigurationError(
                f"success_probs must be shaped (n_arms={self.n_arms}, "
                f"n_categories={self.n_categories}), got {probs.shape}"
            )
        if np.any(probs < 0) or np.any(probs > 1):
            raise ConfigurationError("success probabilities must lie in [0, 1]")
        if not 0 <= self.burn_in < self.n_blocks:
            raise ConfigurationError("burn_in must satisfy 0 <= burn_in < n_blocks")
        if self.mc_runs < 1:
            raise ConfigurationError("mc_runs must be >= 1")
        _resolve_weights(self.n_categories, self.category_weights)

    @property
    def n_blocks(self) -> int:
        return self.n_patients // self.block_size

    def probs_array(self) -> np.ndarray:
        return np.asarray(self.success_probs, dtype=float)

    def weights_array(self) -> np.ndarray:
        return _resolve_weights(self.n_categories, self.category_weights)

    def block_config(self, tested_arm: int = 1, category: int = 0) -> BlockConfig:
        weights = self.weights_array()
        return BlockConfig(
            block_size=self.block_size,
            n_categories=self.n_categories,
            n_arms=self.n_arms,
            tested_arm=tested_arm,
            n_mc=self.mc_runs,
            weight=float(weights[category]),
        )

    def to_json(self, path: str | Path | None = None) -> str:
        payload = {
            "n_patients": self.n_patients,
            "block_size": self.block_size,
            "success_probs": np.asarray(self.success_probs).tolist(),
            "n_categories": self.n_categories,
            "n_arms": self.n_arms,
            "allocation_rule": self.allocation_rule,
            "mc_runs": self.mc_runs,
            "gittins_discount": self.gittins_discount,
            "gittins_horizon": self.gittins_horizon,
            "burn_in": self.burn_in,
            "category_weights": (
                None
                if self.category_weights is None
                else list(self.category_weights)
            ),
            "independent_inference_probs": self.independent_inference_probs,
            "seed": self.seed,
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "Scenario":
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        payload = json.loads(text)
        payload["success_probs"] = tuple(
            tuple(row) for row in payload["success_probs"]
        )
        if payload.get("category_weights") is not None:
            payload["category_weights"] = tuple(payload["category_weights"])
        return cls(**payload)


@dataclass(frozen=True)
class TrialRecord:
    """Everything one simulated trial produced."""

    scenario: Scenario
    alloc_probs: np.ndarray  # (n_blocks, n_categories, n_arms)
    patient_category: np.ndarray  # (n_patients,)
    patient_arm: np.ndarray
    patient_outcome: np.ndarray
    final_states: np.ndarray = field(repr=False, default=None)  # (n_z, n_arms, 2)

    def alloc_prob_path(self, category: int, arm: int) -> np.ndarray:
        """Per-block allocation probabilities recorded for (category, arm)."""
        return self.alloc_probs[:, category, arm]

    def observed_tallies(self) -> np.ndarray:
        """(n_z, n_arms, 2) success/failure counts observed in the trial."""
        scn = self.scenario
        out = np.zeros((scn.n_categories, scn.n_arms, 2), dtype=np.int64)
        np.add.at(
            out,
            (self.patient_category, self.patient_arm, 1 - self.patient_outcome),
            1,
        )
        return out

    def final_category_states(self) -> list[CategoryState]:
        return [
            CategoryState(tuple((int(s), int(f)) for s, f in cat))
            for cat in self.final_states
        ]

    def subgroup_counts(
        self, category: int, tested_arm: int = 1, pooled: bool = False
    ) -> tuple[int, int, int, int]:
        """(control successes, control failures, tested successes, tested
        failures), restricted to one category unless ``pooled``."""
        tallies = self.observed_tallies()
        rows = tallies.sum(axis=0) if pooled else tallies[category]
        return (
            int(rows[0, 0]),
            int(rows[0, 1]),
            int(rows[tested_arm, 0]),
            int(rows[tested_arm, 1]),
        )

    def total_successes(self) -> int:
        return int(self.patient_outcome.sum())

    def arm_counts(self) -> np.ndarray:
        return np.bincount(self.patient_arm, minlength=self.scenario.n_arms)

    def fraction_on_best_arm(self) -> float:
        """Fraction of patients assigned to a truly-best arm for their own
        category (every arm counts when all success probabilities tie)."""
        probs = self.scenario.probs_array()
        best = probs.max(axis=0)
        on_best = probs[self.patient_arm, self.patient_category] >= (
            best[self.patient_category] - 1e-12
        )
        return float(on_best.mean())


def _as_generator(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def run_trial(
    scn: Scenario, table: GittinsTable | None = None, seed=None
) -> TrialRecord:
    """Simulate one trial; deterministic given (scenario, seed).

    ``table`` may be omitted for the equal-randomization rule; for the
    forward-looking rule it must cover every reachable posterior count.
    """
    if scn.allocation_rule == FLGI:
        if table is None:
            raise ConfigurationError("the forward-looking rule needs a Gittins table")
        if not table.covers_trial(scn.n_patients):
            raise ConfigurationError(
                f"table covers counts up to {table.max_count}; the trial needs "
                f"{scn.n_patients + 2}"
            )
        gi_values = table.values
        tie_eps = table.tie_epsilon
    else:
        gi_values = np.zeros((2, 2))
        tie_eps = 0.0
    gen = _as_generator(seed if seed is not None else scn.seed)
    n_z, n_arms, k = scn.n_categories, scn.n_arms, scn.n_blocks
    prior = np.ones((n_z, n_arms, 2), dtype=np.int64)
    alloc_probs = np.empty((k, n_z, n_arms))
    pat_category = np.empty(scn.n_patients, dtype=np.int64)
    pat_arm = np.empty(scn.n_patients, dtype=np.int64)
    pat_outcome = np.empty(scn.n_patients, dtype=np.int64)
    final_states = np.empty_like(prior)
    simulate_trial_kernel(
        gen,
        prior,
        k,
        scn.block_size,
        scn.mc_runs,
        gi_values,
        scn.weights_array(),
        scn.probs_array(),
        scn.allocation_rule == FLGI,
        scn.independent_inference_probs,
        tie_eps,
        alloc_probs,
        pat_category,
        pat_arm,
        pat_outcome,
        final_states,
    )
    return TrialRecord(
        scenario=scn,
        alloc_probs=alloc_probs,
        patient_category=pat_category,
        patient_arm=pat_arm,
        patient_outcome=pat_outcome,
        final_states=final_states,
    )


def rep_seed_sequences(seed, reps: int) -> list[np.random.SeedSequence]:
    """Independent child streams for ``reps`` replications of one study."""
    root = (
        seed
        if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    return root.spawn(reps)


def replicate(
    scn: Scenario, reps: int, seed, table: GittinsTable | None = None
) -> Iterator[TrialRecord]:
    """Yield ``reps`` independent trials with per-replication derived seeds;
    the stream is reproducible and independent of consumption order."""
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    for child in rep_seed_sequences(seed, reps):
        yield run_trial(scn, table=table, seed=np.random.default_rng(child))
