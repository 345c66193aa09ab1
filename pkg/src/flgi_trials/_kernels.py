"""Numba kernels for the Monte-Carlo allocation-probability estimator and for
whole-trial simulation.

All randomness flows through an explicit ``numpy.random.Generator`` argument,
so callers control seeding and replications stay reproducible regardless of
scheduling.  Gittins indices arrive as a dense (s, f) -> value array; callers
guarantee every reachable count pair is tabulated.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _draw_categorical(gen, probs):
    u = gen.random()
    acc = 0.0
    for i in range(probs.shape[0] - 1):
        acc += probs[i]
        if u < acc:
            return i
    return probs.shape[0] - 1


@njit(cache=True, nogil=True)
def _best_arm(gen, counts, gi, tie_eps):
    """Arm with the highest index among ``counts`` rows (s, f); exact or
    near-exact ties are broken uniformly at random via reservoir sampling."""
    best = -1.0
    n_tied = 0
    pick = 0
    for a in range(counts.shape[0]):
        v = gi[counts[a, 0], counts[a, 1]]
        if v > best + tie_eps:
            best = v
            n_tied = 1
            pick = a
        elif v >= best - tie_eps:
            n_tied += 1
            if gen.random() * n_tied < 1.0:
                pick = a
    return pick


@njit(cache=True, nogil=True)
def block_run_tallies(
    gen, states, block_size, n_runs, gi, weights, tie_eps, x_tot, y_tot
):
    """Simulate ``n_runs`` independent future blocks from ``states``.

    states: (n_z, n_arms, 2) prior-inclusive counts, shared start of each run.
    Within a run each patient draws a category, joins the arm with the highest
    index for that category's evolving counts, and succeeds with the arm's
    posterior mean.  Accumulates per-category patient counts into ``x_tot``
    and per-category per-arm allocation counts into ``y_tot``.
    """
    work = np.empty_like(states)
    for _ in range(n_runs):
        work[:] = states
        for _b in range(block_size):
            z = _draw_categorical(gen, weights)
            arm = _best_arm(gen, work[z], gi, tie_eps)
            x_tot[z] += 1
            y_tot[z, arm] += 1
            s = work[z, arm, 0]
            f = work[z, arm, 1]
            if gen.random() * (s + f) < s:
                work[z, arm, 0] += 1
            else:
                work[z, arm, 1] += 1


@njit(cache=True, nogil=True)
def _fill_alloc_probs(x_tot, y_tot, out):
    """Per-category per-arm allocation probabilities from run tallies; a
    category never seen in any run gets probability 0 on every arm."""
    for z in range(x_tot.shape[0]):
        if x_tot[z] > 0:
            for a in range(y_tot.shape[1]):
                out[z, a] = y_tot[z, a] / x_tot[z]
        else:
            for a in range(y_tot.shape[1]):
                out[z, a] = 0.0


@njit(cache=True, nogil=True)
def simulate_trial_kernel(
    gen,
    prior_states,
    n_blocks,
    block_size,
    n_mc,
    gi,
    weights,
    p_true,
    flgi_rule,
    independent_probs,
    tie_eps,
    alloc_probs,
    pat_category,
    pat_arm,
    pat_outcome,
    final_states,
):
    """One complete block-randomized trial.

    At each block start the per-category allocation probabilities are either
    the Monte-Carlo forward-looking estimate (flgi_rule) or 1/n_arms.  Each
    arriving patient draws a category, an arm from that category's current
    probabilities, and a Bernoulli outcome with the true success probability
    p_true[arm, category].  When ``independent_probs`` is set the recorded
    probabilities come from a second, independent batch of runs while patient
    allocation uses the first.
    """
    n_z = prior_states.shape[0]
    n_arms = prior_states.shape[1]
    states = prior_states.copy()
    x_tot = np.empty(n_z, np.int64)
    y_tot = np.empty((n_z, n_arms), np.int64)
    use_probs = np.empty((n_z, n_arms))
    i = 0
    for k in range(n_blocks):
        if flgi_rule:
            x_tot[:] = 0
            y_tot[:] = 0
            block_run_tallies(
                gen, states, block_size, n_mc, gi, weights, tie_eps, x_tot, y_tot
            )
            _fill_alloc_probs(x_tot, y_tot, use_probs)
            if independent_probs:
                x_tot[:] = 0
                y_tot[:] = 0
                block_run_tallies(
                    gen, states, block_size, n_mc, gi, weights, tie_eps, x_tot, y_tot
                )
                _fill_alloc_probs(x_tot, y_tot, alloc_probs[k])
            else:
                alloc_probs[k] = use_probs
        else:
            for z in range(n_z):
                for a in range(n_arms):
                    use_probs[z, a] = 1.0 / n_arms
            alloc_probs[k] = use_probs
        for _b in range(block_size):
            z = _draw_categorical(gen, weights)
            row_total = 0.0
            for a in range(n_arms):
                row_total += use_probs[z, a]
            if row_total > 0.0:
                arm = _draw_categorical(gen, use_probs[z])
            else:
                arm = int(gen.integers(0, n_arms))
            outcome = 1 if gen.random() < p_true[arm, z] else 0
            states[z, arm, 1 - outcome] += 1
            pat_category[i] = z
            pat_arm[i] = arm
            pat_outcome[i] = outcome
            i += 1
    final_states[:] = states
