"""Monte Carlo particle engines for one-type and two-type branching walks.

Replicates simulate generation by generation.  While the population is
at or below the particle budget the branching is exact and positions
are retained for count profiles; beyond the budget the engine keeps
the highest positions within a window of the running maximum
(rightmost-selection pruning), which leaves rightmost-particle
statistics essentially untouched but biases counts, so count profiles
are only ever read from exact generations.

For the large exact censuses the count-profile checks need (population
way past any per-particle budget), a binned engine propagates exact
particle counts on a position lattice instead of individual particles.

Reproducibility: every replicate r draws from a stream derived from
the master seed by counter-based splitting, so results are independent
of scheduling and bit-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetError, StateError
from .models import ReproductionLaw, TwoTypeSystem

INT64_MAX = np.iinfo(np.int64).max


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """Stream for one replicate: counter-mixed split of the master seed."""
    return np.random.default_rng(np.random.SeedSequence(master_seed,
                                                        spawn_key=(replicate,)))


@dataclass
class GenerationState:
    """Particle positions of one generation, with exactness bookkeeping."""

    positions: np.ndarray
    generation: int
    born: int = 0
    pruned: int = 0
    saturated: bool = False

    @property
    def rightmost(self) -> float:
        return float(self.positions.max()) if self.positions.size else -math.inf


@dataclass
class GenerationCensus:
    """Exact particle counts on a position lattice of pitch ``h``."""

    generation: int
    h: float
    start_index: int
    counts: np.ndarray  # int64, counts[i] particles at (start_index + i) * h

    def count_at_least(self, x: float) -> int:
        """Exact number of particles at lattice positions >= x."""
        j = int(math.ceil(x / self.h - 1e-12))
        i = max(j - self.start_index, 0)
        if i >= self.counts.size:
            return 0
        return int(self.counts[i:].sum())


@dataclass
class TrajectoryStats:
    """Per-replicate record of one run: rightmost positions and exact censuses."""

    seed: int
    rightmost: np.ndarray                  # index n -> M_n, n = 0..n_max
    exact_upto: int                        # last generation with exact census
    exact_positions: Optional[List[np.ndarray]] = None
    census: Optional[List[GenerationCensus]] = None
    pruning: dict = field(default_factory=dict)


@dataclass
class TwoTypeTrajectoryStats:
    """Per-replicate record of a two-type run; NaN marks generations with no eta."""

    seed: int
    rightmost_nu: np.ndarray
    rightmost_eta: np.ndarray
    switch_fraction: float                 # type-switch generation of the final
    pruning: dict = field(default_factory=dict)   # rightmost eta, divided by n_max


def _branch(law: ReproductionLaw, positions: np.ndarray,
            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """One exact branching step; returns (children, offspring counts)."""
    counts = law.offspring.sample(rng, positions.size)
    children = np.repeat(positions, counts)
    if law.mechanism == "independent":
        steps = law.displacement.sample(rng, children.size)
    else:
        steps = np.repeat(law.displacement.sample(rng, positions.size), counts)
    return children + steps, counts


def _prune(children: np.ndarray, budget: int, window: float):
    """Keep the budget highest positions among those within the window of the max."""
    top = children.max()
    kept = children[children >= top - window]
    if kept.size > budget:
        kept = np.partition(kept, kept.size - budget)[-budget:]
    return kept, children.size - kept.size


def run_one_type(law: ReproductionLaw, n_max: int, budget: int = 100_000,
                 window: float = 15.0, seed: int = 0) -> TrajectoryStats:
    """Simulate one replicate of a one-type walk for ``n_max`` generations.

    Branching is exact while the population fits the budget; exact
    generations keep their full position lists for later count
    profiles.  Raises BudgetError if a single family already overflows
    the budget at the first generation.
    """

    rng = replicate_rng(seed, 0)
    state = GenerationState(positions=np.zeros(1), generation=0)
    m = np.empty(n_max + 1)
    m[0] = 0.0
    exact_positions: List[np.ndarray] = [state.positions.copy()]
    exact = True
    exact_upto = 0
    pruned_total = 0
    cap_bound_at = None
    for n in range(1, n_max + 1):
        children, _ = _branch(law, state.positions, rng)
        if n == 1 and children.size > budget:
            raise BudgetError(f"family size {children.size} exceeds budget {budget} "
                              "at generation 1")
        m[n] = children.max()
        born = children.size
        dropped = 0
        if children.size > budget:
            children, dropped = _prune(children, budget, window)
            pruned_total += dropped
            if exact:
                cap_bound_at = n
            exact = False
        state = GenerationState(positions=children, generation=n, born=born,
                                pruned=dropped, saturated=born > INT64_MAX // 2)
        if exact:
            exact_positions.append(children.copy())
            exact_upto = n
    return TrajectoryStats(seed=seed, rightmost=m, exact_upto=exact_upto,
                           exact_positions=exact_positions,
                           pruning={"pruned": pruned_total,
                                    "cap_bound_at": cap_bound_at,
                                    "budget": budget, "window": window})


def run_count_census(law: ReproductionLaw, n_max: int, seed: int = 0,
                     pitch: float = 0.05) -> TrajectoryStats:
    """Exact generation censuses on a position lattice of the given pitch.

    Propagates particle counts per lattice site instead of particles,
    so populations far beyond any per-particle budget stay exact (the
    simulated law is the pitch-quantized law; its cumulant differs from
    the continuum one by O(pitch^2)).  Offspring totals per site are
    drawn in closed form, which restricts the engine to deterministic
    and geometric counts.
    """

    rng = replicate_rng(seed, 0)
    j, q = law.displacement.lattice_pmf(pitch)
    start = 0
    counts = np.array([1], dtype=np.int64)
    m = np.empty(n_max + 1)
    m[0] = 0.0
    censuses = [GenerationCensus(0, pitch, start, counts.copy())]
    saturated = False
    for n in range(1, n_max + 1):
        width = counts.size + j[-1] - j[0]
        new_start = start + int(j[0])
        new_counts = np.zeros(width, dtype=np.int64)
        nz = np.flatnonzero(counts)
        if law.mechanism == "independent":
            totals = law.offspring.sum_sample(rng, counts[nz])
            if int(totals.sum()) > INT64_MAX // 4:
                saturated = True
            for b, tot in zip(nz, totals):
                new_counts[b:b + j.size] += rng.multinomial(int(tot), q)
        else:
            # one step per family: scatter families first, then size them
            for b in nz:
                fam_dest = rng.multinomial(int(counts[b]), q)
                dz = np.flatnonzero(fam_dest)
                sizes = law.offspring.sum_sample(rng, fam_dest[dz])
                new_counts[b + dz] += sizes
        start = new_start
        counts = new_counts
        top = np.flatnonzero(counts)
        m[n] = (start + int(top[-1])) * pitch
        censuses.append(GenerationCensus(n, pitch, start, counts.copy()))
    return TrajectoryStats(seed=seed, rightmost=m, exact_upto=n_max,
                           census=censuses,
                           pruning={"pruned": 0, "saturated": saturated,
                                    "pitch": pitch})


def count_profile(stats: TrajectoryStats, a_values: Sequence[float]):
    """Rows (a, n, (1/n) log count in [n a, inf)) for exact generations only.

    Zero counts are recorded as -inf, consistent with an infinite rate
    beyond the speed.  Raises StateError when the run kept no exact
    generations beyond the root.
    """

    if stats.exact_upto < 1:
        raise StateError("no exact generations available for count profiles")
    rows = []
    for n in range(1, stats.exact_upto + 1):
        if stats.census is not None:
            census = stats.census[n]
            counter = census.count_at_least
        else:
            pos = np.sort(stats.exact_positions[n])

            def counter(x, pos=pos):
                return pos.size - int(np.searchsorted(pos, x, side="left"))

        for a in a_values:
            c = counter(n * a)
            val = math.log(c) / n if c > 0 else -math.inf
            rows.append((float(a), n, val))
    return rows


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float


def centering_slope(stats: Sequence[TrajectoryStats], speed: float,
                    tilt: Optional[float] = None,
                    fit_range: Optional[Tuple[int, int]] = None) -> SlopeFit:
    """Least-squares slope of mean rightmost position minus n*speed against log n.

    The fit runs over n in [n_max/4, n_max] by default.  The returned
    standard error is the usual linear-regression one, useful only as a
    rough scale since adjacent generations are strongly dependent.
    """

    m = np.mean([s.rightmost for s in stats], axis=0)
    n_max = m.size - 1
    lo, hi = fit_range if fit_range is not None else (max(1, n_max // 4), n_max)
    n = np.arange(lo, hi + 1)
    y = m[lo:hi + 1] - n * speed
    x = np.log(n)
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    resid = y - y.mean() - slope * xc
    dof = max(x.size - 2, 1)
    se = float(math.sqrt(np.dot(resid, resid) / dof / np.dot(xc, xc)))
    return SlopeFit(slope=slope, stderr=se)


def run_two_type(sys: TwoTypeSystem, n_max: int, budget: int = 100_000,
                 window: float = 15.0, seed: int = 0) -> TwoTypeTrajectoryStats:
    """Simulate both classes from a single nu-ancestor at the origin.

    Each class is pruned against its own running maximum (under an
    anomaly the eta front outruns the nu front).  Every eta particle
    remembers the generation its ancestral line switched type, which
    is all the dog-leg diagnostic needs.
    """

    rng = replicate_rng(seed, 0)
    p = sys.seeding.prob
    pos_nu = np.zeros(1)
    pos_eta = np.empty(0)
    switch = np.empty(0, dtype=np.int64)
    m_nu = np.full(n_max + 1, np.nan)
    m_eta = np.full(n_max + 1, np.nan)
    m_nu[0] = 0.0
    pruned = {"nu": 0, "eta": 0}
    for n in range(1, n_max + 1):
        children_nu, _ = _branch(sys.law_nu, pos_nu, rng)
        if n == 1 and children_nu.size > budget:
            raise BudgetError(f"family size {children_nu.size} exceeds budget "
                              f"{budget} at generation 1")
        # one Bernoulli seed per nu-family, placed relative to the parent
        seeded = rng.random(pos_nu.size) < p if p > 0 else np.zeros(pos_nu.size, bool)
        n_seeds = int(seeded.sum())
        if n_seeds:
            seed_pos = pos_nu[seeded] + sys.seeding.displacement.sample(rng, n_seeds)
        else:
            seed_pos = np.empty(0)
        if pos_eta.size:
            children_eta, counts_eta = _branch(sys.law_eta, pos_eta, rng)
            switch_children = np.repeat(switch, counts_eta)
        else:
            children_eta = np.empty(0)
            switch_children = np.empty(0, dtype=np.int64)
        children_eta = np.concatenate([children_eta, seed_pos])
        switch_children = np.concatenate([switch_children,
                                          np.full(n_seeds, n, dtype=np.int64)])
        m_nu[n] = children_nu.max()
        if children_eta.size:
            m_eta[n] = children_eta.max()
        if children_nu.size > budget:
            children_nu, d = _prune(children_nu, budget, window)
            pruned["nu"] += d
        if children_eta.size > budget:
            top = children_eta.max()
            keep_idx = np.flatnonzero(children_eta >= top - window)
            if keep_idx.size > budget:
                sel = np.argpartition(children_eta[keep_idx],
                                      keep_idx.size - budget)[-budget:]
                keep_idx = keep_idx[sel]
            pruned["eta"] += children_eta.size - keep_idx.size
            children_eta = children_eta[keep_idx]
            switch_children = switch_children[keep_idx]
        pos_nu = children_nu
        pos_eta = children_eta
        switch = switch_children
    if pos_eta.size:
        frac = float(switch[int(np.argmax(pos_eta))]) / n_max
    else:
        frac = math.nan
    return TwoTypeTrajectoryStats(seed=seed, rightmost_nu=m_nu, rightmost_eta=m_eta,
                                  switch_fraction=frac, pruning=pruned)


def rightmost_batch(law: ReproductionLaw, n: int, replicates: int,
                    rng: np.random.Generator, chunk: int = 10_000,
                    max_particles: int = 4_000_000) -> np.ndarray:
    """Exact rightmost positions at generation ``n`` for many replicates at once.

    Replicates are simulated jointly in flat arrays (the per-replicate
    ownership is carried alongside), which is what makes distributional
    checks at small n cheap.  Raises BudgetError when the joint
    population of a chunk would exceed ``max_particles``.
    """

    out = np.empty(replicates)
    done = 0
    while done < replicates:
        r = min(chunk, replicates - done)
        pos = np.zeros(r)
        owner = np.arange(r)
        for _ in range(n):
            if law.mechanism == "independent":
                counts = law.offspring.sample(rng, pos.size)
                pos = np.repeat(pos, counts) + law.displacement.sample(
                    rng, int(counts.sum()))
            else:
                counts = law.offspring.sample(rng, pos.size)
                steps = law.displacement.sample(rng, pos.size)
                pos = np.repeat(pos, counts) + np.repeat(steps, counts)
            owner = np.repeat(owner, counts)
            if pos.size > max_particles:
                raise BudgetError("joint population exceeds the exact-batch cap; "
                                  "reduce n or the chunk size")
        starts = np.searchsorted(owner, np.arange(r), side="left")
        out[done:done + r] = np.maximum.reduceat(pos, starts)
        done += r
    return out
