"""Catalogue of reproduction laws with exact cumulant transforms and samplers.

A reproduction law pairs an offspring-count law (deterministic,
geometric on {1,2,...}, or Poisson conditioned positive) with a
displacement law (Gaussian, point mass, or two-point mixture) under
either the independent-per-daughter or common-per-family mechanism.
Every combination has a closed-form cumulant
``log E[sum_i exp(theta * z_i)] = log E N + log E exp(theta * X)``,
which the acceptance machinery requires to be exact.

Laws are immutable; samplers take an explicit numpy Generator so
concurrent simulation shards never share state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .convex_analysis import EvaluableFunction, GridSpec
from .errors import ParamError


# --------------------------------------------------------------------------
# offspring-count laws  (all have N >= 1, so extinction is impossible)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OffspringLaw:
    """Family-size law on {1, 2, ...} with mean ``mean``.

    kinds: ``deterministic`` (N = mean, an integer), ``geometric``
    (P(N=n) = r(1-r)^(n-1) with r = 1/mean), ``poisson_positive``
    (Poisson conditioned on N >= 1; the underlying rate is solved so
    the conditioned mean equals ``mean``).
    """

    kind: str
    mean: float
    _rate: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.kind not in ("deterministic", "geometric", "poisson_positive"):
            raise ParamError(f"unknown offspring kind {self.kind!r}")
        if self.kind == "deterministic":
            k = self.mean
            if k < 1 or k != int(k):
                raise ParamError("deterministic offspring count must be an integer >= 1")
        else:
            if self.mean < 1.0:
                raise ParamError("offspring mean must be >= 1")
        if self.kind == "poisson_positive":
            m = self.mean
            if m <= 1.0:
                raise ParamError("positive-Poisson mean must exceed 1")
            # conditioned mean c / (1 - exp(-c)) = m
            rate = brentq(lambda c: c / (1.0 - math.exp(-c)) - m, 1e-12, 10 * m + 50)
            object.__setattr__(self, "_rate", rate)

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "deterministic":
            return s ** int(self.mean)
        if self.kind == "geometric":
            r = 1.0 / self.mean
            return r * s / (1.0 - (1.0 - r) * s)
        c = self._rate
        return np.expm1(c * s) / np.expm1(c)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, int(self.mean), dtype=np.int64)
        if self.kind == "geometric":
            return rng.geometric(1.0 / self.mean, size=size).astype(np.int64)
        out = rng.poisson(self._rate, size=size).astype(np.int64)
        zero = out == 0
        while zero.any():
            out[zero] = rng.poisson(self._rate, size=int(zero.sum()))
            zero = out == 0
        return out

    def sum_sample(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """Total offspring of ``counts[i]`` independent families, drawn without
        materializing the families.  Needed by the binned census engine."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.kind == "deterministic":
            return counts * int(self.mean)
        if self.kind == "geometric":
            r = 1.0 / self.mean
            out = counts.copy()
            m = counts > 0
            if m.any():
                out[m] = counts[m] + rng.negative_binomial(counts[m], r)
            return out
        raise ParamError("exact count census supports deterministic and geometric "
                         "offspring only")


# --------------------------------------------------------------------------
# displacement laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ParamError("gaussian variance must be positive")

    def log_mgf(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta * self.mean + 0.5 * self.variance * theta * theta

    def sample(self, rng, size):
        return rng.normal(self.mean, math.sqrt(self.variance), size=size)

    def support_max(self):
        return math.inf

    def lattice_pmf(self, h: float):
        """Probabilities of landing in lattice cells of pitch h around 0."""
        sd = math.sqrt(self.variance)
        reach = int(math.ceil((8.0 * sd + abs(self.mean)) / h))
        j = np.arange(-reach, reach + 1)
        edges_hi = ((j + 0.5) * h - self.mean) / sd
        edges_lo = ((j - 0.5) * h - self.mean) / sd
        p = ndtr(edges_hi) - ndtr(edges_lo)
        return j, p / p.sum()

    def density(self, z):
        z = np.asarray(z, dtype=float)
        sd = math.sqrt(self.variance)
        return np.exp(-0.5 * ((z - self.mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class PointMass:
    value: float = 0.0

    def log_mgf(self, theta):
        return np.asarray(theta, dtype=float) * self.value

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=float)

    def support_max(self):
        return self.value

    def lattice_pmf(self, h: float):
        j = int(round(self.value / h))
        return np.array([j]), np.array([1.0])


@dataclass(frozen=True)
class TwoPoint:
    """Mixture of two point masses: ``low`` w.p. 1 - prob_high, ``high`` w.p. prob_high."""

    low: float
    high: float
    prob_high: float

    def __post_init__(self):
        if not 0.0 < self.prob_high < 1.0:
            raise ParamError("two-point mixture weight must be in (0, 1)")
        if self.low >= self.high:
            raise ParamError("two-point values must satisfy low < high")

    def log_mgf(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.prob_high
        # log((1-p) e^{t*low} + p e^{t*high}), stabilized around the larger term
        a = theta * self.low + math.log1p(-p)
        b = theta * self.high + math.log(p)
        hi = np.maximum(a, b)
        return hi + np.log(np.exp(a - hi) + np.exp(b - hi))

    def sample(self, rng, size):
        picks = rng.random(size) < self.prob_high
        return np.where(picks, self.high, self.low)

    def support_max(self):
        return self.high

    def lattice_pmf(self, h: float):
        jl = int(round(self.low / h))
        jh = int(round(self.high / h))
        if jl == jh:
            return np.array([jl]), np.array([1.0])
        return np.array([jl, jh]), np.array([1.0 - self.prob_high, self.prob_high])


Displacement = Union[Gaussian, PointMass, TwoPoint]


# --------------------------------------------------------------------------
# reproduction laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReproductionLaw:
    """Offspring counts plus displacements under one of two mechanisms.

    ``independent``: every daughter draws her own step.  ``common``:
    one step is drawn per family and shared by all daughters.  The
    intensity measure factorizes either way, so the cumulant transform
    is the same closed form for both.
    """

    offspring: OffspringLaw
    displacement: Displacement
    mechanism: str = "independent"

    def __post_init__(self):
        if self.mechanism not in ("independent", "common"):
            raise ParamError(f"unknown displacement mechanism {self.mechanism!r}")

    @property
    def mean_offspring(self) -> float:
        return self.offspring.mean

    def cumulant(self, theta):
        """log E[sum_i exp(theta z_i)]; +inf for theta < 0 by convention."""
        theta = np.asarray(theta, dtype=float)
        scalar = theta.ndim == 0
        t = np.atleast_1d(theta)
        val = math.log(self.offspring.mean) + self.displacement.log_mgf(t)
        out = np.where(t < 0, np.inf, val)
        return float(out[0]) if scalar else out

    def cumulant_function(self, window: Optional[GridSpec] = None) -> EvaluableFunction:
        """The cumulant wrapped for the convex-analysis machinery."""
        if window is None:
            window = GridSpec(-1.0, 12.0, 1e-2)
        xs = window.abscissae()
        tag = (f"{self.offspring.kind}(m={self.offspring.mean:g})+"
               f"{type(self.displacement).__name__.lower()}")
        return EvaluableFunction(xs, self.cumulant(xs), rule=self.cumulant,
                                 domain=(0.0, math.inf), analytic=tag, convex=True)

    def sample_family(self, rng: np.random.Generator) -> np.ndarray:
        """Displacements of one family: N >= 1 reals, i.i.d. steps for the
        independent mechanism, one shared step for the common one."""
        n = int(self.offspring.sample(rng, 1)[0])
        if self.mechanism == "independent":
            return self.displacement.sample(rng, n)
        step = self.displacement.sample(rng, 1)[0]
        return np.full(n, step, dtype=float)


def cumulant(law: ReproductionLaw, theta):
    """Module-level alias for ``law.cumulant(theta)``."""
    return law.cumulant(theta)


def sample_family(law: ReproductionLaw, rng: np.random.Generator) -> np.ndarray:
    """Module-level alias for ``law.sample_family(rng)``."""
    return law.sample_family(rng)


# --------------------------------------------------------------------------
# reducible two-type systems
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Seeding:
    """Law of eta-daughters added to each nu-family.

    ``prob`` is a Bernoulli count (at most one seed per family) and
    ``displacement`` positions the seed relative to the nu-parent; the
    default point mass at zero puts it exactly at the parent.
    """

    prob: float
    displacement: Displacement = PointMass(0.0)

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ParamError("seeding probability must lie in [0, 1]")


@dataclass(frozen=True)
class TwoTypeSystem:
    """Reducible pair of one-type laws: nu begets nu (and seeds eta), eta begets eta.

    Reducibility is structural: there is no channel by which an eta
    parent produces a nu daughter, and every nu-family contains at
    least one nu-daughter because all catalogued count laws live on
    {1, 2, ...}.
    """

    law_nu: ReproductionLaw
    law_eta: ReproductionLaw
    seeding: Seeding

    @property
    def finite_seed_transform(self) -> bool:
        """True when the seed displacement transform is finite for all tilts.

        Every catalogued displacement qualifies, so the off-diagonal
        term never restricts the speed formulas.
        """
        return math.isfinite(self.seeding.displacement.log_mgf(1.0)) and \
            math.isfinite(self.seeding.displacement.log_mgf(50.0))

    def swap_roles(self) -> "TwoTypeSystem":
        """The system with the class roles exchanged (same seeding law)."""
        return TwoTypeSystem(law_nu=self.law_eta, law_eta=self.law_nu,
                             seeding=self.seeding)


def skeleton_of_bbm(V: float, lam: float, p: float) -> TwoTypeSystem:
    """Unit-time skeleton of the two-type branching diffusion example.

    The nu-class branches at rate ``lam`` and diffuses with variance
    ``V`` (geometric families of mean exp(lam), independent
    Gaussian(0, V) steps, so its cumulant is exactly
    lam + V t^2 / 2); the eta-class is the unit-rate, unit-variance
    analogue.  Each nu-family seeds one eta-daughter with probability
    ``p`` at the parent's position.
    """

    if V <= 0 or lam <= 0:
        raise ParamError("V and lam must be positive")
    if not 0.0 <= p <= 1.0:
        raise ParamError("seed probability must lie in [0, 1]")
    law_nu = ReproductionLaw(OffspringLaw("geometric", math.exp(lam)),
                             Gaussian(0.0, V))
    law_eta = ReproductionLaw(OffspringLaw("geometric", math.e),
                              Gaussian(0.0, 1.0))
    return TwoTypeSystem(law_nu=law_nu, law_eta=law_eta, seeding=Seeding(p))
