"""Exact two-sided conditional binomial test for one orthologous gene.

Conditioning on the two-species count sum ``n`` turns the equal-rate null
into a binomial null for the species-1 count.  The null success probability
folds together the scaling factor, the two gene lengths, and the two
sequencing depths, so genes of different length and libraries of different
depth are compared on a common scale.

The two-sided p-value is the binomial mass of all outcomes at least as far
from the null mean ``n * p0`` as the observed count:

    p = P(|X - n*p0| >= |x1 - n*p0|),  X ~ Binomial(n, p0)

Tail masses are evaluated through the regularized incomplete beta function,
which is numerically stable for the deep-coverage genes (n up to ~1e5)
where per-term factorials overflow, and lets thousands of genes be tested
in one vectorized call.  Inputs are mirrored onto the p0 <= 1/2 side first
so that swapping the two species takes a bit-identical code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import GeneRecord, ScalingFactor

__all__ = [
    "NullSuccessProb",
    "GeneTestInput",
    "null_success_prob",
    "null_prob_values",
    "two_sided_exact_pvalue",
    "binom_twosided_pvalues",
    "gene_pvalue",
    "gene_pvalues",
]

# Slack on the two-sided distance threshold, relative to n.  The rejection
# region includes exact ties (mirror-image outcomes with |k - n*p0| equal to
# the observed distance), and rounding noise in n*p0 must not drop them.
# Capped well below 1 so the slack can never swallow an adjacent outcome.
_TIE_REL_TOL = 1e-7
_TIE_CAP = 0.25

_MIN_P = 5e-324                          # smallest positive float
_MAX_P0 = float(np.nextafter(1.0, 0.0))  # keep p0 strictly inside (0, 1)


@dataclass(frozen=True)
class NullSuccessProb:
    """Success probability of the conditional binomial under the null."""

    p0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.p0 < 1.0):
            raise ValueError(f"p0 must lie strictly in (0, 1), got {self.p0!r}")


@dataclass(frozen=True)
class GeneTestInput:
    """Observed species-1 count, conditional total, and null probability."""

    x1: int
    n: int
    p0: NullSuccessProb

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("conditional total n must be >= 0")
        if not (0 <= self.x1 <= self.n):
            raise ValueError(f"x1 must lie in [0, n]; got x1={self.x1}, n={self.n}")


def null_prob_values(c, length_sp1, length_sp2, total_sp1, total_sp2):
    """Null success probabilities for arrays of lengths at scaling factor c.

    p0 = c*L1*N1 / (L2*N2 + c*L1*N1), clipped strictly inside (0, 1).
    """
    l1 = np.asarray(length_sp1, dtype=np.float64)
    l2 = np.asarray(length_sp2, dtype=np.float64)
    a = c * (l1 * float(total_sp1))
    b = l2 * float(total_sp2)
    return np.clip(a / (b + a), _MIN_P, _MAX_P0)


def null_success_prob(
    c: ScalingFactor,
    length_sp1: int,
    length_sp2: int,
    total_sp1: int,
    total_sp2: int,
) -> NullSuccessProb:
    """Null success probability for one gene; strictly increasing in c."""
    for name, value in (
        ("length_sp1", length_sp1),
        ("length_sp2", length_sp2),
        ("total_sp1", total_sp1),
        ("total_sp2", total_sp2),
    ):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value!r}")
    p0 = float(null_prob_values(c.c, length_sp1, length_sp2, total_sp1, total_sp2))
    return NullSuccessProb(p0=p0)


def _binom_cdf(k, n, q0):
    # P(X <= k) for X ~ Binomial(n, p0) via the incomplete beta; 0 <= k <= n.
    a = np.maximum(n - k, 1.0)
    b = k + 1.0
    return np.where(k >= n, 1.0, special.betainc(a, b, q0))


def _binom_sf(k, n, p0):
    # P(X >= k) for X ~ Binomial(n, p0); 0 <= k <= n.
    a = np.maximum(k, 1.0)
    b = np.maximum(n - k + 1.0, 1.0)
    return np.where(k <= 0, 1.0, special.betainc(a, b, p0))


def binom_twosided_pvalues(x1, n, p0):
    """Vectorized two-sided exact binomial p-values.

    Parameters broadcast against each other; counts are exact when passed
    as integers below 2**53.  Returns values in (0, 1]; n = 0 maps to 1
    (empty rejection region).
    """
    x1, n, p0 = np.broadcast_arrays(
        np.asarray(x1, dtype=np.float64),
        np.asarray(n, dtype=np.float64),
        np.asarray(p0, dtype=np.float64),
    )
    # Mirror onto p0 <= 1/2 (and x1 <= n/2 at exactly 1/2) so species-swapped
    # inputs reduce to identical arithmetic.
    flip = (p0 > 0.5) | ((p0 == 0.5) & (2.0 * x1 > n))
    x1 = np.where(flip, n - x1, x1)
    p0 = np.where(flip, 1.0 - p0, p0)
    q0 = 1.0 - p0

    mu = n * p0
    slack = np.abs(x1 - mu) - np.minimum(_TIE_REL_TOL * n, _TIE_CAP)
    lo = np.floor(mu - slack)  # largest outcome in the lower tail
    hi = np.ceil(mu + slack)   # smallest outcome in the upper tail
    with np.errstate(invalid="ignore", divide="ignore"):
        lower = np.where(lo >= 0.0, _binom_cdf(np.clip(lo, 0.0, None), n, q0), 0.0)
        upper = np.where(hi <= n, _binom_sf(np.clip(hi, 0.0, None), n, p0), 0.0)
    p = lower + upper
    p = np.where(slack <= 0.0, 1.0, p)  # observed count at/next to the null mean
    p = np.where(n == 0.0, 1.0, p)
    return np.clip(p, _MIN_P, 1.0)


def two_sided_exact_pvalue(test_input: GeneTestInput) -> float:
    """Two-sided exact p-value for a single gene's conditional counts."""
    return float(binom_twosided_pvalues(test_input.x1, test_input.n, test_input.p0.p0))


def gene_pvalue(
    gene: GeneRecord,
    c: ScalingFactor,
    total_sp1: int,
    total_sp2: int,
) -> float | None:
    """P-value for one gene at scaling factor c; None if the gene is untestable."""
    if not gene.testable:
        return None
    p0 = null_success_prob(c, gene.length_sp1, gene.length_sp2, total_sp1, total_sp2)
    n = gene.count_sp1 + gene.count_sp2
    return two_sided_exact_pvalue(GeneTestInput(x1=gene.count_sp1, n=n, p0=p0))


def gene_pvalues(count_sp1, count_sp2, length_sp1, length_sp2, total_sp1, total_sp2, c):
    """P-values for arrays of genes at one scaling factor; NaN where untestable."""
    x1 = np.asarray(count_sp1, dtype=np.float64)
    x2 = np.asarray(count_sp2, dtype=np.float64)
    n = x1 + x2
    p0 = null_prob_values(c, length_sp1, length_sp2, total_sp1, total_sp2)
    p = binom_twosided_pvalues(x1, n, p0)
    return np.where(n > 0.0, p, np.nan)
