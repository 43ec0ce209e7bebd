"""Closed-form false-alarm and complexity models for cover-decoder design.

All formulas assume a column-regular spreading matrix with girth above 4 and
a perfectly known load state.  ``lam`` is the user sparsity N_a / N, ``w_c``
the column weight and ``r = L / N`` the slot-to-user ratio, so the row weight
is ``w_c / r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect


class NoFeasibleRatioError(ValueError):
    """No ratio r in (0, 1) meets the false-alarm budget."""


@dataclass(frozen=True)
class DesignPoint:
    lam: float
    w_c: int
    r: float

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError(f"sparsity must lie in (0, 1), got {self.lam}")
        if self.w_c < 2:
            raise ValueError(f"column weight must be >= 2, got {self.w_c}")
        if not 0 < self.r < 1:
            raise ValueError(f"ratio must lie in (0, 1), got {self.r}")


def _check_lam(lam):
    if not 0 < lam < 1:
        raise ValueError(f"sparsity must lie in (0, 1), got {lam}")


def rfa_theory(lam: float, w_c: float, r: float) -> float:
    """Expected false alarms per truly active user of the cover decoder."""
    _check_lam(lam)
    q = 1.0 - lam
    return q / lam * (1.0 - q ** (w_c / r - 1.0)) ** w_c


def expected_false_alarms(lam: float, N: int, w_c: float, w_r: float) -> float:
    """Mean false-alarm count per frame, ``(1 - lam) N (1 - (1 - lam)^(w_r - 1))^w_c``."""
    _check_lam(lam)
    q = 1.0 - lam
    return q * N * (1.0 - q ** (w_r - 1.0)) ** w_c


def rfa_fixed_count(N: int, n_active: int, w_c: int, w_r: int) -> float:
    """False-alarm ratio when exactly ``n_active`` of ``N`` users are active.

    Finite-population counterpart of :func:`rfa_theory` (which treats
    activities as i.i.d.).  A silent user is a false alarm iff each of its
    ``w_c`` slots holds at least one active user among the ``w_r - 1`` others;
    with girth above 4 these neighbour groups are disjoint, and
    inclusion-exclusion over the slots left empty gives the exact mean.
    """
    if not 0 < n_active < N:
        raise ValueError("need 0 < n_active < N")
    others = N - 1

    def all_silent(m):
        # chance that m specific other users are all silent, given n_active among `others`
        return math.comb(others - m, n_active) / math.comb(others, n_active)

    p_fa = sum(
        (-1) ** j * math.comb(w_c, j) * all_silent(j * (w_r - 1)) for j in range(w_c + 1)
    )
    return (N - n_active) * p_fa / n_active


def g_upper_bound(lam: float, w_c: float, r: float) -> float:
    """Upper bound on ln R_FA obtained from ln(1 - x) <= -x."""
    _check_lam(lam)
    q = 1.0 - lam
    return math.log(q / lam) - w_c * q ** (w_c / r - 1.0)


def _golden_max(f, lo, hi, tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def find_lambda_star(w_c: float, r: float, tol: float = 1e-6) -> float:
    """Sparsity maximizing R_FA for fixed (w_c, r), by golden-section search."""
    if w_c < 2 or not 0 < r < 1:
        raise ValueError("need w_c >= 2 and 0 < r < 1")
    # log R_FA shares the maximizer and stays well-scaled near the edges
    return _golden_max(lambda x: math.log(rfa_theory(x, w_c, r) + 1e-300), 1e-9, 1 - 1e-9, tol)


def worst_case_rfa(w_c: float, r: float) -> float:
    return rfa_theory(find_lambda_star(w_c, r), w_c, r)


def _worst_case(w_c, r, bound):
    lam = find_lambda_star(w_c, r)
    return g_upper_bound(lam, w_c, r) if bound else math.log(rfa_theory(lam, w_c, r) + 1e-300)


def optimize_r(tau: float, w_c: int = 2, tol: float = 1e-4, bound: bool = False) -> float:
    """Smallest r in (0, 1) whose worst-case R_FA stays within ``tau``.

    Worst-case R_FA decreases in r, so the boundary is found by bisection.
    With ``bound=True`` the constraint is ``g(lam*) <= ln tau`` instead.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    f = lambda r: _worst_case(w_c, r, bound) - math.log(tau)  # noqa: E731
    lo, hi = 1e-3, 1.0 - 1e-9
    if f(hi) > 0:
        raise NoFeasibleRatioError(f"R_FA exceeds tau={tau} even as r -> 1 (w_c={w_c})")
    if f(lo) <= 0:
        return lo
    return bisect(f, lo, hi, xtol=tol)


def best_column_weight(tau: float, bound: bool = False, weights=range(2, 11)):
    """Column weight admitting the smallest feasible ratio, with that ratio.

    Weights for which no ratio meets the budget are skipped; returns
    ``(None, None)`` if none does.
    """
    best = (None, None)
    for w in weights:
        try:
            r = optimize_r(tau, w, bound=bound)
        except NoFeasibleRatioError:
            continue
        if best[1] is None or r < best[1]:
            best = (w, r)
    return best


# -- complexity -------------------------------------------------------------


@dataclass(frozen=True)
class DegreeProfile:
    degrees: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.degrees) != len(self.probs):
            raise ValueError("degrees and probabilities differ in length")
        if any(p < -1e-12 or p > 1 + 1e-12 for p in self.probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def mean(self) -> float:
        return float(sum(d * p for d, p in zip(self.degrees, self.probs)))

    def as_dict(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for d, p in zip(self.degrees, self.probs):
            out[d] = out.get(d, 0.0) + p
        return out

    @classmethod
    def from_degrees(cls, degrees) -> "DegreeProfile":
        """Empirical profile from a sample of check degrees."""
        d = np.asarray(degrees, dtype=np.int64).ravel()
        if d.size == 0:
            raise ValueError("empty degree sample")
        counts = np.bincount(d)
        keep = np.flatnonzero(counts)
        return cls(tuple(int(k) for k in keep), tuple(float(c) for c in counts[keep] / d.size))

    def total_variation(self, other: "DegreeProfile") -> float:
        a, b = self.as_dict(), other.as_dict()
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def degree_distribution(lam: float, w_r: float) -> DegreeProfile:
    """Two-point check-degree model with mean ``lam * w_r``."""
    _check_lam(lam)
    if w_r < 1:
        raise ValueError("row weight must be >= 1")
    mean = lam * w_r
    w1 = math.floor(mean)
    p1 = 1.0 - (mean - w1)
    return DegreeProfile((w1, w1 + 1), (p1, 1.0 - p1))


def complexity_exact(profile: DegreeProfile, K: int, L: int, M: int) -> float:
    """K L sum_w p_w (M+1)^w for a measured check-degree profile."""
    return float(K * L * sum(p * (M + 1) ** d for d, p in zip(profile.degrees, profile.probs)))


def complexity_approx(lam: float, w_r: float, K: int, L: int, M: int) -> float:
    return complexity_exact(degree_distribution(lam, w_r), K, L, M)


def complexity_full_graph(w_r: int, K: int, L: int, M: int) -> float:
    """Cost proxy of message passing on the unpruned matrix."""
    return float(K * L * (M + 1) ** w_r)
