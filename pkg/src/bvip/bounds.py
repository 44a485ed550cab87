"""Invariance-principle bounds for univariate and bivariate polynomials.

Every right-hand side has the shape ``const * 9**e * sum_t a_t**2``; the sums
use ``math.fsum`` so results do not depend on summation order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .bivariate import (BivariatePoly, NotSeparable, SeparableParts, decompose_separable,
                        flatten, max_t_sizes, resolve_k, sigma, sigma_tilde)
from .spectrum import MultilinearPoly, degree, influence_spectral, popcount

LHS_TOL = 1e-9


def _check_C(C: float):
    if not (C >= 0 and math.isfinite(C)):
        raise ValueError(f"C must be finite and >= 0, got {C}")


def _bip_form(C: float, exponent: int, aggregates: Sequence[float]) -> float:
    # (C/12) * 9^exponent * sum a_t^2
    return C / 12 * 9 ** exponent * math.fsum(a * a for a in aggregates)


def bip_bound(f: MultilinearPoly, C: float, degree_override: int | None = None) -> float:
    """(C/12) * 9^k * sum_t Inf_t[f]^2 with k = degree(f) unless overridden."""
    _check_C(C)
    k = degree(f) if degree_override is None else degree_override
    return _bip_form(C, k, [influence_spectral(f, t) for t in range(1, f.n + 1)])


@dataclass(frozen=True)
class ExpectedInfluenceVector:
    side: int
    values: tuple[float, ...]


def expected_influence_exact(F: BivariatePoly, replaced_side: int, t: int) -> float:
    """E_Z Inf_t[f_Z] when the other sequence Z is random with mean 0, variance 1.

    Parities of Z are orthonormal, so the expectation is the plain coefficient
    mass over pairs whose replaced-side mask contains t.
    """
    if replaced_side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {replaced_side}")
    if not 1 <= t <= F.n:
        raise ValueError(f"coordinate {t} out of range [1, {F.n}]")
    bit = 1 << (t - 1)
    pos = 0 if replaced_side == 1 else 1
    return math.fsum(c * c for pair, c in F.terms if pair[pos] & bit)


def expected_influences(F: BivariatePoly, replaced_side: int) -> ExpectedInfluenceVector:
    return ExpectedInfluenceVector(
        replaced_side,
        tuple(expected_influence_exact(F, replaced_side, t) for t in range(1, F.n + 1)))


def rbip_exact_bound(F: BivariatePoly, replaced_side: int, C: float) -> float:
    """Random-function BIP bound for replacing one sequence, using exact E_Z Inf_t."""
    _check_C(C)
    k = resolve_k(F)
    return _bip_form(C, k, expected_influences(F, replaced_side).values)


def rbip_tilde_bound(F: BivariatePoly, replaced_side: int, C: float) -> float:
    """The same side's contribution with the Cauchy-Schwarz aggregate in place of E_Z Inf_t."""
    _check_C(C)
    k = resolve_k(F)
    return _bip_form(C, k, [sigma_tilde(F, replaced_side, t, k) for t in range(1, F.n + 1)])


def bvip1_bound(F: BivariatePoly, C: float) -> float:
    _check_C(C)
    k = resolve_k(F)
    agg = [sigma_tilde(F, 1, t, k) for t in range(1, F.n + 1)]
    agg += [sigma_tilde(F, 2, t, k) for t in range(1, F.n + 1)]
    return _bip_form(C, k, agg)


def bvip2_bound(F: BivariatePoly, C: float) -> float:
    _check_C(C)
    k = resolve_k(F)
    agg = [sigma(F, 1, t, k) for t in range(1, F.n + 1)]
    agg += [sigma(F, 2, t, k) for t in range(1, F.n + 1)]
    return _bip_form(C, 2 * k, agg)


def _separable_sums(parts: SeparableParts) -> tuple[int, float]:
    f, g, h = parts.f, parts.g, parts.h
    k = max(degree(f), degree(g), degree(h))
    vals = []
    for t in range(1, f.n + 1):
        vals += [influence_spectral(f, t) ** 2, influence_spectral(g, t) ** 2,
                 2 * influence_spectral(h, t) ** 2]
    return k, math.fsum(vals)


def sep_bvip1_bound(parts: SeparableParts, C: float) -> float:
    """(2C/3) * 9^k * sum_t (Inf_t[f]^2 + Inf_t[g]^2 + 2 Inf_t[h]^2)."""
    _check_C(C)
    k, s = _separable_sums(parts)
    return 2 * C / 3 * 9 ** k * s


def sep_bvip2_bound(parts: SeparableParts, C: float) -> float:
    """(C/6) * 9^(2k) * sum_t (Inf_t[f]^2 + Inf_t[g]^2 + 2 Inf_t[h]^2)."""
    _check_C(C)
    k, s = _separable_sums(parts)
    return C / 6 * 9 ** (2 * k) * s


@dataclass
class BoundReport:
    instance_id: str
    n: int
    k: int
    C: float
    bip_flat: float
    rbip_side1: float
    rbip_side2: float
    rbip_tilde_side1: float
    rbip_tilde_side2: float
    bvip1: float
    bvip2: float
    sep_bvip1: float | None = None
    sep_bvip2: float | None = None
    max_t1: int = 0
    max_t2: int = 0
    ratio_bvip1_bvip2: float | None = None
    winner: str = "tie"
    lhs: float | None = None
    lhs_method: str | None = None
    lhs_halfwidth: float | None = None
    all_bounds_hold: bool | None = None
    violations: list[str] = field(default_factory=list)

    def theorem_bounds(self) -> dict[str, float]:
        """Bounds that each cap |E_X - E_Y| on their own."""
        out = {"bip_flat": self.bip_flat, "bvip1": self.bvip1, "bvip2": self.bvip2}
        if self.sep_bvip1 is not None:
            out["sep_bvip1"] = self.sep_bvip1
            out["sep_bvip2"] = self.sep_bvip2
        return out

    def to_json(self) -> dict:
        return asdict(self)


def compare_bounds(F: BivariatePoly, C: float, lhs: float | None = None,
                   instance_id: str = "instance", lhs_method: str | None = None,
                   lhs_halfwidth: float | None = None) -> BoundReport:
    _check_C(C)
    k = resolve_k(F)
    parts = decompose_separable(F)
    t1, t2 = max_t_sizes(F, k)
    b1 = bvip1_bound(F, C)
    b2 = bvip2_bound(F, C)
    rep = BoundReport(
        instance_id=instance_id, n=F.n, k=k, C=C,
        bip_flat=bip_bound(flatten(F), C),
        rbip_side1=rbip_exact_bound(F, 1, C), rbip_side2=rbip_exact_bound(F, 2, C),
        rbip_tilde_side1=rbip_tilde_bound(F, 1, C), rbip_tilde_side2=rbip_tilde_bound(F, 2, C),
        bvip1=b1, bvip2=b2, max_t1=t1, max_t2=t2,
        lhs=lhs, lhs_method=lhs_method, lhs_halfwidth=lhs_halfwidth,
    )
    if not isinstance(parts, NotSeparable):
        rep.sep_bvip1 = sep_bvip1_bound(parts, C)
        rep.sep_bvip2 = sep_bvip2_bound(parts, C)
    if b2 > 0:
        rep.ratio_bvip1_bvip2 = b1 / b2
    rep.winner = "bvip1" if b1 < b2 else "bvip2" if b2 < b1 else "tie"
    for name, v in rep.theorem_bounds().items():
        if not (math.isfinite(v) and v >= 0):
            raise FloatingPointError(f"bound {name} is not a finite non-negative number: {v}")
    if lhs is not None:
        rep.violations = [name for name, v in rep.theorem_bounds().items() if lhs > v + LHS_TOL]
        rep.all_bounds_hold = not rep.violations
    return rep


def pair_mass_by_cardinality(F: BivariatePoly) -> float:
    """sum over pairs of (|S1| + |S2|) * coeff^2; equals the total of all side aggregates."""
    return math.fsum((popcount(m1) + popcount(m2)) * c * c for (m1, m2), c in F.terms)
