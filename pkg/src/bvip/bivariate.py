"""Bivariate multilinear polynomials f(x, y) over two length-n sequences.

Terms are keyed by a mask pair ``(S1, S2)`` and ordered by the mask of the
concatenated sequence, ``S1 | S2 << n``, so that iterating a bivariate
polynomial visits coefficients in the same order as its flattening.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .spectrum import (MAX_VARS, MultilinearPoly, format_monomial, mask_from_vars,
                       parse_terms, popcount, vars_from_mask)


def _flat_key(n: int, pair: tuple[int, int]) -> int:
    return pair[0] | (pair[1] << n)


@dataclass(frozen=True)
class BivariatePoly:
    n: int
    terms: tuple[tuple[tuple[int, int], float], ...] = ()

    def __post_init__(self):
        if not 0 <= self.n <= MAX_VARS:
            raise ValueError(f"n must be in [0, {MAX_VARS}], got {self.n}")
        limit = 1 << self.n
        for (m1, m2), c in self.terms:
            if not (0 <= m1 < limit and 0 <= m2 < limit):
                raise ValueError(f"mask pair ({m1:#x}, {m2:#x}) out of range for n={self.n}")
            if c == 0.0:
                raise ValueError("explicit zero coefficient in canonical terms")

    @classmethod
    def from_terms(cls, n: int,
                   items: Iterable[tuple[tuple[int, int], float]] | Mapping[tuple[int, int], float],
                   prune_tol: float = 0.0) -> "BivariatePoly":
        if isinstance(items, Mapping):
            items = items.items()
        acc: dict[tuple[int, int], list[float]] = {}
        for pair, c in items:
            acc.setdefault((int(pair[0]), int(pair[1])), []).append(float(c))
        out = []
        for pair in sorted(acc, key=lambda p: _flat_key(n, p)):
            c = math.fsum(acc[pair])
            if c == 0.0 or abs(c) <= prune_tol:
                continue
            out.append((pair, c))
        return cls(n, tuple(out))

    @classmethod
    def from_monomials(cls, n: int, monomials: Iterable[tuple[Sequence[int], Sequence[int], float]],
                       prune_tol: float = 0.0) -> "BivariatePoly":
        items = []
        for xs, ys, c in monomials:
            for idx in (xs, ys):
                if len(set(idx)) != len(idx):
                    raise ValueError(f"repeated variable in monomial {list(idx)}")
                for i in idx:
                    if not 1 <= i <= n:
                        raise ValueError(f"variable index {i} out of range [1, {n}]")
            items.append(((mask_from_vars(xs), mask_from_vars(ys)), c))
        return cls.from_terms(n, items, prune_tol)

    def coeff(self, m1: int, m2: int) -> float:
        return dict(self.terms).get((m1, m2), 0.0)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(self.terms)

    def __len__(self):
        return len(self.terms)

    def scale(self, alpha: float) -> "BivariatePoly":
        return BivariatePoly.from_terms(self.n, [(p, alpha * c) for p, c in self.terms])

    def __str__(self):
        return format_bivariate(self)

    def to_json(self) -> dict:
        return {
            "kind": "bivariate",
            "n": self.n,
            "terms": [{"x": vars_from_mask(m1), "y": vars_from_mask(m2), "coeff": c}
                      for (m1, m2), c in self.terms],
        }

    @classmethod
    def from_json(cls, obj: Mapping, prune_tol: float = 0.0) -> "BivariatePoly":
        if obj.get("kind") != "bivariate":
            raise ValueError(f"expected kind 'bivariate', got {obj.get('kind')!r}")
        return cls.from_monomials(
            int(obj["n"]),
            [(t.get("x", []), t.get("y", []), float(t["coeff"])) for t in obj["terms"]],
            prune_tol)


@dataclass(frozen=True)
class SeparableParts:
    """F(x, y) = f(x) + g(y) + h(x*y), with x*y taken elementwise."""

    f: MultilinearPoly
    g: MultilinearPoly
    h: MultilinearPoly


@dataclass(frozen=True)
class NotSeparable:
    offending: tuple[int, int]

    def __bool__(self):
        return False

    def __str__(self):
        m1, m2 = self.offending
        return f"not separable: term ({vars_from_mask(m1)}, {vars_from_mask(m2)})"


def parse_bivariate(text: str, n: int, prune_tol: float = 0.0) -> BivariatePoly:
    raw = parse_terms(text, n, allow_y=True)
    return BivariatePoly.from_terms(n, [((mx, my), c) for c, mx, my in raw], prune_tol)


def format_bivariate(F: BivariatePoly) -> str:
    if not F.terms:
        return "0"
    parts = []
    for (m1, m2), c in F.terms:
        names = [f"x{i}" for i in vars_from_mask(m1)] + [f"y{j}" for j in vars_from_mask(m2)]
        parts.append(format_monomial(c, names))
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[1:]


def _product(mask: int, p: Sequence[float]) -> float:
    prod = 1.0
    i = 0
    while mask:
        if mask & 1:
            prod *= p[i]
        mask >>= 1
        i += 1
    return prod


def evaluate_bivariate(F: BivariatePoly, p1: Sequence[float], p2: Sequence[float]) -> float:
    if len(p1) != F.n or len(p2) != F.n:
        raise ValueError(f"both points must have length {F.n}")
    return math.fsum(c * _product(m1, p1) * _product(m2, p2) for (m1, m2), c in F.terms)


def side_degrees(F: BivariatePoly) -> tuple[int, int]:
    d1 = max((popcount(m1) for (m1, _), _ in F.terms), default=0)
    d2 = max((popcount(m2) for (_, m2), _ in F.terms), default=0)
    return d1, d2


def resolve_k(F: BivariatePoly, k: int | None = None) -> int:
    """The per-side degree cap; defaults to the larger side degree.

    A k smaller than an actual side degree would silently drop terms from the
    T-sets, so it is rejected.
    """
    need = max(side_degrees(F))
    if k is None:
        return need
    if k < need:
        raise ValueError(f"k={k} is below the per-side degree {need} of this polynomial")
    return k


def _check_side(side: int):
    if side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {side}")


def _check_coord(n: int, t: int):
    if not 1 <= t <= n:
        raise ValueError(f"coordinate {t} out of range [1, {n}]")


def t2_set(F: BivariatePoly, S1: int, k: int | None = None) -> frozenset[int]:
    """Masks S2 with |S2| <= k and a nonzero coefficient on (S1, S2)."""
    k = resolve_k(F, k)
    return frozenset(m2 for (m1, m2), _ in F.terms if m1 == S1 and popcount(m2) <= k)


def t1_set(F: BivariatePoly, S2: int, k: int | None = None) -> frozenset[int]:
    k = resolve_k(F, k)
    return frozenset(m1 for (m1, m2), _ in F.terms if m2 == S2 and popcount(m1) <= k)


def _t_sizes(F: BivariatePoly, side: int, k: int) -> dict[int, int]:
    # |T_2(S1)| keyed by S1 (side 1) or |T_1(S2)| keyed by S2 (side 2)
    sizes: dict[int, int] = {}
    for (m1, m2), _ in F.terms:
        own, other = (m1, m2) if side == 1 else (m2, m1)
        if popcount(other) <= k:
            sizes[own] = sizes.get(own, 0) + 1
    return sizes


def _side_aggregate(F: BivariatePoly, side: int, t: int, k: int | None, weighted: bool) -> float:
    _check_side(side)
    _check_coord(F.n, t)
    k = resolve_k(F, k)
    sizes = _t_sizes(F, side, k)
    bit = 1 << (t - 1)
    vals = []
    for (m1, m2), c in F.terms:
        own, other = (m1, m2) if side == 1 else (m2, m1)
        if own & bit and popcount(other) <= k:
            vals.append(sizes[own] * c * c if weighted else c * c)
    return math.fsum(vals)


def sigma_tilde(F: BivariatePoly, side: int, t: int, k: int | None = None) -> float:
    """Sum over S_side containing t of |T(S_side)| times the mass on T(S_side)."""
    return _side_aggregate(F, side, t, k, weighted=True)


def sigma(F: BivariatePoly, side: int, t: int, k: int | None = None) -> float:
    """Sum over S_side containing t of the coefficient mass on T(S_side)."""
    return _side_aggregate(F, side, t, k, weighted=False)


def max_t_sizes(F: BivariatePoly, k: int | None = None) -> tuple[int, int]:
    """(max |T_1(S2)|, max |T_2(S1)|) over all live masks."""
    k = resolve_k(F, k)
    t1 = max(_t_sizes(F, 2, k).values(), default=0)
    t2 = max(_t_sizes(F, 1, k).values(), default=0)
    return t1, t2


def flatten(F: BivariatePoly) -> MultilinearPoly:
    """The 2n-variate polynomial g with g(x || y) = F(x, y)."""
    if 2 * F.n > MAX_VARS:
        raise ValueError(f"flattening needs 2n <= {MAX_VARS}, got n={F.n}")
    return MultilinearPoly(2 * F.n, tuple((_flat_key(F.n, p), c) for p, c in F.terms))


def compose_separable(f: MultilinearPoly, g: MultilinearPoly, h: MultilinearPoly) -> BivariatePoly:
    if not f.n == g.n == h.n:
        raise ValueError("f, g, h must share the same n")
    items = [((m, 0), c) for m, c in f.terms]
    items += [((0, m), c) for m, c in g.terms]
    items += [((m, m), c) for m, c in h.terms]
    return BivariatePoly.from_terms(f.n, items)


def decompose_separable(F: BivariatePoly) -> SeparableParts | NotSeparable:
    """Split F into f(x) + g(y) + h(x*y); the constant term goes to f."""
    f, g, h = [], [], []
    for (m1, m2), c in F.terms:
        if m2 == 0:
            f.append((m1, c))
        elif m1 == 0:
            g.append((m2, c))
        elif m1 == m2:
            h.append((m1, c))
        else:
            return NotSeparable((m1, m2))
    n = F.n
    return SeparableParts(MultilinearPoly.from_terms(n, f), MultilinearPoly.from_terms(n, g),
                          MultilinearPoly.from_terms(n, h))


def restrict_side(F: BivariatePoly, side: int, p: Sequence[float]) -> MultilinearPoly:
    """Substitute ``p`` for sequence ``side``; the result is a polynomial in the other one."""
    _check_side(side)
    if len(p) != F.n:
        raise ValueError(f"point has length {len(p)}, expected {F.n}")
    items = []
    for (m1, m2), c in F.terms:
        if side == 1:
            items.append((m2, c * _product(m1, p)))
        else:
            items.append((m1, c * _product(m2, p)))
    return MultilinearPoly.from_terms(F.n, items)


def restrict_many(F: BivariatePoly, side: int, points: np.ndarray) -> tuple[list[int], np.ndarray]:
    """Vectorized restriction: coefficient matrix of shape (m, #free masks)."""
    _check_side(side)
    points = np.asarray(points, dtype=float)
    free = sorted({(m2 if side == 1 else m1) for (m1, m2), _ in F.terms})
    col = {m: j for j, m in enumerate(free)}
    out = np.zeros((points.shape[0], len(free)))
    for (m1, m2), c in F.terms:
        fixed, keep = (m1, m2) if side == 1 else (m2, m1)
        v = np.full(points.shape[0], c)
        for i in vars_from_mask(fixed):
            v = v * points[:, i - 1]
        out[:, col[keep]] += v
    return free, out
