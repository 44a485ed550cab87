"""Sparse multilinear polynomials over n indeterminates.

A polynomial is stored as a map from subset bitmasks to real coefficients,
where bit ``i - 1`` of a mask is set iff variable ``x_i`` is in the monomial.
Terms are kept in ascending mask order so every sum over them is reproducible.
"""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_VARS = 32
DEFAULT_ENUM_CAP = 24
BOOLEAN_TOL = 1e-9


class PolyParseError(ValueError):
    """Raised for malformed polynomial text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class EnumerationCapError(ValueError):
    """Raised when an exhaustive enumeration would exceed the configured cap."""


def enumeration_cap() -> int:
    """Largest number of coordinates (log2 of grid size) that may be enumerated.

    ``BVIP_GRID_CAP`` overrides the default of 24.
    """
    raw = os.environ.get("BVIP_GRID_CAP")
    if raw is None:
        return DEFAULT_ENUM_CAP
    return int(raw)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_from_vars(indices: Iterable[int]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << (i - 1)
    return mask


def vars_from_mask(mask: int) -> list[int]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _canonical_terms(items: Iterable[tuple[int, float]], prune_tol: float = 0.0):
    acc: dict[int, list[float]] = {}
    for key, c in items:
        acc.setdefault(key, []).append(float(c))
    out = []
    for key in sorted(acc):
        c = math.fsum(acc[key])
        if c == 0.0 or abs(c) <= prune_tol:
            continue
        out.append((key, c))
    return tuple(out)


@dataclass(frozen=True)
class MultilinearPoly:
    """f(x) = sum_S coeff(S) * prod_{i in S} x_i, stored sparsely by bitmask."""

    n: int
    terms: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not 0 <= self.n <= MAX_VARS:
            raise ValueError(f"n must be in [0, {MAX_VARS}], got {self.n}")
        limit = 1 << self.n
        for mask, c in self.terms:
            if not 0 <= mask < limit:
                raise ValueError(f"mask {mask:#x} out of range for n={self.n}")
            if c == 0.0:
                raise ValueError("explicit zero coefficient in canonical terms")

    @classmethod
    def from_terms(cls, n: int, items: Iterable[tuple[int, float]] | Mapping[int, float],
                   prune_tol: float = 0.0) -> "MultilinearPoly":
        """Build from (mask, coeff) pairs; duplicate masks are summed."""
        if isinstance(items, Mapping):
            items = items.items()
        return cls(n, _canonical_terms(items, prune_tol))

    @classmethod
    def from_monomials(cls, n: int, monomials: Iterable[tuple[Sequence[int], float]],
                       prune_tol: float = 0.0) -> "MultilinearPoly":
        """Build from ([1-based variable indices], coeff) pairs."""
        items = []
        for idx, c in monomials:
            if len(set(idx)) != len(idx):
                raise ValueError(f"repeated variable in monomial {list(idx)}")
            for i in idx:
                if not 1 <= i <= n:
                    raise ValueError(f"variable index {i} out of range [1, {n}]")
            items.append((mask_from_vars(idx), c))
        return cls.from_terms(n, items, prune_tol)

    @classmethod
    def constant(cls, n: int, c: float) -> "MultilinearPoly":
        return cls.from_terms(n, [(0, c)])

    def coeff(self, mask: int) -> float:
        return dict(self.terms).get(mask, 0.0)

    def as_dict(self) -> dict[int, float]:
        return dict(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "MultilinearPoly") -> "MultilinearPoly":
        if not isinstance(other, MultilinearPoly):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("cannot add polynomials over different n")
        return MultilinearPoly.from_terms(self.n, self.terms + other.terms)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, alpha: float) -> "MultilinearPoly":
        return MultilinearPoly.from_terms(self.n, [(m, alpha * c) for m, c in self.terms])

    def __str__(self):
        return format_poly(self)

    def to_json(self) -> dict:
        return {
            "kind": "univariate",
            "n": self.n,
            "terms": [{"vars": vars_from_mask(m), "coeff": c} for m, c in self.terms],
        }

    @classmethod
    def from_json(cls, obj: Mapping, prune_tol: float = 0.0) -> "MultilinearPoly":
        if obj.get("kind", "univariate") != "univariate":
            raise ValueError(f"expected kind 'univariate', got {obj.get('kind')!r}")
        n = int(obj["n"])
        return cls.from_monomials(
            n, [(t["vars"], float(t["coeff"])) for t in obj["terms"]], prune_tol)


# ---------------------------------------------------------------------------
# Text grammar
#   poly   := [sign] term { sign term }
#   term   := number [ { '*' var } ] | var { '*' var }
#   var    := ('x' | 'y') digits
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_VAR_RE = re.compile(r"([xy])(\d+)")


class _Parser:
    def __init__(self, text: str, n: int, allow_y: bool):
        self.text = text
        self.n = n
        self.allow_y = allow_y
        self.pos = 0

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> list[tuple[float, int, int]]:
        if self._peek() == "":
            raise PolyParseError("empty expression", self.pos)
        terms = []
        sign = 1.0
        if self._peek() in "+-":
            sign = -1.0 if self.text[self.pos] == "-" else 1.0
            self.pos += 1
        terms.append(self._term(sign))
        while True:
            ch = self._peek()
            if ch == "":
                break
            if ch not in "+-":
                raise PolyParseError(f"expected '+' or '-', found {ch!r}", self.pos)
            sign = -1.0 if ch == "-" else 1.0
            self.pos += 1
            terms.append(self._term(sign))
        return terms

    def _term(self, sign: float) -> tuple[float, int, int]:
        self._skip()
        start = self.pos
        coeff = 1.0
        masks = [0, 0]
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            coeff = float(m.group())
            self.pos = m.end()
            if self._peek() != "*":
                return sign * coeff, 0, 0
            self.pos += 1
        self._var(masks)
        while self._peek() == "*":
            self.pos += 1
            self._var(masks)
        if not math.isfinite(coeff):
            raise PolyParseError("non-finite coefficient", start)
        return sign * coeff, masks[0], masks[1]

    def _var(self, masks: list[int]):
        self._skip()
        m = _VAR_RE.match(self.text, self.pos)
        if not m:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            raise PolyParseError(f"expected variable, found {found!r}", self.pos)
        name, digits = m.group(1), int(m.group(2))
        if name == "y" and not self.allow_y:
            raise PolyParseError("'y' variables are not allowed in a univariate polynomial",
                                 self.pos)
        if not 1 <= digits <= self.n:
            raise PolyParseError(f"index {name}{digits} out of range [1, {self.n}]", self.pos)
        side = 0 if name == "x" else 1
        bit = 1 << (digits - 1)
        if masks[side] & bit:
            raise PolyParseError(
                f"repeated variable {name}{digits} in one monomial (not multilinear)", self.pos)
        masks[side] |= bit
        self.pos = m.end()


def parse_terms(text: str, n: int, allow_y: bool = False) -> list[tuple[float, int, int]]:
    """Parse ``text`` into raw (coeff, x_mask, y_mask) triples, uncanonicalized."""
    if not 0 <= n <= MAX_VARS:
        raise ValueError(f"n must be in [0, {MAX_VARS}]")
    return _Parser(text, n, allow_y).parse()


def parse_poly(text: str, n: int, prune_tol: float = 0.0) -> MultilinearPoly:
    """Parse a univariate polynomial in ``x1..xn``.

    >>> parse_poly("0.5*x1 + 0.5*x2", 2).terms
    ((1, 0.5), (2, 0.5))
    """
    raw = parse_terms(text, n, allow_y=False)
    return MultilinearPoly.from_terms(n, [(mx, c) for c, mx, _ in raw], prune_tol)


def format_monomial(coeff: float, names: Sequence[str]) -> str:
    body = "*".join([repr(abs(coeff))] + list(names))
    return ("- " if coeff < 0 else "+ ") + body


def format_poly(f: MultilinearPoly) -> str:
    if not f.terms:
        return "0"
    parts = [format_monomial(c, [f"x{i}" for i in vars_from_mask(m)]) for m, c in f.terms]
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[1:]


# ---------------------------------------------------------------------------
# Evaluation and spectral quantities
# ---------------------------------------------------------------------------

def evaluate(f: MultilinearPoly, p: Sequence[float]) -> float:
    if len(p) != f.n:
        raise ValueError(f"point has length {len(p)}, expected {f.n}")
    vals = []
    for mask, c in f.terms:
        prod = c
        i = 0
        while mask:
            if mask & 1:
                prod *= p[i]
            mask >>= 1
            i += 1
        vals.append(prod)
    return math.fsum(vals)


def evaluate_many(f: MultilinearPoly, points: np.ndarray) -> np.ndarray:
    """Evaluate at each row of an (m, n) array."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != f.n:
        raise ValueError(f"points must have shape (m, {f.n})")
    out = np.zeros(points.shape[0])
    for mask, c in f.terms:
        col = np.full(points.shape[0], c)
        for i in vars_from_mask(mask):
            col = col * points[:, i - 1]
        out += col
    return out


def degree(f: MultilinearPoly) -> int:
    return max((popcount(m) for m, _ in f.terms), default=0)


def _check_coord(n: int, i: int):
    if not 1 <= i <= n:
        raise ValueError(f"coordinate {i} out of range [1, {n}]")


def influence_spectral(f: MultilinearPoly, i: int) -> float:
    """Inf_i[f] = sum over S containing i of coeff(S)^2."""
    _check_coord(f.n, i)
    bit = 1 << (i - 1)
    return math.fsum(c * c for m, c in f.terms if m & bit)


def influences(f: MultilinearPoly) -> list[float]:
    return [influence_spectral(f, i) for i in range(1, f.n + 1)]


def parseval_second_moment(f: MultilinearPoly) -> float:
    return math.fsum(c * c for _, c in f.terms)


def _walsh_hadamard(f: MultilinearPoly) -> np.ndarray:
    """Dense butterfly transform; O(n 2^n) regardless of sparsity."""
    a = np.zeros(1 << f.n)
    for mask, c in f.terms:
        a[mask] = c
    h, N = 1, a.shape[0]
    while h < N:
        a = a.reshape(-1, 2, h)
        a = np.stack((a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]), axis=1)
        h *= 2
    return a.ravel()


def cube_values(f: MultilinearPoly, cap: int | None = None) -> np.ndarray:
    """Values of f on all of {-1,1}^n.

    Entry ``idx`` is f at the point whose coordinate ``i`` is -1 iff bit
    ``i - 1`` of ``idx`` is set.
    """
    cap = enumeration_cap() if cap is None else cap
    if f.n > cap:
        raise EnumerationCapError(f"n={f.n} exceeds enumeration cap {cap}")
    if len(f.terms) > f.n:
        return _walsh_hadamard(f)
    idx = np.arange(1 << f.n, dtype=np.int64)
    out = np.zeros(idx.shape[0])
    for mask, c in f.terms:
        # chi_S(x) = (-1)^{|S & idx|}
        par = np.zeros(idx.shape[0], dtype=np.int64)
        for i in vars_from_mask(mask):
            par ^= (idx >> (i - 1)) & 1
        out += c * (1 - 2 * par)
    return out


def is_boolean_valued(f: MultilinearPoly, cap: int | None = None) -> bool:
    vals = cube_values(f, cap)
    return bool(np.all(np.abs(np.abs(vals) - 1.0) <= BOOLEAN_TOL))


def influence_probabilistic(f: MultilinearPoly, i: int, cap: int | None = None) -> float:
    """Fraction of cube points at which coordinate i is pivotal."""
    _check_coord(f.n, i)
    vals = cube_values(f, cap)
    if not np.all(np.abs(np.abs(vals) - 1.0) <= BOOLEAN_TOL):
        raise ValueError("influence_probabilistic requires a +-1-valued function")
    flipped = vals[np.arange(vals.shape[0]) ^ (1 << (i - 1))]
    pivotal = np.count_nonzero(np.sign(vals) != np.sign(flipped))
    return pivotal / vals.shape[0]


def dumps(f: MultilinearPoly) -> str:
    return json.dumps(f.to_json())
