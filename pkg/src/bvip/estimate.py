"""Input distributions, test functions and expectations of psi(f(X)).

Exact expectations enumerate the product of per-coordinate atom supports and
are the only estimates used for pass/fail comparisons against bounds.
Gaussian inputs are handled by Hermite quadrature or Monte Carlo.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .bivariate import BivariatePoly, flatten
from .spectrum import EnumerationCapError, MultilinearPoly, enumeration_cap, vars_from_mask

MOMENT_TOL = 1e-12
Z95 = 1.959964
MC_CHUNK = 1 << 16
MAX_QUADRATURE_DIMS = 6

# max over [0, 1] of |S''''| for S(t) = 70t^9 - 315t^8 + 540t^7 - 420t^6 + 126t^5.
# S'''' = 15120 t (14t^4 - 35t^3 + 30t^2 - 10t + 1); the extremum sits at
# t = 1/2 -+ sqrt(35) sqrt(15 - 2 sqrt(30)) / 70 with |S''''| = 622.53273550542415...
# Rounded up so the constant stays an upper bound.
SMOOTHSTEP_M4 = 622.532735505425


class HypothesisError(ValueError):
    """A distribution fails the moment conditions E[X]=0, E[X^2]=1, E[X^3]=0, E[X^4]<=9."""


class NotEnumerableError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistributionSpec:
    kind: str  # "rademacher" | "gaussian" | "atoms"
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("rademacher", "gaussian", "atoms"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "atoms":
            if not self.atoms:
                raise ValueError("atom list is empty")
            for v, p in self.atoms:
                if not (math.isfinite(v) and math.isfinite(p)) or p < 0:
                    raise ValueError(f"malformed atom ({v}, {p})")
            total = math.fsum(p for _, p in self.atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"atom probabilities sum to {total}, not 1")

    @property
    def enumerable(self) -> bool:
        return self.kind != "gaussian"

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "rademacher":
            return np.array([1.0, -1.0]), np.array([0.5, 0.5])
        if self.kind == "atoms":
            return (np.array([v for v, _ in self.atoms]),
                    np.array([p for _, p in self.atoms]))
        raise NotEnumerableError("the standard Gaussian has no finite support")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        vals, probs = self.support()
        return vals[rng.choice(len(vals), size=size, p=probs)]

    def to_json(self) -> dict:
        if self.kind == "atoms":
            return {"kind": "atoms", "atoms": [list(a) for a in self.atoms]}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, obj: Mapping) -> "DistributionSpec":
        kind = obj["kind"]
        if kind == "atoms":
            return cls("atoms", tuple((float(v), float(p)) for v, p in obj["atoms"]))
        return cls(kind)


def rademacher() -> DistributionSpec:
    return DistributionSpec("rademacher")


def gaussian() -> DistributionSpec:
    return DistributionSpec("gaussian")


def atoms(pairs: Sequence[tuple[float, float]]) -> DistributionSpec:
    return DistributionSpec("atoms", tuple((float(v), float(p)) for v, p in pairs))


def ternary() -> DistributionSpec:
    """+-sqrt(3) with probability 1/6 each, 0 with probability 2/3."""
    r = math.sqrt(3.0)
    return atoms([(-r, 1 / 6), (0.0, 2 / 3), (r, 1 / 6)])


@dataclass(frozen=True)
class MomentReport:
    m1: float
    m2: float
    m3: float
    m4: float
    passes_hypothesis: bool


def validate_hypothesis(d: DistributionSpec) -> MomentReport:
    if d.kind == "rademacher":
        m = (0.0, 1.0, 0.0, 1.0)
    elif d.kind == "gaussian":
        m = (0.0, 1.0, 0.0, 3.0)
    else:
        m = tuple(math.fsum(p * v ** j for v, p in d.atoms) for j in range(1, 5))
    ok = (abs(m[0]) <= MOMENT_TOL and abs(m[1] - 1.0) <= MOMENT_TOL
          and abs(m[2]) <= MOMENT_TOL and m[3] <= 9.0 + MOMENT_TOL)
    return MomentReport(*m, passes_hypothesis=ok)


def require_hypothesis(*dists: DistributionSpec):
    for d in dists:
        rep = validate_hypothesis(d)
        if not rep.passes_hypothesis:
            raise HypothesisError(
                f"{d.to_json()} fails the moment hypothesis: moments "
                f"({rep.m1:.3g}, {rep.m2:.3g}, {rep.m3:.3g}, {rep.m4:.3g})")


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    name: str
    params: dict
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    C: float
    provenance: str = ""

    __test__ = False  # not a pytest class

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def to_json(self) -> dict:
        return {"kind": self.name, **self.params}


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t ** 5 * (126 + t * (-420 + t * (540 + t * (-315 + t * 70))))


def make_test_function(kind: str, **params) -> TestFunction:
    """Catalog of test functions with certified bounds C >= sup |psi''''|."""
    if kind == "power":
        m = int(params.get("m", 4))
        if not 0 <= m <= 4:
            raise ValueError("power test function needs 0 <= m <= 4 for a bounded 4th derivative")
        C = 24.0 if m == 4 else 0.0
        return TestFunction("power", {"m": m}, lambda s: s ** m, C,
                            "d^4/ds^4 s^m is 24 for m=4 and 0 below")
    if kind == "cosine":
        return TestFunction("cosine", {}, np.cos, 1.0, "|cos''''| = |cos| <= 1")
    if kind == "smooth_step":
        u = float(params.get("u", 0.0))
        lam = float(params.get("lambda", params.get("lam", 0.5)))
        if not (lam > 0 and math.isfinite(lam) and math.isfinite(u)):
            raise ValueError("smooth_step needs finite u and lambda > 0")

        def fn(s, u=u, lam=lam):
            t = np.clip((s - u) / lam, 0.0, 1.0)
            return 1.0 - _smoothstep(t)

        return TestFunction("smooth_step", {"u": u, "lambda": lam}, fn,
                            SMOOTHSTEP_M4 / lam ** 4,
                            "M4/lambda^4, M4 from the critical points of the degree-5 S''''")
    raise ValueError(f"unknown test function kind {kind!r}")


def test_function_from_json(obj: Mapping) -> TestFunction:
    params = {k: v for k, v in obj.items() if k != "kind"}
    return make_test_function(obj["kind"], **params)


_PSI_ALIASES = {
    "power0": ("power", {"m": 0}), "power1": ("power", {"m": 1}),
    "power2": ("power", {"m": 2}), "power3": ("power", {"m": 3}),
    "power4": ("power", {"m": 4}), "cosine": ("cosine", {}),
    "smooth_step": ("smooth_step", {"u": 0.0, "lambda": 0.5}),
}


def test_function_from_name(name: str) -> TestFunction:
    """Short names used on the command line, e.g. ``power4``."""
    if name not in _PSI_ALIASES:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(_PSI_ALIASES)}")
    kind, params = _PSI_ALIASES[name]
    return make_test_function(kind, **params)


# ---------------------------------------------------------------------------
# Expectations
# ---------------------------------------------------------------------------

Target = Union[MultilinearPoly, BivariatePoly]
DistArg = Union[DistributionSpec, Sequence[DistributionSpec]]


@dataclass(frozen=True)
class EstimateResult:
    value: float
    method: str  # "exact" | "quadrature" | "monte_carlo"
    half_width: float = 0.0
    samples: int = 0
    seed: int | None = None


def _coordinate_laws(target: Target, dists: DistArg) -> tuple[MultilinearPoly, list[DistributionSpec]]:
    """Flatten the target and assign a distribution to each coordinate."""
    if isinstance(target, BivariatePoly):
        f = flatten(target)
        if isinstance(dists, DistributionSpec):
            laws = [dists] * f.n
        else:
            d1, d2 = dists
            laws = [d1] * target.n + [d2] * target.n
        return f, laws
    if isinstance(dists, DistributionSpec):
        return target, [dists] * target.n
    dists = list(dists)
    if len(dists) != target.n:
        raise ValueError(f"need one distribution per coordinate ({target.n}), got {len(dists)}")
    return target, dists


def _grid_size(supports) -> int:
    return math.prod(len(v) for v, _ in supports)


def grid_values(f: MultilinearPoly, supports: Sequence[tuple[np.ndarray, np.ndarray]],
                cap_points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Values of f and their probabilities on the product grid of the supports."""
    cap_points = 1 << enumeration_cap() if cap_points is None else cap_points
    size = _grid_size(supports)
    if size > cap_points:
        raise EnumerationCapError(f"grid of {size} points exceeds cap {cap_points}")
    N = f.n
    shape = tuple(len(v) for v, _ in supports)

    def axis_view(a, i):
        s = [1] * N
        s[i] = a.shape[0]
        return a.reshape(s)

    vals = np.zeros(shape)
    for mask, c in f.terms:
        term = np.asarray(c)
        for i in vars_from_mask(mask):
            term = term * axis_view(supports[i - 1][0], i - 1)
        vals = vals + term
    probs = np.ones(shape)
    for i, (_, p) in enumerate(supports):
        probs = probs * axis_view(p, i)
    return vals.ravel(), probs.ravel()


def _drop_unused(f: MultilinearPoly, laws: Sequence[DistributionSpec]):
    """Restrict to coordinates that appear in some monomial; the rest integrate to 1."""
    used = 0
    for mask, _ in f.terms:
        used |= mask
    keep = vars_from_mask(used)
    if len(keep) == f.n:
        return f, list(laws)
    pos = {v: j for j, v in enumerate(keep)}
    terms = [(sum(1 << pos[v] for v in vars_from_mask(mask)), c) for mask, c in f.terms]
    return MultilinearPoly.from_terms(len(keep), terms), [laws[v - 1] for v in keep]


def _exact_mean(f: MultilinearPoly, laws: Sequence[DistributionSpec], psi: TestFunction,
                cap_points: int | None) -> float:
    for d in laws:
        if not d.enumerable:
            raise NotEnumerableError("exact expectation needs enumerable distributions")
    f, laws = _drop_unused(f, laws)
    vals, probs = grid_values(f, [d.support() for d in laws], cap_points)
    out = psi(vals) * probs
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite value in exact expectation")
    return math.fsum(out.tolist())


def exact_expectation(target: Target, dists: DistArg, psi: TestFunction,
                      cap_points: int | None = None) -> EstimateResult:
    """E[psi(target(X))] by full enumeration of the atom grid."""
    f, laws = _coordinate_laws(target, dists)
    return EstimateResult(_exact_mean(f, laws, psi, cap_points), "exact")


def _hermite_law(nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite_e.hermegauss(nodes_per_dim)
    return x, w / w.sum()


def quadrature_expectation(f: Target, psi: TestFunction, nodes_per_dim: int = 16,
                           dists: DistArg | None = None,
                           cap_points: int | None = None) -> EstimateResult:
    """E[psi(f(G))] with Gaussian coordinates replaced by a Hermite tensor grid.

    Enumerable coordinates in ``dists`` are kept exact; at most six
    coordinates may be Gaussian.
    """
    if not 2 <= nodes_per_dim <= 64:
        raise ValueError("nodes_per_dim must be in [2, 64]")
    g, laws = _coordinate_laws(f, gaussian() if dists is None else dists)
    n_gauss = sum(1 for d in laws if not d.enumerable)
    if n_gauss > MAX_QUADRATURE_DIMS:
        raise EnumerationCapError(
            f"{n_gauss} Gaussian coordinates exceed the tensor-grid cap {MAX_QUADRATURE_DIMS}")
    herm = _hermite_law(nodes_per_dim)
    supports = [d.support() if d.enumerable else herm for d in laws]
    vals, probs = grid_values(g, supports, cap_points)
    value = math.fsum((psi(vals) * probs).tolist())
    return EstimateResult(value, "quadrature" if n_gauss else "exact")


def _mc_chunk(f: MultilinearPoly, laws: Sequence[DistributionSpec], psi: TestFunction,
              seed: int, chunk: int, count: int) -> np.ndarray:
    # The stream for chunk c depends only on (seed, c), so chunking fixes the samples.
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))
    cols = np.empty((count, f.n))
    for i, d in enumerate(laws):
        cols[:, i] = d.sample(rng, count)
    vals = np.zeros(count)
    for mask, c in f.terms:
        term = np.full(count, c)
        for i in vars_from_mask(mask):
            term = term * cols[:, i - 1]
        vals += term
    return psi(vals)


def mc_expectation(target: Target, dists: DistArg, psi: TestFunction, samples: int,
                   seed: int = 0, workers: int = 1) -> EstimateResult:
    """Sample mean of psi(target(X)) with a 95% normal-approximation half-width.

    Samples come in fixed-size chunks, each with its own counter-based stream;
    the result is bit-identical for any ``workers``.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    f, laws = _coordinate_laws(target, dists)
    jobs = [(c, min(MC_CHUNK, samples - c * MC_CHUNK))
            for c in range((samples + MC_CHUNK - 1) // MC_CHUNK)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: _mc_chunk(f, laws, psi, seed, *j), jobs))
    else:
        parts = [_mc_chunk(f, laws, psi, seed, *j) for j in jobs]
    vals = np.concatenate(parts)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite sample in Monte Carlo estimate")
    mean = math.fsum(vals.tolist()) / samples
    var = math.fsum(((vals - mean) ** 2).tolist()) / (samples - 1)
    return EstimateResult(mean, "monte_carlo", Z95 * math.sqrt(var / samples), samples, seed)


_METHOD_RANK = {"exact": 0, "quadrature": 1, "monte_carlo": 2}


def side_expectation(target: Target, dists: DistArg, psi: TestFunction, method: str = "exact",
                     samples: int = 100_000, seed: int = 0, workers: int = 1,
                     nodes_per_dim: int = 16) -> EstimateResult:
    if method == "exact":
        return exact_expectation(target, dists, psi)
    if method == "quadrature":
        return quadrature_expectation(target, psi, nodes_per_dim, dists)
    if method == "monte_carlo":
        return mc_expectation(target, dists, psi, samples, seed, workers)
    raise ValueError(f"unknown method {method!r}")


def lhs_distance(target: Target, dists_x: DistArg, dists_y: DistArg, psi: TestFunction,
                 method: str = "exact", samples: int = 100_000, seed: int = 0,
                 workers: int = 1, nodes_per_dim: int = 16) -> EstimateResult:
    """|E psi(target(X)) - E psi(target(Y))|; Monte Carlo half-widths add."""
    # Distinct seeds keep the two Monte Carlo streams independent.
    ex = side_expectation(target, dists_x, psi, method, samples, seed, workers, nodes_per_dim)
    ey = side_expectation(target, dists_y, psi, method, samples, seed + 1, workers, nodes_per_dim)
    used = max(ex.method, ey.method, key=_METHOD_RANK.__getitem__)
    return EstimateResult(abs(ex.value - ey.value), used, ex.half_width + ey.half_width,
                          ex.samples + ey.samples, seed if used == "monte_carlo" else None)


def hybrid_expectations(f: MultilinearPoly, dist_x: DistributionSpec, dist_y: DistributionSpec,
                        psi: TestFunction, cap_points: int | None = None) -> list[float]:
    """E psi(H_t) for t = 0..n, where H_t = f(Y_1..Y_t, X_{t+1}..X_n)."""
    return [_exact_mean(f, [dist_y] * t + [dist_x] * (f.n - t), psi, cap_points)
            for t in range(f.n + 1)]


def hybrid_path(f: MultilinearPoly, dist_x: DistributionSpec, dist_y: DistributionSpec,
                psi: TestFunction, cap_points: int | None = None) -> list[float]:
    """Per-coordinate replacement gaps |E psi(H_{t-1}) - E psi(H_t)|, t = 1..n."""
    e = hybrid_expectations(f, dist_x, dist_y, psi, cap_points)
    return [abs(e[t - 1] - e[t]) for t in range(1, f.n + 1)]


_SQUARE = TestFunction("power", {"m": 2}, lambda s: s ** 2, 0.0)
_FOURTH = TestFunction("power", {"m": 4}, lambda s: s ** 4, 24.0)


def second_moment_exact(f: MultilinearPoly, dist: DistArg) -> float:
    return exact_expectation(f, dist, _SQUARE).value


def fourth_moment_exact(f: MultilinearPoly, dist: DistArg) -> float:
    return exact_expectation(f, dist, _FOURTH).value


def bonami_ratio(f: MultilinearPoly, dist: DistArg) -> float:
    """E[f^4] / E[f^2]^2, taken as 0 when E[f^2] = 0."""
    m2 = second_moment_exact(f, dist)
    if m2 == 0.0:
        return 0.0
    return fourth_moment_exact(f, dist) / m2 ** 2
