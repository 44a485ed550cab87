import itertools
import math

import numpy as np
import pytest
from scipy.linalg import hadamard

from bvip.bivariate import BivariatePoly
from bvip.spectrum import MultilinearPoly

# Lines recorded by test_acceptance; printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# Oracles that do not go through the library's evaluation paths
# ---------------------------------------------------------------------------

def brute_eval(terms, point):
    """Evaluate sum_c c * prod x_i from a {mask: coeff} dict, plain Python."""
    total = 0.0
    for mask, c in terms.items():
        prod = c
        for i in range(len(point)):
            if mask >> i & 1:
                prod *= point[i]
        total += prod
    return total


def brute_expectation(f: MultilinearPoly, laws, psi):
    """E psi(f(X)) by itertools.product over atom lists [(v, p), ...] per coordinate."""
    terms = f.as_dict()
    acc = []
    for combo in itertools.product(*laws):
        point = [v for v, _ in combo]
        prob = math.prod(p for _, p in combo)
        acc.append(prob * psi(brute_eval(terms, point)))
    return math.fsum(acc)


def pivotal_influence(f: MultilinearPoly, i: int) -> float:
    terms = f.as_dict()
    count = 0
    for x in itertools.product([1.0, -1.0], repeat=f.n):
        y = list(x)
        y[i - 1] = -y[i - 1]
        if round(brute_eval(terms, x)) != round(brute_eval(terms, y)):
            count += 1
    return count / 2 ** f.n


def truth_table_poly(table: np.ndarray) -> MultilinearPoly:
    """Fourier expansion of a truth table indexed so bit i-1 set means x_i = -1."""
    N = table.shape[0]
    n = N.bit_length() - 1
    coeffs = hadamard(N) @ table / N
    return MultilinearPoly.from_terms(n, [(m, float(c)) for m, c in enumerate(coeffs)])


RAD = [(1.0, 0.5), (-1.0, 0.5)]
TERN = [(-math.sqrt(3), 1 / 6), (0.0, 2 / 3), (math.sqrt(3), 1 / 6)]


# ---------------------------------------------------------------------------
# Seeded corpora
# ---------------------------------------------------------------------------

def random_mask(rng, n, lo, hi):
    size = int(rng.integers(lo, hi + 1))
    return sum(1 << int(i) for i in rng.choice(n, size=size, replace=False))


def random_poly(rng, n, k, max_terms=12, force_degree=True):
    T = int(rng.integers(1, max_terms + 1))
    items = [(random_mask(rng, n, 0, k), float(rng.uniform(-1, 1))) for _ in range(T)]
    if force_degree:
        items.append((random_mask(rng, n, k, k), float(rng.uniform(0.1, 1))))
    return MultilinearPoly.from_terms(n, items)


def random_bivariate(rng, n, k, max_terms=8):
    T = int(rng.integers(1, max_terms + 1))
    items = [((random_mask(rng, n, 0, k), random_mask(rng, n, 0, k)), float(rng.uniform(-1, 1)))
             for _ in range(T)]
    return BivariatePoly.from_terms(n, items)


def poly_corpus(count, seed, n_max=10, degrees=(1, 2, 3)):
    rng = np.random.default_rng(seed)
    out = []
    for j in range(count):
        k = degrees[j % len(degrees)]
        n = int(rng.integers(k, n_max + 1))
        out.append((k, random_poly(rng, n, k)))
    return out


def bivariate_corpus(count, seed, n_max=6, k_max=2):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        k = int(rng.integers(1, k_max + 1))
        n = int(rng.integers(k, n_max + 1))
        out.append(random_bivariate(rng, n, k))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
