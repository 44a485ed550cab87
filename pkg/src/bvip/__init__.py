"""Invariance principles for univariate and bivariate multilinear polynomials."""
from .bivariate import (BivariatePoly, NotSeparable, SeparableParts, compose_separable,
                        decompose_separable, evaluate_bivariate, flatten, parse_bivariate,
                        restrict_side, side_degrees, sigma, sigma_tilde, t1_set, t2_set)
from .bounds import (BoundReport, bip_bound, bvip1_bound, bvip2_bound, compare_bounds,
                     expected_influence_exact, rbip_exact_bound, sep_bvip1_bound,
                     sep_bvip2_bound)
from .estimate import (DistributionSpec, EstimateResult, TestFunction, bonami_ratio,
                       exact_expectation, fourth_moment_exact, hybrid_path, lhs_distance,
                       make_test_function, mc_expectation, quadrature_expectation,
                       validate_hypothesis)
from .spectrum import (MultilinearPoly, PolyParseError, degree, evaluate,
                       influence_probabilistic, influence_spectral, is_boolean_valued,
                       parse_poly, parseval_second_moment)

__version__ = "0.1.0"
