import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import secular_coefficients_bruteforce, secular_roots_bisection
from trapgap.errors import (
    NoSolution,
    NonMonotoneSigma,
    NotInG,
    OrderingViolation,
)
from trapgap.limits import (
    DesignParams,
    GapTargets,
    LimitSpectrum,
    build_matrix_M,
    epsilon_from_radius,
    forward,
    hole_radius,
    inverse_design,
    max_epsilon,
    maxwell_gap_map,
    mu_via_matrix,
    random_spectrum,
    round_trip_error,
    secular_coefficients,
    secular_function,
    sigma_from_design,
    solve_mu,
)

# bisection oracle, 1e-15 bracket width
MU_123 = (1.0820605147021687, 2.4368606972819276, 9.481078788015903)
# explicit subset sums
COEFF_123 = (-0.4, 5.2, -14.4, 10.0)


def test_single_trap_closed_form():
    assert solve_mu([1.0], [0.5]) == pytest.approx((2.0,), rel=1e-15)
    # mu = sigma / (1 - b)
    for s, b in [(0.3, 0.1), (7.0, 0.9), (1e3, 0.25)]:
        assert solve_mu([s], [b])[0] == pytest.approx(s / (1 - b), rel=1e-14)


def test_two_trap_quadratic():
    mu = solve_mu([1.0, 4.0], [0.25, 0.25])
    roots = sorted(np.roots([1.0, -7.5, 8.0]))
    assert mu == pytest.approx(roots, rel=1e-12)
    assert mu == pytest.approx(secular_roots_bisection([1.0, 4.0], [0.25, 0.25]), rel=1e-13)


def test_coefficients_match_subset_oracle():
    assert secular_coefficients([1, 4], [0.25, 0.25]).A == pytest.approx((0.5, -3.75, 4.0), rel=1e-14)
    assert secular_coefficients([1, 2, 5], [0.1, 0.2, 0.3]).A == pytest.approx(COEFF_123, rel=1e-14)


def test_frozen_oracle_values_still_reproduce():
    assert secular_coefficients_bruteforce([1, 2, 5], [0.1, 0.2, 0.3]) == pytest.approx(COEFF_123, rel=1e-14)
    assert secular_roots_bisection([1, 2, 5], [0.1, 0.2, 0.3]) == pytest.approx(MU_123, rel=1e-13)


def test_three_traps_both_paths():
    assert solve_mu([1, 2, 5], [0.1, 0.2, 0.3]) == pytest.approx(MU_123, rel=1e-13)
    assert mu_via_matrix([1, 2, 5], [0.1, 0.2, 0.3]) == pytest.approx(MU_123, rel=1e-12)


def test_secular_function_vanishes_at_roots():
    for mu in MU_123:
        # residual relative to the size of the largest term
        scale = sum(abs(s * b / (0.4 * (s - mu))) for s, b in zip([1, 2, 5], [0.1, 0.2, 0.3]))
        assert abs(secular_function(mu, [1, 2, 5], [0.1, 0.2, 0.3])) < 1e-12 * scale


def test_matrix_minors():
    sigma, b = np.array([1.0, 2.0, 5.0]), np.array([0.1, 0.2, 0.3])
    M = build_matrix_M(sigma, b)
    assert np.allclose(M, M.T)
    for k in range(1, 4):
        want = (1 - b[:k].sum()) / np.prod(sigma[:k])
        assert np.linalg.det(M[:k, :k]) == pytest.approx(want, rel=1e-12)


def test_forward_sigma():
    p = DesignParams(n=2, d=[1 / math.pi], b=[0.5])
    assert sigma_from_design(p) == pytest.approx((1.0,), rel=1e-15)
    p3 = DesignParams(n=3, d=[0.25], b=[0.5])
    # kappa d / (4 b) with kappa = 8
    assert sigma_from_design(p3) == pytest.approx((1.0,), rel=1e-15)


def test_inverse_closed_forms():
    p = inverse_design(LimitSpectrum([1.0], [2.0]))
    assert p.b == pytest.approx((0.5,), abs=1e-12)
    assert p.d == pytest.approx((1 / math.pi,), abs=1e-12)
    p3 = inverse_design(LimitSpectrum([1.0], [2.0]), n=3)
    assert p3.d == pytest.approx((0.25,), rel=1e-14)
    p2 = inverse_design(LimitSpectrum([1.0, 4.0], solve_mu([1.0, 4.0], [0.25, 0.25])))
    assert p2.b == pytest.approx((0.25, 0.25), abs=1e-12)


def test_not_interlaced_rejected():
    with pytest.raises(NotInG):
        LimitSpectrum([1.0, 2.0], [3.0, 4.0])
    with pytest.raises(NotInG):
        LimitSpectrum([2.0], [1.0])


def test_targets_ordering():
    with pytest.raises(OrderingViolation) as err:
        GapTargets([(1, 2), (1.5, 3)], 8).to_spectrum()
    assert err.value.inequality == "beta_1 < alpha_2"
    with pytest.raises(OrderingViolation):
        GapTargets([(1, 2)], 2.0).to_spectrum()


def test_equal_sigma_rejected():
    with pytest.raises(NonMonotoneSigma):
        forward(DesignParams(n=2, d=[0.2, 0.2], b=[0.1, 0.1]))


def test_kappa_required_above_three():
    with pytest.raises(ValueError):
        DesignParams(n=4, d=[0.1], b=[0.2])
    assert DesignParams(n=4, d=[0.1], b=[0.2], kappa=3.0).kappa == 3.0


def _bisect(f, lo, hi):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(lo) < 0) == (f(mid) < 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_radius_law_round_trip():
    assert epsilon_from_radius(hole_radius(1.0, 0.5, 2), 1.0, 2) == pytest.approx(0.5, rel=1e-13)
    # -ln e - 1/e^2 = ln 0.01 on the increasing branch e < sqrt(2)
    want = _bisect(lambda e: -math.log(e) - 1 / e**2 - math.log(0.01), 0.1, math.sqrt(2))
    assert want == pytest.approx(0.42822414729170544, rel=1e-14)
    assert epsilon_from_radius(0.01, 1.0, 2) == pytest.approx(want, rel=1e-12)
    # power laws: r = d eps**2 for n = 3, r = d eps for n = 4
    assert epsilon_from_radius(0.2 * 0.5**2, 0.2, 3) == pytest.approx(0.5, rel=1e-14)
    assert epsilon_from_radius(0.1, 0.2, 4) == pytest.approx(0.5, rel=1e-14)


def test_radius_law_branch_limit():
    e_max = max_epsilon(1 / math.pi, 2)
    r_max = hole_radius(1 / math.pi, e_max, 2)
    with pytest.raises(NoSolution):
        epsilon_from_radius(1.01 * r_max, 1 / math.pi, 2)
    assert epsilon_from_radius(0.05, 1 / math.pi, 2) == pytest.approx(1.0289720461526257, rel=1e-12)


def test_maxwell_map():
    spec = LimitSpectrum([1.0, 4.0], [2.25, 9.0])
    assert maxwell_gap_map(spec) == [(1.0, 1.5), (2.0, 3.0), (-1.5, -1.0), (-3.0, -2.0)]


def test_serialization_round_trip():
    p = DesignParams(n=3, d=[0.1, 0.2], b=[0.3, 0.1])
    assert DesignParams.from_dict(p.to_dict()) == p
    s = LimitSpectrum([1.0], [2.0])
    assert LimitSpectrum.from_dict(s.to_dict()) == s


@st.composite
def spectra(draw):
    m = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spectrum(np.random.default_rng(seed), m)


@settings(max_examples=200, deadline=None)
@given(spectra())
def test_round_trip_property(spec):
    assert round_trip_error(spec) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(spectra())
def test_interlacing_and_paths_agree(spec):
    p = inverse_design(spec)
    sigma = sigma_from_design(p)
    mu = solve_mu(sigma, p.b)
    LimitSpectrum(sigma, mu)  # raises unless interlaced
    assert mu_via_matrix(sigma, p.b) == pytest.approx(mu, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.3, 1.3))
def test_radius_law_inverse_property(d, eps):
    eps = min(eps, 0.99 * max_epsilon(d, 2))
    r = hole_radius(d, eps, 2)
    if r < 1e-250:
        return
    assert epsilon_from_radius(r, d, 2) == pytest.approx(eps, rel=1e-10)
