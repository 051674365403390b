import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from momrec import convdual
from momrec.convdual import dual_coefficients, fourier_generalized_moments, generalized_poly_moments
from momrec.errors import NodeAtZero, OffCircleNode
from momrec.prony import (amplitudes_from_pole_weights, estimate_order, generating_series,
                          pole_weights, solve_fourier_shifts, solve_prony, solve_prony_confluent)
from momrec.signals import (ShiftSpec, fourier_coefficients, quad_moments, separated_points,
                            shift_model_moments)


def power_sums(amps, nodes, count):
    k = np.arange(count)
    return sum(a * x ** k for a, x in zip(amps, nodes))


def confluent_sums(amps, nodes, count):
    """``sum_j sum_l a_jl (k)_l x_j^(k-l)`` by direct summation."""
    out = np.zeros(count)
    for x, a in zip(nodes, amps):
        for k in range(count):
            falling = 1.0
            for l, v in enumerate(a):
                if l:
                    falling *= k - l + 1
                out[k] += v * falling * (x ** (k - l) if k >= l else 0.0)
    return out


def derivative_model_moments(shifts, amps, order, sigma=0.15):
    """Generalized moments of ``sum_jl a_jl f^(l)(x + x_j)`` from quadrature."""
    kernel = convdual.gaussian(sigma)
    spec = ShiftSpec(kernel, shifts, amps)
    m = quad_moments(spec, order, tol=1e-14)
    return generalized_poly_moments(m, dual_coefficients(kernel, order))


# solve_prony -------------------------------------------------------------

def test_single_node():
    sol = solve_prony([2, 2, 2, 2], 1)
    np.testing.assert_allclose(sol.nodes, [1.0])
    np.testing.assert_allclose(sol.amplitudes[0], [2.0])


def test_two_signed_nodes():
    sol = solve_prony([5, -1, 5, -1], 2)
    np.testing.assert_allclose(sol.nodes, [-1, 1], atol=1e-14)
    np.testing.assert_allclose([a[0] for a in sol.amplitudes], [3, 2], atol=1e-14)


def test_six_moments():
    sol = solve_prony(power_sums([1, 2], [0.5, 0.3], 6), 2)
    np.testing.assert_allclose(sol.nodes, [0.3, 0.5], atol=1e-10)
    np.testing.assert_allclose([a[0] for a in sol.amplitudes], [2, 1], atol=1e-10)
    assert sol.residual < 1e-14


def test_coincident_nodes_reduce_order():
    sol = solve_prony(power_sums([1.0], [0.4], 8) + 1e-17, 1)
    assert sol.s == 1


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_round_trip_generating_series(seed, s):
    rng = np.random.default_rng(seed)
    nodes = separated_points(rng, s, 0.1, 0.9, 0.1)
    amps = rng.uniform(0.5, 3, s) * rng.choice([-1, 1], s)
    M = power_sums(amps, nodes, 2 * s + 4)
    sol = solve_prony(M, s)
    series = generating_series(sol, M.size)
    assert np.max(np.abs(series - M)) <= 1e-9 * np.max(np.abs(M))


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 6))
def test_solution_independent_of_extra_moments(seed, s, extra):
    rng = np.random.default_rng(seed)
    nodes = separated_points(rng, s, 0.1, 0.9, 0.1)
    amps = rng.uniform(0.5, 3, s)
    M = power_sums(amps, nodes, 2 * s + 6)
    a = solve_prony(M[: 2 * s], s)
    b = solve_prony(M[: 2 * s + extra], s)
    np.testing.assert_allclose(a.nodes, b.nodes, atol=1e-7)
    np.testing.assert_allclose(np.concatenate(a.amplitudes), np.concatenate(b.amplitudes), atol=1e-6)


# estimate_order ----------------------------------------------------------

def test_order_rank_one():
    assert estimate_order([2] * 6, 3) == 1


def test_order_rank_two():
    assert estimate_order([5, -1, 5, -1, 5, -1], 3) == 2


def test_order_three_nodes():
    assert estimate_order(power_sums([1, -2, 0.5], [0.2, 0.5, 0.8], 10), 5) == 3


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_order_matches_node_count(seed, s):
    rng = np.random.default_rng(seed)
    nodes = separated_points(rng, s, 0.1, 0.9, 0.1)
    amps = rng.uniform(1, 3, s) * rng.choice([-1, 1], s)
    assert estimate_order(power_sums(amps, nodes, 14), 7) == s


# confluent model ---------------------------------------------------------

def test_confluent_r0_matches_plain():
    M = power_sums([1, 2], [0.5, 0.3], 6)
    a, b = solve_prony(M, 2), solve_prony_confluent(M, 2, 0)
    np.testing.assert_allclose(a.nodes, b.nodes)
    np.testing.assert_allclose(np.concatenate(a.amplitudes), np.concatenate(b.amplitudes))


def test_confluent_single_node_from_quadrature():
    M = derivative_model_moments((0.5,), ((1.0, 2.0),), 8)
    sol = solve_prony_confluent(M, 1, 1)
    np.testing.assert_allclose(sol.nodes, [0.5], atol=1e-8)
    np.testing.assert_allclose(sol.amplitudes[0], [1.0, 2.0], atol=1e-8)


def test_confluent_two_nodes_from_quadrature():
    M = derivative_model_moments((0.25, 0.7), ((1.0, 0.5), (-2.0, 1.5)), 12)
    sol = solve_prony_confluent(M, 2, 1)
    np.testing.assert_allclose(sol.nodes, [0.25, 0.7], atol=1e-6)


def test_confluent_node_at_zero():
    M = confluent_sums([(1.0, 1.0)], [0.0], 8)
    with pytest.raises(NodeAtZero):
        solve_prony_confluent(M, 1, 1)


def test_pole_weights_invert():
    amps = np.array([1.0, -2.0, 0.5])
    b = pole_weights(0.6, amps)
    np.testing.assert_allclose(amplitudes_from_pole_weights(0.6, b), amps, atol=1e-13)


def test_pole_weights_single_derivative():
    # a_0 x^n + a_1 n x^(n-1) = (a_0 - a_1/x)/(1-xz) + (a_1/x)/(1-xz)^2
    np.testing.assert_allclose(pole_weights(0.5, [1.0, 2.0]), [1.0 - 4.0, 4.0])


# generating_series -------------------------------------------------------

def test_series_geometric():
    sol = solve_prony([1, 1, 1, 1], 1)
    np.testing.assert_allclose(generating_series(sol, 6), np.ones(6))


def test_series_two_nodes():
    sol = solve_prony([5, -1, 5, -1], 2)
    np.testing.assert_allclose(generating_series(sol, 7), [5, -1, 5, -1, 5, -1, 5], atol=1e-13)


def test_series_confluent_matches_moments():
    M = derivative_model_moments((0.5,), ((1.0, 2.0),), 8)
    sol = solve_prony_confluent(M, 1, 1)
    np.testing.assert_allclose(generating_series(sol, 9), M.values, atol=1e-8)
    np.testing.assert_allclose(M.values, confluent_sums([(1.0, 2.0)], [0.5], 9), atol=1e-9)


# Fourier shifts ----------------------------------------------------------

def test_fourier_single_shift_at_pi():
    model = solve_fourier_shifts((-1.0) ** np.arange(4) + 0j, 1)
    np.testing.assert_allclose(model.shifts, [np.pi], atol=1e-14)
    np.testing.assert_allclose(model.solution.amplitudes[0], [1.0], atol=1e-14)


def test_fourier_two_shifts():
    k = np.arange(6)
    model = solve_fourier_shifts(2 + np.exp(-1j * k), 2)
    np.testing.assert_allclose(model.shifts, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose([a[0] for a in model.solution.amplitudes], [2, 1], atol=1e-12)


def test_fourier_gaussian_quadrature():
    kernel = convdual.gaussian(0.3)
    spec = ShiftSpec(kernel, (0.8, 3.9), ((1.0,), (2.5,)))
    M = fourier_generalized_moments(fourier_coefficients(spec, 8), kernel, 8)
    model = solve_fourier_shifts(M, 2)
    np.testing.assert_allclose(model.shifts, [0.8, 3.9], atol=1e-6)
    assert np.max(np.abs(np.abs(model.solution.nodes) - 1)) <= 1e-6


def test_fourier_off_circle():
    with pytest.raises(OffCircleNode):
        solve_fourier_shifts(0.5 ** np.arange(4) + 0j, 1)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_fourier_nodes_on_circle(seed, s):
    rng = np.random.default_rng(seed)
    shifts = separated_points(rng, s, 0.0, 2 * np.pi - 0.1, 0.1)
    amps = rng.uniform(0.5, 3, s)
    k = np.arange(2 * s + 4)
    M = sum(a * np.exp(-1j * k * x) for a, x in zip(amps, shifts))
    model = solve_fourier_shifts(M, s)
    assert np.max(np.abs(np.abs(model.solution.nodes) - 1)) <= 1e-6
    np.testing.assert_allclose(model.shifts, shifts, atol=1e-7)


def test_shift_model_exact_moments_feed_prony():
    kernel = convdual.gaussian(0.2)
    spec = ShiftSpec(kernel, (0.2, 0.6), ((1.5,), (-0.5,)))
    M = generalized_poly_moments(shift_model_moments(spec, 5), dual_coefficients(kernel, 5))
    sol = solve_prony(M, 2)
    np.testing.assert_allclose(sol.nodes, [0.2, 0.6], atol=1e-9)
