import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from momrec import convdual
from momrec.convdual import (DualCoefficients, dual_coefficients, fourier_generalized_moments,
                             generalized_poly_moments, inverse_taylor)
from momrec.errors import LengthMismatch, VanishingFhat, ZeroAtOrigin
from momrec.quadrature import integrate
from momrec.signals import ShiftSpec, fourier_coefficients, quad_moments, shift_model_moments


def gaussian_taylor(order, sign=-1):
    c = np.zeros(order + 1)
    for m in range(order // 2 + 1):
        c[2 * m] = (sign * 0.5) ** m / math.factorial(m)
    return c


def dual_image(kernel, C, n, x):
    """``int f(t + x) psi_n(t) dt`` by quadrature."""
    psi = np.real(C.dual_polynomial(n))
    lo, hi = kernel.support
    return integrate(lambda t: kernel.density(t + x) * np.polyval(psi[::-1], t),
                     lo - x, hi - x, tol=1e-13)


# inverse_taylor ----------------------------------------------------------

def test_inverse_of_one():
    np.testing.assert_array_equal(inverse_taylor([1, 0, 0, 0], 3), [1, 0, 0, 0])


def test_inverse_geometric():
    np.testing.assert_allclose(inverse_taylor([1, 1, 0, 0], 3), [1, -1, 1, -1])


def test_inverse_gaussian_series():
    np.testing.assert_allclose(inverse_taylor(gaussian_taylor(8), 8), gaussian_taylor(8, +1),
                               atol=1e-15)
    np.testing.assert_allclose(gaussian_taylor(4, +1), [1, 0, 0.5, 0, 0.125])


def test_inverse_zero_at_origin():
    with pytest.raises(ZeroAtOrigin):
        inverse_taylor([0.0, 1.0], 1)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=10), st.floats(0.5, 3))
def test_inverse_is_involution(tail, head):
    f = np.array([head, *tail])
    order = f.size - 1
    back = inverse_taylor(inverse_taylor(f, order), order)
    assert np.max(np.abs(back - f)) <= 1e-9 * max(1.0, np.max(np.abs(f))) * 10 ** order


# dual_coefficients -------------------------------------------------------

def test_dirac_table_is_alternating_diagonal():
    C = dual_coefficients(convdual.dirac(), 6)
    np.testing.assert_allclose(C.table, np.diag((-1.0) ** np.arange(7)), atol=0)


def test_diagonal_scales_with_fhat0():
    spec = convdual.custom([2.0, 0.3, 0.1, 0.0], convention_scale=1.5)
    C = dual_coefficients(spec, 3)
    for n in range(4):
        assert C[n, n] == pytest.approx(1.5 * (-1) ** n / 2.0)


def test_gaussian_c20():
    C = dual_coefficients(convdual.gaussian(1.0, convention_scale=2.0), 2)
    assert C[2, 0] == pytest.approx(-2.0)


def test_triangular():
    C = dual_coefficients(convdual.gaussian(0.7), 6)
    assert np.all(C.table[np.triu_indices(7, 1)] == 0)
    assert C[1, 3] == 0.0
    assert DualCoefficients(np.ones((3, 3)))[0, 2] == 0.0


@given(st.floats(0.1, 2.0), st.sampled_from(["gaussian", "box"]))
def test_even_kernels_give_real_checkerboard(width, name):
    kernel = convdual.BUILTINS[name](width)
    C = dual_coefficients(kernel, 8)
    assert not np.iscomplexobj(C.table)
    n, k = np.indices(C.table.shape)
    assert np.all(C.table[(n + k) % 2 == 1] == 0)


@pytest.mark.parametrize("kernel", [convdual.gaussian(0.3), convdual.box(0.4)],
                         ids=["gaussian", "box"])
def test_dual_defining_property(kernel):
    C = dual_coefficients(kernel, 6)
    for x in (-0.7, -0.2, 0.0, 0.35, 0.9):
        for n in range(7):
            assert dual_image(kernel, C, n, x) == pytest.approx(x ** n, abs=1e-9)


# generalized_poly_moments ------------------------------------------------

def test_identity_table():
    m = np.array([1.0, 0.3, -2.0])
    np.testing.assert_array_equal(generalized_poly_moments(m, DualCoefficients(np.eye(3))).values, m)


def test_alternating_diagonal():
    C = DualCoefficients(np.diag([1.0, -1.0, 1.0]))
    np.testing.assert_array_equal(generalized_poly_moments([1, 1, 1], C).values, [1, -1, 1])


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        generalized_poly_moments([1.0, 2.0], DualCoefficients(np.eye(3)))


def test_shifted_gaussian_gives_powers():
    kernel = convdual.gaussian(0.2)
    x1 = 0.37
    spec = ShiftSpec(kernel, (x1,), ((1.0,),))
    m = quad_moments(spec, 8)
    M = generalized_poly_moments(m, dual_coefficients(kernel, 8))
    np.testing.assert_allclose(M.values, x1 ** np.arange(9), atol=1e-10)
    exact = shift_model_moments(spec, 8)
    np.testing.assert_allclose(generalized_poly_moments(exact, dual_coefficients(kernel, 8)).values,
                               x1 ** np.arange(9), atol=1e-12)


# fourier_generalized_moments ---------------------------------------------

def test_fourier_unit_shift_at_zero():
    mu = {k: 1.0 + 0j for k in range(5)}
    np.testing.assert_allclose(fourier_generalized_moments(mu, convdual.dirac(), 4).values, 1.0)


def test_fourier_node_at_pi():
    mu = {k: complex(np.exp(-1j * k * np.pi)) for k in range(6)}
    M = fourier_generalized_moments(mu, convdual.dirac(), 5).values
    np.testing.assert_allclose(M, (-1.0) ** np.arange(6), atol=1e-15)


def test_fourier_gaussian_two_shifts():
    kernel = convdual.gaussian(0.25)
    shifts, amps = (1.2, 4.0), (1.5, -0.7)
    spec = ShiftSpec(kernel, shifts, tuple((a,) for a in amps))
    mu = fourier_coefficients(spec, 6)
    M = fourier_generalized_moments(mu, kernel, 6).values
    k = np.arange(7)
    direct = sum(a * np.exp(-1j * k * x) for a, x in zip(amps, shifts))
    np.testing.assert_allclose(M, direct, atol=1e-10)


def test_fourier_vanishing_fhat():
    kernel = convdual.box(np.pi)
    mu = {k: 1.0 + 0j for k in range(3)}
    with pytest.raises(VanishingFhat) as info:
        fourier_generalized_moments(mu, kernel, 2)
    assert info.value.details["k"] == 1


def test_fourier_missing_coefficient():
    with pytest.raises(LengthMismatch):
        fourier_generalized_moments({0: 1.0}, convdual.dirac(), 2)


# kernels -----------------------------------------------------------------

@pytest.mark.parametrize("kernel", [convdual.gaussian(0.6), convdual.box(0.3)],
                         ids=["gaussian", "box"])
def test_kernel_moments_match_quadrature(kernel):
    lo, hi = kernel.support
    mu = integrate(lambda t: kernel.density(t)[:, None] * t[:, None] ** np.arange(7), lo, hi,
                   tol=1e-14, breakpoints=(0.0,))
    np.testing.assert_allclose(kernel.moments(6), mu, atol=1e-12)


def test_kernel_json_round_trip():
    for kernel in (convdual.gaussian(0.3), convdual.box(0.2), convdual.dirac(),
                   convdual.custom([1.0, 0.5, 0.25])):
        back = convdual.kernel_from_json(kernel.to_json())
        np.testing.assert_allclose(back.fhat_taylor(2), kernel.fhat_taylor(2))
