#!/usr/bin/env python3
"""Tests for the sine basis, transforms, projections and energy."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kicked_cgl.errors import ModeIndexError, ShapeError
from kicked_cgl.spectral import (
    EnergyParams,
    Grid,
    SpectralField,
    eigenvalue,
    energy,
    low_coefficients,
    physical_norm_l2,
    power_law_random_field,
    project_high,
    project_high_l2,
    project_low,
    quartic_integral,
    scale_to_energy,
    smooth_random_field,
    to_physical,
    to_spectral,
)


@pytest.fixture
def grid():
    return Grid(n_modes=16)


@pytest.fixture
def field(grid):
    return smooth_random_field(grid, np.random.default_rng(3))


coefficient = st.complex_numbers(max_magnitude=10.0, allow_nan=False, allow_infinity=False)


class TestGrid:
    """Test grid construction and eigenvalues."""

    def test_default_physical_points(self):
        """n_phys defaults to four times the mode count."""
        assert Grid(n_modes=8).n_phys == 32

    def test_too_few_modes(self):
        with pytest.raises(ValueError, match="n_modes"):
            Grid(n_modes=3)

    def test_n_phys_dealiasing_floor(self):
        with pytest.raises(ValueError, match="dealiasing"):
            Grid(n_modes=16, n_phys=20)

    def test_bad_length(self):
        with pytest.raises(ValueError, match="length"):
            Grid(length=0.0)

    def test_eigenvalues_on_pi_interval(self, grid):
        """alpha_j = j^2 when L = pi."""
        assert eigenvalue(1, grid) == pytest.approx(1.0)
        assert eigenvalue(4, grid) == pytest.approx(16.0)
        assert np.all(np.diff(grid.eigenvalues) > 0)

    def test_eigenvalue_scales_with_length(self):
        grid = Grid(length=2 * math.pi, n_modes=8)
        assert eigenvalue(2, grid) == pytest.approx(1.0)

    def test_mode_index_out_of_range(self, grid):
        with pytest.raises(ModeIndexError):
            eigenvalue(0, grid)
        with pytest.raises(ModeIndexError):
            eigenvalue(17, grid)


class TestSpectralField:
    """Test field construction, norms and arithmetic."""

    def test_wrong_length_rejected(self, grid):
        with pytest.raises(ShapeError):
            SpectralField(np.zeros(5), grid)

    def test_coefficients_are_read_only(self, field):
        with pytest.raises(ValueError):
            field.coeffs[0] = 1.0

    def test_basis_norms(self, grid):
        """||e_j||_1^2 = alpha_j and ||e_j||_2^2 = alpha_j^2."""
        e3 = SpectralField.basis(grid, 3)
        assert e3.norm_l2() == pytest.approx(1.0)
        assert e3.norm_h1() == pytest.approx(3.0)
        assert e3.norm_h2() == pytest.approx(9.0)

    def test_arithmetic(self, field):
        zero = field - field
        assert zero.norm_l2() == 0.0
        assert (2 * field).norm_h1() == pytest.approx(2 * field.norm_h1())
        assert (field + (-field)).equals(SpectralField.zeros(field.grid))

    def test_mixed_grids_rejected(self, field):
        other = SpectralField.zeros(Grid(n_modes=8))
        with pytest.raises(ShapeError):
            field + other

    def test_equals_is_bitwise(self, field):
        assert field.equals(field.with_coeffs(np.array(field.coeffs)))
        assert not field.equals(field * (1 + 1e-15))

    @given(st.lists(coefficient, min_size=8, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_norm_ordering(self, values):
        """With alpha_1 = 1 the norms are ordered ||u|| <= ||u||_1 <= ||u||_2."""
        u = SpectralField(np.array(values), Grid(n_modes=8))
        assert u.norm_l2() <= u.norm_h1() + 1e-9
        assert u.norm_h1() <= u.norm_h2() + 1e-9


class TestTransforms:
    """Test the DST-I transform pair."""

    def test_round_trip(self, field):
        back = to_spectral(to_physical(field), field.grid)
        np.testing.assert_allclose(back.coeffs, field.coeffs, atol=1e-12)

    def test_basis_function_values(self, grid):
        """to_physical(e_1) samples sqrt(2/L) sin(x) at the nodes."""
        values = to_physical(SpectralField.basis(grid, 1))
        expected = math.sqrt(2 / math.pi) * np.sin(grid.nodes)
        np.testing.assert_allclose(values.real, expected, atol=1e-12)
        np.testing.assert_allclose(values.imag, 0.0, atol=1e-12)

    def test_parseval(self, field):
        assert physical_norm_l2(field) == pytest.approx(field.norm_l2(), rel=1e-12)

    def test_wrong_nodal_length(self, grid):
        with pytest.raises(ShapeError):
            to_spectral(np.zeros(grid.n_phys + 1), grid)


class TestProjections:
    """Test P_N, Q_N and Q'_N'."""

    def test_low_plus_high_is_identity(self, field):
        for n in (1, 5, 15):
            total = project_low(field, n) + project_high(field, n)
            assert total.equals(field)

    def test_projections_are_orthogonal(self, field):
        low = project_low(field, 6)
        high = project_high(field, 6)
        assert float(np.vdot(low.coeffs, high.coeffs).real) == 0.0

    def test_high_l2_keeps_cutoff_mode(self, field):
        """Q'_{N'} keeps mode N' itself, Q_N drops mode N."""
        assert project_high_l2(field, 4).coeffs[3] == field.coeffs[3]
        assert project_high(field, 4).coeffs[3] == 0

    def test_cutoff_range(self, field):
        with pytest.raises(ModeIndexError):
            project_low(field, 0)
        with pytest.raises(ModeIndexError):
            project_high(field, 16)


class TestCoordinates:
    """Test H-coordinates of the low modes."""

    def test_complex_round_trip(self, field):
        coords = field.low_coordinates(5)
        assert coords.shape == (10,)
        rebuilt = field.replace_low(coords, 5)
        np.testing.assert_allclose(rebuilt.coeffs, field.coeffs, atol=1e-12)

    def test_real_components_keep_imaginary_parts(self, field):
        coords = field.low_coordinates(4, components="real")
        assert coords.shape == (4,)
        rebuilt = field.replace_low(np.zeros(4), 4, components="real")
        np.testing.assert_allclose(rebuilt.coeffs[:4].imag, field.coeffs[:4].imag)
        np.testing.assert_allclose(rebuilt.coeffs[:4].real, 0.0)

    def test_coordinates_scale_with_sqrt_alpha(self, grid):
        u = SpectralField.basis(grid, 3, amplitude=2.0)
        coords = u.low_coordinates(3)
        assert coords[2] == pytest.approx(6.0)

    def test_coordinate_shape_checked(self, grid):
        with pytest.raises(ShapeError):
            low_coefficients(np.zeros(3), 2, grid)


class TestEnergy:
    """Test H(u) = alpha ||u||_1^2 + (beta/4) int |u|^4."""

    def test_zero_state(self, grid):
        assert energy(SpectralField.zeros(grid), EnergyParams()) == 0.0

    def test_first_mode_closed_form(self, grid):
        """int sin^4 over [0, pi] is 3 pi / 8."""
        a = 0.7
        u = SpectralField.basis(grid, 1, amplitude=a)
        params = EnergyParams(alpha=0.25, beta=2.0)
        expected = 0.25 * a**2 + 0.25 * 2.0 * a**4 * (2 / math.pi) ** 2 * 3 * math.pi / 8
        assert energy(u, params) == pytest.approx(expected, rel=1e-12)

    def test_quartic_invariant_under_phase(self, field):
        assert quartic_integral(field * 1j) == pytest.approx(quartic_integral(field), rel=1e-12)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            EnergyParams(alpha=0.0)
        with pytest.raises(ValueError):
            EnergyParams(beta=float("nan"))

    @pytest.mark.parametrize("target", [0.1, 5.0, 250.0])
    def test_scale_to_energy(self, field, target):
        params = EnergyParams(alpha=0.25, beta=1.0)
        scaled = scale_to_energy(field, target, params)
        assert energy(scaled, params) == pytest.approx(target, rel=1e-9)

    def test_scale_to_zero_energy(self, field):
        assert scale_to_energy(field, 0.0, EnergyParams()).norm_l2() == 0.0

    def test_scale_zero_state_rejected(self, grid):
        with pytest.raises(ValueError, match="zero state"):
            scale_to_energy(SpectralField.zeros(grid), 1.0, EnergyParams())


class TestRandomFields:
    """Test random state builders."""

    def test_smooth_field_reproducible(self, grid):
        a = smooth_random_field(grid, np.random.default_rng(1))
        b = smooth_random_field(grid, np.random.default_rng(1))
        assert a.equals(b)

    def test_power_law_moduli(self, grid):
        u = power_law_random_field(grid, np.random.default_rng(2), amplitude=0.5, exponent=1.5)
        np.testing.assert_allclose(np.abs(u.coeffs), 0.5 * grid.mode_numbers**-1.5)
