"""Dirichlet sine eigenbasis on an interval.

States are stored as complex coefficients in the L2-orthonormal basis

    e_j(x) = sqrt(2/L) sin(j pi x / L),   alpha_j = (j pi / L)^2,

so every norm used by the estimates is a weighted sum over coefficients:
||u||^2 = sum |c_j|^2, ||u||_1^2 = sum alpha_j |c_j|^2 and
||u||_2^2 = sum alpha_j^2 |c_j|^2. The physical grid is the DST-I node set
x_m = m L / (n_phys + 1), m = 1..n_phys, on which the cubic nonlinearity and
the quartic part of the energy are evaluated. With n_phys >= 2 n_modes the
trapezoid rule integrates |u|^4 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy.fft import dst
from scipy.optimize import brentq

from .errors import ModeIndexError, ShapeError

Components = Literal["complex", "real"]


@dataclass(frozen=True)
class Grid:
    """Truncated Dirichlet basis on [0, L].

    Args:
        length: Interval length L
        n_modes: Number of retained sine modes
        n_phys: Physical quadrature points (defaults to 4 * n_modes)
    """

    length: float = math.pi
    n_modes: int = 32
    n_phys: int = 0

    def __post_init__(self) -> None:
        if not self.length > 0 or not math.isfinite(self.length):
            raise ValueError(f"length must be positive, got {self.length}")
        if self.n_modes < 4:
            raise ValueError(f"n_modes must be >= 4, got {self.n_modes}")
        if self.n_phys == 0:
            object.__setattr__(self, "n_phys", 4 * self.n_modes)
        if self.n_phys < 2 * self.n_modes:
            raise ValueError(
                f"n_phys must be >= 2 * n_modes for dealiasing, got {self.n_phys} < {2 * self.n_modes}"
            )

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """alpha_j for j = 1..n_modes, strictly increasing."""
        return (self.mode_numbers * math.pi / self.length) ** 2

    @cached_property
    def spacing(self) -> float:
        return self.length / (self.n_phys + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.spacing * np.arange(1, self.n_phys + 1)


@dataclass(frozen=True)
class EnergyParams:
    """Weights of H(u) = alpha ||u||_1^2 + (beta/4) int |u|^4."""

    alpha: float = 0.25
    beta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and positive, got {value}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A state u in H as sine-basis coefficients (immutable)."""

    coeffs: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if arr.ndim != 1 or arr.shape[0] != self.grid.n_modes:
            raise ShapeError(
                f"expected {self.grid.n_modes} coefficients, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # ---------- constructors ----------

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralField:
        return cls(np.zeros(grid.n_modes, dtype=np.complex128), grid)

    @classmethod
    def basis(cls, grid: Grid, j: int, amplitude: complex = 1.0) -> SpectralField:
        """amplitude * e_j."""
        _check_mode(j, grid)
        coeffs = np.zeros(grid.n_modes, dtype=np.complex128)
        coeffs[j - 1] = amplitude
        return cls(coeffs, grid)

    def with_coeffs(self, coeffs: np.ndarray) -> SpectralField:
        return SpectralField(coeffs, self.grid)

    # ---------- norms (Parseval) ----------

    def norm_l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def norm_h1(self) -> float:
        return float(np.sqrt(np.sum(self.grid.eigenvalues * np.abs(self.coeffs) ** 2)))

    def norm_h2(self) -> float:
        return float(np.sqrt(np.sum(self.grid.eigenvalues**2 * np.abs(self.coeffs) ** 2)))

    # ---------- arithmetic ----------

    def _check_same_grid(self, other: SpectralField) -> None:
        if other.grid != self.grid:
            raise ShapeError("fields live on different grids")

    def __add__(self, other: SpectralField) -> SpectralField:
        self._check_same_grid(other)
        return SpectralField(self.coeffs + other.coeffs, self.grid)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._check_same_grid(other)
        return SpectralField(self.coeffs - other.coeffs, self.grid)

    def __mul__(self, scalar: complex) -> SpectralField:
        return SpectralField(self.coeffs * scalar, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(-self.coeffs, self.grid)

    def equals(self, other: SpectralField) -> bool:
        """Bitwise equality of coefficients."""
        return self.grid == other.grid and np.array_equal(self.coeffs, other.coeffs)

    # ---------- H-coordinates ----------

    def low_coordinates(self, n: int, components: Components = "complex") -> np.ndarray:
        """Real coordinates of P_N u in the basis g_j = alpha_j^{-1/2} e_j.

        For ``complex`` components the real parts come first, then the
        imaginary parts (length 2N); for ``real`` only real parts (length N).
        """
        _check_cutoff(n, self.grid, allow_full=True)
        scaled = np.sqrt(self.grid.eigenvalues[:n]) * self.coeffs[:n]
        if components == "real":
            return scaled.real.copy()
        return np.concatenate([scaled.real, scaled.imag])

    def replace_low(self, coords: np.ndarray, n: int, components: Components = "complex") -> SpectralField:
        """Copy of u whose first ``n`` modes are rebuilt from H-coordinates.

        For ``real`` components the imaginary parts of the low modes are kept.
        """
        coeffs = np.array(self.coeffs)
        coeffs[:n] = low_coefficients(coords, n, self.grid, components, self.coeffs[:n])
        return SpectralField(coeffs, self.grid)


def low_coefficients(
    coords: np.ndarray,
    n: int,
    grid: Grid,
    components: Components = "complex",
    current: np.ndarray | None = None,
) -> np.ndarray:
    """Inverse of ``SpectralField.low_coordinates`` on the first ``n`` modes."""
    coords = np.asarray(coords, dtype=float)
    inv_sqrt = 1.0 / np.sqrt(grid.eigenvalues[:n])
    if components == "real":
        if coords.shape != (n,):
            raise ShapeError(f"expected {n} coordinates, got shape {coords.shape}")
        imag = np.zeros(n) if current is None else np.asarray(current).imag
        return coords * inv_sqrt + 1j * imag
    if coords.shape != (2 * n,):
        raise ShapeError(f"expected {2 * n} coordinates, got shape {coords.shape}")
    return (coords[:n] + 1j * coords[n:]) * inv_sqrt


def _check_mode(j: int, grid: Grid) -> None:
    if not 1 <= j <= grid.n_modes:
        raise ModeIndexError(f"mode index must be in [1, {grid.n_modes}], got {j}")


def _check_cutoff(n: int, grid: Grid, allow_full: bool = False) -> None:
    upper = grid.n_modes if allow_full else grid.n_modes - 1
    if not 1 <= n <= upper:
        raise ModeIndexError(f"cutoff must be in [1, {upper}], got {n}")


def eigenvalue(j: int, grid: Grid) -> float:
    """alpha_j = (j pi / L)^2."""
    _check_mode(j, grid)
    return float(grid.eigenvalues[j - 1])


# ---------- transforms ----------

def to_physical(u: SpectralField) -> np.ndarray:
    """Sample u at the n_phys interior nodes (zero-padded DST-I)."""
    grid = u.grid
    padded = np.zeros(grid.n_phys, dtype=np.complex128)
    padded[: grid.n_modes] = u.coeffs
    scale = math.sqrt(2.0 / grid.length) / 2.0
    return scale * (dst(padded.real, type=1) + 1j * dst(padded.imag, type=1))


def to_spectral(values: np.ndarray, grid: Grid) -> SpectralField:
    """Project nodal values back onto the retained modes."""
    values = np.asarray(values)
    if values.shape != (grid.n_phys,):
        raise ShapeError(f"expected {grid.n_phys} nodal values, got shape {values.shape}")
    scale = grid.spacing * math.sqrt(2.0 / grid.length) / 2.0
    full = scale * (dst(values.real, type=1) + 1j * dst(values.imag, type=1))
    return SpectralField(full[: grid.n_modes], grid)


def physical_norm_l2(u: SpectralField) -> float:
    """L2 norm by nodal quadrature (agrees with Parseval to round-off)."""
    values = to_physical(u)
    return float(np.sqrt(u.grid.spacing * np.sum(np.abs(values) ** 2)))


# ---------- projections ----------

def project_low(u: SpectralField, n: int) -> SpectralField:
    """P_N: keep modes j <= N."""
    _check_cutoff(n, u.grid)
    coeffs = np.array(u.coeffs)
    coeffs[n:] = 0.0
    return u.with_coeffs(coeffs)


def project_high(u: SpectralField, n: int) -> SpectralField:
    """Q_N: keep modes j > N."""
    _check_cutoff(n, u.grid)
    coeffs = np.array(u.coeffs)
    coeffs[:n] = 0.0
    return u.with_coeffs(coeffs)


def project_high_l2(u: SpectralField, n_prime: int) -> SpectralField:
    """Q'_{N'}: keep modes j >= N'."""
    _check_cutoff(n_prime, u.grid)
    coeffs = np.array(u.coeffs)
    coeffs[: n_prime - 1] = 0.0
    return u.with_coeffs(coeffs)


# ---------- energy ----------

def quartic_integral(u: SpectralField) -> float:
    """int_D |u|^4 dx on the padded grid."""
    values = to_physical(u)
    return float(u.grid.spacing * np.sum(np.abs(values) ** 4))


def energy(u: SpectralField, params: EnergyParams) -> float:
    """H(u) = alpha ||u||_1^2 + (beta/4) int |u|^4."""
    return params.alpha * u.norm_h1() ** 2 + 0.25 * params.beta * quartic_integral(u)


# ---------- state builders ----------

def smooth_random_field(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    rate: float = 0.5,
) -> SpectralField:
    """Complex Gaussian coefficients damped by exp(-rate * j)."""
    j = grid.mode_numbers
    noise = rng.standard_normal(grid.n_modes) + 1j * rng.standard_normal(grid.n_modes)
    return SpectralField(amplitude * np.exp(-rate * j) * noise, grid)


def power_law_random_field(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    exponent: float = 1.5,
) -> SpectralField:
    """Coefficients amplitude * j^{-exponent} with uniform random phases."""
    phases = np.exp(2j * np.pi * rng.random(grid.n_modes))
    return SpectralField(amplitude * grid.mode_numbers ** (-exponent) * phases, grid)


def scale_to_energy(u: SpectralField, target: float, params: EnergyParams) -> SpectralField:
    """s * u with H(s u) = target (H is increasing in s >= 0)."""
    if u.norm_h1() == 0:
        raise ValueError("cannot rescale the zero state")
    if target == 0:
        return SpectralField.zeros(u.grid)
    if target < 0:
        raise ValueError(f"target energy must be non-negative, got {target}")
    hi = 1.0
    while energy(u * hi, params) < target:
        hi *= 2.0
    s = brentq(lambda s: energy(u * s, params) - target, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return u * s


__all__ = [
    "Grid",
    "EnergyParams",
    "SpectralField",
    "eigenvalue",
    "to_physical",
    "to_spectral",
    "physical_norm_l2",
    "project_low",
    "project_high",
    "project_high_l2",
    "low_coefficients",
    "quartic_integral",
    "energy",
    "smooth_random_field",
    "power_law_random_field",
    "scale_to_energy",
]
