"""Grids, Fourier transforms, truncation, and spectral derivatives on the periodic box.

Conventions: the box is D = [-L/2, L/2) sampled at x_j = -L/2 + j*L/n, with
integer modes m in {-n/2, ..., n/2-1} (natural FFT order) and angular
frequencies xi_m = 2*pi*m/L. The forward transform is normalized so that
dft(e^{i xi_k x}) is one-hot with value 1 at mode k, i.e.

    a_hat(xi_m) = (1/n) * sum_j a(x_j) e^{-i xi_m x_j},

which includes the phase of the left grid endpoint. idft is its exact
inverse, a(x_j) = sum_m a_hat(xi_m) e^{+i xi_m x_j}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform discretization of a periodic box (1D; `dim` kept for forward compat)."""

    n: int
    length: float
    dim: int = 1

    def __post_init__(self):
        if self.dim != 1:
            raise ValueError("only dim=1 grids are implemented")
        if not _is_pow2(self.n):
            raise ValueError(f"grid size must be a power of two, got {self.n}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def x0(self) -> float:
        return -self.length / 2.0

    @property
    def points(self) -> np.ndarray:
        return self.x0 + np.arange(self.n) * self.spacing

    @property
    def modes(self) -> "ModeSet":
        return ModeSet.for_grid(self)


@dataclass(frozen=True)
class ModeSet:
    """Integer Fourier indices in natural FFT order and their angular frequencies."""

    indices: np.ndarray
    frequencies: np.ndarray

    @classmethod
    def for_grid(cls, grid: PeriodicGrid) -> "ModeSet":
        idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(np.int64)
        return cls(indices=idx, frequencies=2.0 * np.pi * idx / grid.length)

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class Field:
    """A real- or complex-valued function sampled on a PeriodicGrid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[-1] != self.grid.n:
            raise ValueError(
                f"field has {self.values.shape[-1]} samples, grid has {self.grid.n}")


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a Field, in natural FFT mode order."""

    grid: PeriodicGrid
    coeffs: np.ndarray
    tail_energy: float = 0.0


# -- array-level helpers (shared with the differentiable model paths) -----------

def phase_in(grid: PeriodicGrid) -> np.ndarray:
    """Twiddle factors e^{-i xi x0} turning numpy's fft into the endpoint-aware dft."""
    return np.exp(-1j * grid.modes.frequencies * grid.x0)


def dft_coeffs(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return np.fft.fft(values, axis=-1) / grid.n * phase_in(grid)


def idft_values(coeffs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return np.fft.ifft(coeffs / phase_in(grid), axis=-1) * grid.n


def derivative_values(values: np.ndarray, grid: PeriodicGrid, order: int) -> np.ndarray:
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    xi = grid.modes.frequencies
    mult = (1j * xi) ** order
    if order % 2 == 1:
        # zero the unpaired Nyquist index: antisymmetry fix for odd derivatives
        mult = mult.copy()
        mult[grid.modes.indices == -grid.n // 2] = 0.0
    out = idft_values(dft_coeffs(values, grid) * mult, grid)
    return out.real if np.isrealobj(values) else out


def truncation_order(n: int) -> np.ndarray:
    """Mode positions sorted by (|index|, index): the retention order for truncation."""
    idx = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    return np.lexsort((idx, np.abs(idx)))


def truncation_mask(n: int, m: int) -> np.ndarray:
    """Boolean keep-mask (natural order) retaining the m lowest-|index| modes."""
    if m <= 0:
        raise ValueError(f"truncation width must be positive, got {m}")
    if m > n:
        raise ValueError(f"truncation width {m} exceeds mode count {n}")
    mask = np.zeros(n, dtype=bool)
    mask[truncation_order(n)[:m]] = True
    return mask


# -- Field-level operations ------------------------------------------------------

def dft(f: Field) -> SpectralField:
    return SpectralField(f.grid, dft_coeffs(f.values, f.grid))


def idft(F: SpectralField) -> Field:
    return Field(F.grid, idft_values(F.coeffs, F.grid))


def truncate(F: SpectralField, m: int) -> SpectralField:
    """Keep the m lowest-|index| modes, zero the rest; report discarded energy."""
    mask = truncation_mask(F.grid.n, m)
    kept = np.where(mask, F.coeffs, 0.0)
    tail = float(np.sum(np.abs(F.coeffs[..., ~mask]) ** 2))
    return SpectralField(F.grid, kept, tail_energy=tail)


def spectral_derivative(f: Field, order: int) -> Field:
    return Field(f.grid, derivative_values(f.values, f.grid, order))
