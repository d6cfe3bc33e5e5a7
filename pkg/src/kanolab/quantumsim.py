"""Ground-truth quantum dynamics: initial-state protocols, Strang-split propagation
of the double-well and cubic-nonlinear Hamiltonians, and PMF measurement.

The propagator is the standard split-step scheme on the periodic box: half a
potential phase, half a kinetic phase in Fourier space, the full nonlinear
phase (NLSE only), then the kinetic and potential halves again. Each factor
is a unit-modulus multiplier in its diagonal basis, so the step preserves the
discrete L2 norm to rounding; the norm is renormalized after every macro step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import envelope
from .errors import NumericsError, UserError
from .spectral import Field, PeriodicGrid, dft_coeffs

HAMILTONIANS = ("DW", "NLSE")
STATE_FAMILIES = ("harmonic_series", "gaussian_packet", "gaussian_hermite")


def potential_values(grid: PeriodicGrid) -> np.ndarray:
    """Quartic double-well w(x) = x^4 - (x - 1/32)^2 + 0.295 tabulated on the grid."""
    x = grid.points
    return x**4 - (x - 1.0 / 32.0) ** 2 + 0.295


@dataclass(frozen=True)
class Potential:
    grid: PeriodicGrid
    values: np.ndarray

    @classmethod
    def double_well(cls, grid: PeriodicGrid) -> "Potential":
        return cls(grid, potential_values(grid))


def l2_norm(values: np.ndarray, grid: PeriodicGrid) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.spacing))


def _state_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(index)]))


def initial_state(family: str, grid: PeriodicGrid, seed: int, index: int = 0,
                  params: dict | None = None) -> Field:
    """Draw a real profile, envelope it, and normalize to unit discrete L2 norm.

    `params` can pin specific draw parameters (used by tests); unspecified
    ones are drawn from the family's ranges.
    """
    rng = _state_rng(seed, index)
    x = grid.points
    params = params or {}
    if family == "harmonic_series":
        u = (x - grid.x0) / grid.length
        f = np.zeros_like(x)
        for m in range(6):
            c, s = rng.normal(), rng.normal()
            f += 0.5 * c * np.cos(2 * np.pi * m * u) + 0.5 * s * np.sin(2 * np.pi * m * u)
    elif family == "gaussian_packet":
        c = params.get("center", rng.uniform(-0.4 * np.pi, 0.4 * np.pi))
        sig = params.get("sigma", rng.uniform(0.1, 0.3))
        f = np.exp(-((x - c) ** 2) / (2 * sig**2))
    elif family == "gaussian_hermite":
        n = int(params.get("degree", rng.integers(0, 3)))
        c = params.get("center", rng.uniform(-0.4 * np.pi, 0.4 * np.pi))
        sig = params.get("sigma", rng.uniform(0.1, 0.3))
        t = (x - c) / sig
        from .datagen import _hermite
        f = _hermite(n, t) * np.exp(-(t**2) / 2)
    else:
        raise UserError(f"unknown initial-state family {family!r}")
    f = f * envelope(x, half_width=grid.length / 2)
    norm = l2_norm(f, grid)
    if norm < 1e-12:
        raise UserError(f"family {family!r} drew a zero-norm state; use another seed")
    return Field(grid, (f / norm).astype(np.complex128))


def strang_step(psi: np.ndarray, dt: float, potential: np.ndarray,
                grid: PeriodicGrid, nonlinear: bool) -> np.ndarray:
    """One micro-step: V/2, K/2, N (iff nonlinear), K/2, V/2."""
    xi = grid.modes.frequencies
    half_v = np.exp(-0.5j * dt * potential)
    half_k = np.exp(-0.25j * dt * xi**2)
    psi = half_v * psi
    psi = np.fft.ifft(half_k * np.fft.fft(psi))
    if nonlinear:
        psi = np.exp(-1j * dt * np.abs(psi) ** 2) * psi
    psi = np.fft.ifft(half_k * np.fft.fft(psi))
    return half_v * psi


@dataclass
class TrajectoryRecord:
    """One trajectory: initial protocol, per-snapshot wave function and PMFs."""

    protocol: str
    seed: int
    index: int
    hamiltonian: str
    grid: PeriodicGrid
    dt: float
    psis: np.ndarray      # (snapshots+1, n) complex
    pos_pmf: np.ndarray   # (snapshots+1, n)
    mom_pmf: np.ndarray   # (snapshots+1, n)

    @property
    def snapshots(self) -> int:
        return self.psis.shape[0] - 1


def measure_pmfs(psi: np.ndarray, grid: PeriodicGrid):
    """Position and momentum PMFs, grid-weighted then renormalized to sum exactly 1."""
    px = np.abs(psi) ** 2 * grid.spacing
    px = px / px.sum()
    coeffs = dft_coeffs(psi, grid)
    pxi = np.abs(coeffs) ** 2
    pxi = pxi / pxi.sum()
    return px, pxi


def propagate(psi0: Field, hamiltonian: str, dt: float = 1e-6,
              steps_per_snapshot: int = 100, snapshots: int = 100,
              protocol: str = "", seed: int = 0, index: int = 0) -> TrajectoryRecord:
    """Propagate through `snapshots` macro steps of `steps_per_snapshot` micro-steps,
    renormalizing and recording (psi, p_x, p_xi) at every macro step."""
    if hamiltonian not in HAMILTONIANS:
        raise UserError(f"hamiltonian must be one of {HAMILTONIANS}, got {hamiltonian!r}")
    grid = psi0.grid
    nonlinear = hamiltonian == "NLSE"
    w = potential_values(grid)
    psi = psi0.values.astype(np.complex128)
    n_rec = snapshots + 1
    psis = np.empty((n_rec, grid.n), dtype=np.complex128)
    pos = np.empty((n_rec, grid.n))
    mom = np.empty((n_rec, grid.n))
    psis[0] = psi
    pos[0], mom[0] = measure_pmfs(psi, grid)
    for t in range(1, n_rec):
        for _ in range(steps_per_snapshot):
            psi = strang_step(psi, dt, w, grid, nonlinear)
        if not np.all(np.isfinite(psi.view(np.float64))):
            raise NumericsError(f"propagation produced non-finite values at macro step {t}")
        psi = psi / l2_norm(psi, grid)
        psis[t] = psi
        pos[t], mom[t] = measure_pmfs(psi, grid)
    return TrajectoryRecord(protocol, seed, index, hamiltonian, grid, dt, psis, pos, mom)


def make_trajectories(count: int, hamiltonian: str, grid: PeriodicGrid, seed: int,
                      dt: float = 1e-6, steps_per_snapshot: int = 100,
                      snapshots: int = 100) -> list:
    """Draw initial protocols round-robin over the three families and propagate each."""
    records = []
    for i in range(count):
        family = STATE_FAMILIES[int(_state_rng(seed, i).integers(0, 3))]
        psi0 = initial_state(family, grid, seed, index=i)
        records.append(propagate(psi0, hamiltonian, dt=dt,
                                 steps_per_snapshot=steps_per_snapshot,
                                 snapshots=snapshots, protocol=family,
                                 seed=seed, index=i))
    return records
