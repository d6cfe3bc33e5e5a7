"""Benchmark metrics and theory probes: loss and interpolation tests, state
fidelity, Fourier-tail decay fits, the shift-vs-Toeplitz density demo, and
symbolic dictionary comparison.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .datagen import apply_ground_truth, interpolation_dataset, sample_function
from .errors import UserError
from .kano import QkanoModel
from .spectral import Field, PeriodicGrid, dft_coeffs, idft_values
from .train import rel_l2_loss, _unroll


def _model_losses(model, inputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-pair relative l2 losses, evaluated without recording gradients."""
    pred = model.predict(inputs)
    diff = pred - targets
    return np.sqrt(np.sum(np.abs(diff) ** 2, axis=-1)) / np.linalg.norm(targets, axis=-1)


def loss_test(model, dataset_a, dataset_b):
    """Mean relative l2 loss per group (the generalization gap probe)."""
    mean_a = float(np.mean(_model_losses(model, dataset_a.inputs, dataset_a.targets)))
    mean_b = float(np.mean(_model_losses(model, dataset_b.inputs, dataset_b.targets)))
    return mean_a, mean_b


def interpolation_test(model, op: str, grid: PeriodicGrid, group_a_mean: float,
                       seed: int = 0, steps: int = 100, n_pairs: int = 64):
    """Loss-ratio curve along convex paths from Group A to Group B samples.

    Averages over `n_pairs` random endpoint pairs; each t's mean model loss is
    divided by the supplied Group-A mean loss.
    """
    if group_a_mean <= 0:
        raise UserError("group-A mean loss must be positive")
    from .datagen import GROUP_A, GROUP_B, sample_rng

    totals = np.zeros(steps)
    ts = None
    for k in range(n_pairs):
        rng = sample_rng(seed, k)
        fam_a = GROUP_A[int(rng.integers(0, 3))]
        fam_b = GROUP_B[int(rng.integers(0, 3))]
        fA = sample_function(fam_a, grid, seed=seed, index=2 * k)
        fB = sample_function(fam_b, grid, seed=seed, index=2 * k + 1)
        ts, inputs, targets = interpolation_dataset(fA, fB, op, steps=steps)
        totals += _model_losses(model, inputs, targets)
    ratios = totals / n_pairs / group_a_mean
    return ts, ratios


def fidelity(psi_a: np.ndarray, psi_b: np.ndarray, grid: PeriodicGrid) -> float:
    """|<psi_a, psi_b>|^2 under the discrete L2 inner product; states must be unit-norm."""
    for name, psi in (("first", psi_a), ("second", psi_b)):
        norm = np.sqrt(np.sum(np.abs(psi) ** 2) * grid.spacing)
        if abs(norm - 1.0) > 1e-6:
            raise UserError(f"{name} state norm deviates by {abs(norm - 1.0):.2e}")
    overlap = np.vdot(psi_a, psi_b) * grid.spacing
    return float(np.abs(overlap) ** 2)


def infidelity_curve(model, records, steps: int = 100):
    """Mean 1 - fidelity at each macro step, model unrolled from every record's
    initial state (model states are renormalized before comparison)."""
    grid = records[0].grid
    psi0 = np.stack([r.psis[0] for r in records])
    states = _unroll(model, psi0, steps)
    curve = np.zeros(steps + 1)
    for t, state in enumerate(states, start=1):
        vals = state.data
        fids = [fidelity(vals[b], records[b].psis[t], grid) for b in range(len(records))]
        curve[t] = 1.0 - float(np.mean(fids))
    return np.arange(steps + 1), curve


@dataclass
class TailProbeResult:
    slope: float
    n0: int
    window: tuple
    has_tail: bool
    points: np.ndarray  # (log |index|, log |coeff|) pairs used in the fit


def _midpoint_dft(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """DFT over midpoint samples x_j = x0 + (j + 1/2) h; these coefficients
    approximate the continuous ones to O(1/n^2) even across a sawtooth seam,
    since the jump is never sampled."""
    n = grid.n
    xi = grid.modes.frequencies
    return np.fft.fft(values) / n * np.exp(-1j * xi * (grid.x0 + 0.5 * grid.spacing))


def sawtooth(x: np.ndarray, length: float) -> np.ndarray:
    """Periodic coordinate identification with the seam at x = 0: the centered
    box's analog of (theta - pi) on [0, 2pi), with coefficients ~ i/q."""
    return np.where(x >= 0, x - length / 2, x + length / 2)


def tail_probe(u: Field, power: int = 1, pad_factor: int = 8) -> TailProbeResult:
    """Fit the algebraic decay of the output tail of the coordinate-multiplied
    field sawtooth(x)^power * u.

    The product is evaluated at midpoints of a grid enlarged `pad_factor`
    times, which keeps both the alias fold and the sawtooth's sampling bias far
    below the fit window (N0, n/4); the top modes are never used.
    """
    if power not in (1, 2, 4):
        raise UserError(f"power must be 1, 2, or 4, got {power}")
    grid = u.grid
    coeffs = dft_coeffs(u.values, grid)
    mags = np.abs(coeffs)
    support = np.abs(grid.modes.indices[mags > 1e-12 * max(mags.max(), 1e-300)])
    if support.size == 0:
        raise UserError("tail probe needs a nonzero input")
    n0 = int(support.max())
    if n0 > grid.n // 8:
        raise UserError(f"input band {n0} exceeds n/8 = {grid.n // 8}")
    big = PeriodicGrid(grid.n * pad_factor, grid.length)
    mid = big.points + 0.5 * big.spacing
    # band-limited extension of u evaluated at the midpoints
    u_mid = np.zeros(big.n, dtype=complex)
    for pos, m in enumerate(grid.modes.indices):
        u_mid += coeffs[pos] * np.exp(1j * grid.modes.frequencies[pos] * mid)
    v_mid = sawtooth(mid, grid.length) ** power * u_mid
    v_hat = _midpoint_dft(v_mid, big)
    idx = big.modes.indices
    window = (np.abs(idx) > n0) & (np.abs(idx) < grid.n // 4)
    mags_v = np.abs(v_hat[window])
    if mags_v.max() < 1e-13:
        return TailProbeResult(slope=0.0, n0=n0, window=(n0, grid.n // 4),
                               has_tail=False, points=np.empty((0, 2)))
    logs = np.stack([np.log(np.abs(idx[window])), np.log(mags_v)], axis=1)
    slope = np.polyfit(logs[:, 0], logs[:, 1], 1)[0]
    return TailProbeResult(slope=float(slope), n0=n0, window=(n0, grid.n // 4),
                           has_tail=True, points=logs)


@dataclass
class MatrixDemo:
    shift: np.ndarray
    toeplitz: np.ndarray
    shift_nonzero_count: int
    shift_density: float
    toeplitz_density: float


def toeplitz_coefficient(m: int) -> complex:
    """Fourier coefficient of theta^2 on [0, 2pi]: c_0 = 4 pi^2 / 3,
    c_m = 2/m^2 + 2 pi i / m otherwise."""
    if m == 0:
        return 4 * np.pi**2 / 3
    return 2.0 / m**2 + 2j * np.pi / m


def matrix_demo(n: int) -> MatrixDemo:
    """The coordinate-squared multiplier in both bases: a two-step up-shift in
    the polynomial basis versus a fully dense Toeplitz matrix in the Fourier
    basis."""
    if n < 4:
        raise UserError(f"need n >= 4, got {n}")
    shift = np.zeros((n, n))
    for i in range(n - 2):
        shift[i, i + 2] = 1.0
    toeplitz = np.empty((n, n), dtype=complex)
    for k in range(n):
        for m in range(n):
            toeplitz[k, m] = toeplitz_coefficient(k - m)
    nz = int(np.count_nonzero(shift))
    return MatrixDemo(shift=shift, toeplitz=toeplitz, shift_nonzero_count=nz,
                      shift_density=nz / n**2,
                      toeplitz_density=float(np.count_nonzero(toeplitz)) / n**2)


def toeplitz_apply_check(v: np.ndarray, pad: int = 1 << 20) -> np.ndarray:
    """Oracle for the Toeplitz action: theta^2 times the band-limited extension
    of v = sum_m v_m e^{i m theta} on a huge midpoint-sampled [0, 2pi) grid.

    Midpoint sampling avoids the theta^2 seam, so the discrete coefficients
    track the continuous ones to O(1/pad^2); mode padding keeps the alias
    contribution below 1e-8 as well."""
    n = v.size
    theta = 2 * np.pi * (np.arange(pad) + 0.5) / pad
    u = np.zeros(pad, dtype=complex)
    for m in range(n):
        u += v[m] * np.exp(1j * m * theta)
    raw = np.fft.fft(theta**2 * u) / pad
    ks = np.fft.fftfreq(pad, d=1.0 / pad).astype(np.int64)
    w_hat = raw * np.exp(-1j * ks * (np.pi / pad))
    return w_hat[:n]


def symbolic_compare(learned: dict, truth: dict):
    """Per-term absolute coefficient deviation; missing terms count as zero."""
    keys = sorted(set(learned) | set(truth))
    diffs = {k: abs(float(learned.get(k, 0.0)) - float(truth.get(k, 0.0))) for k in keys}
    return diffs, (max(diffs.values()) if diffs else 0.0)


@dataclass
class MetricsReport:
    """Container for everything a benchmark run reports, with its provenance."""

    config_digest: str
    group_losses: dict = field(default_factory=dict)        # model -> (A, B)
    interpolation: dict = field(default_factory=dict)       # model -> (ts, ratios)
    infidelity: dict = field(default_factory=dict)          # model -> (steps, curve)
    tail_exponent: float | None = None
    symbolic_diff: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"config_digest": self.config_digest,
               "group_losses": {k: list(v) for k, v in self.group_losses.items()},
               "symbolic_diff": self.symbolic_diff}
        if self.tail_exponent is not None:
            out["tail_exponent"] = self.tail_exponent
        out["interpolation"] = {k: {"t": list(map(float, t)), "ratio": list(map(float, r))}
                                for k, (t, r) in self.interpolation.items()}
        out["infidelity"] = {k: {"step": list(map(int, s)), "value": list(map(float, c))}
                             for k, (s, c) in self.infidelity.items()}
        return out

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def curve_to_csv(path, columns: dict):
    """Write named columns of equal length as CSV."""
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
