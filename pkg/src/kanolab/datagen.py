"""Synthetic benchmark data: boundary envelope, the Group A/B function families,
the ground-truth operators G1-G3, and interpolation datasets.

Randomness uses the counter-based Philox generator keyed per (seed, sample),
so every sample's parameter draws are independent and bit-reproducible.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import UserError
from .spectral import Field, PeriodicGrid, derivative_values

GROUP_A = ("sine_beats", "chirped_cosine", "periodic")
GROUP_B = ("wave_packet", "sinc_pulse", "gaussian_hermite")
FAMILIES = GROUP_A + GROUP_B
OPERATORS = ("G1", "G2", "G3")


def envelope(x, half_width: float = np.pi):
    """Smooth boundary taper: 1 on |x| <= 5w/6, cos^4 ramp on the outer sixth, 0 at |x| >= w.

    `half_width` rescales the taper to boxes other than [-pi, pi].
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.abs(x) * (np.pi / half_width)
    ramp = np.cos((s - 5 * np.pi / 6) / (np.pi / 6) * (np.pi / 2)) ** 4
    out = np.where(s <= 5 * np.pi / 6, 1.0, np.where(s < np.pi, ramp, 0.0))
    return out if out.shape else float(out)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(index)]))


def _hermite(n: int, t: np.ndarray) -> np.ndarray:
    # physicists' Hermite polynomials H_0..H_3
    if n == 0:
        return np.ones_like(t)
    if n == 1:
        return 2 * t
    if n == 2:
        return 4 * t**2 - 2
    if n == 3:
        return 8 * t**3 - 12 * t
    raise UserError(f"hermite degree {n} out of range")


def _raw_family(family: str, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform
    if family == "sine_beats":
        w1, w2 = 8 * u(0.5, 3), 8 * u(0.5, 3)
        p1, p2 = u(0, 2 * np.pi), u(0, 2 * np.pi)
        return np.sin(w1 * x + p1) * np.sin(w2 * x + p2)
    if family == "chirped_cosine":
        alpha = 12 * u(0.5, 2)
        return np.cos(alpha * x**2)
    if family == "periodic":
        w = 8 * u(0.5, 3)
        p1, p2 = u(0, 2 * np.pi), u(0, 2 * np.pi)
        return np.sin(w * x + p1) + np.cos(w * x + p2)
    if family == "wave_packet":
        mu, sigma = u(-2, 2), u(0.5, 2) / 12
        w, p = 12 * u(2, 6), u(0, 2 * np.pi)
        return np.exp(-((x - mu) ** 2) / (2 * sigma**2)) * np.sin(w * x + p)
    if family == "sinc_pulse":
        alpha = 12 * u(0.5, 3)
        t = alpha * x
        return np.where(np.abs(x) > 1e-12, np.sin(t) / np.where(t == 0, 1.0, t), 1.0)
    if family == "gaussian_hermite":
        n = rng.integers(1, 4)
        mu, sigma = u(-2, 2), u(0.5, 2) / 8
        t = (x - mu) / sigma
        return _hermite(int(n), t) * np.exp(-(t**2) / 2)
    raise UserError(f"unknown function family {family!r}")


def sample_function(family: str, grid: PeriodicGrid, seed: int, index: int = 0) -> Field:
    """Draw one enveloped, max-normalized sample from the named family."""
    rng = sample_rng(seed, index)
    x = grid.points
    f = _raw_family(family, x, rng) * envelope(x, half_width=grid.length / 2)
    peak = np.abs(f).max()
    if peak == 0.0:
        raise UserError(f"family {family!r} drew an identically-zero sample; reseed")
    return Field(grid, f / peak)


def apply_ground_truth(op: str, f: Field) -> Field:
    """G1 f = x^2 f - f'' ; G2 f = x f' + f'' ; G3 f = f^3 + x f' + f''."""
    x = f.grid.points
    v = f.values
    if op == "G1":
        out = x**2 * v - derivative_values(v, f.grid, 2)
    elif op == "G2":
        out = x * derivative_values(v, f.grid, 1) + derivative_values(v, f.grid, 2)
    elif op == "G3":
        out = v**3 + x * derivative_values(v, f.grid, 1) + derivative_values(v, f.grid, 2)
    else:
        raise UserError(f"unknown operator {op!r}")
    return Field(f.grid, out)


@dataclass(frozen=True)
class SamplePair:
    """One (input, target) pair with its provenance."""

    inp: Field
    target: Field
    operator: str
    family: str
    seed: int
    index: int


@dataclass
class Dataset:
    grid: PeriodicGrid
    operator: str
    group: str
    seed: int
    inputs: np.ndarray    # (count, n)
    targets: np.ndarray   # (count, n)
    families: list

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def pairs(self):
        for i in range(self.count):
            yield SamplePair(Field(self.grid, self.inputs[i]), Field(self.grid, self.targets[i]),
                             self.operator, self.families[i], self.seed, i)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"operator": self.operator, "group": self.group,
                             "seed": self.seed, "n": self.grid.n,
                             "length": self.grid.length}, sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()


def build_dataset(op: str, group: str, count: int, seed: int,
                  grid: PeriodicGrid) -> Dataset:
    """Sample pairs with families drawn uniformly from the group's three."""
    if count <= 0:
        raise UserError(f"count must be positive, got {count}")
    families = {"A": GROUP_A, "B": GROUP_B}.get(group)
    if families is None:
        raise UserError(f"group must be 'A' or 'B', got {group!r}")
    inputs = np.empty((count, grid.n))
    targets = np.empty((count, grid.n))
    chosen = []
    for i in range(count):
        fam = families[int(sample_rng(seed, i).integers(0, 3))]
        f = sample_function(fam, grid, seed, index=i)
        inputs[i] = f.values
        targets[i] = apply_ground_truth(op, f).values
        chosen.append(fam)
    return Dataset(grid, op, group, seed, inputs, targets, chosen)


def interpolation_dataset(fA: Field, fB: Field, op: str, steps: int = 100):
    """Pairs for the convex path f_t = (1-t) fA + t fB, t on a uniform inclusive ladder."""
    if fA.grid != fB.grid:
        raise UserError("interpolation endpoints live on different grids")
    ts = np.linspace(0.0, 1.0, steps)
    inputs = np.empty((steps, fA.grid.n))
    targets = np.empty((steps, fA.grid.n))
    for i, t in enumerate(ts):
        ft = Field(fA.grid, (1 - t) * fA.values + t * fB.values)
        inputs[i] = ft.values
        targets[i] = apply_ground_truth(op, ft).values
    return ts, inputs, targets
