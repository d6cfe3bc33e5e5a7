"""Fourier Neural Operator baseline: spectral multiplier layers with a pointwise
linear path, lift/projection maps, and the layer-Jacobian spectrum probe.

A layer computes sigma(ifft(R(xi) . fft(a)) + W a + b) with R acting
independently per retained mode (block-diagonal over modes, no mode mixing).
Conjugate symmetry of R is not enforced, so intermediate values may be
complex; activations act componentwise on real and imaginary parts and the
real part is taken at the projection head. Channels are stored axis-first:
fields have shape (batch, channels, n).
"""
from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import UserError
from .spectral import PeriodicGrid, truncation_mask

ACTIVATIONS = ("identity", "gelu", "tanh")


def _activate(name: str, z: dc.Tensor) -> dc.Tensor:
    if name == "identity":
        return z
    if z.is_complex:
        re, im = dc.real(z), dc.imag(z)
        if name == "tanh":
            return dc.complex_pack(dc.tanh(re), dc.tanh(im))
        return dc.complex_pack(dc.apply_pointwise(name, re), dc.apply_pointwise(name, im))
    return dc.tanh(z) if name == "tanh" else dc.apply_pointwise(name, z)


def activation_derivative(name: str, z: np.ndarray) -> np.ndarray:
    """sigma'(z) for real pre-activations (probe support)."""
    if name == "identity":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return dc.POINTWISE[name][1](z)


class FnoLayer:
    """One spectral-multiplier layer of a fixed channel width."""

    def __init__(self, width: int, n_modes: int, retained: int | None = None,
                 activation: str = "gelu", rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise UserError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.width = width
        self.n_modes = n_modes
        self.retained = n_modes if retained is None else retained
        self.activation = activation
        scale = 1.0 / (width * width)
        self.R = dc.Tensor(scale * (rng.normal(size=(n_modes, width, width))
                                    + 1j * rng.normal(size=(n_modes, width, width))),
                           requires_grad=True)
        self.W = dc.Tensor(scale * rng.normal(size=(width, width)), requires_grad=True)
        self.bias = dc.Tensor(np.zeros(width), requires_grad=True)
        self.mask = dc.Tensor(truncation_mask(n_modes, self.retained).astype(np.float64))

    def parameters(self):
        return [self.R, self.W, self.bias]

    def preactivation(self, a: dc.Tensor) -> dc.Tensor:
        if a.data.ndim != 3 or a.data.shape[1] != self.width:
            raise UserError(
                f"layer expects (batch, {self.width}, n) input, got {a.data.shape}")
        a_hat = dc.fft(a)
        mixed = dc.mode_mix(self.R, dc.mul(a_hat, self.mask))
        spectral = dc.ifft(mixed)
        pointwise = dc.channel_map(self.W, a)
        z = dc.add(spectral, pointwise)
        return dc.add(z, dc.reshape(self.bias, (1, self.width, 1)))

    def forward(self, a: dc.Tensor) -> dc.Tensor:
        return _activate(self.activation, self.preactivation(a))


def fno_layer_forward(layer: FnoLayer, a) -> dc.Tensor:
    """Single-layer forward on a (batch, w, n) or (w, n) field stack."""
    a = dc.as_tensor(a)
    if a.data.ndim == 2:
        out = layer.forward(dc.reshape(a, (1,) + a.data.shape))
        return dc.reshape(out, out.data.shape[1:])
    return layer.forward(a)


class FnoNet:
    """Lift, iterated spectral layers, projection; real output channels."""

    def __init__(self, grid: PeriodicGrid, width: int = 64, n_layers: int = 2,
                 retained: int | None = None, activation: str = "gelu",
                 in_channels: int = 1, out_channels: int = 1, seed: int = 0,
                 out_gain: float = 1.0):
        rng = np.random.default_rng(seed)
        self.grid = grid
        self.width = width
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.activation = activation
        # fixed projection gain calibrated to the target scale, so training
        # with O(1) weights can reach targets far from unit magnitude
        self.out_gain = float(out_gain)
        self.retained = grid.n if retained is None else retained
        self.layers = [FnoLayer(width, grid.n, retained=self.retained,
                                activation=activation, rng=rng)
                       for _ in range(n_layers)]
        self.P = dc.Tensor(rng.normal(size=(in_channels, width)) / np.sqrt(in_channels),
                           requires_grad=True)
        self.p_bias = dc.Tensor(np.zeros(width), requires_grad=True)
        self.Q = dc.Tensor(rng.normal(size=(width, out_channels)) / np.sqrt(width),
                           requires_grad=True)
        self.q_bias = dc.Tensor(np.zeros(out_channels), requires_grad=True)

    def arch(self) -> dict:
        return {"kind": "fno", "n": self.grid.n, "length": self.grid.length,
                "width": self.width, "n_layers": len(self.layers),
                "retained": self.retained, "activation": self.activation,
                "in_channels": self.in_channels, "out_channels": self.out_channels,
                "out_gain": self.out_gain}

    @classmethod
    def from_arch(cls, arch: dict) -> "FnoNet":
        return cls(PeriodicGrid(arch["n"], arch["length"]), width=arch["width"],
                   n_layers=arch["n_layers"], retained=arch["retained"],
                   activation=arch["activation"], in_channels=arch["in_channels"],
                   out_channels=arch["out_channels"], out_gain=arch.get("out_gain", 1.0))

    def parameters(self):
        out = [self.P, self.p_bias, self.Q, self.q_bias]
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def named_parameters(self):
        names = [("P", self.P), ("p_bias", self.p_bias), ("Q", self.Q), ("q_bias", self.q_bias)]
        for i, layer in enumerate(self.layers):
            names += [(f"layer{i}.R", layer.R), (f"layer{i}.W", layer.W),
                      (f"layer{i}.bias", layer.bias)]
        return names

    def n_parameters(self) -> int:
        total = 0
        for p in self.parameters():
            total += p.size * (2 if p.is_complex else 1)
        return total

    def forward(self, a) -> dc.Tensor:
        """(batch, n) or (batch, in_channels, n) real input -> same-rank real output."""
        a = dc.as_tensor(a)
        squeeze = a.data.ndim == 2
        if squeeze:
            if self.in_channels != 1:
                raise UserError(f"net expects {self.in_channels} input channels")
            a = dc.reshape(a, (a.data.shape[0], 1, a.data.shape[1]))
        h = dc.channel_map(self.P, a)
        h = dc.add(h, dc.reshape(self.p_bias, (1, self.width, 1)))
        for layer in self.layers:
            h = layer.forward(h)
        out = dc.channel_map(self.Q, h)
        out = dc.add(out, dc.reshape(self.q_bias, (1, self.out_channels, 1)))
        out = dc.real(out) if out.is_complex else out
        if self.out_gain != 1.0:
            out = dc.mul(out, self.out_gain)
        if squeeze:
            out = dc.reshape(out, (out.data.shape[0], out.data.shape[2]))
        return out

    def predict(self, values: np.ndarray) -> np.ndarray:
        return self.forward(dc.Tensor(values)).data


def fno_forward(net: FnoNet, a) -> dc.Tensor:
    return net.forward(a)


def jacobian_spectrum(layer: FnoLayer, u: np.ndarray, grid: PeriodicGrid):
    """Exact layer Jacobian at u, conjugated into the spectral basis.

    Requires a scalar channel (w=1). Differentiates every output point with
    respect to every input point via the tape, builds J[i, j] = d out_i / d u_j,
    and returns (F J F^{-1}, off_diagonal_mass) where the DFT pair matches the
    `spectral` module conventions.
    """
    if layer.width != 1:
        raise UserError("jacobian probe requires a scalar channel (width 1)")
    n = grid.n
    u = np.asarray(u, dtype=np.float64).reshape(n)
    J = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        row = np.zeros(n, dtype=np.complex128)
        for unit in (1.0, 1j):
            leaf = dc.Tensor(u.reshape(1, 1, n), requires_grad=True)
            out = layer.forward(leaf)
            comp = dc.real(out) if unit == 1.0 else dc.imag(out)
            picked = dc.gather(dc.reshape(comp, (n,)), [i], axis=0)
            dc.backward(dc.tsum(picked))
            row = row + unit * leaf.grad.reshape(n)
        J[i] = row
    # conjugate by the endpoint-aware DFT pair: J_spec = F J F^{-1}
    x, xi = grid.points, grid.modes.frequencies
    F = np.exp(-1j * np.outer(xi, x)) / n
    Finv = np.exp(1j * np.outer(x, xi))
    J_spec = F @ J @ Finv
    total = np.sum(np.abs(J_spec) ** 2)
    off = total - np.sum(np.abs(np.diag(J_spec)) ** 2)
    return J_spec, float(off / total)
