"""Kolmogorov-Arnold layers: learnable univariate spline edges, sum-of-edges
networks, edge sampling, and symbolic readout by least-squares monomial fits.

Every edge is phi(t) = c0 * b(t) + sum_i c_i * B_i(t) with cubic B-splines on
a clamped uniform knot grid and a fixed base function b (silu, identity, or
none). Edge domains are set at construction from the expected input range and
frozen; evaluation outside the domain extrapolates linearly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .bsplines import design_matrix, knot_vector
from .errors import UserError

BASE_KINDS = ("silu", "identity", "zero")


class SplineEdge:
    """One learnable univariate edge function."""

    def __init__(self, t_lo: float, t_hi: float, grid: int = 10, degree: int = 3,
                 base: str = "silu", complex_coeffs: bool = False,
                 rng: np.random.Generator | None = None, init_scale: float | None = None,
                 out_scale: float = 1.0):
        if base not in BASE_KINDS:
            raise UserError(f"base kind must be one of {BASE_KINDS}, got {base!r}")
        self.t_lo, self.t_hi = float(t_lo), float(t_hi)
        self.grid, self.degree, self.base = grid, degree, base
        # fixed output gain; keeps trainable coefficients O(1) on channels whose
        # values reach xi_max^2 while the edge still reports physical units
        self.out_scale = float(out_scale)
        self.knots = knot_vector(self.t_lo, self.t_hi, grid, degree)
        n_basis = grid + degree
        rng = rng or np.random.default_rng(0)
        scale = 0.1 / np.sqrt(grid) if init_scale is None else init_scale
        c = rng.normal(size=n_basis) * scale
        if complex_coeffs:
            c = c + 1j * rng.normal(size=n_basis) * scale
        self.coeffs = dc.Tensor(c, requires_grad=True)
        self.base_weight = None
        if base != "zero":
            self.base_weight = dc.Tensor(1.0, requires_grad=True)
        # sub-domain the training data actually constrains; symbolic fits and
        # freeze gates read the edge here (defaults to the whole domain)
        self.fit_window = (self.t_lo, self.t_hi)

    @property
    def domain(self):
        return (self.t_lo, self.t_hi)

    def parameters(self):
        return [self.coeffs] + ([self.base_weight] if self.base_weight is not None else [])

    def eval(self, t) -> dc.Tensor:
        t = dc.as_tensor(t)
        if np.any(np.isnan(t.data)):
            raise UserError("edge evaluated at NaN")
        out = dc.bspline_eval(self.coeffs, t, self.knots, self.degree)
        if self.base == "identity":
            out = dc.add(out, dc.mul(self.base_weight, t))
        elif self.base == "silu":
            out = dc.add(out, dc.mul(self.base_weight, dc.apply_pointwise("silu", t)))
        return out if self.out_scale == 1.0 else dc.mul(out, self.out_scale)

    def eval_np(self, t: np.ndarray) -> np.ndarray:
        return self.eval(dc.Tensor(np.asarray(t, dtype=np.float64))).data

    def sample(self, k: int, window: bool = False):
        if k < 2:
            raise UserError(f"need at least 2 samples, got {k}")
        lo, hi = self.fit_window if window else (self.t_lo, self.t_hi)
        t = np.linspace(lo, hi, k)
        return t, self.eval_np(t)

    def set_from_samples(self, ts: np.ndarray, values: np.ndarray):
        """Least-squares fit of the spline part to target samples (base weight -> 0)."""
        D, _ = design_matrix(self.knots, self.degree, np.asarray(ts, dtype=np.float64))
        sol = np.linalg.lstsq(D, np.asarray(values) / self.out_scale, rcond=None)[0]
        if not self.coeffs.is_complex:
            sol = sol.real
        self.coeffs = dc.Tensor(sol, requires_grad=True)
        if self.base_weight is not None:
            self.base_weight = dc.Tensor(0.0, requires_grad=True)
        return self


class PolyEdge:
    """A frozen closed-form edge: sum of monomials with trainable scalar coefficients."""

    def __init__(self, degrees, coeffs, t_lo: float, t_hi: float):
        self.degrees = tuple(int(d) for d in degrees)
        self.t_lo, self.t_hi = float(t_lo), float(t_hi)
        self.coeffs = dc.Tensor(np.asarray(coeffs), requires_grad=True)
        self.fit_window = (self.t_lo, self.t_hi)
        if self.coeffs.data.shape != (len(self.degrees),):
            raise UserError("one coefficient per monomial degree required")

    @property
    def domain(self):
        return (self.t_lo, self.t_hi)

    def parameters(self):
        return [self.coeffs]

    def eval(self, t) -> dc.Tensor:
        t = dc.as_tensor(t)
        shape = t.data.shape
        flat = dc.reshape(t, (t.data.size,))
        rows = [dc.reshape(dc.power(flat, d) if d > 0 else dc.Tensor(np.ones(t.data.size)),
                           (1, t.data.size)) for d in self.degrees]
        P = dc.concat(rows, axis=0)
        out = dc.einsum2("k,km->m", self.coeffs, P)
        return dc.reshape(out, shape)

    def eval_np(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return sum(self.coeffs.data[i] * t**d for i, d in enumerate(self.degrees))

    def sample(self, k: int, window: bool = False):
        lo, hi = self.fit_window if window else (self.t_lo, self.t_hi)
        t = np.linspace(lo, hi, k)
        return t, self.eval_np(t)


class KanNet:
    """Layered sum-of-edges network: output q of layer l is sum_p phi_qp(input p)."""

    def __init__(self, widths, domains, grid: int = 10, degree: int = 3,
                 base: str = "silu", complex_coeffs: bool = False, seed: int = 0):
        """`domains[l][p]` is the (lo, hi) edge domain for input p of layer l."""
        self.widths = list(widths)
        if len(self.widths) < 2:
            raise UserError("a KanNet needs at least one layer")
        rng = np.random.default_rng(seed)
        self.layers = []
        for l, (n_in, n_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            if len(domains[l]) != n_in:
                raise UserError(f"layer {l}: {n_in} input domains required")
            layer = [[SplineEdge(*domains[l][p], grid=grid, degree=degree, base=base,
                                 complex_coeffs=complex_coeffs, rng=rng)
                      for p in range(n_in)] for _ in range(n_out)]
            self.layers.append(layer)

    def parameters(self):
        out = []
        for layer in self.layers:
            for row in layer:
                for edge in row:
                    out.extend(edge.parameters())
        return out

    def forward_nodes(self, nodes):
        """Forward pass on a list of same-shaped input tensors (one per input node)."""
        for layer in self.layers:
            if len(nodes) != len(layer[0]):
                raise UserError(f"expected {len(layer[0])} inputs, got {len(nodes)}")
            nxt = []
            for row in layer:
                acc = row[0].eval(nodes[0])
                for p in range(1, len(nodes)):
                    acc = dc.add(acc, row[p].eval(nodes[p]))
                nxt.append(acc)
            nodes = nxt
        return nodes

    def forward_vector(self, x) -> dc.Tensor:
        """Forward pass on a packed vector (n_0,) or batch (m, n_0)."""
        x = dc.as_tensor(x)
        n0 = self.widths[0]
        if x.data.shape[-1] != n0:
            raise UserError(f"input width {x.data.shape[-1]} != layer width {n0}")
        cols = [dc.gather(x, [p], axis=x.data.ndim - 1) for p in range(n0)]
        cols = [dc.reshape(c, x.data.shape[:-1]) for c in cols]
        outs = self.forward_nodes(cols)
        outs = [dc.reshape(o, o.data.shape + (1,)) for o in outs]
        return dc.concat(outs, axis=x.data.ndim - 1)


def kan_forward(net: KanNet, x) -> dc.Tensor:
    return net.forward_vector(x)


def sample_edge(edge, k: int):
    """k uniform samples of the edge function over its domain."""
    return edge.sample(k)


MONOMIAL_NAMES = ("1", "t", "t^2", "t^3", "t^4")


@dataclass
class SymbolicFit:
    """Least-squares monomial readout of one edge curve."""

    coefficients: dict      # term name -> coefficient (complex for complex edges)
    residual: float         # rms misfit
    pruned: tuple           # term names reported below the prune threshold

    def unpruned(self) -> dict:
        return {k: v for k, v in self.coefficients.items() if k not in self.pruned}

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, complex) or np.iscomplexobj(np.asarray(v)):
                return [float(np.real(v)), float(np.imag(v))]
            return float(v)
        return {"terms": {k: enc(v) for k, v in self.coefficients.items()},
                "residual": self.residual, "pruned": list(self.pruned)}


def fit_symbolic(curve, degrees=(0, 1, 2, 3, 4), prune_threshold: float = 5e-5) -> SymbolicFit:
    """Ordinary least squares of an edge curve against monomials t^d.

    `curve` is a (t, values) pair as produced by `sample_edge`.
    """
    ts, values = curve
    ts = np.asarray(ts, dtype=np.float64)
    values = np.asarray(values)
    if ts.size < len(degrees):
        raise UserError(f"need at least {len(degrees)} samples, got {ts.size}")
    design = np.stack([ts**d for d in degrees], axis=1)
    # condition the solve: normalize column scales, undo on the way out
    scales = np.abs(design).max(axis=0)
    scales[scales == 0] = 1.0
    sol, _, rank, _ = np.linalg.lstsq(design / scales, values, rcond=None)
    if rank < len(degrees):
        names = [MONOMIAL_NAMES[d] if d < len(MONOMIAL_NAMES) else f"t^{d}" for d in degrees]
        raise UserError(f"rank-deficient design matrix: basis {names} is degenerate "
                        f"on the sampled curve")
    sol = sol / scales
    residual = float(np.sqrt(np.mean(np.abs(values - design @ sol) ** 2)))
    coeffs, pruned = {}, []
    for d, c in zip(degrees, sol):
        name = MONOMIAL_NAMES[d] if d < len(MONOMIAL_NAMES) else f"t^{d}"
        c = complex(c) if np.iscomplexobj(sol) else float(c)
        coeffs[name] = c
        if abs(c) < prune_threshold:
            pruned.append(name)
    return SymbolicFit(coeffs, residual, tuple(pruned))


def edge_curve_to_csv(edge, k: int, path):
    """Export k samples of an edge as (t, value) CSV; complex values get two columns."""
    ts, vals = edge.sample(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if np.iscomplexobj(vals):
            writer.writerow(["t", "value_re", "value_im"])
            for t, v in zip(ts, vals):
                writer.writerow([repr(t), repr(v.real), repr(v.imag)])
        else:
            writer.writerow(["t", "value"])
            for t, v in zip(ts, vals):
                writer.writerow([repr(t), repr(v)])
