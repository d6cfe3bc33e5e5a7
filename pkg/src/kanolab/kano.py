"""KANO layers and networks: Kohn-Nirenberg quantization of spline-edge symbols,
the two-input activation network, and the unitary-propagator variant for
quantum dynamics.

The quantizer tabulates the symbol p on (grid x retained modes) and applies

    u(x) = sum_xi p(x, xi) a_hat(xi) e^{i xi x},

which is algebraically the double-sum quantization with prefactor (h/L)^d.
Symbol networks are one-layer sum-of-edges functions over the channels
(x, x*xi, xi) (plus |psi| for state-dependent generators); the joint x*xi
channel is what lets a sum of univariate edges express mixed terms such as
first-order transport, whose quantized symbol is i*x*xi.
"""
from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import UserError
from .kan import PolyEdge, SplineEdge, fit_symbolic, sample_edge
from .spectral import PeriodicGrid, dft_coeffs, phase_in

SYNTH_CHANNELS = ("x", "x*xi", "xi")


def _channel_domain(values: np.ndarray, margin: float = 0.1):
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def channel_values(name: str, grid: PeriodicGrid) -> np.ndarray:
    x = grid.points
    xi = grid.modes.frequencies
    if name == "x":
        return x
    if name == "xi":
        return xi
    if name == "x*xi":
        return np.outer(x, xi)
    raise UserError(f"unknown symbol channel {name!r}")


# -- quantization ----------------------------------------------------------------

def kn_apply(p: np.ndarray, a_values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Apply the quantized symbol p (tabulated on grid x modes) to field samples."""
    p = np.asarray(p)
    if p.shape != (grid.n, grid.n):
        raise UserError(f"symbol table {p.shape} does not match mode set "
                        f"({grid.n}, {grid.n})")
    a_hat = dft_coeffs(a_values, grid)
    E = np.exp(1j * np.outer(grid.points, grid.modes.frequencies))
    return (p * E) @ a_hat if a_hat.ndim == 1 else a_hat @ (p * E).T


def dft_t(a: dc.Tensor, grid: PeriodicGrid) -> dc.Tensor:
    """Differentiable endpoint-aware dft along the last axis."""
    scale = dc.Tensor(phase_in(grid) / grid.n)
    return dc.mul(dc.fft(a), scale)


def kn_apply_t(p: dc.Tensor, a: dc.Tensor, grid: PeriodicGrid) -> dc.Tensor:
    """Differentiable quantizer: p is (n, n) or (batch, n, n), a is (batch, n)."""
    E = dc.Tensor(np.exp(1j * np.outer(grid.points, grid.modes.frequencies)))
    a_hat = dft_t(a, grid)
    pe = dc.mul(p, E)
    if p.data.ndim == 2:
        return dc.einsum2("xf,bf->bx", pe, a_hat)
    if p.data.ndim == 3:
        return dc.einsum2("bxf,bf->bx", pe, a_hat)
    raise UserError(f"symbol table must have rank 2 or 3, got {p.data.ndim}")


# -- symbol networks ----------------------------------------------------------------

class SymbolNet:
    """One-layer sum-of-edges symbol p over (x, x*xi, xi) [+ |psi|] channels.

    Each channel's edge carries a fixed output scale (half-range squared) so
    spline coefficients stay O(1) even where the symbol reaches xi_max^2.
    """

    def __init__(self, grid: PeriodicGrid, channels=SYNTH_CHANNELS,
                 complex_coeffs: bool = False, spline_grid: int = 10,
                 degree: int = 3, seed: int = 0, psi_abs_max: float = 2.5,
                 out_scales=None):
        """`out_scales` fixes each edge's output gain (a float applies to all
        channels). The gain should approximate the symbol's physical magnitude
        so trainable coefficients stay O(1); it defaults to the squared channel
        half-range, the scale of a quadratic symbol term."""
        self.grid = grid
        self.channels = tuple(channels)
        self.complex_coeffs = complex_coeffs
        self.spline_grid = spline_grid
        self.degree = degree
        self.psi_abs_max = psi_abs_max
        rng = np.random.default_rng(seed)
        self.edges = {}
        for name in self.channels:
            if name == "|psi|":
                lo, hi = 0.0, psi_abs_max
            else:
                lo, hi = _channel_domain(channel_values(name, grid))
            if out_scales is None:
                scale = max(1.0, (0.5 * (hi - lo)) ** 2)
            elif isinstance(out_scales, dict):
                scale = float(out_scales[name])
            else:
                scale = float(out_scales)
            edge = SplineEdge(
                lo, hi, grid=spline_grid, degree=degree, base="zero",
                complex_coeffs=complex_coeffs, rng=rng, out_scale=scale,
                init_scale=(0.1 / np.sqrt(spline_grid)) / scale)
            if name in ("x", "x*xi"):
                # the boundary taper zeroes every input beyond 5/6 of the box,
                # so the edge is only observable on the inner window; symbolic
                # fits and freeze gates read it there
                raw = channel_values(name, grid)
                edge.fit_window = (5.0 / 6.0 * float(raw.min()),
                                   5.0 / 6.0 * float(raw.max()))
            self.edges[name] = edge

    def parameters(self):
        out = []
        for name in self.channels:
            out.extend(self.edges[name].parameters())
        return out

    def edge_items(self):
        return [(name, self.edges[name]) for name in self.channels]

    def tabulate(self, psi_abs: dc.Tensor | None = None) -> dc.Tensor:
        """Symbol values on (grid x modes); (batch, n, n) when a |psi| channel is fed."""
        n = self.grid.n
        total = None
        for name in self.channels:
            if name == "|psi|":
                if psi_abs is None:
                    raise UserError("symbol has a |psi| channel but no state was supplied")
                part = self.edges[name].eval(psi_abs)
                part = dc.reshape(part, part.data.shape + (1,))  # broadcast over modes
            else:
                vals = channel_values(name, self.grid)
                part = self.edges[name].eval(dc.Tensor(vals))
                if name == "x":
                    part = dc.reshape(part, (n, 1))
                elif name == "xi":
                    part = dc.reshape(part, (1, n))
            total = part if total is None else dc.add(total, part)
        return total


class ActivationNet:
    """Pointwise two-input activation Phi(u, a) = chi_u(u) + chi_a(a).

    chi_u starts at the identity (pass-through), chi_a near zero. On complex
    inputs the net acts componentwise on real and imaginary parts.
    """

    def __init__(self, u_lo: float, u_hi: float, a_lo: float = -1.1, a_hi: float = 1.1,
                 spline_grid: int = 10, degree: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        small = 0.01 / np.sqrt(spline_grid)
        self.u_edge = SplineEdge(u_lo, u_hi, grid=spline_grid, degree=degree,
                                 base="identity", rng=rng, init_scale=small)
        self.a_edge = SplineEdge(a_lo, a_hi, grid=spline_grid, degree=degree,
                                 base="zero", rng=rng, init_scale=small)

    def parameters(self):
        return self.u_edge.parameters() + self.a_edge.parameters()

    def edge_items(self):
        return [("u", self.u_edge), ("a", self.a_edge)]

    def apply(self, u: dc.Tensor, a: dc.Tensor) -> dc.Tensor:
        """Edges act on the real parts; imaginary parts pass through untouched,
        so any skew the quantized path produces stays visible to the loss."""
        u_c, a_c = u.is_complex, a.is_complex
        re = dc.add(self.u_edge.eval(dc.real(u) if u_c else u),
                    self.a_edge.eval(dc.real(a) if a_c else a))
        im = None
        if u_c:
            im = dc.imag(u)
        if a_c:
            im = dc.imag(a) if im is None else dc.add(im, dc.imag(a))
        if im is None:
            im = dc.Tensor(np.zeros(re.data.shape))
        return dc.complex_pack(re, im)


class KanoLayer:
    """Quantized-symbol layer: Phi(Op(p) a, a), evaluated pointwise."""

    def __init__(self, symbol: SymbolNet, activation: ActivationNet):
        self.symbol = symbol
        self.activation = activation

    def parameters(self):
        return self.symbol.parameters() + self.activation.parameters()

    def forward(self, a: dc.Tensor) -> dc.Tensor:
        p = self.symbol.tabulate()
        u = kn_apply_t(p, a, self.symbol.grid)
        return self.activation.apply(u, a)


class KanoNet:
    """Composition of KANO layers; no lift or projection networks."""

    def __init__(self, layers):
        if not layers:
            raise UserError("a KANO net needs at least one layer")
        self.layers = list(layers)
        self.grid = layers[0].symbol.grid

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, a) -> dc.Tensor:
        h = dc.as_tensor(a)
        squeeze = h.data.ndim == 1
        if squeeze:
            h = dc.reshape(h, (1, h.data.shape[0]))
        for layer in self.layers:
            h = layer.forward(h)
        return dc.reshape(h, (h.data.shape[1],)) if squeeze else h

    def predict(self, values: np.ndarray) -> np.ndarray:
        return self.forward(dc.Tensor(values)).data

    def n_parameters(self) -> int:
        return sum(p.size * (2 if p.is_complex else 1) for p in self.parameters())


def kano_layer_forward(symbol: SymbolNet, activation: ActivationNet, a) -> dc.Tensor:
    return KanoLayer(symbol, activation).forward(dc.as_tensor(a))


def kano_forward(net: KanoNet, a) -> dc.Tensor:
    return net.forward(a)


def synthetic_kano(grid: PeriodicGrid, target_lo: float, target_hi: float,
                   seed: int = 0, spline_grid: int = 10) -> KanoNet:
    """Single-layer KANO for the synthetic operator benchmarks.

    Inputs are max-normalized, so the symbol magnitude the model must reach is
    bounded by the target magnitude; that calibrates the edge output gains.
    """
    sym_scale = max(1.0, abs(target_lo), abs(target_hi))
    sym = SymbolNet(grid, channels=SYNTH_CHANNELS, complex_coeffs=True,
                    spline_grid=spline_grid, seed=seed, out_scales=sym_scale)
    pad = 0.1 * (target_hi - target_lo)
    act = ActivationNet(target_lo - pad, target_hi + pad, seed=seed + 1,
                        spline_grid=spline_grid)
    return KanoNet([KanoLayer(sym, act)])


# -- Q-KANO ---------------------------------------------------------------------------

class QkanoModel:
    """Unitary-propagator variant: one macro step multiplies the spectrum-side
    factor exp(-i dT phi(x, xi)) through the quantizer, then an optional learned
    phase activation exp(-i dT theta(|z|, angle z)), then renormalizes."""

    def __init__(self, grid: PeriodicGrid, dt_macro: float = 1e-4,
                 state_dependent: bool = False, use_activation: bool = False,
                 spline_grid: int = 10, seed: int = 0, psi_abs_max: float = 2.5,
                 kinetic_init: bool = True):
        channels = SYNTH_CHANNELS + ("|psi|",) if state_dependent else SYNTH_CHANNELS
        self.grid = grid
        self.dt_macro = dt_macro
        self.state_dependent = state_dependent
        self.kinetic_init = kinetic_init
        # gains follow the physical phase scales: kinetic ~ xi^2/2, potential
        # ~ x^4, cross and state channels near their linear range
        hw_x = 0.55 * grid.length
        hw_xi = 1.1 * np.pi * grid.n / grid.length
        scales = {"x": max(1.0, hw_x**4), "xi": max(1.0, hw_xi**2 / 2),
                  "x*xi": max(1.0, hw_x * hw_xi), "|psi|": max(1.0, psi_abs_max**2)}
        self.phase_symbol = SymbolNet(grid, channels=channels, complex_coeffs=False,
                                      spline_grid=spline_grid, seed=seed,
                                      psi_abs_max=psi_abs_max, out_scales=scales)
        if kinetic_init:
            # start the spectral edge at the universal free-particle phase
            # xi^2/2 (the standard sign convention of the unitary flow); the
            # position-PMF branch of the likelihood is blind to conjugating
            # the whole phase, so a neutral start makes training a coin flip
            # between the generator and its time-reversed impostor
            edge = self.phase_symbol.edges["xi"]
            ts = np.linspace(edge.t_lo, edge.t_hi, 40 * spline_grid)
            edge.set_from_samples(ts, 0.5 * ts**2)
        self.activation = None
        if use_activation:
            rng_seed = seed + 7
            small = 0.01 / np.sqrt(spline_grid)
            self.act_mag = SplineEdge(0.0, psi_abs_max, grid=spline_grid, base="zero",
                                      rng=np.random.default_rng(rng_seed), init_scale=small)
            self.act_arg = SplineEdge(-1.1 * np.pi, 1.1 * np.pi, grid=spline_grid,
                                      base="zero", rng=np.random.default_rng(rng_seed + 1),
                                      init_scale=small)
            self.activation = (self.act_mag, self.act_arg)

    def parameters(self):
        out = self.phase_symbol.parameters()
        if self.activation is not None:
            out = out + self.act_mag.parameters() + self.act_arg.parameters()
        return out

    def edge_items(self):
        items = [(f"symbol.{n}", e) for n, e in self.phase_symbol.edge_items()]
        if self.activation is not None:
            items += [("act.|z|", self.act_mag), ("act.angle", self.act_arg)]
        return items

    def propagator_table(self, psi_abs: dc.Tensor | None = None) -> dc.Tensor:
        phi = self.phase_symbol.tabulate(psi_abs=psi_abs)
        return dc.exp(dc.mul(phi, dc.Tensor(-1j * self.dt_macro)))

    def step(self, psi: dc.Tensor, cached_table: dc.Tensor | None = None) -> dc.Tensor:
        """One macro step; `cached_table` reuses a state-independent propagator."""
        if cached_table is not None and not self.state_dependent:
            table = cached_table
        else:
            psi_abs = dc.absval(psi) if self.state_dependent else None
            table = self.propagator_table(psi_abs=psi_abs)
        u = kn_apply_t(table, psi, self.grid)
        if self.activation is not None:
            theta = dc.add(self.act_mag.eval(dc.absval(u)),
                           self.act_arg.eval(dc.angle(u)))
            u = dc.mul(u, dc.exp(dc.mul(theta, dc.Tensor(-1j * self.dt_macro))))
        norm2 = dc.tsum(dc.power(dc.absval(u), 2.0), axis=-1, keepdims=True)
        norm = dc.sqrt(dc.mul(norm2, self.grid.spacing))
        return dc.div(u, norm)

    def rollout(self, psi0: dc.Tensor, steps: int):
        """Unrolled macro steps from psi0 (batch, n); returns the list of states."""
        cached = None
        if not self.state_dependent:
            cached = self.propagator_table()
        states = []
        psi = psi0
        for _ in range(steps):
            psi = self.step(psi, cached_table=cached)
            states.append(psi)
        return states

    def predict_rollout(self, psi0_values: np.ndarray, steps: int) -> np.ndarray:
        states = self.rollout(dc.Tensor(psi0_values), steps)
        return np.stack([s.data for s in states])

    def n_parameters(self) -> int:
        return sum(p.size * (2 if p.is_complex else 1) for p in self.parameters())


def qkano_step(model: QkanoModel, psi_values: np.ndarray) -> np.ndarray:
    """One propagation step on raw samples; rejects zero-norm input."""
    psi_values = np.asarray(psi_values, dtype=np.complex128)
    if np.sqrt(np.sum(np.abs(psi_values) ** 2) * model.grid.spacing) < 1e-12:
        raise UserError("zero-norm state cannot be propagated")
    squeeze = psi_values.ndim == 1
    batch = psi_values[None, :] if squeeze else psi_values
    out = model.step(dc.Tensor(batch)).data
    return out[0] if squeeze else out


# -- symbolic extraction ----------------------------------------------------------------

_DERIV_NAMES = {1: "dx", 2: "dxx", 3: "dxxx", 4: "dxxxx"}


def _rotated(term_coeff: complex, unit: complex, name: str, out: dict):
    """Split a complex monomial coefficient into its canonical slot and a skew entry."""
    c = term_coeff / unit
    out[name] = out.get(name, 0.0) + float(np.real(c))
    skew = float(np.imag(c))
    if skew != 0.0:
        out["i*" + name] = out.get("i*" + name, 0.0) + skew


def _edge_fit(edge, n_samples: int, prune: float, degrees=(0, 1, 2, 3, 4)):
    return fit_symbolic(edge.sample(n_samples, window=True), degrees=degrees,
                        prune_threshold=prune)


def extract_operator_terms(net: KanoNet, n_samples: int = 201,
                           prune: float = 5e-5) -> dict:
    """Compose per-edge monomial fits into a flat operator-term dictionary.

    Terms: f-powers from the residual edge, x^k*f from the x channel, dx^k from
    the xi channel (rotated by (-i)^k), x*dx and friends from the joint channel.
    Entries named i*<term> hold skew (wrong-phase) residue. Coefficients below
    the prune threshold are dropped.
    """
    if len(net.layers) != 1:
        raise UserError("operator extraction is defined for single-layer nets")
    layer = net.layers[0]
    fits = {name: _edge_fit(edge, n_samples, 0.0)
            for name, edge in layer.symbol.edge_items()}
    act_fits = {name: _edge_fit(edge, n_samples, 0.0)
                for name, edge in layer.activation.edge_items()}
    kappa = float(np.real(act_fits["u"].coefficients["t"]))
    out: dict = {}
    out["const"] = float(np.real(act_fits["u"].coefficients["1"])) \
        + float(np.real(act_fits["a"].coefficients["1"]))
    for k, name in ((2, "u^2"), (3, "u^3"), (4, "u^4")):
        c = float(np.real(act_fits["u"].coefficients[f"t^{k}" if k > 1 else "t"]))
        if c != 0.0:
            out[name] = c
    for k in (1, 2, 3, 4):
        key = "t" if k == 1 else f"t^{k}"
        c = float(np.real(act_fits["a"].coefficients[key]))
        out["f" if k == 1 else f"f^{k}"] = c
    for name, fit in fits.items():
        for k in range(5):
            key = MONOMIAL_KEYS[k]
            c = complex(fit.coefficients[key]) * kappa
            if name == "x":
                slot = "f" if k == 0 else ("x*f" if k == 1 else f"x^{k}*f")
                _rotated(c, 1.0, slot, out)
            elif name == "xi":
                if k == 0:
                    _rotated(c, 1.0, "f", out)
                else:
                    _rotated(c, 1j**k, _DERIV_NAMES[k], out)
            elif name == "x*xi":
                if k == 0:
                    _rotated(c, 1.0, "f", out)
                elif k == 1:
                    _rotated(c, 1j, "x*dx", out)
                else:
                    _rotated(c, 1j**k, f"x^{k}*{_DERIV_NAMES[k]}", out)
    return {k: v for k, v in out.items() if abs(v) >= prune}


MONOMIAL_KEYS = ("1", "t", "t^2", "t^3", "t^4")


def ground_truth_operator_terms(op: str) -> dict:
    if op == "G1":
        return {"x^2*f": 1.0, "dxx": -1.0}
    if op == "G2":
        return {"x*dx": 1.0, "dxx": 1.0}
    if op == "G3":
        return {"f^3": 1.0, "x*dx": 1.0, "dxx": 1.0}
    raise UserError(f"unknown operator {op!r}")


def extract_phase_terms(model: QkanoModel, n_samples: int = 201,
                        prune: float = 5e-5) -> dict:
    """Monomial readout of the learned phase symbol (and activation edges, if any)."""
    out: dict = {"const": 0.0}
    for name, edge in model.phase_symbol.edge_items():
        fit = _edge_fit(edge, n_samples, 0.0)
        for k in range(5):
            c = float(np.real(fit.coefficients[MONOMIAL_KEYS[k]]))
            if k == 0:
                out["const"] += c
            elif name == "x":
                out[f"x^{k}" if k > 1 else "x"] = out.get(f"x^{k}" if k > 1 else "x", 0.0) + c
            elif name == "xi":
                out[f"xi^{k}" if k > 1 else "xi"] = c
            elif name == "x*xi":
                out[f"(x*xi)^{k}" if k > 1 else "x*xi"] = c
            elif name == "|psi|":
                out[f"|psi|^{k}" if k > 1 else "|psi|"] = c
    if model.activation is not None:
        for name, edge in (("act.|z|", model.act_mag), ("act.angle", model.act_arg)):
            fit = _edge_fit(edge, n_samples, 0.0)
            for k in range(1, 5):
                c = float(np.real(fit.coefficients[MONOMIAL_KEYS[k]]))
                out[f"{name}^{k}" if k > 1 else name] = c
    return {k: v for k, v in out.items() if abs(v) >= prune}


def ground_truth_phase_terms(hamiltonian: str) -> dict:
    # w(x) = x^4 - (x - 1/32)^2 + 0.295 expanded over monomials
    base = {"x^4": 1.0, "x^2": -1.0, "x": 1.0 / 16.0,
            "const": 0.295 - 1.0 / 1024.0, "xi^2": 0.5}
    if hamiltonian == "DW":
        return base
    if hamiltonian == "NLSE":
        return {**base, "|psi|^2": 1.0}
    raise UserError(f"unknown hamiltonian {hamiltonian!r}")
