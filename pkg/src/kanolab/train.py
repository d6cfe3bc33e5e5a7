"""Losses, Adam optimization, supervision modes, and the freeze-and-refine
procedure that turns a trained spline model into its closed symbolic form.

Training is full-batch and deterministic for a fixed config: the only
randomness is parameter initialization, which the model seeds control.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .datagen import Dataset
from .errors import NumericsError, UserError
from .fno import FnoNet
from .kan import PolyEdge, fit_symbolic, sample_edge
from .kano import KanoNet, QkanoModel, dft_t

SUPERVISION_MODES = ("full", "pos", "pos&mom")


@dataclass
class TrainConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 1000
    batch_size: int | None = None    # None = full batch
    supervision: str = "full"
    seed: int = 0
    symbolic_freeze: bool = False
    rollout_steps: int = 10
    lr_floor_fraction: float = 0.1   # cosine decay target
    log_every: int = 50

    def to_json(self) -> dict:
        return asdict(self)


# -- losses -----------------------------------------------------------------------

def rel_l2_loss(prediction, target) -> dc.Tensor:
    """||prediction - target||_2 / ||target||_2 over the last axis, averaged
    across any leading batch axes."""
    pred = dc.as_tensor(prediction)
    tgt = np.asarray(target)
    den = np.linalg.norm(tgt, axis=-1)
    if np.any(den == 0):
        raise UserError("relative l2 loss is undefined for a zero-norm target")
    if pred.is_complex or np.iscomplexobj(tgt):
        tgt = tgt.astype(np.complex128)
    diff = dc.sub(pred, dc.Tensor(tgt))
    mag2 = dc.power(dc.absval(diff), 2.0) if diff.is_complex else dc.power(diff, 2.0)
    num = dc.sqrt(dc.tsum(mag2, axis=-1))
    ratio = dc.div(num, dc.Tensor(den))
    return dc.tmean(ratio) if ratio.data.ndim else ratio


def kl_loss(observed: np.ndarray, model_pmf, floor: float = 1e-12) -> dc.Tensor:
    """D_KL(observed || model) with the model PMF floored before the log.

    `observed` is data (no gradient); 0 log 0 terms contribute zero. Averaged
    across leading batch axes.
    """
    p = np.asarray(observed, dtype=np.float64)
    if np.any(p < 0):
        raise UserError("observed PMF has negative mass")
    q = dc.as_tensor(model_pmf)
    if np.any(q.data < 0):
        raise UserError("model PMF has negative mass")
    entropy = np.sum(np.where(p > 0, p * np.log(np.maximum(p, floor)), 0.0), axis=-1)
    q_floored = dc.clamp_min(q, floor)
    cross = dc.tsum(dc.mul(dc.Tensor(p), dc.log(q_floored)), axis=-1)
    out = dc.sub(dc.Tensor(entropy), cross)
    return dc.tmean(out) if out.data.ndim else out


# -- Adam --------------------------------------------------------------------------

class AdamState:
    def __init__(self, params):
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros(p.data.shape) for p in params]


def adam_step(params, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; complex parameters use |g|^2 moments."""
    state.t += 1
    t = state.t
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * np.abs(g) ** 2
        m_hat = state.m[i] / (1 - beta1**t)
        v_hat = state.v[i] / (1 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def _lr_at(config: TrainConfig, epoch: int) -> float:
    lo = config.lr * config.lr_floor_fraction
    cos = 0.5 * (1.0 + np.cos(np.pi * epoch / max(1, config.epochs - 1)))
    return lo + (config.lr - lo) * cos


# -- training loops ------------------------------------------------------------------

def _check_finite(value: float, epoch: int):
    if not np.isfinite(value):
        raise NumericsError(f"loss became non-finite at epoch {epoch}")


def train_operator_model(model, dataset: Dataset, config: TrainConfig):
    """Training on (input, target) pairs with mean relative l2 loss.

    Runs full-batch when `batch_size` is unset; otherwise takes one Adam step
    per minibatch with a deterministic seeded shuffle each epoch.
    """
    params = model.parameters()
    state = AdamState(params)
    inputs, targets = dataset.inputs, dataset.targets
    count = inputs.shape[0]
    bs = config.batch_size or count
    shuffle_rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        tic = time.perf_counter()
        lr = _lr_at(config, epoch)
        order = shuffle_rng.permutation(count) if bs < count else np.arange(count)
        epoch_loss = 0.0
        for start in range(0, count, bs):
            pick = order[start : start + bs]
            dc.zero_grads(params)
            loss = rel_l2_loss(model.forward(dc.Tensor(inputs[pick])), targets[pick])
            val = float(loss.item())
            _check_finite(val, epoch)
            dc.backward(loss)
            adam_step(params, state, lr, config.beta1, config.beta2, config.eps)
            epoch_loss += val * len(pick)
        history.append({"epoch": epoch, "loss": epoch_loss / count,
                        "wall_ms": 1e3 * (time.perf_counter() - tic)})
    return history


def _momentum_pmf_t(psi: dc.Tensor, grid) -> dc.Tensor:
    coeffs = dft_t(psi, grid)
    raw = dc.power(dc.absval(coeffs), 2.0)
    return dc.div(raw, dc.tsum(raw, axis=-1, keepdims=True))


def _position_pmf_t(psi: dc.Tensor) -> dc.Tensor:
    raw = dc.power(dc.absval(psi), 2.0)
    return dc.div(raw, dc.tsum(raw, axis=-1, keepdims=True))


def rollout_loss(model, psi0: np.ndarray, records, config: TrainConfig) -> dc.Tensor:
    """Supervision over the first `rollout_steps` macro steps of each trajectory."""
    if config.supervision not in SUPERVISION_MODES:
        raise UserError(f"supervision must be one of {SUPERVISION_MODES}")
    steps = config.rollout_steps
    psi_t = np.stack([r.psis[1 : steps + 1] for r in records])      # (b, T, n)
    pos_t = np.stack([r.pos_pmf[1 : steps + 1] for r in records])
    mom_t = np.stack([r.mom_pmf[1 : steps + 1] for r in records])
    states = _unroll(model, psi0, steps)
    total = None
    for t, psi in enumerate(states):
        if config.supervision == "full":
            term = rel_l2_loss(psi, psi_t[:, t])
        else:
            term = kl_loss(pos_t[:, t], _position_pmf_t(psi))
            if config.supervision == "pos&mom":
                term = dc.add(term, kl_loss(mom_t[:, t], _momentum_pmf_t(psi, model.grid)))
        total = term if total is None else dc.add(total, term)
    return dc.mul(total, 1.0 / steps)


def _unroll(model, psi0: np.ndarray, steps: int):
    if isinstance(model, QkanoModel):
        return model.rollout(dc.Tensor(psi0), steps)
    # FNO propagator: two real channels (re, im), renormalized between steps
    grid = model.grid
    states = []
    psi = dc.Tensor(np.stack([psi0.real, psi0.imag], axis=1))  # (b, 2, n)
    for _ in range(steps):
        out = model.forward(psi)
        re = dc.gather(out, [0], axis=1)
        im = dc.gather(out, [1], axis=1)
        z = dc.complex_pack(dc.reshape(re, (out.data.shape[0], out.data.shape[2])),
                            dc.reshape(im, (out.data.shape[0], out.data.shape[2])))
        norm2 = dc.tsum(dc.power(dc.absval(z), 2.0), axis=-1, keepdims=True)
        z = dc.div(z, dc.sqrt(dc.mul(norm2, grid.spacing)))
        states.append(z)
        psi = dc.concat([dc.reshape(dc.real(z), (z.data.shape[0], 1, grid.n)),
                         dc.reshape(dc.imag(z), (z.data.shape[0], 1, grid.n))], axis=1)
    return states


def train_propagator(model, records, config: TrainConfig):
    """Unrolled training of a quantum propagator on trajectory records."""
    params = model.parameters()
    state = AdamState(params)
    psi0 = np.stack([r.psis[0] for r in records])
    history = []
    for epoch in range(config.epochs):
        tic = time.perf_counter()
        dc.zero_grads(params)
        loss = rollout_loss(model, psi0, records, config)
        val = float(loss.item())
        _check_finite(val, epoch)
        dc.backward(loss)
        adam_step(params, state, _lr_at(config, epoch), config.beta1,
                  config.beta2, config.eps)
        history.append({"epoch": epoch, "loss": val,
                        "wall_ms": 1e3 * (time.perf_counter() - tic)})
    return history


def train(model, data, config: TrainConfig):
    """Dispatch on data kind: Dataset -> operator regression, records -> rollout."""
    if isinstance(data, Dataset):
        return train_operator_model(model, data, config)
    return train_propagator(model, data, config)


def train_cascade(model, data, config: TrainConfig, stages):
    """Consecutive annealed runs at geometrically decreasing learning rates.

    Adam's second-moment memory (~1/(1-beta2) epochs) must re-adapt after each
    rate drop, so several medium runs anneal far deeper than one long cosine.
    `stages` is a list of (lr, epochs); other settings come from `config`.
    """
    from dataclasses import replace

    history = []
    for lr, epochs in stages:
        history.extend(train(model, data, replace(config, lr=lr, epochs=epochs)))
    return history


# -- freeze and refine ------------------------------------------------------------------

def _freeze_edge(name: str, edge, rel_residual_max: float, zero_scale: float):
    # fit over the edge's observable window: values beyond it multiply inputs
    # the data pipeline zeroes (boundary taper) and are unconstrained noise
    ts, values = edge.sample(201, window=True)
    rms = float(np.sqrt(np.mean(np.abs(values) ** 2)))
    fit = fit_symbolic((ts, values), prune_threshold=5e-5)
    if rms >= zero_scale and fit.residual > rel_residual_max * rms:
        raise UserError(
            f"edge {name!r} is not well described by a quartic form "
            f"(residual {fit.residual:.3e} vs scale {rms:.3e}); freeze blocked")
    degree_of = {"1": 0, "t": 1, "t^2": 2, "t^3": 3, "t^4": 4}
    kept = [(degree_of[k], v) for k, v in fit.coefficients.items() if k not in fit.pruned]
    if not kept:
        kept = [(1, 0.0 * next(iter(fit.coefficients.values())))]
    degrees = [d for d, _ in kept]
    coeffs = np.array([c for _, c in kept])
    frozen = PolyEdge(degrees, coeffs, edge.domain[0], edge.domain[1])
    frozen.fit_window = edge.fit_window
    return frozen


def freeze_symbolic(model, rel_residual_max: float = 0.05):
    """Replace every edge with its fitted closed form (scalar coefficients trainable).

    Raises if an above-scale edge does not fit its quartic basis; tiny edges
    are frozen as-is so refinement can still zero them cleanly.
    """
    if isinstance(model, KanoNet):
        if len(model.layers) != 1:
            raise UserError("freeze is defined for single-layer models")
        layer = model.layers[0]
        items = [(f"symbol.{n}", e) for n, e in layer.symbol.edge_items()]
        items += [(f"act.{n}", e) for n, e in layer.activation.edge_items()]
        scale = max(float(np.sqrt(np.mean(np.abs(e.sample(201, window=True)[1]) ** 2)))
                    for _, e in items)
        for name, edge in items:
            frozen = _freeze_edge(name, edge, rel_residual_max, 1e-2 * scale)
            kind, _, channel = name.partition(".")
            if kind == "symbol":
                layer.symbol.edges[channel] = frozen
            elif channel == "u":
                layer.activation.u_edge = frozen
            else:
                layer.activation.a_edge = frozen
        return model
    if isinstance(model, QkanoModel):
        items = model.edge_items()
        scale = max(float(np.sqrt(np.mean(np.abs(e.sample(201, window=True)[1]) ** 2)))
                    for _, e in items)
        for name, edge in items:
            frozen = _freeze_edge(name, edge, rel_residual_max, 1e-2 * scale)
            if name.startswith("symbol."):
                model.phase_symbol.edges[name.split(".", 1)[1]] = frozen
            elif name == "act.|z|":
                model.act_mag = frozen
            else:
                model.act_arg = frozen
        if model.activation is not None:
            model.activation = (model.act_mag, model.act_arg)
        return model
    if isinstance(model, FnoNet):
        raise UserError("an FNO checkpoint is not symbolically extractable")
    raise UserError(f"cannot freeze model of type {type(model).__name__}")


def freeze_and_refine(model, data, config: TrainConfig,
                      rel_residual_max: float = 0.05):
    """Freeze fitted symbols, then continue training only the scalar coefficients."""
    freeze_symbolic(model, rel_residual_max=rel_residual_max)
    history = train(model, data, config)
    return model, history


def write_metrics(path, history):
    with open(path, "w") as fh:
        for record in history:
            fh.write(json.dumps(record) + "\n")
