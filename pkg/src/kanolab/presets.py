"""Scale presets: `paper` matches the benchmark protocol sizes, `desk` fits a
laptop-core budget, `ci` is a smoke-test scale. Training stage lists are
(learning rate, epochs) cascades; see train.train_cascade.
"""
from __future__ import annotations

import numpy as np

from .errors import UserError
from .spectral import PeriodicGrid

SYNTH_BENCHMARKS = ("G1", "G2", "G3")
QUANTUM_BENCHMARKS = ("DW", "NLSE")
PROBE_BENCHMARKS = ("tail", "matrix")
MODELS = ("fno", "kano", "kano_symbolic", "qkano", "qkano_symbolic")

SYNTH = {
    "paper": dict(n=128, length=2 * np.pi, train=2000, test=400,
                  fno_width=64, fno_layers=2, fno_batch=32,
                  kano_stages=[(1e-2, 800), (1e-3, 600), (1e-4, 400)],
                  fno_stages=[(2e-3, 300), (5e-4, 150)],
                  refine_stages=[(1e-2, 300), (1e-3, 300), (1e-4, 200)],
                  interp_pairs=64, interp_steps=100),
    "desk": dict(n=64, length=2 * np.pi, train=512, test=128,
                 fno_width=32, fno_layers=2, fno_batch=32,
                 kano_stages=[(1e-2, 600), (1e-3, 400), (1e-4, 300)],
                 fno_stages=[(2e-3, 300), (5e-4, 150)],
                 refine_stages=[(1e-2, 300), (1e-3, 300), (1e-4, 200)],
                 interp_pairs=64, interp_steps=100),
    "ci": dict(n=64, length=2 * np.pi, train=64, test=32,
               fno_width=16, fno_layers=2, fno_batch=16,
               kano_stages=[(1e-2, 150), (1e-3, 100)],
               fno_stages=[(1e-3, 60)],
               refine_stages=[(1e-2, 80), (1e-3, 60)],
               interp_pairs=8, interp_steps=25),
}

QUANTUM = {
    "paper": dict(n=128, length=4.0, trajectories=200, dt=1e-6,
                  steps_per_snapshot=100, snapshots=100, train_steps=10,
                  qkano_stages=[(1e-2, 1200), (1e-3, 800), (1e-4, 400)],
                  fno_stages=[(1e-3, 250), (3e-4, 100)],
                  refine_stages=[(1e-2, 400), (1e-3, 300)],
                  fno_width=32, fno_layers=2),
    "desk": dict(n=64, length=4.0, trajectories=16, dt=1e-6,
                 steps_per_snapshot=100, snapshots=100, train_steps=10,
                 qkano_stages=[(1e-2, 1000), (1e-3, 600), (1e-4, 300)],
                 fno_stages=[(1e-3, 250), (3e-4, 100)],
                 refine_stages=[(1e-2, 400), (1e-3, 300)],
                 fno_width=32, fno_layers=2),
    "ci": dict(n=64, length=4.0, trajectories=4, dt=1e-5,
               steps_per_snapshot=100, snapshots=20, train_steps=10,
               qkano_stages=[(1e-2, 200), (1e-3, 100)],
               fno_stages=[(1e-3, 60)],
               refine_stages=[(1e-2, 80)],
               fno_width=16, fno_layers=2),
}

TAIL = {
    "paper": dict(n=128, length=2 * np.pi, inputs=20, band=8),
    "desk": dict(n=128, length=2 * np.pi, inputs=20, band=8),
    "ci": dict(n=128, length=2 * np.pi, inputs=5, band=8),
}

MATRIX = {
    "paper": dict(n=64), "desk": dict(n=32), "ci": dict(n=16),
}


def preset_for(benchmark: str, preset: str) -> dict:
    tables = {}
    if benchmark in SYNTH_BENCHMARKS:
        tables = SYNTH
    elif benchmark in QUANTUM_BENCHMARKS:
        tables = QUANTUM
    elif benchmark == "tail":
        tables = TAIL
    elif benchmark == "matrix":
        tables = MATRIX
    else:
        raise UserError(f"unknown benchmark {benchmark!r}")
    if preset not in tables:
        raise UserError(f"unknown preset {preset!r} (choose paper, desk, or ci)")
    return dict(tables[preset])


def grid_for(benchmark: str, preset: str) -> PeriodicGrid:
    p = preset_for(benchmark, preset)
    return PeriodicGrid(p["n"], p["length"])
