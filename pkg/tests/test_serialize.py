import numpy as np
import pytest

from kanolab.datagen import build_dataset
from kanolab.errors import UserError
from kanolab.fno import FnoNet
from kanolab.kan import PolyEdge
from kanolab.kano import QkanoModel, synthetic_kano
from kanolab.quantumsim import make_trajectories
from kanolab.serialize import (
    dataset_to_csv, load_checkpoint, load_dataset, load_trajectories,
    save_checkpoint, save_dataset, save_trajectories,
)
from kanolab.spectral import PeriodicGrid
from kanolab.train import freeze_symbolic

GRID = PeriodicGrid(n=32, length=2 * np.pi)
QGRID = PeriodicGrid(n=32, length=4.0)


def test_dataset_roundtrip_and_digest(tmp_path):
    ds = build_dataset("G2", "A", count=10, seed=4, grid=GRID)
    path = tmp_path / "data.knd"
    digest = save_dataset(ds, path)
    back = load_dataset(path)
    assert back.digest() == digest
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.targets, ds.targets)
    assert back.families == ds.families
    assert back.grid == ds.grid


def test_dataset_rejects_corruption(tmp_path):
    ds = build_dataset("G1", "A", count=4, seed=5, grid=GRID)
    path = tmp_path / "data.knd"
    save_dataset(ds, path)
    blob = bytearray(path.read_bytes())
    blob[-9] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(UserError, match="digest"):
        load_dataset(path)


def test_dataset_csv_export(tmp_path):
    ds = build_dataset("G1", "A", count=3, seed=6, grid=GRID)
    out = tmp_path / "data.csv"
    dataset_to_csv(ds, out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 * ds.count


def test_trajectory_roundtrip(tmp_path):
    recs = make_trajectories(3, "DW", QGRID, seed=7, dt=1e-5,
                             steps_per_snapshot=10, snapshots=4)
    path = tmp_path / "traj.knt"
    save_trajectories(recs, path)
    back = load_trajectories(path)
    assert len(back) == 3
    for a, b in zip(recs, back):
        assert b.hamiltonian == "DW"
        assert b.protocol == a.protocol
        # stored as complex64/float32: roundtrip matches at that precision
        np.testing.assert_allclose(b.psis, a.psis, atol=1e-6)
        np.testing.assert_allclose(b.pos_pmf, a.pos_pmf, atol=1e-7)


def test_fno_checkpoint_roundtrip(tmp_path):
    model = FnoNet(GRID, width=3, n_layers=2, activation="tanh", seed=8)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, GRID.n))
    before = model.predict(a)
    path = tmp_path / "fno.knc"
    save_checkpoint(model, path, extra={"note": "test"})
    back, header = load_checkpoint(path)
    assert header["kind"] == "fno"
    np.testing.assert_array_equal(back.predict(a), before)


def test_kano_checkpoint_roundtrip_spline_and_frozen(tmp_path):
    model = synthetic_kano(GRID, -5.0, 5.0, seed=9)
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, GRID.n))
    a /= np.abs(a).max()
    before = model.predict(a)
    path = tmp_path / "kano.knc"
    save_checkpoint(model, path)
    back, _ = load_checkpoint(path)
    np.testing.assert_array_equal(back.predict(a), before)

    # frozen form roundtrips through PolyEdge descriptors
    layer = model.layers[0]
    for ch in ("x", "xi", "x*xi"):
        lo, hi = layer.symbol.edges[ch].domain
        layer.symbol.edges[ch] = PolyEdge((1, 2), [0.5, 0.25], lo, hi)
    frozen_pred = model.predict(a)
    path2 = tmp_path / "kano_frozen.knc"
    save_checkpoint(model, path2)
    back2, _ = load_checkpoint(path2)
    np.testing.assert_array_equal(back2.predict(a), frozen_pred)


def test_qkano_checkpoint_roundtrip(tmp_path):
    model = QkanoModel(QGRID, dt_macro=1e-3, state_dependent=True,
                       use_activation=True, seed=10)
    from kanolab.quantumsim import initial_state
    psi = initial_state("gaussian_packet", QGRID, seed=2).values[None, :]
    before = model.predict_rollout(psi, steps=2)
    path = tmp_path / "qkano.knc"
    save_checkpoint(model, path)
    back, _ = load_checkpoint(path)
    np.testing.assert_array_equal(back.predict_rollout(psi, steps=2), before)
