import numpy as np
import pytest

from kanolab.datagen import (
    GROUP_A, GROUP_B, apply_ground_truth, build_dataset, envelope,
    interpolation_dataset, sample_function,
)
from kanolab.spectral import Field, PeriodicGrid

GRID = PeriodicGrid(n=128, length=2 * np.pi)


def test_envelope_piecewise_values():
    assert envelope(0.0) == 1.0
    assert envelope(np.pi) == 0.0
    assert abs(envelope(11 * np.pi / 12) - 0.25) < 1e-14
    assert envelope(-11 * np.pi / 12) == envelope(11 * np.pi / 12)


def test_envelope_rescales_to_other_boxes():
    assert envelope(2.0, half_width=2.0) == 0.0
    assert envelope(1.0, half_width=2.0) == 1.0
    assert abs(envelope(11.0 / 6.0, half_width=2.0) - 0.25) < 1e-14


def test_sinc_pulse_removable_singularity():
    f = sample_function("sinc_pulse", GRID, seed=3)
    j0 = GRID.n // 2  # x = 0 exactly
    assert GRID.points[j0] == 0.0
    assert abs(f.values[j0] - 1.0) < 1e-12


@pytest.mark.parametrize("family", GROUP_A + GROUP_B)
def test_samples_are_max_normalized_and_tapered(family):
    f = sample_function(family, GRID, seed=11, index=5)
    assert abs(np.abs(f.values).max() - 1.0) < 1e-12
    assert f.values[0] == 0.0  # x = -pi sits under the envelope zero


def test_fixed_seed_reproduces_bit_identical_fields():
    a = sample_function("wave_packet", GRID, seed=7, index=2)
    b = sample_function("wave_packet", GRID, seed=7, index=2)
    assert np.array_equal(a.values, b.values)
    c = sample_function("wave_packet", GRID, seed=8, index=2)
    assert not np.array_equal(a.values, c.values)


def test_g1_on_plain_sine_matches_closed_form():
    x = GRID.points
    f = Field(GRID, np.sin(x))
    out = apply_ground_truth("G1", f)
    expected = x**2 * np.sin(x) + np.sin(x)
    assert np.abs(out.values - expected).max() < 1e-9


def test_g2_on_constant_vanishes():
    out = apply_ground_truth("G2", Field(GRID, np.ones(GRID.n)))
    assert np.abs(out.values).max() < 1e-12


def test_g3_on_zero_vanishes():
    out = apply_ground_truth("G3", Field(GRID, np.zeros(GRID.n)))
    assert np.abs(out.values).max() == 0.0


def test_g1_g2_linear_g3_not():
    rng = np.random.default_rng(0)
    f = sample_function("periodic", GRID, seed=1)
    g = sample_function("sine_beats", GRID, seed=2)
    a, b = 1.3, -0.7
    combo = Field(GRID, a * f.values + b * g.values)
    for op in ("G1", "G2"):
        lhs = apply_ground_truth(op, combo).values
        rhs = a * apply_ground_truth(op, f).values + b * apply_ground_truth(op, g).values
        scale = max(1.0, np.abs(rhs).max())
        assert np.abs(lhs - rhs).max() <= 1e-10 * scale
    lhs = apply_ground_truth("G3", combo).values
    rhs = a * apply_ground_truth("G3", f).values + b * apply_ground_truth("G3", g).values
    assert np.abs(lhs - rhs).max() > 1e-3  # cubic term breaks additivity


def test_dataset_family_histogram_and_digest():
    ds = build_dataset("G1", "A", count=300, seed=5, grid=GRID)
    counts = {fam: ds.families.count(fam) for fam in GROUP_A}
    # binomial(300, 1/3): sigma = sqrt(300 * 2/9) ~ 8.2
    for fam, c in counts.items():
        assert abs(c - 100) <= 3 * np.sqrt(300 * (1 / 3) * (2 / 3)), (fam, c)
    ds2 = build_dataset("G1", "A", count=300, seed=5, grid=GRID)
    assert ds.digest() == ds2.digest()
    assert build_dataset("G1", "A", count=300, seed=6, grid=GRID).digest() != ds.digest()


def test_group_b_only_contains_b_families():
    ds = build_dataset("G2", "B", count=40, seed=9, grid=GRID)
    assert set(ds.families) <= set(GROUP_B)


def test_targets_recomputable_from_inputs():
    ds = build_dataset("G3", "A", count=8, seed=13, grid=GRID)
    for pair in ds.pairs():
        again = apply_ground_truth("G3", pair.inp)
        assert np.array_equal(again.values, pair.target.values)


def test_interpolation_endpoints_and_linearity():
    fA = sample_function("periodic", GRID, seed=21)
    fB = sample_function("sinc_pulse", GRID, seed=22)
    ts, inputs, targets = interpolation_dataset(fA, fB, "G2", steps=100)
    assert ts[0] == 0.0 and ts[-1] == 1.0 and len(ts) == 100
    assert np.array_equal(inputs[0], fA.values)
    assert np.array_equal(inputs[-1], fB.values)
    tgt_A = apply_ground_truth("G2", fA).values
    tgt_B = apply_ground_truth("G2", fB).values
    for i in (0, 37, 99):
        t = ts[i]
        expected = (1 - t) * tgt_A + t * tgt_B
        scale = max(1.0, np.abs(expected).max())
        assert np.abs(targets[i] - expected).max() <= 1e-10 * scale
