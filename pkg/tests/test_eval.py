import numpy as np
import pytest

from kanolab.datagen import build_dataset
from kanolab.errors import UserError
from kanolab.eval import (
    MatrixDemo, fidelity, infidelity_curve, interpolation_test, loss_test,
    matrix_demo, symbolic_compare, tail_probe, toeplitz_apply_check,
    toeplitz_coefficient,
)
from kanolab.kan import PolyEdge
from kanolab.kano import QkanoModel
from kanolab.quantumsim import initial_state, make_trajectories
from kanolab.spectral import Field, PeriodicGrid, idft_values

GRID = PeriodicGrid(n=64, length=2 * np.pi)
QGRID = PeriodicGrid(n=64, length=4.0)


class PerfectModel:
    """Oracle-backed stand-in: applies the ground-truth operator."""

    def __init__(self, op, grid):
        self.op, self.grid = op, grid

    def predict(self, values):
        from kanolab.datagen import apply_ground_truth
        out = np.stack([apply_ground_truth(self.op, Field(self.grid, v)).values
                        for v in np.atleast_2d(values)])
        return out if values.ndim == 2 else out[0]


class ZeroModel:
    def __init__(self, grid):
        self.grid = grid

    def predict(self, values):
        return np.zeros_like(np.atleast_2d(values))


def test_loss_test_perfect_model_is_zero():
    a = build_dataset("G1", "A", count=12, seed=1, grid=GRID)
    b = build_dataset("G1", "B", count=12, seed=2, grid=GRID)
    la, lb = loss_test(PerfectModel("G1", GRID), a, b)
    assert la < 1e-10 and lb < 1e-10


def test_loss_test_zero_model_is_one():
    a = build_dataset("G2", "A", count=8, seed=3, grid=GRID)
    b = build_dataset("G2", "B", count=8, seed=4, grid=GRID)
    la, lb = loss_test(ZeroModel(GRID), a, b)
    assert abs(la - 1.0) < 1e-12 and abs(lb - 1.0) < 1e-12


def test_interpolation_perfect_model_flat_and_zero_model_flat_one():
    # a perfect model has ~zero loss everywhere: ratios are 0/number = 0
    ts, ratios = interpolation_test(PerfectModel("G2", GRID), "G2", GRID,
                                    group_a_mean=1.0, seed=5, steps=20, n_pairs=4)
    assert len(ts) == 20
    assert np.abs(ratios).max() < 1e-9
    # the zero model has loss exactly 1 for every sample: flat curve of 1s
    ts, ratios = interpolation_test(ZeroModel(GRID), "G2", GRID,
                                    group_a_mean=1.0, seed=5, steps=20, n_pairs=4)
    assert np.abs(ratios - 1.0).max() < 1e-12


def test_fidelity_identity_phase_and_orthogonal():
    psi = initial_state("gaussian_packet", QGRID, seed=1,
                        params={"center": 0.0, "sigma": 0.2}).values
    assert abs(fidelity(psi, psi, QGRID) - 1.0) < 1e-14
    assert abs(fidelity(psi, np.exp(0.7j) * psi, QGRID) - 1.0) < 1e-14
    x = QGRID.points
    odd = psi * np.sign(x)  # odd function (zero at x=0) is orthogonal to the even packet
    odd /= np.sqrt(np.sum(np.abs(odd) ** 2) * QGRID.spacing)
    assert fidelity(psi, odd, QGRID) < 1e-12


def test_fidelity_symmetry():
    a = initial_state("gaussian_packet", QGRID, seed=2).values
    b = initial_state("gaussian_hermite", QGRID, seed=3).values
    assert abs(fidelity(a, b, QGRID) - fidelity(b, a, QGRID)) < 1e-14


def test_fidelity_rejects_norm_violation():
    psi = initial_state("gaussian_packet", QGRID, seed=4).values
    with pytest.raises(UserError, match="norm deviates"):
        fidelity(1.1 * psi, psi, QGRID)


def test_infidelity_curve_exact_propagator_stays_tiny():
    records = make_trajectories(2, "DW", QGRID, seed=7, dt=1e-6,
                                steps_per_snapshot=100, snapshots=5)
    model = QkanoModel(QGRID, dt_macro=1e-4, seed=1)
    lo, hi = model.phase_symbol.edges["x"].domain
    model.phase_symbol.edges["x"] = PolyEdge((0, 1, 2, 4),
                                             [0.295 - 1 / 1024, 1 / 16, -1.0, 1.0], lo, hi)
    lo, hi = model.phase_symbol.edges["xi"].domain
    model.phase_symbol.edges["xi"] = PolyEdge((2,), [0.5], lo, hi)
    lo, hi = model.phase_symbol.edges["x*xi"].domain
    model.phase_symbol.edges["x*xi"] = PolyEdge((1,), [0.0], lo, hi)
    steps, curve = infidelity_curve(model, records, steps=5)
    assert curve[0] == 0.0
    assert curve.max() < 1e-6


def _band_limited_coeffs(rng, grid, n0, zero_sum=False):
    coeffs = np.zeros(grid.n, dtype=complex)
    idx = grid.modes.indices
    sel = np.abs(idx) <= n0
    coeffs[sel] = rng.normal(size=sel.sum()) + 1j * rng.normal(size=sel.sum())
    if zero_sum:
        coeffs[idx == 0] -= coeffs[sel].sum()
        # boost the first moment so the next-order term dominates the window
        boost = 8.0 * np.abs(coeffs).sum()
        coeffs[idx == 1] += boost
        coeffs[idx == -1] -= boost
    else:
        coeffs[idx == 0] += 6.0 * np.abs(coeffs).sum()
    return coeffs


def test_tail_probe_slope_minus_one_for_nonzero_sum():
    grid = PeriodicGrid(n=128, length=2 * np.pi)
    rng = np.random.default_rng(11)
    for _ in range(5):
        coeffs = _band_limited_coeffs(rng, grid, n0=8)
        u = Field(grid, idft_values(coeffs, grid))
        res = tail_probe(u, power=1)
        assert res.has_tail
        assert abs(res.slope + 1.0) <= 0.2, res.slope


def test_tail_probe_slope_minus_two_for_moment_cancelled():
    grid = PeriodicGrid(n=128, length=2 * np.pi)
    rng = np.random.default_rng(13)
    for _ in range(5):
        coeffs = _band_limited_coeffs(rng, grid, n0=8, zero_sum=True)
        u = Field(grid, idft_values(coeffs, grid))
        res = tail_probe(u, power=1)
        assert res.has_tail
        assert abs(res.slope + 2.0) <= 0.3, res.slope


def test_tail_probe_no_multiplication_reports_no_tail():
    grid = PeriodicGrid(n=128, length=2 * np.pi)
    rng = np.random.default_rng(17)
    coeffs = _band_limited_coeffs(rng, grid, n0=10)
    u = Field(grid, idft_values(coeffs, grid))
    big = PeriodicGrid(grid.n * 8, grid.length)

    # bypass the coordinate factor: the band-limited field itself has no tail
    pad_coeffs = np.zeros(big.n, dtype=complex)
    for pos, m in enumerate(grid.modes.indices):
        pad_coeffs[big.modes.indices == m] = coeffs[pos]
    v_hat = np.abs(pad_coeffs)
    window = (np.abs(big.modes.indices) > 10) & (np.abs(big.modes.indices) < grid.n // 4)
    assert v_hat[window].max() < 1e-13


def test_tail_probe_amplitude_invariance():
    grid = PeriodicGrid(n=128, length=2 * np.pi)
    rng = np.random.default_rng(19)
    coeffs = _band_limited_coeffs(rng, grid, n0=9)
    u = Field(grid, idft_values(coeffs, grid))
    s1 = tail_probe(u, power=1).slope
    s2 = tail_probe(Field(grid, 37.5 * u.values), power=1).slope
    assert abs(s1 - s2) < 1e-9


def test_tail_probe_rejects_wide_band():
    grid = PeriodicGrid(n=64, length=2 * np.pi)
    rng = np.random.default_rng(23)
    coeffs = _band_limited_coeffs(rng, grid, n0=20)
    u = Field(grid, idft_values(coeffs, grid))
    with pytest.raises(UserError, match="band"):
        tail_probe(u, power=1)


def test_matrix_demo_structure():
    demo = matrix_demo(16)
    assert demo.shift_nonzero_count == 14  # n - 2
    assert demo.toeplitz_density == 1.0
    assert abs(demo.toeplitz[0, 0] - 4 * np.pi**2 / 3) < 1e-14
    assert abs(demo.toeplitz[3, 1] - (2 / 4 + 2j * np.pi / 2)) < 1e-14


def test_toeplitz_c1_matches_quadrature():
    theta = np.linspace(0, 2 * np.pi, 2_000_001)
    integrand = theta**2 * np.exp(-1j * theta)
    c1 = np.trapezoid(integrand, theta) / (2 * np.pi)
    assert abs(toeplitz_coefficient(1) - c1) < 1e-10


def test_toeplitz_apply_matches_padded_grid_transform():
    n = 16
    rng = np.random.default_rng(29)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    demo = matrix_demo(n)
    direct = demo.toeplitz @ v
    oracle = toeplitz_apply_check(v)
    assert np.abs(direct - oracle).max() <= 1e-8 * max(1.0, np.abs(direct).max())


def test_symbolic_compare_basics():
    diffs, worst = symbolic_compare({"x^2*f": 1.0, "dxx": -1.0},
                                    {"x^2*f": 1.0, "dxx": -1.0})
    assert worst == 0.0
    learned = {"x^2*f": 1.0, "dxx": -1.0, "f": 0.0003}
    diffs, worst = symbolic_compare(learned, {"x^2*f": 1.0, "dxx": -1.0})
    assert abs(worst - 0.0003) < 1e-15
    learned = {"x^4": 1.0004, "x^3": 0.0001, "x^2": -1.0013}
    truth = {"x^4": 1.0, "x^2": -1.0}
    diffs, worst = symbolic_compare(learned, truth)
    assert abs(worst - 0.0013) < 1e-12
