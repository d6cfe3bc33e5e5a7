import numpy as np
import pytest

from kanolab import diffcore as dc
from kanolab.bsplines import design_matrix, knot_vector
from kanolab.errors import UserError
from kanolab.kan import (
    KanNet, PolyEdge, SplineEdge, fit_symbolic, kan_forward, sample_edge,
)
from gradcheck import check_grads


def _zero_edge(lo=-1.0, hi=1.0, **kw):
    e = SplineEdge(lo, hi, base="zero", **kw)
    e.coeffs = dc.Tensor(np.zeros_like(e.coeffs.data), requires_grad=True)
    return e


def test_identity_base_with_zero_splines_is_identity():
    e = SplineEdge(-1, 1, base="identity")
    e.coeffs = dc.Tensor(np.zeros_like(e.coeffs.data), requires_grad=True)
    t = np.array([-0.9, -0.2, 0.0, 0.4, 1.0])
    assert np.abs(e.eval_np(t) - t).max() < 1e-15


def test_all_zero_coefficients_give_zero():
    e = _zero_edge()
    t = np.linspace(-2, 2, 11)
    assert np.abs(e.eval_np(t)).max() == 0.0


def test_least_squares_fit_of_square():
    e = _zero_edge()
    ts = np.linspace(-1, 1, 64)
    e.set_from_samples(ts, ts**2)
    assert abs(e.eval_np(np.array([0.5]))[0] - 0.25) < 1e-4


def test_partition_of_unity():
    degree, grid = 3, 10
    knots = knot_vector(-2.0, 3.0, grid, degree)
    t = np.linspace(-2.0, 3.0, 257)
    D, _ = design_matrix(knots, degree, t)
    assert np.abs(D.sum(axis=1) - 1.0).max() < 1e-12


def test_eval_exactly_linear_in_spline_coefficients():
    e = SplineEdge(-1, 1, base="silu", rng=np.random.default_rng(5))
    t = np.linspace(-1.2, 1.2, 17)
    base_only = SplineEdge(-1, 1, base="silu")
    base_only.coeffs = dc.Tensor(np.zeros_like(e.coeffs.data), requires_grad=True)
    base_part = base_only.eval_np(t)
    v1 = e.eval_np(t) - base_part
    e.coeffs = dc.Tensor(2 * e.coeffs.data, requires_grad=True)
    v2 = e.eval_np(t) - base_part
    np.testing.assert_allclose(v2, 2 * v1, rtol=0, atol=1e-14)


def test_edge_rejects_nan():
    e = SplineEdge(-1, 1)
    with pytest.raises(UserError, match="NaN"):
        e.eval(dc.Tensor(np.array([0.1, np.nan])))


def test_kan_forward_zero_edges_zero_vector():
    net = KanNet([2, 1], domains=[[(-1, 1), (-1, 1)]], base="zero")
    for p in net.parameters():
        p.data[...] = 0.0
    out = kan_forward(net, np.array([0.3, -0.8]))
    assert np.abs(out.data).max() == 0.0


def test_kan_forward_fitted_sum_of_squares():
    net = KanNet([2, 1], domains=[[(-1, 1), (-2, 2)]], base="zero", seed=3)
    ts1 = np.linspace(-1, 1, 64)
    ts2 = np.linspace(-2, 2, 64)
    net.layers[0][0][0].set_from_samples(ts1, ts1**2)
    net.layers[0][0][1].set_from_samples(ts2, ts2**2)
    x = np.array([[0.5, -1.0], [0.1, 0.3]])
    out = kan_forward(net, x)
    expected = (x[:, 0] ** 2 + x[:, 1] ** 2)[:, None]
    assert np.abs(out.data - expected).max() < 1e-6


def test_kan_forward_width_mismatch():
    net = KanNet([2, 1], domains=[[(-1, 1), (-1, 1)]])
    with pytest.raises(UserError, match="width"):
        kan_forward(net, np.zeros(3))


def test_kan_gradients_match_finite_differences():
    from gradcheck import numeric_grad

    net = KanNet([2, 2, 1], domains=[[(-1, 1), (-1, 1)], [(-2, 2), (-2, 2)]],
                 base="silu", seed=11)
    x = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
    params = net.parameters()
    arrays = [p.data.copy() for p in params]

    def loss_value(arrs):
        for p, a in zip(params, arrs):
            p.data = np.ascontiguousarray(a)
        return dc.tmean(dc.power(kan_forward(net, dc.Tensor(x)), 2.0)).item()

    dc.zero_grads(params)
    dc.backward(dc.tmean(dc.power(kan_forward(net, dc.Tensor(x)), 2.0)))
    nums = numeric_grad(loss_value, [a.copy() for a in arrays])
    for p, a in zip(params, arrays):  # numeric_grad mutated them; restore
        p.data = a
    for g, ng in zip([p.grad for p in params], nums):
        denom = np.maximum(np.maximum(np.abs(g), np.abs(ng)), 1e-8)
        assert (np.abs(g - ng) / denom).max() < 1e-5


def test_composition_on_width_one_layers():
    outer = SplineEdge(-2, 2, base="zero")
    inner = SplineEdge(-1, 1, base="zero")
    ti = np.linspace(-1, 1, 80)
    inner.set_from_samples(ti, np.sin(2 * ti))
    to = np.linspace(-2, 2, 80)
    outer.set_from_samples(to, to**2)
    net = KanNet([1, 1, 1], domains=[[(-1, 1)], [(-2, 2)]], base="zero")
    net.layers[0][0][0] = inner
    net.layers[1][0][0] = outer
    t = np.linspace(-0.9, 0.9, 33)
    composed = kan_forward(net, t[:, None]).data.ravel()
    direct = outer.eval_np(inner.eval_np(t))
    assert np.abs(composed - direct).max() <= 1e-10


def test_sample_edge_shapes_and_content():
    e = SplineEdge(-1, 1, base="identity")
    e.coeffs = dc.Tensor(np.zeros_like(e.coeffs.data), requires_grad=True)
    t, v = sample_edge(e, 9)
    assert len(t) == len(v) == 9
    assert t[0] == -1.0 and t[-1] == 1.0
    assert np.abs(v - t).max() < 1e-15

    z = _zero_edge()
    _, v0 = sample_edge(z, 5)
    assert np.abs(v0).max() == 0.0


def test_sample_fitted_cubic_edge():
    e = _zero_edge(-1.5, 1.5)
    ts = np.linspace(-1.5, 1.5, 90)
    e.set_from_samples(ts, ts**3)
    t, v = sample_edge(e, 50)
    assert np.abs(v - t**3).max() < 1e-3


def test_fit_symbolic_exact_square():
    t = np.linspace(-1, 1, 41)
    fit = fit_symbolic((t, t**2))
    assert abs(fit.coefficients["t^2"] - 1.0) < 1e-10
    assert fit.residual <= 1e-10
    for name in ("1", "t", "t^3", "t^4"):
        assert name in fit.pruned


def test_fit_symbolic_near_unit_linear():
    t = np.linspace(-2, 2, 101)
    fit = fit_symbolic((t, 0.9996 * t))
    assert abs(fit.coefficients["t"] - 0.9996) < 1e-6


def test_fit_symbolic_cubic_plus_linear():
    t = np.linspace(-1, 1, 64)
    fit = fit_symbolic((t, t**3 + 0.1 * t))
    assert abs(fit.coefficients["t^3"] - 1.0) < 1e-8
    assert abs(fit.coefficients["t"] - 0.1) < 1e-8
    assert abs(fit.coefficients["t^2"]) < 1e-8
    assert abs(fit.coefficients["t^4"]) < 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_fit_symbolic_recovers_random_quartics(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-2, 2, size=5)
    t = np.linspace(-1.5, 1.5, 120)
    v = sum(c[d] * t**d for d in range(5))
    fit = fit_symbolic((t, v), prune_threshold=0.0)
    got = [fit.coefficients[k] for k in ("1", "t", "t^2", "t^3", "t^4")]
    assert np.abs(np.array(got) - c).max() < 1e-8


def test_fit_symbolic_rank_deficiency_named():
    t = np.zeros(10)
    with pytest.raises(UserError, match="degenerate"):
        fit_symbolic((t, t))


def test_fit_symbolic_complex_curve():
    t = np.linspace(-1, 1, 60)
    fit = fit_symbolic((t, 1j * t - 0.5 * t**2))
    assert abs(fit.coefficients["t"] - 1j) < 1e-9
    assert abs(fit.coefficients["t^2"] + 0.5) < 1e-9


def test_poly_edge_eval_and_gradients():
    edge = PolyEdge(degrees=(1, 3), coeffs=[0.5, 2.0], t_lo=-1, t_hi=1)
    t = np.linspace(-1, 1, 7)
    assert np.abs(edge.eval_np(t) - (0.5 * t + 2 * t**3)).max() < 1e-14

    def build(leaves):
        (c,) = leaves
        e = PolyEdge((1, 3), c.data, -1, 1)
        e.coeffs = c
        return dc.tsum(dc.power(e.eval(dc.Tensor(t)), 2.0))

    check_grads(build, [np.array([0.5, 2.0])])


def test_complex_spline_edge_represents_i_t():
    e = SplineEdge(-3, 3, base="zero", complex_coeffs=True)
    ts = np.linspace(-3, 3, 100)
    e.set_from_samples(ts, 1j * ts)
    v = e.eval_np(np.array([-2.5, 0.3, 2.9]))
    assert np.abs(v - 1j * np.array([-2.5, 0.3, 2.9])).max() < 1e-8
