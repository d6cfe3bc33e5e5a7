"""Clamped uniform B-spline bases via the Cox-de Boor recursion.

Shared by the autodiff b-spline primitive and the spline-edge layers.
All arrays are float64; coefficients may be complex downstream (the
design matrix itself is always real).
"""
from __future__ import annotations

import numpy as np


def knot_vector(t_lo: float, t_hi: float, grid: int, degree: int) -> np.ndarray:
    """Clamped knot vector: `grid` uniform intervals on [t_lo, t_hi].

    Yields ``grid + degree`` basis functions.
    """
    if not t_lo < t_hi:
        raise ValueError(f"degenerate spline domain [{t_lo}, {t_hi}]")
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    interior = np.linspace(t_lo, t_hi, grid + 1)
    return np.concatenate([np.full(degree, t_lo), interior, np.full(degree, t_hi)])


def basis_matrix(knots: np.ndarray, degree: int, t: np.ndarray):
    """Evaluate all B-spline basis functions and their first derivatives.

    Returns (B, dB), each of shape (t.size, n_basis). `t` must lie inside
    the knot span; extrapolation is handled by `design_matrix`.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    n_basis = len(knots) - degree - 1
    B = np.zeros((t.size, len(knots) - 1))
    for i in range(len(knots) - 1):
        if knots[i] < knots[i + 1]:
            B[:, i] = (t >= knots[i]) & (t < knots[i + 1])
    # right-continuity at the top knot so the last interval is closed
    hi = knots[-1]
    top = np.searchsorted(knots, hi, side="left") - 1
    B[t == hi, top] = 1.0

    B_prev = B if degree == 1 else None
    for d in range(1, degree + 1):
        nxt = np.zeros((t.size, len(knots) - 1 - d))
        for i in range(len(knots) - 1 - d):
            den1 = knots[i + d] - knots[i]
            den2 = knots[i + d + 1] - knots[i + 1]
            if den1 > 0:
                nxt[:, i] += (t - knots[i]) / den1 * B[:, i]
            if den2 > 0:
                nxt[:, i] += (knots[i + d + 1] - t) / den2 * B[:, i + 1]
        B = nxt
        if d == degree - 1:
            B_prev = B

    dB = np.zeros((t.size, n_basis))
    for i in range(n_basis):
        den1 = knots[i + degree] - knots[i]
        den2 = knots[i + degree + 1] - knots[i + 1]
        col = np.zeros(t.size)
        if den1 > 0:
            col += degree / den1 * B_prev[:, i]
        if den2 > 0:
            col -= degree / den2 * B_prev[:, i + 1]
        dB[:, i] = col
    return B, dB


def design_matrix(knots: np.ndarray, degree: int, t: np.ndarray):
    """Basis design matrix with linear extrapolation outside the knot span.

    For t outside [t_lo, t_hi] the row is B(t_c) + (t - t_c) * B'(t_c) with
    t_c the clipped point, so values continue with the boundary slope and
    stay exactly linear in the coefficients. Returns (D, dD) where dD gives
    d(value)/dt rows (constant outside the domain).
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    lo, hi = knots[0], knots[-1]
    tc = np.clip(t, lo, hi)
    B, dB = basis_matrix(knots, degree, tc)
    D = B + (t - tc)[:, None] * dB
    return D, dB
