"""Taylor and interpolation farfield bases, rank-revealing QR with the
bounded-coefficient guarantee, interpolative row compression, and truncated
SVD."""

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from smash.cluster import Box
from smash.lowrank import (compr, interp_basis, srrqr, taylor_bases,
                           taylor_coupling, taylor_eta, taylor_tail_bound,
                           truncated_svd)


# ---------------------------------------------------------------------------
# Taylor farfield expansion
# ---------------------------------------------------------------------------

def test_zeroth_scaling_factor_is_one():
    for delta in (0.1, 0.5, 3.0):
        assert taylor_eta(8, delta)[0] == 1.0


def test_zeroth_coupling_coefficient_is_inverse_center_gap():
    ca, cb = 0.5, 2.5
    T = taylor_coupling(ca, 0.5, cb, 0.5, 6)
    assert T[0, 0] == pytest.approx(1.0 / (ca - cb), rel=1e-15)


def test_coupling_table_is_anti_triangular():
    r = 7
    T = taylor_coupling(0.0, 0.5, 3.0, 0.5, r)
    for l in range(r):
        for m in range(r):
            if l + m > r - 1:
                assert T[l, m] == 0.0


def test_taylor_expansion_meets_entrywise_tail_bound():
    # unit intervals two apart give separation ratio 0.5; the truncation
    # error of the degree-r expansion is then (1 + tau) tau^r / (1 - tau)
    # relative to the kernel value
    rng = np.random.default_rng(11)
    box_a, box_b = Box.of((0.0,), (1.0,)), Box.of((2.0,), (3.0,))
    r = 10
    bound = taylor_tail_bound(0.5, r)
    assert bound == pytest.approx(3.0 * 2.0 ** -10)
    xs = rng.random(20)
    ys = 2.0 + rng.random(20)
    U, T, V = taylor_bases(box_a, box_b, xs, ys, r)
    approx = U @ T @ V.T
    exact = 1.0 / (xs[:, None] - ys[None, :])
    relerr = np.max(np.abs(approx - exact) / np.abs(exact))
    assert relerr <= bound


@pytest.mark.parametrize("r", [5, 10, 20])
def test_taylor_bound_holds_on_random_separated_boxes(r):
    rng = np.random.default_rng(r)
    for _ in range(100):
        ca = rng.uniform(-5, 5)
        da = rng.uniform(0.1, 1.0)
        # place b so that da + db = tau * |ca - cb| with tau in (0.3, 0.65)
        db = rng.uniform(0.1, 1.0)
        tau = rng.uniform(0.3, 0.65)
        cb = ca + (da + db) / tau * rng.choice([-1.0, 1.0])
        box_a = Box.of((ca - da,), (ca + da,))
        box_b = Box.of((cb - db,), (cb + db,))
        xs = rng.uniform(ca - da, ca + da, 15)
        ys = rng.uniform(cb - db, cb + db, 15)
        U, T, V = taylor_bases(box_a, box_b, xs, ys, r)
        err = np.max(np.abs(U @ T @ V.T - 1.0 / (xs[:, None] - ys[None, :]))
                     * np.abs(xs[:, None] - ys[None, :]))
        assert err <= taylor_tail_bound(tau, r) * 1.000001


def test_taylor_basis_entries_stay_order_one():
    # the eta scaling keeps basis columns from exploding or vanishing, which
    # is what makes the later interpolative step numerically safe
    box = Box.of((0.0,), (1.0,))
    pts = np.linspace(0.0, 1.0, 50)
    for r in (5, 15, 30):
        U, _, _ = taylor_bases(box, Box.of((3.0,), (4.0,)), pts, pts + 3.0, r)
        mags = np.abs(U)
        assert mags.max() <= 1.5
        assert mags[:, -1].max() > 1e-3


def test_planar_points_use_complex_arithmetic():
    box_a = Box.of((0.0, 0.0), (1.0, 1.0))
    box_b = Box.of((4.0, 4.0), (5.0, 5.0))
    za = np.array([0.2 + 0.3j, 0.8 + 0.1j])
    zb = np.array([4.5 + 4.5j])
    U, T, V = taylor_bases(box_a, box_b, za, zb, 12)
    exact = 1.0 / (za[:, None] - zb[None, :])
    np.testing.assert_allclose(U @ T @ V.T, exact, rtol=1e-8)


# ---------------------------------------------------------------------------
# interpolation basis
# ---------------------------------------------------------------------------

def test_interpolation_rows_sum_to_one():
    box = Box.of((0.0,), (2.0,))
    pts = np.random.default_rng(0).uniform(0, 2, 40).reshape(-1, 1)
    U = interp_basis(box, pts, 9)
    np.testing.assert_allclose(U.sum(axis=1), 1.0, atol=1e-10)


def test_point_on_interpolation_node_gives_unit_row():
    box = Box.of((0.0,), (2.0,))
    probe = interp_basis(box, np.array([[0.5]]), 7)
    # recover the node grid from the cardinality property: evaluating at a
    # node must return a one-hot row
    node_rows = interp_basis(box, np.array([[1.0]]), 7)
    assert probe.shape == (1, 7)
    # rows evaluated exactly on nodes appear when we feed the Chebyshev
    # nodes themselves back in
    from smash.lowrank import _cheb_nodes
    nodes = _cheb_nodes(0.0, 2.0, 7).reshape(-1, 1)
    eye = interp_basis(box, nodes, 7)
    np.testing.assert_allclose(eye, np.eye(7), atol=1e-12)


def test_interpolation_reproduces_low_degree_polynomials():
    box = Box.of((-1.0,), (1.0,))
    r = 8
    from smash.lowrank import _cheb_nodes
    nodes = _cheb_nodes(-1.0, 1.0, r)
    pts = np.linspace(-1, 1, 33).reshape(-1, 1)
    U = interp_basis(box, pts, r)
    # kernel kappa(x, y) = x^(r-1) * y is degree r-1 in x
    y = 0.37
    exact = pts[:, 0] ** (r - 1) * y
    approx = U @ (nodes ** (r - 1) * y)
    np.testing.assert_allclose(approx, exact, atol=1e-12)


def test_planar_interpolation_keeps_r_columns():
    box = Box.of((0.0, 0.0), (1.0, 1.0))
    pts = np.random.default_rng(1).random((10, 2))
    for r in (4, 9, 22):
        assert interp_basis(box, pts, r).shape == (10, r)
    # an untrimmed tensor grid (r a perfect square) is a partition of unity
    U = interp_basis(box, pts, 9)
    np.testing.assert_allclose(U.sum(axis=1), 1.0, atol=1e-10)


# ---------------------------------------------------------------------------
# strong rank-revealing QR
# ---------------------------------------------------------------------------

def test_identity_needs_no_swaps():
    res = srrqr(np.eye(6), k=6)
    assert res.rank == 6
    assert res.R12.shape[1] == 0
    np.testing.assert_array_equal(np.sort(res.perm), np.arange(6))


def test_rank_one_matrix_detected():
    rng = np.random.default_rng(4)
    u, v = rng.random(10), rng.random(10)
    M = np.outer(u, v)
    res = srrqr(M, k=1)
    assert res.rank == 1
    assert np.max(np.abs(res.R22)) <= 1e-12 * np.max(np.abs(M))
    W = sla.solve_triangular(res.R11, res.R12, lower=False)
    assert np.max(np.abs(W)) <= 2.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_interpolation_coefficients_bounded_by_s(seed):
    M = np.random.default_rng(seed).standard_normal((20, 12))
    res = srrqr(M, k=6, s=2.0)
    W = sla.solve_triangular(res.R11, res.R12, lower=False)
    assert np.max(np.abs(W)) <= 2.0 + 1e-12


def test_factorization_reassembles_input():
    rng = np.random.default_rng(9)
    M = rng.standard_normal((15, 10))
    res = srrqr(M)
    R = np.block([[res.R11, res.R12],
                  [np.zeros((res.R22.shape[0], res.rank)), res.R22]])
    Qfull, Rfull = sla.qr(M[:, res.perm], mode="economic")
    np.testing.assert_allclose(np.abs(Rfull), np.abs(R), atol=1e-10)


def test_empty_matrix_handled():
    res = srrqr(np.empty((0, 5)))
    assert res.rank == 0


# ---------------------------------------------------------------------------
# interpolative row compression
# ---------------------------------------------------------------------------

def test_nonsingular_square_keeps_every_row():
    rng = np.random.default_rng(2)
    C = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    ibar = np.array([10, 20, 30, 40, 50])
    f = compr(C, ibar)
    assert f.rank == 5
    assert f.G.shape == (0, 5) or f.G.size == 0
    assert set(f.skel) == set(ibar)
    np.testing.assert_allclose(f.expand() @ C[f.skel_local], C, atol=1e-10)


def test_duplicated_row_collapses_to_single_skeleton():
    v = np.array([[1.0, 2.0, 3.0]])
    C = np.vstack([v, 2 * v])
    f = compr(C, np.array([0, 1]))
    assert f.rank == 1
    assert f.G.shape == (1, 1)
    assert abs(f.G[0, 0]) in (pytest.approx(2.0), pytest.approx(0.5))
    np.testing.assert_allclose(f.expand() @ C[f.skel_local], C, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 8))
def test_exact_rank_matrices_reconstruct_exactly(seed, k):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((50, k)) @ rng.standard_normal((k, 8))
    f = compr(C, np.arange(50))
    assert f.rank <= min(k, 8)
    err = np.linalg.norm(C - f.expand() @ C[f.skel_local])
    assert err <= 1e-10 * np.linalg.norm(C)
    assert np.max(np.abs(f.G)) <= 2.0 + 1e-12 if f.G.size else True


def test_zero_matrix_has_empty_skeleton():
    f = compr(np.zeros((6, 4)), np.arange(6))
    assert f.rank == 0
    np.testing.assert_allclose(f.expand() @ np.zeros((0, 4)),
                               np.zeros((6, 4)))


def test_mismatched_labels_rejected():
    with pytest.raises(ValueError):
        compr(np.zeros((4, 2)), np.arange(3))


# ---------------------------------------------------------------------------
# truncated SVD
# ---------------------------------------------------------------------------

def test_zero_threshold_keeps_everything():
    rng = np.random.default_rng(6)
    M = rng.standard_normal((12, 7))
    t = truncated_svd(M, 0.0)
    np.testing.assert_allclose(t.S * t.sigma @ t.Vt, M, atol=1e-12)


def test_tiny_singular_value_dropped():
    t = truncated_svd(np.diag([1.0, 1e-9]), 1e-6)
    assert t.sigma.shape == (1,)
    np.testing.assert_allclose(np.abs(t.S[:, 0]), [1.0, 0.0], atol=1e-15)


def test_relative_residual_matches_threshold():
    rng = np.random.default_rng(8)
    M = rng.standard_normal((30, 30))
    t = truncated_svd(M, 1e-3)
    resid = np.linalg.norm(M - (t.S * t.sigma) @ t.Vt, 2)
    assert resid <= 1e-3 * np.linalg.norm(M, 2)


def test_empty_input_gives_empty_factors():
    t = truncated_svd(np.empty((0, 3)), 1e-3)
    assert t.S.shape == (0, 0) and t.Vt.shape == (0, 3)
