"""Shared fixtures: small point sets and prebuilt matrices reused across
test modules.  Everything here is deliberately tiny so the dense oracles
stay cheap."""

import numpy as np
import pytest

import smash


def interval_pair(n, seed=0):
    """Nearly coincident 1-d row/column point sets on (0, 1)."""
    rng = np.random.default_rng(seed)
    x = (np.arange(1, n + 1) / (n + 1.0)).reshape(-1, 1)
    y = x + 1e-7 * rng.random((n, 1))
    return smash.PointSet(x), smash.PointSet(y, role="col")


def dense_oracle(spec, X, Y):
    from smash.kernel import kernel_block
    return kernel_block(spec, X, Y, np.arange(X.n), np.arange(Y.n))


def build_interval_hss(n, r=21, eps_svd=1e-9, tau=0.6, nu0=50, seed=0,
                       basis=None):
    X, Y = interval_pair(n, seed=seed)
    spec = smash.KernelSpec("cauchy")
    tree = smash.build_tree(X, Y, nu0=nu0, tau=tau)
    params = smash.BuildParams(r=r, tau=tau, eps_svd=eps_svd, basis=basis)
    return smash.build_hss(tree, spec, X, Y, params), spec, X, Y


@pytest.fixture(scope="session")
def cauchy_hss_400():
    """One mid-sized HSS matrix shared by reconstruction/matvec/solve tests."""
    return build_interval_hss(400, nu0=32)


@pytest.fixture(scope="session")
def grid_h2_400():
    """H2 matrix on a 20x20 grid with the 2d kernel."""
    X = smash.bench.grid_points(20)
    spec = smash.KernelSpec("cauchy", dx=1.0)
    tree = smash.build_tree(X, nu0=50, mode="2d", tau=0.65)
    params = smash.BuildParams(r=22, tau=0.65, eps_svd=1e-12)
    M = smash.build_h2(tree, spec, X, X, params)
    return M, spec, X
