"""H2 construction under strong admissibility.

Same nested interpolative bases as the HSS builder, but skeletons come from
the farfield expansion alone (no nearfield sampling), and the low-rank /
dense block partition is the strong-admissibility one: well-separated node
pairs carry skeleton couplings, inadmissible leaf pairs stay dense.
"""

from __future__ import annotations

import numpy as np

from .cluster import ClusterTree, leaf_sets
from .hss import (BuildParams, _StructuredMatrix, _basis_builder,
                  _default_basis, _intermediate, kernel_dtype,
                  make_block_evaluator)
from .kernel import KernelSpec
from .lowrank import compr


class H2Matrix(_StructuredMatrix):
    kind = "h2"


def build_h2(tree: ClusterTree, kernel: KernelSpec, X, Y,
             params: BuildParams = None, use_cache: bool = True) -> H2Matrix:
    """Bottom-up H2 construction: per node, compress the farfield basis over
    the current index set; parents work on the union of their children's
    skeletons.  Couplings are exact kernel entries at skeleton pairs."""
    params = params or BuildParams()
    if kernel.kind == "cauchy_like":
        raise ValueError("cauchy-like matrices are built in HSS form")
    if tree.mode != "2d" and tree.dim != 1:
        raise ValueError("H2 construction expects a 2^d-mode tree")
    basis = params.basis or _default_basis(kernel)
    block = make_block_evaluator(kernel, X, Y, tree)
    dtype = kernel_dtype(kernel, X)
    L, Lm = leaf_sets(tree, params.tau, "h2")
    M = H2Matrix(tree, params, block, L, Lm, dtype, kernel=kernel,
                 use_cache=use_cache)
    brow = _basis_builder(tree, params, basis, "row")
    bcol = _basis_builder(tree, params, basis, "col")

    for level in range(tree.n_levels, 1, -1):
        for i in tree.level_nodes(level):
            ibar_r = _intermediate(tree, i, M.skel_row, "row")
            ibar_c = _intermediate(tree, i, M.skel_col, "col")
            fac = compr(brow(i, ibar_r), ibar_r, s=params.s)
            M.rowfac[i] = fac
            M.skel_row[i] = fac.skel
            fac = compr(bcol(i, ibar_c), ibar_c, s=params.s)
            M.colfac[i] = fac
            M.skel_col[i] = fac.skel
    return M


def reconstruct_dense_h2(M: H2Matrix) -> np.ndarray:
    if M.kind != "h2":
        raise ValueError("expected an H2 matrix")
    return M.todense()
