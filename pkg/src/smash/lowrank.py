"""Low-rank tools: scaled Taylor and Lagrange farfield bases, strong
rank-revealing QR, and row interpolative compression.

The Taylor basis for 1/(x-y) uses per-order scaling factors eta so that basis
entries stay O(1) on the box; the coupling table that reproduces the kernel is
anti-triangular in the two expansion orders.  Compression selects skeleton
rows with a pivoted QR followed by bounded-entry swaps, which keeps the
interpolation coefficients no larger than the swap threshold s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

_DEFICIENCY_RTOL = 1e-14


# ---------------------------------------------------------------------------
# scaled Taylor expansion of the Cauchy kernel
# ---------------------------------------------------------------------------


def taylor_eta(r: int, delta: float) -> np.ndarray:
    """Scaling factors eta_l = ((l/e) * (2 pi r)^(1/(2r)) / delta)^l, eta_0 = 1."""
    if delta <= 0:
        raise ValueError("box radius must be positive")
    ls = np.arange(r, dtype=float)
    base = (ls / math.e) * (2 * math.pi * r) ** (1.0 / (2 * r)) / delta
    out = np.ones(r)
    out[1:] = base[1:] ** ls[1:]
    return out


def taylor_basis(center, delta: float, pts: np.ndarray, r: int) -> np.ndarray:
    """Columns eta_l (z - c)^l / l! for l = 0..r-1, evaluated at scalar
    (real or complex) points z."""
    pts = np.asarray(pts)
    eta = taylor_eta(r, delta)
    dz = (pts - center)[:, None]
    pows = np.ones((pts.size, r), dtype=dz.dtype)
    if r > 1:
        pows[:, 1:] = np.cumprod(np.repeat(dz, r - 1, axis=1), axis=1)
    fact = np.array([math.factorial(l) for l in range(r)], dtype=float)
    return pows * (eta / fact)[None, :]


def taylor_coupling(center_a, delta_a: float, center_b, delta_b: float, r: int):
    """Anti-triangular table T with T[l, m] = coefficient of the (l, m) basis
    pair, nonzero only for l + m <= r - 1."""
    D = center_a - center_b
    if D == 0:
        raise ValueError("expansion centers coincide")
    eta_a = taylor_eta(r, delta_a)
    eta_b = taylor_eta(r, delta_b)
    dtype = complex if isinstance(D, complex) else float
    T = np.zeros((r, r), dtype=dtype)
    # coefficient of dx^l dy^m in 1/(x-y): (-1)^l (l+m)! / D^(l+m+1),
    # divided by the eta scalings baked into the basis columns
    for l in range(r):
        for m in range(r - l):
            k = l + m
            T[l, m] = ((-1.0) ** l) * math.factorial(k) / (
                D ** (k + 1) * eta_a[l] * eta_b[m])
    return T


def taylor_bases(box_a, box_b, pts_a, pts_b, r: int):
    """(U, T, V) with U T V^T approximating 1/(x-y) on a well-separated box
    pair; points are scalars (complex for planar sets)."""
    ca, cb = _box_center_scalar(box_a), _box_center_scalar(box_b)
    U = taylor_basis(ca, box_a.radius, np.asarray(pts_a), r)
    V = taylor_basis(cb, box_b.radius, np.asarray(pts_b), r)
    T = taylor_coupling(ca, box_a.radius, cb, box_b.radius, r)
    return U, T, V


def taylor_tail_bound(tau: float, r: int) -> float:
    """Entrywise truncation bound (1 + tau) tau^r / (1 - tau), relative to the
    largest kernel value on the admissible block."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    return (1 + tau) * tau ** r / (1 - tau)


def _box_center_scalar(box):
    c = box.center
    if c.size == 1:
        return float(c[0])
    if c.size == 2:
        return complex(c[0], c[1])
    raise ValueError("Taylor basis supports 1-d or planar boxes only")


# ---------------------------------------------------------------------------
# Lagrange interpolation basis
# ---------------------------------------------------------------------------


def _cheb_nodes(a: float, b: float, m: int) -> np.ndarray:
    k = np.arange(m)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * k + 1) * np.pi / (2 * m))


def _lagrange_cols(x: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Barycentric evaluation of all cardinal polynomials at the points x."""
    m = nodes.size
    w = (-1.0) ** np.arange(m) * np.sin((2 * np.arange(m) + 1) * np.pi / (2 * m))
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w[None, :] / diff
        L = terms / terms.sum(axis=1)[:, None]
    hit = exact.any(axis=1)
    if np.any(hit):
        L[hit] = exact[hit].astype(float)
    return L


def interp_basis(box, pts: np.ndarray, r: int) -> np.ndarray:
    """Lagrange cardinal basis at Chebyshev points of the box, evaluated at
    pts; in 2-d a tensor grid of ceil(sqrt(r))^2 nodes is trimmed back to r
    columns by total degree."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lo = np.asarray(box.lo, dtype=float)
    hi = np.asarray(box.hi, dtype=float)
    scale = max(np.max(hi - lo), 1.0)
    for a, b in zip(lo, hi):
        if not b - a > 1e-14 * scale:
            raise ValueError("degenerate box dimension; interpolation nodes "
                             "would coincide")
    d = lo.size
    if d == 1:
        return _lagrange_cols(pts[:, 0], _cheb_nodes(lo[0], hi[0], r))
    if d != 2:
        raise ValueError("interpolation basis supports d = 1 or 2")
    m = math.ceil(math.sqrt(r))
    L1 = _lagrange_cols(pts[:, 0], _cheb_nodes(lo[0], hi[0], m))
    L2 = _lagrange_cols(pts[:, 1], _cheb_nodes(lo[1], hi[1], m))
    pairs = sorted(((i + j, i, j) for i in range(m) for j in range(m)))[:r]
    return np.column_stack([L1[:, i] * L2[:, j] for _, i, j in pairs])


# ---------------------------------------------------------------------------
# strong rank-revealing QR and interpolative row compression
# ---------------------------------------------------------------------------


@dataclass
class SrrqrResult:
    perm: np.ndarray      # column permutation (indices into the input)
    Q: np.ndarray
    R11: np.ndarray
    R12: np.ndarray
    R22: np.ndarray
    rank: int
    swaps: int


def _numerical_rank(rdiag: np.ndarray, k: int, rtol: float) -> int:
    if rdiag.size == 0 or rdiag[0] == 0:
        return 0
    ok = np.abs(rdiag) > rtol * abs(rdiag[0])
    return int(min(k, np.count_nonzero(ok)))


def srrqr(M: np.ndarray, k: int = None, s: float = 2.0, rtol: float = _DEFICIENCY_RTOL,
          max_swaps: int = 200) -> SrrqrResult:
    """Column-pivoted QR with bounded-entry postprocessing.

    After the initial pivoted factorization, any entry of R11^{-1} R12 larger
    than s triggers a column swap and refactorization, so the returned
    factorization satisfies max|R11^{-1} R12| <= s.  The rank k is capped at
    the numerical rank (trailing R11 diagonal below rtol times the leading
    one); pass k=None for rank detection alone.
    """
    M = np.asarray(M)
    m, n = M.shape
    if min(m, n) == 0:
        e = np.empty((0, 0), dtype=M.dtype)
        return SrrqrResult(np.arange(n), np.empty((m, 0), M.dtype), e,
                           np.empty((0, n), M.dtype), M.copy(), 0, 0)
    Q, R, piv = sla.qr(M, mode="economic", pivoting=True)
    kmax = min(m, n)
    k = kmax if k is None else min(k, kmax)
    k = _numerical_rank(np.diag(R), k, rtol)
    swaps = 0
    while k > 0:
        W = sla.solve_triangular(R[:k, :k], R[:k, k:], lower=False) \
            if k < n else np.empty((k, 0), dtype=R.dtype)
        if W.size == 0 or np.max(np.abs(W)) <= s:
            break
        if swaps >= max_swaps:
            raise RuntimeError("srrqr swap loop exceeded %d iterations" % max_swaps)
        i, j = np.unravel_index(np.argmax(np.abs(W)), W.shape)
        piv = piv.copy()
        piv[i], piv[k + j] = piv[k + j], piv[i]
        Q, R = sla.qr(M[:, piv], mode="economic")
        swaps += 1
    return SrrqrResult(piv, Q[:, :k], R[:k, :k], R[:k, k:], R[k:, k:], k, swaps)


@dataclass
class InterpolativeFactor:
    """Row interpolation C ~= X C[skel_local] with X = P [I; G] and |G| <= s.

    ``skel`` holds the caller's labels for the selected rows (the entries of
    the ibar argument), ``skel_local`` their positions within it.
    """

    nrows: int
    perm: np.ndarray
    G: np.ndarray
    skel: np.ndarray
    skel_local: np.ndarray

    @property
    def rank(self) -> int:
        return self.skel.size

    def expand(self) -> np.ndarray:
        X = np.zeros((self.nrows, self.rank), dtype=self.G.dtype)
        X[self.perm[:self.rank]] = np.eye(self.rank, dtype=self.G.dtype)
        if self.rank < self.nrows:
            X[self.perm[self.rank:]] = self.G
        return X


def compr(C: np.ndarray, ibar: np.ndarray, s: float = 2.0, rank: int = None,
          rtol: float = _DEFICIENCY_RTOL) -> InterpolativeFactor:
    """Interpolative row compression of C, labeling rows by ibar.

    With rank=None the cut keeps the full numerical rank, so the skeleton
    reproduces C to working precision; C with no columns (or all zeros) yields
    an empty skeleton.
    """
    C = np.asarray(C)
    ibar = np.asarray(ibar, dtype=np.int64)
    if C.shape[0] != ibar.size:
        raise ValueError("row labels do not match C")
    res = srrqr(C.T, k=rank, s=s, rtol=rtol)
    k = res.rank
    G = sla.solve_triangular(res.R11, res.R12, lower=False).T if k else \
        np.zeros((C.shape[0], 0), dtype=C.dtype)
    dtype = G.dtype if k else C.dtype
    return InterpolativeFactor(
        nrows=C.shape[0],
        perm=np.asarray(res.perm, dtype=np.int64),
        G=np.asarray(G, dtype=dtype),
        skel=ibar[res.perm[:k]],
        skel_local=np.asarray(res.perm[:k], dtype=np.int64),
    )


@dataclass
class TruncatedSvd:
    S: np.ndarray        # kept left singular vectors
    sigma: np.ndarray
    Vt: np.ndarray


def truncated_svd(M: np.ndarray, eps: float) -> TruncatedSvd:
    """SVD truncation keeping singular values >= eps times the largest."""
    M = np.asarray(M)
    if min(M.shape) == 0:
        return TruncatedSvd(np.zeros((M.shape[0], 0), dtype=M.dtype),
                            np.zeros(0), np.zeros((0, M.shape[1]), dtype=M.dtype))
    U, sig, Vt = sla.svd(M, full_matrices=False)
    if sig[0] == 0:
        keep = 0
    else:
        keep = int(np.count_nonzero(sig >= eps * sig[0]))
    return TruncatedSvd(U[:, :keep], sig[:keep], Vt[:keep])
