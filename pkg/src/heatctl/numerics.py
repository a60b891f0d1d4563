"""Dense symmetric linear algebra used throughout heatctl.

Float64 arrays are handled in double precision. Arrays of dtype ``object``
holding :class:`gmpy2.mpfr` values are handled in the precision of the active
gmpy2 context, which :func:`mp_precision` sets. Heat-equation Gramians are
notoriously ill-conditioned, so the cost computations in :mod:`heatctl.control`
switch to the multiprecision path when double precision cannot resolve them.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import gmpy2
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, InvalidInput, SingularSystemError

#: Eigenvalues of the (diagonally scaled) Gramian below this fraction of the
#: largest one are treated as null directions in double precision.
NULL_TOL = 1e-12
#: Jacobi stops once the off-diagonal Frobenius norm is below this fraction of ||A||_F.
JACOBI_TOL = 1e-14
MAX_SWEEPS = 60
DOUBLE_BITS = 53

_EPS = np.finfo(float).eps

_mpfr = np.frompyfunc(gmpy2.mpfr, 1, 1)
_mp_sqrt = np.frompyfunc(gmpy2.sqrt, 1, 1)
_to_float = np.frompyfunc(float, 1, 1)


# --------------------------------------------------------------------------
# multiprecision helpers


@contextmanager
def mp_precision(bits: int):
    """Run the enclosed block with gmpy2 arithmetic at ``bits`` of mantissa."""
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)):
        yield


def working_bits() -> int:
    return gmpy2.get_context().precision


def is_mp(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def to_mp(a) -> np.ndarray:
    """Exact conversion of a float array to mpfr (the context has >= 53 bits)."""
    arr = np.asarray(a, dtype=float)
    return np.asarray(_mpfr(arr), dtype=object).reshape(arr.shape)


def to_float(a) -> np.ndarray:
    if not is_mp(a):
        return np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(a.shape)
    return np.asarray(_to_float(a), dtype=float).reshape(a.shape)


def _sqrt(a):
    return _mp_sqrt(a) if is_mp(a) else np.sqrt(a)


def _diag(a) -> np.ndarray:
    return np.array([a[i, i] for i in range(a.shape[0])], dtype=a.dtype)


def _zeros(shape, like) -> np.ndarray:
    if is_mp(like):
        z = np.empty(shape, dtype=object)
        z.fill(gmpy2.mpfr(0))
        return z
    return np.zeros(shape)


# --------------------------------------------------------------------------
# symmetric matrices and the Jacobi eigensolver


def sym_matrix(entries) -> np.ndarray:
    """Build a symmetric float matrix, symmetrizing ``entries`` as (A + A^T)/2."""
    a = np.array(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def _check_symmetric(a, name="matrix") -> np.ndarray:
    if is_mp(a):
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"{name} must be square, got shape {a.shape}")
        return a
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidInput(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EigDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of a round-robin tournament: every pair (p, q) once per sweep,
    each round made of disjoint pairs so their rotations commute."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi(a: np.ndarray, relative: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Jacobi diagonalization.

    With ``relative`` a rotation of pair (p, q) is skipped only when
    |a_pq| <= eps * sqrt(|a_pp a_qq|), which keeps small eigenvalues of graded
    matrices accurate to high relative precision. Otherwise entries below
    JACOBI_TOL * ||A||_F / n are also left alone, which is enough for the
    dominant eigenpairs and takes far fewer sweeps on graded matrices. Each
    round applies n/2 disjoint rotations at once as a similarity J^T A J.
    """
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    rounds = _round_robin(n)
    fro = np.linalg.norm(A)
    floor = 0.0 if relative else JACOBI_TOL * fro / n
    J = np.eye(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for P, Q in rounds:
            apq = A[P, Q]
            app = A[P, P]
            aqq = A[Q, Q]
            active = (np.abs(apq) > _EPS * np.sqrt(np.abs(app * aqq))) & (np.abs(apq) > floor)
            if not active.any():
                continue
            rotated = True
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                theta = np.where(active, (aqq - app) / (2.0 * apq), 0.0)
                big = np.abs(theta) > 1e150
                t = np.where(big, 0.5 / theta,
                             np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            J[P, P] = c
            J[Q, Q] = c
            J[P, Q] = s
            J[Q, P] = -s
            A = J.T @ A @ J
            V = V @ J
            A[P, P] = app - t * apq
            A[Q, Q] = aqq + t * apq
            A[P, Q] = np.where(active, 0.0, apq)
            A[Q, P] = A[P, Q]
            J[P, P] = 1.0
            J[Q, Q] = 1.0
            J[P, Q] = 0.0
            J[Q, P] = 0.0
        if not rotated:
            break
    else:
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off > JACOBI_TOL * fro:
            raise ConvergenceError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps (off={off:.3e})")
    return A.diagonal().copy(), V


def _components(pattern: np.ndarray) -> list[np.ndarray]:
    """Index sets of the irreducible diagonal blocks of a symmetric sparsity pattern."""
    n = pattern.shape[0]
    ncomp, labels = connected_components(csr_matrix(pattern), directed=False)
    if ncomp == 1:
        return [np.arange(n)]
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def sym_eig(a, relative: bool = True) -> EigDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Decoupled diagonal blocks (after permutation) are diagonalized separately.
    ``relative=False`` trades the relative accuracy of tiny eigenvalues for
    speed (see :func:`_jacobi`).
    """
    a = _check_symmetric(a)
    if is_mp(a):
        a = to_float(a)
    n = a.shape[0]
    values = np.empty(n)
    vectors = np.zeros((n, n))
    for idx in _components(a != 0.0):
        w, v = _jacobi(a[np.ix_(idx, idx)], relative)
        values[idx] = w
        vectors[np.ix_(idx, idx)] = v
    order = np.argsort(values, kind="stable")
    return EigDecomposition(values[order], vectors[:, order])


# --------------------------------------------------------------------------
# pivoted Cholesky and triangular solves (float or mpfr)


@dataclass
class PivotedCholesky:
    r: np.ndarray  # rank x n upper trapezoidal, a[perm][:, perm] ~= r.T @ r
    perm: np.ndarray
    rank: int
    pivots: list  # squared pivots r_kk^2 in elimination order


def pivoted_cholesky(a: np.ndarray, tol=0.0) -> PivotedCholesky:
    """Cholesky with diagonal pivoting; stops when the largest remaining
    diagonal entry is <= tol."""
    n = a.shape[0]
    w = a.copy()
    perm = np.arange(n)
    r = _zeros((n, n), a)
    pivots = []
    rank = n
    for k in range(n):
        rest = [w[i, i] for i in range(k, n)]
        j = k + max(range(n - k), key=rest.__getitem__)
        if not rest[j - k] > tol:
            rank = k
            break
        if j != k:
            w[[k, j], :] = w[[j, k], :]
            w[:, [k, j]] = w[:, [j, k]]
            r[:k, [k, j]] = r[:k, [j, k]]
            perm[[k, j]] = perm[[j, k]]
        pivots.append(w[k, k])
        piv = _sqrt(np.array([w[k, k]], dtype=a.dtype))[0]
        r[k, k] = piv
        if k + 1 < n:
            row = w[k, k + 1 :] / piv
            r[k, k + 1 :] = row
            w[k + 1 :, k + 1 :] -= np.outer(row, row)
    return PivotedCholesky(r[:rank], perm, rank, pivots)


def solve_lower_t(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve r.T x = b for square upper-triangular r (forward substitution)."""
    n = r.shape[0]
    x = _zeros(b.shape, r) if b.ndim == 2 else _zeros((n,), r)
    for i in range(n):
        acc = b[i] - (r[:i, i] @ x[:i] if i else 0)
        x[i] = acc / r[i, i]
    return x


def solve_upper(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve r x = b for square upper-triangular r (back substitution)."""
    n = r.shape[0]
    x = _zeros(b.shape, r) if b.ndim == 2 else _zeros((n,), r)
    for i in range(n - 1, -1, -1):
        acc = b[i] - (r[i, i + 1 :] @ x[i + 1 :] if i + 1 < n else 0)
        x[i] = acc / r[i, i]
    return x


# --------------------------------------------------------------------------
# generalized eigenvalues


@dataclass
class GenEig:
    """Largest generalized eigenvalue of a pencil (e, g) and its certificate.

    ``vector`` maximizes z^T e z / z^T g z. ``null_direction`` is set when the
    value is +inf: a z with z^T g z = 0 (at tolerance) and z^T e z > 0.
    ``null_kind`` distinguishes exact zero rows of g ("structural") from
    directions that are null only at the working precision ("numerical").
    """

    value: float
    vector: np.ndarray | None
    null_direction: np.ndarray | None = None
    null_kind: str | None = None
    cond: float = 1.0
    bits: int = DOUBLE_BITS


def _null_threshold(null_tol: float, bits: int) -> float:
    # keep the same number of guard digits above unit roundoff at every precision
    return null_tol * 2.0 ** (DOUBLE_BITS - bits)


def _block_double(e: np.ndarray, g: np.ndarray, null_tol: float) -> GenEig:
    n = g.shape[0]
    s = 1.0 / np.sqrt(g.diagonal())
    gs = g * s[:, None] * s[None, :]
    es = e * s[:, None] * s[None, :]
    dec = sym_eig(gs)
    lam, q = dec.eigenvalues, dec.eigenvectors
    lam_max = lam[-1]
    null = lam <= null_tol * lam_max
    cond = lam_max / lam[0] if lam[0] > 0 else math.inf
    e_scale = max(np.max(np.abs(es.diagonal())), 0.0)
    if e_scale == 0.0:
        return GenEig(0.0, np.zeros(n), cond=cond)
    if null.any():
        qn = q[:, null]
        en = sym_eig(sym_matrix(qn.T @ es @ qn))
        if en.eigenvalues[-1] > null_tol * e_scale:
            z = s * (qn @ en.eigenvectors[:, -1])
            return GenEig(math.inf, None, z / np.linalg.norm(z), "numerical", cond)
    qr = q[:, ~null]
    scale = 1.0 / np.sqrt(lam[~null])
    m = (qr.T @ es @ qr) * scale[:, None] * scale[None, :]
    top = sym_eig(sym_matrix(m))
    y = top.eigenvectors[:, -1]
    z = s * (qr @ (scale * y))
    return GenEig(max(top.eigenvalues[-1], 0.0), z, cond=cond)


def _round_scaled(x: np.ndarray) -> tuple[np.ndarray, int]:
    """Round an mpfr array to float after a power-of-two rescale; returns (floats, exponent)."""
    big = max((abs(v) for v in x.flat), default=gmpy2.mpfr(0))
    if big == 0:
        return np.zeros(x.shape), 0
    ex, _ = gmpy2.frexp(big)
    scale = gmpy2.mpfr(2) ** (-ex)
    return to_float(x * scale), ex


def _is_diagonal(a: np.ndarray) -> bool:
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return not np.any(off != 0)


def _block_mp(e: np.ndarray, g: np.ndarray, null_tol: float) -> GenEig:
    bits = working_bits()
    n = g.shape[0]
    s = 1 / _mp_sqrt(_diag(g))
    gs = g * np.outer(s, s)
    es = e * np.outer(s, s)
    e_scale = max(abs(es[i, i]) for i in range(n))
    chol = pivoted_cholesky(gs, tol=_null_threshold(null_tol, bits))
    pivots = chol.pivots
    cond = n / float(min(pivots)) if chol.rank == n else math.inf
    if e_scale == 0:
        return GenEig(0.0, np.zeros(n), cond=cond, bits=bits)
    p = chol.perm
    ep = es[np.ix_(p, p)]
    if chol.rank < n:
        k = chol.rank
        r1, r2 = chol.r[:, :k], chol.r[:, k:]
        basis = np.vstack([-solve_upper(r1, r2), np.eye(n - k, dtype=int).astype(object)])
        basis = basis.astype(object)
        for j in range(n - k):
            col = basis[:, j]
            nrm = gmpy2.sqrt(sum(v * v for v in col))
            mass = (col @ ep @ col) / (nrm * nrm)
            if mass > null_tol * e_scale:
                z = np.empty(n, dtype=object)
                z[p] = col * s[p]
                zf = to_float(z / gmpy2.sqrt(sum(v * v for v in z)))
                return GenEig(math.inf, None, zf, "numerical", cond, bits)
        # e carries no mass on the numerical null space: restrict to the range
        r = r1
        ep = ep[:k, :k]
        p = p[:k]
    else:
        r = chol.r
    if _is_diagonal(ep):
        w = solve_lower_t(r, np.diag(_mp_sqrt(_diag(ep))).astype(object))
        wf, ex = _round_scaled(w)
        x = wf @ wf.T
    else:
        y = solve_lower_t(r, ep)
        xm = solve_lower_t(r, np.ascontiguousarray(y.T))
        xf, ex2 = _round_scaled(xm)
        x, ex = 0.5 * (xf + xf.T), ex2 / 2
    top = sym_eig(x, relative=False)
    mu = max(top.eigenvalues[-1], 0.0) * 2.0 ** (2 * ex)
    y = to_mp(top.eigenvectors[:, -1])
    zp = solve_upper(r, y)
    z = np.zeros(n, dtype=object)
    z.fill(gmpy2.mpfr(0))
    z[p] = zp * s[p]
    return GenEig(mu, to_float(z), cond=cond, bits=bits)


def gen_eig_top(e, g, null_tol: float = NULL_TOL) -> GenEig:
    """Largest generalized eigenvalue sup z^T e z / z^T g z of PSD matrices e, g.

    Returns +inf when some z has z^T e z > 0 while z^T g z vanishes, which is
    decided against ``null_tol`` relative to the largest eigenvalue of the
    diagonally scaled g (the threshold shrinks with the working precision on the
    mpfr path).
    """
    mp = is_mp(e) or is_mp(g)
    e = _check_symmetric(e, "e")
    g = _check_symmetric(g, "g")
    if e.shape != g.shape:
        raise InvalidInput(f"order mismatch: e is {e.shape}, g is {g.shape}")
    if mp:
        e = e if is_mp(e) else to_mp(e)
        g = g if is_mp(g) else to_mp(g)
    n = g.shape[0]
    gdiag = _diag(g)
    ediag = _diag(e)
    dead = np.array([not (v > 0) for v in gdiag])
    for i in np.flatnonzero(dead):
        if ediag[i] > 0:
            z = np.zeros(n)
            z[i] = 1.0
            return GenEig(math.inf, None, z, "structural", math.inf, working_bits() if mp else DOUBLE_BITS)
    keep = np.flatnonzero(~dead)
    best = GenEig(0.0, np.zeros(n), bits=working_bits() if mp else DOUBLE_BITS)
    if keep.size == 0:
        return best
    ek = e[np.ix_(keep, keep)]
    gk = g[np.ix_(keep, keep)]
    pattern = np.asarray((ek != 0) | (gk != 0), dtype=bool)
    worst_cond = 1.0
    for idx in _components(pattern):
        eb, gb = ek[np.ix_(idx, idx)], gk[np.ix_(idx, idx)]
        res = _block_mp(eb, gb, null_tol) if mp else _block_double(eb, gb, null_tol)
        worst_cond = max(worst_cond, res.cond)
        if res.value == math.inf:
            z = np.zeros(n)
            z[keep[idx]] = res.null_direction
            return GenEig(math.inf, None, z, res.null_kind, worst_cond, res.bits)
        if res.value > best.value or best.vector is None or not best.vector.any():
            z = np.zeros(n)
            z[keep[idx]] = res.vector
            best = GenEig(res.value, z, cond=worst_cond, bits=res.bits)
    best.cond = worst_cond
    return best


def gen_eig_max(e, g, null_tol: float = NULL_TOL) -> float:
    """Value of :func:`gen_eig_top` (possibly ``math.inf``)."""
    return gen_eig_top(e, g, null_tol).value


# --------------------------------------------------------------------------
# positive-definite solves


def solve_spd(g, rhs) -> np.ndarray:
    """Solve g x = rhs for symmetric positive-definite g.

    Raises :class:`SingularSystemError` when the smallest eigenvalue is not above
    1e-12 times the largest. The residual is driven below 1e-10 ||rhs|| by
    iterative refinement with residuals accumulated in extended precision.
    """
    g = _check_symmetric(g, "g")
    if is_mp(g):
        return _solve_spd_mp(g, np.asarray(rhs, dtype=object))
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != g.shape[0]:
        raise InvalidInput(f"rhs has length {b.shape[0]}, matrix order is {g.shape[0]}")
    lam = sym_eig(g).eigenvalues
    if not lam[0] > NULL_TOL * lam[-1]:
        raise SingularSystemError("matrix is not positive definite at tolerance", lam[0])
    chol = pivoted_cholesky(g)
    p = chol.perm

    def solve(v):
        y = solve_lower_t(chol.r, v[p])
        out = np.empty_like(v)
        out[p] = solve_upper(chol.r, y)
        return out

    x = solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    gm = to_mp(g)
    with mp_precision(160):
        for _ in range(8):
            res = to_float(to_mp(b) - gm @ to_mp(x))
            if np.linalg.norm(res) <= 1e-10 * bnorm:
                break
            x = x + solve(res)
    return x


def _solve_spd_mp(g: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    s = 1 / _mp_sqrt(_diag(g))
    chol = pivoted_cholesky(g * np.outer(s, s), tol=_null_threshold(NULL_TOL, working_bits()))
    if chol.rank < n:
        raise SingularSystemError("matrix is numerically singular at working precision", 0.0)
    p = chol.perm
    bp = (b * s)[p]
    y = solve_lower_t(chol.r, bp)
    xp = solve_upper(chol.r, y)
    x = _zeros((n,), g)
    x[p] = xp
    return x * s
