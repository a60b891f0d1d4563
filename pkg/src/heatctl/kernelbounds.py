"""Dirichlet heat kernels on intervals and boxes, with Gaussian and cube bounds.

Kernels are evaluated by their eigenfunction series. Every evaluation reports
a bound on the truncated tail so callers can tell a converged value from a
small-time value that the series cannot resolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import InvalidInput, ResolutionError

TAIL_TARGET = 1e-10
TAIL_FLAG = 1e-6
MAX_TERMS = 2_000_000
SIMPSON_POINTS = 33
RESOLUTION_FRACTION = 1e-2
VARIANTS = ("published", "corrected")
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class KernelValue:
    value: float | np.ndarray
    tail_bound: float | np.ndarray
    nterms: tuple
    flagged: bool  # tail bound above TAIL_FLAG somewhere


@dataclass(frozen=True)
class WindowBound:
    lhs: float
    rhs: float
    averaged_distance_sq: float
    simpson_error: float
    tail_bound: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


@dataclass(frozen=True)
class LowerCheck:
    integral: float  # quadrature route
    integral_modal: float
    principal_bound: float
    quad_error: float

    @property
    def holds(self) -> bool:
        # at large t the two agree to rounding; allow the quadrature error and a few ulps
        slack = self.quad_error + ROUNDOFF * self.principal_bound
        return self.integral + slack >= self.principal_bound


def _check_time(t):
    if not (np.isfinite(t) and t > 0):
        raise InvalidInput(f"time must be positive and finite, got {t}")


def _check_length(L):
    if not (np.isfinite(L) and L > 0):
        raise InvalidInput(f"interval length must be positive and finite, got {L}")


def tail_bound(L: float, t: float, nterms: int) -> float:
    """Bound on sum_{k > nterms} (2/L) exp(-t (k pi / L)^2).

    Consecutive exponents beyond nterms differ by at least t (pi/L)^2 (2 nterms + 3),
    so the tail is dominated by a geometric series.
    """
    a = t * (math.pi / L) ** 2
    first = math.exp(-a * (nterms + 1) ** 2)
    ratio = math.exp(-a * (2 * nterms + 3))
    return (2.0 / L) * first / (1.0 - ratio) if ratio < 1.0 else math.inf


def default_terms(L: float, t: float, target: float = TAIL_TARGET) -> int:
    """Smallest term count whose tail bound is below ``target`` (capped at MAX_TERMS)."""
    a = t * (math.pi / L) ** 2
    # exp(-a n^2) (2/L) ~ target gives a starting guess; step up until the bound holds
    n = max(1, int(math.sqrt(max(math.log(2.0 / (L * target)), 1.0) / a)))
    while n > 1 and tail_bound(L, t, n - 1) < target:
        n -= 1
    while tail_bound(L, t, n) >= target and n < MAX_TERMS:
        n = min(MAX_TERMS, 2 * n)
    lo, hi = n // 2, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(L, t, mid) < target:
            hi = mid
        else:
            lo = mid
    return hi if tail_bound(L, t, hi) < target else n


def _series(L, t, x, y, nterms):
    """Sum over k of (2/L) e^{-t (k pi/L)^2} sin(k pi x/L) sin(k pi y/L), broadcast over x, y."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    shape = x.shape
    xf, yf = x.ravel(), y.ravel()
    out = np.zeros(xf.size)
    chunk = max(1, 4_000_000 // max(xf.size, 1))
    for start in range(1, nterms + 1, chunk):
        k = np.arange(start, min(nterms, start + chunk - 1) + 1, dtype=float)
        w = (2.0 / L) * np.exp(-t * (k * math.pi / L) ** 2)
        out += (np.sin(np.outer(xf, k) * (math.pi / L)) * np.sin(np.outer(yf, k) * (math.pi / L))) @ w
    return out.reshape(shape)


def interval_kernel(L: float, t: float, x, y, nterms: int | None = None) -> KernelValue:
    """Dirichlet heat kernel of (0, L) by its sine series; x and y broadcast."""
    _check_length(L)
    _check_time(t)
    xa, ya = np.asarray(x, float), np.asarray(y, float)
    if np.any((xa < 0) | (xa > L)) or np.any((ya < 0) | (ya > L)):
        raise InvalidInput(f"points must lie in [0, {L}]")
    n = default_terms(L, t) if nterms is None else int(nterms)
    if n < 1:
        raise InvalidInput("nterms must be at least 1")
    # evaluate the product in a symmetric order so K(x, y) == K(y, x) bit for bit
    lo, hi = np.minimum(xa, ya), np.maximum(xa, ya)
    value = _series(L, t, lo, hi, n)
    tail = tail_bound(L, t, n)
    if value.ndim == 0:
        value = float(value)
    return KernelValue(value, tail, (n,), tail > TAIL_FLAG)


def _edges(edges) -> np.ndarray:
    e = np.atleast_1d(np.asarray(edges, dtype=float))
    if e.ndim != 1 or e.size == 0:
        raise InvalidInput("box edges must be a nonempty list of lengths")
    for L in e:
        _check_length(L)
    return e


def _terms_per_axis(edges, t, nterms):
    if nterms is None:
        return [default_terms(L, t) for L in edges]
    if np.isscalar(nterms):
        return [int(nterms)] * edges.size
    if len(nterms) != edges.size:
        raise InvalidInput("nterms must give one count per axis")
    return [int(v) for v in nterms]


def box_kernel(edges, t: float, x, y, nterms=None) -> KernelValue:
    """Dirichlet heat kernel of the box prod (0, edges[k]); points have shape (..., n)."""
    edges = _edges(edges)
    _check_time(t)
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.shape[-1:] != (edges.size,) or y.shape[-1:] != (edges.size,):
        raise InvalidInput(f"points must have {edges.size} coordinates")
    terms = _terms_per_axis(edges, t, nterms)
    value = np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
    upper = np.ones_like(value)
    for k, L in enumerate(edges):
        kv = interval_kernel(L, t, x[..., k], y[..., k], terms[k])
        value = value * kv.value
        upper = upper * (np.abs(kv.value) + kv.tail_bound)
    tail = upper - np.abs(value)
    if value.ndim == 0:
        value, tail = float(value), float(tail)
    return KernelValue(value, tail, tuple(terms), bool(np.max(tail) > TAIL_FLAG))


def lattice_kernel(edges, t: float, axes, y, nterms=None) -> KernelValue:
    """Box kernel x -> K(t, x, y) on the tensor lattice spanned by ``axes``.

    The kernel of a box factorizes over coordinates, so the lattice values are
    an outer product of one interval kernel per axis.
    """
    edges = _edges(edges)
    y = np.atleast_1d(np.asarray(y, float))
    if len(axes) != edges.size or y.shape != (edges.size,):
        raise InvalidInput("need one axis and one source coordinate per box edge")
    terms = _terms_per_axis(edges, t, nterms)
    value = np.ones(())
    upper = np.ones(())
    for k, L in enumerate(edges):
        kv = interval_kernel(L, t, np.asarray(axes[k], float), y[k], terms[k])
        value = np.multiply.outer(value, kv.value)
        upper = np.multiply.outer(upper, np.abs(kv.value) + kv.tail_bound)
    tail = upper - np.abs(value)
    return KernelValue(value, tail, tuple(terms), bool(tail.max() > TAIL_FLAG))


def free_kernel(n: int, t: float, dist) -> np.ndarray:
    """Gaussian kernel of R^n at distance ``dist``."""
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-np.asarray(dist, float) ** 2 / (4 * t))


def fit_gaussian_constant(edges, epsilon: float, t_samples, xs, ys=None, nterms=None) -> float:
    """Empirical a_eps: sup over samples of K t^{n/2} exp(|x-y|^2 / (4 (1+eps) t)).

    All pairs of points from ``xs`` and ``ys`` (default ``xs``) are used at every time.
    Samples where the series cannot resolve K (|K| below 1e3 times its truncation
    and rounding error) are skipped: there the ratio is at most
    (4 pi)^{-n/2} exp(-eps d^2 / (4 (1+eps) t)) by domination by the free kernel, far
    below the supremum, while the computed value would be amplified noise.
    """
    edges = _edges(edges)
    if not 0 < epsilon < 1:
        raise InvalidInput(f"epsilon must lie in (0, 1), got {epsilon}")
    ts = np.atleast_1d(np.asarray(t_samples, float))
    xs = np.asarray(xs, float).reshape(-1, edges.size)
    ys = xs if ys is None else np.asarray(ys, float).reshape(-1, edges.size)
    if ts.size == 0 or xs.shape[0] == 0 or ys.shape[0] == 0:
        raise InvalidInput("sample set is empty")
    n = edges.size
    px, py = xs[:, None, :], ys[None, :, :]
    d2 = np.sum((px - py) ** 2, axis=-1)
    best = 0.0
    scale = float(np.prod(2.0 / edges))
    for t in ts:
        _check_time(t)
        kv = box_kernel(edges, t, px, py, nterms)
        noise = kv.tail_bound + 1e-15 * sum(kv.nterms) * scale
        ok = np.abs(kv.value) >= 1e3 * noise
        if ok.any():
            ratio = kv.value[ok] * t ** (n / 2) * np.exp(d2[ok] / (4 * (1 + epsilon) * t))
            best = max(best, float(np.max(ratio)))
    return best


def window_times(T1: float, T2: float, points: int = SIMPSON_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite Simpson rule on [T1, T2]."""
    if not 0 < T1 < T2:
        raise InvalidInput(f"need 0 < T1 < T2, got {T1}, {T2}")
    if points < 3 or points % 2 == 0:
        raise InvalidInput("Simpson rule needs an odd number of points")
    t = np.linspace(T1, T2, points)
    w = np.ones(points)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return t, w * (T2 - T1) / (3 * (points - 1))


def _box_edges_of(domain) -> np.ndarray:
    """Edges of the box a lattice domain represents (exterior ring, interior full)."""
    inner = tuple(slice(1, -1) for _ in domain.shape)
    if not domain.mask[inner].all() or domain.mask.sum() != domain.mask[inner].size:
        raise InvalidInput("the series kernel needs a box domain (see grid.box_domain)")
    return domain.h * (np.array(domain.shape) - 1)


def l2_window_upper(domain, y, T1: float, T2: float, epsilon: float, a_eps: float,
                    nterms=None) -> WindowBound:
    """Compare the L2 mass of the kernel over Omega x [T1, T2] with its Gaussian bound.

    lhs sums K(t, x, y)^2 over the Omega nodes (with their volumes) and
    integrates in t with 33-point Simpson. rhs is
    a_eps^2 (T2 - T1) / T1^n * exp(-dbar^2 / (2 (1+eps) T2)) with dbar the averaged
    distance at variance (1+eps) T2, measured with the Euclidean metric (boxes are convex).
    """
    from .geometry import averaged_distance

    if not 0 < epsilon < 1:
        raise InvalidInput(f"epsilon must lie in (0, 1), got {epsilon}")
    if not a_eps > 0:
        raise InvalidInput("a_eps must be positive")
    edges = _box_edges_of(domain)
    ts, ws = window_times(T1, T2)
    y = np.atleast_1d(np.asarray(y, float))
    domain.inside(y)
    local = y - domain.origin
    axes = [domain.axis(k) - domain.origin[k] for k in range(domain.n)]
    weights = domain.omega_weights
    sel = weights > 0
    n = domain.n
    var = (1 + epsilon) * T2
    if not sel.any():
        return WindowBound(0.0, 0.0, math.inf, 0.0, 0.0)

    terms = _terms_per_axis(edges, T1, nterms)
    slices, tails = [], []
    for t in ts:
        kv = lattice_kernel(edges, t, axes, local, terms)
        k = kv.value[sel]
        slices.append(float(np.dot(weights[sel], k * k)))
        # |K^2 - K_trunc^2| <= tail (2 |K_trunc| + tail)
        tau = kv.tail_bound[sel]
        tails.append(float(np.dot(weights[sel], tau * (2 * np.abs(k) + tau))))
    slices = np.array(slices)
    lhs = float(ws @ slices)
    # Simpson on every other node estimates the time quadrature error
    tc, wc = window_times(T1, T2, (SIMPSON_POINTS + 1) // 2)
    coarse = float(wc @ slices[::2])
    simpson_error = abs(lhs - coarse) / 15.0
    tail = float(ws @ np.array(tails))
    if simpson_error + tail > RESOLUTION_FRACTION * lhs:
        raise ResolutionError(
            f"window quadrature unresolved: error estimate {simpson_error + tail:.3e} "
            f"exceeds 1% of {lhs:.3e}"
        )
    avg = averaged_distance(domain, y, var, metric="euclidean")
    rhs = a_eps**2 * (T2 - T1) / T1**n * math.exp(-avg.value / (2 * var))
    return WindowBound(lhs, rhs, avg.value, simpson_error, tail)


def cube_lower_rhs(t: float, d: float, n: int, variant: str = "corrected") -> float:
    """Principal-mode lower bound e^{-2 lambda_1 t} e_1(center)^2 for a cube of half-diagonal d.

    ``published`` reproduces the published constants n^{n/2}/(2d)^n exp(-pi^2 n^2 t/(8 d^2)).
    ``corrected`` uses the cube of edge 2d/sqrt(n) itself: n^{n/2}/d^n exp(-pi^2 n^2 t/(2 d^2)).
    """
    _check_time(t)
    if not d > 0 or int(n) != n or n < 1:
        raise InvalidInput("need d > 0 and a positive integer dimension")
    if variant == "published":
        return n ** (n / 2) / (2 * d) ** n * math.exp(-(math.pi**2) * n**2 * t / (8 * d**2))
    if variant == "corrected":
        return n ** (n / 2) / d**n * math.exp(-(math.pi**2) * n**2 * t / (2 * d**2))
    raise InvalidInput(f"variant must be one of {VARIANTS}, got {variant!r}")


def l2_lower_check(edges, y, t: float, nterms=None) -> LowerCheck:
    """Integral of K(t, ., y)^2 over a box by quadrature and by modes, against its first mode.

    The box kernel factorizes, so the integral is the product of one interval
    integral per axis; each is done with adaptive quadrature.
    """
    edges = _edges(edges)
    _check_time(t)
    y = np.atleast_1d(np.asarray(y, float))
    if y.shape != edges.shape or np.any((y <= 0) | (y >= edges)):
        raise InvalidInput("y must be an interior point of the box")
    terms = _terms_per_axis(edges, t, nterms)
    integral, modal, principal, rel_err = 1.0, 1.0, 1.0, 0.0
    for L, yk, nk in zip(edges, y, terms):
        def sq(x, L=L, yk=yk, nk=nk):
            return interval_kernel(L, t, x, yk, nk).value ** 2

        val, err = quad(sq, 0.0, L, points=[yk], limit=200, epsabs=0.0, epsrel=1e-12)
        if not err <= RESOLUTION_FRACTION * val:
            raise ResolutionError(f"quadrature error {err:.3e} exceeds 1% of {val:.3e}")
        integral *= val
        rel_err += err / val
        # orthonormality: the integral equals the kernel at doubled time on the diagonal
        modal *= interval_kernel(L, 2 * t, yk, yk, nk).value
        principal *= (2.0 / L) * math.exp(-2 * t * (math.pi / L) ** 2) * math.sin(math.pi * yk / L) ** 2
    return LowerCheck(integral, modal, principal, rel_err * integral)
