"""Distances on masked lattices, averaged and bounded distances, and the rod scenarios.

Unbounded axes are truncated and the truncation is recorded on the domain.
Geodesic distances are shortest paths on the lattice graph; sums over Omega
use the per-node volumes of ``GridDomain.omega_weights``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.csgraph import dijkstra
from scipy.special import logsumexp

from .errors import HypothesisViolation, InvalidInput, ResolutionError
from .grid import GridDomain, check_connected
from .systems import SpectralSystem, grid_laplacian, interior_observation
from .tensorprod import ProductSystem, kronecker_sum

# worst-case relative overestimate of Euclidean length by lattice paths
METRICATION = {1: 0.0, 2: 0.028, 3: 0.129}
SCENARIOS = ("strip", "rod-with-interior-rod", "rod-with-slabs", "rod-shrinking-cylinder-control", "shrinking-rod")
GNC_CONSTANTS = {"published": 0.25, "corrected": 1.0}  # c_n / (pi^2 n^2)
TAIL_FRACTION = 1e-2


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class RProfile:
    """Radius profile R(z) of a cylinder, from a small registry of closed forms.

    kinds: zero; constant (r0); capped_inverse (cap, scale): min(cap, scale/(1+|z|));
    inverse_log (scale): scale/log(2+|z|); exponential (scale, rate): scale e^{-rate |z|}.
    """

    kind: str
    params: dict = field(default_factory=dict)

    _REQUIRED = {
        "zero": (),
        "constant": ("r0",),
        "capped_inverse": ("cap", "scale"),
        "inverse_log": ("scale",),
        "exponential": ("scale", "rate"),
    }

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise InvalidInput(f"unknown profile kind {self.kind!r}; known: {sorted(self._REQUIRED)}")
        for key in self._REQUIRED[self.kind]:
            v = self.params.get(key)
            if v is None or not np.isfinite(v) or v < 0:
                raise InvalidInput(f"profile {self.kind} needs a finite nonnegative {key!r}")

    @classmethod
    def from_spec(cls, spec) -> RProfile:
        if isinstance(spec, RProfile):
            return spec
        spec = dict(spec)
        return cls(spec.pop("kind", ""), {k: float(v) for k, v in spec.items()})

    def __call__(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        p = self.params
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "constant":
            return np.full_like(z, p["r0"])
        if self.kind == "capped_inverse":
            return np.minimum(p["cap"], p["scale"] / (1 + z))
        if self.kind == "inverse_log":
            return p["scale"] / np.log(2 + z)
        return p["scale"] * np.exp(-p["rate"] * z)

    def kinks(self) -> list:
        """Points where R is not smooth."""
        if self.kind == "capped_inverse" and self.params["cap"] > 0:
            c = self.params["scale"] / self.params["cap"] - 1
            return [-c, 0.0, c] if c > 0 else [0.0]
        return [] if self.kind in ("zero", "constant") else [0.0]

    @property
    def sup(self) -> float:
        """Supremum over the real line (attained at z = 0 for every registered kind)."""
        return float(self(0.0))


# ---------------------------------------------------------------- scenarios


def _truncation(spec, points) -> tuple[float, float]:
    tr = spec.get("truncation")
    if tr is None:
        raise InvalidInput("scenario needs a 'truncation' for its unbounded axis")
    lo, hi = (-float(tr), float(tr)) if np.isscalar(tr) else (float(tr[0]), float(tr[1]))
    if not lo < hi:
        raise InvalidInput(f"empty truncation interval [{lo}, {hi}]")
    axis = -1
    for p in points:
        if not lo <= p[axis] <= hi:
            raise InvalidInput(f"truncation [{lo}, {hi}] does not reach the requested point {list(p)}")
    return lo, hi


def _axis_nodes(lo, hi, h):
    count = int(round((hi - lo) / h))
    return lo + h * np.arange(count + 1)


def _section(radius, h):
    """Disk section lattice: coordinates and mask, with one exterior ring."""
    m = int(math.ceil(radius / h)) + 1
    x = h * np.arange(-m, m + 1)
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    return x, r2


def _intervals_mask(z, intervals):
    sel = np.zeros(z.shape, dtype=bool)
    for lo, hi in intervals:
        sel |= (z >= lo - 1e-12) & (z <= hi + 1e-12)
    return sel


def _slab_mask(z, slabs):
    sel = np.zeros(z.shape, dtype=bool)
    for center, half in slabs:
        if half < 0:
            raise InvalidInput("slab half-widths must be nonnegative")
        sel |= np.abs(z - center) <= half + 1e-12
    return sel


def _positive(spec, key, default=None):
    v = spec.get(key, default)
    if v is None or not np.isfinite(v) or v <= 0:
        raise InvalidInput(f"scenario parameter {key!r} must be positive, got {v}")
    return float(v)


def build_scenario(spec: dict) -> GridDomain:
    """Lattice for one of the strip and rod geometries; see ``SCENARIOS``.

    Common keys: kind, h, truncation (half-length or [lo, hi] of the unbounded
    axis) and optional points that must lie inside the truncated domain.
    """
    kind = spec.get("kind")
    if kind not in SCENARIOS:
        raise InvalidInput(f"unknown scenario kind {kind!r}; known: {list(SCENARIOS)}")
    h = _positive(spec, "h")
    points = [np.atleast_1d(np.asarray(p, float)) for p in spec.get("points", [])]

    if kind == "strip":
        L = _positive(spec, "L")
        lo, hi = _truncation(spec, points)
        x = _axis_nodes(0.0, L, h)
        if abs(x[-1] - L) > 1e-9 * L:
            raise InvalidInput(f"strip width {L} is not a multiple of h={h}")
        y = _axis_nodes(lo, hi, h)
        mask = np.zeros((x.size, y.size), dtype=bool)
        mask[1:-1, :] = True
        weights = np.zeros(mask.shape)
        if spec.get("omega") is not None:
            a, b = spec["omega"]
            weights[_intervals_mask(x, [(a, b)]) & mask.any(axis=1), :] = h**2
            weights[~mask] = 0.0
        origin = np.array([0.0, lo])
        trunc = {"axis": 1, "lo": lo, "hi": y[-1]}
    else:
        lo, hi = _truncation(spec, points)
        z = _axis_nodes(lo, hi, h)
        if kind == "shrinking-rod":
            profile = RProfile.from_spec(spec.get("profile", {}))
            if profile.sup <= 0:
                raise InvalidInput("the shrinking rod needs a positive profile")
            xs, r2 = _section(profile.sup, h)
            radius = profile(z)
            mask = r2[:, :, None] < radius[None, None, :] ** 2
        else:
            radius_s = _positive(spec, "section_radius", 1.0)
            xs, r2 = _section(radius_s, h)
            mask = np.broadcast_to((r2 < radius_s**2)[:, :, None], (xs.size, xs.size, z.size)).copy()
        weights = np.zeros(mask.shape)
        full = h**3

        if kind == "rod-with-interior-rod":
            r_om = _positive(spec, "omega_radius")
            cx, cy = spec.get("omega_center", (0.0, 0.0))
            sel = (xs[:, None] - cx) ** 2 + (xs[None, :] - cy) ** 2 < r_om**2
            weights[sel[:, :, None] & mask] = full
        elif kind in ("rod-with-slabs", "shrinking-rod"):
            keep = _intervals_mask(z, spec.get("omega_z", [(-1.0, 1.0)])) & ~_slab_mask(z, spec.get("slabs", []))
            weights[mask & keep[None, None, :]] = full
        elif kind == "rod-shrinking-cylinder-control":
            profile = RProfile.from_spec(spec.get("profile", {}))
            if profile.sup >= radius_s:
                raise InvalidInput("control cylinder radius must stay below the section radius")
            R = profile(z)
            inside = r2[:, :, None] < R[None, None, :] ** 2
            count = inside.sum(axis=(0, 1))
            # each slice carries its exact measure pi R(z)^2 h, spread over the nodes it covers
            per_node = np.where(count > 0, math.pi * R**2 * h / np.maximum(count, 1), 0.0)
            weights = np.where(inside, per_node[None, None, :], 0.0)
        origin = np.array([xs[0], xs[0], lo])
        trunc = {"axis": 2, "lo": lo, "hi": z[-1]}

    if check_connected(mask) != 1:
        raise InvalidInput("domain M is not connected on the lattice")
    dom = GridDomain(h, origin, mask, weights, trunc, kind)
    for p in points:
        dom.inside(p)
    return dom


# ---------------------------------------------------------------- distances


@dataclass(frozen=True, eq=False)
class DistanceField:
    source: np.ndarray
    index: tuple
    distance: np.ndarray  # +inf off the source's component or beyond the limit
    boundary_distance: float
    metric: str
    limit: float  # +inf when the whole lattice was searched


def _stencil(n: int) -> list[tuple]:
    """Half of the neighbor offsets: 2 (1-D), 16 (2-D, with knight moves) or 26 (3-D)."""
    if n == 1:
        return [(1,)]
    if n == 2:
        return [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    half = []
    for o in product((-1, 0, 1), repeat=3):
        if o > (0, 0, 0):
            half.append(o)
    return half


def _shift_view(padded, offset, pad, shape):
    sl = tuple(slice(pad + o, pad + o + s) for o, s in zip(offset, shape))
    return padded[sl]


def _lattice_graph(mask: np.ndarray, h: float):
    """Sparse symmetric graph on mask nodes; a move is allowed when its bounding box lies in M."""
    n = mask.ndim
    shape = mask.shape
    pad = 2
    padded = np.pad(mask, pad, constant_values=False)
    number = np.full(shape, -1, dtype=np.int64)
    nodes = np.flatnonzero(mask)
    number.flat[nodes] = np.arange(nodes.size)
    pnum = np.pad(number, pad, constant_values=-1)
    rows, cols, vals = [], [], []
    for off in _stencil(n):
        ok = mask.copy()
        ranges = [range(min(0, o), max(0, o) + 1) for o in off]
        for q in product(*ranges):
            if any(q):
                ok &= _shift_view(padded, q, pad, shape)
        src = number[ok]
        dst = _shift_view(pnum, off, pad, shape)[ok]
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, h * math.sqrt(sum(o * o for o in off))))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    g = sp.csr_matrix((v, (r, c)), shape=(nodes.size, nodes.size))
    return g, nodes


def boundary_distance(domain: GridDomain, y, half_cell: bool = True) -> float:
    """Distance from y to the nearest exterior node, less h/2 by default.

    Nodes beyond the array ends do not count, so truncated axes add no boundary.
    """
    idx = domain.inside(y)
    outside = np.argwhere(~domain.mask)
    if outside.size == 0:
        return math.inf
    d = domain.h * np.sqrt(np.min(np.sum((outside - np.array(idx)) ** 2, axis=1)))
    return float(d - domain.h / 2) if half_cell else float(d)


def geodesic_distance_field(domain: GridDomain, y, limit: float | None = None,
                            metric: str = "geodesic") -> DistanceField:
    """Distances from the node nearest y to every node of M.

    ``metric="geodesic"`` runs Dijkstra on the lattice graph; with ``limit`` it
    only searches the sub-box within ``limit`` of y, which is exact for every
    node closer than the limit since paths are never shorter than the Euclidean
    offset. ``metric="euclidean"`` returns straight-line distances (convex M).
    """
    idx = domain.inside(y)
    src = domain.coords(idx)
    bd = boundary_distance(domain, src)
    lim = math.inf if limit is None else float(limit)
    if metric == "euclidean":
        grids = np.meshgrid(*[domain.axis(k) - src[k] for k in range(domain.n)], indexing="ij")
        dist = np.sqrt(sum(g * g for g in grids))
        dist[~domain.mask] = math.inf
        dist[dist > lim] = math.inf
        return DistanceField(src, idx, dist, bd, metric, lim)
    if metric != "geodesic":
        raise InvalidInput(f"metric must be 'geodesic' or 'euclidean', got {metric!r}")

    if math.isfinite(lim):
        reach = int(math.ceil(lim / domain.h)) + 1
        box = tuple(slice(max(0, i - reach), min(s, i + reach + 1)) for i, s in zip(idx, domain.shape))
    else:
        box = tuple(slice(0, s) for s in domain.shape)
    sub = domain.mask[box]
    graph, nodes = _lattice_graph(sub, domain.h)
    local = tuple(i - b.start for i, b in zip(idx, box))
    start = int(np.searchsorted(nodes, np.ravel_multi_index(local, sub.shape)))
    d = dijkstra(graph, directed=False, indices=start, limit=lim)
    dist = np.full(domain.shape, math.inf)
    view = np.full(sub.shape, math.inf)
    view.flat[nodes] = d
    dist[box] = view
    return DistanceField(src, idx, dist, bd, metric, lim)


@dataclass(frozen=True)
class AveragedDistance:
    value: float  # dbar_T(y, Omega)^2
    log_mass: float  # log of the Gaussian-weighted measure of Omega
    nearest: float  # d(y, Omega) over the nodes searched
    omega_measure: float
    tail_bound: float  # bound on the mass of Omega nodes beyond the search radius
    limit: float
    empty: bool
    T: float

    @property
    def lower_bound(self) -> float:
        """d(y, Omega)^2 - 2 T log |Omega|, which the value can never fall below."""
        if self.empty:
            return math.inf
        return self.nearest**2 - 2 * self.T * math.log(self.omega_measure)


def averaged_distance(domain: GridDomain, y, T: float, metric: str = "geodesic",
                      limit: float | None = None) -> AveragedDistance:
    """Squared averaged distance -2T log(sum over Omega of exp(-d^2/(2T)) dx).

    The geodesic search radius starts near sqrt(80 T) and doubles until the
    Gaussian mass of the unsearched Omega nodes is certified below 1% of the
    mass found. An explicit ``limit`` fixes the radius and only reports the tail.
    """
    if not (np.isfinite(T) and T > 0):
        raise InvalidInput(f"T must be positive, got {T}")
    w = domain.omega_weights
    sel = w > 0
    measure = float(w.sum())
    if not sel.any():
        return AveragedDistance(math.inf, -math.inf, math.inf, 0.0, 0.0, math.inf, True, float(T))
    logw = np.log(w[sel])
    diam = domain.h * math.sqrt(sum(s * s for s in domain.shape))
    radius = math.sqrt(80 * T) + 2 * domain.h if limit is None else float(limit)
    while True:
        lim = math.inf if (metric == "euclidean" or radius >= diam) else radius
        fd = geodesic_distance_field(domain, y, lim, metric)
        d = fd.distance[sel]
        hit = np.isfinite(d)
        log_mass = float(logsumexp(logw[hit] - d[hit] ** 2 / (2 * T))) if hit.any() else -math.inf
        out = float(w[sel][~hit].sum())
        log_tail = math.log(out) - lim**2 / (2 * T) if out > 0 else -math.inf
        tail = math.exp(log_tail) if log_tail > -700 else 0.0
        certified = log_tail <= log_mass + math.log(TAIL_FRACTION)
        if certified or limit is not None or not math.isfinite(lim):
            break
        radius *= 2
    if not certified and limit is not None:
        raise ResolutionError(f"Omega mass beyond radius {lim} is not below 1% of the mass found")
    nearest = float(d[hit].min()) if hit.any() else math.inf
    value = -2 * T * log_mass
    return AveragedDistance(value, log_mass, nearest, measure, tail, lim, False, float(T))


def bounded_distance(boundary_dist: float, T: float, n: int) -> float:
    """min{d_boundary, T pi^2 n / 4}."""
    if not boundary_dist > 0 or not T > 0:
        raise InvalidInput("boundary distance and T must be positive")
    return min(float(boundary_dist), T * math.pi**2 * n / 4)


# ---------------------------------------------------------------- GNC


@dataclass(frozen=True)
class GncReport:
    points: np.ndarray
    averaged_sq: np.ndarray  # dbar_{Tbar}(y_k, Omega)^2
    boundary: np.ndarray  # d_boundary(y_k)
    bounded: np.ndarray  # bounded distance at Tbar
    bounded_dbar: np.ndarray  # bounded distance at the shorter horizon Tdbar
    values: np.ndarray  # for the selected constant variant
    values_published: np.ndarray
    values_corrected: np.ndarray
    s_values: np.ndarray  # normalized sequence for the selected variant
    Tbar: float
    kappa: float
    epsilon: float
    kappa_prime: float
    alpha: float
    control_time: float
    Tdbar: float
    variant: str
    satisfied: bool
    verdict: str


def _increasing(values, start):
    tail = np.asarray(values[start:], float)
    return bool(tail.size >= 2 and np.all(np.diff(tail) > 0))


def gnc_evaluate(domain: GridDomain, points, Tbar: float, kappa: float, variant: str = "corrected",
                 epsilon: float | None = None, control_time: float | None = None,
                 increasing_from: int = 0, threshold: float = 0.0,
                 metric: str = "geodesic") -> GncReport:
    """Evaluate the geometric sequence at points y_k.

    value_k = dbar_{Tbar}(y_k, Omega)^2 - kappa c_n (Tbar / bounded_{Tbar}(y_k))^2 with
    c_n = pi^2 n^2 / 4 (published) or pi^2 n^2 (corrected). The split kappa = kappa' (1+eps)
    and Tbar = (1+alpha)(1+eps) T give s_k = dbar^2/(2 Tbar) - kappa' c_n Tdbar / (2 bounded_{Tdbar}^2)
    with Tdbar = (1+alpha) T. The verdict is numerical evidence of divergence only.
    """
    if not kappa > 1:
        raise HypothesisViolation(f"the geometric condition needs kappa > 1, got {kappa}")
    if variant not in GNC_CONSTANTS:
        raise InvalidInput(f"variant must be one of {list(GNC_CONSTANTS)}, got {variant!r}")
    if not Tbar > 0:
        raise InvalidInput("Tbar must be positive")
    eps = min(0.5, (kappa - 1) / 2) if epsilon is None else float(epsilon)
    if not (0 < eps < 1 and eps < kappa - 1):
        raise HypothesisViolation(f"epsilon must lie in (0, min(1, kappa - 1)), got {eps}")
    T = Tbar / (2 * (1 + eps)) if control_time is None else float(control_time)
    alpha = Tbar / ((1 + eps) * T) - 1
    if not alpha > 0:
        raise HypothesisViolation(f"control time {T} leaves no room below Tbar/(1+eps)")
    kp = kappa / (1 + eps)
    Tdbar = (1 + alpha) * T
    n = domain.n
    pts = np.array([np.atleast_1d(np.asarray(p, float)) for p in points])
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidInput("need at least one point")
    avg, bdist, bnd, bnd2 = [], [], [], []
    for p in pts:
        a = averaged_distance(domain, p, Tbar, metric)
        avg.append(a.value)
        b = boundary_distance(domain, p)
        bdist.append(b)
        bnd.append(bounded_distance(b, Tbar, n))
        bnd2.append(bounded_distance(b, Tdbar, n))
    avg, bdist, bnd, bnd2 = map(np.array, (avg, bdist, bnd, bnd2))
    base = math.pi**2 * n**2
    vals = {v: avg - kappa * c * base * (Tbar / bnd) ** 2 for v, c in GNC_CONSTANTS.items()}
    s = avg / (2 * Tbar) - kp * GNC_CONSTANTS[variant] * base * Tdbar / (2 * bnd2**2)
    values = vals[variant]
    ok = _increasing(values, increasing_from) and bool(values[-1] > threshold)
    verdict = ("GNC satisfied (numerical evidence: increasing and above threshold)" if ok
               else "GNC not indicated on these points")
    return GncReport(pts, avg, bdist, bnd, bnd2, values, vals["published"], vals["corrected"], s,
                     float(Tbar), float(kappa), eps, kp, alpha, T, Tdbar, variant, ok, verdict)


# ---------------------------------------------------------------- rod examples


@dataclass(frozen=True)
class RodUpper:
    value: float
    tail_bound: float


def rod_iii_upper(profile, T: float, z_k: float, truncation: float | None = None) -> RodUpper:
    """pi (R^2 * G_T)(z_k) = pi int R(z)^2 exp(-(z - z_k)^2 / (2T)) dz on a truncated axis.

    The axis defaults to z_k +- 40 sqrt(T). Beyond it the integrand is at most
    pi sup(R)^2 times the Gaussian tail, which must stay below 1% of the value.
    """
    prof = RProfile.from_spec(profile)
    if not T > 0:
        raise InvalidInput("T must be positive")
    half = 40 * math.sqrt(T) if truncation is None else float(truncation)
    lo, hi = z_k - half, z_k + half

    def f(z):
        return math.pi * float(prof(z)) ** 2 * math.exp(-((z - z_k) ** 2) / (2 * T))

    kinks = sorted({p for p in prof.kinks() + [z_k] if lo < p < hi})
    value, err = quad(f, lo, hi, points=kinks or None, limit=400, epsabs=0.0, epsrel=1e-11)
    tail = math.pi * prof.sup**2 * math.sqrt(2 * math.pi * T) * math.erfc(half / math.sqrt(2 * T))
    if tail + err > TAIL_FRACTION * value and (tail + err) > 0:
        raise ResolutionError(f"truncation tail {tail + err:.3e} exceeds 1% of {value:.3e}")
    return RodUpper(float(value), float(tail))


def omega_gaussian_mass(domain: GridDomain, y, T: float) -> float:
    """Grid value of int_Omega exp(-|m - y|^2/(2T)) dm with the Euclidean distance."""
    fd = geodesic_distance_field(domain, y, metric="euclidean")
    w = domain.omega_weights
    sel = w > 0
    return float(np.sum(w[sel] * np.exp(-fd.distance[sel] ** 2 / (2 * T))))


@dataclass(frozen=True)
class ShrinkRodReport:
    z: np.ndarray
    d: np.ndarray
    sequence: np.ndarray
    radius_ahead: np.ndarray  # R(z_k + d_k)
    width_ok: np.ndarray  # d_k >= sup R
    grid_boundary: np.ndarray | None
    grid_omega_distance: np.ndarray | None
    grid_ok: np.ndarray | None
    warnings: list
    divergent: bool


def shrinkrod_check(profile, z_list, d_list, kappa_prime: float, T: float, n: int = 3,
                    domain: GridDomain | None = None, increasing_from: int = 0,
                    threshold: float = 0.0) -> ShrinkRodReport:
    """Sequence d_k^2 - kappa' (pi^2 n^2 / 4) (T / R(z_k + d_k))^2 and its reductions.

    Hypothesis failures are collected as warnings. With a lattice domain, the
    reductions d_boundary(m_k) >= R(z_k + d_k) and d(m_k, Omega) >= d_k are
    checked up to one lattice step.
    """
    prof = RProfile.from_spec(profile)
    z = np.asarray(z_list, float)
    d = np.asarray(d_list, float)
    if z.shape != d.shape or z.size == 0:
        raise InvalidInput("z and d lists must be nonempty and of equal length")
    warnings = []
    if not kappa_prime > 1:
        warnings.append(f"kappa' = {kappa_prime} is not above 1")
    zs = np.linspace(0, float(np.max(z + d)) * 2 + 1, 2001)
    if np.any(np.diff(prof(zs)) > 0):
        warnings.append("profile is not nonincreasing")
    ahead = prof(z + d)
    with np.errstate(divide="ignore"):
        seq = d**2 - kappa_prime * math.pi**2 * n**2 / 4 * (T / ahead) ** 2
    width_ok = d >= prof.sup
    if not width_ok.all():
        warnings.append(f"d_k below sup R at indices {np.flatnonzero(~width_ok).tolist()}")
    gb = go = gok = None
    if domain is not None:
        h = domain.h
        gb, go = [], []
        sel = domain.omega_weights > 0
        for zk, dk in zip(z, d):
            m = np.array([0.0, 0.0, zk])
            gb.append(boundary_distance(domain, m))
            fd = geodesic_distance_field(domain, m, limit=dk + 4 * h)
            dd = fd.distance[sel]
            go.append(float(dd.min()) if np.isfinite(dd).any() else math.inf)
        gb, go = np.array(gb), np.array(go)
        gok = (gb >= ahead - h) & (go >= d - h)
        if not gok.all():
            warnings.append(f"grid reductions fail at indices {np.flatnonzero(~gok).tolist()}")
    divergent = _increasing(seq, increasing_from) and bool(seq[-1] > threshold)
    return ShrinkRodReport(z, d, seq, ahead, width_ok, gb, go, gok, warnings, divergent)


# ---------------------------------------------------------------- rod spectral model


@dataclass(frozen=True)
class RodModel:
    """Rod S x (lo, hi) observed on S x Z_Omega, as a Kronecker sum of factor and section."""

    product: ProductSystem
    section_rates: np.ndarray
    section_center: np.ndarray  # section eigenfunctions at the axis node
    lo: float
    length: float
    omega_z: list


def _subtract(intervals, slabs):
    out = []
    for a, b in intervals:
        pieces = [(a, b)]
        for c, w in slabs:
            nxt = []
            for p, q in pieces:
                if c + w <= p or c - w >= q:
                    nxt.append((p, q))
                    continue
                if c - w > p:
                    nxt.append((p, c - w))
                if c + w < q:
                    nxt.append((c + w, q))
            pieces = nxt
        out.extend(pieces)
    return out


def rod_model(spec: dict, z_modes: int, section_modes: int, q: int = 256) -> RodModel:
    """Spectral model of a rod with a full-section control region S x Z_Omega.

    The axial factor is the Dirichlet interval on the truncation with interior
    observation of Z_Omega (omega_z minus slabs); the section contributes the
    fibers b = -nu_i from the lattice Laplacian of the disk. Observing the full
    section keeps the observation in the form C x I.
    """
    from .numerics import sym_eig

    h = _positive(spec, "h")
    radius_s = _positive(spec, "section_radius", 1.0)
    lo, hi = _truncation(spec, [])
    length = hi - lo
    omega = _subtract([tuple(map(float, iv)) for iv in spec.get("omega_z", [(-1.0, 1.0)])],
                      [tuple(map(float, s)) for s in spec.get("slabs", [])])
    omega = [(a - lo, b - lo) for a, b in omega if b > a]
    if not omega:
        raise InvalidInput("control region is empty after removing the slabs")
    factor = interior_observation(length, z_modes, omega, q=q)
    xs, r2 = _section(radius_s, h)
    smask = r2 < radius_s**2
    sdom = GridDomain(h, np.array([xs[0], xs[0]]), smask, np.zeros(smask.shape), label="section")
    lap = grid_laplacian(sdom)
    dec = sym_eig(-lap.operator.toarray())
    k = min(int(section_modes), dec.eigenvalues.size)
    nu = dec.eigenvalues[:k]
    center = lap.unknown_index([0.0, 0.0])
    phi0 = dec.eigenvectors[center, :k] / h  # eigenvectors normalized with cell area h^2
    prod = kronecker_sum(factor, -nu)
    return RodModel(prod, nu, phi0, lo, length, omega)


def rod_kernel_datum(model: RodModel, z_k: float, t: float, prune: float = 1e-13) -> np.ndarray:
    """Modal coefficients of x -> K(t, x, (0, 0, z_k)) in the assembled product order.

    Coefficients below ``prune`` times the largest are set to zero; this drops
    section modes that vanish on the axis by symmetry.
    """
    f = model.product.factor
    s = z_k - model.lo
    if not 0 < s < model.length:
        raise InvalidInput(f"z_k = {z_k} lies outside the truncated rod")
    ez = math.sqrt(2 / model.length) * np.sin(np.arange(1, f.modes + 1) * math.pi * s / model.length)
    out = np.zeros(model.product.assembled.modes)
    for col, (j, m) in enumerate(model.product.mode_map):
        rate = model.product.assembled.rates[col]
        out[col] = math.exp(-rate * t) * ez[j] * model.section_center[m]
    big = np.abs(out).max()
    out[np.abs(out) < prune * big] = 0.0
    return out
