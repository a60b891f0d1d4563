"""Observability Gramians, control costs and minimal-norm controls.

For the diagonal system z' = -diag(rates) z observed through ``obs``, the
Gramian G_jk = (C e_j . C e_k) phi(lambda_j + lambda_k, T) is the quadratic
form of the output energy int_0^T |C z(t)|^2 dt. The null-controllability cost
satisfies kappa_T^2 = sup z^T E z / z^T G z with E = diag(exp(-2 lambda T)).

These Gramians are Cauchy-like and become extremely ill-conditioned as the
number of modes grows, far beyond what double precision resolves. With
``precision="auto"`` the Gramian is rebuilt from the (exact) float inputs in
multiprecision arithmetic, with enough bits for the observed conditioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import numerics as nm
from .errors import HeatctlError, InvalidInput, NotNullControllable, SingularSystemError
from .systems import SpectralSystem, boundary_observation

#: Below this condition estimate of the scaled Gramian double precision is trusted.
DOUBLE_COND_LIMIT = 1e4
MIN_BITS = 128
#: First multiprecision attempt; covers condition numbers up to about 1e48.
START_BITS = 256
MAX_BITS = 4096
#: Extra mantissa bits kept beyond log2 of the condition estimate.
GUARD_BITS = 96
SERIES_CUTOFF = 1e-8

_mp_expm1 = np.frompyfunc(gmpy2.expm1, 1, 1)
_mp_exp = np.frompyfunc(gmpy2.exp, 1, 1)


def phi(s, T: float):
    """(1 - exp(-s T)) / s, equal to T at s = 0, elementwise on float arrays."""
    s = np.asarray(s, dtype=float)
    x = s * T
    small = np.abs(x) < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, T * (1.0 - x / 2.0 + x * x / 6.0), -np.expm1(-x) / np.where(small, 1.0, s))
    return out


def _phi_mp(r: np.ndarray, T) -> np.ndarray:
    """Matrix phi(r_j + r_k, T) for an mpfr vector r (expm1 keeps full precision)."""
    n = r.size
    out = np.empty((n, n), dtype=object)
    T = gmpy2.mpfr(T)
    for j in range(n):
        for k in range(j, n):
            v = r[j] + r[k]
            out[j, k] = out[k, j] = T if v == 0 else -gmpy2.expm1(-v * T) / v
    return out


def _check_horizon(T):
    if not (isinstance(T, (int, float, np.floating)) and T > 0 and math.isfinite(T)):
        raise InvalidInput(f"horizon T must be positive and finite, got {T!r}")


# --------------------------------------------------------------------------
# Gramian assembly


def coupled_blocks(obs: np.ndarray) -> list[np.ndarray]:
    """Groups of modes whose observation supports overlap (transitively).

    Modes in different groups have orthogonal observation columns, so the
    Gramian is block diagonal along this partition.
    """
    n = obs.shape[1]
    support = csr_matrix(obs != 0)
    pattern = (support.T @ support).astype(bool)
    pattern = pattern + csr_matrix((np.ones(n, dtype=bool), (np.arange(n), np.arange(n))), shape=(n, n))
    count, labels = connected_components(pattern, directed=False)
    return [np.flatnonzero(labels == c) for c in range(count)]


def observability_gramian(sys: SpectralSystem, T: float) -> np.ndarray:
    """Double-precision Gramian (C e_j . C e_k) phi(lambda_j + lambda_k, T)."""
    _check_horizon(T)
    cc = sys.obs.T @ sys.obs
    g = cc * phi(sys.rates[:, None] + sys.rates[None, :], T)
    return 0.5 * (g + g.T)


def _gramian_mp(sys: SpectralSystem, T: float, blocks) -> np.ndarray:
    """Gramian in the active gmpy2 precision, assembled block by block.

    Identical observation blocks (as in Kronecker products) share one
    inner-product computation.
    """
    n = sys.modes
    zero = gmpy2.mpfr(0)
    g = np.empty((n, n), dtype=object)
    g.fill(zero)
    rates = nm.to_mp(sys.rates)
    cache: dict = {}
    for idx in blocks:
        ob = sys.obs[:, idx]
        rows = np.flatnonzero(np.any(ob != 0, axis=1))
        ob = ob[rows]
        key = (ob.shape, ob.tobytes())
        if key not in cache:
            m = nm.to_mp(ob)
            cache[key] = m.T @ m if ob.size else np.full((idx.size, idx.size), zero, dtype=object)
        r = rates[idx]
        g[np.ix_(idx, idx)] = cache[key] * _phi_mp(r, T)
    return g


def _end_form_mp(sys: SpectralSystem, T: float) -> np.ndarray:
    n = sys.modes
    e = np.empty((n, n), dtype=object)
    e.fill(gmpy2.mpfr(0))
    d = _mp_exp(-2 * nm.to_mp(sys.rates) * gmpy2.mpfr(T))
    for i in range(n):
        e[i, i] = d[i]
    return e


def admissibility_constant(sys: SpectralSystem, T: float) -> float:
    """K_T, the largest eigenvalue of the Gramian."""
    g = observability_gramian(sys, T)
    if not np.any(g):
        return 0.0
    return float(max(nm.sym_eig(g, relative=False).eigenvalues[-1], 0.0))


def _cond_estimate(g: np.ndarray, blocks) -> float:
    """Condition estimate of the diagonally scaled Gramian from a float pivoted Cholesky."""
    worst = 1.0
    for idx in blocks:
        gb = g[np.ix_(idx, idx)]
        d = gb.diagonal()
        if np.any(d <= 0):
            continue  # structurally unobserved modes are handled exactly later
        s = 1.0 / np.sqrt(d)
        chol = nm.pivoted_cholesky(gb * np.outer(s, s), tol=0.0)
        if chol.rank < idx.size or min(chol.pivots) <= 0:
            return math.inf
        worst = max(worst, idx.size / float(min(chol.pivots)))
    return worst


def _resolve_bits(precision, g: np.ndarray, blocks) -> tuple[int, float]:
    if precision == "double":
        return nm.DOUBLE_BITS, _cond_estimate(g, blocks)
    if precision == "auto":
        cond = _cond_estimate(g, blocks)
        if cond <= DOUBLE_COND_LIMIT:
            return nm.DOUBLE_BITS, cond
        return MIN_BITS, cond
    bits = int(precision)
    if bits < nm.DOUBLE_BITS:
        raise InvalidInput(f"precision must be at least {nm.DOUBLE_BITS} bits")
    return bits, math.nan


def _scaled_cond(g: np.ndarray, blocks, bits: int) -> float:
    """Condition estimate n / min pivot of the diagonally scaled mpfr Gramian.

    Returns inf when the pivoted Cholesky stops early at the working precision.
    Blocks with a vanishing diagonal entry are skipped; they are handled
    exactly by the generalized eigensolver.
    """
    worst = 1.0
    for idx in blocks:
        gb = g[np.ix_(idx, idx)]
        d = nm._diag(gb)
        if any(not v > 0 for v in d):
            continue
        s = 1 / nm._sqrt(d)
        chol = nm.pivoted_cholesky(gb * np.outer(s, s), tol=nm._null_threshold(nm.NULL_TOL, bits))
        if chol.rank < idx.size:
            return math.inf
        worst = max(worst, idx.size / float(min(chol.pivots)))
    return worst


def _bits_for(cond: float) -> int:
    if not math.isfinite(cond):
        return MAX_BITS
    return int(math.ceil(math.log2(max(cond, 2.0)))) + GUARD_BITS


# --------------------------------------------------------------------------
# cost


@dataclass
class CostReport:
    """Cost and admissibility data for one system and horizon.

    ``kappa`` is ``math.inf`` when some decaying direction is not observed;
    ``null_direction`` then holds such a direction. ``worst_state`` is a unit
    initial state whose minimal control energy equals kappa^2.
    """

    horizon: float
    kappa: float
    kappa_sq: float
    admissibility: float
    modes: int
    gramian_min_eig: float
    precision_bits: int
    cond_estimate: float
    worst_state: np.ndarray | None = None
    null_direction: np.ndarray | None = None
    null_kind: str | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.kappa)


def _adaptive_gramian(sys: SpectralSystem, T: float, blocks) -> tuple[int, np.ndarray, float]:
    """Multiprecision Gramian at the smallest tried precision that resolves it.

    The precision is raised until the pivoted Cholesky of the scaled Gramian
    completes with GUARD_BITS to spare, or MAX_BITS is reached.
    """
    bits = START_BITS
    while True:
        with nm.mp_precision(bits):
            gm = _gramian_mp(sys, T, blocks)
            cond = _scaled_cond(gm, blocks, bits)
        if bits >= MAX_BITS:
            return bits, gm, cond
        if not math.isfinite(cond):
            bits = min(MAX_BITS, 2 * bits)
            continue
        need = _bits_for(cond)
        if need <= bits:
            return bits, gm, cond
        bits = min(MAX_BITS, need + 32)


def _top_pair(sys: SpectralSystem, T: float, precision="auto") -> tuple[nm.GenEig, float]:
    g = observability_gramian(sys, T)
    blocks = coupled_blocks(sys.obs) if sys.obs.size else [np.arange(sys.modes)]
    bits, cond = _resolve_bits(precision, g, blocks)
    if bits == nm.DOUBLE_BITS:
        e = np.diag(np.exp(-2.0 * sys.rates * T))
        return nm.gen_eig_top(e, g), cond
    if precision != "auto":
        with nm.mp_precision(bits):
            res = nm.gen_eig_top(_end_form_mp(sys, T), _gramian_mp(sys, T, blocks))
        return res, res.cond
    bits, gm, _ = _adaptive_gramian(sys, T, blocks)
    with nm.mp_precision(bits):
        res = nm.gen_eig_top(_end_form_mp(sys, T), gm)
    return res, res.cond


def control_cost(sys: SpectralSystem, T: float, precision="auto", diagnostics: bool = True) -> CostReport:
    """kappa_T with kappa_T^2 = gen_eig_max(diag(exp(-2 lambda T)), G).

    ``precision`` is ``"auto"``, ``"double"`` or a mantissa size in bits.
    With ``diagnostics=False`` the Gramian spectrum is skipped and
    ``admissibility`` and ``gramian_min_eig`` are NaN.
    """
    _check_horizon(T)
    res, cond = _top_pair(sys, T, precision)
    g = observability_gramian(sys, T)
    if not diagnostics:
        eig = np.array([math.nan])
    elif np.any(g):
        eig = nm.sym_eig(g, relative=False).eigenvalues
    else:
        eig = np.zeros(sys.modes)
    admissibility = float(max(eig[-1], 0.0))
    if res.value == math.inf:
        return CostReport(T, math.inf, math.inf, admissibility, sys.modes, float(eig[0]), res.bits, cond,
                          None, res.null_direction, res.null_kind)
    worst = None
    if res.vector is not None and np.any(res.vector):
        w = np.exp(-sys.rates * T) * res.vector
        if not np.any(w):
            w = np.zeros(sys.modes)
            w[int(np.argmax(np.abs(res.vector)))] = 1.0
        worst = w / np.linalg.norm(w)
    return CostReport(T, math.sqrt(res.value), res.value, admissibility, sys.modes, float(eig[0]), res.bits,
                      cond, worst)


# --------------------------------------------------------------------------
# minimal-norm control


@dataclass
class ControlTrajectory:
    """Sampled HUM control u(t) = -C exp((T - t) A) eta and its certificates.

    ``energy`` is the exact squared L2 norm eta^T G eta; ``energy_trapezoid``
    is the trapezoidal estimate from the samples. ``residual`` is |zeta(T)|,
    evaluated from the modal closed form.
    """

    times: np.ndarray
    values: np.ndarray  # (samples, q)
    eta: np.ndarray
    energy: float
    energy_trapezoid: float
    residual: float
    precision_bits: int


def min_norm_control(sys: SpectralSystem, T: float, zeta0, samples: int = 201,
                     precision="auto") -> ControlTrajectory:
    """HUM control steering zeta0 to rest at time T for zeta' = A zeta + C^T u."""
    _check_horizon(T)
    zeta0 = np.asarray(zeta0, dtype=float).reshape(-1)
    if zeta0.size != sys.modes or not np.all(np.isfinite(zeta0)):
        raise InvalidInput(f"zeta0 must be a finite vector of length {sys.modes}")
    if samples < 2:
        raise InvalidInput("need at least two time samples")
    times = np.linspace(0.0, T, samples)
    q = sys.obs.shape[0]
    if not np.any(zeta0):
        return ControlTrajectory(times, np.zeros((samples, q)), np.zeros(sys.modes), 0.0, 0.0, 0.0,
                                 nm.DOUBLE_BITS)
    g = observability_gramian(sys, T)
    blocks = coupled_blocks(sys.obs) if sys.obs.size else [np.arange(sys.modes)]
    bits, cond = _resolve_bits(precision, g, blocks)
    if bits == nm.DOUBLE_BITS:
        try:
            eta = nm.to_mp(nm.solve_spd(g, np.exp(-sys.rates * T) * zeta0))
        except SingularSystemError as exc:
            raise NotNullControllable(f"Gramian is singular: {exc}") from exc
        bits = 160  # certificates are still evaluated with extra digits
        with nm.mp_precision(bits):
            gm = _gramian_mp(sys, T, blocks)
    elif precision == "auto":
        bits, gm, cond = _adaptive_gramian(sys, T, blocks)
        eta = None
    else:
        with nm.mp_precision(bits):
            gm = _gramian_mp(sys, T, blocks)
        eta = None
    with nm.mp_precision(bits):
        decay = _mp_exp(-nm.to_mp(sys.rates) * gmpy2.mpfr(T))
        target = decay * nm.to_mp(zeta0)
        if eta is None:
            try:
                eta = nm.solve_spd(gm, target)
            except SingularSystemError as exc:
                raise NotNullControllable(f"Gramian is singular at {bits} bits of precision") from exc
        residual_mp = target - gm @ eta
        residual = math.sqrt(float(sum(v * v for v in residual_mp)))
        energy = float(eta @ (gm @ eta))
        obs_mp = nm.to_mp(sys.obs)
        rates = nm.to_mp(sys.rates)
        vals = np.zeros((samples, q))
        for i, t in enumerate(times):
            if q:
                w = _mp_exp(-rates * (gmpy2.mpfr(T) - gmpy2.mpfr(t))) * eta
                vals[i] = nm.to_float(-(obs_mp @ w))
        eta_float = nm.to_float(eta)
    sq = np.sum(vals**2, axis=1)
    trapezoid = float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(times)))
    return ControlTrajectory(times, vals, eta_float, energy, trapezoid, residual, bits)


# --------------------------------------------------------------------------
# observability quotient


def observability_quotient(sys: SpectralSystem, T: float, f0, max_bits: int = MAX_BITS) -> float:
    """|exp(T A) f0|^2 / (f0^T G f0), or inf when the denominator vanishes.

    The denominator is evaluated with enough digits to survive the
    cancellation between modes of opposite sign.
    """
    _check_horizon(T)
    f0 = np.asarray(f0, dtype=float).reshape(-1)
    if f0.size != sys.modes or not np.all(np.isfinite(f0)):
        raise InvalidInput(f"f0 must be a finite vector of length {sys.modes}")
    if not np.any(f0):
        raise InvalidInput("f0 must be nonzero")
    keep = np.flatnonzero(f0)
    sub = SpectralSystem(sys.rates[keep], sys.obs[:, keep], sys.label)
    f = f0[keep]
    g = observability_gramian(sub, T)
    num = float(np.sum((np.exp(-sub.rates * T) * f) ** 2))
    scale = float(np.abs(f) @ np.abs(g) @ np.abs(f))
    if scale == 0.0:
        return math.inf
    den = float(f @ g @ f)
    if den > 1e-4 * scale:
        return num / den
    blocks = coupled_blocks(sub.obs)
    bits = MIN_BITS
    while True:
        with nm.mp_precision(bits):
            fm = nm.to_mp(f)
            den_mp = fm @ (_gramian_mp(sub, T, blocks) @ fm)
            decay = _mp_exp(-nm.to_mp(sub.rates) * gmpy2.mpfr(T)) * fm
            num_mp = decay @ decay
            # roundoff in the denominator is at most about scale * n * 2^-bits
            if den_mp > scale * sub.modes * 2.0 ** (20 - bits):
                return float(num_mp / den_mp)
        if bits >= max_bits:
            return math.inf
        bits = min(max_bits, 2 * bits)


# --------------------------------------------------------------------------
# small-time cost probe


@dataclass(frozen=True)
class ProbeRow:
    horizon: float
    modes: int
    kappa: float
    normalized_log_cost: float  # T ln(kappa_T) / L^2
    precision_bits: int


def probe_modes(L: float, T: float, coeff: float) -> int:
    """Smallest N with (N pi / L)^2 >= coeff / T."""
    n = max(1, math.ceil(L * math.sqrt(coeff / T) / math.pi - 1e-12))
    while (n * math.pi / L) ** 2 < coeff / T:
        n += 1
    return n


def alpha_star_probe(L: float, T_list, rate_cutoff_coeff: float = 100.0) -> list[ProbeRow]:
    """Normalized log-costs T ln(kappa_T) / L^2 of boundary control on (0, L).

    The mode count grows with 1/T so that all modes that can matter at
    horizon T are kept; with a fixed mode count the small-time blow-up of the
    cost would be cut off. This is a consistency probe, not a computation of
    the optimal rate.
    """
    T_list = list(T_list)
    if not T_list:
        raise InvalidInput("T_list is empty")
    if not L > 0:
        raise InvalidInput(f"L must be positive, got {L}")
    if not rate_cutoff_coeff > 0:
        raise InvalidInput("rate_cutoff_coeff must be positive")
    limit = min(math.pi, L) ** 2
    rows = []
    for T in T_list:
        _check_horizon(T)
        if T > limit:
            raise InvalidInput(f"T={T} exceeds the probe range T <= min(pi, L)^2 = {limit:.6g}")
        n = probe_modes(L, T, rate_cutoff_coeff)
        rep = control_cost(boundary_observation(L, n), T)
        if not rep.finite:
            raise HeatctlError(f"cost is infinite at T={T}, N={n}")
        rows.append(ProbeRow(T, n, rep.kappa, T * math.log(rep.kappa) / L**2, rep.precision_bits))
    return rows
