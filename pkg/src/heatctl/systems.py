"""Finite-dimensional observed heat systems.

A :class:`SpectralSystem` is the diagonal form of an observed heat equation:
the decay rates of the eigenmodes and, column by column, what the
observation operator sees of each mode. The 1-D Dirichlet interval is built
exactly from its sine basis. :func:`grid_laplacian` gives an independent
finite-difference model on masked lattices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, expm_multiply

from .errors import InvalidInput
from .grid import GridDomain

#: Midpoint-rule nodes per observed subinterval.
DEFAULT_QUADRATURE = 64


@dataclass(frozen=True, eq=False)
class SpectralSystem:
    """Rates lambda_j (ascending) of -A and observation columns C e_j."""

    rates: np.ndarray
    obs: np.ndarray
    label: str = ""

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float).reshape(-1)
        obs = np.asarray(self.obs, dtype=float)
        if obs.ndim != 2:
            obs = obs.reshape(-1, rates.size) if obs.size else np.zeros((0, rates.size))
        if rates.size == 0:
            raise InvalidInput("system needs at least one mode")
        if obs.shape[1] != rates.size:
            raise InvalidInput(f"obs has {obs.shape[1]} columns for {rates.size} modes")
        if not (np.all(np.isfinite(rates)) and np.all(np.isfinite(obs))):
            raise InvalidInput("system data must be finite")
        if np.any(np.diff(rates) < 0):
            raise InvalidInput("rates must be sorted ascending")
        rates.setflags(write=False)
        obs.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "obs", obs)

    @classmethod
    def sorted(cls, rates, obs, label="") -> tuple[SpectralSystem, np.ndarray]:
        """Build from unsorted modes; also returns the permutation applied."""
        rates = np.asarray(rates, dtype=float)
        order = np.argsort(rates, kind="stable")
        return cls(rates[order], np.asarray(obs, dtype=float)[:, order], label), order

    @property
    def modes(self) -> int:
        return self.rates.size

    def truncated(self, n: int) -> SpectralSystem:
        return SpectralSystem(self.rates[:n], self.obs[:, :n], self.label)


def _check_interval(L, N):
    if not L > 0 or not np.isfinite(L):
        raise InvalidInput(f"interval length must be positive, got {L}")
    if int(N) != N or N < 1:
        raise InvalidInput(f"mode count must be a positive integer, got {N}")


def interval_rates(L: float, N: int) -> np.ndarray:
    k = np.arange(1, int(N) + 1)
    return (k * np.pi / L) ** 2


def eigenfunctions(L: float, N: int, x) -> np.ndarray:
    """Matrix of e_k(x_i) = sqrt(2/L) sin(k pi x_i / L), shape (len(x), N)."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, int(N) + 1)
    return np.sqrt(2.0 / L) * np.sin(np.outer(x, k) * np.pi / L)


def dirichlet_interval_spectrum(L: float, N: int) -> SpectralSystem:
    """Rates (k pi / L)^2 of the Dirichlet Laplacian on (0, L), with no observation."""
    _check_interval(L, N)
    return SpectralSystem(interval_rates(L, N), np.zeros((0, int(N))), f"interval L={L!r} N={N}")


def boundary_observation(L: float, N: int) -> SpectralSystem:
    """Normal derivative at x = 0: entries (k pi / L) sqrt(2/L)."""
    _check_interval(L, N)
    k = np.arange(1, int(N) + 1)
    obs = (k * np.pi / L * np.sqrt(2.0 / L))[None, :]
    return SpectralSystem(interval_rates(L, N), obs, f"boundary L={L!r} N={N}")


def merge_intervals(omega) -> list[tuple[float, float]]:
    spans = sorted((float(a), float(b)) for a, b in omega)
    merged: list[list[float]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [tuple(s) for s in merged]


def interior_observation(L: float, N: int, omega, q: int = DEFAULT_QUADRATURE) -> SpectralSystem:
    """Restriction to a union of subintervals, as rows sqrt(w_i) e_j(x_i).

    With midpoint nodes x_i and weights w_i, obs.T @ obs approximates the mass
    matrix of the modes restricted to Omega.
    """
    _check_interval(L, N)
    omega = list(omega)
    if not omega:
        raise InvalidInput("observation region is empty")
    if q < 1:
        raise InvalidInput("quadrature needs at least one node per subinterval")
    for a, b in omega:
        if not (0.0 <= a < b <= L):
            raise InvalidInput(f"subinterval ({a}, {b}) is not a nonempty part of (0, {L})")
    nodes, weights = [], []
    for a, b in merge_intervals(omega):
        w = (b - a) / q
        nodes.append(a + w * (np.arange(q) + 0.5))
        weights.append(np.full(q, w))
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    obs = np.sqrt(w)[:, None] * eigenfunctions(L, N, x)
    return SpectralSystem(interval_rates(L, N), obs, f"interior L={L!r} N={N} omega={omega}")


@dataclass(frozen=True, eq=False)
class GridSystem:
    """Second-difference Dirichlet Laplacian on the nodes of a masked lattice."""

    domain: GridDomain
    operator: sp.csr_matrix  # acts on the vector of mask nodes in C order
    nodes: np.ndarray  # flat lattice indices of the unknowns

    @property
    def h(self) -> float:
        return self.domain.h

    def unknown_index(self, point) -> int:
        idx = self.domain.inside(point)
        flat = np.ravel_multi_index(idx, self.domain.shape)
        return int(np.searchsorted(self.nodes, flat))

    def smallest_rates(self, k: int = 1) -> np.ndarray:
        """The k smallest eigenvalues of -operator, ascending."""
        size = self.operator.shape[0]
        if size <= max(k + 1, 64):
            vals = np.linalg.eigvalsh(-self.operator.toarray())
            return vals[:k]
        vals = eigsh(-self.operator, k=k, sigma=0, which="LM", return_eigenvectors=False)
        return np.sort(vals)

    def semigroup(self, t: float, v) -> np.ndarray:
        return expm_multiply(t * self.operator, np.asarray(v, dtype=float))

    def kernel(self, t: float, y) -> np.ndarray:
        """Discrete heat kernel x -> K(t, x, y) on the lattice (zero outside the mask)."""
        delta = np.zeros(self.operator.shape[0])
        delta[self.unknown_index(y)] = 1.0 / self.h**self.domain.n
        field = np.zeros(self.domain.shape)
        field.flat[self.nodes] = self.semigroup(t, delta)
        return field


def grid_laplacian(domain: GridDomain) -> GridSystem:
    """(2n+1)-point Laplacian with exterior nodes eliminated (Dirichlet)."""
    mask = domain.mask
    nodes = np.flatnonzero(mask)
    if nodes.size == 0:
        raise InvalidInput("domain has no interior node")
    number = np.full(mask.shape, -1, dtype=np.int64)
    number.flat[nodes] = np.arange(nodes.size)
    n = mask.ndim
    rows = [np.arange(nodes.size)]
    cols = [np.arange(nodes.size)]
    vals = [np.full(nodes.size, -2.0 * n)]
    for k in range(n):
        for step in (-1, 1):
            nb = np.roll(number, -step, axis=k)
            edge = [slice(None)] * n
            edge[k] = -1 if step == 1 else 0
            nb[tuple(edge)] = -1
            ok = mask & (nb >= 0)
            rows.append(number[ok])
            cols.append(nb[ok])
            vals.append(np.ones(int(ok.sum())))
    op = sp.csr_matrix(
        (np.concatenate(vals) / domain.h**2, (np.concatenate(rows), np.concatenate(cols))),
        shape=(nodes.size, nodes.size),
    )
    return GridSystem(domain, op, nodes)
