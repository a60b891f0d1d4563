"""Masked uniform lattices standing in for open sets M and control regions Omega."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInput


@dataclass(frozen=True, eq=False)
class GridDomain:
    """A lattice of nodes x = origin + i*h; ``mask`` marks nodes inside M.

    ``omega_weights`` holds the measure carried by each node of Omega. It is
    ``h**n`` for whole cells and smaller for thin control regions that are
    resolved below the lattice spacing. Nodes outside the array count as
    exterior, so every domain has a Dirichlet boundary.
    """

    h: float
    origin: np.ndarray
    mask: np.ndarray
    omega_weights: np.ndarray
    truncation: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        weights = np.asarray(self.omega_weights, dtype=float)
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        if mask.ndim not in (1, 2, 3):
            raise InvalidInput(f"dimension must be 1, 2 or 3, got {mask.ndim}")
        if not self.h > 0:
            raise InvalidInput(f"grid spacing must be positive, got {self.h}")
        if origin.shape != (mask.ndim,):
            raise InvalidInput(f"origin must have {mask.ndim} coordinates")
        if weights.shape != mask.shape:
            raise InvalidInput("omega weights must match the mask shape")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InvalidInput("omega weights must be finite and nonnegative")
        if np.any((weights > 0) & ~mask):
            raise InvalidInput("control region is not contained in the domain")
        if not mask.any():
            raise InvalidInput("domain mask is empty")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "omega_weights", weights)
        object.__setattr__(self, "origin", origin)

    @property
    def n(self) -> int:
        return self.mask.ndim

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def omega_mask(self) -> np.ndarray:
        return self.omega_weights > 0

    @property
    def omega_measure(self) -> float:
        return float(self.omega_weights.sum())

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.h**self.n

    def coords(self, index) -> np.ndarray:
        return self.origin + self.h * np.asarray(index, dtype=float)

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.shape[k])

    def nearest_index(self, point) -> tuple:
        """Lattice index of the node nearest to ``point``; rejects points off the lattice."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.n,):
            raise InvalidInput(f"point must have {self.n} coordinates, got {p.tolist()}")
        idx = np.rint((p - self.origin) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise InvalidInput(f"point {p.tolist()} lies outside the lattice")
        return tuple(int(i) for i in idx)

    def inside(self, point) -> tuple:
        idx = self.nearest_index(point)
        if not self.mask[idx]:
            raise InvalidInput(f"point {np.atleast_1d(point).tolist()} is not inside the domain")
        return idx

    def with_omega(self, omega_weights, label=None) -> GridDomain:
        return GridDomain(self.h, self.origin, self.mask, omega_weights, dict(self.truncation), label or self.label)

    def translated(self, shift) -> GridDomain:
        return GridDomain(self.h, self.origin + np.asarray(shift, float), self.mask, self.omega_weights,
                          dict(self.truncation), self.label)


def check_connected(mask: np.ndarray) -> int:
    """Number of connected components of the mask (full lattice connectivity)."""
    structure = ndimage.generate_binary_structure(mask.ndim, mask.ndim)
    _, count = ndimage.label(mask, structure=structure)
    return count


def box_domain(edges, h: float, omega=None) -> GridDomain:
    """Box prod_k (0, edges[k]) with nodes at multiples of h; boundary nodes are exterior.

    ``omega`` is an optional list of per-axis (lo, hi) intervals whose product is
    the control region (nodes with lo <= x <= hi).
    """
    edges = np.atleast_1d(np.asarray(edges, dtype=float))
    if np.any(edges <= 0):
        raise InvalidInput("box edges must be positive")
    counts = np.rint(edges / h).astype(int)
    if np.any(np.abs(counts * h - edges) > 1e-9 * edges):
        raise InvalidInput(f"edges {edges.tolist()} are not multiples of h={h}")
    if np.any(counts < 2):
        raise InvalidInput("box has no interior node at this spacing")
    shape = tuple(int(c) + 1 for c in counts)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = True
    weights = np.zeros(shape)
    if omega is not None:
        if len(omega) != len(shape):
            raise InvalidInput("omega must give one interval per axis")
        inside = np.ones(shape, dtype=bool)
        for k, (lo, hi) in enumerate(omega):
            x = h * np.arange(shape[k])
            sel = (x >= lo - 1e-12) & (x <= hi + 1e-12)
            view = [None] * len(shape)
            view[k] = slice(None)
            inside &= sel[tuple(view)]
        weights[inside & mask] = h ** len(shape)
    return GridDomain(h, np.zeros(len(shape)), mask, weights, label=f"box{tuple(edges.tolist())}")
