"""Lattice discretization of the domain and grid functions on it.

The grid is the full tensor lattice of the domain's bounding box; nodes
are classified as interior (inside the domain with all axis neighbors in
the closure), boundary (in the closure but not interior; these carry the
Dirichlet data), or outside.  For boxes the lattice is aligned with the
faces, so boundary nodes sit exactly on the boundary; for balls they sit
within one spacing of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainSpec

__all__ = ["DomainGrid", "ValueField"]


@dataclass(frozen=True)
class DomainGrid:
    domain: DomainSpec
    origin: np.ndarray  # (d,)
    spacing: np.ndarray  # (d,)
    lattice_shape: tuple[int, ...]
    coords: np.ndarray  # (N, d) over the full lattice
    in_closure: np.ndarray  # (N,) bool
    interior: np.ndarray  # (N,) bool
    boundary: np.ndarray  # (N,) bool
    strides: tuple[int, ...]

    @staticmethod
    def build(domain: DomainSpec, h: float) -> "DomainGrid":
        """Uniform lattice with spacing snapped so the box divides evenly."""
        if h <= 0:
            raise ValueError("grid spacing must be positive")
        lo, up = domain.bounding_box()
        d = domain.dimension
        counts = np.maximum(np.round((up - lo) / h).astype(int), 2)
        spacing = (up - lo) / counts
        shape = tuple(int(c) + 1 for c in counts)
        axes = [lo[i] + spacing[i] * np.arange(shape[i]) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        tol = 1e-9 * float(np.min(spacing))
        dist = domain.boundary_distance(coords)
        in_closure = dist >= -tol
        strides = tuple(int(s) for s in np.cumprod((1,) + shape[:0:-1])[::-1])
        n = coords.shape[0]
        inside = dist > tol
        interior = inside.copy()
        lattice = np.stack([m.ravel() for m in np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")], axis=1)
        for i in range(d):
            at_lo = lattice[:, i] == 0
            at_hi = lattice[:, i] == shape[i] - 1
            interior &= ~at_lo & ~at_hi
            nb_ok = np.zeros(n, dtype=bool)
            idx = np.arange(n)
            safe = ~at_lo & ~at_hi
            nb_ok[safe] = in_closure[idx[safe] + strides[i]] & in_closure[idx[safe] - strides[i]]
            interior &= nb_ok
        boundary = in_closure & ~interior
        return DomainGrid(
            domain=domain,
            origin=lo,
            spacing=spacing,
            lattice_shape=shape,
            coords=coords,
            in_closure=in_closure,
            interior=interior,
            boundary=boundary,
            strides=strides,
        )

    @property
    def d(self) -> int:
        return self.domain.dimension

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def interior_idx(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def boundary_idx(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def axis_neighbors(self, idx: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices of the +/- neighbors along ``axis`` (valid on interior)."""
        return idx + self.strides[axis], idx - self.strides[axis]

    def diagonal_neighbors(self, idx: np.ndarray, ax_i: int, ax_j: int):
        """The four diagonal neighbors (++, --, +-, -+) in the (i, j) plane."""
        si, sj = self.strides[ax_i], self.strides[ax_j]
        return idx + si + sj, idx - si - sj, idx + si - sj, idx - si + sj

    def nearest_node(self, x: np.ndarray) -> np.ndarray:
        """Flat index of the nearest lattice node, clipped to the lattice."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.round((x - self.origin) / self.spacing).astype(int)
        flat = np.zeros(x.shape[0], dtype=int)
        for i in range(self.d):
            ki = np.clip(k[:, i], 0, self.lattice_shape[i] - 1)
            flat += ki * self.strides[i]
        return flat


@dataclass
class ValueField:
    """Scalar grid function; NaN on lattice nodes outside the closure."""

    grid: DomainGrid
    values: np.ndarray  # (N,)

    @staticmethod
    def zeros(grid: DomainGrid) -> "ValueField":
        v = np.full(grid.n_nodes, np.nan)
        v[grid.in_closure] = 0.0
        return ValueField(grid, v)

    @staticmethod
    def from_function(grid: DomainGrid, fn) -> "ValueField":
        v = np.full(grid.n_nodes, np.nan)
        mask = grid.in_closure
        v[mask] = fn(grid.coords[mask])
        return ValueField(grid, v)

    def copy(self) -> "ValueField":
        return ValueField(self.grid, self.values.copy())

    def interpolate(self, x: np.ndarray) -> np.ndarray:
        """Multilinear interpolation; nearest-node fallback at masked cells."""
        g = self.grid
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = (x - g.origin) / g.spacing
        base = np.floor(t).astype(int)
        for i in range(g.d):
            base[:, i] = np.clip(base[:, i], 0, g.lattice_shape[i] - 2)
        frac = t - base
        frac = np.clip(frac, 0.0, 1.0)
        out = np.zeros(x.shape[0])
        bad = np.zeros(x.shape[0], dtype=bool)
        best_w = np.full(x.shape[0], -1.0)  # heaviest unmasked corner, for fallback
        best_val = np.full(x.shape[0], np.nan)
        for corner in range(1 << g.d):
            w = np.ones(x.shape[0])
            flat = np.zeros(x.shape[0], dtype=int)
            for i in range(g.d):
                bit = (corner >> i) & 1
                w *= frac[:, i] if bit else 1.0 - frac[:, i]
                flat += (base[:, i] + bit) * g.strides[i]
            vals = self.values[flat]
            ok = ~np.isnan(vals)
            bad |= ~ok & (w > 0)
            improve = ok & (w > best_w)
            best_w[improve] = w[improve]
            best_val[improve] = vals[improve]
            out += np.where(ok, vals, 0.0) * w
        if bad.any():
            out[bad] = best_val[bad]
            still = bad & np.isnan(out)
            if still.any():
                out[still] = self.values[g.nearest_node(x[still])]
        return out

    def sup_diff(self, other: "ValueField") -> float:
        mask = self.grid.in_closure
        return float(np.max(np.abs(self.values[mask] - other.values[mask])))

    def to_csv(self, path) -> None:
        g = self.grid
        mask = g.in_closure
        header = ",".join(f"x{i + 1}" for i in range(g.d)) + ",value"
        rows = np.concatenate([g.coords[mask], self.values[mask, None]], axis=1)
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
