"""Quenched point configurations and their geometric interaction graphs.

A configuration is a finite set of labelled points in a d-dimensional
window.  Sites interact when their Euclidean distance is at most the
interaction radius ``rho``; the resulting graph is immutable once built and
safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rng import generator

# Brute-force neighbour search is used below this site count; larger
# configurations go through a uniform-grid bucket index.
_GRID_INDEX_THRESHOLD = 2000


@dataclass(frozen=True)
class Point:
    """A position in R^d."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ParameterError("point coordinates must be a 1-d vector, d >= 1")
        if not np.all(np.isfinite(c)):
            raise ParameterError("point coordinates must be finite")
        object.__setattr__(self, "coords", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True)
class Configuration:
    """Labelled point set inside an axis-aligned window.

    ``positions`` has shape (N, d); site ids are dense 0..N-1 and index the
    rows.  ``window`` is a (d, 2) array of [lo, hi] per axis.
    """

    positions: np.ndarray
    window: np.ndarray

    def __post_init__(self):
        win = np.asarray(self.window, dtype=float)
        if win.ndim != 2 or win.shape[1] != 2:
            raise ParameterError("window must have shape (d, 2)")
        if np.any(win[:, 0] >= win[:, 1]):
            raise ParameterError("window must be non-degenerate (lo < hi per axis)")
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.size == 0:
            pos = pos.reshape(0, win.shape[0])
        if pos.shape[0] > 0:
            if pos.shape[1] != win.shape[0]:
                raise ParameterError("positions and window dimension mismatch")
            if not np.all(np.isfinite(pos)):
                raise ParameterError("positions must be finite")
            inside = (pos >= win[None, :, 0] - 1e-12) & (pos <= win[None, :, 1] + 1e-12)
            if not np.all(inside):
                raise ParameterError("all points must lie inside the window")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "window", win)

    def window_array(self) -> np.ndarray:
        return np.asarray(self.window, dtype=float)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.window.shape[0]

    def point(self, site_id: int) -> Point:
        return Point(self.positions[site_id])

    def radii(self) -> np.ndarray:
        """Euclidean norm |x| of every site position."""
        if self.n_sites == 0:
            return np.zeros(0)
        return np.linalg.norm(self.positions, axis=1)


@dataclass(frozen=True)
class GeometricGraph:
    """Radius-rho adjacency on a configuration.

    ``neighbors[x]`` is the sorted list of sites y != x with |x-y| <= rho;
    ``nbar_count[x]`` counts the closed neighbourhood, i.e. len(neighbors)+1.
    """

    config: Configuration
    rho: float
    neighbors: tuple = field(default=())
    nbar_count: np.ndarray = field(default=None)

    @property
    def n_sites(self) -> int:
        return self.config.n_sites

    def degree(self, x: int) -> int:
        return len(self.neighbors[x])

    def closed_neighborhood(self, x: int) -> list:
        """gamma-bar of x: the site itself plus its neighbours."""
        return [x] + list(self.neighbors[x])

    def edges(self) -> list:
        """Unordered neighbour pairs (a, b) with a < b."""
        out = []
        for x in range(self.n_sites):
            for y in self.neighbors[x]:
                if x < y:
                    out.append((x, y))
        return out

    def radii(self) -> np.ndarray:
        return self.config.radii()


def _neighbor_lists(pos: np.ndarray, rho: float):
    n = pos.shape[0]
    nbrs = [[] for _ in range(n)]
    if n == 0:
        return nbrs
    if n <= _GRID_INDEX_THRESHOLD:
        d2 = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
        within = d2 <= rho * rho
        np.fill_diagonal(within, False)
        for x in range(n):
            nbrs[x] = sorted(np.nonzero(within[x])[0].tolist())
        return nbrs
    # Uniform-grid buckets of side rho: neighbours live in adjacent cells.
    cell = np.floor(pos / rho).astype(np.int64)
    buckets = {}
    for i, c in enumerate(map(tuple, cell)):
        buckets.setdefault(c, []).append(i)
    dim = pos.shape[1]
    offsets = np.stack(np.meshgrid(*([[-1, 0, 1]] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    for c, members in buckets.items():
        cand = []
        for off in offsets:
            cand.extend(buckets.get(tuple(np.asarray(c) + off), ()))
        cand = np.asarray(cand)
        for x in members:
            d2 = np.sum((pos[cand] - pos[x]) ** 2, axis=-1)
            close = cand[(d2 <= rho * rho) & (cand != x)]
            nbrs[x] = sorted(close.tolist())
    return nbrs


def build_graph(config: Configuration, rho: float) -> GeometricGraph:
    """Build the radius-rho geometric graph on a configuration."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    nbrs = _neighbor_lists(config.positions, float(rho))
    nbar = np.asarray([len(v) + 1 for v in nbrs], dtype=np.int64)
    return GeometricGraph(config=config, rho=float(rho),
                          neighbors=tuple(tuple(v) for v in nbrs), nbar_count=nbar)


def sample_poisson(intensity: float, window, seed: int) -> Configuration:
    """Homogeneous Poisson point sample in a box window, deterministic per seed."""
    win = np.asarray(window, dtype=float)
    if win.ndim != 2 or win.shape[1] != 2 or np.any(win[:, 0] >= win[:, 1]):
        raise ParameterError("window must have shape (d, 2) with lo < hi")
    if intensity < 0:
        raise ParameterError(f"intensity must be >= 0, got {intensity}")
    volume = float(np.prod(win[:, 1] - win[:, 0]))
    rng = generator(int(seed), 0x9015504, 0)
    count = int(rng.poisson(intensity * volume))
    pts = rng.uniform(win[:, 0], win[:, 1], size=(count, win.shape[0]))
    return Configuration(positions=pts, window=win)


def lattice_configuration(lo: int, hi: int, dim: int = 1, pad: float = 0.5) -> Configuration:
    """Integer lattice {lo..hi}^dim as a configuration (helper for presets)."""
    axis = np.arange(lo, hi + 1, dtype=float)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pos = np.stack([g.ravel() for g in grids], axis=-1)
    win = np.asarray([[lo - pad, hi + pad]] * dim, dtype=float)
    return Configuration(positions=pos, window=win)


def fit_degree_constant(graph: GeometricGraph) -> float:
    """Smallest C with n_x <= C (1 + log(1 + |x|)) over all sites."""
    if graph.n_sites == 0:
        raise ParameterError("degree constant is undefined for an empty graph")
    r = graph.radii()
    return float(np.max(graph.nbar_count / (1.0 + np.log1p(r))))


def configuration_to_csv(config: Configuration, path) -> None:
    d = config.dim
    header = "site_id," + ",".join(f"x{i}" for i in range(d))
    rows = np.column_stack([np.arange(config.n_sites), config.positions])
    fmt = ["%d"] + ["%.17g"] * d
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=header, comments="")


def configuration_from_csv(path, window=None) -> Configuration:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(data[:, 0])
    pos = data[order, 1:]
    if window is None:
        lo = pos.min(axis=0) - 0.5
        hi = pos.max(axis=0) + 0.5
        window = np.stack([lo, hi], axis=1)
    return Configuration(positions=pos, window=np.asarray(window, dtype=float))


def graph_to_csv(graph: GeometricGraph, degrees_path, edges_path) -> None:
    """Write the `site_id,degree,nbar` table and the `a,b` edge list."""
    n = graph.n_sites
    deg = np.asarray([graph.degree(x) for x in range(n)])
    np.savetxt(degrees_path, np.column_stack([np.arange(n), deg, graph.nbar_count]),
               fmt="%d", delimiter=",", header="site_id,degree,nbar", comments="")
    edges = graph.edges()
    arr = np.asarray(edges, dtype=np.int64).reshape(len(edges), 2)
    np.savetxt(edges_path, arr, fmt="%d", delimiter=",", header="a,b", comments="")
