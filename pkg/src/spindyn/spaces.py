"""Weighted sequence norms over site-indexed vectors.

The norm at index ``alpha`` weights site x by exp(-alpha |x|), so norms are
non-increasing in alpha and the spaces form a nested scale on the interval
[alpha_star, alpha_top].
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import GeometricGraph


@dataclass(frozen=True)
class ScaleInterval:
    """The index interval [alpha_star, alpha_top] of the scale."""

    alpha_star: float
    alpha_top: float

    def __post_init__(self):
        if not (0 <= self.alpha_star < self.alpha_top < np.inf):
            raise ParameterError(
                f"scale interval requires 0 <= alpha_star < alpha_top < inf, "
                f"got [{self.alpha_star}, {self.alpha_top}]")

    def contains(self, alpha: float) -> bool:
        return self.alpha_star <= alpha <= self.alpha_top

    @property
    def width(self) -> float:
        return self.alpha_top - self.alpha_star


@dataclass(frozen=True)
class WeightedSeq:
    """Sparse site-indexed real vector; absent sites are zero."""

    values: dict
    graph: GeometricGraph

    def __post_init__(self):
        n = self.graph.n_sites
        for k, v in self.values.items():
            if not (0 <= int(k) < n):
                raise ParameterError(f"site_id {k} outside 0..{n - 1}")
            if not np.isfinite(v):
                raise ParameterError(f"non-finite value at site {k}")

    @classmethod
    def from_dense(cls, vec, graph: GeometricGraph, keep_zeros: bool = False) -> "WeightedSeq":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (graph.n_sites,):
            raise ParameterError("dense vector length must equal the site count")
        items = enumerate(vec) if keep_zeros else ((i, v) for i, v in enumerate(vec) if v != 0.0)
        return cls(values={int(i): float(v) for i, v in items}, graph=graph)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.graph.n_sites)
        for k, v in self.values.items():
            out[int(k)] = v
        return out

    def __getitem__(self, site_id: int) -> float:
        return self.values.get(int(site_id), 0.0)

    def scaled(self, c: float) -> "WeightedSeq":
        return WeightedSeq({k: c * v for k, v in self.values.items()}, self.graph)


def norm_lp(z: WeightedSeq, alpha: float, p: float, scale: ScaleInterval) -> float:
    """(sum_x exp(-alpha |x|) |z_x|^p)^(1/p)."""
    if not scale.contains(alpha):
        raise ParameterError(f"alpha={alpha} outside scale [{scale.alpha_star}, {scale.alpha_top}]")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if not z.values:
        return 0.0
    ids = np.fromiter(z.values.keys(), dtype=np.int64)
    vals = np.fromiter(z.values.values(), dtype=float)
    r = z.graph.radii()[ids]
    return float(np.sum(np.exp(-alpha * r) * np.abs(vals) ** p) ** (1.0 / p))


def norm_l1_dense(vec: np.ndarray, radii: np.ndarray, alpha: float) -> float:
    """Fast path used by the operator-bound code: l^1_alpha norm of a dense vector."""
    return float(np.sum(np.exp(-alpha * radii) * np.abs(vec)))


def embedding_check(z: WeightedSeq, alphas, p: float, scale: ScaleInterval) -> bool:
    """True iff the norm sequence is non-increasing along ascending alphas."""
    alphas = list(alphas)
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ParameterError("alphas must be strictly ascending")
    norms = [norm_lp(z, a, p, scale) for a in alphas]
    return all(nb <= na * (1 + 1e-12) + 1e-300 for na, nb in zip(norms, norms[1:]))


def weighted_seq_to_csv(z: WeightedSeq, path) -> None:
    ids = sorted(z.values)
    rows = np.asarray([[i, z.values[i]] for i in ids], dtype=float).reshape(len(ids), 2)
    np.savetxt(path, rows, fmt=["%d", "%.17g"], delimiter=",",
               header="site_id,value", comments="")


def weighted_seq_from_csv(path, graph: GeometricGraph) -> WeightedSeq:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return WeightedSeq({}, graph)
    return WeightedSeq({int(r[0]): float(r[1]) for r in data}, graph)
