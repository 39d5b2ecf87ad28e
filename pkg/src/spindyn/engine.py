"""Finite-volume SDE integration with common random numbers across volumes.

Sites outside the active volume stay frozen at their initial value exactly;
the Wiener increment for (replica, site, step) comes from a keyed
counter-based stream, so every volume sees identical noise and replica
batches can run on any number of threads without changing a single bit of
output.
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoefficientField
from .errors import NumericError, ParameterError
from .geometry import GeometricGraph
from .rng import TAG_INIT, generator, noise_matrix
from .spaces import ScaleInterval, WeightedSeq

_NEWTON_MAX_ITERS = 50
_NEWTON_TOL = 1e-12
_FD_STEP = 1e-7
# Replica-chunk size cap keeps noise + trajectory buffers bounded.
_CHUNK_ELEMENTS = 2 * 10 ** 7

SCHEMES = ("tamed_em", "split_step_implicit")


@dataclass(frozen=True)
class SimPlan:
    """Time grid, scheme, replica count, seed and moment order of a run."""

    dt: float
    T: float
    scheme: str = "tamed_em"
    replicas: int = 1
    master_seed: int = 0
    p: float = 2.0

    def __post_init__(self):
        if not (0 < self.dt <= self.T):
            raise ParameterError("need 0 < dt <= T")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme '{self.scheme}'")
        if self.replicas < 1:
            raise ParameterError("replicas must be >= 1")
        if self.p < 2:
            raise ParameterError("moment order p must be >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def time_index(self, t: float) -> int:
        j = int(round(t / self.dt))
        if not (0 <= j <= self.n_steps) or abs(j * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ParameterError(f"t={t} is not on the simulation grid")
        return j


@dataclass(frozen=True)
class VolumeSequence:
    """Strictly nested site sets ending in the full window."""

    volumes: tuple
    n_sites: int

    def __post_init__(self):
        vols = tuple(frozenset(int(s) for s in v) for v in self.volumes)
        if not vols:
            raise ParameterError("at least one volume is required")
        full = frozenset(range(self.n_sites))
        for v in vols:
            if not v <= full:
                raise ParameterError("volume contains unknown site ids")
        for a, b in zip(vols, vols[1:]):
            if not (a < b):
                raise ParameterError("volumes must be strictly nested")
        if vols[-1] != full:
            raise ParameterError("final volume must cover the full window")
        object.__setattr__(self, "volumes", vols)

    def __len__(self) -> int:
        return len(self.volumes)

    def mask(self, idx: int) -> np.ndarray:
        m = np.zeros(self.n_sites, dtype=bool)
        m[list(self.volumes[idx])] = True
        return m


def radial_volumes(graph: GeometricGraph, radii) -> VolumeSequence:
    """Volumes of sites with |x| <= r for an ascending list of radii,
    with the full window appended as the final volume."""
    r = graph.radii()
    vols = [set(np.nonzero(r <= rad)[0].tolist()) for rad in radii]
    full = set(range(graph.n_sites))
    if not vols or vols[-1] != full:
        vols.append(full)
    return VolumeSequence(volumes=tuple(vols), n_sites=graph.n_sites)


@dataclass(frozen=True)
class RandomInit:
    """I.i.d. scalar initial data, drawn from the keyed stream per site."""

    dist: str  # 'normal' | 'uniform'
    a: float = 0.0  # mean (normal) or lower bound (uniform)
    b: float = 1.0  # std dev (normal) or upper bound (uniform)

    def draw(self, master_seed: int, replica: int, n_sites: int) -> np.ndarray:
        out = np.empty(n_sites)
        for s in range(n_sites):
            g = generator(master_seed, TAG_INIT, replica, s)
            if self.dist == "normal":
                out[s] = self.a + self.b * g.standard_normal()
            elif self.dist == "uniform":
                out[s] = g.uniform(self.a, self.b)
            else:
                raise ParameterError(f"unknown initial distribution '{self.dist}'")
        return out


def _initial_states(init, graph, plan, replica_ids) -> np.ndarray:
    if isinstance(init, WeightedSeq):
        base = init.to_dense()
        return np.tile(base, (len(replica_ids), 1))
    if isinstance(init, RandomInit):
        return np.stack([init.draw(plan.master_seed, r, graph.n_sites)
                         for r in replica_ids])
    raise ParameterError("init must be a WeightedSeq or a RandomInit")


def _solve_implicit(drift, state, dt, active):
    """Newton solve of theta = state + dt * phi(theta), vectorised."""
    phi = drift.phi
    dphi = drift.dphi if drift.dphi is not None else \
        (lambda s: (phi(s + _FD_STEP) - phi(s - _FD_STEP)) / (2 * _FD_STEP))
    theta = state.copy()
    for _ in range(_NEWTON_MAX_ITERS):
        resid = theta - dt * phi(theta) - state
        resid_active = resid[..., active] if active is not None else resid
        if resid_active.size == 0 or np.max(np.abs(resid_active)) < _NEWTON_TOL:
            return theta
        theta = theta - resid / (1.0 - dt * dphi(theta))
    bad = np.unravel_index(int(np.argmax(np.abs(resid))), resid.shape)
    raise NumericError(f"implicit drift solve failed to converge at site {bad[-1]}")


def integrate_ensemble(field_: CoefficientField, volume_mask, init_states,
                       plan: SimPlan, noise, n_steps: int | None = None) -> np.ndarray:
    """Advance a (replicas, sites) block; returns (replicas, sites, steps+1).

    ``noise`` holds the standard-normal increments, shape
    (replicas, sites, >= n_steps); sites outside ``volume_mask`` are kept at
    their initial value exactly.
    """
    n_steps = plan.n_steps if n_steps is None else n_steps
    state = np.asarray(init_states, dtype=float).copy()
    n_rep, n = state.shape
    mask = np.ones(n, dtype=bool) if volume_mask is None else np.asarray(volume_mask)
    frozen = ~mask
    out = np.empty((n_rep, n, n_steps + 1))
    out[..., 0] = state
    dt = plan.dt
    sqdt = np.sqrt(dt)
    for j in range(n_steps):
        dW = noise[:, :, j] * sqdt
        diff = field_.diffusion_all(state)
        if plan.scheme == "tamed_em":
            drift = field_.drift_all(state)
            new = state + drift * dt / (1.0 + dt * np.abs(drift)) + diff * dW
        else:
            try:
                theta = _solve_implicit(field_.drift, state, dt, mask)
            except NumericError as e:
                raise NumericError(f"{e} (step {j})") from None
            pair_drift = field_.drift_all(state) - field_.drift.phi(state)
            new = theta + dt * pair_drift + diff * dW
        new[:, frozen] = state[:, frozen]
        state = new
        out[..., j + 1] = state
    return out


def integrate_truncated(field_: CoefficientField, volume, init, plan: SimPlan,
                        replica: int) -> np.ndarray:
    """One replica of the volume-truncated system; shape (sites, steps+1)."""
    g = field_.graph
    mask = np.zeros(g.n_sites, dtype=bool)
    mask[list(volume)] = True
    init_states = _initial_states(init, g, plan, [replica])
    noise = noise_matrix(plan.master_seed, replica, range(g.n_sites),
                         plan.n_steps)[None, :, :]
    return integrate_ensemble(field_, mask, init_states, plan, noise)[0]


@dataclass(frozen=True)
class NestedEnsemble:
    """Trajectories of every (replica, volume) pair on a shared time grid."""

    trajectories: np.ndarray  # (replicas, volumes, sites, steps+1)
    volumes: VolumeSequence
    plan: SimPlan
    graph: GeometricGraph
    times: np.ndarray = field(default=None)

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.trajectories).tobytes()).hexdigest()


def run_nested(field_: CoefficientField, volumes: VolumeSequence, init,
               plan: SimPlan, n_threads: int = 1) -> NestedEnsemble:
    """Integrate every volume for every replica with shared noise streams.

    Output is bit-identical for any ``n_threads`` and any chunk schedule:
    noise is regenerated from keys inside each chunk and chunks write
    disjoint replica slices of a preallocated array.
    """
    g = field_.graph
    if plan.p < max(2.0, field_.drift.R):
        raise ParameterError(
            f"moment order p={plan.p} must be >= max(2, R={field_.drift.R})")
    n = g.n_sites
    n_steps = plan.n_steps
    traj = np.empty((plan.replicas, len(volumes), n, n_steps + 1))
    masks = [volumes.mask(i) for i in range(len(volumes))]

    chunk = max(1, _CHUNK_ELEMENTS // max(1, n * n_steps))
    spans = [(lo, min(lo + chunk, plan.replicas))
             for lo in range(0, plan.replicas, chunk)]

    def work(span):
        lo, hi = span
        reps = range(lo, hi)
        noise = np.stack([noise_matrix(plan.master_seed, r, range(n), n_steps)
                          for r in reps])
        init_states = _initial_states(init, g, plan, reps)
        for vi, mask in enumerate(masks):
            traj[lo:hi, vi] = integrate_ensemble(field_, mask, init_states,
                                                 plan, noise)

    if n_threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)
    return NestedEnsemble(trajectories=traj, volumes=volumes, plan=plan,
                          graph=g, times=plan.times())


def moment_p(ens: NestedEnsemble, volume_idx: int, x: int, t: float,
             p: float | None = None):
    """Monte Carlo p-th absolute moment at (volume, site, time): (mean, stderr)."""
    p = ens.plan.p if p is None else p
    j = ens.plan.time_index(t)
    vals = np.abs(ens.trajectories[:, volume_idx, x, j]) ** p
    n = vals.size
    se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(vals)), se


def cauchy_gap(ens: NestedEnsemble, n: int, m: int, beta: float, p: float,
               scale: ScaleInterval | None = None) -> float:
    """sup over grid times of E sum_x e^{-beta|x|} |xi^n - xi^m|^p."""
    if n > m:
        raise ParameterError("need n <= m")
    if scale is not None and not scale.contains(beta):
        raise ParameterError(f"beta={beta} outside the scale")
    if n == m:
        return 0.0
    w = np.exp(-beta * ens.graph.radii())
    diff = ens.trajectories[:, n] - ens.trajectories[:, m]  # (rep, sites, time)
    per_rep_time = np.tensordot(w, np.abs(diff) ** p, axes=([0], [1]))  # (rep, time)
    return float(np.max(np.mean(per_rep_time, axis=0)))


def weighted_uniform_moment(ens: NestedEnsemble, volume_idx: int, beta: float,
                            p: float | None = None) -> float:
    """sum_x e^{-beta|x|} sup_t (MC mean of |xi_x,t|^p) for one volume."""
    p = ens.plan.p if p is None else p
    w = np.exp(-beta * ens.graph.radii())
    mom = np.mean(np.abs(ens.trajectories[:, volume_idx]) ** p, axis=0)  # (sites, time)
    return float(np.sum(w * np.max(mom, axis=1)))


def tagged_particle_solve(field_: CoefficientField, x: int, env: np.ndarray,
                          init_x: float, plan: SimPlan, replica: int) -> np.ndarray:
    """Scalar path of site x with all other sites frozen to ``env``.

    ``env`` has shape (sites, steps+1); its row x is ignored.  The noise
    stream is the same one the full runs use for (replica, x, step).
    """
    from .rng import normal_stream

    n_steps = plan.n_steps
    if env.shape != (field_.graph.n_sites, n_steps + 1):
        raise ParameterError("env must have shape (n_sites, n_steps + 1)")
    noise = normal_stream(plan.master_seed, replica, x, n_steps)
    sqdt = np.sqrt(plan.dt)
    dt = plan.dt
    eta = np.empty(n_steps + 1)
    eta[0] = init_x
    state = env[:, 0].copy()
    only_x = np.zeros(field_.graph.n_sites, dtype=bool)
    only_x[x] = True
    for j in range(n_steps):
        state[:] = env[:, j]
        state[x] = eta[j]
        diff = field_.diffusion_all(state)[x]
        if plan.scheme == "tamed_em":
            drift = field_.drift_all(state)[x]
            step = drift * dt / (1.0 + dt * abs(drift))
        else:
            try:
                theta = _solve_implicit(field_.drift, state[None, :], dt, only_x)[0]
            except NumericError as e:
                raise NumericError(f"{e} (step {j})") from None
            pair = field_.drift_all(state)[x] - float(np.asarray(field_.drift.phi(state[x])))
            step = (theta[x] - eta[j]) + dt * pair
        eta[j + 1] = eta[j] + step + diff * (noise[j] * sqdt)
    return eta


def semigroup_apply(field_: CoefficientField, f, zeta: WeightedSeq, t: float,
                    plan: SimPlan):
    """Monte Carlo estimate of E f(state at time t) started from zeta."""
    j = plan.time_index(t)
    base = zeta.to_dense()
    if j == 0:
        return float(f(base)), 0.0
    g = field_.graph
    n = g.n_sites
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n * j))
    vals = np.empty(plan.replicas)
    for lo in range(0, plan.replicas, chunk):
        hi = min(lo + chunk, plan.replicas)
        reps = range(lo, hi)
        noise = np.stack([noise_matrix(plan.master_seed, r, range(n), j)
                          for r in reps])
        init_states = np.tile(base, (hi - lo, 1))
        out = integrate_ensemble(field_, None, init_states, plan, noise, n_steps=j)
        for i in range(hi - lo):
            vals[lo + i] = f(out[i, :, -1])
    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(np.mean(vals)), se
