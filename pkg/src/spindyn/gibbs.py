"""Finite-volume Gibbs kernels, MCMC sampling, DLR residuals and the
reversibility test for the induced gradient dynamics.

The pair potential is W_xy(u, v) = a(x - y) u v with a supported inside the
interaction radius; the single-site potential V carries a polynomial lower
bound.  The kernel on a finite site set eta with frozen exterior z has
density proportional to exp[-E_eta(sigma | z)] prod_x exp[-V(sigma_x)].
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .coeffs import (CoefficientField, PairCoupling, SinglePotentialDrift,
                     validate_assumptions)
from .engine import SimPlan, integrate_ensemble
from .errors import ConstructionError, ParameterError
from .geometry import GeometricGraph
from .rng import noise_matrix
from .spaces import WeightedSeq

_FD_H = 1e-6
_VALIDATE_BOX = 5.0
_TUNE_EVERY = 25
_TUNE_TARGET = (0.5, 0.7)
_ACCEPT_HEALTHY = (0.05, 0.99)


@dataclass(frozen=True)
class GibbsModel:
    """Pair potential W_xy(u,v) = a(x-y) u v plus single-site potential V.

    The growth certificate (a_V, b_V, tau) lower-bounds V and (I_W, J_W, r)
    upper-bounds |W| on the validation box; both are checked at
    construction, as is tau > r and the support of the coupling.
    ``drift_c`` and ``drift_b`` are the growth/dissipativity constants
    declared for the induced gradient drift -V'/2.
    """

    graph: GeometricGraph
    coupling: callable  # displacement rows (m, d) -> coefficients (m,)
    V: callable
    tau: float
    a_V: float = 0.25
    b_V: float = 1.0
    I_W: float = 0.0
    J_W: float = 0.0
    r: float = 0.0
    dV: callable = None
    drift_c: float = 1.0
    drift_b: float = 0.0

    def __post_init__(self):
        if self.a_V <= 0 or self.b_V <= 0:
            raise ParameterError("a_V and b_V must be positive")
        if min(self.I_W, self.J_W, self.r) < 0:
            raise ParameterError("I_W, J_W, r must be nonnegative")
        if not self.tau > self.r:
            raise ParameterError(f"need tau > r, got tau={self.tau}, r={self.r}")
        u = np.linspace(-_VALIDATE_BOX, _VALIDATE_BOX, 201)
        if np.any(self.V(u) < self.a_V * np.abs(u) ** self.tau - self.b_V - 1e-9):
            raise ParameterError("V violates its declared lower bound on the test set")
        w = edge_couplings(self)
        w_max = float(np.max(np.abs(w))) if w.size else 0.0
        uu, vv = np.meshgrid(u[::8], u[::8])
        lhs = w_max * np.abs(uu * vv)
        rhs = self.I_W * (np.abs(uu) ** self.r + np.abs(vv) ** self.r) + self.J_W
        if np.any(lhs > rhs + 1e-9):
            raise ParameterError("pair potential violates its declared growth bound")
        # Support check: random displacements beyond rho must give zero.
        d = self.graph.config.dim
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((64, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        far = dirs * rng.uniform(1.001, 3.0, size=(64, 1)) * self.graph.rho
        if np.any(np.abs(np.asarray(self.coupling(far))) > 0):
            raise ParameterError("coupling must vanish beyond the interaction radius")

    def grad_V(self, u):
        if self.dV is not None:
            return self.dV(u)
        return (self.V(u + _FD_H) - self.V(u - _FD_H)) / (2 * _FD_H)


def edge_couplings(model: GibbsModel) -> np.ndarray:
    """a(x - y) for every ordered neighbour pair, aligned with the closed
    neighbourhood enumeration used by CoefficientField (self entries 0)."""
    g = model.graph
    pos = g.config.positions
    src, dst = [], []
    for x in range(g.n_sites):
        for y in g.closed_neighborhood(x):
            src.append(x)
            dst.append(y)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.size == 0:
        return np.zeros(0)
    w = np.asarray(model.coupling(pos[src] - pos[dst]), dtype=float)
    w[src == dst] = 0.0
    return w


# ---------------------------------------------------------------------------
# Local energy and the conditional target on a finite site set


def _pair_weight(model, x, y):
    pos = model.graph.config.positions
    return float(np.asarray(model.coupling((pos[x] - pos[y])[None, :]))[0])


def local_energy(model: GibbsModel, eta, sigma_eta, z: WeightedSeq) -> float:
    """Interaction energy of values sigma on eta with frozen exterior z.

    Each unordered pair inside eta counts once; every (interior, exterior)
    neighbour pair contributes with the frozen exterior value.
    """
    eta = sorted(int(s) for s in eta)
    sigma = np.asarray(sigma_eta, dtype=float)
    if sigma.shape != (len(eta),):
        raise ParameterError("sigma_eta must have one value per eta site")
    g = model.graph
    inside = set(eta)
    val = {x: sigma[i] for i, x in enumerate(eta)}
    total = 0.0
    for x in eta:
        for y in g.neighbors[x]:
            w = _pair_weight(model, x, y)
            if y in inside:
                if x < y:
                    total += w * val[x] * val[y]
            else:
                total += w * val[x] * z[y]
    return total


class _EtaTarget:
    """Quadratic-coupling conditional density on eta, vectorised over chains.

    Energy U(s) = sum V(s_i) + sum_pairs w s_i s_j + sum_i bconst_i s_i,
    where bconst collects the frozen boundary contributions (may vary per
    chain when ``z_dense`` has a leading chain axis).
    """

    def __init__(self, model: GibbsModel, eta, z_dense: np.ndarray):
        self.model = model
        self.eta = sorted(int(s) for s in eta)
        g = model.graph
        k = len(self.eta)
        idx = {x: i for i, x in enumerate(self.eta)}
        K = np.zeros((k, k))
        z = np.atleast_2d(z_dense)
        bconst = np.zeros((z.shape[0], k))
        for x in self.eta:
            i = idx[x]
            for y in g.neighbors[x]:
                w = _pair_weight(model, x, y)
                if w == 0.0:
                    continue
                if y in idx:
                    if x < y:
                        K[i, idx[y]] = w
                        K[idx[y], i] = w
                else:
                    bconst[:, i] += w * z[:, y]
        self.K = K
        self.bconst = bconst if z_dense.ndim > 1 else bconst[0]

    def energy(self, s: np.ndarray) -> np.ndarray:
        quad = 0.5 * np.sum(s * (s @ self.K), axis=-1)
        return np.sum(self.model.V(s), axis=-1) + quad + np.sum(self.bconst * s, axis=-1)

    def grad(self, s: np.ndarray) -> np.ndarray:
        return self.model.grad_V(s) + s @ self.K + self.bconst


@dataclass(frozen=True)
class ChainParams:
    """Metropolis-adjusted Langevin chain settings."""

    steps: int
    burn_in: int
    step_size: float = 0.1
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if min(self.steps, self.burn_in, self.thin) < 1 or self.step_size <= 0:
            raise ParameterError("chain parameters must be positive")


@dataclass(frozen=True)
class SpecKernelSample:
    """MCMC draws from the conditional kernel on eta, with diagnostics."""

    eta: tuple
    boundary: WeightedSeq
    samples: np.ndarray  # (n_samples, |eta|)
    acceptance_rate: float
    ess: float
    step_size: float
    warnings: tuple = ()


def _autocorr_ess(series: np.ndarray) -> float:
    """Effective sample size via the initial-positive-sequence estimator."""
    n = series.size
    if n < 4:
        return float(n)
    x = series - series.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return float(n)
    acf = np.correlate(x, x, mode="full")[n - 1:] / (n * var)
    s = 0.0
    for lag in range(1, min(n, 1000)):
        if acf[lag] <= 0:
            break
        s += acf[lag]
    return float(n / (1.0 + 2.0 * s))


def _mala_run(target: _EtaTarget, init: np.ndarray, chain: ChainParams,
              collect: bool):
    """Run vectorised MALA chains; returns (samples or final states, rate, h).

    ``init`` has shape (n_chains, k).  Step size is adapted toward the
    [0.5, 0.7] acceptance window during burn-in and frozen afterwards.
    """
    rng = np.random.default_rng(chain.seed)
    s = np.asarray(init, dtype=float).copy()
    n_chains, k = s.shape
    h = chain.step_size
    U = target.energy(s)
    acc_recent = []
    accepted = 0
    proposed = 0
    out = []
    for step in range(chain.burn_in + (chain.steps if collect else 1)):
        in_burn = step < chain.burn_in
        grad = target.grad(s)
        mu = s - 0.5 * h * grad
        prop = mu + np.sqrt(h) * rng.standard_normal(s.shape)
        U_prop = target.energy(prop)
        mu_back = prop - 0.5 * h * target.grad(prop)
        log_q_fwd = -np.sum((prop - mu) ** 2, axis=-1) / (2 * h)
        log_q_back = -np.sum((s - mu_back) ** 2, axis=-1) / (2 * h)
        log_alpha = U - U_prop + log_q_back - log_q_fwd
        take = np.log(rng.uniform(size=n_chains)) < log_alpha
        s[take] = prop[take]
        U[take] = U_prop[take]
        rate = float(np.mean(take))
        if in_burn:
            acc_recent.append(rate)
            if len(acc_recent) >= _TUNE_EVERY:
                avg = float(np.mean(acc_recent))
                if avg > _TUNE_TARGET[1]:
                    h *= 1.3
                elif avg < _TUNE_TARGET[0]:
                    h /= 1.3
                acc_recent = []
        else:
            accepted += int(np.sum(take))
            proposed += n_chains
            if collect and (step - chain.burn_in) % chain.thin == 0:
                out.append(s.copy())
    rate = accepted / max(1, proposed)
    states = np.concatenate(out, axis=0) if collect else s
    return states, rate, h


def kernel_sample(model: GibbsModel, eta, boundary: WeightedSeq,
                  chain: ChainParams, n_chains: int = 1) -> SpecKernelSample:
    """Sample the conditional Gibbs kernel on eta with frozen boundary."""
    eta = sorted(int(s) for s in eta)
    if not eta:
        return SpecKernelSample(eta=(), boundary=boundary,
                                samples=np.zeros((0, 0)), acceptance_rate=1.0,
                                ess=0.0, step_size=chain.step_size)
    target = _EtaTarget(model, eta, boundary.to_dense())
    rng = np.random.default_rng(chain.seed ^ 0x5eed)
    init = rng.standard_normal((n_chains, len(eta)))
    samples, rate, h = _mala_run(target, init, chain, collect=True)
    per_chain = samples.reshape(-1, n_chains, len(eta))
    ess = float(min(_autocorr_ess(per_chain[:, c, i])
                    for c in range(n_chains) for i in range(len(eta))))
    warnings = ()
    if not (_ACCEPT_HEALTHY[0] < rate < _ACCEPT_HEALTHY[1]):
        warnings = (f"acceptance rate {rate:.3f} outside healthy range "
                    f"{_ACCEPT_HEALTHY}",)
    return SpecKernelSample(eta=tuple(eta), boundary=boundary, samples=samples,
                            acceptance_rate=rate, ess=ess, step_size=h,
                            warnings=warnings)


def sample_window_measure(model: GibbsModel, n_samples: int,
                          chain: ChainParams) -> np.ndarray:
    """Independent draws from the finite-window Gibbs measure (zero boundary):
    one MALA chain per draw, final state after burn-in."""
    g = model.graph
    zero = WeightedSeq({}, g)
    target = _EtaTarget(model, range(g.n_sites), zero.to_dense())
    rng = np.random.default_rng(chain.seed ^ 0xA11)
    init = rng.standard_normal((n_samples, g.n_sites))
    states, rate, _ = _mala_run(target, init, chain, collect=False)
    return states


# ---------------------------------------------------------------------------
# DLR residual


def energy_distance_test(A: np.ndarray, B: np.ndarray, n_perms: int = 1000,
                         seed: int = 0):
    """Two-sample energy-distance statistic with a permutation p-value."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    n, m = A.shape[0], B.shape[0]
    pooled = np.vstack([A, B])
    D = cdist(pooled, pooled)

    def stat(idx_a, idx_b):
        dab = D[np.ix_(idx_a, idx_b)].mean()
        daa = D[np.ix_(idx_a, idx_a)].mean()
        dbb = D[np.ix_(idx_b, idx_b)].mean()
        return 2 * dab - daa - dbb

    base_a = np.arange(n)
    base_b = np.arange(n, n + m)
    observed = stat(base_a, base_b)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perms):
        perm = rng.permutation(n + m)
        if stat(perm[:n], perm[n:]) >= observed:
            hits += 1
    p = (1 + hits) / (1 + n_perms)
    return float(observed), float(p)


@dataclass(frozen=True)
class DlrReport:
    """Result of the kernel-consistency resampling test."""

    statistic: float
    p_value: float
    eta: tuple
    outer_samples: int
    acceptance_rate: float
    warnings: tuple = ()


def dlr_residual(model: GibbsModel, eta, chain: ChainParams,
                 outer_samples: int, n_perms: int = 1000) -> DlrReport:
    """Resampling consistency of the conditional kernel on eta.

    Draws full-window samples, resamples eta conditionally on each, and
    compares the observable battery (eta values plus boundary-edge pair
    products) before and after via the energy-distance permutation test.
    """
    eta = sorted(int(s) for s in eta)
    if not eta:
        return DlrReport(statistic=0.0, p_value=1.0, eta=(), outer_samples=0,
                         acceptance_rate=1.0)
    g = model.graph
    outer = sample_window_measure(model, outer_samples, chain)

    target = _EtaTarget(model, eta, outer)  # per-chain boundary constants
    inner_chain = replace(chain, seed=chain.seed + 1)
    resampled, rate, _ = _mala_run(target, outer[:, eta].copy(), inner_chain,
                                   collect=False)

    boundary_pairs = [(x, y, _pair_weight(model, x, y))
                      for x in eta for y in g.neighbors[x] if y not in set(eta)]

    def battery(sig):
        obs = [sig]
        for x, y, w in boundary_pairs:
            obs.append((w * sig[:, eta.index(x)] * outer[:, y])[:, None])
        return np.hstack(obs)

    A = battery(outer[:, eta])
    B = battery(resampled)
    statistic, p = energy_distance_test(A, B, n_perms=n_perms, seed=chain.seed + 2)
    warnings = ()
    if not (_ACCEPT_HEALTHY[0] < rate < _ACCEPT_HEALTHY[1]):
        warnings = (f"inner-chain acceptance rate {rate:.3f} unhealthy",)
    return DlrReport(statistic=statistic, p_value=p, eta=tuple(eta),
                     outer_samples=outer_samples, acceptance_rate=rate,
                     warnings=warnings)


# ---------------------------------------------------------------------------
# Gradient dynamics and reversibility


def gradient_dynamics_field(model: GibbsModel, validate: bool = True,
                            validate_trials: int = 2000) -> CoefficientField:
    """SDE coefficients whose stationary law is the Gibbs measure.

    Single-site drift -V'(s)/2, pair drift -a(x-y) v / 2 toward each
    neighbour, unit additive noise.
    """
    g = model.graph
    R = max(model.tau - 1.0, 2.0)
    drift = SinglePotentialDrift(phi=lambda s: -0.5 * model.grad_V(s),
                                 c=model.drift_c, R=R, b=model.drift_b)
    w = edge_couplings(model)
    drift_w = -0.5 * w
    w_max = float(np.max(np.abs(drift_w))) if w.size else 0.0
    n_edges = w.size
    diff_w = np.zeros(n_edges)
    starts = np.cumsum(np.concatenate([[0], g.nbar_count[:-1]])).astype(np.int64)
    diff_w[starts] = 1.0
    cp = PairCoupling(phi_xy=lambda u, v: v, psi_xy=lambda u, v: np.ones_like(u),
                      a_bar=max(w_max, 1.0), M=1.0)
    field_ = CoefficientField(drift=drift, coupling=cp, graph=g,
                              drift_weights=drift_w, diff_weights=diff_w)
    if validate:
        report = validate_assumptions(field_, trials=validate_trials,
                                      box=_VALIDATE_BOX)
        if not report.passed:
            bad = [c.name for c in report.checks if not c.passed]
            raise ConstructionError(
                f"gradient dynamics field fails coefficient checks: {bad}",
                report=report)
    return field_


def _evolve(field_: CoefficientField, inits: np.ndarray, plan: SimPlan) -> np.ndarray:
    """Final states at plan.T for per-replica initial conditions."""
    n_rep, n = inits.shape
    out = np.empty((n_rep, n))
    chunk = max(1, (2 * 10 ** 7) // max(1, n * plan.n_steps))
    for lo in range(0, n_rep, chunk):
        hi = min(lo + chunk, n_rep)
        noise = np.stack([noise_matrix(plan.master_seed, r, range(n), plan.n_steps)
                          for r in range(lo, hi)])
        traj = integrate_ensemble(field_, None, inits[lo:hi], plan, noise)
        out[lo:hi] = traj[..., -1]
    return out


def reversibility_test(model: GibbsModel, f, g, t: float, plan: SimPlan,
                       nu_chain: ChainParams, field_: CoefficientField = None):
    """Detailed-balance check for the gradient dynamics under the Gibbs law.

    Draws initial states from the finite-window Gibbs measure, evolves each
    to time t, and compares E[f(start) g(end)] with E[f(end) g(start)].
    Returns (lhs, rhs, standard error of the difference).
    """
    if field_ is None:
        field_ = gradient_dynamics_field(model)
    zeta = sample_window_measure(model, plan.replicas, nu_chain)
    j = plan.time_index(t)
    if j == 0:
        final = zeta
    else:
        run_plan = replace(plan, T=t)
        final = _evolve(field_, zeta, run_plan)
    f0 = np.asarray([f(z) for z in zeta])
    g0 = np.asarray([g(z) for z in zeta])
    ft = np.asarray([f(z) for z in final])
    gt = np.asarray([g(z) for z in final])
    lhs_i = f0 * gt
    rhs_i = ft * g0
    diff = lhs_i - rhs_i
    se = float(np.std(diff, ddof=1) / np.sqrt(diff.size)) if diff.size > 1 else 0.0
    return float(np.mean(lhs_i)), float(np.mean(rhs_i)), se


# ---------------------------------------------------------------------------
# Presets

def constant_coupling(J: float, radius: float):
    return lambda disp: J * (np.linalg.norm(np.atleast_2d(disp), axis=-1) <= radius)


def tent_coupling(J: float, radius: float):
    def a(disp):
        d = np.linalg.norm(np.atleast_2d(disp), axis=-1)
        return J * np.maximum(0.0, 1.0 - d / radius)
    return a


_POTENTIALS = {
    "quartic": dict(V=lambda u: u ** 4 / 4.0, dV=lambda u: u ** 3,
                    tau=4.0, a_V=0.25, b_V=1.0),
    "gaussian": dict(V=lambda u: u ** 2 / 2.0, dV=lambda u: u,
                     tau=2.0, a_V=0.5, b_V=1.0),
}


def make_model(graph: GeometricGraph, potential: str = "quartic", J: float = 0.0,
               coupling_type: str = "constant", radius: float = None) -> GibbsModel:
    """Assemble a Gibbs model from named presets."""
    if potential not in _POTENTIALS:
        raise ParameterError(f"unknown potential preset '{potential}'")
    if radius is None:
        radius = graph.rho
    if radius > graph.rho:
        raise ParameterError("coupling radius cannot exceed the graph radius")
    if coupling_type == "constant":
        a = constant_coupling(J, radius)
    elif coupling_type == "tent":
        a = tent_coupling(J, radius)
    else:
        raise ParameterError(f"unknown coupling type '{coupling_type}'")
    preset = _POTENTIALS[potential]
    if J == 0.0:
        I_W, J_W, r = 0.0, 0.0, 0.0
    else:
        I_W, J_W, r = abs(J) * _VALIDATE_BOX, abs(J), 1.0
    return GibbsModel(graph=graph, coupling=a, V=preset["V"], dV=preset["dV"],
                      tau=preset["tau"], a_V=preset["a_V"], b_V=preset["b_V"],
                      I_W=I_W, J_W=J_W, r=r)
