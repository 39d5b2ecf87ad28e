"""Config-driven experiment runner.

Subcommands: graph, simulate, converge, gibbs, ovs.  Each takes a YAML
config file plus `--out` / `--threads`; all science parameters live in the
config so a run is reproducible byte-for-byte from its manifest.

Exit codes: 0 success, 2 config error, 3 numeric error, 4 hypothesis
violated.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import geometry, gibbs, ovsbound
from .coeffs import make_field
from .engine import (NestedEnsemble, RandomInit, SimPlan, cauchy_gap,
                     moment_p, radial_volumes, run_nested)
from .errors import (ConfigError, ConstructionError, HypothesisError,
                     NumericError, ParameterError)
from .gibbs import ChainParams, make_model
from .spaces import ScaleInterval, WeightedSeq

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_HYPOTHESIS = 4


def _get(cfg: dict, key: str, expect=None, default=KeyError):
    """Fetch cfg[key] with a dotted path, naming the offending key on error."""
    node = cfg
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is not KeyError:
                return default
            raise ConfigError(f"missing config key '{key}'")
        node = node[part]
    if expect is not None and not isinstance(node, expect):
        raise ConfigError(f"config key '{key}' has wrong type "
                          f"(expected {expect.__name__ if not isinstance(expect, tuple) else expect})")
    return node


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    return cfg


def _build_graph(cfg: dict) -> geometry.GeometricGraph:
    source = _get(cfg, "graph.source", str)
    rho = float(_get(cfg, "graph.rho", (int, float)))
    if source == "lattice":
        lo = int(_get(cfg, "graph.lattice.lo", int))
        hi = int(_get(cfg, "graph.lattice.hi", int))
        dim = int(_get(cfg, "graph.lattice.dim", int, default=1))
        config = geometry.lattice_configuration(lo, hi, dim=dim)
    elif source == "poisson":
        intensity = float(_get(cfg, "graph.poisson.intensity", (int, float)))
        window = _get(cfg, "graph.poisson.window", list)
        seed = int(_get(cfg, "graph.poisson.seed", int))
        config = geometry.sample_poisson(intensity, np.asarray(window, dtype=float), seed)
    elif source == "csv":
        config = geometry.configuration_from_csv(_get(cfg, "graph.csv.path", str))
    else:
        raise ConfigError(f"config key 'graph.source' must be lattice|poisson|csv, got '{source}'")
    try:
        return geometry.build_graph(config, rho)
    except ParameterError as e:
        raise ConfigError(f"graph.rho: {e}")


def _build_plan(cfg: dict) -> SimPlan:
    try:
        return SimPlan(dt=float(_get(cfg, "plan.dt", (int, float))),
                       T=float(_get(cfg, "plan.T", (int, float))),
                       scheme=_get(cfg, "plan.scheme", str, default="tamed_em"),
                       replicas=int(_get(cfg, "plan.replicas", int, default=1)),
                       master_seed=int(_get(cfg, "plan.master_seed", int, default=0)),
                       p=float(_get(cfg, "plan.p", (int, float), default=2.0)))
    except ParameterError as e:
        raise ConfigError(f"plan: {e}")


def _build_field(cfg: dict, graph):
    try:
        return make_field(graph,
                          drift=_get(cfg, "field.drift", str, default="cubic"),
                          coupling=_get(cfg, "field.coupling", str, default="zero"),
                          noise=_get(cfg, "field.noise", str, default="additive"),
                          J=float(_get(cfg, "field.J", (int, float), default=0.0)))
    except ParameterError as e:
        raise ConfigError(f"field: {e}")


def _build_init(cfg: dict, graph):
    kind = _get(cfg, "init.type", str, default="constant")
    if kind == "constant":
        value = float(_get(cfg, "init.value", (int, float), default=0.0))
        return WeightedSeq({i: value for i in range(graph.n_sites)} if value else {},
                           graph)
    if kind == "random":
        return RandomInit(dist=_get(cfg, "init.dist", str, default="normal"),
                          a=float(_get(cfg, "init.a", (int, float), default=0.0)),
                          b=float(_get(cfg, "init.b", (int, float), default=1.0)))
    if kind == "csv":
        from .spaces import weighted_seq_from_csv
        return weighted_seq_from_csv(_get(cfg, "init.path", str), graph)
    raise ConfigError(f"config key 'init.type' must be constant|random|csv, got '{kind}'")


def _build_volumes(cfg: dict, graph):
    radii = _get(cfg, "volumes.radii", list, default=None)
    if radii is None:
        return radial_volumes(graph, [])
    return radial_volumes(graph, [float(r) for r in radii])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _graph_hash(graph) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(graph.config.positions).tobytes())
    h.update(np.float64(graph.rho).tobytes())
    return h.hexdigest()


def _write_manifest(out: Path, cfg: dict, graph, extra=None) -> None:
    outputs = {p.name: _sha256(p) for p in sorted(out.iterdir())
               if p.name != "manifest.json"}
    manifest = {"config": cfg,
                "graph_hash": _graph_hash(graph),
                "outputs": outputs}
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_graph(cfg: dict, out: Path, threads: int) -> int:
    graph = _build_graph(cfg)
    geometry.configuration_to_csv(graph.config, out / "configuration.csv")
    geometry.graph_to_csv(graph, out / "degrees.csv", out / "edges.csv")
    report = {"n_sites": graph.n_sites,
              "rho": graph.rho,
              "degree_constant": geometry.fit_degree_constant(graph),
              "max_nbar": int(np.max(graph.nbar_count))}
    (out / "degree_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, cfg, graph)
    print(f"graph: {graph.n_sites} sites, degree constant "
          f"{report['degree_constant']:.6g}")
    return EXIT_OK


def _moments_table(ens: NestedEnsemble, p: float, times) -> np.ndarray:
    rows = []
    last_vol = len(ens.volumes) - 1
    for x in range(ens.graph.n_sites):
        for t in times:
            mean, se = moment_p(ens, last_vol, x, t, p)
            rows.append([x, t, p, mean, se])
    return np.asarray(rows)


def cmd_simulate(cfg: dict, out: Path, threads: int) -> int:
    graph = _build_graph(cfg)
    plan = _build_plan(cfg)
    field_ = _build_field(cfg, graph)
    volumes = _build_volumes(cfg, graph)
    init = _build_init(cfg, graph)
    ens = run_nested(field_, volumes, init, plan, n_threads=threads)
    n_times = min(11, plan.n_steps + 1)
    times = [plan.dt * j for j in
             np.linspace(0, plan.n_steps, n_times).astype(int)]
    table = _moments_table(ens, plan.p, times)
    np.savetxt(out / "moments.csv", table, delimiter=",",
               fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"],
               header="site_id,t,p,mean,stderr", comments="")
    np.savez_compressed(out / "trajectories.npz",
                        trajectories=ens.trajectories, times=ens.times)
    _write_manifest(out, cfg, graph, extra={"ensemble_hash": ens.content_hash()})
    print(f"simulate: {plan.replicas} replicas x {len(volumes)} volumes, "
          f"ensemble hash {ens.content_hash()[:16]}")
    return EXIT_OK


def cmd_converge(cfg: dict, out: Path, threads: int) -> int:
    graph = _build_graph(cfg)
    plan = _build_plan(cfg)
    field_ = _build_field(cfg, graph)
    volumes = _build_volumes(cfg, graph)
    init = _build_init(cfg, graph)
    scale = ScaleInterval(float(_get(cfg, "scale.alpha_star", (int, float), default=0.0)),
                          float(_get(cfg, "scale.alpha_top", (int, float), default=1.0)))
    betas = [float(b) for b in _get(cfg, "converge.betas", list,
                                    default=[scale.alpha_top])]
    q = float(_get(cfg, "converge.q", (int, float), default=0.5))
    alpha = float(_get(cfg, "converge.alpha", (int, float),
                       default=scale.alpha_star))
    ens = run_nested(field_, volumes, init, plan, n_threads=threads)
    m = len(volumes) - 1
    rows = []
    for beta in betas:
        if not scale.contains(beta):
            raise ConfigError(f"converge.betas: beta={beta} outside the scale")
        for n in range(m):
            gap = cauchy_gap(ens, n, m, beta, plan.p, scale)
            # Tail bound input: weighted p-th moment of the initial data
            # outside volume n, via the degree-growth kernel.
            b_vec = _tail_vector(ens, volumes, n, init, graph)
            bound = ovsbound.gronwall_bound(
                B=field_.coupling.a_bar, k=1.0, graph=graph, b_vec=b_vec,
                alpha=alpha, beta=beta, T=plan.T, q=q, scale=scale)
            rows.append([n, m, beta, plan.p, gap, bound])
    arr = np.asarray(rows).reshape(len(rows), 6)
    np.savetxt(out / "gaps.csv", arr, delimiter=",",
               fmt=["%d", "%d", "%.17g", "%.17g", "%.17g", "%.17g"],
               header="n,m,beta,p,gap,bound", comments="")
    _write_manifest(out, cfg, graph, extra={"ensemble_hash": ens.content_hash()})
    print(f"converge: {len(rows)} gap rows over {m} volume pairs")
    return EXIT_OK


def _tail_vector(ens, volumes, n, init, graph) -> WeightedSeq:
    """Per-site p-th moment of the initial data outside volume n."""
    mask = volumes.mask(n)
    init0 = ens.trajectories[:, -1, :, 0]  # (replicas, sites) initial states
    vals = np.mean(np.abs(init0) ** ens.plan.p, axis=0) + 1.0
    vals[mask] = 0.0
    return WeightedSeq.from_dense(vals, graph)


def cmd_ovs(cfg: dict, out: Path, threads: int) -> int:
    graph = _build_graph(cfg)
    scale = ScaleInterval(float(_get(cfg, "scale.alpha_star", (int, float), default=0.0)),
                          float(_get(cfg, "scale.alpha_top", (int, float), default=1.0)))
    B = float(_get(cfg, "ovs.B", (int, float), default=0.2))
    k = float(_get(cfg, "ovs.k", (int, float), default=1.0))
    q = float(_get(cfg, "ovs.q", (int, float), default=0.5))
    trials = int(_get(cfg, "ovs.trials", int, default=2000))
    seed = int(_get(cfg, "ovs.seed", int, default=0))
    T = float(_get(cfg, "ovs.T", (int, float), default=1.0))
    Q = ovsbound.induced_matrix(graph, B, k)
    L = ovsbound.estimate_L(Q, q, trials=trials, seed=seed, scale=scale)
    cert = ovsbound.verify_ovs_bound(Q, q, L, trials=trials, seed=seed + 1,
                                     scale=scale)
    (out / "certificate.json").write_text(cert.to_json() + "\n")
    widths = [float(w) for w in _get(cfg, "ovs.widths", list,
                                     default=[scale.width / 2, scale.width])]
    rows = [[L, T, q, w, ovsbound.k_series(L, T, q, 0.0, w)] for w in widths]
    np.savetxt(out / "kt_table.csv", np.asarray(rows), delimiter=",",
               fmt="%.17g", header="L,T,q,width,K_T", comments="")
    _write_manifest(out, cfg, graph)
    if not cert.valid:
        print(f"ovs: certificate FAILED (max ratio {cert.max_ratio:.6g} > L={L:.6g})",
              file=sys.stderr)
        return EXIT_HYPOTHESIS
    print(f"ovs: certified L={L:.6g} over {cert.trials} fresh trials")
    return EXIT_OK


def cmd_gibbs(cfg: dict, out: Path, threads: int) -> int:
    graph = _build_graph(cfg)
    try:
        model = make_model(graph,
                           potential=_get(cfg, "gibbs.potential", str, default="gaussian"),
                           J=float(_get(cfg, "gibbs.J", (int, float), default=0.0)),
                           coupling_type=_get(cfg, "gibbs.coupling", str,
                                              default="constant"))
    except ParameterError as e:
        raise ConfigError(f"gibbs: {e}")
    chain = ChainParams(steps=int(_get(cfg, "gibbs.chain.steps", int, default=2000)),
                        burn_in=int(_get(cfg, "gibbs.chain.burn_in", int, default=500)),
                        step_size=float(_get(cfg, "gibbs.chain.step_size",
                                             (int, float), default=0.5)),
                        seed=int(_get(cfg, "gibbs.chain.seed", int, default=0)))
    report = {}
    zero = WeightedSeq({}, graph)
    sample = gibbs.kernel_sample(model, range(graph.n_sites), zero, chain)
    report["kernel"] = {
        "acceptance_rate": sample.acceptance_rate,
        "ess": sample.ess,
        "step_size": sample.step_size,
        "mean": sample.samples.mean(axis=0).tolist(),
        "variance": sample.samples.var(
            axis=0, ddof=1 if sample.samples.shape[0] > 1 else 0).tolist(),
        "warnings": list(sample.warnings)}

    eta = _get(cfg, "gibbs.eta", list, default=None)
    if eta is not None:
        outer = int(_get(cfg, "gibbs.outer_samples", int, default=50))
        dlr = gibbs.dlr_residual(model, [int(s) for s in eta], chain, outer)
        report["dlr"] = {"statistic": dlr.statistic, "p_value": dlr.p_value,
                         "acceptance_rate": dlr.acceptance_rate,
                         "warnings": list(dlr.warnings)}

    t = float(_get(cfg, "gibbs.t", (int, float), default=0.0))
    if t > 0:
        plan = _build_plan(cfg)
        sites = _get(cfg, "gibbs.observable_sites", list, default=[0, graph.n_sites - 1])
        x1, x2 = int(sites[0]), int(sites[-1])
        f = lambda z: np.tanh(z[x1])
        g_ = lambda z: np.tanh(z[x2])
        lhs, rhs, se = gibbs.reversibility_test(model, f, g_, t, plan, chain)
        report["reversibility"] = {"t": t, "lhs": lhs, "rhs": rhs,
                                   "se_diff": se,
                                   "within_3se": bool(abs(lhs - rhs) <= 3 * se)}

    (out / "gibbs_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, cfg, graph)
    print("gibbs: report written")
    return EXIT_OK


_COMMANDS = {"graph": cmd_graph, "simulate": cmd_simulate,
             "converge": cmd_converge, "gibbs": cmd_gibbs, "ovs": cmd_ovs}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spindyn",
        description="Spin-system simulation on quenched geometric graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HypothesisError, ConstructionError) as e:
        print(f"hypothesis violated: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ParameterError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
