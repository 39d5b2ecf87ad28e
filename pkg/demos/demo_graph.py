"""Quenched geometric graphs: build, inspect, and check the degree bound.

A configuration is a fixed finite point set; sites interact when they are
within the radius rho.  The logarithmic degree bound
n_x <= C (1 + log(1 + |x|)) is the structural assumption everything else
rests on, and fit_degree_constant reports the smallest C that works.
"""

import numpy as np

from spindyn import (build_graph, fit_degree_constant, lattice_configuration,
                     sample_poisson)


def main():
    print("== 1-d lattice ==")
    g = build_graph(lattice_configuration(-24, 25), 1.5)
    print(f"sites: {g.n_sites}, interaction radius: {g.rho}")
    print(f"neighbourhood sizes: min {g.nbar_count.min()}, "
          f"max {g.nbar_count.max()}")
    print(f"degree constant C = {fit_degree_constant(g):.4f}")

    print("\n== 2-d Poisson sample ==")
    win = np.array([[-10.0, 10.0], [-10.0, 10.0]])
    cfg = sample_poisson(1.2, win, seed=42)
    gp = build_graph(cfg, 1.0)
    print(f"sites: {gp.n_sites} (Poisson, intensity 1.2 on a 20 x 20 window)")
    print(f"mean neighbourhood size: {gp.nbar_count.mean():.2f}")
    print(f"degree constant C = {fit_degree_constant(gp):.4f}")

    c = fit_degree_constant(gp)
    r = gp.radii()
    slack = c * (1 + np.log1p(r)) - gp.nbar_count
    print(f"bound slack: min {slack.min():.4f} (zero at the binding site)")


if __name__ == "__main__":
    main()
