"""Network fixtures: the five-node illustrative net, random radial nets, and
the bundled 100-household LV feeder."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .network import Line, Network, load_households, parse_network


def two_bus(z: complex = 0.01 + 0.01j, capacity_pu: float = 10.0, v0: complex = 1.0) -> Network:
    return Network(2, (Line(0, 1, z.real, z.imag, capacity_pu),), slack_voltage=v0)


def five_node(r: float = 0.02, x: float = 0.01, capacity_pu: float = 5.0,
              v0: complex = 1.0) -> Network:
    """Five-node net: 0-1 feeder head, 1-2-3 branch and 1-4 branch.

    Impedances are illustrative per-unit values (none are published for
    this topology).
    """
    lines = (
        Line(0, 1, r, x, capacity_pu),
        Line(1, 2, 1.5 * r, 1.5 * x, capacity_pu),
        Line(2, 3, 1.5 * r, 1.5 * x, capacity_pu),
        Line(1, 4, 2.0 * r, 2.0 * x, capacity_pu),
    )
    return Network(5, lines, slack_voltage=v0, households={"h3": 3, "h4": 4, "h2": 2})


def random_radial(n_nodes: int, seed: int, r_range=(0.002, 0.02), xr_ratio=(0.3, 1.0),
                  capacity_pu: float = 10.0) -> Network:
    """Random tree on ``n_nodes`` nodes (slack = 0) with random orientation of lines."""
    rng = np.random.default_rng(seed)
    lines = []
    for k in range(1, n_nodes):
        parent = int(rng.integers(0, k))
        r = float(rng.uniform(*r_range))
        x = r * float(rng.uniform(*xr_ratio))
        if rng.random() < 0.5:
            lines.append(Line(parent, k, r, x, capacity_pu))
        else:
            lines.append(Line(k, parent, r, x, capacity_pu))
    return Network(n_nodes, tuple(lines))


def bundled_feeder_text() -> str:
    return resources.files("p2pgrid.data").joinpath("feeder.csv").read_text()


def bundled_households_path():
    return resources.files("p2pgrid.data").joinpath("households.csv")


def bundled_feeder() -> Network:
    """The bundled 100-household single-phase-equivalent LV feeder."""
    with resources.as_file(bundled_households_path()) as p:
        binding, _ = load_households(p)
    return parse_network(bundled_feeder_text(), source="feeder.csv", households=binding)
