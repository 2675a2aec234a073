"""Radial low-voltage network description and its matrices.

Lines are stored in the orientation given by the input (``from`` -> ``to``);
the incidence matrix carries +1 at the ``from`` bus and -1 at the ``to`` bus,
so line flows are measured at the ``from`` end. Node 0 is always the slack.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class NetworkError(ValueError):
    """Invalid network description."""


class TopologyError(NetworkError):
    """Disconnected or otherwise singular network topology."""


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    r_pu: float
    x_pu: float
    capacity_pu: float

    @property
    def z(self) -> complex:
        return complex(self.r_pu, self.x_pu)


@dataclass(frozen=True)
class Network:
    """Immutable network with per-unit impedances.

    ``households`` maps household id -> node. Several households may share
    one node (single-phase equivalent of a pole/pillar connection).
    """

    n_nodes: int
    lines: tuple[Line, ...]
    base_kva: float = 100.0
    base_v: float = 230.0
    slack_voltage: complex = 1.0 + 0.0j
    households: dict[str, int] = field(default_factory=dict)
    radial: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def z_base(self) -> float:
        return self.base_v**2 / (self.base_kva * 1e3)

    def validate(self) -> None:
        if self.n_nodes < 2:
            raise NetworkError("network needs at least one node besides the slack")
        for k, ln in enumerate(self.lines):
            for n in (ln.from_node, ln.to_node):
                if not 0 <= n < self.n_nodes:
                    raise NetworkError(f"line {k}: node {n} out of range")
            if ln.from_node == ln.to_node:
                raise NetworkError(f"line {k}: self-loop at node {ln.from_node}")
            if ln.r_pu < 0:
                raise NetworkError(f"line {k}: negative resistance")
            if abs(ln.z) == 0:
                raise NetworkError(f"line {k}: zero impedance")
            if not ln.capacity_pu > 0:
                raise NetworkError(f"line {k}: capacity must be positive")
        if not self._connected():
            raise TopologyError("network graph is not connected")
        if self.radial and self.n_lines != self.n_nodes - 1:
            raise TopologyError(
                f"radial network with {self.n_nodes} nodes needs {self.n_nodes - 1} lines, "
                f"got {self.n_lines}"
            )
        for hid, node in self.households.items():
            if node == 0:
                raise NetworkError(f"household {hid} bound to the slack node")
            if not 0 < node < self.n_nodes:
                raise NetworkError(f"household {hid} bound to unknown node {node}")

    def _adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for k, ln in enumerate(self.lines):
            adj[ln.from_node].append((ln.to_node, k))
            adj[ln.to_node].append((ln.from_node, k))
        return adj

    def _connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        adj = self._adjacency()
        while queue:
            n = queue.popleft()
            for m, _ in adj[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        return len(seen) == self.n_nodes

    @cached_property
    def _tree(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.radial:
            raise TopologyError("tree structure is only defined for radial networks")
        parent = np.full(self.n_nodes, -1, dtype=int)
        parent_line = np.full(self.n_nodes, -1, dtype=int)
        depth = np.zeros(self.n_nodes, dtype=int)
        adj = self._adjacency()
        seen = {0}
        queue = deque([0])
        while queue:
            n = queue.popleft()
            for m, k in adj[n]:
                if m not in seen:
                    seen.add(m)
                    parent[m] = n
                    parent_line[m] = k
                    depth[m] = depth[n] + 1
                    queue.append(m)
        return parent, parent_line, depth

    def parents(self) -> np.ndarray:
        """Parent node of every node (slack gets -1). Radial networks only."""
        return self._tree[0].copy()

    def parent_lines(self) -> np.ndarray:
        """Index of the line joining each node to its parent (slack gets -1)."""
        return self._tree[1].copy()

    def depths(self) -> np.ndarray:
        return self._tree[2].copy()

    def path_to_root(self, node: int) -> list[int]:
        """Line indices on the unique path from ``node`` up to the slack."""
        parent, pline, _ = self._tree
        path = []
        while node != 0:
            path.append(int(pline[node]))
            node = int(parent[node])
        return path

    def path_resistance(self) -> np.ndarray:
        """Series resistance from the slack to every node (radial only)."""
        parent, pline, depth = self._tree
        out = np.zeros(self.n_nodes)
        for n in np.argsort(depth, kind="stable"):
            if n != 0:
                out[n] = out[parent[n]] + self.lines[pline[n]].r_pu
        return out


@dataclass(frozen=True)
class NetworkMatrices:
    Y: np.ndarray  # complex (n_nodes, n_nodes)
    G: np.ndarray  # real part of Y
    A: np.ndarray  # (n_lines, n_nodes) incidence, +1 from / -1 to
    B_branch: np.ndarray  # diagonal branch susceptances (n_lines, n_lines)
    B_reduced: np.ndarray  # A' B~ A without the slack row/column


def build_matrices(net: Network) -> NetworkMatrices:
    n, m = net.n_nodes, net.n_lines
    Y = np.zeros((n, n), dtype=complex)
    A = np.zeros((m, n))
    b = np.zeros(m)
    for k, ln in enumerate(net.lines):
        i, j = ln.from_node, ln.to_node
        y = 1.0 / ln.z
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
        A[k, i] = 1.0
        A[k, j] = -1.0
        # DC susceptance magnitude; sign cancels in the shift factors
        b[k] = -y.imag
    B_branch = np.diag(b)
    B_full = A.T @ B_branch @ A
    B_reduced = B_full[1:, 1:]
    return NetworkMatrices(Y=Y, G=Y.real.copy(), A=A, B_branch=B_branch, B_reduced=B_reduced)


# ---------------------------------------------------------------- file format

NETWORK_COLUMNS = ("from", "to", "r_ohm", "x_ohm", "capacity_kva")
HEADER_KEYS = {"base_kva", "base_v", "slack_pu", "slack_angle_deg"}


def parse_network(text: str, source: str = "<string>", households: dict[str, int] | None = None,
                  radial: bool = True) -> Network:
    """Parse the network text format.

    The file starts with ``key = value`` header lines (``base_kva``,
    ``base_v``, ``slack_pu``, optional ``slack_angle_deg``), followed by a
    CSV header row ``from,to,r_ohm,x_ohm,capacity_kva`` and one row per
    branch. ``#`` starts a comment. Nodes must be numbered 0..N.
    """
    header: dict[str, float] = {}
    rows: list[tuple[int, list[str]]] = []
    seen_columns = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not seen_columns and "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in HEADER_KEYS:
                raise NetworkError(f"{source}:{lineno}: unknown header key {key!r}")
            try:
                header[key] = float(value)
            except ValueError:
                raise NetworkError(f"{source}:{lineno}: header {key} is not a number") from None
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if not seen_columns:
            if tuple(c.lower() for c in cells) != NETWORK_COLUMNS:
                raise NetworkError(
                    f"{source}:{lineno}: expected column header {','.join(NETWORK_COLUMNS)}"
                )
            seen_columns = True
            continue
        rows.append((lineno, cells))
    if not seen_columns:
        raise NetworkError(f"{source}: missing branch table")

    base_kva = header.get("base_kva", 100.0)
    base_v = header.get("base_v", 230.0)
    z_base = base_v**2 / (base_kva * 1e3)
    lines = []
    max_node = 0
    for lineno, cells in rows:
        if len(cells) != len(NETWORK_COLUMNS):
            raise NetworkError(f"{source}:{lineno}: expected {len(NETWORK_COLUMNS)} fields")
        try:
            f, t = int(cells[0]), int(cells[1])
            r, x, cap = float(cells[2]), float(cells[3]), float(cells[4])
        except ValueError:
            raise NetworkError(f"{source}:{lineno}: malformed branch record") from None
        if r < 0:
            raise NetworkError(f"{source}:{lineno}: negative resistance")
        if r == 0 and x == 0:
            raise NetworkError(f"{source}:{lineno}: zero impedance")
        if cap <= 0:
            raise NetworkError(f"{source}:{lineno}: capacity must be positive")
        if f < 0 or t < 0:
            raise NetworkError(f"{source}:{lineno}: negative node id")
        max_node = max(max_node, f, t)
        lines.append(Line(f, t, r / z_base, x / z_base, cap / base_kva))

    angle = np.deg2rad(header.get("slack_angle_deg", 0.0))
    v0 = header.get("slack_pu", 1.0) * complex(np.cos(angle), np.sin(angle))
    try:
        return Network(
            n_nodes=max_node + 1,
            lines=tuple(lines),
            base_kva=base_kva,
            base_v=base_v,
            slack_voltage=v0,
            households=dict(households or {}),
            radial=radial,
        )
    except NetworkError as exc:
        raise type(exc)(f"{source}: {exc}") from None


def load_network(path: str | Path, households_path: str | Path | None = None,
                 radial: bool = True) -> Network:
    path = Path(path)
    households = load_households(households_path)[0] if households_path else None
    return parse_network(path.read_text(), source=str(path), households=households, radial=radial)


def format_network(net: Network) -> str:
    out = io.StringIO()
    angle = float(np.rad2deg(np.angle(net.slack_voltage)))
    out.write(f"base_kva = {net.base_kva!r}\n")
    out.write(f"base_v = {net.base_v!r}\n")
    out.write(f"slack_pu = {abs(net.slack_voltage)!r}\n")
    if angle:
        out.write(f"slack_angle_deg = {angle!r}\n")
    out.write(",".join(NETWORK_COLUMNS) + "\n")
    zb = net.z_base
    for ln in net.lines:
        out.write(
            f"{ln.from_node},{ln.to_node},{ln.r_pu * zb!r},{ln.x_pu * zb!r},"
            f"{ln.capacity_pu * net.base_kva!r}\n"
        )
    return out.getvalue()


def load_households(path: str | Path) -> tuple[dict[str, int], dict[str, str]]:
    """Read ``household_id,node[,type]`` rows. Returns (binding, types)."""
    path = Path(path)
    binding: dict[str, int] = {}
    types: dict[str, str] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"household_id", "node"} <= set(reader.fieldnames):
            raise NetworkError(f"{path}:1: expected columns household_id,node[,type]")
        for lineno, row in enumerate(reader, start=2):
            hid = (row["household_id"] or "").strip()
            try:
                node = int(row["node"])
            except (TypeError, ValueError):
                raise NetworkError(f"{path}:{lineno}: malformed node id") from None
            if not hid:
                raise NetworkError(f"{path}:{lineno}: empty household id")
            if hid in binding:
                raise NetworkError(f"{path}:{lineno}: duplicate household {hid}")
            binding[hid] = node
            if row.get("type"):
                types[hid] = row["type"].strip()
    return binding, types
