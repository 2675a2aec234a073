"""AC power flow by fixed-point Z-bus iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, NetworkMatrices, build_matrices


class PowerFlowDiverged(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"power flow did not converge after {iterations} iterations (residual {residual:.3e} pu)"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class OperatingPoint:
    """A solved network state (all quantities per-unit).

    ``S`` is the net complex injection at every node, generation positive;
    ``S[0]`` is what the slack supplies. ``S_from``/``S_to`` are the branch
    powers leaving the ``from``/``to`` end of each line.
    """

    V: np.ndarray
    S: np.ndarray
    S_from: np.ndarray
    S_to: np.ndarray
    P_loss: float
    iterations: int
    residual: float

    @property
    def vmag(self) -> np.ndarray:
        return np.abs(self.V)

    @property
    def v_squared(self) -> np.ndarray:
        return np.abs(self.V) ** 2

    @property
    def slack_injection(self) -> complex:
        return complex(self.S[0])

    def current(self, k: int, net: Network) -> complex:
        """Complex current leaving the ``from`` end of line ``k``."""
        i = net.lines[k].from_node
        return np.conj(self.S_from[k] / self.V[i])


class PowerFlowSolver:
    """Reusable solver bound to one network (factorises Y_LL once)."""

    def __init__(self, net: Network, matrices: NetworkMatrices | None = None,
                 tol: float = 1e-8, max_iter: int = 100):
        self.net = net
        self.mats = matrices if matrices is not None else build_matrices(net)
        self.tol = tol
        self.max_iter = max_iter
        Y = self.mats.Y
        self._Y_LL = Y[1:, 1:]
        self._Z_LL = np.linalg.inv(self._Y_LL)
        self._w = -self._Z_LL @ Y[1:, 0] * net.slack_voltage  # no-load voltages
        self._from = np.array([ln.from_node for ln in net.lines], dtype=int)
        self._to = np.array([ln.to_node for ln in net.lines], dtype=int)
        self._y = np.array([1.0 / ln.z for ln in net.lines])

    def solve(self, injections, v_init: np.ndarray | None = None,
              tol: float | None = None) -> OperatingPoint:
        """Solve for complex injections given at the non-slack nodes.

        ``injections`` may have length ``n_nodes`` (entry 0 ignored) or
        ``n_nodes - 1``.
        """
        tol = self.tol if tol is None else tol
        n = self.net.n_nodes
        s = np.asarray(injections, dtype=complex)
        if s.shape == (n,):
            s_L = s[1:]
        elif s.shape == (n - 1,):
            s_L = s
        else:
            raise ValueError(f"expected {n} or {n - 1} injections, got shape {s.shape}")
        Y = self.mats.Y
        V = np.empty(n, dtype=complex)
        V[0] = self.net.slack_voltage
        V_L = self._w.copy() if v_init is None else np.asarray(v_init, dtype=complex)[1:].copy()

        residual = np.inf
        it = 0
        while True:
            V[1:] = V_L
            mismatch = s_L - V_L * np.conj(Y[1:] @ V)
            residual = float(np.max(np.abs(mismatch))) if mismatch.size else 0.0
            if residual <= tol:
                break
            if it >= self.max_iter or not np.isfinite(residual):
                raise PowerFlowDiverged(it, residual)
            V_L = self._Z_LL @ np.conj(s_L / V_L) + self._w
            it += 1
        return self._operating_point(V, it, residual)

    def _operating_point(self, V: np.ndarray, iterations: int, residual: float) -> OperatingPoint:
        I = self.mats.Y @ V
        S = V * np.conj(I)
        Vf, Vt = V[self._from], V[self._to]
        I_line = (Vf - Vt) * self._y
        S_from = Vf * np.conj(I_line)
        S_to = -Vt * np.conj(I_line)
        p_loss = float(np.sum(S_from.real + S_to.real))
        return OperatingPoint(
            V=V.copy(), S=S, S_from=S_from, S_to=S_to, P_loss=p_loss,
            iterations=iterations, residual=residual,
        )


def solve_power_flow(net: Network, injections, tol: float = 1e-8, max_iter: int = 100,
                     v_init: np.ndarray | None = None) -> OperatingPoint:
    return PowerFlowSolver(net, tol=tol, max_iter=max_iter).solve(injections, v_init=v_init)


@dataclass(frozen=True)
class LineFlows:
    S_from: np.ndarray
    S_to: np.ndarray
    losses: np.ndarray
    loading: np.ndarray  # max(|S_from|, |S_to|) / capacity


def line_flows(net: Network, op: OperatingPoint) -> LineFlows:
    cap = np.array([ln.capacity_pu for ln in net.lines])
    losses = op.S_from.real + op.S_to.real
    loading = np.maximum(np.abs(op.S_from), np.abs(op.S_to)) / cap
    return LineFlows(S_from=op.S_from, S_to=op.S_to, losses=losses, loading=loading)
