"""Voltage, injection-shift and loss sensitivities at an operating point.

All matrices are indexed by non-slack node ``k`` at position ``k - 1``;
the slack is the marginal absorber of every injection change, so its
derivatives are identically zero and it has no row or column.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .network import Network, NetworkMatrices, TopologyError
from .powerflow import OperatingPoint


class SensitivityError(ArithmeticError):
    """Degenerate operating point (singular derivative system, zero voltage)."""


class StaleBundleError(RuntimeError):
    """Bundle was computed for a different set of injections."""


def fingerprint(injections) -> str:
    arr = np.ascontiguousarray(np.asarray(injections, dtype=complex))
    return hashlib.blake2b(arr.tobytes(), digest_size=16).hexdigest()


@dataclass(frozen=True)
class SensitivityBundle:
    dV_dP: np.ndarray  # complex (N, N): d V_i / d P_k
    dVmag_dP: np.ndarray  # real (N, N): d|V_i| / d P_k
    isf: np.ndarray  # real (n_lines, N)
    dPloss_dP: np.ndarray  # real (N,)
    fingerprint: str

    @property
    def n(self) -> int:
        return self.dVmag_dP.shape[0]

    def vsc_column(self, node: int) -> np.ndarray:
        """d|V_m|/dP_node for every node m including the slack (zero)."""
        out = np.zeros(self.n + 1)
        if node != 0:
            out[1:] = self.dVmag_dP[:, node - 1]
        return out

    def lsf(self, node: int) -> float:
        return 0.0 if node == 0 else float(self.dPloss_dP[node - 1])

    def check_fresh(self, injections) -> None:
        if fingerprint(injections) != self.fingerprint:
            raise StaleBundleError("sensitivity bundle does not match the current injections")


def _derivative_system(Y: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Real 2N x 2N matrix of the derivative system in rectangular coordinates.

    For non-slack i the complex equation
        1{i=k} = conj(x_i) * I_i + conj(V_i) * sum_j Y_ij x_j
    is linear in (Re x, Im x); rows are [real parts; imaginary parts].
    """
    n = V.size - 1
    I_L = (Y @ V)[1:]
    A = np.conj(V[1:])[:, None] * Y[1:, 1:]
    M = np.empty((2 * n, 2 * n))
    M[:n, :n] = A.real
    M[:n, n:] = -A.imag
    M[n:, :n] = A.imag
    M[n:, n:] = A.real
    d = np.arange(n)
    M[d, d] += I_L.real
    M[d, n + d] += I_L.imag
    M[n + d, d] += I_L.imag
    M[n + d, n + d] -= I_L.real
    return M


def voltage_derivatives(mats: NetworkMatrices, op: OperatingPoint) -> np.ndarray:
    """Complex matrix dV_i/dP_k for all non-slack i, k (reactive power held fixed)."""
    V = op.V
    n = V.size - 1
    M = _derivative_system(mats.Y, V)
    rhs = np.zeros((2 * n, n))
    rhs[:n] = np.eye(n)
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SensitivityError(
            f"derivative system is singular (condition number {np.linalg.cond(M):.3e})"
        ) from None
    if not np.all(np.isfinite(sol)):
        raise SensitivityError(f"derivative system ill-conditioned (cond {np.linalg.cond(M):.3e})")
    return sol[:n] + 1j * sol[n:]


def vsc_magnitude(dV_dP: np.ndarray, op: OperatingPoint) -> np.ndarray:
    vmag = np.abs(op.V[1:])
    if np.any(vmag == 0):
        raise SensitivityError("zero voltage magnitude at a non-slack node")
    return (np.conj(op.V[1:])[:, None] * dV_dP).real / vmag[:, None]


def injection_shift_factors(mats: NetworkMatrices) -> np.ndarray:
    """DC injection shift factors, lines x non-slack nodes, slack as absorber."""
    A_L = mats.A[:, 1:]
    try:
        if np.any(np.diag(mats.B_branch) == 0):
            raise np.linalg.LinAlgError
        B_inv = np.linalg.inv(mats.B_reduced)
    except np.linalg.LinAlgError:
        raise TopologyError("reduced susceptance matrix is singular") from None
    return mats.B_branch @ A_L @ B_inv


def ptdf(isf: np.ndarray, i: int, j: int) -> np.ndarray:
    """Flow change per line for a unit transfer injected at ``i``, withdrawn at ``j``."""
    if i == j:
        return np.zeros(isf.shape[0])
    col_i = isf[:, i - 1] if i != 0 else 0.0
    col_j = isf[:, j - 1] if j != 0 else 0.0
    return np.zeros(isf.shape[0]) + col_i - col_j


def loss_sensitivities(mats: NetworkMatrices, op: OperatingPoint, dV_dP: np.ndarray) -> np.ndarray:
    V = op.V
    return 2.0 * (np.conj(V) @ mats.G[:, 1:] @ dV_dP).real


def bec(dPloss_dP: np.ndarray, i: int, j: int) -> float:
    """Bilateral exchange coefficient for injection at ``i`` withdrawn at ``j``."""
    if i == j:
        return 0.0
    li = float(dPloss_dP[i - 1]) if i != 0 else 0.0
    lj = float(dPloss_dP[j - 1]) if j != 0 else 0.0
    return li - lj


def compute_bundle(mats: NetworkMatrices, op: OperatingPoint, injections,
                   isf: np.ndarray | None = None) -> SensitivityBundle:
    """Assemble all three sensitivity families. ``isf`` is topology-only and may be reused."""
    dV = voltage_derivatives(mats, op)
    return SensitivityBundle(
        dV_dP=dV,
        dVmag_dP=vsc_magnitude(dV, op),
        isf=injection_shift_factors(mats) if isf is None else isf,
        dPloss_dP=loss_sensitivities(mats, op, dV),
        fingerprint=fingerprint(injections),
    )


class SensitivityEvaluator:
    """Column-wise sensitivities at one operating point.

    Factorises the derivative system once and solves only for the injection
    nodes that are asked for; loss sensitivities of all nodes come from one
    adjoint solve. Numerically equivalent to :func:`compute_bundle`.
    """

    def __init__(self, mats: NetworkMatrices, op: OperatingPoint):
        self.op = op
        self.mats = mats
        self.n = op.V.size - 1
        M = _derivative_system(mats.Y, op.V)
        try:
            self._lu = lu_factor(M, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            raise SensitivityError("derivative system is singular") from None
        if not np.all(np.isfinite(self._lu[0])) or np.any(np.diag(self._lu[0]) == 0):
            raise SensitivityError(
                f"derivative system is singular (condition number {np.linalg.cond(M):.3e})")
        self._vmag = np.abs(op.V[1:])
        if np.any(self._vmag == 0):
            raise SensitivityError("zero voltage magnitude at a non-slack node")
        self._cache: dict[int, np.ndarray] = {}
        self._lsf: np.ndarray | None = None

    def dv_columns(self, nodes) -> np.ndarray:
        """Complex dV/dP columns (N, len(nodes)) for non-slack ``nodes``."""
        nodes = [int(k) for k in nodes]
        todo = sorted({k for k in nodes if k not in self._cache})
        if todo:
            rhs = np.zeros((2 * self.n, len(todo)))
            rhs[np.array(todo) - 1, np.arange(len(todo))] = 1.0
            sol = lu_solve(self._lu, rhs, check_finite=False)
            for c, k in enumerate(todo):
                self._cache[k] = sol[:self.n, c] + 1j * sol[self.n:, c]
        if not nodes:
            return np.zeros((self.n, 0), dtype=complex)
        return np.column_stack([self._cache[k] for k in nodes])

    def vsc_columns(self, nodes) -> np.ndarray:
        """d|V|/dP for non-slack rows, columns ``nodes`` (all non-slack)."""
        dv = self.dv_columns(nodes)
        return (np.conj(self.op.V[1:])[:, None] * dv).real / self._vmag[:, None]

    def vsc_column(self, node: int) -> np.ndarray:
        """Like :meth:`SensitivityBundle.vsc_column` (length n+1, slack entry zero)."""
        out = np.zeros(self.n + 1)
        if node != 0:
            out[1:] = self.vsc_columns([node])[:, 0]
        return out

    @property
    def dPloss_dP(self) -> np.ndarray:
        if self._lsf is None:
            c = 2.0 * (self.mats.G[:, 1:].T @ np.conj(self.op.V))
            w = np.concatenate([c.real, -c.imag])
            y = lu_solve(self._lu, w, trans=1, check_finite=False)
            self._lsf = y[:self.n].copy()
        return self._lsf

    def lsf(self, node: int) -> float:
        return 0.0 if node == 0 else float(self.dPloss_dP[node - 1])


def predict_voltage_change(bundle: SensitivityBundle, seller: int, buyer: int, delta_p: float,
                           injections=None, *, allow_stale: bool = False) -> np.ndarray:
    """Linearised change of |V| at every node for +delta_p at ``seller``, -delta_p at ``buyer``.

    ``injections`` are the current committed injections; the bundle must have
    been computed for them unless ``allow_stale`` is set.
    """
    if not allow_stale:
        if injections is None:
            raise StaleBundleError("current injections required to check bundle freshness")
        bundle.check_fresh(injections)
    if delta_p < 0:
        raise ValueError("transfer size must be non-negative")
    if seller == buyer or delta_p == 0:
        return np.zeros(bundle.n + 1)
    return delta_p * (bundle.vsc_column(seller) - bundle.vsc_column(buyer))


def dump_bundle(bundle: SensitivityBundle, net: Network, out_dir: str | Path) -> list[Path]:
    """Write VSC, ISF and LSF tables as CSV (column headers are node ids)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nodes = list(range(1, net.n_nodes))
    paths = []

    def write(name, header, rows):
        p = out_dir / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        paths.append(p)

    write("vsc.csv", ["node"] + nodes,
          [[m] + [repr(float(v)) for v in bundle.dVmag_dP[m - 1]] for m in nodes])
    write("isf.csv", ["line", "from", "to"] + nodes,
          [[k, ln.from_node, ln.to_node] + [repr(float(v)) for v in bundle.isf[k]]
           for k, ln in enumerate(net.lines)])
    write("lsf.csv", ["node", "dPloss_dP"],
          [[m, repr(float(bundle.dPloss_dP[m - 1]))] for m in nodes])
    return paths


@dataclass(frozen=True)
class FiniteDifferenceReport:
    max_rel_error_vsc: float
    max_rel_error_lsf: float
    n_compared: int

    @property
    def max_rel_error(self) -> float:
        return max(self.max_rel_error_vsc, self.max_rel_error_lsf)


def finite_difference_check(net: Network, injections, step: float = 1e-5, floor: float = 1e-8,
                            tol: float = 1e-12) -> FiniteDifferenceReport:
    """Compare analytical d|V|/dP and dP_loss/dP against central differences of
    the AC power flow. Entries with magnitude <= ``floor`` are skipped."""
    from .network import build_matrices
    from .powerflow import PowerFlowSolver

    mats = build_matrices(net)
    solver = PowerFlowSolver(net, mats, tol=tol, max_iter=500)
    inj = np.zeros(net.n_nodes, dtype=complex)
    inj[:] = np.asarray(injections, dtype=complex)
    op = solver.solve(inj)
    b = compute_bundle(mats, op, inj)
    n = net.n_nodes - 1
    fd_v = np.zeros((n, n))
    fd_l = np.zeros(n)
    for k in range(1, net.n_nodes):
        up, dn = inj.copy(), inj.copy()
        up[k] += step
        dn[k] -= step
        op_u = solver.solve(up, v_init=op.V)
        op_d = solver.solve(dn, v_init=op.V)
        fd_v[:, k - 1] = (np.abs(op_u.V[1:]) - np.abs(op_d.V[1:])) / (2 * step)
        fd_l[k - 1] = (op_u.P_loss - op_d.P_loss) / (2 * step)

    def rel(a, ref):
        mask = np.abs(ref) > floor
        if not mask.any():
            return 0.0, 0
        return float(np.max(np.abs(a[mask] - ref[mask]) / np.abs(ref[mask]))), int(mask.sum())

    ev, nv = rel(b.dVmag_dP, fd_v)
    el, nl = rel(b.dPloss_dP, fd_l)
    return FiniteDifferenceReport(ev, el, nv + nl)
