"""Network permission structure.

Every provisional trade is checked against voltage and line limits with the
linear sensitivities of the current operating point. Approved trades are
committed (the network is re-solved and the sensitivities refreshed) and
charged for the losses and congestion they cause. After each commit the
sellers are re-screened and blocked if even a minimum-size injection at
their bus would breach a limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network, NetworkMatrices, build_matrices
from .powerflow import OperatingPoint, PowerFlowDiverged, PowerFlowSolver
from .sensitivity import (
    SensitivityBundle, SensitivityEvaluator, compute_bundle, injection_shift_factors, ptdf,
)


@dataclass(frozen=True)
class PermissionConfig:
    v_min: float = 0.94
    v_max: float = 1.10
    guard_v: float = 0.005  # pu, tightens both voltage limits for predictions
    guard_cap: float = 0.02  # fraction of line capacity
    congestion_price: float = 0.0  # currency per kWh per unit |PTDF|
    buyer_share: float = 0.5
    probe_kwh: float = 0.01  # minimum order quantum used for blocking probes
    pf_tol: float = 1e-8
    pf_max_iter: int = 100

    @property
    def v_hi(self) -> float:
        return self.v_max - self.guard_v

    @property
    def v_lo(self) -> float:
        return self.v_min + self.guard_v


@dataclass(frozen=True)
class CostAllocation:
    loss_energy: float  # kWh
    loss_charge: float
    congestion_charge: float
    buyer_charge: float
    seller_charge: float

    @property
    def total(self) -> float:
        return self.loss_charge + self.congestion_charge

    @classmethod
    def zero(cls) -> "CostAllocation":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class Verdict:
    approved: bool
    reason: str  # ok | voltage | congestion | network-fault
    seller_node: int
    buyer_node: int
    quantity: float  # kWh
    binding: str = ""
    costs: CostAllocation = field(default_factory=CostAllocation.zero)
    predicted_dv: np.ndarray | None = None
    actual_dv: np.ndarray | None = None

    @property
    def prediction_error(self) -> float | None:
        if self.predicted_dv is None or self.actual_dv is None:
            return None
        return float(np.max(np.abs(self.predicted_dv - self.actual_dv)))

    def record(self) -> dict:
        rec = {
            "approved": self.approved, "reason": self.reason, "binding": self.binding,
            "seller_node": self.seller_node, "buyer_node": self.buyer_node,
            "quantity": self.quantity, "loss_energy": self.costs.loss_energy,
            "loss_charge": self.costs.loss_charge,
            "congestion_charge": self.costs.congestion_charge,
        }
        if self.predicted_dv is not None:
            rec["predicted_max_dv"] = float(np.max(np.abs(self.predicted_dv)))
        if self.prediction_error is not None:
            rec["actual_max_dv"] = float(np.max(np.abs(self.actual_dv)))
            rec["prediction_error"] = self.prediction_error
        return rec


class PermissionState:
    """Committed network state of one trading slot (single writer)."""

    def __init__(self, net: Network, base_injections, config: PermissionConfig = PermissionConfig(),
                 slot_hours: float = 0.25, loss_price: float = 0.0,
                 mats: NetworkMatrices | None = None, isf: np.ndarray | None = None,
                 solver: PowerFlowSolver | None = None):
        self.net = net
        self.config = config
        self.slot_hours = slot_hours
        self.loss_price = loss_price
        self.mats = mats if mats is not None else build_matrices(net)
        self.isf = isf if isf is not None else injection_shift_factors(self.mats)
        self.solver = solver if solver is not None else PowerFlowSolver(
            net, self.mats, tol=config.pf_tol, max_iter=config.pf_max_iter)
        self.capacity = np.array([ln.capacity_pu for ln in net.lines])
        self.injections = np.array(base_injections, dtype=complex)
        self.op: OperatingPoint = self.solver.solve(self.injections)
        self._bundle: SensitivityBundle | None = None
        self._sens: SensitivityEvaluator | None = None
        # crude bound on |d|V|/dP| used to skip blocking scans far from the limits
        self._vsc_bound = 2.0 * float(np.max(np.abs(self.solver._Z_LL)))
        self.verdicts: list[Verdict] = []
        self.n_commits = 0

    # -- state
    @property
    def bundle(self) -> SensitivityBundle:
        """Full sensitivity bundle of the committed state (for reporting)."""
        if self._bundle is None:
            self._bundle = compute_bundle(self.mats, self.op, self.injections, isf=self.isf)
        return self._bundle

    @property
    def sens(self) -> SensitivityEvaluator:
        """Column-wise sensitivities of the committed state (what the checks use)."""
        if self._sens is None:
            self._sens = SensitivityEvaluator(self.mats, self.op)
        return self._sens

    def _set_state(self, injections, op: OperatingPoint) -> None:
        self.injections = injections
        self.op = op
        self._bundle = None
        self._sens = None

    def predict(self, seller: int, buyer: int, dp: float) -> np.ndarray:
        """Linearised |V| change at every node (slack included) for a transfer of ``dp`` pu."""
        if seller == buyer or dp == 0:
            return np.zeros(self.net.n_nodes)
        return dp * (self.sens.vsc_column(seller) - self.sens.vsc_column(buyer))

    def to_pu(self, kwh: float) -> float:
        return kwh / self.slot_hours / self.net.base_kva

    def _resolve(self, injections) -> OperatingPoint:
        return self.solver.solve(injections, v_init=self.op.V)

    def add_load(self, node: int, kwh: float) -> None:
        """Commit an unvalidated withdrawal served from the slack (retailer import)."""
        self.add_loads({node: kwh})

    def add_loads(self, loads: dict[int, float]) -> None:
        inj = self.injections.copy()
        for node, kwh in loads.items():
            if node != 0:
                inj[node] -= self.to_pu(kwh)
        self._set_state(inj, self._resolve(inj))

    # -- evaluation
    def _check(self, seller: int, buyer: int, dp: float):
        """(ok, reason, binding, predicted dV) for a transfer of ``dp`` pu."""
        cfg = self.config
        dv = self.predict(seller, buyer, dp)
        vmag = np.abs(self.op.V)
        v_new = vmag + dv
        over = (v_new > cfg.v_hi) & (dv > 0)
        under = (v_new < cfg.v_lo) & (dv < 0)
        over[0] = under[0] = False
        if over.any() or under.any():
            m = int(np.flatnonzero(over | under)[0])
            return False, "voltage", f"node {m}", dv
        if seller != buyer:
            phi = ptdf(self.isf, seller, buyer)
            p_old = self.op.S_from.real
            p_new = p_old + phi * dp
            lim = (1.0 - cfg.guard_cap) * self.capacity
            bad = (np.abs(p_new) > lim) & (np.abs(p_new) > np.abs(p_old) + 1e-15)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                ln = self.net.lines[k]
                return False, "congestion", f"line {ln.from_node}-{ln.to_node}", dv
        return True, "ok", "", dv

    def costs(self, seller: int, buyer: int, kwh: float) -> CostAllocation:
        cfg = self.config
        loss_energy = (self.sens.lsf(seller) - self.sens.lsf(buyer)) * kwh if seller != buyer else 0.0
        loss_charge = loss_energy * self.loss_price
        cong = 0.0
        if cfg.congestion_price and seller != buyer:
            cong = cfg.congestion_price * kwh * float(np.sum(np.abs(ptdf(self.isf, seller, buyer))))
        total = loss_charge + cong
        return CostAllocation(loss_energy, loss_charge, cong,
                              cfg.buyer_share * total, (1.0 - cfg.buyer_share) * total)

    def validate_trade(self, seller: int, buyer: int, kwh: float, commit: bool = True) -> Verdict:
        """Check (and by default commit) a transfer of ``kwh`` from ``seller`` to ``buyer`` node.

        ``buyer == 0`` is an export to the retailer through the slack.
        """
        if kwh <= 0:
            raise ValueError("trade quantity must be positive")
        dp = self.to_pu(kwh)
        ok, reason, binding, dv = self._check(seller, buyer, dp)
        if not ok:
            v = Verdict(False, reason, seller, buyer, kwh, binding, predicted_dv=dv)
            self.verdicts.append(v)
            return v
        costs = self.costs(seller, buyer, kwh)
        v = Verdict(True, "ok", seller, buyer, kwh, costs=costs, predicted_dv=dv)
        if commit and seller != buyer:
            inj = self.injections.copy()
            if seller != 0:
                inj[seller] += dp
            if buyer != 0:
                inj[buyer] -= dp
            old = np.abs(self.op.V)
            try:
                op = self._resolve(inj)
            except PowerFlowDiverged as exc:
                v = Verdict(False, "network-fault", seller, buyer, kwh, str(exc), predicted_dv=dv)
                self.verdicts.append(v)
                return v
            self._set_state(inj, op)
            self.n_commits += 1
            v.actual_dv = np.abs(op.V) - old
        elif commit:
            v.actual_dv = np.zeros_like(dv)
        self.verdicts.append(v)
        return v

    def max_transfer(self, seller: int, buyer: int, kwh: float) -> float:
        """Largest quantity <= ``kwh`` (kWh) that passes the linear checks."""
        dp_max = self.to_pu(kwh)
        if self._check(seller, buyer, dp_max)[0]:
            return kwh
        cfg = self.config
        col = self.sens.vsc_column(seller) - self.sens.vsc_column(buyer)
        vmag = np.abs(self.op.V)
        bound = dp_max
        up = col > 0
        if up.any():
            bound = min(bound, float(np.min((cfg.v_hi - vmag[up]) / col[up])))
        dn = col < 0
        if dn.any():
            bound = min(bound, float(np.min((cfg.v_lo - vmag[dn]) / col[dn])))
        phi = ptdf(self.isf, seller, buyer)
        p = self.op.S_from.real
        lim = (1.0 - cfg.guard_cap) * self.capacity
        nz = np.abs(phi) > 1e-12
        if nz.any():
            room = np.where(phi[nz] > 0, (lim[nz] - p[nz]) / phi[nz], (-lim[nz] - p[nz]) / phi[nz])
            bound = min(bound, float(np.min(room)))
        if bound <= 0:
            return 0.0
        q = bound * self.slot_hours * self.net.base_kva * (1.0 - 1e-9)
        return float(q) if q > 1e-9 and self._check(seller, buyer, self.to_pu(q))[0] else 0.0

    def update_blocking(self, seller_nodes) -> np.ndarray:
        """Blocking flag per seller node: probe injection of one quantum at the node, withdrawn at the slack."""
        nodes = np.asarray(seller_nodes, dtype=int)
        flags = np.zeros(nodes.size, dtype=bool)
        live = nodes != 0
        if not live.any():
            return flags
        cfg = self.config
        dp = self.to_pu(cfg.probe_kwh)
        vmag = np.abs(self.op.V[1:])
        reach = dp * self._vsc_bound
        if vmag.max() + reach < cfg.v_hi and vmag.min() - reach > cfg.v_lo:
            bad_v = np.zeros(int(live.sum()), dtype=bool)
        else:
            cols = self.sens.vsc_columns(nodes[live]) * dp  # (N, k)
            v_new = vmag[:, None] + cols
            bad_v = (((v_new > cfg.v_hi) & (cols > 0))
                     | ((v_new < cfg.v_lo) & (cols < 0))).any(axis=0)
        flows = self.op.S_from.real[:, None]
        f_new = flows + self.isf[:, nodes[live] - 1] * dp
        lim = ((1.0 - cfg.guard_cap) * self.capacity)[:, None]
        bad_f = ((np.abs(f_new) > lim) & (np.abs(f_new) > np.abs(flows) + 1e-15)).any(axis=0)
        flags[live] = bad_v | bad_f
        return flags


@dataclass
class HouseholdSettlement:
    household_id: str
    imported: float = 0.0  # kWh from the retailer
    import_cost: float = 0.0
    exported: float = 0.0  # kWh to the retailer
    export_income: float = 0.0
    spilled: float = 0.0  # kWh of surplus neither traded nor exported


def settle_retailer_residuals(state: PermissionState, unfilled_buys: list[tuple[str, int, float]],
                              unfilled_sells: list[tuple[str, int, float, bool]],
                              import_price: float, export_price: float,
                              export_cap: float | None = None) -> dict[str, HouseholdSettlement]:
    """Settle what the market left over with the retailer.

    Unfilled buys are imported at ``import_price`` (always served). Unfilled
    sells ``(id, node, kWh, blocked)`` are exported at ``export_price`` after
    the same permission check as a trade to the slack; the largest feasible
    part is exported and the rest spilled. Exports are processed in order of
    increasing voltage impact. ``export_cap`` bounds total exports (kWh).
    """
    out: dict[str, HouseholdSettlement] = {}
    loads: dict[int, float] = {}
    for hid, node, q in unfilled_buys:
        if q <= 0:
            continue
        s = out.setdefault(hid, HouseholdSettlement(hid))
        s.imported += q
        s.import_cost += q * import_price
        loads[node] = loads.get(node, 0.0) + q
    if loads:
        state.add_loads(loads)

    cap = np.inf if export_cap is None else max(export_cap, 0.0)
    pending = [(hid, node, q) for hid, node, q, _ in unfilled_sells if q > 0]
    if pending:
        # blocking is re-evaluated now that the imports are on the network
        blocked = state.update_blocking([node for _, node, _ in pending])
        nodes = [node for _, node, _ in pending]
        live = [n for n in nodes if n != 0]
        cols = state.sens.vsc_columns(live)
        own = {n: cols[n - 1, c] for c, n in enumerate(live)}
        order = sorted(range(len(pending)),
                       key=lambda k: (own.get(pending[k][1], 0.0), pending[k][0]))
        pending = [(*pending[k], bool(blocked[k])) for k in order]
    for hid, node, q, blocked in pending:
        s = out.setdefault(hid, HouseholdSettlement(hid))
        exported = 0.0
        if not blocked:
            exported = _export(state, node, min(q, cap))
        s.exported += exported
        s.export_income += exported * export_price
        s.spilled += q - exported
        cap -= exported
    return out


def _export(state: PermissionState, node: int, want: float, max_rounds: int = 8) -> float:
    """Export as much of ``want`` kWh as the permission check allows.

    The linear bound is applied repeatedly: each accepted tranche is committed
    and re-solved, so the next bound starts from the true operating point.
    """
    done = 0.0
    for _ in range(max_rounds):
        rest = want - done
        if rest <= 1e-12:
            break
        q = state.max_transfer(node, 0, rest)
        if q <= 0:
            break
        if not state.validate_trade(node, 0, q).approved:
            break
        done += q
        if q >= rest:
            break
    return done
