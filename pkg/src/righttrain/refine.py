"""Continuous refinement of data volumes and compute shares.

With the tree and the instance-to-node mapping fixed, the remaining problem
is continuous in (x, rho).  The refiner minimizes epochs * epoch_energy with
the unrounded epoch count, under per-source and per-instance box bounds and
an increasing quadratic penalty on the deadline, using projected gradient
descent with a backtracking line search.  Feasibility of the result is
re-verified with the integer epoch count; the best feasible iterate wins, so
the returned objective never exceeds the input's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import compute_flows, incoming_volumes
from .model import Allocation, DomainError, Scenario, Solution
from .perf import evaluate

_REL_TOL = 1e-9


@dataclass
class RefineConfig:
    max_iters: int = 200          # inner iterations per penalty stage
    step_tol: float = 1e-10       # stop when the projected step gets this small
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    max_stages: int = 6
    rho_floor_frac: float = 1e-6  # lower box bound as a fraction of the share
    gradient_check: bool = False  # verify analytic gradients per stage start

    def validate(self):
        if self.step_tol <= 0 or self.penalty_init <= 0:
            raise ValueError("tolerances and penalty coefficients must be > 0")
        if self.penalty_growth <= 1:
            raise ValueError("penalty growth factor must be > 1")


class RefineFrame:
    """Everything constant during one refinement: coefficient matrices tying
    flows, energy, and timing to the (x, rho) variables."""

    def __init__(self, solution: Solution, scenario: Scenario):
        tree, deployment = solution.tree, solution.deployment
        self.scenario = scenario
        self.tree = tree
        self.deployment = deployment
        self.sources = sorted(tree.used_sources)
        self.instances = sorted(tree.instances)
        self.src_idx = {s: i for i, s in enumerate(self.sources)}
        self.inst_idx = {inst: i for i, inst in enumerate(self.instances)}
        ns, ni = len(self.sources), len(self.instances)

        self.delta = np.array([scenario.source(s).volume for s in self.sources])
        self.delta_total = float(self.delta.sum())

        # A[i, d]: Mbit entering instance i per Mbit taken from source d
        parents = tree.parent_map()
        self.A = np.zeros((ni, ns))
        for s in self.sources:
            coef, cur = 1.0, parents[s]
            while True:
                self.A[self.inst_idx[cur], self.src_idx[s]] += coef
                nxt = parents.get(cur)
                if nxt is None:
                    break
                coef *= scenario.layer(cur[0]).data_ratio
                cur = nxt

        self.r = np.array([scenario.layer(l).compute_req for l, _ in self.instances])
        nodes = [scenario.node(deployment.node_of(inst)) for inst in self.instances]
        self.e_p = np.array([n.e_p for n in nodes])
        self.e_f = np.array([n.e_f[inst[0] - 1]
                             for n, inst in zip(nodes, self.instances)])
        q = np.array([scenario.layer(l).data_ratio for l, _ in self.instances])
        inter = np.zeros(ni)
        for i, inst in enumerate(self.instances):
            parent = parents.get(inst)
            if parent is not None and deployment.node_of(parent) != deployment.node_of(inst):
                inter[i] = nodes[i].e_net
        # E(x, rho) = lin_x . x + sum_i (ef_coef[i] . x) / rho_i
        self.lin_x = (self.r * self.e_p)[:, None] * self.A \
            + (inter * q)[:, None] * self.A
        self.lin_x = self.lin_x.sum(axis=0)
        self.ef_coef = (self.r * self.e_f)[:, None] * self.A

        km = scenario.k_model
        self.k_mult = 1.0 + km.kappa_i * (ni - tree.depth())
        self.k0, self.kappa_d, self.phi_min = km.k0, km.kappa_d, km.phi_min

        # timing structure: ordered inter-node pairs and their flow coefficients
        pair_ids: dict = {}
        pair_rows = []
        edge_pair = {}
        for child, parent in tree.edges:
            a = deployment.placement_node(child, scenario)
            b = deployment.placement_node(parent, scenario)
            if a == b:
                continue
            if (a, b) not in pair_ids:
                pair_ids[(a, b)] = len(pair_rows)
                pair_rows.append(np.zeros(ns))
            if isinstance(child, str):
                coef = np.zeros(ns)
                coef[self.src_idx[child]] = 1.0
            else:
                coef = scenario.layer(child[0]).data_ratio * self.A[self.inst_idx[child]]
            pair_rows[pair_ids[(a, b)]] += coef
            edge_pair[(child, parent)] = pair_ids[(a, b)]
        self.pair_coef = np.array(pair_rows) if pair_rows else np.zeros((0, ns))
        self.pair_cap = np.array([scenario.link(a, b) for (a, b) in pair_ids])
        self.edge_pair = edge_pair
        self.children = tree.children_map()
        self.root = tree.root()

        # box bounds: data in [phi_min * delta, delta], compute in
        # (0, mapper share]; the share partition is kept as a hard cap
        self.x_lo = self.phi_min * self.delta
        self.x_hi = self.delta.copy()
        self.rho_hi = np.array([solution.allocation.rho[inst]
                                for inst in self.instances])

    # -- objective -----------------------------------------------------------

    def phi(self, x):
        return float(x.sum()) / self.delta_total

    def epochs_cont(self, x):
        return (self.k0 + self.kappa_d * (-math.log(self.phi(x)))) * self.k_mult

    def energy(self, x, rho):
        return float(self.lin_x @ x + ((self.ef_coef @ x) / rho).sum())

    def objective(self, x, rho):
        return self.epochs_cont(x) * self.energy(x, rho)

    def objective_grad(self, x, rho):
        """(value, d/dx, d/drho) of the unrounded objective."""
        phi = self.phi(x)
        k = (self.k0 + self.kappa_d * (-math.log(phi))) * self.k_mult
        dk_dx = -self.kappa_d * self.k_mult / (phi * self.delta_total)
        ef_x = self.ef_coef @ x
        energy = float(self.lin_x @ x + (ef_x / rho).sum())
        de_dx = self.lin_x + (self.ef_coef / rho[:, None]).sum(axis=0)
        de_drho = -ef_x / rho ** 2
        value = k * energy
        gx = dk_dx * energy + k * de_dx
        grho = k * de_drho
        return value, gx, grho

    # -- timing --------------------------------------------------------------

    def epoch_time_grad(self, x, rho):
        """Epoch duration and its gradient via the critical path."""
        t_net = (self.pair_coef @ x) / self.pair_cap if len(self.pair_cap) else np.zeros(0)
        w = self.r * (self.A @ x)
        t_comp = w / rho
        t_end = {}
        argmax = {}
        for inst in self.instances:  # sorted = layer ascending = topological
            best, best_child = 0.0, None
            for child in self.children[inst]:
                arrive = 0.0 if isinstance(child, str) else t_end[child]
                pid = self.edge_pair.get((child, inst))
                if pid is not None:
                    arrive += t_net[pid]
                if arrive > best:
                    best, best_child = arrive, child
            t_end[inst] = best + t_comp[self.inst_idx[inst]]
            argmax[inst] = best_child
        T = t_end[self.root]

        gx = np.zeros(len(self.sources))
        grho = np.zeros(len(self.instances))
        cur = self.root
        while cur is not None:
            i = self.inst_idx[cur]
            gx += self.r[i] * self.A[i] / rho[i]
            grho[i] += -w[i] / rho[i] ** 2
            child = argmax[cur]
            if child is not None:
                pid = self.edge_pair.get((child, cur))
                if pid is not None:
                    gx += self.pair_coef[pid] / self.pair_cap[pid]
            cur = None if child is None or isinstance(child, str) else child
        return T, gx, grho

    def total_time_cont(self, x, rho):
        T, _, _ = self.epoch_time_grad(x, rho)
        return self.epochs_cont(x) * T

    def deadline_ok(self, x, rho, t_max):
        """Integer-epoch feasibility of a candidate point."""
        T, _, _ = self.epoch_time_grad(x, rho)
        k = math.ceil(self.epochs_cont(x) - 1e-12)
        return k * T <= t_max * (1 + _REL_TOL)

    def in_box(self, x, rho, tol=1e-7):
        return (np.all(x >= self.x_lo * (1 - tol)) and np.all(x <= self.x_hi * (1 + tol))
                and np.all(rho > 0) and np.all(rho <= self.rho_hi * (1 + tol)))


def make_frame(solution: Solution, scenario: Scenario) -> RefineFrame:
    return RefineFrame(solution, scenario)


def objective_and_gradient(x, rho, frame: RefineFrame, scenario=None):
    """Unrounded objective and its analytic gradient at an interior point.

    x and rho follow the frame's source/instance ordering.  Raises if the
    point leaves the box the refiner operates in.
    """
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if not frame.in_box(x, rho):
        raise DomainError("point outside the refinement box")
    return frame.objective_grad(x, rho)


@dataclass
class RefineResult:
    solution: Solution
    improved: bool
    message: str = ""
    history: list = field(default_factory=list)  # (stage, iter, penalized, true, feasible)
    stages: int = 0


def refine(solution: Solution, scenario: Scenario, t_max: float,
           cfg: RefineConfig | None = None) -> RefineResult:
    """Shrink data volumes and compute shares to cut total training energy.

    The input must be deadline-feasible at full data and full shares; it is
    returned unchanged (improved=False) when no feasible descent exists.
    """
    cfg = cfg or RefineConfig()
    cfg.validate()
    frame = RefineFrame(solution, scenario)
    ns, ni = len(frame.sources), len(frame.instances)

    lo = np.concatenate([frame.x_lo, cfg.rho_floor_frac * frame.rho_hi])
    hi = np.concatenate([frame.x_hi, frame.rho_hi])
    span = hi - lo

    def split(z):
        var = lo + z * span
        return var[:ns], var[ns:]

    def penalized(z, beta):
        x, rho = split(z)
        f, gx, grho = frame.objective_grad(x, rho)
        T, tx, trho = frame.epoch_time_grad(x, rho)
        k = frame.epochs_cont(x)
        dk_dx = -frame.kappa_d * frame.k_mult / (frame.phi(x) * frame.delta_total)
        viol = k * T - t_max
        p = f + beta * max(viol, 0.0) ** 2
        g = np.concatenate([gx, grho])
        if viol > 0:
            gv = np.concatenate([dk_dx * T + k * tx, k * trho])
            g = g + 2 * beta * viol * gv
        return p, f, g * span, (x, rho, T, k)

    z = np.ones(ns + ni)
    x0, rho0 = split(z)
    f0 = frame.objective(x0, rho0)
    best = (f0, z.copy()) if frame.deadline_ok(x0, rho0, t_max) else (math.inf, None)

    beta_scale = max(f0, 1e-12) / max(t_max, 1e-9) ** 2
    history = []
    stages_run = 0
    for stage in range(cfg.max_stages):
        beta = cfg.penalty_init * beta_scale * cfg.penalty_growth ** stage
        stages_run = stage + 1
        if cfg.gradient_check:
            _check_gradient(frame, split(z))
        step = 0.25
        p_cur, f_cur, g, extras = penalized(z, beta)
        for it in range(cfg.max_iters):
            moved = False
            while step > 1e-14:
                z_new = np.clip(z - step * g, 0.0, 1.0)
                if not np.any(z_new != z):
                    break
                p_new, f_new, g_new, extras_new = penalized(z_new, beta)
                if p_new <= p_cur - 1e-12 * max(1.0, abs(p_cur)):
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
            delta_z = float(np.linalg.norm(z_new - z))
            z, p_cur, f_cur, g, extras = z_new, p_new, f_new, g_new, extras_new
            x_c, rho_c, T_c, k_c = extras
            feasible = frame.deadline_ok(x_c, rho_c, t_max)
            if feasible and f_cur < best[0]:
                best = (f_cur, z.copy())
            history.append((stage, it, p_cur, f_cur, bool(feasible)))
            step = min(step * 2.0, 1.0)
            if delta_z < cfg.step_tol:
                break
        x_c, rho_c = split(z)
        if frame.total_time_cont(x_c, rho_c) <= t_max:
            break  # penalty inactive; later stages change nothing

    if best[1] is None:
        out = evaluate(solution, scenario)
        return RefineResult(solution=out, improved=False,
                            message="no feasible refinement from the full-data start",
                            history=history, stages=stages_run)

    x_best, rho_best = split(best[1])
    alloc = Allocation(rho={inst: float(rho_best[i])
                            for i, inst in enumerate(frame.instances)},
                       x={s: float(x_best[i]) for i, s in enumerate(frame.sources)})
    refined = Solution(tree=solution.tree, deployment=solution.deployment,
                       allocation=alloc, strategy=solution.strategy)
    refined = evaluate(refined, scenario)
    improved = best[0] < f0 * (1 - 1e-9)
    msg = "refined" if improved else "no improvement"
    return RefineResult(solution=refined, improved=improved, message=msg,
                        history=history, stages=stages_run)


def _check_gradient(frame, point, h_rel=1e-6, rtol=1e-3):
    x, rho = point
    val, gx, grho = frame.objective_grad(x, rho)
    for vec, grad, name in ((x, gx, "x"), (rho, grho, "rho")):
        for j in range(len(vec)):
            h = h_rel * max(abs(vec[j]), 1e-9)
            up, dn = vec.copy(), vec.copy()
            up[j] += h
            dn[j] -= h
            if name == "x":
                fd = (frame.objective(up, rho) - frame.objective(dn, rho)) / (2 * h)
            else:
                fd = (frame.objective(x, up) - frame.objective(x, dn)) / (2 * h)
            if abs(fd - grad[j]) > rtol * max(1.0, abs(fd)):
                raise AssertionError(
                    f"gradient mismatch on {name}[{j}]: {grad[j]:.6g} vs {fd:.6g}")
