"""Instance-to-node mapping via a delay-aware Steiner tree on an expanded graph.

The expanded graph has a vertex per feasible (layer instance, node) pairing
plus one vertex per data source and a sink joining every feasible root
placement.  Edge weights are the energy cost of the head placement plus the
transmission energy of the edge flow; edge delays are epoch-count-scaled
transfer plus compute times.  Mapping greedily grows a tree from the sink by
repeatedly attaching the cheapest delay-feasible path from an unconnected
source, the classic nearest-terminal Steiner heuristic, with each attachment
re-verified against the deadline on the real timing model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .constraints import compute_flows, incoming_volumes, node_pair_flows
from .model import (CapExceededError, Deployment, EmptyGraphError,
                    InfeasibleError, InstanceTree, Scenario, Solution)
from .perf import epoch_metrics, proportional_allocation

OMEGA = ("omega",)

_REL_TOL = 1e-9


def _vkey(vertex):
    return repr(vertex)


@dataclass
class ExpandedGraph:
    """Weighted DAG with per-edge (weight, delay) attributes."""

    vertices: list = field(default_factory=list)
    edges_out: dict = field(default_factory=dict)   # v -> [(head, w, delay)]
    edge_attrs: dict = field(default_factory=dict)  # (u, v) -> (w, delay)
    order: list = field(default_factory=list)       # topological
    # populated by build_expanded_graph
    tree: InstanceTree | None = None
    epochs: int = 1
    flows: dict = field(default_factory=dict)
    sources: list = field(default_factory=list)

    @classmethod
    def from_edges(cls, edges) -> "ExpandedGraph":
        """Build from (tail, head, weight, delay) tuples; must form a DAG."""
        g = cls()
        verts = set()
        for u, v, w, d in edges:
            verts.update((u, v))
            g.edges_out.setdefault(u, []).append((v, float(w), float(d)))
            g.edge_attrs[(u, v)] = (float(w), float(d))
        g.vertices = sorted(verts, key=_vkey)
        for u in g.vertices:
            g.edges_out.setdefault(u, []).sort(key=lambda e: _vkey(e[0]))
        g.order = g._toposort()
        return g

    def _toposort(self):
        indeg = {v: 0 for v in self.vertices}
        for u in self.vertices:
            for head, _, _ in self.edges_out.get(u, []):
                indeg[head] += 1
        ready = sorted((v for v in self.vertices if indeg[v] == 0), key=_vkey)
        out = []
        while ready:
            v = ready.pop(0)
            out.append(v)
            changed = False
            for head, _, _ in self.edges_out.get(v, []):
                indeg[head] -= 1
                if indeg[head] == 0:
                    ready.append(head)
                    changed = True
            if changed:
                ready.sort(key=_vkey)
        if len(out) != len(self.vertices):
            raise ValueError("graph contains a cycle")
        return out

    def mapping_vertices(self):
        return [v for v in self.vertices if v[0] == "v"]


def build_expanded_graph(tree: InstanceTree, scenario: Scenario,
                         epochs: int) -> ExpandedGraph:
    """Expanded decision graph for one instance tree at full data.

    Vertices: ("d", source), ("v", layer, index, node), and the sink OMEGA.
    An edge exists where the tree has the corresponding data edge and the two
    nodes can exchange the edge's full-data flow.  Compute cost and time at a
    head vertex assume the placed instance can draw on the node's full
    capacity; co-location sharing is priced later by the authoritative
    deadline re-check.
    """
    x = {s: scenario.source(s).volume for s in tree.used_sources}
    flows = compute_flows(tree, x, scenario)
    incoming = incoming_volumes(tree, flows)

    feasible = {}
    for inst in tree.instances:
        nodes = scenario.feasible_nodes(inst[0])
        if not nodes:
            raise EmptyGraphError(
                f"layer {inst[0]} has no node with sufficient memory")
        feasible[inst] = nodes

    loads = {inst: scenario.layer(inst[0]).compute_req * incoming[inst]
             for inst in tree.instances}

    def head_cost(inst, node_id):
        """Energy and compute time of placing inst on node at full capacity."""
        phys = scenario.node(node_id)
        work = loads[inst]
        t_comp = work / phys.compute
        e_comp = work * phys.e_p + t_comp * phys.e_f[inst[0] - 1]
        return e_comp, t_comp

    edges = []
    for child, parent in sorted(tree.edges, key=str):
        vol = flows[(child, parent)]
        for node_b in feasible[parent]:
            e_comp, t_comp = head_cost(parent, node_b)
            if isinstance(child, str):
                tails = [(("d", child), scenario.source(child).host)]
            else:
                tails = [(("v", child[0], child[1], n), n) for n in feasible[child]]
            for tail_vertex, node_a in tails:
                cap = scenario.link(node_a, node_b)
                if node_a != node_b and (cap <= 0 or vol > cap * (1 + _REL_TOL)):
                    continue
                t_net = 0.0 if node_a == node_b else vol / cap
                e_net = 0.0 if node_a == node_b \
                    else scenario.node(node_a).e_net * vol
                head_vertex = ("v", parent[0], parent[1], node_b)
                edges.append((tail_vertex, head_vertex,
                              e_comp + e_net, epochs * (t_net + t_comp)))

    root = tree.root()
    for node_id in feasible[root]:
        edges.append((("v", root[0], root[1], node_id), OMEGA, 0.0, 0.0))

    g = ExpandedGraph.from_edges(edges)
    g.tree = tree
    g.epochs = epochs
    g.flows = flows
    g.sources = sorted(tree.used_sources)
    return g


@dataclass
class PathResult:
    weight: float
    delay: float
    path: list

    def edges(self):
        return list(zip(self.path[:-1], self.path[1:]))


def restricted_min_weight_path(graph: ExpandedGraph, start, targets,
                               delay_bound: float, eps: float,
                               excluded=frozenset()) -> PathResult:
    """Min-weight start->targets path with total delay <= delay_bound.

    eps = 0 runs an exact Pareto-label sweep.  eps > 0 runs weight-budget
    dynamic programming on scaled weights with a doubling search for the
    budget scale, guaranteeing weight <= (1+eps) * optimum.
    """
    if delay_bound < 0:
        raise InfeasibleError("negative delay bound")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    targets = {t for t in targets if t not in excluded}
    if start in excluded or not targets:
        raise InfeasibleError("start excluded or no admissible target")
    if start in targets:
        return PathResult(0.0, 0.0, [start])

    order = [v for v in graph.order if v not in excluded]
    pos = {v: i for i, v in enumerate(order)}
    if start not in pos:
        raise InfeasibleError(f"start vertex {start} not in graph")
    adj = {v: [(h, w, d) for h, w, d in graph.edges_out.get(v, [])
               if h not in excluded] for v in order}

    if eps == 0:
        return _pareto_path(order, pos, adj, start, targets, delay_bound)
    return _scaled_path(order, pos, adj, start, targets, delay_bound, eps)


def _delay_ok(delay, bound):
    return delay <= bound + _REL_TOL * max(1.0, abs(bound))


def _pareto_path(order, pos, adj, start, targets, bound):
    labels = {v: [] for v in order}  # (delay, weight, parent_vertex, parent_idx)
    labels[start] = [(0.0, 0.0, None, -1)]
    for v in order[pos[start]:]:
        if not labels[v]:
            continue
        for head, w, d in adj[v]:
            if pos.get(head, -1) <= pos[v]:
                continue
            for idx, (dl, wt, _, _) in enumerate(labels[v]):
                nd, nw = dl + d, wt + w
                if not _delay_ok(nd, bound):
                    continue
                dominated = any(od <= nd + 1e-15 and ow <= nw + 1e-15
                                for od, ow, _, _ in labels[head])
                if dominated:
                    continue
                labels[head] = [(od, ow, pv, pi) for od, ow, pv, pi in labels[head]
                                if not (nd <= od + 1e-15 and nw <= ow + 1e-15)]
                labels[head].append((nd, nw, v, idx))
                labels[head].sort()
    best = None
    for t in sorted(targets, key=_vkey):
        for idx, (dl, wt, _, _) in enumerate(labels.get(t, [])):
            cand = (wt, dl, _vkey(t))
            if best is None or cand < best[0]:
                best = (cand, t, idx)
    if best is None:
        raise InfeasibleError(f"no path within delay bound {bound:.6g}")
    _, t, idx = best
    path = []
    cur, ci = t, idx
    while cur is not None:
        path.append(cur)
        dl, wt, pv, pi = labels[cur][ci]
        cur, ci = pv, pi
    path.reverse()
    dl, wt, _, _ = labels[t][idx]
    return PathResult(wt, dl, path)


def _single_criterion_path(order, pos, adj, start, targets, minimize="weight"):
    """DAG DP minimizing one criterion, tracking the other; returns
    (primary, secondary, path) or None if no target is reachable."""
    INF = math.inf
    best = {v: (INF, INF, None) for v in order}
    best[start] = (0.0, 0.0, None)
    for v in order[pos[start]:]:
        pb, sb, _ = best[v]
        if pb == INF:
            continue
        for head, w, d in adj[v]:
            if pos.get(head, -1) <= pos[v]:
                continue
            p, s = (w, d) if minimize == "weight" else (d, w)
            cand = (pb + p, sb + s, v)
            if cand[:2] < best[head][:2]:
                best[head] = cand
    reach = [(best[t][0], best[t][1], _vkey(t), t) for t in targets
             if best[t][0] < INF]
    if not reach:
        return None
    p, s, _, t = min(reach)
    path = []
    cur = t
    while cur is not None:
        path.append(cur)
        cur = best[cur][2]
    path.reverse()
    return p, s, path


def _path_attrs(path, adj_lookup):
    w = d = 0.0
    for u, v in zip(path[:-1], path[1:]):
        ew, ed = adj_lookup[(u, v)]
        w += ew
        d += ed
    return w, d


def _scaled_path(order, pos, adj, start, targets, bound, eps):
    lookup = {(v, h): (w, d) for v in order for h, w, d in adj[v]}

    min_w = _single_criterion_path(order, pos, adj, start, targets, "weight")
    if min_w is None:
        raise InfeasibleError("targets unreachable from start")
    if _delay_ok(min_w[1], bound):
        return PathResult(min_w[0], min_w[1], min_w[2])

    min_d = _single_criterion_path(order, pos, adj, start, targets, "delay")
    if min_d is None or not _delay_ok(min_d[0], bound):
        got = "unreachable" if min_d is None else f"min delay {min_d[0]:.6g}"
        raise InfeasibleError(f"no path within delay bound {bound:.6g} ({got})")
    ub = min_d[1]  # weight of the fastest path: a feasible witness

    # optimum might be a zero-weight path even though the min-weight DP's
    # pick was too slow; check the zero-weight subgraph exactly
    zero_adj = {v: [(h, w, d) for h, w, d in adj[v] if w <= 0.0] for v in order}
    zd = _single_criterion_path(order, pos, zero_adj, start, targets, "delay")
    if zd is not None and _delay_ok(zd[0], bound):
        return PathResult(zd[1], zd[0], zd[2])

    lb = min_w[0]
    if lb <= 0:
        lb = min((w for v in order for _, w, _ in adj[v] if w > 0), default=ub)
    if ub <= lb * (1 + eps) or ub == 0:
        return PathResult(min_d[1], min_d[0], min_d[2])

    # longest possible hop count from start bounds the rounding error
    hops = {v: -1 for v in order}
    hops[start] = 0
    for v in order[pos[start]:]:
        if hops[v] < 0:
            continue
        for head, _, _ in adj[v]:
            if pos.get(head, -1) > pos[v]:
                hops[head] = max(hops[head], hops[v] + 1)
    n_edges = max(1, max((hops[t] for t in targets if hops[t] >= 0), default=1))

    def budget_dp(scale, budget):
        idx = {v: i for i, v in enumerate(order)}
        D = np.full((len(order), budget + 1), math.inf)
        D[idx[start], :] = 0.0
        parent = {}
        for v in order[pos[start]:]:
            row = D[idx[v]]
            if not np.isfinite(row).any():
                continue
            for head, w, d in adj[v]:
                if pos.get(head, -1) <= pos[v]:
                    continue
                s = int(w / scale)  # floor scaling
                if s > budget:
                    continue
                hrow = D[idx[head]]
                cand = row[:budget + 1 - s] + d
                seg = hrow[s:]
                mask = cand < seg
                if mask.any():
                    seg[mask] = cand[mask]
                    for b in np.nonzero(mask)[0]:
                        parent[(head, b + s)] = (v, int(b))
        best = None
        for b in range(budget + 1):
            for t in sorted(targets, key=_vkey):
                dl = D[idx[t], b]
                if _delay_ok(dl, bound):
                    best = (t, b, dl)
                    break
            if best:
                break
        if not best:
            return None
        t, b, dl = best
        path = [t]
        cur = (t, b)
        while cur in parent:
            cur = parent[cur]
            path.append(cur[0])
        path.reverse()
        return path

    # doubling search: a failed test at guess u certifies optimum > u, a
    # passing test yields a path of weight <= u * (1 + eps)
    test_budget = math.ceil(n_edges / eps)
    u, prev, found, u_succ = lb, None, None, None
    while True:
        path = budget_dp(u * eps / n_edges, test_budget)
        if path is not None:
            found, u_succ = path, u
            break
        prev = u
        if u >= ub:
            break
        u = min(u * 2, ub)
    if found is None:  # numerical corner: the fastest path is a witness
        return PathResult(min_d[1], min_d[0], min_d[2])
    if prev is None:  # first guess already within (1 + eps) of the optimum
        w, d = _path_attrs(found, lookup)
        return PathResult(w, d, found)
    # optimum sits in (prev, u_succ]; re-run at the finer scale so the
    # rounding error is bounded by eps * prev < eps * optimum
    delta = prev * eps / n_edges
    path = budget_dp(delta, math.ceil(u_succ * (1 + eps) / delta))
    if path is None:
        path = found
    w, d = _path_attrs(path, lookup)
    return PathResult(w, d, path)


def da_steiner_tree(graph: ExpandedGraph, scenario: Scenario,
                    tree: InstanceTree, t_max: float, eps: float) -> Deployment:
    """Greedy delay-aware Steiner tree on the expanded graph.

    Grows the tree from the sink by repeatedly adding the cheapest restricted
    path from a not-yet-connected source.  Once an instance gets a node, its
    alternative placements leave the graph, so later paths must route through
    the committed choice.  Each tentative addition is re-evaluated on the
    exact timing model (with capacity sharing among co-located instances) and
    rejected, with a tightened per-source delay budget, if the partial
    solution would miss the deadline.
    """
    if t_max <= 0:
        raise InfeasibleError("deadline must be > 0")
    in_tree = {OMEGA}
    chosen: dict = {}
    excluded: set = set()
    reached: list = []
    bounds = {d: t_max for d in graph.sources}
    failures = {d: "no path attempted" for d in graph.sources}
    unreached = sorted(graph.sources)

    guard = 0
    while unreached:
        guard += 1
        if guard > 100 * (len(graph.sources) + 1) * (len(graph.vertices) + 1):
            raise RuntimeError("mapping did not converge")  # pragma: no cover
        candidates = []
        for d in unreached:
            if bounds[d] < 0:
                continue
            try:
                res = restricted_min_weight_path(
                    graph, ("d", d), in_tree, bounds[d], eps, excluded)
            except InfeasibleError as exc:
                failures[d] = str(exc)
                continue
            candidates.append((res.weight, d, tuple(_vkey(v) for v in res.path), res))
        if not candidates:
            detail = "; ".join(f"{d}: {failures[d]}" for d in sorted(unreached))
            raise InfeasibleError(f"cannot connect all sources by {t_max:.6g} s ({detail})")
        candidates.sort(key=lambda c: c[:3])

        committed = False
        for _, d, _, res in candidates:
            new_chosen = dict(chosen)
            for v in res.path:
                if v[0] == "v":
                    new_chosen[(v[1], v[2])] = v[3]
            if _partial_deadline_ok(graph, scenario, tree, new_chosen,
                                    reached + [d], t_max):
                chosen = new_chosen
                in_tree.update(res.path)
                for inst, node_id in chosen.items():
                    for v in graph.mapping_vertices():
                        if (v[1], v[2]) == inst and v[3] != node_id:
                            excluded.add(v)
                reached.append(d)
                unreached.remove(d)
                committed = True
                break
            failures[d] = (f"path with delay {res.delay:.6g} rejected by "
                           "deadline re-check")
            bounds[d] = res.delay * (1 - 1e-9) - 1e-15
        if not committed:
            continue

    deployment = Deployment(mapping=chosen)
    deployment.validate(tree, scenario)
    return deployment


def _partial_deadline_ok(graph, scenario, tree, chosen, reached, t_max):
    """Exact epoch timing of the partially mapped tree against the deadline,
    including link-capacity feasibility of the full-data flows."""
    inst_set = set(chosen)
    edges = [(c, p) for c, p in tree.edges
             if (c in reached if isinstance(c, str) else c in inst_set)
             and p in inst_set]
    partial = InstanceTree(instances=sorted(inst_set), edges=edges,
                           used_sources=sorted(reached))
    deployment = Deployment(mapping=dict(chosen))
    alloc = proportional_allocation(partial, deployment, scenario)
    flows = compute_flows(partial, alloc.x, scenario)
    for (a, b), vol in node_pair_flows(partial, deployment, flows, scenario).items():
        if vol > scenario.link(a, b) * (1 + _REL_TOL):
            return False
    sol = Solution(tree=partial, deployment=deployment, allocation=alloc)
    m = epoch_metrics(sol, scenario)
    return graph.epochs * m.epoch_time <= t_max * (1 + _REL_TOL)


def deployment_graph_weight(graph: ExpandedGraph, deployment: Deployment) -> float:
    """Total expanded-graph weight of the tree induced by a full deployment."""
    tree = graph.tree
    total = 0.0
    for child, parent in tree.edges:
        if isinstance(child, str):
            u = ("d", child)
        else:
            u = ("v", child[0], child[1], deployment.node_of(child))
        v = ("v", parent[0], parent[1], deployment.node_of(parent))
        if (u, v) not in graph.edge_attrs:
            return math.inf
        total += graph.edge_attrs[(u, v)][0]
    root = tree.root()
    rv = ("v", root[0], root[1], deployment.node_of(root))
    if (rv, OMEGA) not in graph.edge_attrs:
        return math.inf
    return total + graph.edge_attrs[(rv, OMEGA)][0]


def brute_force_steiner_oracle(graph: ExpandedGraph, delay_cap: float,
                               max_optional: int = 14):
    """Exact min-weight delay-feasible Steiner tree by exhaustive enumeration.

    Only tractable for small graphs; refuses more than max_optional placement
    vertices.  Feasibility means every source's path to the sink keeps its
    summed edge delay within delay_cap.  Returns (weight, vertex set) or None
    if no feasible tree exists.
    """
    mapping = graph.mapping_vertices()
    if len(mapping) > max_optional:
        raise CapExceededError(
            f"{len(mapping)} placement vertices exceed oracle cap {max_optional}")
    tree = graph.tree
    choices = {}
    for v in mapping:
        choices.setdefault((v[1], v[2]), []).append(v[3])
    insts = sorted(choices)
    for inst in insts:
        choices[inst].sort()

    parents = tree.parent_map()
    root = tree.root()
    best = None
    for combo in product(*(choices[i] for i in insts)):
        assign = dict(zip(insts, combo))
        weight = 0.0
        feasible = True
        for child, parent in tree.edges:
            if isinstance(child, str):
                u = ("d", child)
            else:
                u = ("v", child[0], child[1], assign[child])
            v = ("v", parent[0], parent[1], assign[parent])
            attrs = graph.edge_attrs.get((u, v))
            if attrs is None:
                feasible = False
                break
            weight += attrs[0]
        if not feasible:
            continue
        rv = ("v", root[0], root[1], assign[root])
        if (rv, OMEGA) not in graph.edge_attrs:
            continue
        for src in tree.used_sources:
            delay = 0.0
            cur = src
            u = ("d", src)
            while cur != root:
                nxt = parents[cur]
                v = ("v", nxt[0], nxt[1], assign[nxt])
                delay += graph.edge_attrs[(u, v)][1]
                cur, u = nxt, v
            delay += graph.edge_attrs[(rv, OMEGA)][1]
            if not _delay_ok(delay, delay_cap):
                feasible = False
                break
        if not feasible:
            continue
        verts = {("v", l, i, n) for (l, i), n in assign.items()}
        verts |= {("d", s) for s in tree.used_sources} | {OMEGA}
        cand = (weight, tuple(sorted(combo)))
        if best is None or cand < best[0]:
            best = (cand, verts)
    if best is None:
        return None
    return best[0][0], best[1]


def dump_expanded_graph(graph: ExpandedGraph, fh):
    """Line-oriented text dump for external visualization.

    Format: one record per line,
        vertex source <id>
        vertex map <layer> <index> <node>
        vertex omega
        edge <tail> <head> <weight_j> <delay_s>
    where vertex names in edge lines are source:<id>, map:<l>:<i>:<node>, omega.
    """
    def name(v):
        if v == OMEGA:
            return "omega"
        if v[0] == "d":
            return f"source:{v[1]}"
        return f"map:{v[1]}:{v[2]}:{v[3]}"

    fh.write(f"# expanded graph: {len(graph.vertices)} vertices, "
             f"{len(graph.edge_attrs)} edges, epochs {graph.epochs}\n")
    for v in graph.order:
        if v == OMEGA:
            fh.write("vertex omega\n")
        elif v[0] == "d":
            fh.write(f"vertex source {v[1]}\n")
        else:
            fh.write(f"vertex map {v[1]} {v[2]} {v[3]}\n")
    for (u, v), (w, d) in sorted(graph.edge_attrs.items(), key=lambda e: (_vkey(e[0][0]), _vkey(e[0][1]))):
        fh.write(f"edge {name(u)} {name(v)} {w:.12g} {d:.12g}\n")
