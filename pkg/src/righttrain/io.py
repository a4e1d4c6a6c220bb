"""File formats: scenario JSON, solution JSON, custom tree JSON, sweep CSV.

Scenario schema (all volumes in Mbit, rates in Mbit/s):

    {
      "name": "small",
      "sample_mbit": 0.025,
      "alpha": 1.0,
      "layers":  [{"name": "conv1", "mops_per_sample": 0.043, "q": 1.5}, ...],
      "nodes":   [{"id": "edge1", "class": "silver", "tier": "edge",
                   "tops": 153.4, "watts": 140.0,
                   "e_f": [...], "e_net": 0.0002, "mu": [1, 1, ...]}, ...],
      "links":   {"matrix": [[null, 200.0, ...], ...]},
      "sources": [{"id": "d1", "delta_mbit": 30.0, "host": "edge2"}, ...],
      "k_model": {"k0": 10, "kappa_d": 8, "kappa_i": 0.15, "eps_max": 0.05}
    }

Layer compute requirements are given per sample and converted to MOPs/Mbit
with sample_mbit at load time.  Node compute is given in TOPS and converted
to MOPS; per-compute power is watts/tops converted to W/MOPS.  In the link
matrix, null means an unconstrained link; the diagonal is always treated as
unconstrained regardless of its value.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .model import (Allocation, DataSource, Deployment, InstanceTree,
                    KModelParams, LayerSpec, Metrics, ParseError, PhysNode,
                    Scenario, Solution)

CSV_COLUMNS = ["t_max", "strategy", "objective_j", "total_time_s", "epochs",
               "data_fraction", "mbit_mobile", "mbit_edge", "mbit_cloud",
               "status"]


def _require(obj, key, where):
    if key not in obj:
        raise ParseError(f"{where}: missing required key {key!r}")
    return obj[key]


def scenario_from_dict(raw: dict) -> Scenario:
    sample_mbit = float(raw.get("sample_mbit", 0.025))
    layers = []
    for i, entry in enumerate(_require(raw, "layers", "scenario")):
        layers.append(LayerSpec(
            id=i + 1,
            name=str(_require(entry, "name", f"layers[{i}]")),
            compute_req=float(_require(entry, "mops_per_sample", f"layers[{i}]")) / sample_mbit,
            data_ratio=float(_require(entry, "q", f"layers[{i}]")),
        ))
    nodes = []
    for i, entry in enumerate(_require(raw, "nodes", "scenario")):
        tops = float(_require(entry, "tops", f"nodes[{i}]"))
        watts = float(_require(entry, "watts", f"nodes[{i}]"))
        nodes.append(PhysNode(
            id=str(_require(entry, "id", f"nodes[{i}]")),
            tier=str(_require(entry, "tier", f"nodes[{i}]")),
            node_class=str(_require(entry, "class", f"nodes[{i}]")),
            compute=tops * 1e6,
            e_p=(watts / tops) / 1e6 if tops > 0 else 0.0,
            e_f=tuple(float(v) for v in _require(entry, "e_f", f"nodes[{i}]")),
            e_net=float(_require(entry, "e_net", f"nodes[{i}]")),
            memory_ok=tuple(bool(v) for v in _require(entry, "mu", f"nodes[{i}]")),
        ))
    matrix = _require(_require(raw, "links", "scenario"), "matrix", "links")
    links = np.array([[math.inf if v is None else float(v) for v in row]
                      for row in matrix], dtype=float)
    if links.ndim == 2 and links.shape[0] == links.shape[1]:
        np.fill_diagonal(links, math.inf)
    sources = [DataSource(id=str(_require(e, "id", f"sources[{i}]")),
                          volume=float(_require(e, "delta_mbit", f"sources[{i}]")),
                          host=str(_require(e, "host", f"sources[{i}]")))
               for i, e in enumerate(_require(raw, "sources", "scenario"))]
    km = raw.get("k_model", {})
    k_model = KModelParams(k0=float(km.get("k0", 10.0)),
                           kappa_d=float(km.get("kappa_d", 8.0)),
                           kappa_i=float(km.get("kappa_i", 0.15)),
                           eps_max=float(km.get("eps_max", 0.0)),
                           phi_min=float(km.get("phi_min", 0.01)))
    scenario = Scenario(layers=layers, nodes=nodes, sources=sources, links=links,
                        k_model=k_model, alpha=float(raw.get("alpha", 1.0)),
                        sample_mbit=sample_mbit,
                        name=str(raw.get("name", "scenario")))
    scenario.validate()
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    def cap(v):
        return None if math.isinf(v) else v
    n = len(scenario.nodes)
    return {
        "name": scenario.name,
        "sample_mbit": scenario.sample_mbit,
        "alpha": scenario.alpha,
        "layers": [{"name": l.name,
                    "mops_per_sample": l.compute_req * scenario.sample_mbit,
                    "q": l.data_ratio} for l in scenario.layers],
        "nodes": [{"id": nd.id, "class": nd.node_class, "tier": nd.tier,
                   "tops": nd.tops, "watts": nd.e_p * nd.compute,
                   "e_f": list(nd.e_f), "e_net": nd.e_net,
                   "mu": [int(v) for v in nd.memory_ok]} for nd in scenario.nodes],
        "links": {"matrix": [[cap(float(scenario.links[i, j])) for j in range(n)]
                             for i in range(n)]},
        "sources": [{"id": s.id, "delta_mbit": s.volume, "host": s.host}
                    for s in scenario.sources],
        "k_model": {"k0": scenario.k_model.k0, "kappa_d": scenario.k_model.kappa_d,
                    "kappa_i": scenario.k_model.kappa_i,
                    "eps_max": scenario.k_model.eps_max,
                    "phi_min": scenario.k_model.phi_min},
    }


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(raw)


def save_scenario(scenario: Scenario, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def _tree_node_to_json(node):
    return node if isinstance(node, str) else list(node)


def _tree_node_from_json(node):
    return node if isinstance(node, str) else tuple(node)


def tree_to_dict(tree: InstanceTree) -> dict:
    return {"instances": [list(i) for i in tree.instances],
            "edges": [[_tree_node_to_json(c), list(p)] for c, p in tree.edges],
            "used_sources": list(tree.used_sources)}


def tree_from_dict(raw: dict) -> InstanceTree:
    return InstanceTree(
        instances=[tuple(i) for i in _require(raw, "instances", "tree")],
        edges=[(_tree_node_from_json(c), tuple(p))
               for c, p in _require(raw, "edges", "tree")],
        used_sources=list(_require(raw, "used_sources", "tree")))


def load_tree(path) -> InstanceTree:
    """Custom instance trees can be supplied as JSON instead of generated."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read tree {path}: {exc}") from exc
    return tree_from_dict(raw)


def solution_to_dict(solution: Solution) -> dict:
    m = solution.metrics
    return {
        "strategy": solution.strategy,
        "tree": tree_to_dict(solution.tree),
        "deployment": [[list(inst), node]
                       for inst, node in sorted(solution.deployment.mapping.items())],
        "allocation": {
            "rho": [[list(inst), rho]
                    for inst, rho in sorted(solution.allocation.rho.items())],
            "x": dict(sorted(solution.allocation.x.items())),
        },
        "metrics": {"epoch_time_s": m.epoch_time, "epoch_energy_j": m.epoch_energy,
                    "epochs": m.epochs, "objective_j": m.objective,
                    "total_time_s": m.total_time, "data_fraction": m.data_fraction},
    }


def solution_from_dict(raw: dict) -> Solution:
    tree = tree_from_dict(_require(raw, "tree", "solution"))
    deployment = Deployment(mapping={tuple(inst): node
                                     for inst, node in _require(raw, "deployment", "solution")})
    alloc_raw = _require(raw, "allocation", "solution")
    allocation = Allocation(rho={tuple(i): v for i, v in alloc_raw["rho"]},
                            x=dict(alloc_raw["x"]))
    m = raw.get("metrics", {})
    metrics = Metrics(epoch_time=m.get("epoch_time_s", math.nan),
                      epoch_energy=m.get("epoch_energy_j", math.nan),
                      epochs=int(m.get("epochs", 0)),
                      objective=m.get("objective_j", math.nan),
                      total_time=m.get("total_time_s", math.nan),
                      data_fraction=m.get("data_fraction", math.nan))
    return Solution(tree=tree, deployment=deployment, allocation=allocation,
                    metrics=metrics, strategy=str(raw.get("strategy", "")))


def load_solution(path) -> Solution:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read solution {path}: {exc}") from exc
    return solution_from_dict(raw)


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def emit(result, fmt: str, path):
    """Write a Solution or a sweep result to path as json or csv.

    CSV is only defined for sweep results and carries the fixed 10-column
    schema; JSON carries full detail for either kind.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    rows = getattr(result, "rows", None)
    if fmt == "csv":
        if rows is None:
            raise ValueError("csv output is only defined for sweep results")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])
        return
    if rows is None:
        payload = solution_to_dict(result)
    else:
        payload = {"rows": [row.to_dict() for row in rows]}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
