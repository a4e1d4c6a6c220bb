"""Domain model: scenarios, instance trees, deployments, allocations, solutions.

Conventions used throughout the package:
  data volumes   Mbit
  compute        MOPs (work) and MOPS (rate)
  link capacity  Mbit/s
  power          W, energy J
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

MOBILE, EDGE, CLOUD = "mobile", "edge", "cloud"
TIERS = (MOBILE, EDGE, CLOUD)
CLASSES = ("gold", "silver", "bronze", "iron")

# An instance is (layer id, replica index), both 1-based.  Tree edges are
# (child, parent) pairs where the child is either an instance or a source id
# (plain string) and the parent is always an instance.
Instance = tuple[int, int]


class RightTrainError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RightTrainError):
    """Input file could not be parsed."""


class ValidationError(RightTrainError):
    """A model invariant is violated; the message names the first violation."""


class DomainError(RightTrainError):
    """A numeric argument is outside its documented domain."""


class ZeroAllocationError(DomainError):
    """Compute time requested for an instance with no compute share."""


class NoLinkError(RightTrainError):
    """Data routed between nodes that have no link."""


class EmptyGraphError(RightTrainError):
    """Expanded graph has a layer with no feasible node."""


class InfeasibleError(RightTrainError):
    """No solution satisfies the deadline / connectivity requirements."""


class CapExceededError(RightTrainError):
    """An enumeration exceeded its configured size cap."""


@dataclass(frozen=True)
class LayerSpec:
    """One DNN layer of the chain."""

    id: int                # position in the chain, 1-based
    name: str
    compute_req: float     # MOPs per Mbit of incoming data
    data_ratio: float      # outgoing/incoming data volume, > 0

    def validate(self):
        if self.compute_req < 0:
            raise ValidationError(f"layer {self.name}: compute_req must be >= 0")
        if self.data_ratio <= 0:
            raise ValidationError(f"layer {self.name}: data_ratio must be > 0")


@dataclass(frozen=True)
class PhysNode:
    """A compute-capable node of the continuum."""

    id: str
    tier: str                    # mobile | edge | cloud
    node_class: str              # gold | silver | bronze | iron
    compute: float               # available compute rate, MOPS
    e_p: float                   # W per MOPS of allocated compute
    e_f: tuple[float, ...]       # per-layer static power while computing, W
    e_net: float                 # J per Mbit transmitted
    memory_ok: tuple[bool, ...]  # per-layer memory feasibility

    @property
    def tops(self) -> float:
        return self.compute / 1e6

    @property
    def efficiency_w_per_tops(self) -> float:
        return self.e_p * 1e6

    def validate(self, n_layers):
        if self.compute <= 0:
            raise ValidationError(f"node {self.id}: compute must be > 0")
        if self.e_p < 0 or self.e_net < 0 or any(v < 0 for v in self.e_f):
            raise ValidationError(f"node {self.id}: energy coefficients must be >= 0")
        if self.tier not in TIERS:
            raise ValidationError(f"node {self.id}: unknown tier {self.tier!r}")
        if self.node_class not in CLASSES:
            raise ValidationError(f"node {self.id}: unknown class {self.node_class!r}")
        if len(self.memory_ok) != n_layers:
            raise ValidationError(
                f"node {self.id}: memory_ok has {len(self.memory_ok)} entries, "
                f"expected {n_layers}")
        if len(self.e_f) != n_layers:
            raise ValidationError(
                f"node {self.id}: e_f has {len(self.e_f)} entries, expected {n_layers}")


@dataclass(frozen=True)
class DataSource:
    id: str
    volume: float    # Mbit generated per epoch
    host: str        # id of the physical node the source sits on

    def validate(self):
        if self.volume <= 0:
            raise ValidationError(f"source {self.id}: volume must be > 0")


@dataclass(frozen=True)
class KModelParams:
    """Parametric epoch-count model.

    Epochs to converge are modelled as
        ceil((k0 + kappa_d * (-ln phi)) * (1 + kappa_i * extra_instances))
    where phi is the fraction of the used sources' data actually consumed and
    extra_instances is the instance count in excess of one chain.  eps_max is
    the target loss the calibration was made for; it is carried for
    provenance and has no independent effect.
    """

    k0: float = 10.0
    kappa_d: float = 8.0
    kappa_i: float = 0.15
    eps_max: float = 0.0
    phi_min: float = 0.01

    def validate(self):
        if self.k0 < 1:
            raise ValidationError("k_model: k0 must be >= 1")
        if self.kappa_d < 0 or self.kappa_i < 0:
            raise ValidationError("k_model: kappa_d and kappa_i must be >= 0")
        if not 0 < self.phi_min <= 1:
            raise ValidationError("k_model: phi_min must be in (0, 1]")


@dataclass
class Scenario:
    """Full problem instance: layers, nodes, sources, link capacities."""

    layers: list[LayerSpec]
    nodes: list[PhysNode]
    sources: list[DataSource]
    links: np.ndarray            # Mbit/s, symmetric, 0 = no link, diag = +inf
    k_model: KModelParams = field(default_factory=KModelParams)
    alpha: float = 1.0           # redundancy factor for instance indices
    sample_mbit: float = 0.025   # configured sample size used at build time
    name: str = "scenario"

    def __post_init__(self):
        self.links = np.asarray(self.links, dtype=float)
        self._node_index = {n.id: i for i, n in enumerate(self.nodes)}
        self._source_index = {s.id: s for s in self.sources}

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer(self, layer_id: int) -> LayerSpec:
        return self.layers[layer_id - 1]

    def node(self, node_id: str) -> PhysNode:
        return self.nodes[self._node_index[node_id]]

    def source(self, source_id: str) -> DataSource:
        return self._source_index[source_id]

    def link(self, a: str, b: str) -> float:
        """Capacity between two nodes; intra-node transfer is unconstrained."""
        if a == b:
            return math.inf
        return float(self.links[self._node_index[a], self._node_index[b]])

    def memory_ok(self, layer_id: int, node_id: str) -> bool:
        return bool(self.node(node_id).memory_ok[layer_id - 1])

    def feasible_nodes(self, layer_id: int) -> list[str]:
        return [n.id for n in self.nodes if n.memory_ok[layer_id - 1]]

    def total_volume(self) -> float:
        return sum(s.volume for s in self.sources)

    def validate(self):
        if not self.layers:
            raise ValidationError("scenario has no layers")
        if not self.nodes:
            raise ValidationError("scenario has no nodes")
        if not self.sources:
            raise ValidationError("scenario has no data sources")
        for i, layer in enumerate(self.layers):
            if layer.id != i + 1:
                raise ValidationError(
                    f"layer ids must form the chain 1..{len(self.layers)}; "
                    f"position {i + 1} has id {layer.id}")
            layer.validate()
        seen = set()
        for n in self.nodes:
            if n.id in seen:
                raise ValidationError(f"duplicate node id {n.id}")
            seen.add(n.id)
            n.validate(self.n_layers)
        if self.links.shape != (len(self.nodes), len(self.nodes)):
            raise ValidationError(
                f"link matrix shape {self.links.shape} does not match "
                f"{len(self.nodes)} nodes")
        off_diag = ~np.eye(len(self.nodes), dtype=bool)
        if np.any(self.links[off_diag] < 0):
            raise ValidationError("link capacities must be >= 0")
        asym = np.argwhere((self.links != self.links.T) & off_diag)
        if asym.size:
            i, j = asym[0]
            raise ValidationError(
                f"link matrix is not symmetric at ({self.nodes[i].id}, {self.nodes[j].id})")
        seen = set()
        for s in self.sources:
            if s.id in seen:
                raise ValidationError(f"duplicate source id {s.id}")
            seen.add(s.id)
            s.validate()
            if s.host not in self._node_index:
                raise ValidationError(f"source {s.id}: host {s.host!r} is not a node")
        if self.alpha < 1:
            raise ValidationError("alpha must be >= 1")
        if self.sample_mbit <= 0:
            raise ValidationError("sample_mbit must be > 0")
        self.k_model.validate()
        return self


@dataclass
class InstanceTree:
    """Layer instances plus the child->parent edges wiring sources to the root.

    Edges run in the direction of the data: a source feeds a layer-1 instance,
    and an instance of layer l feeds exactly one instance of layer l+1.  The
    unique instance of the last layer is the root.
    """

    instances: list[Instance]
    edges: list[tuple[object, Instance]]
    used_sources: list[str]

    def __post_init__(self):
        self.instances = [tuple(i) for i in self.instances]
        self.edges = [(e[0] if isinstance(e[0], str) else tuple(e[0]), tuple(e[1]))
                      for e in self.edges]

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    def depth(self) -> int:
        return max(l for l, _ in self.instances)

    def root(self) -> Instance:
        last = self.depth()
        roots = [inst for inst in self.instances if inst[0] == last]
        if len(roots) != 1:
            raise ValidationError(f"tree must have exactly one last-layer instance, found {len(roots)}")
        return roots[0]

    def layer_instances(self, layer_id: int) -> list[Instance]:
        return [inst for inst in self.instances if inst[0] == layer_id]

    def parent_map(self) -> dict:
        """child (instance or source id) -> parent instance."""
        return {child: parent for child, parent in self.edges}

    def children_map(self) -> dict:
        out: dict = {inst: [] for inst in self.instances}
        for child, parent in self.edges:
            out[parent].append(child)
        return out

    def key(self):
        """Canonical hashable identity, used for dedup and tie-breaking."""
        return (tuple(sorted(self.instances)),
                tuple(sorted(self.edges, key=str)),
                tuple(sorted(self.used_sources)))

    def validate(self, scenario: Scenario):
        n_layers = scenario.n_layers
        if not self.used_sources:
            raise ValidationError("tree uses no data source")
        inst_set = set(self.instances)
        if len(inst_set) != len(self.instances):
            raise ValidationError("duplicate instances in tree")
        max_index = int(scenario.alpha * len(scenario.sources))
        for l, i in self.instances:
            if not 1 <= l <= n_layers:
                raise ValidationError(f"instance ({l},{i}): layer out of range")
            if not 1 <= i <= max_index:
                raise ValidationError(
                    f"instance ({l},{i}): index exceeds alpha*|sources| = {max_index}")
        for l in range(1, n_layers + 1):
            if not any(inst[0] == l for inst in inst_set):
                raise ValidationError(f"layer {l} has no instance")
        known = {s.id for s in scenario.sources}
        for s in self.used_sources:
            if s not in known:
                raise ValidationError(f"used source {s!r} not in scenario")
        parents = {}
        for child, parent in self.edges:
            if parent not in inst_set:
                raise ValidationError(f"edge parent {parent} is not an instance of the tree")
            if isinstance(child, str):
                if child not in self.used_sources:
                    raise ValidationError(f"edge child source {child!r} not in used_sources")
                if parent[0] != 1:
                    raise ValidationError(
                        f"source {child} must feed a layer-1 instance, got layer {parent[0]}")
            else:
                if child not in inst_set:
                    raise ValidationError(f"edge child {child} is not an instance of the tree")
                if parent[0] != child[0] + 1:
                    raise ValidationError(
                        f"edge {child}->{parent} must connect consecutive layers")
            if child in parents:
                raise ValidationError(f"{child} has more than one outgoing edge")
            parents[child] = parent
        root = self.root()
        for inst in self.instances:
            if inst != root and inst not in parents:
                raise ValidationError(f"instance {inst} has no parent edge")
        if root in parents:
            raise ValidationError("last-layer instance must not have a parent")
        for s in self.used_sources:
            if s not in parents:
                raise ValidationError(f"used source {s} is not attached to the tree")
        # connectivity + acyclicity: walk each node up to the root
        for start in list(inst_set) + list(self.used_sources):
            cur, hops = start, 0
            while cur != root:
                cur = parents[cur]
                hops += 1
                if hops > len(self.edges) + 1:
                    raise ValidationError("cycle detected in tree edges")
        # every instance must receive data, i.e. all leaves are sources
        fed = {parent for _, parent in self.edges}
        for inst in inst_set:
            if inst not in fed:
                raise ValidationError(f"instance {inst} has no incoming data")
        return self


@dataclass
class Deployment:
    """Mapping of each tree instance to a physical node."""

    mapping: dict

    def __post_init__(self):
        self.mapping = {tuple(k): v for k, v in self.mapping.items()}

    def node_of(self, inst: Instance) -> str:
        return self.mapping[tuple(inst)]

    def placement_node(self, tree_node, scenario: Scenario) -> str:
        """Physical node of either an instance or a data source."""
        if isinstance(tree_node, str):
            return scenario.source(tree_node).host
        return self.node_of(tree_node)

    def validate(self, tree: InstanceTree, scenario: Scenario):
        for inst in tree.instances:
            if tuple(inst) not in self.mapping:
                raise ValidationError(f"instance {inst} is not deployed")
        if len(self.mapping) != len(tree.instances):
            extra = set(self.mapping) - set(map(tuple, tree.instances))
            raise ValidationError(f"deployment maps unknown instances {sorted(extra)}")
        for inst, node_id in sorted(self.mapping.items()):
            if node_id not in scenario._node_index:
                raise ValidationError(f"instance {inst} deployed on unknown node {node_id!r}")
            if not scenario.memory_ok(inst[0], node_id):
                raise ValidationError(
                    f"instance {inst} deployed on {node_id} which lacks memory for layer {inst[0]}")
        return self


@dataclass
class Allocation:
    """Per-instance compute shares and per-source data use."""

    rho: dict       # instance -> MOPS, > 0
    x: dict         # source id -> Mbit actually used per epoch

    def __post_init__(self):
        self.rho = {tuple(k): float(v) for k, v in self.rho.items()}
        self.x = {k: float(v) for k, v in self.x.items()}

    def used_data(self) -> float:
        return sum(self.x.values())

    def validate(self, tree: InstanceTree, scenario: Scenario):
        for inst in tree.instances:
            r = self.rho.get(tuple(inst))
            if r is None or r <= 0:
                raise ValidationError(f"instance {inst} has no positive compute share")
        for s in tree.used_sources:
            v = self.x.get(s)
            if v is None or v < 0:
                raise ValidationError(f"source {s} has no data amount")
            if v > scenario.source(s).volume * (1 + 1e-12):
                raise ValidationError(f"source {s} uses more data than it generates")
        return self


@dataclass
class Metrics:
    epoch_time: float = math.nan     # s
    epoch_energy: float = math.nan   # J
    epochs: int = 0
    objective: float = math.nan      # J, epochs * epoch_energy
    total_time: float = math.nan     # s, epochs * epoch_time
    data_fraction: float = math.nan


@dataclass
class Solution:
    """A complete placement decision; metrics are derived, never authoritative."""

    tree: InstanceTree
    deployment: Deployment
    allocation: Allocation
    metrics: Metrics = field(default_factory=Metrics)
    strategy: str = ""

    def validate(self, scenario: Scenario):
        self.tree.validate(scenario)
        self.deployment.validate(self.tree, scenario)
        self.allocation.validate(self.tree, scenario)
        return self

    def with_metrics(self, metrics: Metrics) -> "Solution":
        return replace(self, metrics=metrics)
