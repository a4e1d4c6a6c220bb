"""Instance-tree candidate generation.

The generator emits cut-style trees: each selected source gets a private
replica chain for the first s layers, and the replicas merge into one shared
chain for the remaining layers.  s = 0 is plain split-learning-style sharing
(every source feeds one chain); s = L-1 replicates everything except the
root.  This family covers every tree shape the baselines can produce;
anything more exotic can be loaded from file.
"""

from __future__ import annotations

from itertools import combinations

from .model import CapExceededError, InstanceTree, Scenario


def cut_tree(scenario: Scenario, source_ids, split_depth: int) -> InstanceTree:
    """Tree with per-source replica chains of length split_depth merging
    into a shared suffix chain."""
    n_layers = scenario.n_layers
    sources = sorted(source_ids)
    k = len(sources)
    if not 0 <= split_depth <= n_layers - 1:
        raise ValueError(f"split_depth must be in [0, {n_layers - 1}]")
    if k == 0:
        raise ValueError("need at least one source")

    instances = []
    edges = []
    for l in range(1, split_depth + 1):
        instances += [(l, j + 1) for j in range(k)]
    for l in range(split_depth + 1, n_layers + 1):
        instances.append((l, 1))

    for j, src in enumerate(sources):
        first = (1, j + 1) if split_depth >= 1 else (1, 1)
        edges.append((src, first))
    for j in range(k):
        for l in range(1, split_depth):
            edges.append(((l, j + 1), (l + 1, j + 1)))
        if split_depth >= 1:
            edges.append(((split_depth, j + 1), (split_depth + 1, 1)))
    for l in range(split_depth + 1, n_layers):
        edges.append(((l, 1), (l + 1, 1)))

    return InstanceTree(instances=instances, edges=edges, used_sources=sources)


def source_subsets(scenario: Scenario, max_subsets: int,
                   allow_truncation: bool) -> list[tuple[str, ...]]:
    """Non-empty source subsets, largest total volume first, capped."""
    ids = sorted(s.id for s in scenario.sources)
    total = 2 ** len(ids) - 1
    if total > max_subsets and not allow_truncation:
        raise CapExceededError(
            f"{total} source subsets exceed the cap of {max_subsets}; "
            "pass allow_truncation=True to keep the largest-volume ones")
    subsets = []
    for k in range(1, len(ids) + 1):
        subsets += [tuple(c) for c in combinations(ids, k)]
    subsets.sort(key=lambda sub: (-sum(scenario.source(s).volume for s in sub), sub))
    return subsets[:max_subsets]


def enumerate_instance_trees(scenario: Scenario, max_subsets: int = 64,
                             allow_truncation: bool = False) -> list[InstanceTree]:
    """All candidate trees: capped source subsets x replica depths, deduped.

    Single-source subsets collapse to one chain regardless of depth.
    """
    trees = []
    seen = set()
    for subset in source_subsets(scenario, max_subsets, allow_truncation):
        for depth in range(scenario.n_layers):
            tree = cut_tree(scenario, subset, depth)
            key = tree.key()
            if key not in seen:
                seen.add(key)
                trees.append(tree)
    for tree in trees:
        tree.validate(scenario)
    return trees
