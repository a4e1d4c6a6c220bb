"""Energy-aware placement of distributed DNN training across mobile, edge,
and cloud nodes: tree enumeration, delay-aware Steiner-tree mapping,
continuous refinement, baselines, and exact oracles."""

from .model import (Allocation, CapExceededError, DataSource, Deployment,
                    DomainError, EmptyGraphError, InfeasibleError, InstanceTree,
                    KModelParams, LayerSpec, Metrics, NoLinkError, ParseError,
                    PhysNode, RightTrainError, Scenario, Solution,
                    ValidationError, ZeroAllocationError)
from .constraints import (ConstraintCheck, ConstraintReport, check_constraints,
                          compute_flows)
from .trees import cut_tree, enumerate_instance_trees
from .perf import (EpochMetrics, epoch_energy, epoch_metrics, epoch_time,
                   epochs_needed, epochs_unrounded, evaluate,
                   instance_compute_time, link_transfer_time,
                   processing_load, proportional_allocation)
from .io import (emit, load_scenario, load_solution, load_tree, save_scenario,
                 solution_from_dict, solution_to_dict)
from .mapper import (ExpandedGraph, PathResult, brute_force_steiner_oracle,
                     build_expanded_graph, da_steiner_tree,
                     deployment_graph_weight, dump_expanded_graph,
                     restricted_min_weight_path)
from .refine import RefineConfig, RefineResult, objective_and_gradient, refine
from .baselines import brute_force_optimum, gap_scenario, split_learning_plan
from .presets import gen_scenario, random_scenario
from .solve import SweepResult, SweepRow, righttrain_solve, sweep

__version__ = "0.1.0"
