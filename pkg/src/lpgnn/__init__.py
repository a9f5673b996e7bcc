"""Lagrangian propagation training for graph neural networks (LP-GNN).

Node states are free variables tied to the GNN* transition by constraints
``G(x_v - f_a,v) = 0``; weights and states descend, multipliers ascend.
"""
__version__ = "0.1.0"

from .errors import NumericalError, ParseError, StructuralError
from .graph import Graph, GraphBatch, Neighborhood, Topology, build_neighborhoods, disjoint_union
from .ndmath import Adam, Mlp, finite_diff_check, mlp_backward, mlp_forward, softmax
from .constraints import VARIANTS, ConstraintFn, g_eval, g_grad
from .aggregators import (AggregatorGrad, GcnAggregator, GinAggregator, PairwiseAggregator,
                          make_aggregator, transition, transition_backward)
from .model import SEARCH_GRID, LpModel, TrainConfig
from .lagrangian import Lagrangian, lagrangian_eval, lagrangian_gradients
from .trainer import (Evaluation, InferenceResult, TrainingDiverged, TrainResult, evaluate,
                      infer_states, predict, train)
from .oracle import FixedPointRun, fixed_point_iterate, oracle_residual
from .datasets import (CliqueTaskSpec, SubgraphTaskSpec, gen_clique, gen_subgraph_matching,
                       load_dataset_file, load_karate, one_hot_degree_features, scale_features,
                       read_dataset_file, write_dataset_file)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [name for name in dir() if not name.startswith("_")]
