"""Graph representation learning with explicit neighborhood interaction.

Node representations come from two aggregation branches combined by an
elementwise product (the interaction term) plus a residual skip, trained
with auxiliary heads on both branches. Includes a minimal reverse-mode
tape, training/evaluation loops for node classification and link
prediction, ablation variants, and numerical activation-expansion checks.
"""

from .analysis import (CrossTermFit, TaylorReport, cross_term_estimate,
                       remainder_bound, sigmoid_taylor_coeffs, taylor_report)
from .autodiff import (AdamState, Tape, Tensor, adam_step, add, bce_with_logits,
                       dropout, glorot_init, gradcheck, hadamard,
                       masked_softmax_cross_entropy, matmul, relu, scale,
                       sigmoid, spmm, tensor)
from .graph import (EdgeSplit, Graph, BundleError, load_bundle, mean_adjacency,
                    normalize_adjacency, row_normalize_features, save_bundle,
                    split_edges, synth_xor_graph, undirected_edges)
from .models import (ForwardOutputs, ModelSpec, air_combine, air_forward,
                     branch_forward, build_variant, gae_decode, gae_encode,
                     gcn_layer, parameter_count, prediction_head)
from .sparse import CsrMatrix
from .training import (Metrics, SeedResult, TrainSpec, auc, evaluate_accuracy,
                       propagation_matrix, run_experiment,
                       train_link_predictor, train_node_classifier)

__version__ = "0.1.0"
