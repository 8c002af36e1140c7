"""Model assembly on top of the tape primitives.

Variants:

* ``base``     -- plain aggregation stack: k_layers convolutions with ReLU
                  followed by one convolutional prediction head.
* ``air``      -- two independent aggregation branches whose outputs are
                  combined by an elementwise product (the explicit
                  neighborhood-interaction term) and a residual skip,
                  with one prediction head per representation.
* ``dp``       -- parameter-matched ablation of ``air`` with the product
                  replaced by an elementwise sum (no multiplicative term).
* ``self-ir``  -- single branch interacting with itself (squared branch
                  output), heads on the combined and branch representations.
* ``linear``   -- no activations at all: propagate k_layers+1 times, one
                  weight matrix. Logits are affine in the input features.

The same forward graphs serve node classification (head outputs are class
logits) and link prediction (head outputs are embeddings decoded by dot
products).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .sparse import CsrMatrix

BASES = ("gcn", "sage-mean")
VARIANTS = ("base", "air", "dp", "self-ir", "linear")
TASKS = ("node-clf", "link-pred")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description.

    ``k_layers`` counts the convolution layers per aggregation branch; the
    prediction head adds one more, so the base variant has k_layers + 1
    layers in total and the interaction variants 2*k_layers + 3.
    """

    base: str = "gcn"
    variant: str = "air"
    k_layers: int = 1
    hidden_dim: int = 16
    dropout: float = 0.5
    task: str = "node-clf"
    n_classes: int = 0
    embed_dim: int = 16

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}; expected one of {BASES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.k_layers < 1:
            raise ValueError("k_layers must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.task == "node-clf" and self.n_classes < 2:
            raise ValueError("node classification needs n_classes >= 2")
        if self.task == "link-pred" and self.embed_dim < 1:
            raise ValueError("link prediction needs embed_dim >= 1")

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.task == "node-clf" else self.embed_dim


ParamSet = dict[str, Tensor]


@dataclass(eq=False)
class ForwardOutputs:
    """All representations produced by one forward pass.

    ``z_air`` always holds the model's prediction output (logits or
    embeddings); the remaining fields are populated only by the
    interaction variants.
    """

    z_air: Tensor
    z_agg: Tensor | None = None
    z_agg_bar: Tensor | None = None
    h_air: Tensor | None = None
    h_agg: Tensor | None = None
    h_agg_bar: Tensor | None = None
    h_ir: Tensor | None = None


# -- parameter allocation --------------------------------------------------


def _branch_dims(spec: ModelSpec, in_dim: int) -> list[tuple[int, int]]:
    dims = [in_dim] + [spec.hidden_dim] * spec.k_layers
    return list(zip(dims[:-1], dims[1:]))


def parameter_count(spec: ModelSpec, in_dim: int) -> int:
    """Closed-form number of scalar parameters for a variant (bias-free layers)."""
    branch = in_dim * spec.hidden_dim + (spec.k_layers - 1) * spec.hidden_dim ** 2
    head = spec.hidden_dim * spec.out_dim
    if spec.variant == "base":
        return branch + head
    if spec.variant in ("air", "dp"):
        return 2 * branch + 3 * head
    if spec.variant == "self-ir":
        return branch + 2 * head
    if spec.variant == "linear":
        return in_dim * spec.out_dim
    raise ValueError(f"unknown variant {spec.variant!r}")


def init_params(spec: ModelSpec, in_dim: int, rng) -> ParamSet:
    params: ParamSet = {}

    def alloc_branch(prefix: str):
        for i, (fi, fo) in enumerate(_branch_dims(spec, in_dim)):
            params[f"{prefix}/layer{i}/w"] = ad.glorot_init(fi, fo, rng)

    if spec.variant == "base":
        alloc_branch("agg")
        params["head/w"] = ad.glorot_init(spec.hidden_dim, spec.out_dim, rng)
    elif spec.variant in ("air", "dp"):
        alloc_branch("agg")
        alloc_branch("agg_bar")
        for head in ("head_air", "head_agg", "head_agg_bar"):
            params[f"{head}/w"] = ad.glorot_init(spec.hidden_dim, spec.out_dim, rng)
    elif spec.variant == "self-ir":
        alloc_branch("agg")
        for head in ("head_air", "head_agg"):
            params[f"{head}/w"] = ad.glorot_init(spec.hidden_dim, spec.out_dim, rng)
    elif spec.variant == "linear":
        params["w"] = ad.glorot_init(in_dim, spec.out_dim, rng)
    return params


# -- forward graphs ----------------------------------------------------------


def gcn_layer(a_hat: CsrMatrix, h: Tensor, w: Tensor, activation: bool) -> Tensor:
    """One convolution: propagate the projected features, optionally ReLU."""
    out = ad.spmm(a_hat, ad.matmul(h, w))
    return ad.relu(out) if activation else out


def branch_forward(a_hat: CsrMatrix, x: Tensor, weights: list[Tensor],
                   p_drop: float, training: bool, rng=None) -> Tensor:
    """Aggregation branch; returns the PRE-activation output of the last layer.

    Activations apply between layers only; whoever consumes the branch decides
    what to do with the final pre-activation (the interaction combine applies
    its own ReLU).
    """
    h = x
    last = len(weights) - 1
    for i, w in enumerate(weights):
        h = ad.dropout(h, p_drop, training, rng)
        h = gcn_layer(a_hat, h, w, activation=(i < last))
    return h


def air_combine(h_agg: Tensor, h_agg_bar: Tensor) -> tuple[Tensor, Tensor]:
    """Interaction term and residual combination.

    Returns (h_ir, h_air) with h_ir the elementwise product of the two branch
    outputs and h_air = ReLU(h_agg) + ReLU(h_ir).
    """
    h_ir = ad.hadamard(h_agg, h_agg_bar)
    h_air = ad.add(ad.relu(h_agg), ad.relu(h_ir))
    return h_ir, h_air


def prediction_head(a_hat: CsrMatrix, h: Tensor, w_head: Tensor) -> Tensor:
    """Final convolution producing logits (or embeddings); no activation."""
    return gcn_layer(a_hat, h, w_head, activation=False)


def _branch_weights(params: ParamSet, prefix: str, k: int) -> list[Tensor]:
    return [params[f"{prefix}/layer{i}/w"] for i in range(k)]


def _interaction_forward(a_hat: CsrMatrix, x: Tensor, params: ParamSet,
                         spec: ModelSpec, training: bool, rng=None, *,
                         combine: str, tied: bool) -> ForwardOutputs:
    p = spec.dropout
    h_agg = branch_forward(a_hat, x, _branch_weights(params, "agg", spec.k_layers),
                           p, training, rng)
    if tied:
        h_agg_bar = h_agg
    else:
        h_agg_bar = branch_forward(a_hat, x,
                                   _branch_weights(params, "agg_bar", spec.k_layers),
                                   p, training, rng)
    if combine == "mul":
        h_ir, h_air = air_combine(h_agg, h_agg_bar)
    else:  # parameter-matched ablation: sum instead of product
        h_ir = ad.add(h_agg, h_agg_bar)
        h_air = ad.add(ad.relu(h_agg), ad.relu(h_ir))

    def head(h, name):
        return prediction_head(a_hat, ad.dropout(h, p, training, rng),
                               params[f"{name}/w"])

    z_air = head(h_air, "head_air")
    z_agg = head(h_agg, "head_agg")
    z_agg_bar = None if tied else head(h_agg_bar, "head_agg_bar")
    return ForwardOutputs(z_air=z_air, z_agg=z_agg, z_agg_bar=z_agg_bar,
                          h_air=h_air, h_agg=h_agg,
                          h_agg_bar=None if tied else h_agg_bar, h_ir=h_ir)


def air_forward(a_hat: CsrMatrix, x: Tensor, params: ParamSet, spec: ModelSpec,
                training: bool, rng=None) -> ForwardOutputs:
    """Dual-branch forward: both branches, one interaction, three heads."""
    return _interaction_forward(a_hat, x, params, spec, training, rng,
                                combine="mul", tied=False)


def _base_forward(a_hat: CsrMatrix, x: Tensor, params: ParamSet, spec: ModelSpec,
                  training: bool, rng=None) -> ForwardOutputs:
    p = spec.dropout
    h = x
    for i in range(spec.k_layers):
        h = ad.dropout(h, p, training, rng)
        h = gcn_layer(a_hat, h, params[f"agg/layer{i}/w"], activation=True)
    h = ad.dropout(h, p, training, rng)
    return ForwardOutputs(z_air=prediction_head(a_hat, h, params["head/w"]))


def _linear_forward(a_hat: CsrMatrix, x: Tensor, params: ParamSet, spec: ModelSpec,
                    training: bool, rng=None) -> ForwardOutputs:
    h = ad.dropout(x, spec.dropout, training, rng)
    z = ad.matmul(h, params["w"])
    for _ in range(spec.k_layers + 1):  # same receptive field as base
        z = ad.spmm(a_hat, z)
    return ForwardOutputs(z_air=z)


def variant_forward(spec: ModelSpec):
    """Forward function for a variant: forward(params, a_hat, x, training, rng)."""
    if spec.variant == "base":
        body = _base_forward
    elif spec.variant == "linear":
        body = _linear_forward
    elif spec.variant == "air":
        body = air_forward
    elif spec.variant == "dp":
        def body(a_hat, x, params, spec, training, rng=None):
            return _interaction_forward(a_hat, x, params, spec, training, rng,
                                        combine="add", tied=False)
    elif spec.variant == "self-ir":
        def body(a_hat, x, params, spec, training, rng=None):
            return _interaction_forward(a_hat, x, params, spec, training, rng,
                                        combine="mul", tied=True)
    else:
        raise ValueError(f"unknown variant {spec.variant!r}")

    def forward(params, a_hat, x, training, rng=None):
        return body(a_hat, x, params, spec, training, rng)

    return forward


def build_variant(spec: ModelSpec, in_dim: int, rng):
    """Allocate parameters and return (params, forward).

    ``forward(params, a_hat, x, training, rng)`` returns ForwardOutputs and is
    deterministic given parameter values and the rng state.
    """
    params = init_params(spec, in_dim, rng)
    total = sum(p.values.size for p in params.values())
    assert total == parameter_count(spec, in_dim)
    return params, variant_forward(spec)


# -- link-prediction encoder/decoder ----------------------------------------


def gae_encode(a_hat: CsrMatrix, x: Tensor, params: ParamSet,
               spec: ModelSpec) -> Tensor:
    """Inference-mode embeddings from the prediction path of the encoder."""
    return variant_forward(spec)(params, a_hat, x, False).z_air


def gae_decode(z: Tensor, pairs: np.ndarray) -> Tensor:
    """Raw dot-product scores for node pairs; sigmoid lives in loss/metrics."""
    return ad.pair_dot(z, pairs)
