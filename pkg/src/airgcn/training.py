"""Training loops, metrics, and multi-seed experiment orchestration.

Node classification minimizes a weighted sum of cross-entropies over the
prediction head and the two auxiliary branch heads; only the prediction
head is used for early stopping and inference. Link prediction trains a
convolutional encoder with a dot-product decoder against per-epoch
resampled negatives and reports AUC on fixed held-out pair sets.

Each seed owns an independent generator (numpy PCG64), so runs are
bit-reproducible and seeds could execute in parallel.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape, Tensor, adam_step, tensor
from .graph import EdgeSplit, Graph, mean_adjacency, normalize_adjacency, \
    sample_nonedges, split_edges, undirected_edges, _pair_keys
from .models import ForwardOutputs, ModelSpec, ParamSet, build_variant, \
    gae_decode, variant_forward
from .sparse import CsrMatrix

RNG_ALGORITHM = "numpy-PCG64"


@dataclass(frozen=True)
class TrainSpec:
    """Optimization schedule shared by both tasks."""

    epochs: int = 200
    lr: float = 0.01
    weight_decay: float = 5e-4
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.5
    patience: int = 30
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be positive")
        if self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError("loss weights must be non-negative")
        if not 1 <= self.patience <= self.epochs:
            raise ValueError("patience must lie in [1, epochs]")
        if not self.seeds:
            raise ValueError("at least one seed required")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float


@dataclass
class SeedResult:
    seed: int
    test_metric: float | None = None
    val_metric: float | None = None
    best_val_loss: float | None = None
    best_epoch: int | None = None
    epochs_run: int = 0
    history: list[EpochRecord] = field(default_factory=list)
    error: str | None = None


@dataclass
class Metrics:
    """Aggregate over seeds; std is absent (None) below two successful runs."""

    task: str
    metric_name: str
    per_seed: list[SeedResult]
    mean: float | None
    std: float | None
    wall_clock_sec: float
    rng_algorithm: str = RNG_ALGORITHM


def propagation_matrix(adjacency: CsrMatrix, base: str) -> CsrMatrix:
    if base == "gcn":
        return normalize_adjacency(adjacency)
    if base == "sage-mean":
        return mean_adjacency(adjacency)
    raise ValueError(f"unknown base {base!r}")


# -- node classification -----------------------------------------------------


def _classification_loss(outs: ForwardOutputs, labels, mask,
                         tspec: TrainSpec) -> Tensor:
    loss = ad.scale(ad.masked_softmax_cross_entropy(outs.z_air, labels, mask),
                    tspec.lambda1)
    if outs.z_agg is not None and tspec.lambda2 > 0:
        loss = ad.add(loss, ad.scale(
            ad.masked_softmax_cross_entropy(outs.z_agg, labels, mask),
            tspec.lambda2))
    if outs.z_agg_bar is not None and tspec.lambda3 > 0:
        loss = ad.add(loss, ad.scale(
            ad.masked_softmax_cross_entropy(outs.z_agg_bar, labels, mask),
            tspec.lambda3))
    return loss


def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    # argmax takes the lowest class index on ties
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == labels[idx]))


def evaluate_accuracy(params: ParamSet, spec: ModelSpec, graph: Graph,
                      mask: np.ndarray) -> float:
    """Fraction of masked nodes whose predicted class matches the label."""
    a_hat = propagation_matrix(graph.adjacency, spec.base)
    outs = variant_forward(spec)(params, a_hat, tensor(graph.features), False)
    return _accuracy(outs.z_air.values, graph.labels, mask)


def _snapshot(params: ParamSet) -> dict[str, np.ndarray]:
    return {k: p.values.copy() for k, p in params.items()}


def _restore(params: ParamSet, snap: dict[str, np.ndarray]) -> None:
    for k, p in params.items():
        p.values = snap[k].copy()


def _clear_grads(params: ParamSet) -> None:
    for p in params.values():
        p.grad = None


def _collect_grads(params: ParamSet) -> dict[str, np.ndarray]:
    # a parameter the loss never touched legitimately has zero gradient
    return {k: p.grad if p.grad is not None else np.zeros_like(p.values)
            for k, p in params.items()}


def train_node_classifier(graph: Graph, model_spec: ModelSpec,
                          train_spec: TrainSpec,
                          seed: int | None = None) -> tuple[ParamSet, SeedResult]:
    """Train one model; early-stops on the prediction head's validation loss.

    Returns the parameters that achieved the minimum recorded validation
    loss together with the per-epoch history and final test accuracy.
    """
    for name in ("train_mask", "val_mask", "test_mask"):
        if not getattr(graph, name).any():
            raise ValueError(f"empty mask: {name}")
    seed = train_spec.seeds[0] if seed is None else seed
    rng = np.random.default_rng(seed)
    a_hat = propagation_matrix(graph.adjacency, model_spec.base)
    x = tensor(graph.features)
    params, forward = build_variant(model_spec, graph.num_features, rng)
    adam = AdamState(lr=train_spec.lr, weight_decay=train_spec.weight_decay)

    result = SeedResult(seed=seed)
    best_loss, best_snap, best_epoch, best_metric = np.inf, None, -1, None
    wait = 0
    for epoch in range(train_spec.epochs):
        _clear_grads(params)
        with Tape() as tape:
            outs = forward(params, a_hat, x, True, rng)
            loss = _classification_loss(outs, graph.labels, graph.train_mask,
                                        train_spec)
            tape.backward(loss)
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise ValueError(f"non-finite training loss at epoch {epoch}")
        adam_step(params, _collect_grads(params), adam)

        eval_outs = forward(params, a_hat, x, False)
        val_loss = ad.masked_softmax_cross_entropy(
            eval_outs.z_air, graph.labels, graph.val_mask).item()
        val_acc = _accuracy(eval_outs.z_air.values, graph.labels, graph.val_mask)
        result.history.append(EpochRecord(epoch, train_loss, val_loss, val_acc))
        if val_loss < best_loss:
            best_loss, best_snap, best_epoch, best_metric = \
                val_loss, _snapshot(params), epoch, val_acc
            wait = 0
        else:
            wait += 1
            if wait >= train_spec.patience:
                break

    _restore(params, best_snap)
    result.epochs_run = len(result.history)
    result.best_val_loss = best_loss
    result.best_epoch = best_epoch
    result.val_metric = best_metric
    result.test_metric = evaluate_accuracy(params, model_spec, graph,
                                           graph.test_mask)
    return params, result


# -- link prediction ----------------------------------------------------------


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted half.

    Computed from tie-averaged rank sums in O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc requires both classes")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    new_group = np.concatenate(([True], s[1:] != s[:-1]))
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0  # mean of ranks (1-based) in each tie group
    ranks = np.empty(len(s))
    ranks[order] = avg_rank[group]
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _pair_scores(z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])


def _bce_loss_heads(outs: ForwardOutputs, pairs: np.ndarray, targets: np.ndarray,
                    pos_weight: float, tspec: TrainSpec) -> Tensor:
    loss = ad.scale(ad.bce_with_logits(gae_decode(outs.z_air, pairs), targets,
                                       pos_weight), tspec.lambda1)
    if outs.z_agg is not None and tspec.lambda2 > 0:
        loss = ad.add(loss, ad.scale(
            ad.bce_with_logits(gae_decode(outs.z_agg, pairs), targets, pos_weight),
            tspec.lambda2))
    if outs.z_agg_bar is not None and tspec.lambda3 > 0:
        loss = ad.add(loss, ad.scale(
            ad.bce_with_logits(gae_decode(outs.z_agg_bar, pairs), targets, pos_weight),
            tspec.lambda3))
    return loss


def train_link_predictor(graph: Graph, edge_split: EdgeSplit,
                         model_spec: ModelSpec, train_spec: TrainSpec,
                         seed: int | None = None) -> tuple[np.ndarray, SeedResult]:
    """Train an encoder on the reduced training graph; returns embeddings.

    Positive examples are the training edges; negatives are resampled
    uniformly every epoch. Early stopping tracks AUC on the fixed
    validation pairs (validation BCE is scale-sensitive: score magnitudes
    grow as ranking improves, so its minimum sits at the untrained model),
    and the returned parameters achieve the maximum recorded validation
    AUC exactly.
    """
    if model_spec.task != "link-pred":
        raise ValueError("model_spec.task must be 'link-pred'")
    if edge_split.train_adjacency.n_rows != graph.n:
        raise ValueError("edge split does not match graph")
    seed = train_spec.seeds[0] if seed is None else seed
    rng = np.random.default_rng(seed)
    a_hat = propagation_matrix(edge_split.train_adjacency, model_spec.base)
    x = tensor(graph.features)
    params, forward = build_variant(model_spec, graph.num_features, rng)
    adam = AdamState(lr=train_spec.lr, weight_decay=train_spec.weight_decay)

    pos_train = undirected_edges(edge_split.train_adjacency)
    n_pos = len(pos_train)
    if n_pos == 0:
        raise ValueError("degenerate split: no training edges")
    n_edges_total = graph.num_edges
    possible_nonedges = graph.n * (graph.n - 1) / 2 - n_edges_total
    pos_weight = float(min(20.0, possible_nonedges / n_edges_total))
    forbidden = set(_pair_keys(undirected_edges(graph.adjacency), graph.n).tolist())

    val_pairs = np.concatenate([edge_split.val_pos, edge_split.val_neg])
    val_targets = np.concatenate([np.ones(len(edge_split.val_pos)),
                                  np.zeros(len(edge_split.val_neg))])
    test_pairs = np.concatenate([edge_split.test_pos, edge_split.test_neg])
    test_targets = np.concatenate([np.ones(len(edge_split.test_pos)),
                                   np.zeros(len(edge_split.test_neg))])

    result = SeedResult(seed=seed)
    best_auc, best_snap, best_epoch, best_loss = -np.inf, None, -1, None
    wait = 0
    for epoch in range(train_spec.epochs):
        negatives = sample_nonedges(graph.n, n_pos, forbidden, rng, distinct=False)
        pairs = np.concatenate([pos_train, negatives])
        targets = np.concatenate([np.ones(n_pos), np.zeros(n_pos)])
        _clear_grads(params)
        with Tape() as tape:
            outs = forward(params, a_hat, x, True, rng)
            loss = _bce_loss_heads(outs, pairs, targets, pos_weight, train_spec)
            tape.backward(loss)
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise ValueError(f"non-finite training loss at epoch {epoch}")
        adam_step(params, _collect_grads(params), adam)

        eval_outs = forward(params, a_hat, x, False)
        z = eval_outs.z_air.values
        val_scores = _pair_scores(z, val_pairs)
        val_loss = ad.bce_with_logits(tensor(val_scores), val_targets).item()
        val_auc = auc(val_scores, val_targets)
        result.history.append(EpochRecord(epoch, train_loss, val_loss, val_auc))
        if val_auc > best_auc:
            best_auc, best_snap, best_epoch, best_loss = \
                val_auc, _snapshot(params), epoch, val_loss
            wait = 0
        else:
            wait += 1
            if wait >= train_spec.patience:
                break

    _restore(params, best_snap)
    embeddings = forward(params, a_hat, x, False).z_air.values
    result.epochs_run = len(result.history)
    result.best_val_loss = best_loss
    result.best_epoch = best_epoch
    result.val_metric = best_auc
    result.test_metric = auc(_pair_scores(embeddings, test_pairs), test_targets)
    return embeddings, result


# -- multi-seed orchestration -------------------------------------------------


def run_experiment(graph: Graph, model_spec: ModelSpec, train_spec: TrainSpec, *,
                   val_frac: float = 0.05, test_frac: float = 0.10,
                   split_seed: int = 0) -> Metrics:
    """Run one training per seed and aggregate mean and standard deviation.

    A failing seed is recorded with its error message and skipped in the
    aggregation rather than aborting the experiment.
    """
    start = time.perf_counter()
    per_seed: list[SeedResult] = []
    edge_split = None
    if model_spec.task == "link-pred":
        # one split for all seeds so AUCs are comparable across runs
        edge_split = split_edges(graph, val_frac, test_frac, split_seed)
    for seed in train_spec.seeds:
        try:
            if model_spec.task == "node-clf":
                _, res = train_node_classifier(graph, model_spec, train_spec, seed)
            else:
                _, res = train_link_predictor(graph, edge_split, model_spec,
                                              train_spec, seed)
        except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
            res = SeedResult(seed=seed, error=str(exc))
        per_seed.append(res)

    values = [r.test_metric for r in per_seed if r.error is None]
    mean = float(np.mean(values)) if values else None
    std = float(np.std(values, ddof=1)) if len(values) >= 2 else None
    return Metrics(task=model_spec.task,
                   metric_name="accuracy" if model_spec.task == "node-clf" else "auc",
                   per_seed=per_seed, mean=mean, std=std,
                   wall_clock_sec=time.perf_counter() - start)
