"""Command-line entry point.

Commands: ``train``, ``linkpred``, ``gradcheck``, ``taylor``, ``synth``,
``grid``. Run configuration comes from an optional flat ``key = value``
file (``#`` comments allowed) plus flag overrides; flags win.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, models
from .autodiff import gradcheck, tensor
from .graph import Graph, load_bundle, row_normalize_features, save_bundle, \
    synth_xor_graph
from .models import ModelSpec, build_variant
from .report import report_dict, write_report
from .training import TrainSpec, propagation_matrix, run_experiment


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; every key except dataset/task has a default."""

    dataset: str = ""              # bundle directory, or "synth"
    task: str = ""                 # node-clf | link-pred
    base: str = "gcn"
    variant: str = "air"
    k_layers: int = 1
    hidden: int = 16
    dropout: float = 0.5
    embed_dim: int = 16
    epochs: int = 200
    lr: float = 0.01
    weight_decay: float = 5e-4
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.5
    patience: int = 30
    seeds: tuple[int, ...] = (0,)
    synth_n: int = 200
    synth_seed: int = 7
    normalize_features: bool = True
    val_frac: float = 0.05
    test_frac: float = 0.10
    split_seed: int = 0
    out: str = ""

    def model_spec(self, n_classes: int) -> ModelSpec:
        return ModelSpec(base=self.base, variant=self.variant,
                         k_layers=self.k_layers, hidden_dim=self.hidden,
                         dropout=self.dropout, task=self.task,
                         n_classes=n_classes, embed_dim=self.embed_dim)

    def train_spec(self) -> TrainSpec:
        return TrainSpec(epochs=self.epochs, lr=self.lr,
                         weight_decay=self.weight_decay, lambda1=self.lambda1,
                         lambda2=self.lambda2, lambda3=self.lambda3,
                         patience=self.patience, seeds=self.seeds)


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _CONFIG_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "tuple[int, ...]":
            return tuple(int(s) for s in raw.split(",") if s.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def read_config_file(path) -> dict:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for ln, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def parse_config(path, overrides: dict, defaults: dict | None = None) -> RunConfig:
    """File values first, then flag overrides; ``defaults`` only fill gaps."""
    values = dict(defaults) if defaults else {}
    values.update(read_config_file(path) if path else {})
    for key, value in overrides.items():
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = _parse_value(key, str(value)) if isinstance(value, str) \
                else value
    cfg = RunConfig(**values)
    if not cfg.dataset:
        raise ConfigError("missing required key 'dataset' (bundle directory or 'synth')")
    if not cfg.task:
        raise ConfigError("missing required key 'task'")
    if cfg.task not in models.TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}")
    return cfg


def config_echo(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        out[f.name] = ",".join(str(s) for s in v) if isinstance(v, tuple) else v
    return out


def config_lines(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to the flat file format (round-trips)."""
    return "".join(f"{k} = {v}\n" for k, v in config_echo(cfg).items())


# -- command bodies -----------------------------------------------------------


def _load_dataset(cfg: RunConfig) -> Graph:
    if cfg.dataset == "synth":
        graph = synth_xor_graph(cfg.synth_n, cfg.synth_seed)
    else:
        graph = load_bundle(cfg.dataset)
    if cfg.normalize_features:
        graph = Graph(graph.n, graph.adjacency,
                      row_normalize_features(graph.features), graph.labels,
                      graph.train_mask, graph.val_mask, graph.test_mask)
    return graph


def _run_training(cfg: RunConfig) -> int:
    graph = _load_dataset(cfg)
    n_classes = graph.num_classes if cfg.task == "node-clf" else 0
    metrics = run_experiment(graph, cfg.model_spec(n_classes), cfg.train_spec(),
                             val_frac=cfg.val_frac, test_frac=cfg.test_frac,
                             split_seed=cfg.split_seed)
    doc = report_dict(metrics, config_echo(cfg))
    if cfg.out:
        path = write_report(metrics, config_echo(cfg), cfg.out)
        print(f"report written to {path}")
    print(json.dumps({k: doc[k] for k in ("task", "metric", "mean", "std")},
                     indent=2))
    failures = [r for r in metrics.per_seed if r.error]
    for r in failures:
        print(f"seed {r.seed} failed: {r.error}", file=sys.stderr)
    return 1 if metrics.mean is None else 0


def cmd_train(args) -> int:
    cfg = parse_config(args.config, _overrides(args), {"task": "node-clf"})
    if cfg.task != "node-clf":
        raise ConfigError("command 'train' runs task node-clf")
    return _run_training(cfg)


def cmd_linkpred(args) -> int:
    cfg = parse_config(args.config, _overrides(args), {"task": "link-pred"})
    if cfg.task != "link-pred":
        raise ConfigError("command 'linkpred' runs task link-pred")
    return _run_training(cfg)


def _gradcheck_fixture(seed: int = 0):
    """Small random graph + feature matrix shared by all CLI gradchecks."""
    rng = np.random.default_rng(seed)
    from .graph import adjacency_from_edges
    n = 8
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)
                      if rng.random() < 0.4])
    adjacency = adjacency_from_edges(n, pairs)
    x = rng.normal(size=(n, 5))
    labels = rng.integers(0, 3, size=n)
    mask = np.ones(n, dtype=bool)
    return adjacency, x, labels, mask


def run_gradchecks(eps: float = 1e-6) -> dict[str, float]:
    """Gradcheck every variant's full forward + weighted loss on the fixture."""
    adjacency, x_raw, labels, mask = _gradcheck_fixture()
    results = {}
    for variant in models.VARIANTS:
        for base in models.BASES:
            spec = ModelSpec(base=base, variant=variant, k_layers=1,
                             hidden_dim=4, dropout=0.0, n_classes=3)
            rng = np.random.default_rng(1)
            params, forward = build_variant(spec, x_raw.shape[1], rng)
            a_hat = propagation_matrix(adjacency, base)
            x = tensor(x_raw)
            tspec = TrainSpec(lambda2=0.7, lambda3=0.3)

            def loss_fn(params=params, forward=forward, a_hat=a_hat, x=x):
                from .training import _classification_loss
                outs = forward(params, a_hat, x, False)
                return _classification_loss(outs, labels, mask, tspec)

            results[f"{variant}/{base}"] = gradcheck(
                loss_fn, list(params.values()), eps=eps)
    return results


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for name, err in run_gradchecks(eps=args.eps).items():
        print(f"{name:>20}: max rel err {err:.3e}")
        worst = max(worst, err)
    print(f"{'worst':>20}: {worst:.3e} ({'OK' if worst < 1e-4 else 'FAIL'})")
    return 0 if worst < 1e-4 else 1


def cmd_taylor(args) -> int:
    report = analysis.taylor_report(degree=args.degree, t_max=args.t_max,
                                    n_samples=args.samples, seed=args.seed)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print("\n".join(report.lines()))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "taylor.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        from .plots import taylor_figure
        taylor_figure(report, out / "taylor.png")
        print(f"report written to {out / 'taylor.json'}")
    return 0


def cmd_synth(args) -> int:
    graph = synth_xor_graph(args.n, args.seed)
    save_bundle(graph, args.out, classes=2)
    print(f"bundle with {graph.n} nodes, {graph.num_edges} edges written to {args.out}")
    return 0


def cmd_grid(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    values = [round(0.1 * k, 1) for k in range(1, 16)] if args.full \
        else [0.1, 0.5, 1.0, 1.5]
    graph = _load_dataset(cfg)
    n_classes = graph.num_classes if cfg.task == "node-clf" else 0
    rows = []
    best = None
    for l1, l2, l3 in itertools.product(values, repeat=3):
        tspec = TrainSpec(epochs=cfg.epochs, lr=cfg.lr,
                          weight_decay=cfg.weight_decay, lambda1=l1,
                          lambda2=l2, lambda3=l3, patience=cfg.patience,
                          seeds=cfg.seeds)
        metrics = run_experiment(graph, cfg.model_spec(n_classes), tspec,
                                 val_frac=cfg.val_frac, test_frac=cfg.test_frac,
                                 split_seed=cfg.split_seed)
        ok = [r for r in metrics.per_seed if r.error is None]
        val = float(np.mean([r.val_metric for r in ok])) if ok else None
        row = {"lambda1": l1, "lambda2": l2, "lambda3": l3,
               "val_metric": val, "test_metric": metrics.mean}
        rows.append(row)
        if val is not None and (best is None or val > best["val_metric"]):
            best = row
    if best is None:
        print("every grid combination failed", file=sys.stderr)
        return 1
    print(f"best validation configuration: lambda1={best['lambda1']} "
          f"lambda2={best['lambda2']} lambda3={best['lambda3']} "
          f"(val {best['val_metric']:.4f}, test {best['test_metric']:.4f})")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grid.json").write_text(
            json.dumps({"config": config_echo(cfg), "rows": rows, "best": best},
                       indent=2) + "\n", encoding="utf-8")
        (out / "grid.csv").write_text(
            "lambda1,lambda2,lambda3,val_metric,test_metric\n" +
            "".join(f"{r['lambda1']},{r['lambda2']},{r['lambda3']},"
                    f"{r['val_metric']},{r['test_metric']}\n" for r in rows),
            encoding="utf-8")
        from .plots import grid_figure
        grid_figure(rows, out / "grid.png")
        print(f"grid report written to {out / 'grid.json'}")
    return 0


# -- argument wiring -----------------------------------------------------------


_FLAG_KEYS = [f.name for f in fields(RunConfig)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key = value file")
    for key in _FLAG_KEYS:
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=key, default=None, metavar="V",
                            help=f"override config key {key}")


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airgcn",
        description="Graph learning with explicit neighborhood interaction: "
                    "training, link prediction, gradient and expansion checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="multi-seed node classification")
    _add_config_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_link = sub.add_parser("linkpred", help="multi-seed link prediction")
    _add_config_flags(p_link)
    p_link.set_defaults(fn=cmd_linkpred)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference check of every model forward")
    p_grad.add_argument("--eps", type=float, default=1e-5)
    p_grad.set_defaults(fn=cmd_gradcheck)

    p_taylor = sub.add_parser("taylor",
                              help="sigmoid expansion coefficients and bounds")
    p_taylor.add_argument("--degree", type=int, default=3)
    p_taylor.add_argument("--t-max", type=float, default=0.1)
    p_taylor.add_argument("--samples", type=int, default=10_000)
    p_taylor.add_argument("--seed", type=int, default=0)
    p_taylor.add_argument("--json", action="store_true")
    p_taylor.add_argument("--out", default=None)
    p_taylor.set_defaults(fn=cmd_taylor)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset bundle")
    p_synth.add_argument("--n", type=int, default=200)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(fn=cmd_synth)

    p_grid = sub.add_parser("grid", help="loss-weight grid search")
    _add_config_flags(p_grid)
    p_grid.add_argument("--full", action="store_true",
                        help="full 15^3 grid instead of the coarse 4^3 default")
    p_grid.add_argument("--coarse", action="store_true",
                        help="coarse 4^3 grid (the default)")
    p_grid.set_defaults(fn=cmd_grid)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
