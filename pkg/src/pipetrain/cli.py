"""Command-line experiment runner.

Subcommands: ``train``, ``compare``, ``rmse``, ``costmodel`` and ``trace``.
Settings come from an optional JSON config file; command-line flags override
it. Metrics go to CSV, summaries to JSON, under ``--out``.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .costmodel import HardwareProfile, report
from .data import batches, load_csv, make_blobs, make_moons
from .errors import DivergedError, InputError
from .estimator import PipelinedMLPClassifier, _sub_seeds
from .executor import STRATEGIES, emit_trace
from .nn import LayerSpec, ModelSpec, evaluate, init_params
from .numcore import make_rng
from .partition import balance_partition, plan_from_cuts
from .staleness import record_history, record_rmse, summarize

log = logging.getLogger("pipetrain")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
METRIC_FIELDS = ("step", "train_loss", "val_loss", "val_acc")


@dataclass
class RunConfig:
    strategy: str = "spectrain"
    devices: int = 4
    batch: int = 128
    lr: float = 0.1
    gamma: float = 0.9
    update_rule: str = "momentum"
    steps: int = 1000
    seed: int = 0
    eval_every: int = 20
    cuts: list = None
    out: str = "runs"
    trace: bool = False
    model: dict = field(default_factory=lambda: {"hidden": [32] * 5, "activation": "relu"})
    data: dict = field(default_factory=lambda: {
        "kind": "blobs", "n_train": 8192, "n_val": 4096, "d": 16, "classes": 8, "noise": 0.7,
    })
    strategies: list = field(default_factory=lambda: list(STRATEGIES))
    s: list = field(default_factory=lambda: [1, 2, 3])
    rmse_warmup: int = 10
    hardware: dict = field(default_factory=lambda: {"compute_rate": 1.0, "bandwidth": 1.0})

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise InputError(f"unknown strategies {unknown}")
        for name in ("devices", "batch", "eval_every"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if self.steps < 0:
            raise InputError("steps must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise InputError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.lr < 0:
            raise InputError("lr must be non-negative")
        if any(int(s) < 0 for s in self.s):
            raise InputError("version differences must be non-negative")
        return self

    @classmethod
    def load(cls, path=None, **overrides):
        values = {}
        if path:
            try:
                values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise InputError(f"cannot read config {path}: {exc}") from None
            known = {f.name for f in fields(cls)}
            extra = set(values) - known
            if extra:
                raise InputError(f"unknown config keys: {sorted(extra)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()


def load_data(cfg):
    d = dict(cfg.data)
    kind = d.get("kind", "blobs")
    if kind == "blobs":
        args = (d.get("d", 16), d.get("classes", 8), d.get("noise", 0.7))
        return (make_blobs(cfg.seed, d.get("n_train", 8192), *args),
                make_blobs(cfg.seed, d.get("n_val", 4096), *args, split="val"))
    if kind == "moons":
        noise = d.get("noise", 0.1)
        return (make_moons(cfg.seed, d.get("n_train", 2048), noise),
                make_moons(cfg.seed, d.get("n_val", 1024), noise, split="val"))
    if kind == "csv":
        if "path" not in d or "val_path" not in d:
            raise InputError("csv data needs 'path' and 'val_path'")
        return load_csv(d["path"]), load_csv(d["val_path"], split="val")
    raise InputError(f"unknown data kind {kind!r}")


def model_spec(cfg, n_in=None, n_out=None):
    """ModelSpec from the config: explicit ``layers`` or ``hidden`` widths."""
    m = cfg.model
    if "layers" in m:
        layers = [LayerSpec(int(l["in_dim"]), int(l["out_dim"]), l.get("activation", "relu"))
                  for l in m["layers"]]
        return ModelSpec(tuple(layers), m.get("loss", "softmax_xent"))
    act = m.get("activation", "relu")
    hidden = list(m.get("hidden", [32] * 5))
    return ModelSpec.mlp([n_in, *hidden, n_out], act)


def make_estimator(cfg, strategy=None):
    if "layers" in cfg.model:
        raise InputError("training takes 'hidden' widths; explicit 'layers' are for costmodel")
    return PipelinedMLPClassifier(
        hidden_layer_sizes=tuple(cfg.model.get("hidden", [32] * 5)),
        activation=cfg.model.get("activation", "relu"),
        strategy=strategy or cfg.strategy,
        n_devices=cfg.devices,
        cuts=cfg.cuts,
        learning_rate=cfg.lr,
        momentum=cfg.gamma,
        update_rule=cfg.update_rule,
        batch_size=cfg.batch,
        n_steps=cfg.steps,
        eval_every=cfg.eval_every,
        random_state=cfg.seed,
    )


def _fit(cfg, strategy=None):
    train, val = load_data(cfg)
    est = make_estimator(cfg, strategy)
    return est.fit(train.features, train.labels, val.features, val.labels), val


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_metrics(path, rows, prefix=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in prefix] + list(METRIC_FIELDS))
        for r in rows:
            w.writerow([v for _, v in prefix] + [_fmt(getattr(r, f)) for f in METRIC_FIELDS])


def write_traffic(path, traffic):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "elements", "kind", "minibatch"])
        for t in traffic:
            w.writerow([t.src, t.dst, t.elements, t.kind, t.minibatch])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _summary(cfg, est, val, strategy):
    loss_val, acc = evaluate(est.model_spec_, est.params_, val.features, est._encode(val.labels))
    return {
        "strategy": strategy,
        "steps": cfg.steps,
        "devices": cfg.devices,
        "final_val_loss": loss_val,
        "final_val_acc": acc,
        "traffic_elements": int(sum(t.elements for t in est.traffic_)),
        "plan": None if est.plan_ is None else asdict(est.plan_),
    }


def cmd_train(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    est, val = _fit(cfg)
    write_metrics(out / "metrics.csv", est.metrics_)
    write_traffic(out / "traffic.csv", est.traffic_)
    if cfg.trace:
        (out / "trace.csv").write_text(emit_trace(est.trace_))
    summary = _summary(cfg, est, val, cfg.strategy)
    _write_json(out / "summary.json", summary)
    log.info("final val_acc %.4f", summary["final_val_acc"])
    return summary


def cmd_compare(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", *METRIC_FIELDS])
        for strategy in cfg.strategies:
            est, val = _fit(cfg, strategy)
            for r in est.metrics_:
                w.writerow([strategy] + [_fmt(getattr(r, f)) for f in METRIC_FIELDS])
            summaries.append(_summary(cfg, est, val, strategy))
    _write_json(out / "compare_summary.json", summaries)
    return summaries


def cmd_rmse(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    train, _ = load_data(cfg)
    spec = model_spec(cfg, train.features.shape[1], train.n_classes)
    init_seed, batch_seed = _sub_seeds(cfg.seed)
    history = record_history(spec, init_params(spec, make_rng(init_seed)),
                             batches(train, cfg.batch, batch_seed, drop_last=True),
                             cfg.steps, cfg.lr, cfg.gamma, cfg.update_rule)
    summaries = []
    with open(out / "rmse.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "s", "rmse_pred", "rmse_stale"])
        for s in cfg.s:
            recs = record_rmse(history, int(s))
            for r in recs:
                w.writerow([r.step, r.s, _fmt(r.rmse_pred), _fmt(r.rmse_stale)])
            summaries.append(summarize(recs, cfg.rmse_warmup))
    _write_json(out / "rmse_summary.json", summaries)
    return summaries


def cmd_costmodel(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if "layers" in cfg.model:
        spec = model_spec(cfg)
    else:
        d = cfg.data
        spec = model_spec(cfg, d.get("d", 16), d.get("classes", 8))
    hw = cfg.hardware
    profile = HardwareProfile(float(hw.get("compute_rate", 1.0)), float(hw.get("bandwidth", 1.0)))
    if cfg.cuts is not None:
        plan = plan_from_cuts(spec, cfg.cuts, cfg.batch)
    else:
        plan = balance_partition(spec, cfg.devices, cfg.batch)
    result = {
        "dp": report(spec, "dp", cfg.batch, profile, replicas=cfg.devices),
        "mp": report(spec, "mp", cfg.batch, profile, plan=plan),
    }
    result["dp_to_mp_volume_ratio"] = (
        result["dp"]["comm_elements"] / result["mp"]["comm_elements"]
        if result["mp"]["comm_elements"] else float("inf")
    )
    _write_json(out / "costmodel.json", result)
    return result


def cmd_trace(cfg):
    if cfg.strategy not in ("vanilla", "stash", "spectrain"):
        raise InputError("trace needs a pipelined strategy")
    est, _ = _fit(cfg)
    text = emit_trace(est.trace_)
    if cfg.trace:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return text


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "rmse": cmd_rmse,
    "costmodel": cmd_costmodel,
    "trace": cmd_trace,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="pipetrain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--strategy", choices=STRATEGIES)
        p.add_argument("--devices", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--eval-every", dest="eval_every", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--trace", action="store_true", default=None,
                       help="write the task event trace to OUT/trace.csv")
        if name == "rmse":
            p.add_argument("--s", type=lambda v: [int(x) for x in v.split(",")],
                           help="comma-separated version differences, e.g. 1,2,3")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = RunConfig.load(args.config, **overrides)
        result = COMMANDS[args.command](cfg)
    except DivergedError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command in ("costmodel", "rmse"):
        print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
