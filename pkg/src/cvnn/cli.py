"""Batch command-line front end.

Subcommands: ``gen-data`` (dataset synthesis), ``train`` / ``eval`` (single
runs), and the two repeated-run experiments ``exp-init`` (initializer scaling
and scheme comparison) and ``exp-cv-rv`` (complex network against its
real-valued equivalent).  Configuration comes from a TOML file; command-line
flags override file values.  Every command writes a ``manifest.json`` with
the echoed config, the seed, and a sha256 per artifact, and removes partial
outputs if it fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, CvnnError
from .initializers import InitializerSpec, real_equivalent_spec
from .layers import ComplexDense, ComplexDropout
from .signals import CLASS_NAMES, DatasetSpec, SignalDataset, build_dataset, load_dataset
from .train import (
    Model,
    SGDConfig,
    evaluate,
    fit,
    five_number_summary,
    load_model,
    model_from_config,
    run_repeated,
    save_model,
)

# medians of the full-scale initializer-scaling study, kept for reference in
# the experiment summaries (desk-scale runs reproduce the ordering only)
FULL_SCALE_MEDIANS = {"original": 0.549, "x_sqrt2": 0.525, "half": 0.523}

SCALE_VARIANTS = {
    "x_sqrt2": ("glorot_uniform", math.sqrt(2.0)),
    "original": ("glorot_uniform", 1.0),
    "half": ("glorot_uniform", 0.5),
}
SCHEME_VARIANTS = {
    "GU": ("glorot_uniform", 1.0),
    "GN": ("glorot_normal", 1.0),
    "GU_C": ("glorot_uniform_alt_tradeoff", 1.0),
    "HU": ("he_uniform", 1.0),
    "HN": ("he_normal", 1.0),
}


class RunDir:
    """Tracks files written by a command so failures leave no partial output."""

    def __init__(self, out_dir):
        self.dir = out_dir
        self.written = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.written.append(p)
        return p

    def write_text(self, name, text):
        p = self.path(name)
        with open(p, "w") as fh:
            fh.write(text)
        return p

    def cleanup(self):
        for p in self.written:
            if os.path.exists(p):
                os.remove(p)

    def manifest(self, command, config, seed):
        arts = {}
        for p in self.written:
            with open(p, "rb") as fh:
                arts[os.path.basename(p)] = hashlib.sha256(fh.read()).hexdigest()
        doc = {
            "command": command,
            "version": __version__,
            "seed": seed,
            "config": config,
            "artifacts": arts,
        }
        p = os.path.join(self.dir, "manifest.json")
        with open(p, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        self.written.append(p)


def _args_dict(args):
    return {k: v for k, v in vars(args).items() if k not in ("fn",)}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")


def _require(cfg, *path):
    node = cfg
    walked = []
    for key in path:
        walked.append(str(key))
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"config field {'.'.join(walked)} is missing")
        node = node[key]
    return node


def _dataset_spec(cfg, seed_override=None):
    dcfg = _require(cfg, "dataset")
    n_per_class = _require(cfg, "dataset", "n_per_class")
    seed = seed_override if seed_override is not None else dcfg.get("seed", 0)
    return DatasetSpec(
        n_per_class=int(n_per_class),
        length=int(dcfg.get("length", 256)),
        snr_db=float(dcfg.get("snr_db", 10.0)),
        seed=int(seed),
        classes=tuple(dcfg.get("classes", CLASS_NAMES)),
        split=tuple(dcfg.get("split", (0.8, 0.1, 0.1))),
    )


def cmd_gen_data(args):
    cfg = _load_config(args.config)
    run = RunDir(args.out)
    try:
        spec = _dataset_spec(cfg, args.seed)
        ds = build_dataset(spec, path=run.path("dataset.cvds"))
        if cfg.get("dataset", {}).get("csv", False):
            ds.export_csv(run.path("dataset.csv"))
        run.manifest("gen-data", cfg, spec.seed)
    except Exception:
        run.cleanup()
        raise
    return 0


def _fit_from_config(cfg, run, seed_override=None):
    dcfg = _require(cfg, "dataset")
    if "file" in dcfg:
        ds = load_dataset(dcfg["file"], split=tuple(dcfg.get("split", (0.8, 0.1, 0.1))))
    else:
        ds = build_dataset(_dataset_spec(cfg), path=run.path("dataset.cvds"))
    mcfg = dict(_require(cfg, "model"))
    if seed_override is not None:
        mcfg["seed"] = seed_override
    model = model_from_config(mcfg)
    scfg = _require(cfg, "sgd")
    sgd = SGDConfig(
        learning_rate=float(_require(cfg, "sgd", "learning_rate")),
        batch_size=int(scfg.get("batch_size", 100)),
        epochs=int(_require(cfg, "sgd", "epochs")),
    )
    data = ds.as_arrays("real" if model.dtype == "real" else "complex")
    history = fit(model, data, sgd)
    return model, history


def cmd_train(args):
    cfg = _load_config(args.config)
    run = RunDir(args.out)
    try:
        model, history = _fit_from_config(cfg, run, args.seed)
        save_model(model, run.path("model.cvnm"))
        run.write_text("history.csv", history.to_csv())
        run.write_text("history.json", history.to_json())
        run.write_text(
            "summary.json",
            json.dumps(
                {"test_loss": history.test_loss, "test_acc": history.test_acc,
                 "diverged": history.diverged},
                indent=2, sort_keys=True,
            ),
        )
        run.manifest("train", cfg, model.seed)
    except Exception:
        run.cleanup()
        raise
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    split = tuple(float(f) for f in args.split_fractions.split(","))
    ds = load_dataset(args.data, split=split)
    data = ds.as_arrays("real" if model.dtype == "real" else "complex")
    x, y = data[args.split]
    loss, acc = evaluate(model, x, y)
    doc = {"split": args.split, "loss": loss, "accuracy": acc, "n": int(len(y))}
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.out:
        run = RunDir(args.out)
        try:
            run.write_text("eval.json", json.dumps(doc, indent=2, sort_keys=True))
            run.manifest("eval", {"model": args.model, "data": args.data}, 0)
        except Exception:
            run.cleanup()
            raise
    return 0


def _sigmoid_stack(variant_scheme, variant_scale, n_classes, seed, activation="pol_sigmoid"):
    """The four-hidden-layer logistic network of the initializer study.

    The polar logistic sigmoid is the default: it keeps phase information
    flowing through the four-layer stack, so short desk-scale runs actually
    train (the split variant needs far more epochs to leave its plateau).
    """
    init = InitializerSpec(scheme=variant_scheme, scale=variant_scale)
    layers = [ComplexDense(u, activation, init) for u in (128, 64, 32, 16)]
    layers.append(ComplexDense(n_classes, "softmax_real_with_abs", init))
    return Model(layers, loss="cce_real", input_shape=(256,), seed=seed)


def cmd_exp_init(args):
    variants = {}
    for name in args.variants.split(","):
        name = name.strip()
        if name in SCALE_VARIANTS:
            variants[name] = SCALE_VARIANTS[name]
        elif name in SCHEME_VARIANTS:
            variants[name] = SCHEME_VARIANTS[name]
        else:
            raise ConfigError(f"unknown variant {name!r}; pick from "
                              f"{sorted(SCALE_VARIANTS) + sorted(SCHEME_VARIANTS)}")
    run = RunDir(args.out)
    try:
        n_per_class = max(1, round(args.samples / len(CLASS_NAMES)))
        spec = DatasetSpec(n_per_class=n_per_class, snr_db=args.snr, seed=args.seed)
        ds = build_dataset(spec)
        data = ds.as_arrays("complex")
        sgd = SGDConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs)

        summary = {}
        rows = ["variant,run,seed,test_acc,test_loss,diverged"]
        for vname, (scheme, scale) in variants.items():
            def one_run(seed, r, scheme=scheme, scale=scale):
                model = _sigmoid_stack(scheme, scale, spec.n_classes, seed, args.activation)
                hist = fit(model, data, sgd)
                if hist.diverged:
                    return {"diverged": True, "test_acc": float("nan"), "test_loss": float("nan")}
                return {"test_acc": hist.test_acc, "test_loss": hist.test_loss}

            per_run, stats = run_repeated(one_run, args.runs, base_seed=args.seed)
            for r, m in enumerate(per_run):
                rows.append(f"{vname},{r},{m['seed']},{m.get('test_acc')!r},"
                            f"{m.get('test_loss')!r},{m['diverged']}")
            summary[vname] = {
                "stats": stats,
                "runs": [m.get("test_acc") for m in per_run],
            }
        medians = {v: summary[v]["stats"]["test_acc"]["median"] for v in variants
                   if "test_acc" in summary[v]["stats"]}
        ordering = sorted(medians, key=medians.get, reverse=True)
        pairwise = {
            f"{a}>{b}": medians[a] > medians[b]
            for a in medians for b in medians if a != b
        }
        doc = {
            "variants": summary,
            "medians": medians,
            "ordering": ordering,
            "pairwise": pairwise,
            "reference_full_scale_medians": FULL_SCALE_MEDIANS,
            "config": _args_dict(args),
        }
        run.write_text("summary.json", json.dumps(doc, indent=2, sort_keys=True))
        run.write_text("runs.csv", "\n".join(rows) + "\n")
        run.manifest("exp-init", _args_dict(args), args.seed)
    except Exception:
        run.cleanup()
        raise
    return 0


def build_cv_model(n_input, n_classes, seed, dropout=0.5):
    """Complex classifier of the comparison study: 25/10 hidden, abs-softmax."""
    layers = [
        ComplexDense(25, "cart_selu"),
        ComplexDropout(dropout),
        ComplexDense(10, "cart_selu"),
        ComplexDropout(dropout),
        ComplexDense(n_classes, "softmax_real_with_abs"),
    ]
    return Model(layers, loss="cce_real", input_shape=(n_input,), seed=seed)


def _histogram_rows(name, values, bins=20):
    counts, edges = np.histogram(values, bins=bins)
    rows = []
    for i, c in enumerate(counts):
        rows.append(f"{name},{edges[i]!r},{edges[i + 1]!r},{int(c)}")
    return rows


def _jackknife_iqr_wins(rv_losses, cv_losses):
    """Count leave-one-out comparisons where the real model's loss IQR
    is at least the complex model's."""
    def iqr(v):
        return float(np.percentile(v, 75) - np.percentile(v, 25))

    n = len(rv_losses)
    wins = 0
    for k in range(n):
        rv = np.delete(rv_losses, k)
        cv = np.delete(cv_losses, k)
        if iqr(rv) >= iqr(cv):
            wins += 1
    return wins


def cmd_exp_cv_rv(args):
    run = RunDir(args.out)
    try:
        classes = ("LinearChirp", "SChirp") if args.task == "binary" else tuple(CLASS_NAMES)
        n_per_class = max(1, round(args.samples / len(classes)))
        spec = DatasetSpec(n_per_class=n_per_class, snr_db=args.snr, seed=args.seed,
                           classes=classes)
        ds = build_dataset(spec)
        data_c = ds.as_arrays("complex")
        data_r = ds.as_arrays("real")
        sgd = SGDConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs)
        n_classes = spec.n_classes

        def one_run(seed, r):
            cv = build_cv_model(spec.length, n_classes, seed)
            cv_hist = fit(cv, data_c, sgd)
            rv = cv.get_real_equivalent(output_multiplier=2.0)
            rv_hist = fit(rv, data_r, sgd)
            if cv_hist.diverged or rv_hist.diverged:
                from .errors import DivergenceError

                raise DivergenceError(f"run {r} diverged")
            return {
                "cv_acc": cv_hist.test_acc, "cv_loss": cv_hist.test_loss,
                "rv_acc": rv_hist.test_acc, "rv_loss": rv_hist.test_loss,
            }

        per_run, stats = run_repeated(one_run, args.runs, base_seed=args.seed)
        ok = [m for m in per_run if not m["diverged"]]
        cv_acc = [m["cv_acc"] for m in ok]
        rv_acc = [m["rv_acc"] for m in ok]
        cv_loss = [m["cv_loss"] for m in ok]
        rv_loss = [m["rv_loss"] for m in ok]
        wins = _jackknife_iqr_wins(np.array(rv_loss), np.array(cv_loss)) if ok else 0
        doc = {
            "task": args.task,
            "stats": stats,
            "median_acc_cv": float(np.median(cv_acc)) if ok else None,
            "median_acc_rv": float(np.median(rv_acc)) if ok else None,
            "median_acc_gap": float(np.median(cv_acc) - np.median(rv_acc)) if ok else None,
            "loss_iqr_cv": float(np.percentile(cv_loss, 75) - np.percentile(cv_loss, 25)) if ok else None,
            "loss_iqr_rv": float(np.percentile(rv_loss, 75) - np.percentile(rv_loss, 25)) if ok else None,
            "rv_iqr_ge_cv_jackknife": wins,
            "n_runs_finished": len(ok),
            "config": _args_dict(args),
        }
        rows = ["series,bin_lo,bin_hi,count"]
        for name, vals in (("cv_acc", cv_acc), ("rv_acc", rv_acc),
                           ("cv_loss", cv_loss), ("rv_loss", rv_loss)):
            if vals:
                rows.extend(_histogram_rows(name, vals))
        runs_rows = ["run,seed,cv_acc,cv_loss,rv_acc,rv_loss,diverged"]
        for r, m in enumerate(per_run):
            runs_rows.append(
                f"{r},{m['seed']},{m.get('cv_acc')!r},{m.get('cv_loss')!r},"
                f"{m.get('rv_acc')!r},{m.get('rv_loss')!r},{m['diverged']}"
            )
        run.write_text("summary.json", json.dumps(doc, indent=2, sort_keys=True))
        run.write_text("histograms.csv", "\n".join(rows) + "\n")
        run.write_text("runs.csv", "\n".join(runs_rows) + "\n")
        run.manifest("exp-cv-rv", _args_dict(args), args.seed)
    except Exception:
        run.cleanup()
        raise
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="cvnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize and persist a signal dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--split-fractions", default="0.8,0.1,0.1")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("exp-init", help="initializer scaling / scheme comparison")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--variants", default="x_sqrt2,original,half")
    p.add_argument("--activation", default="pol_sigmoid",
                   choices=("pol_sigmoid", "cart_sigmoid"))
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_exp_init)

    p = sub.add_parser("exp-cv-rv", help="complex model against its real equivalent")
    p.add_argument("--task", choices=("binary", "full"), default="binary")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_exp_cv_rv)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CvnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
