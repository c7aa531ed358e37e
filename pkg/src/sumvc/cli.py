"""Command-line front end.

Subcommands: gen (synthesize or convert datasets), train, eval,
ablate, diagnose. Every command prints exactly one JSON document to
stdout and human-readable progress to stderr, and writes files only
under its --out / run directory.

Exit codes: 0 success, 1 generic failure (including a failing
diagnostic suite), 2 usage or bad option values, 3 numeric abort
during training, 4 unreadable or invalid data artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import diagnostics
from .data import (
    MultiViewDataset,
    from_csv,
    gen_synthetic_gmm,
    load_mvds,
    pair_by_class,
    save_mvds,
    standardize_views,
)
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    NumericAbort,
    SumvcError,
)
from .model import MultiViewModel, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, ablate, encode_dataset, evaluate, train

SENTINEL = ".incomplete"


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(doc):
    print(json.dumps(doc, indent=2))


def _parse_ints(text, flag):
    try:
        return tuple(int(p) for p in text.split(",") if p != "")
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated integers") from exc


def _load_dataset(path, standardize=False):
    if not os.path.exists(path):
        raise FormatError(f"dataset not found: {path}")
    ds = load_mvds(path)
    if standardize:
        labels = ds.labels
        ds = standardize_views(ds)
        ds.labels = labels
    return ds


# ---------------------------------------------------------------------------
# gen


def _cmd_gen(args):
    if args.kind == "gmm":
        dims = _parse_ints(args.dims, "--dims")
        ds = gen_synthetic_gmm(
            n_clusters=args.k, n_views=args.views, dims=dims, n_samples=args.n,
            separation=args.sep, noise=args.noise, seed=args.seed,
        )
    elif args.kind == "csv":
        if not args.csv:
            raise ConfigError("--kind csv needs at least one --csv path")
        ds = from_csv(args.csv, labels_path=args.labels)
    else:  # pair
        if len(args.csv or []) != 1 or args.labels is None:
            raise ConfigError("--kind pair needs exactly one --csv and --labels")
        feats = from_csv(args.csv, labels_path=args.labels)
        ds = pair_by_class(
            feats.views[0], feats.labels, n_views=args.views, seed=args.seed
        )
    save_mvds(ds, args.out)
    _say(f"wrote {args.out}: n={ds.n} views={ds.n_views} dims={ds.dims}")
    _emit(
        {
            "out": args.out,
            "n": ds.n,
            "views": ds.n_views,
            "dims": list(ds.dims),
            "classes": ds.n_classes if ds.labels is not None else None,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# train


def _train_config_from_args(args, data):
    clusters = args.clusters
    if clusters is None:
        if data.labels is None:
            raise ConfigError("--clusters is required for unlabeled data")
        clusters = data.n_classes
    beta = 0.1 if args.beta is None else args.beta
    if args.model == "scmvc" and args.beta is not None:
        _say("warning: --beta has no effect with --model scmvc; ignoring")
        beta = 0.0
    fraction = args.pretrain_fraction
    if fraction is None:
        fraction = 0.0 if getattr(args, "init_from", None) else 0.3
    return TrainConfig(
        mode=args.model,
        n_clusters=clusters,
        latent_dim=args.latent_dim,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        gamma=args.gamma,
        beta=beta,
        lambda_nce=args.lambda_nce,
        temperature=args.tau,
        hidden=_parse_ints(args.hidden, "--hidden"),
        shared_backbone=args.shared_backbone,
        pretrain_fraction=fraction,
    )


def _resolve_checkpoint(path):
    if os.path.isdir(path):
        if os.path.exists(os.path.join(path, SENTINEL)):
            raise FormatError(f"run {path} is incomplete")
        return os.path.join(path, "model.mvck")
    return path


def _cmd_train(args):
    data = _load_dataset(args.data, args.standardize)
    cfg = _train_config_from_args(args, data)
    os.makedirs(args.out, exist_ok=True)
    sentinel = os.path.join(args.out, SENTINEL)
    with open(sentinel, "w") as fh:
        fh.write("training in progress\n")
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump(
            {
                "config": cfg.to_dict(),
                "view_dims": list(data.dims),
                "standardize": bool(args.standardize),
                "data": os.path.abspath(args.data),
            },
            fh,
            indent=2,
        )
        fh.write("\n")

    model = None
    if args.init_from:
        model = MultiViewModel(
            data.dims, cfg.latent_dim, cfg.n_clusters, hidden=cfg.hidden,
            shared_backbone=cfg.shared_backbone, seed=cfg.seed,
        )
        load_checkpoint(model, _resolve_checkpoint(args.init_from))
        _say(f"initialized parameters from {args.init_from}")

    _say(
        f"training {cfg.mode} on {args.data}: n={data.n} views={data.n_views} "
        f"k={cfg.n_clusters} epochs={cfg.epochs}"
    )
    model, report = train(data, cfg, model)
    save_checkpoint(model, os.path.join(args.out, "model.mvck"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    if report.metrics is not None:
        with open(os.path.join(args.out, "metrics.json"), "w") as fh:
            json.dump(report.metrics, fh, indent=2)
            fh.write("\n")
        _say(
            "metrics: "
            + " ".join(f"{k}={v:.4f}" for k, v in report.metrics.items())
        )
    os.remove(sentinel)
    _say(f"run complete in {report.wall_time_s:.1f}s -> {args.out}")
    _emit(
        {
            "out": args.out,
            "metrics": report.metrics,
            "wall_time_s": report.wall_time_s,
            "epochs": len(report.epochs),
        }
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def _load_run(run_dir):
    if not os.path.isdir(run_dir):
        raise FormatError(f"run directory not found: {run_dir}")
    if os.path.exists(os.path.join(run_dir, SENTINEL)):
        raise FormatError(f"run {run_dir} is incomplete")
    cfg_path = os.path.join(run_dir, "config.json")
    ckpt_path = os.path.join(run_dir, "model.mvck")
    if not os.path.exists(cfg_path) or not os.path.exists(ckpt_path):
        raise FormatError(f"run {run_dir} is missing config.json or model.mvck")
    with open(cfg_path) as fh:
        meta = json.load(fh)
    return meta, ckpt_path


def _project2d(z):
    centered = z - z.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[: min(2, vt.shape[0])]
    fixed = []
    for comp in comps:
        j = int(np.argmax(np.abs(comp)))
        fixed.append(-comp if comp[j] < 0 else comp)
    proj = centered @ np.stack(fixed).T
    if proj.shape[1] < 2:  # 1-d latent: pad the second coordinate
        proj = np.column_stack([proj, np.zeros(proj.shape[0])])
    return proj


def _cmd_eval(args):
    meta, ckpt_path = _load_run(args.run)
    cfg = meta["config"]
    data = _load_dataset(args.data, meta.get("standardize", False))
    model = MultiViewModel(
        data.dims, cfg["latent_dim"], cfg["n_clusters"],
        hidden=tuple(cfg["hidden"]), shared_backbone=cfg["shared_backbone"],
        seed=cfg["seed"],
    )
    load_checkpoint(model, ckpt_path)
    seed = cfg["seed"] if args.seed is None else args.seed
    result = evaluate(model, data, cfg["n_clusters"], seed=seed)
    doc = {
        "acc": result.acc,
        "nmi": result.nmi,
        "ari": result.ari,
        "inertia": result.inertia,
        "n": data.n,
        "k": cfg["n_clusters"],
    }
    with open(os.path.join(args.run, "metrics.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if args.export_embeddings or args.project2d:
        zbar = encode_dataset(model, data)
        if args.export_embeddings:
            emb = MultiViewDataset(
                views=[zbar.astype(np.float32)], labels=data.labels,
                provenance=f"embeddings({args.run})",
            )
            save_mvds(emb, args.export_embeddings)
            _say(f"wrote embeddings -> {args.export_embeddings}")
        if args.project2d:
            proj = _project2d(zbar)
            labels = (
                data.labels
                if data.labels is not None
                else -np.ones(data.n, dtype=np.int64)
            )
            with open(args.project2d, "w") as fh:
                for row, lab in zip(proj, labels):
                    fh.write(f"{row[0]:.8g},{row[1]:.8g},{int(lab)}\n")
            _say(f"wrote 2-d projection -> {args.project2d}")
    _say(
        "eval: "
        + " ".join(
            f"{k}={v:.4f}" for k, v in doc.items() if isinstance(v, float)
        )
    )
    _emit(doc)
    return 0


# ---------------------------------------------------------------------------
# ablate


def _cmd_ablate(args):
    data = _load_dataset(args.data, args.standardize)
    cfg = _train_config_from_args(args, data)
    os.makedirs(args.out, exist_ok=True)
    _say(f"ablation on {args.data} (parallel={bool(args.parallel)})")
    grid = ablate(data, cfg, parallel=args.parallel)
    with open(os.path.join(args.out, "ablation.csv"), "w") as fh:
        fh.write(grid.to_csv())
    with open(os.path.join(args.out, "ablation.json"), "w") as fh:
        fh.write(grid.to_json() + "\n")
    for name, report in grid.reports.items():
        safe = name.replace("+", "_")
        with open(os.path.join(args.out, f"report_{safe}.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
    for row in grid.rows:
        _say(
            f"  {row['mask']:<12} acc={row['acc']:.4f} "
            f"nmi={row['nmi']:.4f} ari={row['ari']:.4f}"
        )
    _emit({"out": args.out, "rows": grid.rows})
    return 0


# ---------------------------------------------------------------------------
# diagnose


def _cmd_diagnose(args):
    if args.suite == "gradients":
        report = diagnostics.gradient_suite(n_seeds=args.seeds)
    elif args.suite == "kl-mc":
        report = diagnostics.kl_mc_suite(
            n_cases=args.seeds, n_samples=args.samples
        )
    elif args.suite == "infotheory":
        report = diagnostics.infotheory_suite(
            n_random=args.seeds, n_constrained=args.seeds, n_bound=args.seeds
        )
    else:  # infonce
        report = diagnostics.infonce_suite(n_batches=args.seeds)
    _say(f"suite {report['suite']}: {'pass' if report['pass'] else 'FAIL'}")
    _emit(report)
    return 0 if report["pass"] else 1


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="sumvc",
        description="Variational multi-view clustering: train, evaluate, diagnose.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate or convert a dataset")
    g.add_argument("--kind", choices=("gmm", "csv", "pair"), default="gmm")
    g.add_argument("--k", type=int, default=5, help="number of mixture components")
    g.add_argument("--views", type=int, default=2)
    g.add_argument("--dims", default="50,50", help="comma-separated view widths")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--sep", type=float, default=8.0, help="cluster mean radius")
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--csv", nargs="+", help="input CSVs (kinds csv and pair)")
    g.add_argument("--labels", help="label file for csv/pair inputs")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    def add_train_flags(sp, with_model=True):
        sp.add_argument("--data", required=True)
        if with_model:
            sp.add_argument("--model", choices=("scmvc", "sumvc"), default="sumvc")
        sp.add_argument("--gamma", type=float, default=0.1)
        sp.add_argument("--beta", type=float, default=None)
        sp.add_argument("--lambda-nce", dest="lambda_nce", type=float, default=0.0)
        sp.add_argument("--latent-dim", dest="latent_dim", type=int, default=10)
        sp.add_argument("--clusters", type=int, default=None)
        sp.add_argument("--epochs", type=int, default=200)
        sp.add_argument("--batch", type=int, default=256)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--hidden", default="256,256")
        sp.add_argument("--tau", type=float, default=0.5,
                        help="contrastive temperature")
        sp.add_argument("--pretrain-fraction", dest="pretrain_fraction",
                        type=float, default=None)
        sp.add_argument("--shared-backbone", action="store_true")
        sp.add_argument("--standardize", action="store_true")
        sp.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model and write a run directory")
    add_train_flags(t)
    t.add_argument("--init-from", dest="init_from",
                   help="run directory or .mvck checkpoint to start from")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a finished run on a dataset")
    e.add_argument("--run", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--export-embeddings", dest="export_embeddings")
    e.add_argument("--project2d")
    e.set_defaults(func=_cmd_eval)

    a = sub.add_parser("ablate", help="train all term masks and tabulate metrics")
    add_train_flags(a, with_model=False)
    a.add_argument("--parallel", action="store_true")
    a.set_defaults(func=_cmd_ablate)

    d = sub.add_parser("diagnose", help="run a self-check suite")
    d.add_argument("--suite", required=True,
                   choices=("gradients", "kl-mc", "infotheory", "infonce"))
    d.add_argument("--seeds", type=int, default=None,
                   help="case count (suite-specific default)")
    d.add_argument("--samples", type=int, default=10**5,
                   help="Monte Carlo samples per kl-mc case")
    d.set_defaults(func=_cmd_diagnose)
    return p


_DIAG_DEFAULT_SEEDS = {"gradients": 5, "kl-mc": 10, "infotheory": 100, "infonce": 20}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "ablate":
        args.model = "sumvc"
    if args.command == "diagnose" and args.seeds is None:
        args.seeds = _DIAG_DEFAULT_SEEDS[args.suite]
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        _say(f"error: {exc}")
        return 2
    except NumericAbort as exc:
        _say(f"numeric abort: {exc}")
        return 3
    except (FormatError, DataError) as exc:
        _say(f"bad input: {exc}")
        return 4
    except SumvcError as exc:
        _say(f"error: {exc}")
        return 1
    except OSError as exc:
        _say(f"io error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
