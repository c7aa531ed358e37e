"""Training loops, evaluation, and the ablation driver.

A run has up to two phases: a reconstruction-only warmup (a fixed
fraction of the epoch budget) and the main phase with the requested
objective. After the warmup the class means are re-seeded with k-means
centroids of the deterministic joint latent. In the sufficiency phase
the supervisory view rotates with the step index and its latents are
detached inside every cross-view term for that step.

All randomness (shuffles, reparameterization noise) comes from one
generator seeded by the config, so a run is reproducible bit for bit
apart from wall-clock time.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericAbort, NumericError
from .losses import ALL_TERMS, total_objective
from .metrics import ari, clustering_accuracy, kmeans, nmi
from .model import MultiViewModel
from .tensor import AdamState, Tape, adam_step

ABLATION_ORDER = (
    ("rec", frozenset({"rec"})),
    ("rec+kl", frozenset({"rec", "kl"})),
    ("suf", frozenset({"suf"})),
    ("rec+kl+suf", frozenset({"rec", "kl", "suf"})),
)

_EVAL_RESTARTS = 10
_EVAL_CHUNK = 4096


@dataclass
class TrainConfig:
    mode: str
    n_clusters: int
    latent_dim: int
    epochs: int
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    gamma: float = 0.1
    beta: float = 0.1
    lambda_nce: float = 0.0
    temperature: float = 0.5
    hidden: tuple = (256, 256)
    shared_backbone: bool = False
    pretrain_fraction: float = 0.3
    ablation: frozenset | None = None

    def __post_init__(self):
        if self.mode not in ("pretrain", "scmvc", "sumvc"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.n_clusters < 2:
            raise ConfigError("n_clusters must be >= 2")
        if self.latent_dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("latent_dim, epochs, batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if self.gamma < 0.0 or self.beta < 0.0 or self.lambda_nce < 0.0:
            raise ConfigError("gamma, beta, lambda_nce must be non-negative")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be positive")
        if not 0.0 <= self.pretrain_fraction < 1.0:
            raise ConfigError("pretrain_fraction must lie in [0, 1)")
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.ablation is not None:
            mask = frozenset(self.ablation)
            if not mask or not mask <= ALL_TERMS:
                raise ConfigError(
                    f"ablation must be a non-empty subset of {sorted(ALL_TERMS)}"
                )
            self.ablation = mask

    def effective_mask(self):
        if self.ablation is not None:
            return self.ablation
        if self.mode == "pretrain":
            return frozenset({"rec"})
        if self.mode == "scmvc":
            return frozenset({"rec", "kl"})
        return ALL_TERMS

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["ablation"] = sorted(self.ablation) if self.ablation is not None else None
        return d


@dataclass
class TrainReport:
    config: dict
    epochs: list
    metrics: dict | None
    wall_time_s: float
    seed: int

    def to_json(self):
        return json.dumps(
            {
                "config": self.config,
                "epochs": self.epochs,
                "metrics": self.metrics,
                "wall_time_s": self.wall_time_s,
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            config=d["config"],
            epochs=d["epochs"],
            metrics=d["metrics"],
            wall_time_s=d["wall_time_s"],
            seed=d["seed"],
        )


@dataclass
class EvalResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    acc: float | None = None
    nmi: float | None = None
    ari: float | None = None

    def metrics_dict(self):
        return {"acc": self.acc, "nmi": self.nmi, "ari": self.ari,
                "inertia": self.inertia}


def _phases(cfg):
    """(mask, n_epochs, refresh_after) triples for this config."""
    mask = cfg.effective_mask()
    if mask == frozenset({"rec"}):
        return [(mask, cfg.epochs, True)]
    if "rec" in mask and cfg.pretrain_fraction > 0.0:
        pre = int(round(cfg.pretrain_fraction * cfg.epochs))
        pre = min(max(pre, 0), cfg.epochs - 1)
        if pre > 0:
            return [
                (frozenset({"rec"}), pre, True),
                (mask, cfg.epochs - pre, False),
            ]
    return [(mask, cfg.epochs, False)]


def _refresh_class_means(model, data, cfg):
    zbar = encode_dataset(model, data)
    result = kmeans(zbar, cfg.n_clusters, restarts=_EVAL_RESTARTS, seed=cfg.seed)
    model.class_means.data = result.centroids.astype(np.float64)


def encode_dataset(model, data):
    """Deterministic joint latent (z = mu) for every sample, chunked."""
    parts = []
    for lo in range(0, data.n, _EVAL_CHUNK):
        chunk = [v[lo:lo + _EVAL_CHUNK] for v in data.views]
        parts.append(model.encode_mean(chunk))
    return np.concatenate(parts, axis=0)


def _mean_of(values):
    return float(np.mean(values)) if values else 0.0


def train(data, cfg, model=None):
    """Run the configured training; returns (model, TrainReport)."""
    if cfg.batch_size > data.n:
        raise ConfigError("batch_size cannot exceed the sample count")
    mask = cfg.effective_mask()
    if "suf" in mask and data.n_views < 2:
        raise ConfigError("sufficiency terms need at least two views")
    if model is None:
        model = MultiViewModel(
            data.dims, cfg.latent_dim, cfg.n_clusters, hidden=cfg.hidden,
            shared_backbone=cfg.shared_backbone, seed=cfg.seed,
        )
    elif model.view_dims != data.dims:
        raise ConfigError("model view dimensions do not match the dataset")

    start = time.perf_counter()
    xs = [v.astype(np.float64) for v in data.views]
    v = data.n_views
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    params = model.param_tensors()
    state = AdamState(lr=cfg.lr)
    epoch_logs = []
    beta = cfg.beta if cfg.mode == "sumvc" else 0.0
    step = 0

    for phase_mask, n_epochs, refresh_after in _phases(cfg):
        cycling = "suf" in phase_mask and v >= 2
        for _ in range(n_epochs):
            order = rng.permutation(data.n)
            batch_recs, batch_kls, batch_totals = [], [], []
            batch_sufs = []
            for lo in range(0, data.n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                xb = [x[idx] for x in xs]
                eps = [rng.standard_normal((idx.size, cfg.latent_dim)) for _ in range(v)]
                sup = (step % v) if cycling else None
                try:
                    with Tape() as tape:
                        bd = total_objective(
                            xb, model, gamma=cfg.gamma, beta=beta, eps_list=eps,
                            lambda_nce=cfg.lambda_nce, temperature=cfg.temperature,
                            supervisory=sup, mask=phase_mask,
                        )
                        if not math.isfinite(bd.total):
                            raise NumericError("non-finite loss value")
                        grads = tape.backward(bd.node, params)
                except NumericError as exc:
                    partial = _report(cfg, epoch_logs, None, start)
                    raise NumericAbort(
                        f"non-finite loss at epoch {len(epoch_logs)}, step {step} "
                        f"({exc}); last finite epoch index {len(epoch_logs) - 1}",
                        report=partial,
                    ) from exc
                adam_step(params, grads, state)
                step += 1
                batch_recs.append(bd.rec)
                batch_kls.append(bd.kl)
                batch_sufs.append(bd.suf)
                batch_totals.append(bd.total)
            epoch_logs.append(
                {
                    "rec": list(np.mean(batch_recs, axis=0)),
                    "kl": list(np.mean(batch_kls, axis=0)),
                    "suf": [list(row) for row in np.mean(batch_sufs, axis=0)],
                    "total": _mean_of(batch_totals),
                }
            )
        if refresh_after:
            _refresh_class_means(model, data, cfg)

    metrics = None
    if data.labels is not None:
        result = evaluate(model, data, cfg.n_clusters, seed=cfg.seed)
        metrics = result.metrics_dict()
    return model, _report(cfg, epoch_logs, metrics, start)


def _report(cfg, epoch_logs, metrics, start):
    return TrainReport(
        config=cfg.to_dict(),
        epochs=epoch_logs,
        metrics=metrics,
        wall_time_s=time.perf_counter() - start,
        seed=cfg.seed,
    )


def pretrain(data, cfg, model=None):
    if cfg.mode != "pretrain":
        raise ConfigError("pretrain() needs mode='pretrain'")
    return train(data, cfg, model)


def train_scmvc(data, cfg, model=None):
    if cfg.mode != "scmvc":
        raise ConfigError("train_scmvc() needs mode='scmvc'")
    return train(data, cfg, model)


def train_sumvc(data, cfg, model=None):
    if cfg.mode != "sumvc":
        raise ConfigError("train_sumvc() needs mode='sumvc'")
    return train(data, cfg, model)


def evaluate(model, data, n_clusters=None, seed=0):
    """Cluster the deterministic latents and score against labels."""
    k = model.n_clusters if n_clusters is None else int(n_clusters)
    zbar = encode_dataset(model, data)
    result = kmeans(zbar, k, restarts=_EVAL_RESTARTS, seed=seed)
    out = EvalResult(
        assignments=result.partition.labels,
        centroids=result.centroids,
        inertia=result.inertia,
    )
    if data.labels is not None:
        out.acc = clustering_accuracy(result.partition.labels, data.labels)
        out.nmi = nmi(result.partition.labels, data.labels)
        out.ari = ari(result.partition.labels, data.labels)
    return out


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationGrid:
    rows: list
    reports: dict = field(default_factory=dict)

    def to_csv(self):
        lines = ["mask,acc,nmi,ari"]
        for row in self.rows:
            lines.append(
                f"{row['mask']},{row['acc']:.6f},{row['nmi']:.6f},{row['ari']:.6f}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps({"rows": self.rows}, indent=2)


def _ablation_cell(args):
    data, cfg_kwargs, mask = args
    cfg = TrainConfig(**cfg_kwargs, ablation=mask)
    _, report = train(data, cfg)
    return report


def ablate(data, cfg, parallel=False):
    """Train one run per term mask and tabulate ACC/NMI/ARI.

    Row order is fixed: rec; rec+kl; suf; rec+kl+suf. Every run uses
    the same seed and epoch budget; masks without "rec" skip the
    reconstruction warmup entirely. ``MVC_THREADS`` caps the worker
    count when ``parallel`` is set.
    """
    if data.labels is None:
        raise ConfigError("ablation needs labeled data")
    base = cfg.to_dict()
    base.pop("ablation")
    base["mode"] = "sumvc"
    base["hidden"] = tuple(base["hidden"])
    jobs = [(data, base, mask) for _, mask in ABLATION_ORDER]
    if parallel:
        limit = int(os.environ.get("MVC_THREADS", os.cpu_count() or 1))
        workers = max(1, min(len(jobs), limit))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_ablation_cell, jobs))
    else:
        reports = [_ablation_cell(job) for job in jobs]
    grid = AblationGrid(rows=[])
    for (name, _), report in zip(ABLATION_ORDER, reports):
        m = report.metrics
        grid.rows.append(
            {"mask": name, "acc": m["acc"], "nmi": m["nmi"], "ari": m["ari"]}
        )
        grid.reports[name] = report
    return grid
