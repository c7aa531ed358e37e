"""Self-check suites behind the ``diagnose`` CLI command.

Each suite returns a plain dict with the same keys (suite, cases,
max_residual, min_margin, pass) so the CLI can print one uniform JSON
report. Residuals are "how far from the identity", margins are "how
much slack the inequality kept" (negative margin = violation).
"""

from __future__ import annotations

import math

import numpy as np

from . import infotheory as it
from . import tensor as tc
from .losses import infonce_mi, total_objective
from .model import MultiViewModel
from .tensor import Tensor, dense_forward, finite_difference_check, glorot


def _component_net_residual(seed):
    """FD error of a small tanh net under a squared-error head."""
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((4, 3)))
    target = rng.standard_normal((4, 2))
    w1 = Tensor(glorot(rng, 3, 8), requires_grad=True)
    b1 = Tensor(rng.standard_normal(8) * 0.1, requires_grad=True)
    w2 = Tensor(glorot(rng, 8, 2), requires_grad=True)
    b2 = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)

    def loss_fn():
        h = dense_forward(x, w1, b1, "tanh")
        out = dense_forward(h, w2, b2, "identity")
        return tc.mean_all(tc.square(out - Tensor(target)))

    return finite_difference_check(loss_fn, [w1, b1, w2, b2], eps=1e-5)


def _full_model_residual(seed):
    """FD error of the complete objective on a miniature model."""
    rng = np.random.default_rng(seed)
    model = MultiViewModel((3, 3), latent_dim=2, n_clusters=2, hidden=(4,), seed=seed)
    xs = [rng.standard_normal((4, 3)) for _ in range(2)]
    eps = [rng.standard_normal((4, 2)) for _ in range(2)]

    def loss_fn():
        bd = total_objective(
            xs, model, gamma=0.1, beta=0.1, eps_list=eps, lambda_nce=0.5,
            temperature=0.5, supervisory=None,
        )
        return bd.node

    return finite_difference_check(loss_fn, model.param_tensors(), eps=1e-5)


def gradient_suite(n_seeds=5):
    """Backprop vs central differences on nets and the full objective."""
    net_worst = max(_component_net_residual(s) for s in range(n_seeds))
    full_worst = _full_model_residual(12345)
    return {
        "suite": "gradients",
        "cases": n_seeds + 1,
        "max_residual": max(net_worst, full_worst),
        "min_margin": None,
        "pass": bool(net_worst < 1e-6 and full_worst < 1e-5),
    }


def kl_mc_suite(n_cases=10, n_samples=10**5, seed=0):
    """Closed-form diagonal-Gaussian KL against Monte Carlo, in std errors."""
    rng = np.random.default_rng(seed)
    worst_z = 0.0
    anchors = [
        (np.zeros(1), np.ones(1), np.ones(1), np.ones(1)),
        (np.zeros(2), 4.0 * np.ones(2), np.zeros(2), np.ones(2)),
    ]
    cases = list(anchors)
    for _ in range(n_cases):
        d = int(rng.integers(1, 5))
        cases.append(
            (
                rng.normal(0.0, 2.0, d),
                np.exp(rng.normal(0.0, 1.0, d)),
                rng.normal(0.0, 2.0, d),
                np.exp(rng.normal(0.0, 1.0, d)),
            )
        )
    for i, (mp, vp, mq, vq) in enumerate(cases):
        exact = it.closed_form_gaussian_kl(mp, vp, mq, vq)
        est, se = it.mc_gaussian_kl(mp, vp, mq, vq, n_samples=n_samples,
                                    seed=seed + 1000 + i)
        if se == 0.0:  # identical distributions: estimate must be exact
            worst_z = max(worst_z, math.inf if est != exact else 0.0)
        else:
            worst_z = max(worst_z, abs(est - exact) / se)
    return {
        "suite": "kl-mc",
        "cases": len(cases),
        "max_residual": worst_z,
        "min_margin": None,
        "pass": bool(worst_z <= 3.0),
    }


def infotheory_suite(n_random=100, n_constrained=100, n_bound=500, seed=0):
    """Exact identity residuals and inequality margins on random joints."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_random):
        sizes = rng.integers(2, 5, size=3)
        joint = it.random_joint(rng, sizes, axes=("x", "y", "z"))
        worst = max(worst, it.verify_chain_rules(joint).max_residual)
    for _ in range(n_constrained):
        joint = it.random_channel_joint(
            rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)),
            int(rng.integers(2, 5)),
        )
        worst = max(worst, it.verify_decomposition(joint))
    min_margin = math.inf
    for _ in range(n_bound):
        joint = it.random_channel_joint(
            rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)),
            int(rng.integers(2, 5)), n_y=int(rng.integers(2, 5)),
        )
        report = it.verify_redundancy_bounds(joint)
        min_margin = min(min_margin, report.min_margin)
    for _ in range(20):
        joint = it.redundant_sufficient_joint(
            rng, int(rng.integers(2, 6)), int(rng.integers(2, 4))
        )
        worst = max(worst, it.redundancy_equality_residual(joint))
    return {
        "suite": "infotheory",
        "cases": n_random + n_constrained + n_bound + 20,
        "max_residual": worst,
        "min_margin": min_margin,
        "pass": bool(worst < 1e-12 and min_margin >= -1e-12),
    }


def correlated_batch(rng, n, rho):
    """Paired 2-d embeddings whose true MI is -0.5 log(1 - rho^2).

    Coordinate 0 carries the correlated pair; coordinate 1 is
    independent noise on each side so the vectors are never collinear.
    """
    g = rng.standard_normal((n, 4))
    u = g[:, 0]
    v = rho * g[:, 0] + math.sqrt(1.0 - rho * rho) * g[:, 1]
    z_i = np.column_stack([u, g[:, 2]])
    z_j = np.column_stack([v, g[:, 3]])
    return z_i, z_j


def infonce_suite(n_batches=20, batch=512, seed=0, temperature=0.5):
    """Contrastive bound sanity: capped by log n, ordered in rho, and
    never above the analytic mutual information by more than noise."""
    rng = np.random.default_rng(seed)
    rhos = (0.0, 0.5, 0.9)
    means, slacks = [], []
    cap_margin = math.inf
    for rho in rhos:
        vals = []
        for _ in range(n_batches):
            z_i, z_j = correlated_batch(rng, batch, rho)
            val = float(infonce_mi(Tensor(z_i), Tensor(z_j), temperature).data)
            vals.append(val)
            cap_margin = min(cap_margin, math.log(batch) - val)
        mean = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1))
        ref = it.gaussian_mi_reference(rho)
        means.append(mean)
        slacks.append(ref + 3.0 * sd / math.sqrt(n_batches) - mean)
    ordered = means[0] < means[1] < means[2]
    min_margin = min(cap_margin, min(slacks))
    return {
        "suite": "infonce",
        "cases": len(rhos) * n_batches,
        "max_residual": None,
        "min_margin": min_margin,
        "pass": bool(ordered and cap_margin >= -1e-12 and min(slacks) >= 0.0),
    }
