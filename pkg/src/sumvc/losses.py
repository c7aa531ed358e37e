"""Training objectives for the consistent and sufficient variants.

Sign convention: every public value here is reported in *maximized*
form. Reconstruction terms are negated squared errors (<= 0), the
cluster KL penalty enters with weight -gamma, and each cross-view
sufficiency term is -KL(q_i || q_j) plus an optional contrastive
mutual-information bound. ``LossBreakdown.node`` carries the negated
(minimized) scalar that the optimizer actually descends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .model import concat_latents
from .tensor import Tensor

ALL_TERMS = frozenset({"rec", "kl", "suf"})


def recon_loss(x, x_hat):
    """Mean over the batch of per-sample squared reconstruction error."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float64))
    if x.data.shape != x_hat.data.shape:
        raise DimensionError("recon_loss needs x and x_hat of equal shape")
    diff = tc.sub(x_hat, x)
    per_sample = tc.sum_axis(tc.square(diff), axis=1)
    return tc.mean_all(per_sample)


def cluster_kl_loss(zvec, mu, logvar, y, class_means):
    """KL between the per-sample posterior and the label-mixture prior.

    The prior places a unit-covariance Gaussian at each class mean in
    the joint latent space; responsibilities y weight the per-class
    Gaussian KL terms, and the categorical part compares y against the
    uniform distribution over clusters. Returned value is the batch
    mean and is >= 0 up to roundoff.
    """
    n, d = mu.data.shape
    if logvar.data.shape != (n, d):
        raise DimensionError("mu and logvar must share shape")
    if zvec.data.shape != (n, d):
        raise DimensionError("zvec must match the mu/logvar width")
    if y.data.ndim != 2 or y.data.shape[0] != n:
        raise DimensionError("y must be (n, K)")
    k = y.data.shape[1]
    if class_means.data.shape != (k, d):
        raise DimensionError("class_means must be (K, v*d)")
    rows = y.data.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-6) or np.any(y.data < -1e-6):
        raise ContractError("y rows must lie on the probability simplex")

    var = tc.exp(logvar)
    total = None
    for j in range(k):
        mean_j = tc.slice_rows(class_means, j, j + 1)  # (1, d), broadcasts
        diff = tc.sub(mu, mean_j)
        gauss = tc.mul(
            tc.sum_axis(
                tc.sub(tc.add(var, tc.square(diff)), tc.add(logvar, 1.0)), axis=1,
                keepdims=True,
            ),
            0.5,
        )  # (n, 1): KL(N(mu, diag var) || N(mean_j, I)) per sample
        weighted = tc.mul(tc.slice_cols(y, j, j + 1), gauss)
        total = weighted if total is None else tc.add(total, weighted)
    gaussian_part = tc.sum_all(total)
    categorical_part = tc.sum_all(tc.plogp(y, float(k)))  # sum y log(y K)
    return tc.mul(tc.add(gaussian_part, categorical_part), 1.0 / n)


def cross_view_kl(mu_i, logvar_i, mu_j, logvar_j):
    """Batch-mean KL(N(mu_j, var_j) || N(mu_i, var_i)), diagonal Gaussians.

    Argument order follows the alignment term's direction: view i's
    posterior parameters supply the reference covariance.
    """
    shape = mu_i.data.shape
    for t in (logvar_i, mu_j, logvar_j):
        if t.data.shape != shape:
            raise DimensionError("cross_view_kl needs four equally shaped (n,d) tensors")
    dl = tc.sub(logvar_j, logvar_i)
    trace = tc.exp(dl)  # var_j / var_i elementwise
    maha = tc.mul(tc.square(tc.sub(mu_i, mu_j)), tc.exp(tc.neg(logvar_i)))
    per_dim = tc.sub(tc.add(trace, maha), tc.add(dl, 1.0))
    per_sample = tc.mul(tc.sum_axis(per_dim, axis=1), 0.5)
    return tc.mean_all(per_sample)


def infonce_mi(z_i, z_j, temperature=0.5):
    """InfoNCE lower bound on I(z_i; z_j) with cosine similarities.

    Positives pair row r with row r; every other row in the batch is a
    negative. The value is bounded above by log(batch size); a batch of
    one is exactly zero.
    """
    if temperature <= 0.0:
        raise ConfigError("temperature must be positive")
    if z_i.data.shape != z_j.data.shape or z_i.data.ndim != 2:
        raise DimensionError("infonce_mi needs two (n, d) tensors of equal shape")
    n = z_i.data.shape[0]

    def normalize(z):
        sq = tc.sum_axis(tc.square(z), axis=1, keepdims=True)
        if np.any(sq.data <= 0.0):
            raise NumericError("infonce_mi cannot normalize a zero row")
        return tc.div(z, tc.sqrt(sq))

    zi = normalize(z_i)
    zj = normalize(z_j)
    scores = tc.mul(tc.matmul(zi, tc.transpose(zj)), 1.0 / temperature)
    # detached row max keeps logsumexp overflow-free without touching grads
    shift = Tensor(scores.data.max(axis=1, keepdims=True))
    lse = tc.add(
        tc.log(tc.sum_axis(tc.exp(tc.sub(scores, shift)), axis=1, keepdims=True)),
        shift,
    )
    gap = tc.sub(tc.diag_part(scores), tc.reshape(lse, (n,)))
    return tc.add(tc.mean_all(gap), math.log(n))


def suf_loss(lat_i, lat_j, lambda_nce=0.0, temperature=0.5):
    """Sufficiency term for the ordered pair (i, j), maximized form.

    Equals -cross_view_kl(i, j) plus lambda_nce times the contrastive
    bound; the contrastive half is skipped entirely at lambda_nce = 0.
    """
    if lambda_nce < 0.0:
        raise ConfigError("lambda_nce must be non-negative")
    value = tc.neg(cross_view_kl(lat_i.mu, lat_i.logvar, lat_j.mu, lat_j.logvar))
    if lambda_nce > 0.0:
        value = tc.add(
            value, tc.mul(infonce_mi(lat_i.z, lat_j.z, temperature), lambda_nce)
        )
    return value


@dataclass
class LossBreakdown:
    """Per-term values (maximized convention) plus the optimizer node.

    ``total`` always equals sum(rec_i - gamma * kl_i) plus beta times
    the sum of the suf matrix; masked-out terms are reported as zero.
    """

    rec: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    suf: list = field(default_factory=list)
    gamma: float = 0.0
    beta: float = 0.0
    total: float = 0.0
    node: Tensor | None = None

    @property
    def minimized(self):
        return -self.total

    def to_dict(self):
        return {
            "rec": [float(r) for r in self.rec],
            "kl": [float(k) for k in self.kl],
            "suf": [[float(s) for s in row] for row in self.suf],
            "total": float(self.total),
        }


def total_objective(xs, model, gamma, beta, eps_list, lambda_nce=0.0,
                    temperature=0.5, supervisory=None, mask=ALL_TERMS):
    """Full objective for one batch; returns a LossBreakdown.

    ``mask`` selects which term families contribute ("rec", "kl",
    "suf"); excluded families are skipped, not just zero-weighted.
    ``supervisory`` names the view whose latents are detached inside
    every sufficiency term for this step (None disables detaching).
    """
    if gamma < 0.0 or beta < 0.0:
        raise ConfigError("gamma and beta must be non-negative")
    mask = frozenset(mask)
    if not mask or not mask <= ALL_TERMS:
        raise ConfigError(f"mask must be a non-empty subset of {sorted(ALL_TERMS)}")
    v = model.n_views
    if supervisory is not None and not (0 <= supervisory < v):
        raise ConfigError("supervisory view index out of range")

    x_tensors = [Tensor(np.asarray(x, dtype=np.float64)) for x in xs]
    latents = model.encode_batch(x_tensors, eps_list)
    zvec = concat_latents(latents)
    if "kl" in mask:
        # the prior over the joint latent sees the concatenated posterior
        mu_cat = tc.concat_cols([lat.mu for lat in latents])
        lv_cat = tc.concat_cols([lat.logvar for lat in latents])

    bd = LossBreakdown(gamma=float(gamma), beta=float(beta))
    objective = None

    def accumulate(node):
        nonlocal objective
        objective = node if objective is None else tc.add(objective, node)

    for i in range(v):
        if "rec" in mask:
            x_hat = model.decode_view(i, latents[i].z)
            rec = tc.neg(recon_loss(x_tensors[i], x_hat))
            bd.rec.append(float(rec.data))
            accumulate(rec)
        else:
            bd.rec.append(0.0)
        if "kl" in mask:
            y = model.assign_soft_labels(i, latents[i].z)
            kl = cluster_kl_loss(zvec, mu_cat, lv_cat, y, model.class_means)
            bd.kl.append(float(kl.data))
            accumulate(tc.mul(kl, -gamma))
        else:
            bd.kl.append(0.0)

    bd.suf = [[0.0] * v for _ in range(v)]
    if "suf" in mask and v > 1:
        suf_sum = None
        for i in range(v):
            for j in range(v):
                if i == j:
                    continue
                lat_i = latents[i]
                lat_j = latents[j]
                if supervisory is not None:
                    if i == supervisory:
                        lat_i = lat_i.detached()
                    if j == supervisory:
                        lat_j = lat_j.detached()
                term = suf_loss(lat_i, lat_j, lambda_nce, temperature)
                bd.suf[i][j] = float(term.data)
                suf_sum = term if suf_sum is None else tc.add(suf_sum, term)
        accumulate(tc.mul(suf_sum, beta))

    if objective is None:
        raise ConfigError("objective is empty for this mask and view count")
    bd.total = float(objective.data)
    bd.node = tc.neg(objective)
    return bd


def scmvc_loss(xs, model, gamma, eps_list):
    """Consistency-only objective: reconstruction minus gamma * cluster KL."""
    return total_objective(
        xs, model, gamma=gamma, beta=0.0, eps_list=eps_list, mask=frozenset({"rec", "kl"})
    )
