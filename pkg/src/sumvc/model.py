"""Per-view variational encoders, decoders, and the clustering head.

Each view i gets an encoder producing a diagonal Gaussian (mu, logvar)
over a shared latent dimension d, a decoder mapping a latent back to
that view's feature space, and a label head turning the latent into
soft cluster assignments. Class means live in the concatenated latent
space (dimension v * d).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .errors import ConfigError, DimensionError, FormatError
from .tensor import Tensor

LOGVAR_CLAMP = 10.0

CHECKPOINT_MAGIC = b"MVCK"
CHECKPOINT_VERSION = 1


class Dense:
    """One affine layer with a fixed activation."""

    def __init__(self, weight, bias, activation):
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)
        self.activation = activation

    def __call__(self, x):
        return tc.dense_forward(x, self.weight, self.bias, self.activation)


def _build_mlp(rng, sizes, hidden_activation):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append(
            Dense(tc.glorot(rng, fan_in, fan_out), np.zeros(fan_out), hidden_activation)
        )
    return layers


class ViewEncoder:
    """MLP trunk with separate mu and logvar heads; logvar is clamped."""

    def __init__(self, rng, in_dim, hidden, latent_dim):
        sizes = (in_dim,) + tuple(hidden)
        self.trunk = _build_mlp(rng, sizes, "tanh")
        top = sizes[-1]
        self.mu_head = Dense(tc.glorot(rng, top, latent_dim), np.zeros(latent_dim), "identity")
        self.logvar_head = Dense(
            tc.glorot(rng, top, latent_dim), np.zeros(latent_dim), "identity"
        )

    def __call__(self, x):
        h = x
        for layer in self.trunk:
            h = layer(h)
        mu = self.mu_head(h)
        logvar = tc.clip(self.logvar_head(h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def layers(self):
        return list(self.trunk) + [self.mu_head, self.logvar_head]


class ViewDecoder:
    """MLP from latent back to the view's feature space."""

    def __init__(self, rng, latent_dim, hidden, out_dim):
        sizes = (latent_dim,) + tuple(reversed(tuple(hidden)))
        self.trunk = _build_mlp(rng, sizes, "tanh")
        self.out = Dense(tc.glorot(rng, sizes[-1], out_dim), np.zeros(out_dim), "identity")

    def __call__(self, z):
        h = z
        for layer in self.trunk:
            h = layer(h)
        return self.out(h)

    def layers(self):
        return list(self.trunk) + [self.out]


class ClusterHead:
    """Soft labels from a per-view latent via a linear layer + softmax."""

    def __init__(self, rng, latent_dim, n_clusters):
        if n_clusters < 2:
            raise ConfigError("cluster head needs at least 2 clusters")
        self.linear = Dense(
            tc.glorot(rng, latent_dim, n_clusters), np.zeros(n_clusters), "identity"
        )

    def __call__(self, z):
        return tc.softmax_rows(self.linear(z))


@dataclass
class ViewLatent:
    """Encoder output for one view plus the sampled latent."""

    mu: Tensor
    logvar: Tensor
    z: Tensor
    eps: np.ndarray

    def detached(self):
        return ViewLatent(
            self.mu.detach(), self.logvar.detach(), self.z.detach(), self.eps
        )


def reparameterize(mu, logvar, eps):
    """z = mu + exp(logvar / 2) * eps with externally supplied noise."""
    if not isinstance(mu, Tensor):
        mu = Tensor(mu)
    if not isinstance(logvar, Tensor):
        logvar = Tensor(logvar)
    eps_arr = np.asarray(eps, dtype=np.float64)
    if eps_arr.shape != mu.data.shape or mu.data.shape != logvar.data.shape:
        raise DimensionError("reparameterize needs mu, logvar, eps of equal shape")
    std = tc.exp(tc.mul(logvar, 0.5))
    return tc.add(mu, tc.mul(std, Tensor(eps_arr)))


def concat_latents(latents):
    """Stack per-view z tensors into the joint latent (n, v * d)."""
    if not latents:
        raise DimensionError("concat_latents needs at least one view")
    rows = latents[0].z.data.shape[0]
    for lat in latents:
        if lat.z.data.shape[0] != rows:
            raise DimensionError("latents must share the batch size")
    return tc.concat_cols([lat.z for lat in latents])


class MultiViewModel:
    """All per-view networks plus the class means, with named parameters.

    ``shared_backbone=True`` ties the encoder trunks across views
    (requires identical view dimensions); heads stay per-view.
    """

    def __init__(self, view_dims, latent_dim, n_clusters, hidden=(256, 256),
                 shared_backbone=False, seed=0):
        view_dims = tuple(int(d) for d in view_dims)
        if len(view_dims) < 1 or any(d < 1 for d in view_dims):
            raise ConfigError("view_dims must be positive")
        if latent_dim < 1:
            raise ConfigError("latent_dim must be positive")
        if n_clusters < 2:
            raise ConfigError("need at least 2 clusters")
        if shared_backbone and len(set(view_dims)) != 1:
            raise ConfigError("shared backbone requires equal view dimensions")
        self.view_dims = view_dims
        self.latent_dim = int(latent_dim)
        self.n_clusters = int(n_clusters)
        self.hidden = tuple(int(h) for h in hidden)
        self.shared_backbone = bool(shared_backbone)
        self.seed = int(seed)

        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
        v = len(view_dims)
        self.encoders = []
        shared_enc = None
        for i in range(v):
            if self.shared_backbone:
                if shared_enc is None:
                    shared_enc = ViewEncoder(rng, view_dims[i], self.hidden, latent_dim)
                self.encoders.append(shared_enc)
            else:
                self.encoders.append(ViewEncoder(rng, view_dims[i], self.hidden, latent_dim))
        self.decoders = [
            ViewDecoder(rng, latent_dim, self.hidden, view_dims[i]) for i in range(v)
        ]
        self.heads = [ClusterHead(rng, latent_dim, n_clusters) for _ in range(v)]
        self.class_means = Tensor(
            0.1 * rng.standard_normal((n_clusters, v * latent_dim)), requires_grad=True
        )

    @property
    def n_views(self):
        return len(self.view_dims)

    def parameters(self):
        """(name, tensor) pairs in a stable order; shared tensors appear once."""
        out = []
        seen = set()

        def push(name, t):
            if id(t) not in seen:
                seen.add(id(t))
                out.append((name, t))

        for i, enc in enumerate(self.encoders):
            tag = "enc" if self.shared_backbone else f"enc{i}"
            for k, layer in enumerate(enc.trunk):
                push(f"{tag}.l{k}.W", layer.weight)
                push(f"{tag}.l{k}.b", layer.bias)
            push(f"{tag}.mu.W", enc.mu_head.weight)
            push(f"{tag}.mu.b", enc.mu_head.bias)
            push(f"{tag}.lv.W", enc.logvar_head.weight)
            push(f"{tag}.lv.b", enc.logvar_head.bias)
        for i, dec in enumerate(self.decoders):
            for k, layer in enumerate(dec.trunk):
                push(f"dec{i}.l{k}.W", layer.weight)
                push(f"dec{i}.l{k}.b", layer.bias)
            push(f"dec{i}.out.W", dec.out.weight)
            push(f"dec{i}.out.b", dec.out.bias)
        for i, head in enumerate(self.heads):
            push(f"head{i}.W", head.linear.weight)
            push(f"head{i}.b", head.linear.bias)
        push("class_means", self.class_means)
        return out

    def param_tensors(self):
        return [t for _, t in self.parameters()]

    def encode_view(self, i, x):
        return self.encoders[i](x)

    def decode_view(self, i, z):
        return self.decoders[i](z)

    def assign_soft_labels(self, i, z):
        return self.heads[i](z)

    def encode_batch(self, xs, eps_list):
        """Run every encoder and sample z; returns a ViewLatent per view."""
        if len(xs) != self.n_views or len(eps_list) != self.n_views:
            raise DimensionError("need one input and one noise array per view")
        latents = []
        for i, (x, eps) in enumerate(zip(xs, eps_list)):
            mu, logvar = self.encode_view(i, x)
            z = reparameterize(mu, logvar, eps)
            latents.append(ViewLatent(mu, logvar, z, np.asarray(eps)))
        return latents

    def encode_mean(self, views):
        """Deterministic joint latent (z = mu per view), as a plain array."""
        parts = []
        for i in range(self.n_views):
            mu, _ = self.encode_view(i, Tensor(np.asarray(views[i], dtype=np.float64)))
            parts.append(mu.data)
        return np.concatenate(parts, axis=1)


# ---------------------------------------------------------------------------
# checkpoint format: magic "MVCK", u32 version, u32 count, then per entry
# u16 name length + UTF-8 name, u32 rank, rank * u32 dims, float64 LE data.


def save_checkpoint(model, path):
    blob = bytearray()
    params = model.parameters()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(params))
    for name, t in params:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        arr = t.data
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Cursor:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(model, path):
    """Load parameters by name into ``model`` (shapes must match)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf)
    if cur.take(4, "magic") != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    (version, count) = cur.unpack("<II", "header")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    stored = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H", "name length")
        name = cur.take(name_len, "name").decode("utf-8")
        (rank,) = cur.unpack("<I", "rank")
        if rank > 8:
            raise FormatError(f"implausible rank {rank} for {name}", cur.pos - 4)
        shape = cur.unpack(f"<{rank}I", "dims") if rank else ()
        n_elem = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = cur.take(8 * n_elem, f"data of {name}")
        stored[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if cur.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint payload", cur.pos)

    params = dict(model.parameters())
    if set(stored) != set(params):
        missing = sorted(set(params) - set(stored))
        extra = sorted(set(stored) - set(params))
        raise FormatError(
            f"parameter names do not match model (missing={missing}, extra={extra})"
        )
    for name, arr in stored.items():
        target = params[name]
        if arr.shape != target.data.shape:
            raise DimensionError(
                f"checkpoint shape {arr.shape} != model shape {target.data.shape} for {name}"
            )
        target.data = arr.copy()
    return model
