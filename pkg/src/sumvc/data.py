"""Multi-view datasets: generation, pairing, and serialization.

Features are held as float32 (what the MVDS container stores);
training code upcasts to float64 at the batch boundary. The MVDS
layout is little-endian throughout:

    magic "MVDS" | u32 version=1 | u32 n_views | u64 n_samples |
    u8 has_labels | n_views * u32 dims | [n_samples * i64 labels] |
    per view: row-major n_samples * dim float32

so a file round-trips bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError

MVDS_MAGIC = b"MVDS"
MVDS_VERSION = 1
_MAX_DIM = 2**31  # one axis above this is a corrupt header, not a dataset


@dataclass
class MultiViewDataset:
    """Per-view feature matrices plus optional integer labels."""

    views: list
    labels: np.ndarray | None = None
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.views:
            raise DataError("need at least one view")
        views = []
        n = None
        for x in self.views:
            arr = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
            if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
                raise DataError("each view must be a non-empty (n, d) matrix")
            if not np.all(np.isfinite(arr)):
                raise DataError("view features must be finite")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError("views must share the sample count")
            views.append(arr)
        self.views = views
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if not np.issubdtype(lab.dtype, np.integer):
                raise DataError("labels must be integers")
            lab = lab.astype(np.int64)
            if lab.shape != (n,):
                raise DataError("labels must be one per sample")
            if lab.min() < 0:
                raise DataError("labels must be non-negative")
            present = np.unique(lab)
            if not np.array_equal(present, np.arange(lab.max() + 1)):
                raise DataError("every class in [0, max] needs at least one sample")
            self.labels = lab

    @property
    def n(self):
        return int(self.views[0].shape[0])

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return tuple(int(v.shape[1]) for v in self.views)

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if self.labels is not None else 0

    def __eq__(self, other):
        if not isinstance(other, MultiViewDataset):
            return NotImplemented
        if self.n_views != other.n_views:
            return False
        if any(
            a.shape != b.shape or not np.array_equal(a, b)
            for a, b in zip(self.views, other.views)
        ):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


def gen_synthetic_gmm(n_clusters, n_views, dims, n_samples, separation, noise, seed):
    """Spherical Gaussian mixture rendered independently per view.

    Every view draws its own cluster means on a sphere of radius
    ``separation`` and adds isotropic noise; the cluster identity of a
    sample is shared across views.
    """
    dims = tuple(int(d) for d in dims)
    if n_clusters < 2:
        raise ConfigError("need at least 2 clusters")
    if n_views < 1 or len(dims) != n_views or any(d < 1 for d in dims):
        raise ConfigError("dims must list one positive width per view")
    if n_samples < n_clusters * n_views:
        raise ConfigError("need n_samples >= n_clusters * n_views")
    if separation <= 0.0 or noise <= 0.0:
        raise ConfigError("separation and noise must be positive")

    root = np.random.SeedSequence(entropy=int(seed))
    streams = root.spawn(n_views + 1)
    label_rng = np.random.default_rng(streams[0])
    # redraw until every cluster is hit so the class-coverage invariant holds
    for _ in range(1000):
        labels = label_rng.integers(0, n_clusters, size=int(n_samples))
        if np.unique(labels).size == n_clusters:
            break
    else:
        raise ConfigError("could not cover every cluster; increase n_samples")
    views = []
    for i in range(n_views):
        rng = np.random.default_rng(streams[i + 1])
        raw = rng.standard_normal((n_clusters, dims[i]))
        means = separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        x = means[labels] + noise * rng.standard_normal((int(n_samples), dims[i]))
        views.append(x.astype(np.float32))
    prov = (
        f"gmm(k={n_clusters},v={n_views},dims={dims},n={n_samples},"
        f"sep={separation},noise={noise},seed={seed})"
    )
    return MultiViewDataset(views=views, labels=labels, provenance=prov)


def pair_by_class(features, labels, n_views, seed):
    """Build aligned views by sampling same-class rows of one matrix.

    Row r of view 0 is a shuffled anchor; views 1..v-1 take distinct
    other rows from the anchor's class. With one view this reduces to
    a seeded shuffle.
    """
    feats = np.asarray(features)
    labs = np.asarray(labels)
    if feats.ndim != 2 or labs.shape != (feats.shape[0],):
        raise DataError("features must be (n, d) with one label per row")
    if not np.issubdtype(labs.dtype, np.integer):
        raise DataError("labels must be integers")
    if n_views < 1:
        raise ConfigError("need at least one view")
    counts = np.bincount(labs.astype(np.int64))
    if (counts < n_views).any():
        raise DataError(f"every class needs at least {n_views} samples")

    rng = np.random.default_rng(seed)
    order = rng.permutation(feats.shape[0])
    by_class = {c: np.flatnonzero(labs == c) for c in np.unique(labs)}
    views = [np.empty((feats.shape[0], feats.shape[1]), dtype=np.float32)
             for _ in range(n_views)]
    for r, anchor in enumerate(order):
        views[0][r] = feats[anchor]
        if n_views > 1:
            pool = by_class[int(labs[anchor])]
            pool = pool[pool != anchor]
            picks = rng.choice(pool, size=n_views - 1, replace=False)
            for k, row in enumerate(picks, start=1):
                views[k][r] = feats[row]
    return MultiViewDataset(
        views=views,
        labels=labs[order].astype(np.int64),
        provenance=f"pair_by_class(v={n_views},seed={seed})",
    )


def standardize_views(ds):
    """Per-view, per-feature z-scoring; constant columns stay centered."""
    out = []
    for x in ds.views:
        x64 = x.astype(np.float64)
        mean = x64.mean(axis=0)
        std = x64.std(axis=0)
        std[std == 0.0] = 1.0
        out.append(((x64 - mean) / std).astype(np.float32))
    return MultiViewDataset(
        views=out,
        labels=None if ds.labels is None else ds.labels.copy(),
        provenance=ds.provenance + "+standardized",
    )


# ---------------------------------------------------------------------------
# MVDS container


def save_mvds(ds, path):
    with open(path, "wb") as fh:
        fh.write(MVDS_MAGIC)
        fh.write(struct.pack("<IIQB", MVDS_VERSION, ds.n_views, ds.n,
                             1 if ds.labels is not None else 0))
        fh.write(struct.pack(f"<{ds.n_views}I", *ds.dims))
        if ds.labels is not None:
            fh.write(ds.labels.astype("<i8").tobytes())
        for x in ds.views:
            fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def load_mvds(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated file while reading {what}", pos)
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MVDS_MAGIC:
        raise FormatError("bad magic; not an MVDS file", 0)
    version, n_views, n, has_labels = struct.unpack("<IIQB", take(17, "header"))
    if version != MVDS_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if n_views < 1 or n < 1:
        raise FormatError("header declares an empty dataset", 8)
    if has_labels > 1:
        raise FormatError(f"has_labels flag must be 0 or 1, got {has_labels}", 16)
    dims = struct.unpack(f"<{n_views}I", take(4 * n_views, "view dims"))
    if any(d < 1 or d > _MAX_DIM for d in dims):
        raise FormatError("view dimension out of range", 21)
    labels = None
    if has_labels:
        raw = take(8 * n, "labels")
        labels = np.frombuffer(raw, dtype="<i8").astype(np.int64)
    views = []
    for i, d in enumerate(dims):
        raw = take(4 * n * d, f"view {i} payload")
        views.append(np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float32))
    if pos != len(buf):
        raise FormatError("trailing bytes after declared payload", pos)
    try:
        return MultiViewDataset(views=views, labels=labels, provenance=str(path))
    except DataError as exc:
        raise FormatError(f"payload violates dataset invariants: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV import


def from_csv(view_paths, labels_path=None):
    """Dataset from one numeric CSV per view plus an optional label file."""
    views = []
    for p in view_paths:
        try:
            arr = np.loadtxt(p, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"cannot parse {p} as numeric CSV: {exc}") from exc
        views.append(arr.astype(np.float32))
    labels = None
    if labels_path is not None:
        try:
            labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
        except ValueError as exc:
            raise FormatError(f"cannot parse {labels_path} as labels: {exc}") from exc
    return MultiViewDataset(
        views=views, labels=labels, provenance=f"csv({len(views)} views)"
    )
