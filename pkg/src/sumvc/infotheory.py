"""Exact information-theoretic checks on small discrete joints.

Entropies and (conditional) mutual informations are computed exactly
from explicit probability tables, in nats. On top of those sit
verifiers for the chain rule, the interaction-information identity,
a channel decomposition, and two redundancy bounds, plus Monte Carlo
and closed-form references for diagonal-Gaussian KL divergences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

MAX_AXES = 4
MAX_ALPHABET = 8


@dataclass(frozen=True)
class DiscreteJoint:
    """A normalized probability table with named axes."""

    axes: tuple
    table: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        table = np.asarray(self.table, dtype=np.float64)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "table", table)
        if len(axes) != table.ndim:
            raise ContractError("axes must name every table dimension")
        if len(set(axes)) != len(axes):
            raise ContractError("axis names must be unique")
        if not 1 <= len(axes) <= MAX_AXES:
            raise ConfigError(f"between 1 and {MAX_AXES} axes supported")
        if any(s < 1 or s > MAX_ALPHABET for s in table.shape):
            raise ConfigError(f"alphabet sizes must lie in [1, {MAX_ALPHABET}]")
        if np.any(table < 0.0):
            raise ContractError("probabilities must be non-negative")
        if abs(float(table.sum()) - 1.0) > 1e-12:
            raise ContractError("table must sum to 1 within 1e-12")

    def _axis_ids(self, names):
        if isinstance(names, str):
            names = (names,)
        ids = []
        for name in names:
            if name not in self.axes:
                raise ContractError(f"unknown axis {name!r}")
            ids.append(self.axes.index(name))
        if len(set(ids)) != len(ids):
            raise ContractError("repeated axis in group")
        return tuple(ids), tuple(names)

    def marginal(self, names):
        """Marginal table over ``names``, axes in the requested order."""
        ids, _ = self._axis_ids(names)
        drop = tuple(i for i in range(self.table.ndim) if i not in ids)
        out = self.table.sum(axis=drop) if drop else self.table
        kept = sorted(ids)  # numpy keeps surviving axes in original order
        return np.transpose(out, axes=tuple(kept.index(i) for i in ids))


def _plogp_sum(p):
    nz = p > 0.0
    return float((p[nz] * np.log(p[nz])).sum())


def entropy(joint, names):
    """H of the marginal over ``names``, in nats."""
    ids, _ = joint._axis_ids(names)
    drop = tuple(i for i in range(joint.table.ndim) if i not in ids)
    p = joint.table.sum(axis=drop) if drop else joint.table
    return -_plogp_sum(p)


def mutual_info(joint, a, b, cond=()):
    """I(A; B | C) for disjoint axis groups, via the entropy identity."""
    a_ids, a_names = joint._axis_ids(a)
    b_ids, b_names = joint._axis_ids(b)
    c_ids, c_names = joint._axis_ids(cond) if cond else ((), ())
    groups = a_ids + b_ids + c_ids
    if len(set(groups)) != len(groups):
        raise ContractError("axis groups must be disjoint")
    h_ac = entropy(joint, a_names + c_names)
    h_bc = entropy(joint, b_names + c_names)
    h_abc = entropy(joint, a_names + b_names + c_names)
    h_c = entropy(joint, c_names) if c_names else 0.0
    return h_ac + h_bc - h_abc - h_c


@dataclass(frozen=True)
class IdentityReport:
    """Residuals from the basic identity checks on one joint."""

    p1_min: float
    p2_residual: float
    p3_residual: float

    @property
    def max_residual(self):
        return max(self.p2_residual, self.p3_residual, -min(self.p1_min, 0.0))


def verify_chain_rules(joint, x="x", y="y", z="z"):
    """Check positivity, the chain rule, and interaction-info symmetry.

    p1: unconditional and conditional MIs are non-negative.
    p2: I(x,y; z) = I(y; z) + I(x; z | y).
    p3: the three expansions of the interaction information agree.
    """
    p1 = min(
        mutual_info(joint, x, y),
        mutual_info(joint, x, z),
        mutual_info(joint, y, z),
        mutual_info(joint, x, y, cond=z),
        mutual_info(joint, x, z, cond=y),
        mutual_info(joint, y, z, cond=x),
    )
    p2 = abs(
        mutual_info(joint, (x, y), z)
        - mutual_info(joint, y, z)
        - mutual_info(joint, x, z, cond=y)
    )
    ii = (
        mutual_info(joint, x, y) - mutual_info(joint, x, y, cond=z),
        mutual_info(joint, x, z) - mutual_info(joint, x, z, cond=y),
        mutual_info(joint, y, z) - mutual_info(joint, y, z, cond=x),
    )
    p3 = max(ii) - min(ii)
    return IdentityReport(p1_min=p1, p2_residual=p2, p3_residual=p3)


def verify_decomposition(joint, xi="xi", xj="xj", z="z"):
    """Residual of I(xi; z) = I(z; xi | xj) + I(xj; z).

    Holds when z depends on the pair only through xi; that premise is
    checked first.
    """
    leak = mutual_info(joint, z, xj, cond=xi)
    if leak > 1e-12:
        raise ContractError(
            f"decomposition premise violated: I(z; xj | xi) = {leak:.3e}"
        )
    return abs(
        mutual_info(joint, xi, z)
        - mutual_info(joint, z, xi, cond=xj)
        - mutual_info(joint, xj, z)
    )


@dataclass(frozen=True)
class MarginReport:
    """Slack of the two redundancy bounds (negative means violated)."""

    b2_margin: float
    b4_margin: float

    @property
    def min_margin(self):
        return min(self.b2_margin, self.b4_margin)


def verify_redundancy_bounds(joint, xi="xi", xj="xj", y="y", z="z"):
    """Slack of the two bounds relating a representation z of xi to y.

    b2: I(xi; y | z) <= I(xi; xj | z) + I(xi; y | xj)
    b4: I(y; z) >= I(y; xi,xj) - I(xi; xj | z) - I(xi; y | xj) - I(xj; y | xi)

    Both require z to be conditionally independent of (xj, y) given xi,
    which is checked as a premise.
    """
    leak = mutual_info(joint, z, (xj, y), cond=xi)
    if leak > 1e-12:
        raise ContractError(
            f"representation premise violated: I(z; xj,y | xi) = {leak:.3e}"
        )
    b2 = (
        mutual_info(joint, xi, xj, cond=z)
        + mutual_info(joint, xi, y, cond=xj)
        - mutual_info(joint, xi, y, cond=z)
    )
    b4 = mutual_info(joint, y, z) - (
        mutual_info(joint, y, (xi, xj))
        - mutual_info(joint, xi, xj, cond=z)
        - mutual_info(joint, xi, y, cond=xj)
        - mutual_info(joint, xj, y, cond=xi)
    )
    return MarginReport(b2_margin=b2, b4_margin=b4)


def redundancy_equality_residual(joint, xi="xi", xj="xj", y="y", z="z"):
    """|I(y; z) - I(y; xi,xj)|, with the mutual-redundancy + sufficiency
    hypotheses checked as premises (both must vanish)."""
    red = max(
        mutual_info(joint, xi, y, cond=xj), mutual_info(joint, xj, y, cond=xi)
    )
    suff = mutual_info(joint, xi, xj, cond=z)
    if red > 1e-12 or suff > 1e-12:
        raise ContractError("equality premises (redundancy, sufficiency) not met")
    return abs(mutual_info(joint, y, z) - mutual_info(joint, y, (xi, xj)))


# ---------------------------------------------------------------------------
# generators


def random_joint(rng, sizes, axes=None):
    """Dirichlet(1) joint over the given alphabet sizes."""
    sizes = tuple(int(s) for s in sizes)
    if axes is None:
        axes = tuple(f"a{i}" for i in range(len(sizes)))
    flat = rng.dirichlet(np.ones(int(np.prod(sizes))))
    return DiscreteJoint(axes=tuple(axes), table=flat.reshape(sizes))


def random_channel_joint(rng, n_xi, n_xj, n_z, n_y=None):
    """Random joint where z is a noisy channel reading xi only.

    With ``n_y`` given the base covers (xi, xj, y); otherwise just
    (xi, xj). Guarantees I(z; rest | xi) = 0 by construction.
    """
    if n_y is None:
        base = rng.dirichlet(np.ones(n_xi * n_xj)).reshape(n_xi, n_xj)
        chan = np.stack([rng.dirichlet(np.ones(n_z)) for _ in range(n_xi)])
        table = base[:, :, None] * chan[:, None, :]
        return DiscreteJoint(axes=("xi", "xj", "z"), table=table)
    base = rng.dirichlet(np.ones(n_xi * n_xj * n_y)).reshape(n_xi, n_xj, n_y)
    chan = np.stack([rng.dirichlet(np.ones(n_z)) for _ in range(n_xi)])
    table = base[:, :, :, None] * chan[:, None, None, :]
    return DiscreteJoint(axes=("xi", "xj", "y", "z"), table=table)


def redundant_sufficient_joint(rng, n_x, n_y):
    """Degenerate joint with xj = xi, z = xi, y = f(xi).

    Satisfies mutual redundancy and sufficiency exactly, so the
    redundancy bound holds with equality.
    """
    p = rng.dirichlet(np.ones(n_x))
    f = rng.integers(0, n_y, size=n_x)
    table = np.zeros((n_x, n_x, n_y, n_x))
    for s in range(n_x):
        table[s, s, f[s], s] = p[s]
    return DiscreteJoint(axes=("xi", "xj", "y", "z"), table=table)


def empirical_joint(labels_a, labels_b, axes=("a", "b")):
    """Normalized contingency table of two integer label arrays."""
    a = np.asarray(labels_a, dtype=np.int64)
    b = np.asarray(labels_b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ContractError("need two equal-length non-empty label arrays")
    table = np.zeros((int(a.max()) + 1, int(b.max()) + 1))
    np.add.at(table, (a, b), 1.0)
    return DiscreteJoint(axes=tuple(axes), table=table / a.size)


# ---------------------------------------------------------------------------
# Gaussian references


def _check_gaussian_args(mu_p, var_p, mu_q, var_q):
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=np.float64))
    var_p = np.atleast_1d(np.asarray(var_p, dtype=np.float64))
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=np.float64))
    var_q = np.atleast_1d(np.asarray(var_q, dtype=np.float64))
    if not (mu_p.shape == var_p.shape == mu_q.shape == var_q.shape):
        raise ContractError("gaussian parameters must share one shape")
    if mu_p.ndim != 1:
        raise ContractError("gaussian parameters must be vectors (diagonal case)")
    if np.any(var_p <= 0.0) or np.any(var_q <= 0.0):
        raise ContractError("variances must be strictly positive")
    return mu_p, var_p, mu_q, var_q


def closed_form_gaussian_kl(mu_p, var_p, mu_q, var_q):
    """KL(N(mu_p, diag var_p) || N(mu_q, diag var_q)) in closed form."""
    mu_p, var_p, mu_q, var_q = _check_gaussian_args(mu_p, var_p, mu_q, var_q)
    return float(
        0.5
        * (
            var_p / var_q
            + (mu_p - mu_q) ** 2 / var_q
            - 1.0
            + np.log(var_q / var_p)
        ).sum()
    )


def mc_gaussian_kl(mu_p, var_p, mu_q, var_q, n_samples=10**6, seed=0):
    """Monte Carlo estimate of KL(p || q) for diagonal Gaussians.

    Samples from p and averages log p - log q. Returns (estimate,
    standard error). ``n_samples`` must be at least 10**4 for the
    standard error to be meaningful at the tolerances used here.
    """
    mu_p, var_p, mu_q, var_q = _check_gaussian_args(mu_p, var_p, mu_q, var_q)
    if n_samples < 10**4:
        raise ConfigError("mc_gaussian_kl needs n_samples >= 10**4")
    rng = np.random.default_rng(seed)
    z = mu_p + np.sqrt(var_p) * rng.standard_normal((int(n_samples), mu_p.size))
    log_p = -0.5 * (np.log(var_p) + (z - mu_p) ** 2 / var_p).sum(axis=1)
    log_q = -0.5 * (np.log(var_q) + (z - mu_q) ** 2 / var_q).sum(axis=1)
    diff = log_p - log_q
    est = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(diff.size))
    return est, se


def gaussian_mi_reference(rho):
    """Exact MI of a bivariate normal with correlation rho, in nats."""
    rho = float(rho)
    if not abs(rho) < 1.0:
        raise ContractError("rho must satisfy |rho| < 1")
    return -0.5 * float(np.log1p(-rho * rho))
