"""Random potential on a rooted tree driven by inverse-Gaussian edge variables.

Each non-root vertex i carries A_i ~ IG(1, w), independent. The running
log-product U_i = sum of ln A over the ancestry of i turns the A's into
edge conductances c(i, parent) = w * exp(U_i + U_parent). The diagonal
field beta_tilde is assembled from the A's of the incident edges, and the
root gets an independent Gamma(1/2, 1) shift gamma.

Everything multiplicative is carried in log space: products of thousands
of IG variables leave the double range long before the trees of interest
stop fitting in memory.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .igmath import gamma_half_sample, ig_sample
from .trees import TreeArena


@dataclasses.dataclass(frozen=True)
class TreePotential:
    """Sampled diagonal field on a tree arena.

    a[i] is the IG variable of the edge (i, parent(i)); a[0] is NaN, the
    root has no parent edge. u_log[i] is the ancestry log-product.
    beta_tilde[i] needs the offspring A's of i, so on an open potential
    the deepest generation has beta_tilde = NaN. beta adds gamma at the
    root only.
    """

    tree: TreeArena
    w: float
    a: np.ndarray
    u_log: np.ndarray
    beta_tilde: np.ndarray
    beta: np.ndarray
    gamma: float
    closed: bool

    def boundary_depth(self) -> int:
        """Largest n for which the elimination at depth n is well posed."""
        return self.tree.height if self.closed else self.tree.height - 1


@dataclasses.dataclass(frozen=True)
class Conductances:
    """Edge and vertex conductances induced by a TreePotential.

    c[i] is the conductance of the edge (i, parent(i)), NaN at the root.
    pi[i] is the total conductance at i, NaN wherever beta_tilde is. The
    log_* twins stay finite at depths where the linear values under- or
    overflow.
    """

    c: np.ndarray
    pi: np.ndarray
    log_c: np.ndarray
    log_pi: np.ndarray


def potential_from_samples(
    tree: TreeArena,
    w: float,
    a: np.ndarray,
    gamma: float,
    closed: bool = False,
) -> TreePotential:
    """Assemble the derived fields from given edge variables.

    Entry point for tests that force specific A values; attach_potential
    is the sampling front end. a[0] is ignored and stored as NaN.
    """
    if w <= 0.0:
        raise ValueError("edge weight must be positive")
    if gamma <= 0.0:
        raise ValueError("root shift must be positive")
    a = np.asarray(a, dtype=float)
    if a.shape != (tree.n_nodes,):
        raise ValueError("need one edge variable per node")
    if tree.n_nodes > 1 and not np.all(a[1:] > 0.0):
        raise ValueError("edge variables must be positive")

    a = a.copy()
    a[0] = np.nan

    u_log = np.zeros(tree.n_nodes)
    log_a = np.empty(tree.n_nodes)
    log_a[0] = 0.0
    if tree.n_nodes > 1:
        log_a[1:] = np.log(a[1:])
    for g in range(1, tree.height + 1):
        gen = tree.generation(g)
        u_log[gen] = u_log[tree.parent[gen]] + log_a[gen]

    child_sum = np.bincount(
        tree.parent[1:], weights=a[1:], minlength=tree.n_nodes
    )
    beta_tilde = np.empty(tree.n_nodes)
    beta_tilde[0] = 0.5 * w * child_sum[0]
    if tree.n_nodes > 1:
        beta_tilde[1:] = 0.5 * w * (child_sum[1:] + 1.0 / a[1:])
    if not closed:
        # offspring of the deepest stored generation are unknown
        beta_tilde[tree.generation(tree.height)] = np.nan

    beta = beta_tilde.copy()
    beta[0] += gamma

    return TreePotential(
        tree=tree,
        w=float(w),
        a=a,
        u_log=u_log,
        beta_tilde=beta_tilde,
        beta=beta,
        gamma=float(gamma),
        closed=closed,
    )


def attach_potential(
    tree: TreeArena, w: float, rng: np.random.Generator, closed: bool = False
) -> TreePotential:
    """Draw a fresh potential: A i.i.d. IG(1, w) off the root, gamma ~ Gamma(1/2, 1)."""
    if w <= 0.0:
        raise ValueError("edge weight must be positive")
    a = np.empty(tree.n_nodes)
    a[0] = np.nan
    if tree.n_nodes > 1:
        a[1:] = ig_sample(rng, 1.0, w, tree.n_nodes - 1)
    gamma = float(gamma_half_sample(rng))
    return potential_from_samples(tree, w, a, gamma, closed=closed)


def conductances(tree: TreeArena, pot: TreePotential) -> Conductances:
    """Edge conductances c(i, parent) = w e^{U_i+U_parent} and totals pi."""
    log_c = np.full(tree.n_nodes, np.nan)
    if tree.n_nodes > 1:
        log_c[1:] = math.log(pot.w) + pot.u_log[1:] + pot.u_log[tree.parent[1:]]
    with np.errstate(invalid="ignore"):
        log_pi = 2.0 * pot.u_log + np.log(2.0 * pot.beta_tilde)
    # the linear fields are convenience views; they may overflow to inf on
    # fields the log route still handles, and consumers must guard
    with np.errstate(over="ignore"):
        return Conductances(
            c=np.exp(log_c),
            pi=np.exp(log_pi),
            log_c=log_c,
            log_pi=log_pi,
        )


def beta_laplace(lam, eta, edges) -> float:
    """Closed-form Laplace transform E[exp(-<lam, beta>)] of the potential law.

    lam, eta: per-vertex arrays. edges: iterable of (i, j, w_ij). Valid for
    any finite vertex set once the outside world is folded into eta.
    """
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if lam.shape != eta.shape:
        raise ValueError("lam and eta must align")
    if np.any(lam <= -1.0):
        raise ValueError("transform diverges for lam <= -1")
    root = np.sqrt(1.0 + lam)
    log_val = -np.dot(eta, root - 1.0) - 0.5 * np.sum(np.log1p(lam))
    for i, j, w_ij in edges:
        log_val -= w_ij * (root[i] * root[j] - 1.0)
    return float(np.exp(log_val))
