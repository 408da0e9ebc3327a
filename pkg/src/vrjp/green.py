"""Leaf-to-root elimination for the truncated operator on a tree.

The operator is 2*beta on the diagonal and -w across tree edges,
restricted to the vertices within depth n. Its inverse applied to the
boundary source (w times the offspring count on the depth-n shell) gives
the unit-mean martingale observable at the root; the (root, root) entry
of the inverse is the Green value, reported both with and without the
root's gamma shift.

Elimination strictly by decreasing depth has zero fill-in on a tree, so
each depth-n report costs O(|V_n|) once the potential is attached.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .potential import TreePotential
from .trees import TreeArena


class PivotError(RuntimeError):
    """A Schur pivot lost positivity; the restricted operator should be SPD."""


@dataclasses.dataclass(frozen=True)
class GreenReport:
    """Output of one elimination pass at a fixed truncation depth."""

    depth_n: int
    psi: np.ndarray
    psi_root: float
    g_hat_root: float
    g_tilde_root: float


def _sweep(tree: TreeArena, pot: TreePotential, n: int):
    """Bottom-up pass; returns per-node transfer pairs and the root pivots.

    For every non-root x of depth <= n the solution satisfies
    value(x) = a[x]*value(parent) + b[x]. Instead of subtracting the
    eliminated mass from 2*beta (which cancels catastrophically deep in
    the recurrent phase, where a[x] hugs pot.a[x]), the pass carries the
    positive gap delta[x] = pot.a[x] - a[x] and rebuilds each pivot as
    w*(1/A + sum of child gaps), a sum of positive terms. The root pivot
    without the gamma shift is then w * (gap sum at the root), exact to
    relative rounding even when it is 1e-40 times gamma.
    """
    if n < 0:
        raise ValueError("truncation depth must be nonnegative")
    if n > pot.boundary_depth():
        raise ValueError(
            "offspring counts at the boundary depth are not stored; "
            "need a deeper tree or a closed potential"
        )
    w = pot.w
    size = tree.generation(n).stop
    a = np.zeros(size)
    b = np.zeros(size)
    delta = np.zeros(size)

    shell = tree.generation(n)
    if n < tree.height:
        below = tree.generation(n + 1)
        gap = np.bincount(
            tree.parent[below], weights=pot.a[below], minlength=shell.stop
        )[shell]
    else:
        gap = np.zeros(shell.stop - shell.start)  # closed boundary, no offspring

    if n == 0:
        root_gap = float(gap[0])
        root_source = w * float(tree.child_count[0])
    else:
        inv = 1.0 / pot.a[shell] + gap
        if not np.all(inv > 0.0):
            raise PivotError("nonpositive pivot on the boundary shell")
        a[shell] = 1.0 / inv
        delta[shell] = a[shell] * pot.a[shell] * gap
        b[shell] = a[shell] * tree.child_count[shell]

        for g in range(n - 1, 0, -1):
            gen = tree.generation(g)
            below = tree.generation(g + 1)
            gap = np.bincount(
                tree.parent[below], weights=delta[below], minlength=gen.stop
            )[gen]
            sum_b = np.bincount(
                tree.parent[below], weights=b[below], minlength=gen.stop
            )[gen]
            inv = 1.0 / pot.a[gen] + gap
            if not np.all(inv > 0.0):
                raise PivotError("nonpositive pivot at depth %d" % g)
            a[gen] = 1.0 / inv
            delta[gen] = a[gen] * pot.a[gen] * gap
            b[gen] = a[gen] * sum_b

        below = tree.generation(1)
        root_gap = float(np.sum(delta[below]))
        root_source = w * float(np.sum(b[below]))

    unshifted = w * root_gap
    root_denom = 2.0 * pot.gamma + unshifted
    if not root_denom > 0.0:
        raise PivotError("nonpositive pivot at the root")
    return a, b, root_denom, root_source, unshifted


def eliminate(tree: TreeArena, pot: TreePotential, n: int) -> GreenReport:
    """Solve the depth-n system exactly and report root quantities.

    On a closed potential at full depth the operator without the root
    shift is exactly singular (the per-node exp(u_log) vector spans its
    kernel), so g_tilde_root is NaN there; everywhere else a nonpositive
    pivot is a genuine failure.
    """
    a, b, root_denom, root_source, unshifted = _sweep(tree, pot, n)

    if pot.closed and n == tree.height:
        unshifted = np.nan  # operator without the shift is exactly singular
    elif unshifted <= 0.0:
        raise PivotError("nonpositive pivot without the root shift")

    psi = np.empty(tree.generation(n).stop)
    psi[0] = root_source / root_denom
    for g in range(1, n + 1):
        gen = tree.generation(g)
        psi[gen] = a[gen] * psi[tree.parent[gen]] + b[gen]

    return GreenReport(
        depth_n=n,
        psi=psi,
        psi_root=float(psi[0]),
        g_hat_root=1.0 / root_denom,
        g_tilde_root=1.0 / unshifted,
    )


def ratio_vs_u(tree: TreeArena, pot: TreePotential, n: int, node: int):
    """Green-row ratio against the raw ancestry log-product.

    Returns (green(root, node)/green(root, root), exp(u_log[node])). On a
    tree the ratio telescopes into the product of the transfer weights
    along the ancestry of node.
    """
    if not 0 <= node < tree.generation(n).stop:
        raise ValueError("node must lie within the truncated tree")
    a = _sweep(tree, pot, n)[0]
    ratio = 1.0
    j = node
    while j != 0:
        ratio *= a[j]
        j = tree.parent[j]
    return float(ratio), float(np.exp(pot.u_log[node]))


def path_expansion(adjacency, beta, w: float, i: int, j: int, max_len: int) -> float:
    """Sum of path weights i -> j up to a length cutoff.

    A path of vertices (i, ..., j) with k steps contributes
    w^k / prod(2*beta over visited vertices, repeats counted). Terms are
    positive, so the sum is nondecreasing in max_len and lower-bounds the
    (i, j) entry of the inverse operator.
    """
    adjacency = np.asarray(adjacency, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if max_len < 0:
        raise ValueError("max_len must be nonnegative")
    diag = 2.0 * beta
    front = np.zeros(beta.size)
    front[i] = 1.0 / diag[i]
    total = front[j]
    for _ in range(max_len):
        front = w * (adjacency @ front) / diag
        total += front[j]
    return float(total)


def environment_matrix(g_hat, psi, gamma: float) -> np.ndarray:
    """Limiting environment: inverse-operator block plus the rank-one tail."""
    g_hat = np.asarray(g_hat, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if g_hat.shape != (psi.size, psi.size):
        raise ValueError("matrix and vector sizes must match")
    if gamma <= 0.0:
        raise ValueError("root shift must be positive")
    return g_hat + np.outer(psi, psi) / (2.0 * gamma)
