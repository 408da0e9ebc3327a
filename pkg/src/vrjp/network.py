"""Wired electrical network on a truncated tree.

Wiring at depth k collapses everything strictly below generation k into a
single absorbing vertex: each depth-k node keeps one boundary edge whose
conductance is the sum of its offspring edge conductances. Effective
conductance from the root then comes from one post-order series/parallel
pass, and the race "hit the boundary before returning to the root" has
the exact probability C(root <-> boundary) / (total conductance at root).
A discrete random-walk simulator doubles as an independent oracle for
that probability.

Conductances are kept in linear space with explicit positivity and
finiteness guards; a branch whose conductance underflows to zero is a
correctly negligible branch, but the root values are always checked.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np
from scipy.special import logsumexp

from .potential import TreePotential, conductances
from .trees import TreeArena


class WalkOutcome(enum.Enum):
    RETURNED_TO_ROOT = "returned_to_root"
    HIT_BOUNDARY = "hit_boundary"
    CENSORED = "censored"


@dataclasses.dataclass(frozen=True)
class WalkResult:
    outcome: WalkOutcome
    steps: int


@dataclasses.dataclass(frozen=True)
class EscapeTally:
    """Outcome counts of a batch of independent walks on one network."""

    escaped: int
    returned: int
    censored: int

    @property
    def walks(self) -> int:
        return self.escaped + self.returned + self.censored

    @property
    def escaped_fraction(self) -> float:
        return self.escaped / self.walks


@dataclasses.dataclass(frozen=True)
class WiredNetwork:
    """Truncation of the tree network at a wiring depth.

    edge_c[i] is the conductance of (i, parent(i)) for nodes of depth
    <= depth (NaN at the root); boundary_c holds one entry per depth-k
    node, its edge to the absorbing vertex; root_total is the full
    conductance at the root, which never depends on the wiring depth.
    """

    tree: TreeArena
    depth: int
    edge_c: np.ndarray
    boundary_c: np.ndarray
    root_total: float


@dataclasses.dataclass(frozen=True)
class ResistanceLimit:
    value: float
    depth: int
    converged: bool


def wired_network(tree: TreeArena, pot: TreePotential, depth: int) -> WiredNetwork:
    """Build the network wired at the given depth.

    Needs the offspring edges of the depth-k shell, hence a tree of depth
    at least k+1.
    """
    if not 0 <= depth <= tree.height - 1:
        raise ValueError("wiring depth needs stored offspring edges below it")
    cond = conductances(tree, pot)
    size = tree.generation(depth).stop
    shell = tree.generation(depth)
    below = tree.generation(depth + 1)
    boundary = np.bincount(
        tree.parent[below], weights=cond.c[below], minlength=size
    )[shell]
    edge_c = cond.c[:size].copy()
    if not (np.all(np.isfinite(edge_c[1:])) and np.all(np.isfinite(boundary))):
        raise ValueError("conductance overflow; tree too deep for linear space")
    root_total = float(np.sum(cond.c[tree.generation(1)]))
    if not 0.0 < root_total < np.inf:
        raise ValueError("degenerate total conductance at the root")
    return WiredNetwork(
        tree=tree,
        depth=depth,
        edge_c=edge_c,
        boundary_c=boundary,
        root_total=root_total,
    )


def effective_conductance(net: WiredNetwork) -> float:
    """Series/parallel collapse from the wired boundary up to the root."""
    tree = net.tree
    level = net.boundary_c
    with np.errstate(divide="ignore"):
        for g in range(net.depth - 1, -1, -1):
            below = tree.generation(g + 1)
            terms = 1.0 / (1.0 / net.edge_c[below] + 1.0 / level)
            gen = tree.generation(g)
            level = np.bincount(
                tree.parent[below], weights=terms, minlength=gen.stop
            )[gen]
    out = float(level[0])
    if not 0.0 < out < np.inf:
        raise ValueError("effective conductance left the positive range")
    return out


def escape_probability(net: WiredNetwork) -> float:
    """Chance the walk exits the wired ball before its first return to the root.

    Exiting means stepping to the absorbing vertex, i.e. reaching
    generation depth+1 of the unwired tree.
    """
    p = effective_conductance(net) / net.root_total
    if not 0.0 < p <= 1.0 + 1e-12:
        raise ValueError("escape probability outside (0, 1]")
    return min(p, 1.0)


def _log_generation_conductance(tree: TreeArena, pot: TreePotential, n: int) -> float:
    if not 1 <= n <= tree.height:
        raise ValueError("generation out of range")
    shell = tree.generation(n)
    logs = np.log(pot.w) + pot.u_log[shell] + pot.u_log[tree.parent[shell]]
    return float(logsumexp(logs))


def generation_conductance(tree: TreeArena, pot: TreePotential, n: int) -> float:
    """Sum of the parent-edge conductances over generation n."""
    return float(np.exp(_log_generation_conductance(tree, pot, n)))


def nash_williams_lower_bound(tree: TreeArena, pot: TreePotential, n: int) -> float:
    """Cutset bound: the generation-n edges alone already resist this much."""
    return float(np.exp(-_log_generation_conductance(tree, pot, n)))


def resistance_limit(
    tree: TreeArena, pot: TreePotential, rel_tol: float = 1e-6
) -> ResistanceLimit:
    """Wired resistances of growing balls, stopped on a relative increment.

    The sequence is nondecreasing; it converges exactly when the walk is
    transient, so hitting the tree's stored depth without the increment
    dropping below rel_tol is reported as converged=False rather than an
    error.
    """
    prev = None
    depth = 0
    for n in range(tree.height):
        r = 1.0 / effective_conductance(wired_network(tree, pot, n))
        if prev is not None and r - prev <= rel_tol * r:
            return ResistanceLimit(value=r, depth=n, converged=True)
        prev = r
        depth = n
    return ResistanceLimit(value=prev, depth=depth, converged=False)


def _transition_tables(net: WiredNetwork):
    """CSR-style neighbor lists with cumulative conductance weights.

    The absorbing vertex gets id = size (one past the last tree node).
    """
    tree = net.tree
    size = tree.generation(net.depth).stop
    shell = tree.generation(net.depth)
    nbr = []
    wt = []
    ptr = np.zeros(size + 1, dtype=np.int64)
    for i in range(size):
        if i > 0:
            nbr.append(tree.parent[i])
            wt.append(net.edge_c[i])
        if tree.depth[i] < net.depth:
            lo = tree.child_start[i]
            for j in range(lo, lo + tree.child_count[i]):
                nbr.append(j)
                wt.append(net.edge_c[j])
        else:
            nbr.append(size)
            wt.append(net.boundary_c[i - shell.start])
        ptr[i + 1] = len(nbr)
    nbr = np.asarray(nbr, dtype=np.int64)
    cum = np.cumsum(np.asarray(wt))
    base = np.concatenate(([0.0], cum))[ptr[:-1]]
    tot = cum[ptr[1:] - 1] - base
    return nbr, cum, base, tot


def walk_escape_estimate(
    net: WiredNetwork, rng: np.random.Generator, walks: int, max_steps: int
) -> EscapeTally:
    """Simulate a batch of conductance-weighted walks racing root vs boundary."""
    if walks <= 0 or max_steps <= 0:
        raise ValueError("need positive walk and step counts")
    nbr, cum, base, tot = _transition_tables(net)
    absorb = net.tree.generation(net.depth).stop
    pos = np.zeros(walks, dtype=np.int64)
    escaped = 0
    returned = 0
    for _ in range(max_steps):
        u = rng.random(pos.size)
        idx = np.searchsorted(cum, base[pos] + u * tot[pos], side="right")
        pos = nbr[idx]
        hit = pos == absorb
        back = pos == 0
        escaped += int(np.count_nonzero(hit))
        returned += int(np.count_nonzero(back))
        pos = pos[~(hit | back)]
        if pos.size == 0:
            break
    return EscapeTally(
        escaped=escaped, returned=returned, censored=int(pos.size)
    )


def walk_simulate(
    net: WiredNetwork, rng: np.random.Generator, max_steps: int
) -> WalkResult:
    """One conductance-weighted walk from the root; oracle for escape_probability."""
    nbr, cum, base, tot = _transition_tables(net)
    absorb = net.tree.generation(net.depth).stop
    pos = 0
    for step in range(1, max_steps + 1):
        target = base[pos] + rng.random() * tot[pos]
        pos = int(nbr[np.searchsorted(cum, target, side="right")])
        if pos == absorb:
            return WalkResult(WalkOutcome.HIT_BOUNDARY, step)
        if pos == 0:
            return WalkResult(WalkOutcome.RETURNED_TO_ROOT, step)
    return WalkResult(WalkOutcome.CENSORED, max_steps)
