"""Galton-Watson trees in a flat arena, plus branching-walk statistics.

Trees are stored breadth-first: generation g occupies the index range
[gen_offsets[g], gen_offsets[g+1]) and the children of a node are contiguous,
so every per-generation sweep is a vectorized numpy slice.  On top of the
arena sit the walk fields: per-node position built from i.i.d. step weights,
its tilted recentring, and the ancestral running maximum, together with the
generation sums sum_x exp(-beta * position) used as additive martingales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OffspringLaw",
    "TreeArena",
    "WalkField",
    "ResourceLimitError",
    "sample_tree",
    "walk_fields",
    "additive_sum",
    "min_ancestral_max",
]

NODE_CAP_DEFAULT = 5_000_000


class ResourceLimitError(RuntimeError):
    """Simulation would exceed its configured node budget."""


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support reproduction law given as {offspring count: probability}."""

    pmf: dict[int, float]
    counts: np.ndarray = field(init=False, repr=False)
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.pmf:
            raise ValueError("offspring law needs a nonempty pmf")
        ks = sorted(self.pmf)
        ps = np.array([self.pmf[k] for k in ks], dtype=float)
        if any(k < 0 or k != int(k) for k in ks):
            raise ValueError(f"offspring counts must be nonnegative integers, got {ks}")
        if np.any(ps < 0) or abs(ps.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must be nonnegative and sum to 1, got {ps}")
        object.__setattr__(self, "counts", np.array(ks, dtype=np.int64))
        object.__setattr__(self, "cdf", np.cumsum(ps))

    @property
    def mean(self) -> float:
        return float(self.counts @ np.diff(self.cdf, prepend=0.0))

    @property
    def always_branches(self) -> bool:
        """No extinction and supercritical: zero offspring has mass 0 and mean > 1."""
        return self.pmf.get(0, 0.0) == 0.0 and self.mean > 1

    @property
    def never_single_child(self) -> bool:
        return self.pmf.get(1, 0.0) == 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.counts[np.searchsorted(self.cdf, rng.random(size), side="right")]

    @classmethod
    def deterministic(cls, k: int) -> "OffspringLaw":
        return cls({k: 1.0})

    @classmethod
    def from_json(cls, obj: dict) -> "OffspringLaw":
        """Parse the interchange form {"pmf": {"2": 0.5, "3": 0.5}}."""
        try:
            pmf = {int(k): float(v) for k, v in obj["pmf"].items()}
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise ValueError(f"malformed offspring law object: {obj!r}") from exc
        return cls(pmf)


@dataclass(frozen=True)
class TreeArena:
    """Rooted tree truncated at a fixed depth, breadth-first node order."""

    parent: np.ndarray        # parent index per node; -1 at the root
    depth: np.ndarray         # generation number per node
    child_start: np.ndarray   # first child index (children are contiguous)
    child_count: np.ndarray
    gen_offsets: np.ndarray   # generation g is [gen_offsets[g], gen_offsets[g+1])

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def height(self) -> int:
        return len(self.gen_offsets) - 2

    def generation(self, n: int):
        if not 0 <= n <= self.height:
            raise ValueError(f"generation {n} outside the sampled range 0..{self.height}")
        return slice(int(self.gen_offsets[n]), int(self.gen_offsets[n + 1]))

    def generation_size(self, n: int) -> int:
        g = self.generation(n)
        return g.stop - g.start


def sample_tree(law: OffspringLaw, depth: int, rng: np.random.Generator,
                node_cap: int = NODE_CAP_DEFAULT) -> TreeArena:
    """Grow a Galton-Watson tree to the given depth.

    Every node above the truncation level draws its offspring count from the
    law, one generation at a time.  Raises ResourceLimitError the moment the
    running node total would pass node_cap; the cap is a guard, not a silent
    truncation.
    """
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth}")
    if not law.always_branches:
        raise ValueError("offspring law must have no extinction mass and mean > 1")
    parents = [np.array([-1], dtype=np.int64)]
    offsets = [0, 1]
    total = 1
    gen_lo, gen_hi = 0, 1
    for _ in range(depth):
        counts = law.sample(rng, gen_hi - gen_lo)
        new = int(counts.sum())
        if total + new > node_cap:
            raise ResourceLimitError(
                f"tree would exceed the {node_cap}-node cap at {total + new} nodes")
        parents.append(np.repeat(np.arange(gen_lo, gen_hi, dtype=np.int64), counts))
        total += new
        offsets.append(total)
        gen_lo, gen_hi = gen_hi, total
    parent = np.concatenate(parents)
    gen_offsets = np.array(offsets, dtype=np.int64)
    depth_arr = np.repeat(np.arange(len(offsets) - 1, dtype=np.int64),
                          np.diff(gen_offsets))
    child_count = np.zeros(total, dtype=np.int64)
    np.add.at(child_count, parent[1:], 1)
    child_start = np.empty(total, dtype=np.int64)
    child_start[0] = 1
    child_start[1:] = 1 + np.cumsum(child_count)[:-1]
    return TreeArena(parent=parent, depth=depth_arr, child_start=child_start,
                     child_count=child_count, gen_offsets=gen_offsets)


@dataclass(frozen=True)
class WalkField:
    """Branching-walk coordinates attached to a tree.

    position(x) accumulates -ln(weight) along the ancestry of x; recentred is
    tilt * (position - rate * |x|); running_max holds the maximum of recentred
    along the path from the root's child down to x itself (the root, whose
    path is empty, carries 0 = its own recentred value).
    """

    tree: TreeArena
    position: np.ndarray
    recentred: np.ndarray
    running_max: np.ndarray


def walk_fields(tree: TreeArena, weights: np.ndarray, tilt: float, rate: float) -> WalkField:
    """One root-to-leaf sweep filling position, recentred position, running max.

    weights holds the per-node positive step weight for every non-root node
    (the root entry is ignored).
    """
    n = tree.n_nodes
    position = np.zeros(n)
    with np.errstate(divide="ignore"):
        steps = -np.log(weights)
    for g in range(1, tree.height + 1):
        gen = tree.generation(g)
        position[gen] = position[tree.parent[gen]] + steps[gen]
    recentred = tilt * (position - rate * tree.depth)
    running_max = np.zeros(n)
    if tree.height >= 1:
        g1 = tree.generation(1)
        running_max[g1] = recentred[g1]
    for g in range(2, tree.height + 1):
        gen = tree.generation(g)
        running_max[gen] = np.maximum(running_max[tree.parent[gen]], recentred[gen])
    return WalkField(tree=tree, position=position, recentred=recentred,
                     running_max=running_max)


def additive_sum(walk: WalkField, n: int, beta: float = 1.0) -> float:
    """Generation sum sum_{|x|=n} exp(-beta * recentred(x)).

    beta = 1 gives the unit-mean additive martingale of the recentred walk;
    beta = 0 counts the generation.
    """
    gen = walk.tree.generation(n)
    return float(np.exp(-beta * walk.recentred[gen]).sum())


def min_ancestral_max(walk: WalkField, n: int) -> float:
    """Smallest ancestral running maximum among generation-n nodes."""
    gen = walk.tree.generation(n)
    return float(walk.running_max[gen].min())
