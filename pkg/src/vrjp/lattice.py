"""Exact sampling of the random potential on lattice balls.

The field on a finite box with boundary weights eta is sampled one vertex
at a time: conditioning on the already-sampled set U turns the remaining
law into the same family with an effective coupling matrix and effective
boundary weights, both read off a maintained dense inverse of the sampled
block. Each single-site draw reduces to one inverse-Gaussian variable (or
a Gamma(1/2, 1) variable when the effective boundary weight vanishes).

Everything is dense and exact; boxes are capped at desk scale. Replicas
are carried along a leading batch axis so Monte Carlo loops stay in numpy.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from .igmath import gamma_half_sample, ig_sample
from .trees import ResourceLimitError

VERTEX_CAP = 2000
_DRIFT_TOL = 1e-8
_REFACTOR_EVERY = 64


class InvariantError(RuntimeError):
    """A structural guarantee of the sampler or solver failed."""


class DriftError(InvariantError):
    """Incremental inverse drifted past tolerance; reject the sample."""


@dataclasses.dataclass(frozen=True)
class LatticeBox:
    """Graph-distance ball around the origin with per-vertex boundary weights.

    vertices are sorted by (distance from origin, coordinates), so the
    origin is index 0 and any smaller ball is a prefix of a larger one.
    eta[i] is the edge weight times the number of neighbors outside the
    box. d = 0 marks a synthetic box built from an explicit graph.
    """

    d: int
    n: int
    vertices: tuple
    adjacency: tuple
    eta: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def weight_matrix(self, w: float) -> np.ndarray:
        mat = np.zeros((self.n_vertices, self.n_vertices))
        for i, nbrs in enumerate(self.adjacency):
            mat[i, list(nbrs)] = w
        return mat


def build_box(d: int, n: int, w: float) -> LatticeBox:
    """L1 ball of radius n in dimension d with outside-edge weights."""
    if d < 1 or n < 0 or w <= 0:
        raise ValueError("need d >= 1, n >= 0 and positive edge weight")
    origin = (0,) * d
    ball = {origin}
    frontier = [origin]
    for _ in range(n):
        nxt = []
        for v in frontier:
            for k, s in itertools.product(range(d), (-1, 1)):
                u = v[:k] + (v[k] + s,) + v[k + 1 :]
                if u not in ball:
                    ball.add(u)
                    nxt.append(u)
            if len(ball) > VERTEX_CAP:
                raise ResourceLimitError(
                    f"ball exceeds the {VERTEX_CAP}-vertex cap"
                )
        frontier = nxt
    vertices = tuple(sorted(ball, key=lambda v: (sum(abs(c) for c in v), v)))
    index = {v: i for i, v in enumerate(vertices)}
    adjacency = []
    eta = np.zeros(len(vertices))
    for i, v in enumerate(vertices):
        nbrs = []
        for k, s in itertools.product(range(d), (-1, 1)):
            u = v[:k] + (v[k] + s,) + v[k + 1 :]
            if u in index:
                nbrs.append(index[u])
            else:
                eta[i] += w
        adjacency.append(tuple(nbrs))
    return LatticeBox(d=d, n=n, vertices=vertices, adjacency=tuple(adjacency), eta=eta)


def graph_box(n_vertices: int, edges, eta=None) -> LatticeBox:
    """Synthetic box over an explicit graph; vertex order is the index order."""
    if n_vertices < 1 or n_vertices > VERTEX_CAP:
        raise ValueError("vertex count out of range")
    nbrs = [set() for _ in range(n_vertices)]
    for i, j in edges:
        if not (0 <= i < n_vertices and 0 <= j < n_vertices) or i == j:
            raise ValueError(f"bad edge ({i}, {j})")
        nbrs[i].add(j)
        nbrs[j].add(i)
    eta = np.zeros(n_vertices) if eta is None else np.asarray(eta, dtype=float)
    if eta.shape != (n_vertices,) or np.any(eta < 0):
        raise ValueError("eta must be a nonnegative per-vertex array")
    return LatticeBox(
        d=0,
        n=0,
        vertices=tuple((i,) for i in range(n_vertices)),
        adjacency=tuple(tuple(sorted(s)) for s in nbrs),
        eta=eta,
    )


def box_from_spec(spec: dict) -> tuple[LatticeBox, float]:
    """Box plus edge weight from the JSON form {"d": ..., "radius": ..., "w": ...}."""
    try:
        d, n, w = int(spec["d"]), int(spec["radius"]), float(spec["w"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad box spec {spec!r}") from exc
    return build_box(d, n, w), w


def _h_block(wmat: np.ndarray, beta: np.ndarray, k: int) -> np.ndarray:
    """Batched operator 2 diag(beta) - W on the first k vertices."""
    h = np.broadcast_to(-wmat[:k, :k], (beta.shape[0], k, k)).copy()
    idx = np.arange(k)
    h[:, idx, idx] = 2.0 * beta[:, :k]
    return h


def _run_chain(
    wmat: np.ndarray, eta: np.ndarray, rng: np.random.Generator, beta: np.ndarray, start: int
) -> np.ndarray:
    """Sample beta[:, start:] conditionally on the filled prefix, in place.

    Maintains inv = inverse of the sampled block of 2 diag(beta) - W by
    rank-one border extensions, re-factorizing periodically. Returns the
    per-replica drift max|inv H - I| of the final inverse.
    """
    nrep, size = beta.shape
    inv = np.zeros((nrep, size, size))
    if start > 0:
        inv[:, :start, :start] = np.linalg.inv(_h_block(wmat, beta, start))
    for i in range(start, size):
        block = inv[:, :i, :i]
        wi = wmat[i, :i]
        q = np.einsum("bkl,l->bk", block, wi)
        w_ii = q @ wi
        # effective couplings to the unsampled rest and effective boundary
        # weight; both stay nonnegative because inv has nonnegative entries
        w_rest = np.sum(wmat[i, i + 1 :]) + q @ np.sum(wmat[i + 1 :, :i], axis=0)
        eta_eff = eta[i] + q @ eta[:i] + w_rest
        x = np.empty(nrep)
        pos = eta_eff > 0
        if np.any(pos):
            lam = eta_eff[pos]
            x[pos] = lam / ig_sample(rng, 1.0, lam, size=lam.shape)
        if not np.all(pos):
            x[~pos] = 2.0 * gamma_half_sample(rng, size=int(np.sum(~pos)))
        if not np.all(x > 0):
            raise InvariantError("nonpositive Schur pivot")
        beta[:, i] = 0.5 * (w_ii + x)
        inv[:, :i, :i] += q[:, :, None] * q[:, None, :] / x[:, None, None]
        inv[:, :i, i] = q / x[:, None]
        inv[:, i, :i] = inv[:, :i, i]
        inv[:, i, i] = 1.0 / x
        if (i + 1) % _REFACTOR_EVERY == 0 and i + 1 < size:
            inv[:, : i + 1, : i + 1] = np.linalg.inv(_h_block(wmat, beta, i + 1))
    resid = np.einsum("bij,bjk->bik", inv, _h_block(wmat, beta, size))
    idx = np.arange(size)
    resid[:, idx, idx] -= 1.0
    return np.max(np.abs(resid), axis=(1, 2))


_MAX_RESAMPLE = 8


def _sample_checked(
    wmat: np.ndarray, eta: np.ndarray, rng: np.random.Generator, beta: np.ndarray, start: int
) -> int:
    """Run the chain, rejecting and redrawing replicas whose inverse drifted.

    Tiny Schur pivots (possible when the effective boundary weight is
    zero) blow up the inverse and with it the absolute drift even though
    the draw itself is fine; those samples are discarded by contract.
    Returns the number of rejected replicas.
    """
    drift = _run_chain(wmat, eta, rng, beta, start)
    rejected = 0
    for _ in range(_MAX_RESAMPLE):
        bad = drift > _DRIFT_TOL
        if not np.any(bad):
            return rejected
        rejected += int(np.sum(bad))
        redo = beta[bad]
        drift_redo = _run_chain(wmat, eta, rng, redo, start)
        beta[bad] = redo
        new_drift = drift.copy()
        new_drift[bad] = drift_redo
        drift = new_drift
    raise DriftError(f"inverse drift above {_DRIFT_TOL:.0e} after {_MAX_RESAMPLE} redraws")


def sample_beta_sequential(
    box: LatticeBox, w: float, rng: np.random.Generator, size=None, return_flags: bool = False
):
    """Draw the potential field on the box; (n_vertices,) or (size, n_vertices).

    With return_flags=True also returns the number of replicas that were
    rejected for inverse drift and redrawn.
    """
    if w <= 0:
        raise ValueError("edge weight must be positive")
    nrep = 1 if size is None else int(size)
    if nrep < 1:
        raise ValueError("size must be positive")
    beta = np.empty((nrep, box.n_vertices))
    rejected = _sample_checked(box.weight_matrix(w), box.eta, rng, beta, 0)
    out = beta[0] if size is None else beta
    return (out, rejected) if return_flags else out


def extend_potential(
    box_inner: LatticeBox,
    beta_inner: np.ndarray,
    box_outer: LatticeBox,
    w: float,
    rng: np.random.Generator,
    return_flags: bool = False,
):
    """Grow a sampled field to a larger box without disturbing its law.

    The inner box must be a vertex prefix of the outer one (nested balls
    around the same origin are). Only the new vertices consume randomness;
    the inner values are the conditioning data and are never redrawn.
    """
    n_in, n_out = box_inner.n_vertices, box_outer.n_vertices
    if (
        box_inner.d != box_outer.d
        or n_in > n_out
        or box_outer.vertices[:n_in] != box_inner.vertices
    ):
        raise ValueError("inner box is not a prefix of the outer box")
    beta_inner = np.asarray(beta_inner, dtype=float)
    single = beta_inner.ndim == 1
    beta_inner = np.atleast_2d(beta_inner)
    if beta_inner.shape[1] != n_in:
        raise ValueError("beta has the wrong number of vertices")
    beta = np.empty((beta_inner.shape[0], n_out))
    beta[:, :n_in] = beta_inner
    rejected = _sample_checked(box_outer.weight_matrix(w), box_outer.eta, rng, beta, n_in)
    out = beta[0] if single else beta
    return (out, rejected) if return_flags else out


def psi_on_box(box: LatticeBox, beta: np.ndarray, w: float):
    """Solve (2 diag(beta) - W) psi = eta; returns (psi, g_hat_oo).

    beta may carry a leading batch axis, in which case both outputs do too.
    """
    beta = np.asarray(beta, dtype=float)
    single = beta.ndim == 1
    beta2 = np.atleast_2d(beta)
    if beta2.shape[1] != box.n_vertices:
        raise ValueError("beta has the wrong number of vertices")
    h = _h_block(box.weight_matrix(w), beta2, box.n_vertices)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise InvariantError("operator is not positive definite") from exc
    rhs = np.broadcast_to(box.eta, beta2.shape)[..., None]
    psi = np.linalg.solve(h, rhs)[..., 0]
    e0 = np.zeros(box.n_vertices)
    e0[0] = 1.0
    g_hat = np.linalg.solve(h, np.broadcast_to(e0, beta2.shape)[..., None])[:, 0, 0]
    if single:
        return psi[0], float(g_hat[0])
    return psi, g_hat
