import numpy as np
import pytest
from scipy.special import gammainc
from scipy.stats import kstest

from vrjp.green import path_expansion
from vrjp.igmath import gamma_half_sample, ig_sample
from vrjp.lattice import (
    DriftError,
    InvariantError,
    LatticeBox,
    box_from_spec,
    build_box,
    extend_potential,
    graph_box,
    psi_on_box,
    sample_beta_sequential,
)
from vrjp.potential import beta_laplace
from vrjp.trees import ResourceLimitError


def box_edges(box: LatticeBox, w: float):
    return [(i, j, w) for i, nb in enumerate(box.adjacency) for j in nb if j > i]


def test_segment_box_structure():
    box = build_box(1, 1, 0.8)
    assert box.vertices == ((0,), (-1,), (1,))
    assert np.allclose(box.eta, [0.0, 0.8, 0.8])
    assert box.adjacency == ((1, 2), (0,), (0,))


def test_diamond_box_structure():
    box = build_box(2, 1, 1.0)
    assert box.n_vertices == 5
    assert box.vertices[0] == (0, 0)
    assert box.eta[0] == 0.0
    assert np.all(box.eta[1:] == 3.0)


def test_eta_sums_to_boundary_edge_count():
    for d, n in ((1, 3), (2, 2), (3, 1)):
        w = 0.7
        box = build_box(d, n, w)
        inside = set(box.vertices)
        cut = 0
        for v in box.vertices:
            for k in range(d):
                for s in (-1, 1):
                    u = v[:k] + (v[k] + s,) + v[k + 1 :]
                    cut += u not in inside
        assert np.sum(box.eta) == pytest.approx(w * cut, rel=1e-12)
        # strictly positive exactly on the outer shell
        norms = np.array([sum(abs(c) for c in v) for v in box.vertices])
        assert np.all((box.eta > 0) == (norms == n))


def test_adjacency_symmetric_and_origin_first():
    box = build_box(3, 1, 1.0)
    assert box.vertices[0] == (0, 0, 0)
    for i, nbrs in enumerate(box.adjacency):
        for j in nbrs:
            assert i in box.adjacency[j]


def test_vertex_cap_enforced():
    with pytest.raises(ResourceLimitError):
        build_box(2, 40, 1.0)


def test_nested_boxes_are_prefixes():
    inner = build_box(2, 1, 1.0)
    outer = build_box(2, 2, 1.0)
    assert outer.vertices[: inner.n_vertices] == inner.vertices
    assert np.all(outer.eta[: inner.n_vertices] == 0.0)


def test_box_from_spec_round_trip():
    box, w = box_from_spec({"d": 3, "radius": 2, "w": 1.8})
    assert (box.d, box.n, w) == (3, 2, 1.8)
    assert box.n_vertices == 25
    with pytest.raises(ValueError):
        box_from_spec({"d": 2, "w": 1.0})


def test_graph_box_validation():
    with pytest.raises(ValueError):
        graph_box(3, [(0, 3)])
    with pytest.raises(ValueError):
        graph_box(3, [(1, 1)])
    with pytest.raises(ValueError):
        graph_box(2, [(0, 1)], eta=[-1.0, 0.0])


def test_single_vertex_laplace_matches_closed_form():
    rng = np.random.default_rng(80)
    for d in (1, 2, 3):
        box = build_box(d, 0, 1.0)
        assert box.eta[0] == 2 * d
        beta = sample_beta_sequential(box, 1.0, rng, size=200_000)
        for lam in (0.5, 1.0, 2.0):
            vals = np.exp(-lam * beta[:, 0])
            closed = beta_laplace([lam], box.eta, [])
            se = vals.std() / np.sqrt(vals.size)
            assert abs(vals.mean() - closed) <= 4 * se


def test_three_vertex_joint_laplace():
    rng = np.random.default_rng(81)
    w = 0.8
    box = build_box(1, 1, w)
    beta = sample_beta_sequential(box, w, rng, size=1_000_000)
    lam = np.array([0.5, 0.5, 0.5])
    vals = np.exp(-(beta @ lam))
    closed = beta_laplace(lam, box.eta, box_edges(box, w))
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - closed) <= 4 * se


def test_beta_stays_above_half_schur_diagonal():
    rng = np.random.default_rng(82)
    box = build_box(2, 1, 1.0)
    wm = box.weight_matrix(1.0)
    betas = sample_beta_sequential(box, 1.0, rng, size=200)
    for b in betas:
        for i in range(1, box.n_vertices):
            inv_u = np.linalg.inv(2 * np.diag(b[:i]) - wm[:i, :i])
            w_ii = wm[i, :i] @ inv_u @ wm[i, :i]
            assert b[i] > w_ii / 2


def test_star_box_agrees_with_tree_construction():
    # the same 4-vertex star law built two ways: conditional pivoting on a
    # zero-eta box, and the tree field (offspring IG variables plus the
    # root Gamma(1/2,1) shift); both against the closed-form transform
    rng = np.random.default_rng(83)
    w = 1.3
    star = graph_box(4, [(0, 1), (0, 2), (0, 3)])
    b_seq, rejected = sample_beta_sequential(star, w, rng, size=200_000, return_flags=True)
    reps = 200_000
    a = ig_sample(rng, 1.0, w, size=(reps, 3))
    gam = gamma_half_sample(rng, size=reps)
    b_tree = np.empty((reps, 4))
    b_tree[:, 0] = 0.5 * w * a.sum(axis=1) + gam
    b_tree[:, 1:] = 0.5 * w / a
    edges = [(0, 1, w), (0, 2, w), (0, 3, w)]
    grid = (
        [0.3, 0.3, 0.3, 0.3],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.7, 0.0, 0.2],
        [0.5, 0.5, 0.0, 0.0],
        [2.0, 0.1, 0.1, 0.1],
    )
    for lam in map(np.array, grid):
        closed = beta_laplace(lam, np.zeros(4), edges)
        for b in (b_seq, b_tree):
            vals = np.exp(-(b @ lam))
            se = vals.std() / np.sqrt(vals.size)
            assert abs(vals.mean() - closed) <= 4 * se
    # the zero-eta chain ends on tiny Gamma(1/2,1) pivots now and then,
    # so a few drift rejections are expected
    assert rejected >= 1


def test_star_last_pivot_is_half_gamma():
    rng = np.random.default_rng(84)
    w = 1.3
    star = graph_box(4, [(0, 1), (0, 2), (0, 3)])
    beta = sample_beta_sequential(star, w, rng, size=50_000)
    wm = star.weight_matrix(w)
    idx = np.arange(3)
    h3 = np.broadcast_to(-wm[:3, :3], (beta.shape[0], 3, 3)).copy()
    h3[:, idx, idx] = 2 * beta[:, :3]
    w3 = wm[3, :3]
    x = 2 * beta[:, 3] - np.einsum("k,bkl,l->b", w3, np.linalg.inv(h3), w3)
    assert kstest(x, lambda t: gammainc(0.5, t / 2)).pvalue > 0.001


def test_extension_counts_and_marginal_law():
    rng = np.random.default_rng(85)
    inner = build_box(2, 1, 1.0)
    outer = build_box(2, 2, 1.0)
    b_in = sample_beta_sequential(inner, 1.0, rng, size=200_000)
    b_out = extend_potential(inner, b_in, outer, 1.0, rng)
    assert b_out.shape[1] - b_in.shape[1] == outer.n_vertices - inner.n_vertices
    assert np.array_equal(b_out[:, : inner.n_vertices], b_in)
    lam = np.full(inner.n_vertices, 0.4)
    vals = np.exp(-(b_out[:, : inner.n_vertices] @ lam))
    closed = beta_laplace(lam, inner.eta, box_edges(inner, 1.0))
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - closed) <= 4 * se


def test_extension_rejects_non_prefix():
    inner = build_box(2, 1, 1.0)
    outer = build_box(3, 2, 1.0)
    rng = np.random.default_rng(86)
    with pytest.raises(ValueError):
        extend_potential(inner, np.ones(5), outer, 1.0, rng)


def test_psi_single_vertex_closed_form():
    rng = np.random.default_rng(87)
    box = build_box(2, 0, 1.5)
    beta = sample_beta_sequential(box, 1.5, rng)
    psi, g_hat = psi_on_box(box, beta, 1.5)
    assert psi[0] == pytest.approx(box.eta[0] / (2 * beta[0]), rel=1e-14)
    assert g_hat == pytest.approx(1 / (2 * beta[0]), rel=1e-14)


def test_psi_mean_one_on_growing_boxes():
    rng = np.random.default_rng(88)
    for n in (1, 2, 3):
        box = build_box(2, n, 1.0)
        beta = sample_beta_sequential(box, 1.0, rng, size=10_000)
        psi, _ = psi_on_box(box, beta, 1.0)
        root = psi[:, 0]
        se = root.std() / np.sqrt(root.size)
        assert abs(root.mean() - 1.0) <= 4 * se


def test_bracket_compensation_constant_across_boxes():
    # E[psi^2 - G_hat(o,o)] should not move between nested box sizes
    rng = np.random.default_rng(89)
    means = {}
    for n in (1, 2):
        box = build_box(2, n, 1.0)
        beta = sample_beta_sequential(box, 1.0, rng, size=20_000)
        psi, g_hat = psi_on_box(box, beta, 1.0)
        v = psi[:, 0] ** 2 - g_hat
        means[n] = (v.mean(), v.std() / np.sqrt(v.size))
    gap = abs(means[1][0] - means[2][0])
    assert gap <= 4 * np.hypot(means[1][1], means[2][1])


def test_path_expansion_bounds_box_green_from_below():
    rng = np.random.default_rng(90)
    w = 0.5
    box = build_box(2, 1, w)
    beta = sample_beta_sequential(box, w, rng)
    _, g_hat = psi_on_box(box, beta, w)
    adj = np.zeros((5, 5))
    for i, nb in enumerate(box.adjacency):
        adj[i, list(nb)] = 1.0
    parts = [path_expansion(adj, beta, w, 0, 0, max_len) for max_len in (0, 2, 4, 8, 16, 32)]
    assert all(b >= a for a, b in zip(parts, parts[1:]))
    assert all(p <= g_hat * (1 + 1e-12) for p in parts)
    assert (g_hat - parts[-1]) <= 1e-6 * g_hat


def test_drift_guard_trips_and_flags():
    rng = np.random.default_rng(91)
    box = build_box(2, 1, 1.0)
    import vrjp.lattice as lattice

    old = lattice._DRIFT_TOL
    lattice._DRIFT_TOL = 0.0
    try:
        with pytest.raises(DriftError):
            sample_beta_sequential(box, 1.0, rng, size=4)
    finally:
        lattice._DRIFT_TOL = old
    assert issubclass(DriftError, InvariantError)


def test_psi_rejects_indefinite_operator():
    box = build_box(2, 1, 1.0)
    with pytest.raises(InvariantError):
        psi_on_box(box, np.full(5, 1e-9), 1.0)


def test_sample_size_validation():
    rng = np.random.default_rng(92)
    box = build_box(1, 0, 1.0)
    with pytest.raises(ValueError):
        sample_beta_sequential(box, 1.0, rng, size=0)
    with pytest.raises(ValueError):
        sample_beta_sequential(box, -1.0, rng)
    single = sample_beta_sequential(box, 1.0, rng)
    assert single.shape == (1,)
