import math

import numpy as np
import pytest

from cap_anneal import (
    ClusterState,
    associations,
    centroid_update,
    conditional_entropy,
    free_energy,
    free_energy_gradient,
    harden,
    masses,
    modified_distortion,
    validate_dataset,
)
from cap_anneal.core import pairwise_sq_dists, uniform_log_eta

from conftest import random_instance


def test_beta_zero_uniform_rows(rng):
    ds, st = random_instance(rng, n=5, k=4, beta=0.0)
    P = associations(ds, st.replace(log_eta=uniform_log_eta(4)))
    np.testing.assert_array_equal(P, np.full((5, 4), 0.25))


def test_beta_zero_rows_equal_capacities(rng):
    ds, st = random_instance(rng, n=7, k=3, beta=0.0)
    lam = np.array([0.2, 0.5, 0.3])
    P = associations(ds, st.replace(log_eta=np.log(lam)))
    np.testing.assert_allclose(P, np.tile(lam, (7, 1)), rtol=0, atol=1e-15)


def test_large_beta_is_nearest_resource():
    ds = validate_dataset([[0.0], [1.0], [2.0], [3.0]])
    st = ClusterState([[0.0], [3.0]], uniform_log_eta(2), 1e6)
    P = associations(ds, st)
    np.testing.assert_array_equal(P, [[1, 0], [1, 0], [0, 1], [0, 1]])
    # equidistant point: the soft row is an exact tie and harden picks the lower index
    ds2 = validate_dataset([[1.5]])
    P2 = associations(ds2, st)
    np.testing.assert_array_equal(P2, [[0.5, 0.5]])
    assert harden(P2)[0] == 0


def test_masses_examples(rng):
    ds = validate_dataset(rng.normal(size=(5, 2)), [1, 2, 3, 4, 5])
    np.testing.assert_allclose(masses(ds, np.full((5, 3), 1 / 3)).per_cluster, [1 / 3] * 3)
    hard = np.eye(2)[[0, 1, 1, 0, 1]]
    np.testing.assert_allclose(masses(ds, hard).per_cluster, [5 / 15, 10 / 15])
    P = rng.dirichlet(np.ones(3), size=5)
    want = [sum(ds.weights[i] * P[i, j] for i in range(5)) for j in range(3)]
    np.testing.assert_allclose(masses(ds, P).per_cluster, want, rtol=1e-14)


def test_typed_masses(rng):
    ds = validate_dataset(rng.normal(size=(6, 1)), rng.uniform(size=6), types=[0, 1, 2, 0, 1, 1])
    P = rng.dirichlet(np.ones(2), size=6)
    m = masses(ds, P)
    for k in range(3):
        idx = np.flatnonzero(ds.types == k)
        np.testing.assert_allclose(m.per_cluster_per_type[:, k],
                                   (ds.weights[idx, None] * P[idx]).sum(axis=0), rtol=1e-14)
    np.testing.assert_allclose(m.per_cluster_per_type.sum(axis=0), ds.type_weights(), rtol=1e-14)


def test_free_energy_single_cluster(rng):
    ds, st = random_instance(rng, n=6, k=1, beta=2.5)
    F = free_energy(ds, st.replace(log_eta=np.zeros(1))).value
    assert F == pytest.approx(modified_distortion(ds, st.locations, np.ones((6, 1))), rel=1e-13)


def test_free_energy_coincident_pair(rng):
    ds, st = random_instance(rng, n=6, k=1, beta=3.0)
    single = free_energy(ds, st, weighted=False).value
    pair = st.replace(locations=np.vstack([st.locations, st.locations]), log_eta=np.zeros(2))
    assert free_energy(ds, pair, weighted=False).value == pytest.approx(
        single - math.log(2) / 3.0, rel=1e-13)


def test_free_energy_lagrangian_identity(rng):
    ds, st = random_instance(rng, n=4, k=2, beta=1.7)
    st = st.replace(log_eta=np.zeros(2))
    P = associations(ds, st)
    want = modified_distortion(ds, st.locations, P) - conditional_entropy(ds, P) / st.beta
    assert free_energy(ds, st, weighted=False).value == pytest.approx(want, rel=1e-12)


def test_free_energy_needs_positive_beta(rng):
    ds, st = random_instance(rng, beta=0.0)
    with pytest.raises(ValueError):
        free_energy(ds, st)
    with pytest.raises(ValueError):
        free_energy_gradient(ds, st)


def test_associations_reject_negative_beta(rng):
    ds, st = random_instance(rng)
    object.__setattr__(st, "beta", -1.0)
    with pytest.raises(ValueError):
        associations(ds, st)


def test_typed_weights_need_types(rng):
    ds, st = random_instance(rng, typed=2)
    plain = validate_dataset(ds.points)
    with pytest.raises(ValueError):
        associations(plain, st)
    P = associations(plain, st, "pooled")
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_typed_restricted_uses_own_column(rng):
    ds, st = random_instance(rng, n=6, k=3, beta=0.8, typed=2)
    P = associations(ds, st)
    d = pairwise_sq_dists(ds.points, st.locations)
    for i in range(6):
        row = st.eta[:, ds.types[i]] * np.exp(-st.beta * d[i])
        np.testing.assert_allclose(P[i], row / row.sum(), rtol=1e-12)
    pooled = associations(ds, st, "pooled")
    for i in range(6):
        row = st.eta.sum(axis=1) * np.exp(-st.beta * d[i])
        np.testing.assert_allclose(pooled[i], row / row.sum(), rtol=1e-12)


def test_gradient_at_fixed_point_is_zero():
    ds = validate_dataset([[-1.0], [1.0]])
    st = ClusterState([[-1.0], [1.0]], uniform_log_eta(2), 10.0)
    # iterate the centroid map to its fixed point first
    for _ in range(100):
        st = st.replace(locations=centroid_update(ds, associations(ds, st)))
    np.testing.assert_allclose(free_energy_gradient(ds, st), 0.0, atol=1e-14)


def test_gradient_single_cluster_bowl(rng):
    ds, st = random_instance(rng, n=6, k=1, beta=2.0)
    delta = np.array([0.3, -0.2])
    st = st.replace(locations=(ds.mean() + delta)[None, :])
    np.testing.assert_allclose(free_energy_gradient(ds, st), 2 * delta[None, :], atol=1e-14)


def central_difference(ds, st, h=1e-5):
    g = np.zeros_like(st.locations)
    for idx in np.ndindex(*g.shape):
        up, dn = np.array(st.locations), np.array(st.locations)
        up[idx] += h
        dn[idx] -= h
        g[idx] = (free_energy(ds, st.replace(locations=up)).value
                  - free_energy(ds, st.replace(locations=dn)).value) / (2 * h)
    return g


def test_gradient_matches_finite_differences(rng):
    ds, st = random_instance(rng, n=6, k=3, beta=2.0)
    g = free_energy_gradient(ds, st)
    fd = central_difference(ds, st)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)


def test_gradient_identity_with_centroid_update(rng):
    ds, st = random_instance(rng, n=7, k=3, beta=1.3)
    P = associations(ds, st)
    m = masses(ds, P).per_cluster
    want = 2 * m[:, None] * (st.locations - centroid_update(ds, P))
    np.testing.assert_allclose(free_energy_gradient(ds, st), want, atol=1e-12)


def test_no_overflow_at_huge_beta(rng):
    ds, st = random_instance(rng, n=20, k=4, beta=1e8)
    P = associations(ds, st)
    assert np.all(np.isfinite(P))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(free_energy(ds, st).value)
