"""Comparison solvers and exhaustive oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CapacitySpec,
    ClusterState,
    Dataset,
    InstanceError,
    distortion,
    pairwise_sq_dists,
    partition_cost,
    uniform_log_eta,
)
from .gibbs import Masses
from .solver import AnnealConfig, SolveReport, anneal

MAX_ENUMERATION = 10**7
_CHUNK = 1 << 16


@dataclass
class OracleResult:
    best_partition: np.ndarray
    best_locations: np.ndarray
    best_cost: float
    evaluated_count: int


def random_init(ds: Dataset, k: int, rng: np.random.Generator) -> np.ndarray:
    """K distinct data points picked uniformly at random."""
    if not 1 <= k <= ds.n:
        raise InstanceError(f"need 1 <= K <= N, got K={k}, N={ds.n}")
    return np.array(ds.points[rng.choice(ds.n, size=k, replace=False)])


def lloyd(ds: Dataset, k: int, init_locations, max_iters: int = 300) -> SolveReport:
    """Plain k-means: nearest assignment then weighted centroids.

    Stops once the assignment repeats.  A cluster that loses all its points is
    moved onto the point currently worst served.  ``history`` holds the
    distortion after every centroid step.
    """
    Y = np.array(init_locations, dtype=float)
    if Y.ndim != 2 or Y.shape != (k, ds.dim):
        raise ValueError(f"init_locations must have shape ({k}, {ds.dim})")
    if not 1 <= k <= ds.n:
        raise InstanceError(f"need 1 <= K <= N, got K={k}, N={ds.n}")

    history = []
    assign = None
    converged = False
    for _ in range(max_iters):
        d = pairwise_sq_dists(ds.points, Y)
        new = np.argmin(d, axis=1)
        mass = np.bincount(new, weights=ds.weights, minlength=k)
        for j in np.flatnonzero(mass <= 0):
            far = int(np.argmax(d[np.arange(ds.n), new]))
            Y[j] = ds.points[far]
            new[far] = j
            d[:, j] = pairwise_sq_dists(ds.points, Y[j:j + 1])[:, 0]
            mass = np.bincount(new, weights=ds.weights, minlength=k)
        if assign is not None and np.array_equal(new, assign):
            converged = True
            break
        assign = new
        sums = np.zeros((k, ds.dim))
        np.add.at(sums, assign, ds.weights[:, None] * ds.points)
        full = mass > 0
        Y[full] = sums[full] / mass[full, None]
        history.append(distortion(ds, Y))

    part = np.argmin(pairwise_sq_dists(ds.points, Y), axis=1)
    m = np.bincount(part, weights=ds.weights, minlength=k)
    cost, _ = partition_cost(ds, part, k)
    return SolveReport(
        method="lloyd",
        final_state=ClusterState(Y, uniform_log_eta(k), 0.0),
        partition=part,
        masses=Masses(m),
        distortion=distortion(ds, Y),
        residual=math.nan,
        hard_counts=np.bincount(part, minlength=k),
        hard_cost=cost,
        capacity=CapacitySpec(),
        history=history,
        converged=converged,
    )


def fixed_eta_da(ds: Dataset, cap: CapacitySpec, cfg: AnnealConfig | None = None) -> SolveReport:
    """Annealing with the cluster weights pinned to the capacities."""
    if cap.mode == "none":
        raise InstanceError("the fixed-weight baseline needs capacities")
    return anneal(ds, cap.k, cap, cfg, update_eta=False)


# -- exhaustive oracles -------------------------------------------------------

def _labelings(n: int, k: int, canonical: bool):
    """All label vectors in ``{0..k-1}^n`` in lexicographic order, in chunks.

    With ``canonical`` only first-occurrence labelings are kept (cluster 0
    appears first, then 1, ...), one per partition into at most k blocks.
    """
    total = k**n
    powers = k ** np.arange(n - 1, -1, -1)
    for lo in range(0, total, _CHUNK):
        codes = np.arange(lo, min(lo + _CHUNK, total))
        labels = (codes[:, None] // powers[None, :]) % k
        if canonical:
            seen = np.maximum.accumulate(labels, axis=1)
            ok = labels[:, 0] == 0
            if n > 1:
                ok &= np.all(labels[:, 1:] <= seen[:, :-1] + 1, axis=1)
            labels = labels[ok]
        yield labels


def _costs(ds: Dataset, labels: np.ndarray, k: int) -> np.ndarray:
    """Sum of weighted squared distances to cluster means, per labeling.

    Uses cost = sum_i w_i |x_i|^2 - sum_c |S_c|^2 / W_c with S_c, W_c the
    weighted coordinate sum and weight of cluster c.
    """
    q = float(ds.weights @ np.einsum("nd,nd->n", ds.points, ds.points))
    wx = ds.weights[:, None] * ds.points
    cost = np.full(labels.shape[0], q)
    for c in range(k):
        member = (labels == c).astype(float)
        W = member @ ds.weights
        S = member @ wx
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(W > 0, np.einsum("md,md->m", S, S) / W, 0.0)
        cost -= gain
    return cost


def _search(ds: Dataset, k: int, canonical: bool, keep=None) -> OracleResult:
    best_cost, best = math.inf, None
    count = 0
    for labels in _labelings(ds.n, k, canonical):
        if keep is not None:
            labels = labels[keep(labels)]
        if labels.shape[0] == 0:
            continue
        count += labels.shape[0]
        cost = _costs(ds, labels, k)
        i = int(np.argmin(cost))
        # chunks arrive in lexicographic order, so strict < keeps the first minimiser
        if cost[i] < best_cost:
            best_cost, best = float(cost[i]), labels[i].copy()
    if best is None:
        raise InstanceError("no partition satisfies the constraints")
    exact, locs = partition_cost(ds, best, k)
    return OracleResult(best, locs, max(exact, 0.0), count)


def _guard(n: int, k: int):
    if k < 1 or k > n:
        raise InstanceError(f"need 1 <= K <= N, got K={k}, N={n}")
    if k**n > MAX_ENUMERATION:
        raise InstanceError(f"K^N = {k}^{n} exceeds the enumeration limit {MAX_ENUMERATION}")


def brute_force_unconstrained(ds: Dataset, k: int) -> OracleResult:
    """Global optimum of the K-resource clustering cost by enumeration.

    Each partition into at most K groups is visited once (first-occurrence
    labels) and every resource sits at its group's weighted mean.
    """
    _guard(ds.n, k)
    return _search(ds, k, canonical=True)


def brute_force_capacitated(ds: Dataset, k: int, counts) -> OracleResult:
    """Best partition in which cluster j holds exactly ``counts[j]`` points.

    Only defined for uniform weights, where the counts are the capacities.
    """
    counts = np.asarray(counts)
    if counts.shape != (k,) or not np.all(np.equal(np.mod(counts, 1), 0)):
        raise InstanceError(f"counts must be {k} integers")
    counts = counts.astype(int)
    if np.any(counts < 0) or counts.sum() != ds.n:
        raise InstanceError(f"counts must be nonnegative and sum to N={ds.n}")
    if np.ptp(ds.weights) > 1e-12 * ds.weights.max():
        raise InstanceError("capacitated enumeration needs uniform weights")
    _guard(ds.n, k)

    def keep(labels):
        sizes = np.stack([(labels == c).sum(axis=1) for c in range(k)], axis=1)
        return np.all(sizes == counts[None, :], axis=1)

    return _search(ds, k, canonical=False, keep=keep)
