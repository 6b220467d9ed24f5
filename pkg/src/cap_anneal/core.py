"""Instance data model and the scalar quality metrics.

Demand points live in a ``Dataset``, capacities in a ``CapacitySpec`` and the
mutable part of a solve (resource locations, cluster weights, annealing
parameter) in a ``ClusterState``.  Association matrices and partitions are
plain numpy arrays: an ``(N, K)`` row-stochastic float array and an ``(N,)``
integer array of 0-based cluster indices respectively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("none", "sized", "typed")


class InstanceError(ValueError):
    """Raised for malformed or infeasible problem data."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Weighted demand points, optionally labelled with a type.

    ``types`` holds 0-based type indices; ``n_types`` is the number of types
    (every type in ``0..n_types-1`` occurs at least once).  Build instances
    through :func:`validate_dataset`.
    """

    points: np.ndarray
    weights: np.ndarray
    types: np.ndarray | None = None
    n_types: int = 0

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def typed(self) -> bool:
        return self.types is not None

    def type_weights(self) -> np.ndarray:
        """Total demand weight carried by each type."""
        if self.types is None:
            raise InstanceError("dataset has no type labels")
        return np.bincount(self.types, weights=self.weights, minlength=self.n_types)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def diameter(self) -> float:
        """Diagonal of the bounding box; 1.0 for a single repeated point."""
        span = self.points.max(axis=0) - self.points.min(axis=0)
        diag = float(np.sqrt(span @ span))
        return diag if diag > 0 else 1.0

    def covariance(self) -> np.ndarray:
        centred = self.points - self.mean()
        return (centred * self.weights[:, None]).T @ centred


def validate_dataset(points, weights=None, types=None, n_types=None) -> Dataset:
    """Check and normalise raw demand data.

    ``types`` are 0-based labels.  Weights default to uniform and are
    renormalised to sum to one.
    """
    pts = np.array(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise InstanceError("points must be a list of equal-length vectors")
    if pts.shape[0] == 0 or pts.shape[1] == 0:
        raise InstanceError("need at least one point of dimension >= 1")
    if not np.all(np.isfinite(pts)):
        raise InstanceError("points must be finite")
    n = pts.shape[0]

    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != n:
            raise InstanceError(f"got {w.shape[0]} weights for {n} points")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InstanceError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise InstanceError("weights sum to zero")
        w = w / total

    labels = None
    p = 0
    if types is not None:
        labels = np.array(types).reshape(-1)
        if labels.shape[0] != n:
            raise InstanceError(f"got {labels.shape[0]} type labels for {n} points")
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InstanceError("type labels must be integers")
        labels = labels.astype(int)
        p = int(labels.max()) + 1 if n_types is None else int(n_types)
        if labels.min() < 0 or labels.max() >= p:
            raise InstanceError(f"type label out of range 0..{p - 1}")
        missing = np.setdiff1d(np.arange(p), labels)
        if missing.size:
            raise InstanceError(f"types {missing.tolist()} have no points")
        labels = _readonly(labels)

    return Dataset(_readonly(pts), _readonly(w), labels, p)


@dataclass(frozen=True, eq=False)
class CapacitySpec:
    """Relative capacities.

    ``mode`` is ``"none"``, ``"sized"`` (one mass per cluster) or ``"typed"``
    (a ``K x p`` matrix of masses per cluster and demand type).
    """

    mode: str = "none"
    lam: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InstanceError(f"unknown capacity mode {self.mode!r}")
        if self.mode == "none":
            if self.lam is not None:
                raise InstanceError("mode 'none' takes no capacities")
            return
        lam = np.array(self.lam, dtype=float)
        if not np.all(np.isfinite(lam)):
            raise InstanceError("capacities must be finite")
        if self.mode == "sized":
            if lam.ndim != 1:
                raise InstanceError("sized capacities must be a vector")
            if np.any(lam <= 0):
                raise InstanceError("sized capacities must be positive")
        else:
            if lam.ndim != 2:
                raise InstanceError("typed capacities must be a K x p matrix")
            if np.any(lam < 0):
                raise InstanceError("typed capacities must be nonnegative")
            if np.any(lam.sum(axis=1) <= 0):
                raise InstanceError("every cluster needs some typed capacity")
        if abs(lam.sum() - 1.0) > 1e-12:
            raise InstanceError(f"capacities sum to {lam.sum()!r}, expected 1")
        object.__setattr__(self, "lam", _readonly(lam))

    @classmethod
    def from_amounts(cls, amounts, mode=None) -> CapacitySpec:
        """Normalise raw amounts (e.g. vehicle sizes) into relative masses."""
        a = np.array(amounts, dtype=float)
        if mode is None:
            mode = "typed" if a.ndim == 2 else "sized"
        total = a.sum()
        if not np.isfinite(total) or total <= 0:
            raise InstanceError("capacity amounts must have a positive sum")
        return cls(mode, a / total)

    @property
    def k(self) -> int | None:
        return None if self.lam is None else self.lam.shape[0]

    def cluster_masses(self) -> np.ndarray:
        """Target total mass per cluster."""
        if self.lam is None:
            raise InstanceError("mode 'none' has no target masses")
        return self.lam if self.lam.ndim == 1 else self.lam.sum(axis=1)

    def check_against(self, ds: Dataset, k: int | None = None) -> None:
        """Raise unless this spec is feasible for ``ds`` with ``k`` clusters."""
        if self.mode == "none":
            return
        if k is not None and self.k != k:
            raise InstanceError(f"{self.k} capacities given for K={k}")
        if self.mode == "typed":
            if not ds.typed:
                raise InstanceError("typed capacities need a typed dataset")
            if self.lam.shape[1] != ds.n_types:
                raise InstanceError(
                    f"capacity matrix has {self.lam.shape[1]} type columns, "
                    f"dataset has {ds.n_types} types")
            gap = np.abs(self.lam.sum(axis=0) - ds.type_weights())
            if gap.max() > 1e-9:
                raise InstanceError(
                    "per-type capacities do not match per-type demand "
                    f"(max gap {gap.max():.3g})")


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Resource locations, log cluster weights and the annealing parameter.

    ``log_eta`` has shape ``(K,)`` or ``(K, p)`` for typed problems.
    """

    locations: np.ndarray
    log_eta: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        y = np.array(self.locations, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise InstanceError("locations must be a K x d matrix, K >= 1")
        if not np.all(np.isfinite(y)):
            raise InstanceError("locations must be finite")
        le = np.array(self.log_eta, dtype=float)
        if le.shape[0] != y.shape[0]:
            raise InstanceError("log_eta and locations disagree on K")
        if self.beta < 0:
            raise InstanceError("beta must be nonnegative")
        object.__setattr__(self, "locations", _readonly(y))
        object.__setattr__(self, "log_eta", _readonly(le))

    @property
    def k(self) -> int:
        return self.locations.shape[0]

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)

    def replace(self, **changes) -> ClusterState:
        kw = dict(locations=self.locations, log_eta=self.log_eta, beta=self.beta)
        kw.update(changes)
        return ClusterState(**kw)


def uniform_log_eta(k: int) -> np.ndarray:
    return np.full(k, -np.log(k))


def initial_log_eta(ds: Dataset, k: int, cap: CapacitySpec) -> np.ndarray:
    """Cluster weights at the start of annealing: the capacities themselves."""
    if cap.mode == "none":
        return uniform_log_eta(k)
    with np.errstate(divide="ignore"):
        return np.log(cap.lam)


def squared_distance(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    return float(diff @ diff)


def pairwise_sq_dists(points: np.ndarray, locations: np.ndarray) -> np.ndarray:
    """``(N, K)`` matrix of squared Euclidean distances."""
    if points.shape[1] != locations.shape[1]:
        raise ValueError(
            f"dimension mismatch: points d={points.shape[1]}, "
            f"locations d={locations.shape[1]}")
    # one coordinate at a time avoids an N x K x d temporary
    d = (points[:, 0, None] - locations[:, 0]) ** 2
    for c in range(1, points.shape[1]):
        d += (points[:, c, None] - locations[:, c]) ** 2
    return d


def check_row_stochastic(P: np.ndarray, n: int | None = None, tol: float = 1e-10):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or (n is not None and P.shape[0] != n):
        raise ValueError("association matrix has the wrong shape")
    if np.any(P < -tol) or np.any(P > 1 + tol):
        raise ValueError("association entries must lie in [0, 1]")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > tol:
        raise ValueError("association rows must sum to 1")
    return P


def distortion(ds: Dataset, locations) -> float:
    """Expected squared distance to the nearest resource."""
    d = pairwise_sq_dists(ds.points, np.atleast_2d(np.asarray(locations, float)))
    return float(ds.weights @ d.min(axis=1))


def modified_distortion(ds: Dataset, locations, P) -> float:
    """Expected squared distance under soft associations."""
    Y = np.atleast_2d(np.asarray(locations, float))
    P = check_row_stochastic(P, ds.n)
    if P.shape[1] != Y.shape[0]:
        raise ValueError("association matrix and locations disagree on K")
    d = pairwise_sq_dists(ds.points, Y)
    return float(ds.weights @ (P * d).sum(axis=1))


def conditional_entropy(ds: Dataset, P) -> float:
    """H(Y|X) in nats, with 0 log 0 = 0."""
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(ds.weights @ terms.sum(axis=1)))


def partition_cost(ds: Dataset, assign, k: int) -> tuple[float, np.ndarray]:
    """Cost of a hard partition with each resource at its cluster's weighted mean.

    Empty clusters are placed at the global weighted mean; they contribute
    nothing to the cost.
    """
    assign = np.asarray(assign, dtype=int)
    mass = np.bincount(assign, weights=ds.weights, minlength=k)
    sums = np.zeros((k, ds.dim))
    np.add.at(sums, assign, ds.weights[:, None] * ds.points)
    locs = np.tile(ds.mean(), (k, 1))
    full = mass > 0
    locs[full] = sums[full] / mass[full, None]
    resid = ds.points - locs[assign]
    return float(ds.weights @ np.einsum("nd,nd->n", resid, resid)), locs
