"""Gibbs associations, cluster masses and free energy (log domain)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClusterState, Dataset, pairwise_sq_dists

TYPED_ASSOC = ("restricted", "pooled")


@dataclass(frozen=True)
class FreeEnergyValue:
    value: float
    per_point_logsumexp: np.ndarray


@dataclass(frozen=True)
class Masses:
    """Soft cluster masses, and per-type masses for typed datasets."""

    per_cluster: np.ndarray
    per_cluster_per_type: np.ndarray | None = None


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp with max subtraction; all -inf rows give -inf."""
    m = a.max(axis=1)
    if not np.all(np.isfinite(m)):
        m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(a - m[:, None]).sum(axis=1)
    if np.all(s > 0):
        return m + np.log(s)
    with np.errstate(divide="ignore"):
        return m + np.log(s)


def log_prior(ds: Dataset, le: np.ndarray, typed_assoc: str = "restricted") -> np.ndarray:
    """Per-point log cluster weights, shape ``(N, K)`` or ``(K,)``."""
    if le.ndim == 1:
        return le
    if typed_assoc not in TYPED_ASSOC:
        raise ValueError(f"typed_assoc must be one of {TYPED_ASSOC}")
    if typed_assoc == "pooled":
        return logsumexp_rows(le)
    if not ds.typed:
        raise ValueError("typed cluster weights need a typed dataset")
    if le.shape[1] != ds.n_types:
        raise ValueError("cluster weight matrix and dataset disagree on type count")
    return le[:, ds.types].T


def log_kernel(ds: Dataset, state: ClusterState, typed_assoc: str = "restricted"):
    """Unnormalised log associations ``log eta - beta d`` and the distances."""
    if state.beta < 0:
        raise ValueError("beta must be nonnegative")
    d = pairwise_sq_dists(ds.points, state.locations)
    logits = log_prior(ds, state.log_eta, typed_assoc) - state.beta * d
    return logits, d


def log_associations(ds: Dataset, state: ClusterState, typed_assoc: str = "restricted"):
    """Log of the association matrix and the per-row log partition function."""
    logits, _ = log_kernel(ds, state, typed_assoc)
    lse = logsumexp_rows(logits)
    return logits - lse[:, None], lse


def associations(ds: Dataset, state: ClusterState, typed_assoc: str = "restricted") -> np.ndarray:
    """Row-stochastic matrix of p(y_j | x_i).

    With uniform cluster weights this is the plain Gibbs distribution.  For
    typed weights each point uses the column of its own type
    (``typed_assoc="restricted"``) or the sum over types (``"pooled"``).
    """
    logits, _ = log_kernel(ds, state, typed_assoc)
    # normalise after the max shift; subtracting the log partition instead
    # loses digits when beta * d is large
    m = logits.max(axis=1, keepdims=True)
    P = np.exp(logits - m)
    P /= P.sum(axis=1, keepdims=True)
    return P


def masses(ds: Dataset, P: np.ndarray) -> Masses:
    per_cluster = ds.weights @ P
    per_type = None
    if ds.typed:
        per_type = np.zeros((P.shape[1], ds.n_types))
        np.add.at(per_type.T, ds.types, ds.weights[:, None] * P)
    return Masses(per_cluster, per_type)


def free_energy(ds: Dataset, state: ClusterState, weighted: bool = True,
                typed_assoc: str = "restricted") -> FreeEnergyValue:
    """F = -(1/beta) sum_i p(x_i) log sum_j eta_j exp(-beta d(x_i, y_j)).

    ``weighted=False`` drops the cluster weights (all equal to one).
    """
    if state.beta <= 0:
        raise ValueError("free energy is undefined for beta <= 0")
    if weighted:
        logits, _ = log_kernel(ds, state, typed_assoc)
    else:
        logits = -state.beta * pairwise_sq_dists(ds.points, state.locations)
    lse = logsumexp_rows(logits)
    return FreeEnergyValue(float(-(ds.weights @ lse) / state.beta), lse)


def weighted_sums(ds: Dataset, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cluster masses and association-weighted coordinate sums."""
    wp = ds.weights[:, None] * P
    return wp.sum(axis=0), wp.T @ ds.points


def free_energy_gradient(ds: Dataset, state: ClusterState,
                         typed_assoc: str = "restricted") -> np.ndarray:
    """Gradient of the free energy with respect to the locations, ``(K, d)``.

    Row j is ``2 sum_i p(x_i) p(y_j|x_i) (y_j - x_i)``; the cluster weights
    are held fixed.
    """
    if state.beta <= 0:
        raise ValueError("free energy is undefined for beta <= 0")
    P = associations(ds, state, typed_assoc)
    mass, sums = weighted_sums(ds, P)
    return 2.0 * (mass[:, None] * state.locations - sums)
