"""Synthetic stand-ins for the vehicle-allocation, pickup and image scenarios."""

from __future__ import annotations

import numpy as np

from .core import CapacitySpec, Dataset, validate_dataset

VEHICLE_CAPACITIES = (10, 12, 12, 8, 11, 7)
PICKUP_TYPE_COUNTS = (34, 36, 30)


def customer_instance(seed: int = 0):
    """60 customers spread very unevenly over the unit square.

    A dense blob holds almost half the demand, two smaller blobs and a thin
    scatter hold the rest, and one remote customer in the top-left corner
    appears twice.  Capacities follow the 10:12:12:8:11:7 vehicle fleet.
    """
    rng = np.random.default_rng(seed)
    blobs = [((0.72, 0.28), 0.045, 27), ((0.30, 0.55), 0.06, 14), ((0.80, 0.80), 0.05, 10)]
    pts = [rng.normal(c, s, size=(n, 2)) for c, s, n in blobs]
    pts.append(rng.uniform(0.1, 0.9, size=(6, 2)))
    corner = np.array([[0.03, 0.97]])
    pts += [corner, corner, corner + rng.normal(0, 0.01, size=(1, 2))]
    points = np.clip(np.vstack(pts), 0.0, 1.0)
    assert points.shape[0] == sum(VEHICLE_CAPACITIES)
    return validate_dataset(points), CapacitySpec.from_amounts(VEHICLE_CAPACITIES)


def random_typed_capacities(ds: Dataset, k: int, rng: np.random.Generator,
                            floor: float = 0.2) -> CapacitySpec:
    """Random ``K x p`` capacities whose type columns sum to each type's demand."""
    tw = ds.type_weights()
    shares = rng.dirichlet(np.ones(k), size=ds.n_types).T
    shares = (shares + floor / k) / (1.0 + floor)
    lam = shares * tw[None, :]
    return CapacitySpec("typed", lam / lam.sum())


def pickup_instance(type_counts=PICKUP_TYPE_COUNTS, n_vehicles: int = 10,
                    seed: int = 0, horizon: float = 24.0):
    """Shipments with typed time windows over one working day.

    Returns ``(windows, dataset, capacities)``; each shipment's location is
    the midpoint of its window and types are 0-based.
    """
    rng = np.random.default_rng(seed)
    windows, types = [], []
    p = len(type_counts)
    for k, count in enumerate(type_counts):
        # types peak at different hours so per-type demand is uneven in time
        centre = horizon * (k + 1) / (p + 1)
        start = np.clip(rng.normal(centre, horizon / 5, size=count), 0, horizon - 1)
        length = rng.uniform(0.5, 4.0, size=count)
        end = np.minimum(start + length, horizon)
        windows.append(np.column_stack([start, end]))
        types += [k] * count
    windows = np.vstack(windows)
    ds = validate_dataset(windows.mean(axis=1), types=types)
    return windows, ds, random_typed_capacities(ds, n_vehicles, rng)


def random_suite(n_instances: int = 20, n: int = 8, dim: int = 2, seed: int = 0):
    """Uniform-weight random point sets in the unit cube."""
    rng = np.random.default_rng(seed)
    return [validate_dataset(rng.uniform(size=(n, dim))) for _ in range(n_instances)]


def synthetic_image(width: int = 213, height: int = 146, seed: int = 0) -> np.ndarray:
    """``(height, width, 3)`` uint8 test picture: gradients, shapes and grain."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    u, v = xx / max(width - 1, 1), yy / max(height - 1, 1)
    img = np.empty((height, width, 3))
    img[..., 0] = 0.25 + 0.5 * u
    img[..., 1] = 0.35 + 0.3 * v
    img[..., 2] = 0.7 - 0.4 * u * v
    face = (u - 0.5) ** 2 / 0.06 + (v - 0.5) ** 2 / 0.12 < 1
    img[face] = (0.85, 0.65, 0.5)
    for cx in (0.42, 0.58):
        eye = (u - cx) ** 2 + (v - 0.42) ** 2 < 0.0012
        img[eye] = (0.1, 0.08, 0.06)
    mouth = (np.abs(v - 0.65) < 0.02) & (np.abs(u - 0.5) < 0.08)
    img[mouth] = (0.6, 0.15, 0.15)
    hair = (v < 0.22) & ((u - 0.5) ** 2 + (v - 0.35) ** 2 < 0.07)
    img[hair] = (0.2, 0.15, 0.1)
    img += rng.normal(0, 0.02, size=img.shape)
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
