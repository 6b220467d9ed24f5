"""Deterministic annealing with size and typed capacity constraints."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (
    CapacitySpec,
    ClusterState,
    Dataset,
    InstanceError,
    conditional_entropy,
    distortion,
    initial_log_eta,
    modified_distortion,
    pairwise_sq_dists,
    partition_cost,
)
from .gibbs import (
    TYPED_ASSOC,
    Masses,
    logsumexp_rows,
    associations,
    log_prior,
    masses,
    weighted_sums,
)

log = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


class StarvedClusterError(RuntimeError):
    """A cluster lost all of its mass, so its centroid is undefined."""

    def __init__(self, index: int):
        super().__init__(f"cluster {index} has zero mass")
        self.index = index


class InfeasibleError(RuntimeError):
    """Capacities cannot be met at the current annealing parameter."""


@dataclass
class AnnealConfig:
    """Annealing schedule and inner-loop settings.

    ``beta_init="auto"`` starts at ``0.4 / lambda_max`` of the weighted data
    covariance.  ``beta_max="auto"`` keeps growing beta until the conditional
    entropy drops below ``hard_entropy``, the solution freezes, or beta
    reaches ``beta_init * auto_beta_span``.  Frozen means the hardened
    partition has not changed while beta doubled (``plateau_span``) and the
    entropy fell by less than ``plateau_rtol`` relative over that stretch
    (typed capacities usually force some points to stay split, so the entropy
    levels off above zero), or no resource moved more than ``freeze_tol``
    diameters over it while all resources are at least ``plateau_rtol``
    diameters apart.

    Without capacities the cluster weights stay uniform
    (``unconstrained_eta="uniform"``, the plain Gibbs distribution) or track
    the cluster masses (``"mass"``), which minimises the free energy over the
    weights and makes coincident resources act as a single one.

    With ``quench`` an unconstrained run ends at the zero-temperature limit:
    nearest-resource assignment and centroid steps from the last annealed
    locations until the partition stops changing.
    """

    beta_init: float | str = "auto"
    beta_growth: float = 1.05
    beta_max: float | str = "auto"
    inner_tol: float = 1e-8
    inner_max_iters: int = 2000
    eta_solver: str = "newton"
    eta_max_iters: int = 200
    perturb_eps: float = 1e-3
    sigma: float = 1.0
    rng_seed: int = 0
    typed_assoc: str = "restricted"
    hard_entropy: float = 1e-3
    auto_beta_span: float = 1e6
    plateau_span: float = 2.0
    plateau_rtol: float = 0.01
    freeze_tol: float = 1e-3
    quench: bool = True
    unconstrained_eta: str = "uniform"

    def __post_init__(self):
        if not self.beta_growth > 1:
            raise ValueError("beta_growth must exceed 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be at least 1")
        if not self.plateau_span > 1 or self.plateau_rtol < 0:
            raise ValueError("plateau_span must exceed 1 and plateau_rtol be nonnegative")
        if self.perturb_eps < 0:
            raise ValueError("perturb_eps must be nonnegative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.eta_solver not in ("newton", "fixed_point"):
            raise ValueError("eta_solver must be 'newton' or 'fixed_point'")
        if self.unconstrained_eta not in ("uniform", "mass"):
            raise ValueError("unconstrained_eta must be 'uniform' or 'mass'")
        if self.typed_assoc not in TYPED_ASSOC:
            raise ValueError(f"typed_assoc must be one of {TYPED_ASSOC}")
        for name in ("beta_init", "beta_max"):
            v = getattr(self, name)
            if isinstance(v, str):
                if v != "auto":
                    raise ValueError(f"{name} must be a number or 'auto'")
            elif not v > 0:
                raise ValueError(f"{name} must be positive")
        if not isinstance(self.beta_init, str) and not isinstance(self.beta_max, str):
            if not self.beta_max > self.beta_init:
                raise ValueError("beta_max must exceed beta_init")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryRecord:
    beta: float
    free_energy: float
    distortion: float
    modified_distortion: float
    entropy: float
    masses: np.ndarray
    residual: float
    iterations: int
    converged: bool


@dataclass
class InnerResult:
    state: ClusterState
    iterations: int
    converged: bool
    displacement: float
    eta_change: float
    free_energies: list[float] = field(default_factory=list)


@dataclass
class SolveReport:
    """Outcome of one solver run.

    ``residual`` is the final soft-mass constraint violation (NaN when there
    are no capacities).  ``hard_counts`` and ``hard_cost`` describe the
    hardened partition with resources moved to its weighted means.
    """

    method: str
    final_state: ClusterState
    partition: np.ndarray
    masses: Masses
    distortion: float
    residual: float
    hard_counts: np.ndarray
    hard_cost: float
    capacity: CapacitySpec
    trajectory: list[TrajectoryRecord] = field(default_factory=list)
    history: list[float] = field(default_factory=list)
    converged: bool = True
    nonconverged_steps: int = 0
    config: AnnealConfig | None = None


# -- elementary updates -------------------------------------------------------

def centroid_update(ds: Dataset, P: np.ndarray) -> np.ndarray:
    """Association-weighted means of the demand points, one per cluster."""
    mass, sums = weighted_sums(ds, P)
    starved = np.flatnonzero(mass <= _TINY)
    if starved.size:
        raise StarvedClusterError(int(starved[0]))
    return sums / mass[:, None]


def _normalise_log_eta(ds: Dataset, le: np.ndarray, typed_assoc: str) -> np.ndarray:
    if le.ndim == 2 and typed_assoc == "restricted":
        # Per-type column scale is free; pin each column to the type's demand.
        col = logsumexp_rows(le.T)
        with np.errstate(divide="ignore"):
            return le - col[None, :] + np.log(ds.type_weights())[None, :]
    return le - logsumexp_rows(le.reshape(1, -1))[0]


def _eta_step(ds, d, log_eta, beta, cap, typed_assoc):
    prior = log_prior(ds, log_eta, typed_assoc)
    lse = logsumexp_rows(prior - beta * d)
    with np.errstate(divide="ignore"):
        logw = np.log(ds.weights)
        log_lam = np.log(cap.lam)
    ratio = (logw - lse)[:, None] - beta * d

    if cap.mode == "typed" and typed_assoc == "restricted":
        reach = np.full(cap.lam.shape, -np.inf)
        for k in range(ds.n_types):
            rows = ratio[ds.types == k]
            reach[:, k] = logsumexp_rows(rows.T)
    else:
        reach = logsumexp_rows(ratio.T)
        if cap.mode == "typed":
            reach = np.repeat(reach[:, None], cap.lam.shape[1], axis=1)

    bad = np.isneginf(reach) & (cap.lam > 0)
    if np.any(bad):
        j = int(np.argwhere(bad)[0][0])
        raise InfeasibleError(f"cluster {j} receives no reachable mass at beta={beta:g}")
    with np.errstate(invalid="ignore"):
        new = np.where(cap.lam > 0, log_lam - reach, -np.inf)
    return _normalise_log_eta(ds, new, typed_assoc)


def _max_change(a, b):
    finite = np.isfinite(a) & np.isfinite(b)
    return float(np.max(np.abs(a[finite] - b[finite]), initial=0.0))


class _WeightProblem:
    """Constant pieces of the weight solve for one dataset and capacity set.

    Each group g of points (a demand type, or everything) only sees column
    ``u[:, g]`` of the log-weights.
    """

    def __init__(self, weights, groups, lam):
        self.w = weights
        self.groups = groups
        k, n_groups = lam.shape
        self.active = lam > 0
        self.simple = n_groups == 1 and bool(self.active.all())
        self.lam = np.where(self.active, lam, 0.0)
        onehot = np.zeros((weights.shape[0], n_groups))
        onehot[np.arange(weights.shape[0]), groups] = 1.0
        self.wg = onehot * weights[:, None]
        self.wgT = self.wg.T[:, :, None]
        act = self.active.T.astype(float)
        self.n_act = np.maximum(act.sum(axis=1), 1)
        self.eye = np.eye(k)
        self.ones_act = act[:, :, None] * act[:, None, :] / self.n_act[:, None, None]
        self.pin = (1.0 - act)[:, :, None] * self.eye
        self.diag = np.arange(k)

    def logits(self, A, u):
        if self.simple:
            return A + u[:, 0]
        return A + np.where(self.active, u, -np.inf)[:, self.groups].T


def _lse(L):
    m = L.max(axis=1)
    return m + np.log(np.exp(L - m[:, None]).sum(axis=1))


def _newton_single(prob: _WeightProblem, A, u, max_iters):
    """Two-dimensional version of :func:`_newton_weights` for one group."""
    w, lam, diag = prob.w, prob.lam[:, 0], prob.diag
    u = u[:, 0].copy()
    k = u.shape[0]
    L = A + u
    lse = _lse(L)
    f = float(w @ lse - lam @ u)
    mu = 0.0
    for _ in range(max_iters):
        P = np.exp(L - lse[:, None])
        wP = w[:, None] * P
        mass = wP.sum(axis=0)
        grad = mass - lam
        gmax = float(np.max(np.abs(grad)))
        if gmax <= 1e-13:
            break
        H = -(wP.T @ P)
        H[diag, diag] += mass
        scale = max(float(mass.sum()) / k, 1e-300)
        H += scale / k + 1e-12 * scale * np.eye(k)
        while True:
            step = np.linalg.solve(H if mu == 0 else H + mu * np.eye(k), -grad)
            slope = float(grad @ step)
            cand = u + step
            Lc = A + cand
            lsec = _lse(Lc)
            fc = float(w @ lsec - lam @ cand)
            slack = 1e-13 * (1.0 + abs(f))
            ok = fc <= f + 1e-4 * slope or (-slope <= slack and fc <= f + slack)
            if np.isfinite(fc) and ok:
                mu = mu / 4 if mu > 1e-12 * scale else 0.0
                break
            mu = 4 * mu if mu > 0 else gmax / 10
            if mu > 1e30:
                break
        if mu > 1e30:
            break
        done = np.max(np.abs(step)) <= 1e-15 * (1 + np.max(np.abs(u)))
        u, L, lse, f = cand, Lc, lsec, fc
        if done:
            P = np.exp(L - lse[:, None])
            break
    return u[:, None], P


def _newton_weights(prob: _WeightProblem, A, u, max_iters):
    """Log-weights ``u`` (K x G) whose Gibbs masses per group equal the capacities.

    The masses match exactly at the minimiser of the convex function
    sum_i w_i logsumexp_j(A_ij + u_j,g(i)) - sum lam * u, so this is the fixed
    point of the weight update.  Entries with zero capacity stay at -inf.
    Returns the weights together with the association matrix they induce.

    Levenberg-Marquardt damped Newton, batched over groups.  At high beta the
    Hessian is nearly singular whenever a cluster's mass sits in exponential
    tails; the damping then falls back to bounded gradient steps that grow
    geometrically while they keep succeeding.
    """
    w, lam, diag = prob.w, prob.lam, prob.diag
    u = np.where(prob.active, u, 0.0)
    if prob.simple:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return _newton_single(prob, A, u, max_iters)
    # wild trial steps may overflow; they come back non-finite and are rejected
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        L = prob.logits(A, u)
        lse = _lse(L)
        f = float(w @ lse - np.sum(lam * u))
        mu = 0.0
        for _ in range(max_iters):
            P = np.exp(L - lse[:, None])
            mass = P.T @ prob.wg                             # (K, G)
            grad = (mass - lam).T                            # (G, K)
            gmax = float(np.max(np.abs(grad)))
            if gmax <= 1e-13:
                break
            H = -(np.swapaxes(prob.wgT * P, 1, 2) @ P)
            H[:, diag, diag] += mass.T
            # each block is singular along its active all-ones vector; grad is orthogonal to it
            scale = np.maximum(H[:, diag, diag].sum(axis=1) / prob.n_act, 1e-300)
            H += scale[:, None, None] * (prob.ones_act + 1e-12 * prob.eye) + prob.pin
            while True:
                step = np.linalg.solve(H + mu * prob.eye, -grad[..., None])[..., 0].T
                slope = float(np.sum(grad.T * step))
                cand = u + step
                Lc = prob.logits(A, cand)
                lsec = _lse(Lc)
                fc = float(w @ lsec - np.sum(lam * cand))
                # below round-off the objective cannot rank steps; trust Newton there
                slack = 1e-13 * (1.0 + abs(f))
                ok = fc <= f + 1e-4 * slope or (-slope <= slack and fc <= f + slack)
                if np.isfinite(fc) and ok:
                    mu = mu / 4 if mu > 1e-12 * float(scale.max()) else 0.0
                    break
                mu = 4 * mu if mu > 0 else gmax / 10
                if mu > 1e30:
                    break
            if mu > 1e30:
                break
            done = np.max(np.abs(step)) <= 1e-15 * (1 + np.max(np.abs(u)))
            u, L, lse, f = cand, Lc, lsec, fc
            if done:
                P = np.exp(L - lse[:, None])
                break
    return np.where(prob.active, u, -np.inf), P


def _weight_problem(ds, cap, typed_assoc):
    if cap.mode == "typed" and typed_assoc == "restricted":
        return _WeightProblem(ds.weights, ds.types, cap.lam)
    return _WeightProblem(ds.weights, np.zeros(ds.n, dtype=int),
                          cap.cluster_masses()[:, None])


def solve_eta(ds, d, log_eta, beta, cap, cfg, prob=None):
    """Cluster weights whose Gibbs masses match the capacities at fixed locations.

    Returns the log-weights and the association matrix they induce.
    """
    if cfg.eta_solver == "fixed_point":
        le = log_eta
        for _ in range(cfg.eta_max_iters):
            new = _eta_step(ds, d, le, beta, cap, cfg.typed_assoc)
            change = _max_change(new, le)
            le = new
            if change < cfg.inner_tol:
                break
        logits = log_prior(ds, le, cfg.typed_assoc) - beta * d
        return le, np.exp(logits - logsumexp_rows(logits)[:, None])

    prob = prob or _weight_problem(ds, cap, cfg.typed_assoc)
    A = -beta * d
    if cap.mode == "sized":
        u, P = _newton_weights(prob, A, log_eta[:, None], cfg.eta_max_iters)
        u = u[:, 0]
    elif cfg.typed_assoc == "pooled":
        # Fixed point has eta_jk proportional to lam_jk within each row.
        row = prob.lam[:, 0]
        v, P = _newton_weights(prob, A, logsumexp_rows(log_eta)[:, None], cfg.eta_max_iters)
        with np.errstate(divide="ignore"):
            u = v + np.log(cap.lam) - np.log(row)[:, None]
    else:
        u, P = _newton_weights(prob, A, log_eta, cfg.eta_max_iters)
    return _normalise_log_eta(ds, u, cfg.typed_assoc), P


def eta_update(ds: Dataset, state: ClusterState, cap: CapacitySpec,
               typed_assoc: str = "restricted") -> np.ndarray:
    """One fixed-point update of the log cluster weights.

    eta_j <- lambda_j / sum_i p(x_i) exp(-beta d_ij) / sum_l eta_l exp(-beta d_il),
    renormalised.  In typed restricted mode the update runs per type, with
    sums over that type's points only.
    """
    if cap.mode == "none":
        raise ValueError("eta_update needs capacities")
    if cap.lam.shape != state.log_eta.shape:
        raise ValueError("capacity and cluster-weight shapes differ")
    d = pairwise_sq_dists(ds.points, state.locations)
    return _eta_step(ds, d, state.log_eta, state.beta, cap, typed_assoc)


def perturb_resources(Y: np.ndarray, eps: float, rng: np.random.Generator,
                      scale: float = 1.0) -> np.ndarray:
    """Add uniform noise in ``[-eps, eps] * scale`` to every coordinate."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    Y = np.array(Y, dtype=float)
    if eps == 0:
        return Y
    return Y + rng.uniform(-eps, eps, size=Y.shape) * scale


def harden(P: np.ndarray) -> np.ndarray:
    """Most likely cluster of each point; ties go to the lowest index."""
    return np.argmax(np.asarray(P), axis=1)


def descent_step(ds: Dataset, state: ClusterState, sigma: float = 1.0,
                 typed_assoc: str = "restricted"):
    """Scaled gradient step ``Y - (sigma^2 / 2) P^-1 grad F``.

    Returns the new locations, the direction ``-P^-1 grad F`` and its inner
    product with the gradient (never positive).  With ``sigma=1`` the step
    lands on the centroid update.
    """
    if state.beta <= 0:
        raise ValueError("descent step needs beta > 0")
    P = associations(ds, state, typed_assoc)
    mass, sums = weighted_sums(ds, P)
    starved = np.flatnonzero(mass <= _TINY)
    if starved.size:
        raise StarvedClusterError(int(starved[0]))
    Y0 = state.locations
    g = sums / mass[:, None]
    grad = 2.0 * (mass[:, None] * Y0 - sums)
    direction = 2.0 * (g - Y0)
    # (1 - s^2) Y + s^2 g is the same step, and equals g exactly for s = 1
    Y = (1.0 - sigma**2) * Y0 + sigma**2 * g
    return Y, direction, float(direction.ravel() @ grad.ravel())


def scale_instance(ds: Dataset, sigma: float):
    """Shrink coordinates by ``sigma``; betas map to ``beta * sigma**2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    scaled = Dataset(ds.points / sigma, ds.weights, ds.types, ds.n_types)
    scaled.points.setflags(write=False)
    return scaled, (lambda beta: beta * sigma**2)


def auto_beta_init(ds: Dataset) -> float:
    top = float(np.linalg.eigvalsh(np.atleast_2d(ds.covariance()))[-1])
    return 0.4 / top if top > 0 else 1.0


def capacity_residual(cap: CapacitySpec, m: Masses) -> float:
    if cap.mode == "none":
        return math.nan
    if cap.mode == "sized":
        return float(np.max(np.abs(m.per_cluster - cap.lam)))
    return float(np.max(np.abs(m.per_cluster_per_type - cap.lam)))


# -- inner loop and annealing -------------------------------------------------

def inner_solve(ds: Dataset, state: ClusterState, cap: CapacitySpec,
                cfg: AnnealConfig, update_eta: bool = True,
                rng: np.random.Generator | None = None) -> InnerResult:
    """Alternate weight and centroid updates at fixed beta until converged.

    Convergence means the largest location move is below
    ``inner_tol * diameter`` and the largest log-weight change below
    ``inner_tol``.  In unconstrained mode a starved cluster is re-seeded next
    to the heaviest one (needs ``rng``); otherwise it propagates.
    """
    diam = ds.diameter()
    beta = state.beta
    Y = np.array(state.locations)
    le = np.array(state.log_eta)
    constrained = cap.mode != "none" and update_eta
    free_mass = cap.mode == "none" and cfg.unconstrained_eta == "mass"
    free_energies = []
    disp = eta_change = math.inf
    prob = _weight_problem(ds, cap, cfg.typed_assoc) if constrained else None

    if not constrained:
        # clusters along the first axis: reductions over K are then elementwise
        XT = np.ascontiguousarray(ds.points.T)
        wX = ds.weights[:, None] * ds.points
        prior = log_prior(ds, le, cfg.typed_assoc)
        prior = prior[:, None] if prior.ndim == 1 else np.ascontiguousarray(prior.T)

    for it in range(1, cfg.inner_max_iters + 1):
        if constrained:
            d = pairwise_sq_dists(ds.points, Y)
            new_le, P = solve_eta(ds, d, le, beta, cap, cfg, prob)
            eta_change = _max_change(new_le, le)
            le = new_le
            mass, sums = weighted_sums(ds, P)
        else:
            eta_change = 0.0
            PT = (XT[0] - Y[:, 0, None]) ** 2
            for c in range(1, ds.dim):
                PT += (XT[c] - Y[:, c, None]) ** 2
            PT *= -beta
            PT += prior
            m = PT.max(axis=0)
            PT -= m
            np.exp(PT, out=PT)
            s = PT.sum(axis=0)
            PT /= s
            if beta > 0:
                free_energies.append(float(-(ds.weights @ (m + np.log(s))) / beta))
            mass, sums = PT @ ds.weights, PT @ wX
            if free_mass:
                with np.errstate(divide="ignore"):
                    new_le = np.log(mass)
                eta_change = _max_change(new_le, le)
                le = new_le
                prior = le[:, None]

        starved = np.flatnonzero(mass <= _TINY)
        if starved.size:
            if constrained or rng is None:
                raise StarvedClusterError(int(starved[0]))
            heavy = int(np.argmax(mass))
            for j in starved:
                Y[j] = perturb_resources(Y[heavy], max(cfg.perturb_eps, 1e-6), rng, diam)
            if free_mass:
                le[starved] = le[heavy] = le[heavy] - math.log(1 + starved.size)
                prior = le[:, None]
            log.debug("re-seeded starved clusters %s at beta=%g", starved.tolist(), beta)
            continue
        g = sums / mass[:, None]
        Y_new = g if cfg.sigma == 1.0 else Y + cfg.sigma**2 * (g - Y)
        disp = float(np.max(np.sqrt(((Y_new - Y) ** 2).sum(axis=1)))) / diam
        if disp < cfg.inner_tol and eta_change < cfg.inner_tol:
            return InnerResult(ClusterState(Y_new, le, beta), it, True, disp, eta_change,
                               free_energies)
        Y = Y_new

    return InnerResult(ClusterState(Y, le, beta), cfg.inner_max_iters, False, disp,
                       eta_change, free_energies)


def _rescale_log_eta(ds, state, beta, cap, cfg):
    # log-weights grow roughly linearly in beta once clusters have formed
    if cap.mode == "none" or state.beta <= 0:
        return state.log_eta
    le = state.log_eta * (beta / state.beta)
    return _normalise_log_eta(ds, le, cfg.typed_assoc)


def beta_schedule(beta_init: float, beta_growth: float, beta_max: float) -> np.ndarray:
    n = int(math.floor(math.log(beta_max / beta_init) / math.log(beta_growth) + 1e-9)) + 1
    return beta_init * beta_growth ** np.arange(n)


def _record(ds, state, cap, cfg, res, weighted):
    P = associations(ds, state, cfg.typed_assoc)
    m = masses(ds, P)
    if state.beta > 0:
        if weighted:
            prior = log_prior(ds, state.log_eta, cfg.typed_assoc)
        else:
            prior = 0.0
        lse = logsumexp_rows(prior - state.beta * pairwise_sq_dists(ds.points, state.locations))
        F = float(-(ds.weights @ lse) / state.beta)
    else:
        F = math.nan
    return TrajectoryRecord(
        beta=float(state.beta),
        free_energy=F,
        distortion=distortion(ds, state.locations),
        modified_distortion=modified_distortion(ds, state.locations, P),
        entropy=conditional_entropy(ds, P),
        masses=m.per_cluster,
        residual=capacity_residual(cap, m),
        iterations=res.iterations,
        converged=res.converged,
    )


def quench(ds: Dataset, locations, max_iters: int = 100) -> np.ndarray:
    """Hard-assignment centroid steps (the beta -> infinity limit) to a fixed point."""
    Y = np.array(locations, dtype=float)
    assign = None
    for _ in range(max_iters):
        new = np.argmin(pairwise_sq_dists(ds.points, Y), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        mass = np.bincount(assign, weights=ds.weights, minlength=Y.shape[0])
        sums = np.zeros_like(Y)
        np.add.at(sums, assign, ds.weights[:, None] * ds.points)
        full = mass > 0
        Y[full] = sums[full] / mass[full, None]
    return Y


def _frozen(history, cfg, diam) -> bool:
    """True when the solution stopped moving while beta doubled.

    ``history`` holds ``(beta, entropy, partition, locations)`` per step.
    Either the partition stayed put and the entropy levelled off, or every
    resource moved less than ``freeze_tol * diam`` while all resources are
    well apart (a coincident pair still has a split ahead of it).
    """
    beta, h, part, Y = history[-1]
    for b, h0, p0, y0 in reversed(history[:-1]):
        if b * cfg.plateau_span <= beta:
            break
    else:
        return False
    window = [rec for rec in history if rec[0] >= b]
    same = all(np.array_equal(rec[2], part) for rec in window)
    if same and h0 - h <= cfg.plateau_rtol * h0:
        return True
    moved = max(float(np.max(np.sqrt(((rec[3] - Y) ** 2).sum(axis=1)))) for rec in window)
    if Y.shape[0] > 1:
        sep = pairwise_sq_dists(Y, Y) + np.diag(np.full(Y.shape[0], np.inf))
        apart = math.sqrt(float(sep.min())) > cfg.plateau_rtol * diam
    else:
        apart = True
    return apart and moved <= cfg.freeze_tol * diam


def anneal(ds: Dataset, k: int, cap: CapacitySpec | None = None,
           cfg: AnnealConfig | None = None, update_eta: bool = True) -> SolveReport:
    """Run deterministic annealing from the fully fuzzy solution.

    All resources start at the weighted mean (plus a small perturbation)
    with weights equal to the capacities.  Beta grows geometrically; at each
    value the resources are perturbed and the inner loop re-converged.
    """
    cap = cap or CapacitySpec()
    cfg = cfg or AnnealConfig()
    if not 1 <= k <= ds.n:
        raise InstanceError(f"need 1 <= K <= N, got K={k}, N={ds.n}")
    cap.check_against(ds, k)

    rng = np.random.default_rng(cfg.rng_seed)
    diam = ds.diameter()
    beta0 = auto_beta_init(ds) if cfg.beta_init == "auto" else float(cfg.beta_init)
    if cfg.beta_max == "auto":
        betas = beta_schedule(beta0, cfg.beta_growth, beta0 * cfg.auto_beta_span)
        stop_when_hard = True
    else:
        if not float(cfg.beta_max) > beta0:
            raise ValueError("beta_max must exceed beta_init")
        betas = beta_schedule(beta0, cfg.beta_growth, float(cfg.beta_max))
        stop_when_hard = False

    Y = perturb_resources(np.tile(ds.mean(), (k, 1)), cfg.perturb_eps, rng, diam)
    state = ClusterState(Y, initial_log_eta(ds, k, cap), 0.0)
    weighted = cap.mode != "none" or cfg.unconstrained_eta == "mass"
    trajectory = []
    nonconverged = 0
    res = None
    history = []

    for beta in betas:
        start = state.replace(
            beta=float(beta),
            log_eta=(_rescale_log_eta(ds, state, float(beta), cap, cfg)
                     if update_eta else state.log_eta),
            locations=perturb_resources(state.locations, cfg.perturb_eps, rng, diam))
        try:
            res = inner_solve(ds, start, cap, cfg, update_eta, rng)
        except (InfeasibleError, StarvedClusterError) as exc:
            log.info("retrying beta=%g after %s", beta, exc)
            start = start.replace(
                locations=perturb_resources(state.locations, 10 * cfg.perturb_eps or 1e-3,
                                            rng, diam))
            try:
                res = inner_solve(ds, start, cap, cfg, update_eta, rng)
            except StarvedClusterError as exc2:
                raise InfeasibleError(str(exc2)) from exc2
        state = res.state
        nonconverged += not res.converged
        rec = _record(ds, state, cap, cfg, res, weighted)
        trajectory.append(rec)
        if stop_when_hard:
            if rec.entropy < cfg.hard_entropy:
                break
            part = harden(associations(ds, state, cfg.typed_assoc))
            history.append((rec.beta, rec.entropy, part, state.locations))
            if _frozen(history, cfg, diam):
                break

    if cfg.quench and cap.mode == "none":
        state = state.replace(locations=quench(ds, state.locations))
    return _finish("anneal" if update_eta else "fixed_eta_da", ds, state, cap, cfg,
                   trajectory, res.converged, nonconverged)


def _finish(method, ds, state, cap, cfg, trajectory, converged, nonconverged):
    P = associations(ds, state, cfg.typed_assoc if cfg else "restricted")
    part = harden(P)
    m = masses(ds, P)
    k = state.k
    cost, _ = partition_cost(ds, part, k)
    return SolveReport(
        method=method,
        final_state=state,
        partition=part,
        masses=m,
        distortion=distortion(ds, state.locations),
        residual=capacity_residual(cap, m),
        hard_counts=np.bincount(part, minlength=k),
        hard_cost=cost,
        capacity=cap,
        trajectory=trajectory,
        converged=converged,
        nonconverged_steps=nonconverged,
        config=cfg,
    )
