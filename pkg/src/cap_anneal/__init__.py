"""Deterministic annealing for clustering with capacity constraints."""

from .core import (
    CapacitySpec,
    ClusterState,
    Dataset,
    InstanceError,
    conditional_entropy,
    distortion,
    modified_distortion,
    partition_cost,
    squared_distance,
    validate_dataset,
)
from .baselines import (
    OracleResult,
    brute_force_capacitated,
    brute_force_unconstrained,
    fixed_eta_da,
    lloyd,
)
from .gibbs import associations, free_energy, free_energy_gradient, masses
from .solver import (
    AnnealConfig,
    InfeasibleError,
    SolveReport,
    StarvedClusterError,
    anneal,
    centroid_update,
    descent_step,
    eta_update,
    harden,
    inner_solve,
    perturb_resources,
    scale_instance,
)
from .io import RgbImage, load_instance, read_ppm, write_ppm, write_report
from .imaging import segment_image

__version__ = "0.1.0"
