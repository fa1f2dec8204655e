"""Two-point representation-learning dynamics: reduced model and experiments."""

from .analysis import (
    DistanceMatrix,
    MdsResult,
    Provenance,
    classical_mds,
    exponential_weighing,
    pairwise_distances,
    pearson,
    rescale_to_median,
    theory_distance_matrix,
)
from .data import Dataset, blobs, load_mnist, sorted_digit_subset, two_point, xor
from .fitting import FitResult, ablation, fit_loss, fit_rates, theory_curve, trajectory_energy
from .network import (
    Activation,
    DivergenceError,
    Network,
    NetworkConfig,
    Optimizer,
    TrainingRecord,
    TrainSchedule,
    build_network,
    forward,
    train,
    train_step,
)
from .observables import PairObservation, measure_pair, observed_trajectory, pair_probe
from .theory import (
    DH2_FLOOR,
    EffectiveParams,
    FixedPointReport,
    RhsVariant,
    SingularityError,
    StepFailureError,
    TheoryState,
    Trajectory,
    final_distance_cdf,
    final_distance_pdf,
    fixed_points,
    integrate,
    lazy_rescale,
    loss_curve,
    rhs,
    solve_identical_outputs,
)

__version__ = "0.1.0"
